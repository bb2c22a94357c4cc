use gfscma::airlink::{PreambleSet, ScenarioConfig};
use gfscma::harness::{eval_ader, Detector};
use gfscma::models::*;
use gfscma::nn::flatten_complex;

fn desk() -> ScenarioConfig {
    ScenarioConfig::homogeneous(6, 2, 8, 4, 0.25)
}

fn tiny() -> ScenarioConfig {
    // N = 6, K_p = 4, N_d = 2
    ScenarioConfig::homogeneous(3, 2, 4, 2, 0.5)
}

fn quick(iterations: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        iterations,
        batch_size: 32,
        seed,
        ..Default::default()
    }
}

fn gaussian(sc: &ScenarioConfig, seed: u64) -> PreambleSet {
    gen_independent_preambles(sc.users, sc.preamble_len, sc.codebooks, PreambleKind::Gaussian, seed).unwrap()
}

#[test]
fn every_variant_passes_gradcheck() {
    let sc = tiny();
    let batch = TrainBatch::sample(&sc, 3, 0, 8, [4.0, 14.0]);
    for variant in Variant::ALL {
        let frozen = (!variant.trains_preambles()).then(|| gaussian(&sc, 1));
        let sys = AudSystem::untrained(variant, sc.clone(), frozen, 2, 5).unwrap();
        let report = sys.gradcheck(&batch, 0.5, 1e-5).unwrap();
        assert!(report.max_rel_error < 1e-3, "{variant}: {report:?}");
        assert!(report.checked > report.skipped_kinks, "{variant}: {report:?}");
    }
}

#[test]
fn preamble_table_receives_nonzero_gradient() {
    let sc = tiny();
    let batch = TrainBatch::sample(&sc, 4, 0, 16, [10.0, 10.0]);
    let sys = AudSystem::untrained(Variant::PreambleBased, sc, None, 2, 0).unwrap();
    let eval = sys.loss_and_gradients(&batch, 0.0).unwrap();
    let table = eval.grads.table.expect("joint variants train the table");
    assert!(table.iter().any(|g| g.abs() > 1e-8));
    assert!(table.iter().all(|g| g.is_finite()));
}

#[test]
fn frozen_set_never_moves() {
    let sc = desk();
    let set = gaussian(&sc, 7);
    let sys = train(Variant::DataAidedIndependent, &sc, &quick(50, 1), Some(set.clone())).unwrap();
    assert_eq!(sys.extract_preambles(), set);
    assert!(sys.table().is_none());
    let eval = sys
        .loss_and_gradients(&TrainBatch::sample(&sc, 0, 0, 4, [10.0, 10.0]), 0.5)
        .unwrap();
    assert!(eval.grads.table.is_none());
}

#[test]
fn independent_variant_requires_matching_frozen_set() {
    let sc = desk();
    assert!(train(Variant::DataAidedIndependent, &sc, &quick(1, 0), None).is_err());
    let block = with_association(&gaussian(&sc, 0), gfscma::airlink::Association::Block).unwrap();
    assert!(train(Variant::DataAidedIndependent, &sc, &quick(1, 0), Some(block)).is_err());
}

#[test]
fn desk_joint_training() {
    let sc = desk();
    let before = AudSystem::untrained(Variant::DataAidedJoint, sc.clone(), None, 4, 11).unwrap();
    let sys = train(Variant::DataAidedJoint, &sc, &quick(2000, 11), None).unwrap();
    let log = &sys.log;
    assert_eq!(log.losses.len(), 2000);
    let first = log.window_mean(0, 50).unwrap();
    let last = log.window_mean(1950, 50).unwrap();
    assert!(last < first, "loss {first} -> {last}");

    let moved = before
        .table()
        .unwrap()
        .raw()
        .iter()
        .zip(sys.table().unwrap().raw())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(moved > 1e-6, "table moved by {moved}");

    for p in sys.extract_preambles().preambles() {
        let e: f64 = p.iter().map(|c| c.norm_sqr()).sum();
        assert!((e - 1.0).abs() < 1e-9);
    }

    // no information survives -40 dB: the detector falls back to the prior
    let floor = eval_ader(Detector::System(&sys), &sc, -40.0, 5000, 3).unwrap();
    assert!((floor.ader - 0.25).abs() <= 0.025, "ADER at -40 dB = {}", floor.ader);
}

#[test]
fn extraction_round_trips_through_files() {
    let sc = desk();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("set.json");
    gaussian(&sc, 2).save(&path).unwrap();
    let input = PreambleSet::load(&path).unwrap();
    let sys = train(Variant::DataAidedIndependent, &sc, &quick(5, 0), Some(input)).unwrap();
    let out = dir.path().join("out.json");
    sys.extract_preambles().save(&out).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        std::fs::read_to_string(&out).unwrap()
    );

    let joint = train(Variant::DataAidedJoint, &sc, &quick(5, 0), None).unwrap();
    let exported = dir.path().join("joint.json");
    joint.extract_preambles().save(&exported).unwrap();
    let back = PreambleSet::load(&exported).unwrap();
    for (a, b) in back
        .preambles()
        .iter()
        .flatten()
        .zip(joint.extract_preambles().preambles().iter().flatten())
    {
        assert_eq!((a.re.to_bits(), a.im.to_bits()), (b.re.to_bits(), b.im.to_bits()));
    }
}

#[test]
fn checkpoints_reproduce_decisions() {
    let sc = desk();
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        let frozen = (!variant.trains_preambles()).then(|| gaussian(&sc, 3));
        let sys = train(variant, &sc, &quick(20, 4), frozen).unwrap();
        let path = dir.path().join(variant.tag());
        sys.save(&path).unwrap();
        let back = AudSystem::load(&path).unwrap();
        assert_eq!(back.variant, variant);
        assert_eq!(back.log, sys.log);
        assert_eq!(back.extract_preambles(), sys.extract_preambles());
        let frames: Vec<_> = (0..16)
            .map(|t| {
                gfscma::airlink::TrialDraw::sample(&sc, 9, t)
                    .realize(sys.preamble_set(), sys.codebooks(), 0.3)
                    .unwrap()
            })
            .collect();
        assert_eq!(back.soft_outputs(&frames).unwrap(), sys.soft_outputs(&frames).unwrap());
    }
}

#[test]
fn training_batches_match_the_frame_generator() {
    let sc = desk();
    let set = gaussian(&sc, 5);
    let cbs = sc.build_codebooks().unwrap();
    let batch = TrainBatch::sample(&sc, 1, 2, 6, [4.0, 14.0]);
    let raw = raw_preamble_batch(&preamble_matrix(&set), &batch);
    let data = raw_data_batch(&cbs, set.assoc(), &batch).unwrap();
    for (b, draw) in batch.draws.iter().enumerate() {
        let frame = draw.realize(&set, &cbs, batch.sigma).unwrap();
        let mut want = vec![0.0; 2 * sc.preamble_len];
        flatten_complex(&frame.preamble, 1.0, &mut want);
        for (x, y) in raw.row(b).iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        let flat: Vec<_> = frame.data.iter().flatten().copied().collect();
        let mut want = vec![0.0; 2 * flat.len()];
        flatten_complex(&flat, 1.0, &mut want);
        for (x, y) in data.row(b).iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn raising_the_threshold_never_adds_false_alarms() {
    let sc = desk();
    let sys = train(Variant::DataAidedJoint, &sc, &quick(100, 6), None).unwrap();
    let draws: Vec<_> = (0..500)
        .map(|t| gfscma::airlink::TrialDraw::sample(&sc, 2, t))
        .collect();
    let frames: Vec<_> = draws
        .iter()
        .map(|d| d.realize(sys.preamble_set(), sys.codebooks(), 0.5).unwrap())
        .collect();
    let soft = sys.soft_outputs(&frames).unwrap();
    let mut previous = usize::MAX;
    for step in 0..=100 {
        let thr = step as f64 / 100.0;
        let fa: usize = soft
            .rows()
            .into_iter()
            .zip(&draws)
            .map(|(row, d)| {
                let est = hard_decision(row.as_slice().unwrap(), thr);
                (0..sc.users).filter(|&n| est.0[n] == 1 && d.delta.0[n] == 0).count()
            })
            .sum();
        assert!(fa <= previous, "threshold {thr}: {fa} > {previous}");
        previous = fa;
    }
}

#[test]
fn confident_outputs_reproduce_activity() {
    let delta = [1u8, 0, 0, 1, 1, 0];
    let soft: Vec<f64> = delta
        .iter()
        .map(|&d| if d == 1 { 1.0 - 1e-12 } else { 1e-12 })
        .collect();
    assert_eq!(hard_decision(&soft, DECISION_THRESHOLD).0, delta);
    assert_eq!(hard_decision(&[0.5; 3], DECISION_THRESHOLD).0, vec![0; 3]);
}
