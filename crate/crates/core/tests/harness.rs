use gfscma::airlink::ScenarioConfig;
use gfscma::harness::*;
use gfscma::models::{gen_independent_preambles, train, PreambleKind, TrainConfig, Variant};

fn desk() -> ScenarioConfig {
    ScenarioConfig::homogeneous(6, 2, 8, 4, 0.25)
}

fn full() -> ScenarioConfig {
    ScenarioConfig::homogeneous(6, 8, 16, 16, 0.0625)
}

fn small_config(dir: &std::path::Path) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "scenario": {{"N": 12, "J": 6, "L": 2, "K_p": 8, "K_d": 4, "N_d": 4, "M": 4, "activity_prob": 0.25}},
            "variants": ["data-aided-independent", "preamble-based", "data-aided-joint"],
            "train": {{"iterations": 30, "batch_size": 16}},
            "snr_grid_db": [0.0, 10.0],
            "trials": 300,
            "seed": 17,
            "output": {:?},
            "baselines": true
        }}"#,
        dir.to_str().unwrap()
    ))
    .unwrap()
}

fn tiny_train() -> TrainConfig {
    TrainConfig {
        iterations: 2,
        batch_size: 4,
        ..Default::default()
    }
}

#[test]
fn always_inactive_converges_to_activity_probability() {
    let p = eval_ader(Detector::AlwaysInactive, &full(), 10.0, 100_000, 4).unwrap();
    assert!((p.ader - 0.0625).abs() < 3.0 * p.ci_half, "{} +- {}", p.ader, p.ci_half);
    assert_eq!(p.false_alarms, 0);
}

#[test]
fn genie_is_exactly_right() {
    let p = eval_ader(Detector::Genie, &full(), -5.0, 10_000, 4).unwrap();
    assert_eq!((p.ader, p.misses, p.false_alarms, p.frame_errors), (0.0, 0, 0, 0));
}

#[test]
fn genie_sweep_is_flat_zero() {
    let rows = snr_sweep(&[Detector::Genie], &desk(), &[0.0, 4.0, 8.0, 12.0], 500, 2).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.point.as_ref().unwrap().ader == 0.0));
}

#[test]
fn half_width_shrinks_with_square_root_of_trials() {
    let few = eval_ader(Detector::AlwaysInactive, &desk(), 0.0, 1_000, 1).unwrap();
    let many = eval_ader(Detector::AlwaysInactive, &desk(), 0.0, 100_000, 1).unwrap();
    let ratio = few.ci_half / many.ci_half;
    assert!((ratio / 10.0 - 1.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn incompatible_system_is_rejected_and_flagged_in_sweeps() {
    let sys = train(Variant::PreambleBased, &desk(), &tiny_train(), None).unwrap();
    let other = ScenarioConfig::homogeneous(6, 3, 8, 4, 0.25);
    assert!(eval_ader(Detector::System(&sys), &other, 10.0, 10, 0).is_err());
    let rows = snr_sweep(&[Detector::System(&sys), Detector::Genie], &other, &[5.0], 10, 0).unwrap();
    assert!(rows[0].point.is_err());
    assert_eq!(rows[1].point.as_ref().unwrap().ader, 0.0);

    let mut csv = Vec::new();
    write_ader_csv(&rows, &other, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let failed = text.lines().nth(1).unwrap();
    assert!(
        failed.starts_with("preamble-based,") && failed.contains(",,"),
        "{failed}"
    );
}

#[test]
fn sweeps_pair_detectors_on_common_seeds() {
    let rows = snr_sweep(
        &[Detector::AlwaysInactive, Detector::AlwaysActive],
        &desk(),
        &[0.0, 5.0, 10.0],
        400,
        8,
    )
    .unwrap();
    for i in 0..3 {
        let (off, on) = (&rows[i], &rows[3 + i]);
        assert_eq!(off.seed, on.seed);
        assert_eq!(off.seed, point_seed(8, i));
        let (a, b) = (off.point.as_ref().unwrap(), on.point.as_ref().unwrap());
        assert_eq!(a.errors() + b.errors(), 400 * 12);
    }
}

#[test]
fn experiments_reproduce_bit_exactly() {
    let base = tempfile::tempdir().unwrap();
    let first = run_experiment(&small_config(&base.path().join("a"))).unwrap();
    let second = run_experiment(&small_config(&base.path().join("b"))).unwrap();
    for file in ["ader.csv", "xcorr.csv", "summary.json"] {
        let a = std::fs::read(first.dir.join(file)).unwrap();
        let b = std::fs::read(second.dir.join(file)).unwrap();
        assert_eq!(a, b, "{file} differs");
    }
    let ader = std::fs::read_to_string(first.dir.join("ader.csv")).unwrap();
    assert_eq!(ader.lines().count(), 1 + 5 * 2);
    let xcorr = std::fs::read_to_string(first.dir.join("xcorr.csv")).unwrap();
    assert_eq!(xcorr.lines().next().unwrap(), "set,n,j,l,avg_xcorr,intra,inter");
    assert_eq!(xcorr.lines().count(), 1 + 4 * 12);
    for v in Variant::ALL {
        assert!(first
            .dir
            .join("checkpoints")
            .join(v.tag())
            .join("manifest.json")
            .is_file());
    }
    let sc = &first.system(Variant::PreambleBased).unwrap().scenario;
    let expected = gen_independent_preambles(
        sc.users,
        sc.preamble_len,
        sc.codebooks,
        PreambleKind::Gaussian,
        independent_seed(17),
    )
    .unwrap();
    assert_eq!(
        first.system(Variant::DataAidedIndependent).unwrap().extract_preambles(),
        expected
    );

    let replay_dir = base.path().join("c");
    let mut manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(first.dir.join("manifest.json")).unwrap()).unwrap();
    manifest["config"]["output"] = replay_dir.to_str().unwrap().into();
    let replay = run_experiment(&ExperimentConfig::from_json(&manifest.to_string()).unwrap()).unwrap();
    assert_eq!(std::fs::read(replay.dir.join("ader.csv")).unwrap(), ader.as_bytes());

    let text = report(&first.dir).unwrap();
    assert!(
        text.contains("data-aided-joint") && text.contains(REFERENCE_SET),
        "{text}"
    );
}

#[test]
fn loaded_checkpoints_skip_training() {
    let base = tempfile::tempdir().unwrap();
    let first = run_experiment(&small_config(&base.path().join("a"))).unwrap();
    let mut cfg = small_config(&base.path().join("b"));
    cfg.load
        .insert(Variant::DataAidedJoint, first.dir.join("checkpoints/data-aided-joint"));
    let second = run_experiment(&cfg).unwrap();
    let a = first.system(Variant::DataAidedJoint).unwrap();
    let b = second.system(Variant::DataAidedJoint).unwrap();
    assert_eq!(a.extract_preambles(), b.extract_preambles());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(second.dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["training"]["data-aided-joint"]["loaded"], true);
    assert_eq!(
        std::fs::read(first.dir.join("ader.csv")).unwrap(),
        std::fs::read(second.dir.join("ader.csv")).unwrap()
    );
}

#[test]
fn full_scale_configuration_is_accepted_and_schedulable() {
    let cfg = ExperimentConfig::from_json(
        r#"{
            "scenario": {"N": 48, "J": 6, "L": 8, "K_p": 16, "K_d": 4, "N_d": 16, "M": 4, "activity_prob": 0.0625},
            "variants": ["preamble-based", "data-aided-joint", "data-aided-independent"],
            "snr_grid_db": [0, 2, 4, 6, 8, 10, 12, 14],
            "trials": 100000,
            "output": "full-run"
        }"#,
    )
    .unwrap();
    cfg.validate().unwrap();
    let sys = train(Variant::DataAidedJoint, &cfg.scenario, &tiny_train(), None).unwrap();
    let p = eval_ader(Detector::System(&sys), &cfg.scenario, 10.0, 64, 0).unwrap();
    assert_eq!(p.users, 48);
}

#[test]
fn mismatched_user_count_is_named() {
    let mut cfg = small_config(std::path::Path::new("unused"));
    cfg.scenario.users = 10;
    cfg.scenario.activity_prob = vec![0.25; 10];
    let err = cfg.validate().unwrap_err().to_string();
    assert!(err.contains("N must equal J*L"), "{err}");
}
