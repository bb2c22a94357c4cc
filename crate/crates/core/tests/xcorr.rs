use gfscma::airlink::{complex_normal, Association, PreambleSet};
use gfscma::models::{gen_independent_preambles, PreambleKind};
use gfscma::xcorr::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `|sum_i a_i conj(b_i)|` written out in real arithmetic.
fn oracle_pair(a: &[Complex64], b: &[Complex64]) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for i in 0..a.len() {
        re += a[i].re * b[i].re + a[i].im * b[i].im;
        im += a[i].im * b[i].re - a[i].re * b[i].im;
    }
    (re * re + im * im).sqrt()
}

/// `grid[j][l]` = original index of the l-th preamble of codebook j.
fn oracle_grid(assoc: &[usize], codebooks: usize) -> Vec<Vec<usize>> {
    let mut grid = vec![vec![]; codebooks];
    for n in 0..assoc.len() {
        grid[assoc[n]].push(n);
    }
    grid
}

struct Oracle {
    avg: f64,
    intra: f64,
    inter: f64,
}

fn oracle(set: &PreambleSet, j: usize, l: usize) -> Oracle {
    let grid = oracle_grid(set.assoc(), set.codebooks());
    let (jj, ll) = (grid.len(), grid[0].len());
    let n = jj * ll;
    let me = set.preamble(grid[j][l]);
    let mut full = 0.0;
    for k in 0..jj {
        for m in 0..ll {
            full += oracle_pair(me, set.preamble(grid[k][m]));
        }
    }
    let mut own = 0.0;
    let mut intra = 0.0;
    for m in 0..ll {
        let v = oracle_pair(me, set.preamble(grid[j][m]));
        own += v;
        if m != l {
            intra += v;
        }
    }
    Oracle {
        avg: (full - oracle_pair(me, me)) / (n - 1) as f64,
        intra: intra / (ll - 1) as f64,
        inter: (full - own) / (n - ll) as f64,
    }
}

fn random_set(rng: &mut ChaCha8Rng) -> PreambleSet {
    let j = rng.random_range(2..=4);
    let l = rng.random_range(2..=12 / j);
    let k = rng.random_range(2..=8);
    let raw = (0..j * l)
        .map(|_| (0..k).map(|_| complex_normal(rng)).collect())
        .collect();
    let assoc = if rng.random_bool(0.5) {
        Association::RoundRobin
    } else {
        Association::Block
    };
    PreambleSet::normalized(raw, j, assoc.map(j, l)).unwrap()
}

#[test]
fn per_preamble_values_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..50 {
        let set = random_set(&mut rng);
        let report = xcorr_report(&set).unwrap();
        let l_count = set.len() / set.codebooks();
        for row in &report.rows {
            let o = oracle(&set, row.j, row.l);
            assert_eq!(row.n, l_count * row.j + row.l);
            assert!((row.avg_xcorr - o.avg).abs() < 1e-12);
            assert!((row.intra - o.intra).abs() < 1e-12);
            assert!((row.inter - o.inter).abs() < 1e-12);
            assert!((avg_xcorr(&set, row.j, row.l).unwrap() - o.avg).abs() < 1e-12);
            assert!((intra_cb(&set, row.j, row.l).unwrap() - o.intra).abs() < 1e-12);
            assert!((inter_cb(&set, row.j, row.l).unwrap() - o.inter).abs() < 1e-12);
        }
    }
}

#[test]
fn random_six_preamble_set_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let raw = (0..6)
        .map(|_| (0..4).map(|_| complex_normal(&mut rng)).collect())
        .collect();
    let set = PreambleSet::normalized(raw, 3, vec![0, 1, 2, 0, 1, 2]).unwrap();
    for j in 0..3 {
        for l in 0..2 {
            assert!((avg_xcorr(&set, j, l).unwrap() - oracle(&set, j, l).avg).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decomposition_identity(seed in 0u64..10_000) {
        let set = random_set(&mut ChaCha8Rng::seed_from_u64(seed));
        let n = set.len() as f64;
        let l = (set.len() / set.codebooks()) as f64;
        for r in xcorr_report(&set).unwrap().rows {
            let lhs = (n - 1.0) * r.avg_xcorr;
            let rhs = (l - 1.0) * r.intra + (n - l) * r.inter;
            prop_assert!((lhs - rhs).abs() < 1e-12, "{} vs {}", lhs, rhs);
        }
    }

    #[test]
    fn pair_is_symmetric(seed in 0u64..10_000, k in 1usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Complex64> = (0..k).map(|_| complex_normal(&mut rng)).collect();
        let b: Vec<Complex64> = (0..k).map(|_| complex_normal(&mut rng)).collect();
        prop_assert_eq!(pair_xcorr(&a, &b).unwrap(), pair_xcorr(&b, &a).unwrap());
    }

    #[test]
    fn pair_scales_with_each_operand(seed in 0u64..10_000, s in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<Complex64> = (0..6).map(|_| complex_normal(&mut rng)).collect();
        let b: Vec<Complex64> = (0..6).map(|_| complex_normal(&mut rng)).collect();
        let scaled: Vec<Complex64> = a.iter().map(|x| x * s).collect();
        let base = pair_xcorr(&a, &b).unwrap();
        prop_assert!((pair_xcorr(&scaled, &b).unwrap() - s * base).abs() <= 1e-12 * s.max(1.0) * base.max(1.0));
    }
}

#[test]
fn report_values_are_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..20 {
        let report = xcorr_report(&random_set(&mut rng)).unwrap();
        assert!(report
            .rows
            .iter()
            .all(|r| r.avg_xcorr >= 0.0 && r.intra >= 0.0 && r.inter >= 0.0));
        assert!(matches!(report.summary.gamma, Gamma::Finite(g) if g > 0.0));
    }
}

#[test]
fn gaussian_sets_are_homogeneous() {
    let inside = (0..20)
        .filter(|&seed| {
            let set = gen_independent_preambles(48, 16, 6, PreambleKind::Gaussian, seed).unwrap();
            let g = heterogeneity(&set).unwrap().value().unwrap();
            (0.9..=1.1).contains(&g)
        })
        .count();
    assert!(inside >= 18, "{inside} of 20 seeds inside [0.9, 1.1]");
}

#[test]
fn summary_json_keys() {
    let set = gen_independent_preambles(12, 8, 6, PreambleKind::Qpsk, 0).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&xcorr_report(&set).unwrap().summary_json().unwrap()).unwrap();
    for key in ["R_intra", "R_inter", "gamma"] {
        assert!(doc.get(key).is_some(), "{key}");
    }
}
