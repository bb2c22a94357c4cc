use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::airlink::{complex_normal, Association, PreambleSet};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Families of preamble sets designed without reference to the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreambleKind {
    /// i.i.d. `CN(0, 1)` samples, unit-normalized.
    Gaussian,
    /// i.i.d. uniform QPSK symbols scaled to unit energy.
    Qpsk,
    /// Cyclic shifts of Zadoff-Chu roots, root-major: preamble `i` is root
    /// `1 + i / K_p` shifted by `i mod K_p`.
    ZadoffChuFamily,
}

impl std::str::FromStr for PreambleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "qpsk" => Ok(Self::Qpsk),
            "zadoff-chu-family" | "zadoff-chu" | "zc" => Ok(Self::ZadoffChuFamily),
            other => Err(Error::InvalidParameter(format!("unknown preamble kind '{other}'"))),
        }
    }
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|d| d * d <= n).all(|d| !n.is_multiple_of(d))
}

/// Zadoff-Chu root sequence `u` of length `len`, unit energy.
pub fn zadoff_chu(root: usize, len: usize) -> Vec<Complex64> {
    let scale = 1.0 / (len as f64).sqrt();
    let cf = (len % 2) as f64;
    (0..len)
        .map(|k| {
            let k = k as f64;
            let phase = -PI * root as f64 * k * (k + cf) / len as f64;
            Complex64::from_polar(scale, phase)
        })
        .collect()
}

fn cyclic_shift(seq: &[Complex64], shift: usize) -> Vec<Complex64> {
    let len = seq.len();
    (0..len).map(|k| seq[(k + shift) % len]).collect()
}

/// An independently designed set with round-robin codebook association.
pub fn gen_independent_preambles(
    users: usize,
    preamble_len: usize,
    codebooks: usize,
    kind: PreambleKind,
    seed: u64,
) -> Result<PreambleSet> {
    if users == 0 || preamble_len == 0 || codebooks == 0 {
        return Err(Error::InvalidParameter("N, K_p and J must be positive".into()));
    }
    let assoc = (0..users).map(|n| n % codebooks).collect::<Vec<_>>();
    let mut rng = rng::stream(seed, Purpose::Preambles, 0);
    let seqs: Vec<Vec<Complex64>> = match kind {
        PreambleKind::Gaussian => (0..users)
            .map(|_| (0..preamble_len).map(|_| complex_normal(&mut rng)).collect())
            .collect(),
        PreambleKind::Qpsk => (0..users)
            .map(|_| {
                (0..preamble_len)
                    .map(|_| {
                        let q = rng.random_range(0..4) as f64;
                        Complex64::from_polar(1.0, PI / 4.0 + q * PI / 2.0)
                    })
                    .collect()
            })
            .collect(),
        PreambleKind::ZadoffChuFamily => {
            if !is_prime(preamble_len) {
                return Err(Error::InvalidParameter(format!(
                    "Zadoff-Chu family needs a prime K_p, got {preamble_len}"
                )));
            }
            let capacity = (preamble_len - 1) * preamble_len;
            if users > capacity {
                return Err(Error::Capacity {
                    requested: users,
                    available: capacity,
                    resources: preamble_len,
                    nonzeros: 1,
                });
            }
            (0..users)
                .map(|i| cyclic_shift(&zadoff_chu(1 + i / preamble_len, preamble_len), i % preamble_len))
                .collect()
        }
    };
    PreambleSet::normalized(seqs, codebooks, assoc)
}

/// Re-tag a set with a different association rule.
pub fn with_association(set: &PreambleSet, association: Association) -> Result<PreambleSet> {
    let j = set.codebooks();
    if !set.len().is_multiple_of(j) {
        return Err(Error::InvalidParameter("N must be a multiple of J".into()));
    }
    PreambleSet::new(set.preambles().to_vec(), j, association.map(j, set.len() / j))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xcorr::pair_xcorr;

    #[test]
    fn gaussian_sets_are_unit_energy_and_seeded() {
        let a = gen_independent_preambles(48, 16, 6, PreambleKind::Gaussian, 3).unwrap();
        assert_eq!(a.len(), 48);
        for p in a.preambles() {
            let e: f64 = p.iter().map(|c| c.norm_sqr()).sum();
            assert!((e - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            a,
            gen_independent_preambles(48, 16, 6, PreambleKind::Gaussian, 3).unwrap()
        );
        assert_ne!(
            a,
            gen_independent_preambles(48, 16, 6, PreambleKind::Gaussian, 4).unwrap()
        );
        assert_eq!(a.assoc()[13], 1);
    }

    #[test]
    fn qpsk_symbols_have_constant_modulus() {
        let s = gen_independent_preambles(12, 8, 6, PreambleKind::Qpsk, 1).unwrap();
        for p in s.preambles() {
            for c in p {
                assert!((c.norm() - 1.0 / 8f64.sqrt()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cyclic_shifts_of_one_root_are_orthogonal() {
        let s = gen_independent_preambles(13, 13, 1, PreambleKind::ZadoffChuFamily, 0).unwrap();
        assert!(pair_xcorr(s.preamble(0), s.preamble(1)).unwrap() < 1e-12);
        for a in 0..13 {
            for b in a + 1..13 {
                assert!(pair_xcorr(s.preamble(a), s.preamble(b)).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn distinct_roots_have_flat_cross_correlation() {
        // prime length: |<x_u, x_v>| = 1/sqrt(K_p) for u != v
        let s = gen_independent_preambles(26, 13, 2, PreambleKind::ZadoffChuFamily, 0).unwrap();
        let c = pair_xcorr(s.preamble(0), s.preamble(13)).unwrap();
        assert!((c - 1.0 / 13f64.sqrt()).abs() < 1e-12, "{c}");
    }

    #[test]
    fn zadoff_chu_rejects_composite_length() {
        assert!(gen_independent_preambles(8, 16, 2, PreambleKind::ZadoffChuFamily, 0).is_err());
        assert!(gen_independent_preambles(200, 13, 2, PreambleKind::ZadoffChuFamily, 0).is_err());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("qpsk".parse::<PreambleKind>().unwrap(), PreambleKind::Qpsk);
        assert_eq!(
            "zadoff-chu-family".parse::<PreambleKind>().unwrap(),
            PreambleKind::ZadoffChuFamily
        );
        assert!("walsh".parse::<PreambleKind>().is_err());
    }

    #[test]
    fn reassociation() {
        let s = gen_independent_preambles(6, 4, 3, PreambleKind::Gaussian, 0).unwrap();
        let b = with_association(&s, Association::Block).unwrap();
        assert_eq!(b.assoc(), &[0, 0, 1, 1, 2, 2]);
        assert_eq!(b.preambles(), s.preambles());
    }
}
