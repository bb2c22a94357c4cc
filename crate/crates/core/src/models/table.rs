use ndarray::{Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rand::Rng;

use crate::airlink::{complex_normal, ActivityVector, PreambleSet};
use crate::error::{Error, Result};

/// Trainable preamble generator: one real row `[Re; Im]` of width `2 K_p`
/// per user, followed by a unit-energy normalization.
///
/// Output for user `n` is the normalized row when `delta_n = 1` and the zero
/// vector when `delta_n = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleTable {
    raw: Array2<f64>,
    codebooks: usize,
    assoc: Vec<usize>,
}

impl PreambleTable {
    /// Rows drawn `CN(0, 1/K_p)` so the initial norms are close to one.
    pub fn random<R: Rng + ?Sized>(
        users: usize,
        preamble_len: usize,
        codebooks: usize,
        assoc: Vec<usize>,
        rng: &mut R,
    ) -> Result<Self> {
        let scale = 1.0 / (preamble_len as f64).sqrt();
        let mut raw = Array2::zeros((users, 2 * preamble_len));
        for mut row in raw.rows_mut() {
            for i in 0..preamble_len {
                let c = complex_normal(rng) * scale;
                row[i] = c.re;
                row[preamble_len + i] = c.im;
            }
        }
        Self::from_raw(raw, codebooks, assoc)
    }

    pub fn from_raw(raw: Array2<f64>, codebooks: usize, assoc: Vec<usize>) -> Result<Self> {
        if !raw.ncols().is_multiple_of(2) || raw.ncols() == 0 {
            return Err(Error::InvalidParameter("table width must be 2*K_p".into()));
        }
        if assoc.len() != raw.nrows() {
            return Err(Error::DimensionMismatch {
                context: "association map",
                expected: raw.nrows(),
                actual: assoc.len(),
            });
        }
        if raw.rows().into_iter().any(|r| r.dot(&r) == 0.0) {
            return Err(Error::InvalidParameter("table rows must be nonzero".into()));
        }
        Ok(Self { raw, codebooks, assoc })
    }

    pub fn users(&self) -> usize {
        self.raw.nrows()
    }

    pub fn preamble_len(&self) -> usize {
        self.raw.ncols() / 2
    }

    pub fn raw(&self) -> &Array2<f64> {
        &self.raw
    }

    pub fn raw_mut(&mut self) -> &mut Array2<f64> {
        &mut self.raw
    }

    pub fn codebooks(&self) -> usize {
        self.codebooks
    }

    pub fn assoc(&self) -> &[usize] {
        &self.assoc
    }

    /// Row-normalized copy and the row norms.
    pub fn normalized(&self) -> (Array2<f64>, Vec<f64>) {
        let norms: Vec<f64> = self.raw.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
        let mut out = self.raw.clone();
        for (mut row, &norm) in out.rows_mut().into_iter().zip(&norms) {
            row /= norm;
        }
        (out, norms)
    }

    /// Pull a gradient on the normalized rows back to the raw rows.
    pub fn normalization_backward(
        &self,
        normalized: ArrayView2<f64>,
        norms: &[f64],
        grad: ArrayView2<f64>,
    ) -> Array2<f64> {
        let mut out = grad.to_owned();
        for ((mut g, p), &norm) in out.axis_iter_mut(Axis(0)).zip(normalized.rows()).zip(norms) {
            let along = p.dot(&g);
            g.zip_mut_with(&p, |gi, &pi| *gi = (*gi - pi * along) / norm);
        }
        out
    }

    pub fn to_preamble_set(&self) -> PreambleSet {
        let (p, _) = self.normalized();
        let k = self.preamble_len();
        let seqs = p
            .rows()
            .into_iter()
            .map(|r| (0..k).map(|i| Complex64::new(r[i], r[k + i])).collect())
            .collect();
        PreambleSet::new(seqs, self.codebooks, self.assoc.clone()).expect("normalized rows have unit energy")
    }
}

/// Gated preambles: normalized row `n` if user `n` is active, zeros otherwise.
pub fn pgn_forward(table: &PreambleTable, delta: &ActivityVector) -> Result<Vec<Vec<Complex64>>> {
    if delta.len() != table.users() {
        return Err(Error::DimensionMismatch {
            context: "activity vector",
            expected: table.users(),
            actual: delta.len(),
        });
    }
    let set = table.to_preamble_set();
    Ok((0..table.users())
        .map(|n| {
            if delta.is_active(n) {
                set.preamble(n).to_vec()
            } else {
                vec![Complex64::new(0.0, 0.0); table.preamble_len()]
            }
        })
        .collect())
}

/// Real `N x 2K_p` matrix `[Re | Im]` of a preamble set.
pub fn preamble_matrix(set: &PreambleSet) -> Array2<f64> {
    let k = set.preamble_len();
    let mut m = Array2::zeros((set.len(), 2 * k));
    for (n, p) in set.preambles().iter().enumerate() {
        for (i, c) in p.iter().enumerate() {
            m[[n, i]] = c.re;
            m[[n, k + i]] = c.im;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn table() -> PreambleTable {
        PreambleTable::random(6, 4, 3, vec![0, 1, 2, 0, 1, 2], &mut ChaCha8Rng::seed_from_u64(3)).unwrap()
    }

    #[test]
    fn inactive_users_emit_nothing() {
        let out = pgn_forward(&table(), &ActivityVector::zeros(6)).unwrap();
        assert_eq!(out.len(), 6);
        assert!(out.iter().flatten().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn active_users_emit_unit_energy() {
        let t = table();
        let mut delta = ActivityVector::zeros(6);
        delta.0[2] = 1;
        let out = pgn_forward(&t, &delta).unwrap();
        let e: f64 = out[2].iter().map(|c| c.norm_sqr()).sum();
        assert!((e - 1.0).abs() < 1e-9);
        assert!(out[0].iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn normalization_gradient_matches_central_differences() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let weights = Array2::from_shape_fn(t.raw().dim(), |_| rng.random_range(-1.0..1.0));
        let objective = |tab: &PreambleTable| (&tab.normalized().0 * &weights).sum();
        let (p, norms) = t.normalized();
        let analytic = t.normalization_backward(p.view(), &norms, weights.view());
        let h = 1e-6;
        for idx in [(0, 0), (1, 3), (4, 7), (5, 2)] {
            let mut up = t.clone();
            let mut dn = t.clone();
            up.raw_mut()[idx] += h;
            dn.raw_mut()[idx] -= h;
            let fd = (objective(&up) - objective(&dn)) / (2.0 * h);
            assert!((fd - analytic[idx]).abs() < 1e-8, "{idx:?}: {fd} vs {}", analytic[idx]);
        }
    }

    #[test]
    fn zero_row_rejected() {
        assert!(PreambleTable::from_raw(Array2::zeros((2, 4)), 1, vec![0, 0]).is_err());
    }

    #[test]
    fn matrix_round_trip() {
        let t = table();
        let set = t.to_preamble_set();
        let (p, _) = t.normalized();
        assert_eq!(preamble_matrix(&set), p);
    }
}
