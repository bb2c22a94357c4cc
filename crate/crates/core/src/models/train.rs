//! Training of the three detection systems.
//!
//! Each iteration draws a fresh batch of trials at one SNR sampled uniformly
//! from the training range and minimizes
//! `BCE(q, delta) + aux_weight * BCE(sigmoid(alpha), delta)`,
//! the second term only when an extraction network exists. Joint variants
//! also update the preamble table through the superposition and the
//! unit-energy normalization.

use ndarray::{s, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::system::{front_end_scale, network_specs, AudSystem, PreambleSource, Variant};
use super::table::{preamble_matrix, PreambleTable};
use crate::airlink::{snr_to_noise_std, superpose_data_indices, PreambleSet, ScenarioConfig, TrialDraw};
use crate::error::{Error, Result};
use crate::nn::gradcheck::{check_flat, GradcheckReport};
use crate::nn::{bce_loss, flatten_complex, sigmoid, AdamConfig, AdamState, Gradients, Network, DEFAULT_HIDDEN_FACTOR};
use crate::rng::{self, derive_seed, Purpose};
use crate::scma::ScmaCodebookSet;

fn default_hidden_factor() -> usize {
    DEFAULT_HIDDEN_FACTOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub iterations: usize,
    /// Inclusive `[low, high]` range in dB.
    pub snr_range_db: [f64; 2],
    pub lr: f64,
    /// Weight of the auxiliary extraction-network loss.
    pub aux_weight: f64,
    pub seed: u64,
    #[serde(default = "default_hidden_factor")]
    pub hidden_factor: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            iterations: 5000,
            snr_range_db: [4.0, 14.0],
            lr: 1e-3,
            aux_weight: 0.5,
            seed: 0,
            hidden_factor: DEFAULT_HIDDEN_FACTOR,
        }
    }
}

impl TrainConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        if self.batch_size == 0 {
            p.push("train.batch_size must be at least 1".into());
        }
        let [lo, hi] = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            p.push(format!(
                "train.snr_range_db [{lo}, {hi}] must be a finite, nonempty range"
            ));
        }
        if !(self.aux_weight >= 0.0) {
            p.push("train.aux_weight must be >= 0".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            p.push("train.lr must be positive".into());
        }
        if self.hidden_factor == 0 {
            p.push("train.hidden_factor must be positive".into());
        }
        p
    }
}

/// Per-iteration training losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub losses: Vec<f64>,
}

impl TrainingLog {
    /// Mean loss over `losses[start..start + len]`.
    pub fn window_mean(&self, start: usize, len: usize) -> Option<f64> {
        let w = self.losses.get(start..start + len)?;
        (!w.is_empty()).then(|| w.iter().sum::<f64>() / w.len() as f64)
    }

    pub fn initial(&self) -> Option<f64> {
        self.losses.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.losses.last().copied()
    }
}

/// One batch of trials at a common noise level.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub draws: Vec<TrialDraw>,
    pub sigma: f64,
}

impl TrainBatch {
    /// Batch for `iteration`: trials keyed by a per-iteration seed, SNR
    /// uniform in `snr_range_db`.
    pub fn sample(scenario: &ScenarioConfig, seed: u64, iteration: u64, batch: usize, snr_range_db: [f64; 2]) -> Self {
        let [lo, hi] = snr_range_db;
        let snr = if hi > lo {
            rng::stream(seed, Purpose::Snr, iteration).random_range(lo..=hi)
        } else {
            lo
        };
        let iter_seed = derive_seed(seed, iteration);
        let draws = (0..batch as u64)
            .map(|b| TrialDraw::sample(scenario, iter_seed, b))
            .collect();
        Self {
            draws,
            sigma: snr_to_noise_std(snr),
        }
    }

    pub fn targets(&self, users: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.draws.len(), users), |(b, n)| self.draws[b].delta.0[n] as f64)
    }
}

/// Raw `[Re | Im]` preamble observations for preamble matrix `p` (`N x 2K_p`).
pub fn raw_preamble_batch(p: &Array2<f64>, batch: &TrainBatch) -> Array2<f64> {
    let k = p.ncols() / 2;
    let mut x = Array2::zeros((batch.draws.len(), 2 * k));
    for (mut row, d) in x.rows_mut().into_iter().zip(&batch.draws) {
        for i in 0..k {
            row[i] = batch.sigma * d.preamble_noise[i].re;
            row[k + i] = batch.sigma * d.preamble_noise[i].im;
        }
        for n in (0..p.nrows()).filter(|&n| d.delta.is_active(n)) {
            let h = d.h.0[n];
            for i in 0..k {
                let (pr, pi) = (p[[n, i]], p[[n, k + i]]);
                row[i] += h.re * pr - h.im * pi;
                row[k + i] += h.re * pi + h.im * pr;
            }
        }
    }
    x
}

/// Raw data observations, blocks concatenated then flattened.
pub fn raw_data_batch(cbs: &ScmaCodebookSet, assoc: &[usize], batch: &TrainBatch) -> Result<Array2<f64>> {
    let blocks = batch.draws.first().map_or(0, |d| d.data_noise.len());
    let width = 2 * cbs.resources() * blocks;
    let mut x = Array2::zeros((batch.draws.len(), width));
    for (mut row, d) in x.rows_mut().into_iter().zip(&batch.draws) {
        let y = superpose_data_indices(cbs, assoc, &d.delta, &d.h, &d.codeword_idx, batch.sigma, &d.data_noise)?;
        let flat: Vec<_> = y.into_iter().flatten().collect();
        flatten_complex(&flat, 1.0, row.as_slice_mut().expect("standard layout"));
    }
    Ok(x)
}

/// Gradients of the training loss for every trainable part of a system.
#[derive(Debug, Clone)]
pub struct SystemGradients {
    pub table: Option<Array2<f64>>,
    pub uaen: Option<Gradients>,
    pub audn: Gradients,
}

impl SystemGradients {
    /// Same order as [`AudSystem::trainable_tensors`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(t) = &self.table {
            out.push(t.as_slice().expect("standard layout"));
        }
        if let Some(u) = &self.uaen {
            out.extend(u.tensors());
        }
        out.extend(self.audn.tensors());
        out
    }
}

#[derive(Debug, Clone)]
pub struct LossEvaluation {
    pub loss: f64,
    pub grads: SystemGradients,
    /// Rectifier sign pattern of both networks, for gradient checking.
    pub relu_pattern: Vec<bool>,
}

fn bce_through_sigmoid(logits: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    let q = logits.mapv(sigmoid);
    let (loss, dq) = bce_loss(q.view(), targets)?;
    Ok((loss, dq * q.mapv(|v| v * (1.0 - v))))
}

impl AudSystem {
    /// Freshly initialized system. Joint variants draw a random preamble
    /// table; the independent variant requires `frozen`.
    pub fn untrained(
        variant: Variant,
        scenario: ScenarioConfig,
        frozen: Option<PreambleSet>,
        hidden_factor: usize,
        seed: u64,
    ) -> Result<Self> {
        let scenario = scenario.normalized();
        scenario.validate()?;
        let mut init = rng::stream(seed, Purpose::Init, 0);
        let source = if variant.trains_preambles() {
            PreambleSource::Table(PreambleTable::random(
                scenario.users,
                scenario.preamble_len,
                scenario.codebooks,
                scenario.assoc(),
                &mut init,
            )?)
        } else {
            let set =
                frozen.ok_or_else(|| Error::InvalidParameter(format!("{variant} needs a frozen preamble set")))?;
            if set.assoc() != scenario.assoc().as_slice() {
                return Err(Error::InvalidParameter(
                    "frozen preamble association differs from the scenario's".into(),
                ));
            }
            PreambleSource::Frozen(set)
        };
        let (uaen_spec, audn_spec) = network_specs(variant, &scenario, hidden_factor);
        let uaen = uaen_spec.map(|s| Network::new(s, &mut init)).transpose()?;
        let audn = Network::new(audn_spec, &mut init)?;
        Self::assemble(variant, scenario, source, uaen, audn)
    }

    pub fn trainable_tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        if let Some(t) = self.table() {
            out.push(t.raw().as_slice().expect("standard layout"));
        }
        if let Some(u) = &self.uaen {
            out.extend(u.params.tensors());
        }
        out.extend(self.audn.params.tensors());
        out
    }

    /// Mutable view of the trainable tensors. Callers that change the table
    /// must call [`AudSystem::sync_preambles`] afterwards.
    pub fn trainable_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        if let PreambleSource::Table(t) = &mut self.source {
            out.push(t.raw_mut().as_slice_mut().expect("standard layout"));
        }
        if let Some(u) = &mut self.uaen {
            out.extend(u.params.tensors_mut());
        }
        out.extend(self.audn.params.tensors_mut());
        out
    }

    pub fn sync_preambles(&mut self) {
        self.refresh_preambles();
    }

    /// Training loss on `batch` and its exact gradients.
    pub fn loss_and_gradients(&self, batch: &TrainBatch, aux_weight: f64) -> Result<LossEvaluation> {
        let users = self.scenario.users;
        let targets = batch.targets(users);
        let (p, norms) = match self.table() {
            Some(t) => {
                let (p, norms) = t.normalized();
                (p, Some(norms))
            }
            None => (preamble_matrix(&self.preambles), None),
        };
        let scale = front_end_scale(batch.sigma);
        let xp = raw_preamble_batch(&p, batch) * scale;
        let mut relu_pattern = Vec::new();

        let (loss, grad_xp, uaen_grads) = match &self.uaen {
            None => {
                let (q, cache) = self.audn.forward(xp.view())?;
                let (loss, dq) = bce_loss(q.view(), targets.view())?;
                let (audn_grads, dx) = self.audn.backward(&cache, dq.view())?;
                relu_pattern.extend(cache.relu_pattern(&self.audn.spec));
                (loss, (dx, audn_grads), None)
            }
            Some(uaen) => {
                let xd = raw_data_batch(&self.codebooks, self.preambles.assoc(), batch)? * scale;
                let (alpha, ucache) = uaen.forward(xd.view())?;
                let (aux_loss, mut dalpha) = bce_through_sigmoid(alpha.view(), targets.view())?;
                dalpha *= aux_weight;
                let mut input = Array2::zeros((xp.nrows(), users + xp.ncols()));
                input.slice_mut(s![.., ..users]).assign(&alpha);
                input.slice_mut(s![.., users..]).assign(&xp);
                let (q, cache) = self.audn.forward(input.view())?;
                let (main_loss, dq) = bce_loss(q.view(), targets.view())?;
                let (audn_grads, dinput) = self.audn.backward(&cache, dq.view())?;
                dalpha += &dinput.slice(s![.., ..users]);
                let (ugrads, _) = uaen.backward(&ucache, dalpha.view())?;
                relu_pattern.extend(ucache.relu_pattern(&uaen.spec));
                relu_pattern.extend(cache.relu_pattern(&self.audn.spec));
                let dx = dinput.slice(s![.., users..]).to_owned();
                (main_loss + aux_weight * aux_loss, (dx, audn_grads), Some(ugrads))
            }
        };
        let (dxp, audn_grads) = grad_xp;

        let table_grad = match (self.table(), norms) {
            (Some(t), Some(norms)) => {
                let draw = dxp * scale;
                let k = self.scenario.preamble_len;
                let mut dp = Array2::zeros(p.dim());
                for (g, d) in draw.rows().into_iter().zip(&batch.draws) {
                    for n in (0..users).filter(|&n| d.delta.is_active(n)) {
                        let h = d.h.0[n];
                        for i in 0..k {
                            let (gr, gi) = (g[i], g[k + i]);
                            dp[[n, i]] += h.re * gr + h.im * gi;
                            dp[[n, k + i]] += h.re * gi - h.im * gr;
                        }
                    }
                }
                Some(t.normalization_backward(p.view(), &norms, dp.view()))
            }
            _ => None,
        };

        Ok(LossEvaluation {
            loss,
            grads: SystemGradients {
                table: table_grad,
                uaen: uaen_grads,
                audn: audn_grads,
            },
            relu_pattern,
        })
    }
}

impl AudSystem {
    /// Compare [`AudSystem::loss_and_gradients`] with central differences over
    /// every trainable entry, preamble table included.
    pub fn gradcheck(&self, batch: &TrainBatch, aux_weight: f64, step: f64) -> Result<GradcheckReport> {
        let eval = self.loss_and_gradients(batch, aux_weight)?;
        let theta: Vec<f64> = self.trainable_tensors().into_iter().flatten().copied().collect();
        let analytic: Vec<f64> = eval.grads.tensors().into_iter().flatten().copied().collect();
        if theta.len() != analytic.len() {
            return Err(Error::DimensionMismatch {
                context: "gradient length",
                expected: theta.len(),
                actual: analytic.len(),
            });
        }
        let mut probe = self.clone();
        let mut failure = None;
        let report = check_flat(&theta, &analytic, step, |th| {
            let mut offset = 0;
            for t in probe.trainable_tensors_mut() {
                t.copy_from_slice(&th[offset..offset + t.len()]);
                offset += t.len();
            }
            probe.sync_preambles();
            match probe.loss_and_gradients(batch, aux_weight) {
                Ok(e) => (vec![e.loss], e.relu_pattern),
                Err(e) => {
                    failure.get_or_insert(e);
                    (vec![f64::NAN], Vec::new())
                }
            }
        });
        match failure {
            Some(e) => Err(e),
            None => Ok(report),
        }
    }
}

/// Train a system from scratch.
///
/// `frozen` is required by (and only used for) the independent variant.
pub fn train(
    variant: Variant,
    scenario: &ScenarioConfig,
    tc: &TrainConfig,
    frozen: Option<PreambleSet>,
) -> Result<AudSystem> {
    let problems = tc.problems();
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }
    let mut sys = AudSystem::untrained(variant, scenario.clone(), frozen, tc.hidden_factor, tc.seed)?;
    let mut adam = AdamState::for_tensors(
        AdamConfig {
            lr: tc.lr,
            ..AdamConfig::default()
        },
        &sys.trainable_tensors(),
    );
    let train_seed = derive_seed(tc.seed, 0x7472_6169_6e);
    let mut log = TrainingLog {
        losses: Vec::with_capacity(tc.iterations),
    };
    for it in 0..tc.iterations {
        let batch = TrainBatch::sample(&sys.scenario, train_seed, it as u64, tc.batch_size, tc.snr_range_db);
        let eval = sys.loss_and_gradients(&batch, tc.aux_weight)?;
        if !eval.loss.is_finite() {
            return Err(Error::Diverged {
                iteration: it,
                loss: eval.loss,
            });
        }
        log.losses.push(eval.loss);
        let grads = eval.grads.tensors();
        let mut params = sys.trainable_tensors_mut();
        adam.step(&mut params, &grads)?;
    }
    sys.sync_preambles();
    sys.log = log;
    sys.train_config = Some(tc.clone());
    Ok(sys)
}
