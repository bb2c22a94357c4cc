//! Random user activity, flat Rayleigh channels, AWGN, and the superposed
//! preamble and data observations seen by the base station.
//!
//! Signal convention: every active user transmits a unit-energy preamble and
//! unit-energy codewords; complex noise per sample is `CN(0, sigma^2)` with
//! `sigma = 10^(-snr_db / 20)`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};
use crate::scma::{ScmaCodebookSet, SymbolBlock};

/// How preamble `n` is tied to a codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Association {
    /// `nu(n) = n mod J`.
    #[default]
    RoundRobin,
    /// `nu(n) = n div L`, i.e. `n = L*j + l`.
    Block,
}

impl Association {
    pub fn codebook_of(self, n: usize, codebooks: usize, per_codebook: usize) -> usize {
        match self {
            Association::RoundRobin => n % codebooks,
            Association::Block => n / per_codebook,
        }
    }

    pub fn map(self, codebooks: usize, per_codebook: usize) -> Vec<usize> {
        (0..codebooks * per_codebook)
            .map(|n| self.codebook_of(n, codebooks, per_codebook))
            .collect()
    }
}

fn default_nonzeros() -> usize {
    2
}

fn probabilities<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Probs {
        Uniform(f64),
        PerUser(Vec<f64>),
    }
    Ok(match Probs::deserialize(d)? {
        // expanded to length N in `ScenarioConfig::normalized`
        Probs::Uniform(p) => vec![p],
        Probs::PerUser(v) => v,
    })
}

/// Link-level scenario. A scalar `activity_prob` in JSON means every user
/// shares that probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(rename = "N")]
    pub users: usize,
    #[serde(rename = "J")]
    pub codebooks: usize,
    #[serde(rename = "L")]
    pub per_codebook: usize,
    #[serde(rename = "K_p")]
    pub preamble_len: usize,
    #[serde(rename = "K_d")]
    pub resources: usize,
    #[serde(rename = "N_m", default = "default_nonzeros")]
    pub nonzeros: usize,
    #[serde(rename = "N_d")]
    pub data_blocks: usize,
    #[serde(rename = "M")]
    pub codebook_size: usize,
    #[serde(deserialize_with = "probabilities")]
    pub activity_prob: Vec<f64>,
    #[serde(default)]
    pub snr_db: f64,
    #[serde(default)]
    pub association: Association,
}

impl ScenarioConfig {
    /// Scenario with every user active with probability `p`, `K_d = 4`,
    /// `N_m = 2`, `M = 4`.
    pub fn homogeneous(codebooks: usize, per_codebook: usize, preamble_len: usize, data_blocks: usize, p: f64) -> Self {
        let users = codebooks * per_codebook;
        Self {
            users,
            codebooks,
            per_codebook,
            preamble_len,
            resources: 4,
            nonzeros: 2,
            data_blocks,
            codebook_size: 4,
            activity_prob: vec![p; users],
            snr_db: 10.0,
            association: Association::RoundRobin,
        }
    }

    /// Expand a single shared probability to one entry per user.
    pub fn normalized(mut self) -> Self {
        if self.activity_prob.len() == 1 && self.users > 1 {
            self.activity_prob = vec![self.activity_prob[0]; self.users];
        }
        self
    }

    /// Every violated constraint, or `Ok`.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.users != self.codebooks * self.per_codebook {
            problems.push(format!(
                "N must equal J*L (N = {}, J = {}, L = {})",
                self.users, self.codebooks, self.per_codebook
            ));
        }
        for (name, v) in [
            ("N", self.users),
            ("J", self.codebooks),
            ("L", self.per_codebook),
            ("K_p", self.preamble_len),
            ("K_d", self.resources),
            ("N_m", self.nonzeros),
            ("N_d", self.data_blocks),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be positive"));
            }
        }
        if self.codebook_size < 2 || !self.codebook_size.is_power_of_two() {
            problems.push(format!("M = {} must be a power of two >= 2", self.codebook_size));
        }
        if self.nonzeros >= self.resources {
            problems.push(format!(
                "N_m = {} must be below K_d = {}",
                self.nonzeros, self.resources
            ));
        }
        if self.activity_prob.len() != self.users {
            problems.push(format!(
                "activity_prob has {} entries, expected N = {}",
                self.activity_prob.len(),
                self.users
            ));
        }
        if self.activity_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            problems.push("activity_prob entries must lie in [0, 1]".into());
        }
        if !self.snr_db.is_finite() {
            problems.push("snr_db must be finite".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn assoc(&self) -> Vec<usize> {
        self.association.map(self.codebooks, self.per_codebook)
    }

    pub fn mean_activity(&self) -> f64 {
        self.activity_prob.iter().sum::<f64>() / self.activity_prob.len().max(1) as f64
    }

    pub fn build_codebooks(&self) -> Result<ScmaCodebookSet> {
        let mapping = crate::scma::build_mapping_matrix(self.resources, self.codebooks, self.nonzeros)?;
        crate::scma::build_codebook_set(mapping, self.codebook_size)
    }
}

/// Activity indicators `delta_n`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActivityVector(pub Vec<u8>);

impl ActivityVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_active(&self, n: usize) -> bool {
        self.0[n] == 1
    }

    pub fn count(&self) -> usize {
        self.0.iter().map(|&d| d as usize).sum()
    }
}

/// Flat-fading coefficients `h_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(pub Vec<Complex64>);

/// Superposed observations of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedFrame {
    pub preamble: Vec<Complex64>,
    pub data: Vec<Vec<Complex64>>,
    /// Noise standard deviation known to the receiver.
    pub noise_std: f64,
}

/// `N` unit-energy preambles of length `K_p` and their codebook association.
#[derive(Debug, Clone, PartialEq)]
pub struct PreambleSet {
    preambles: Vec<Vec<Complex64>>,
    codebooks: usize,
    assoc: Vec<usize>,
}

pub const UNIT_ENERGY_TOL: f64 = 1e-9;

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum()
}

impl PreambleSet {
    /// Wrap already-normalized preambles.
    pub fn new(preambles: Vec<Vec<Complex64>>, codebooks: usize, assoc: Vec<usize>) -> Result<Self> {
        let set = Self {
            preambles,
            codebooks,
            assoc,
        };
        set.check()?;
        Ok(set)
    }

    /// Scale every sequence to unit energy, then wrap.
    pub fn normalized(mut preambles: Vec<Vec<Complex64>>, codebooks: usize, assoc: Vec<usize>) -> Result<Self> {
        for (n, p) in preambles.iter_mut().enumerate() {
            let e = energy(p).sqrt();
            if e == 0.0 || !e.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "preamble {n} has zero or non-finite energy"
                )));
            }
            p.iter_mut().for_each(|c| *c /= e);
        }
        Self::new(preambles, codebooks, assoc)
    }

    fn check(&self) -> Result<()> {
        let n = self.preambles.len();
        if n == 0 || self.codebooks == 0 {
            return Err(Error::InvalidParameter("empty preamble set".into()));
        }
        if self.assoc.len() != n {
            return Err(Error::DimensionMismatch {
                context: "association map",
                expected: n,
                actual: self.assoc.len(),
            });
        }
        let len = self.preambles[0].len();
        for (i, p) in self.preambles.iter().enumerate() {
            if p.len() != len {
                return Err(Error::DimensionMismatch {
                    context: "preamble length",
                    expected: len,
                    actual: p.len(),
                });
            }
            if (energy(p) - 1.0).abs() > UNIT_ENERGY_TOL {
                return Err(Error::InvalidParameter(format!(
                    "preamble {i} has energy {} (unit energy required)",
                    energy(p)
                )));
            }
        }
        if let Some(&j) = self.assoc.iter().find(|&&j| j >= self.codebooks) {
            return Err(Error::OutOfRange {
                context: "associated codebook",
                index: j,
                limit: self.codebooks,
            });
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.preambles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preambles.is_empty()
    }

    pub fn preamble_len(&self) -> usize {
        self.preambles[0].len()
    }

    pub fn codebooks(&self) -> usize {
        self.codebooks
    }

    pub fn preamble(&self, n: usize) -> &[Complex64] {
        &self.preambles[n]
    }

    pub fn preambles(&self) -> &[Vec<Complex64>] {
        &self.preambles
    }

    pub fn assoc(&self) -> &[usize] {
        &self.assoc
    }

    pub fn to_json(&self) -> Result<String> {
        let file = PreambleFile {
            preamble_len: self.preamble_len(),
            users: self.len(),
            codebooks: self.codebooks,
            preambles: self.preambles.clone(),
            assoc: self.assoc.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: PreambleFile = serde_json::from_str(text)?;
        if file.preambles.len() != file.users {
            return Err(Error::DimensionMismatch {
                context: "preamble count",
                expected: file.users,
                actual: file.preambles.len(),
            });
        }
        if file.preambles.iter().any(|p| p.len() != file.preamble_len) {
            return Err(Error::InvalidParameter(format!(
                "every preamble must have K_p = {} samples",
                file.preamble_len
            )));
        }
        Self::new(file.preambles, file.codebooks, file.assoc)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct PreambleFile {
    #[serde(rename = "K_p")]
    preamble_len: usize,
    #[serde(rename = "N")]
    users: usize,
    #[serde(rename = "J")]
    codebooks: usize,
    preambles: Vec<Vec<Complex64>>,
    assoc: Vec<usize>,
}

/// One `CN(0, 1)` sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn sample_activity<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ActivityVector {
    ActivityVector(
        cfg.activity_prob
            .iter()
            .map(|&p| u8::from(rng.random::<f64>() < p))
            .collect(),
    )
}

pub fn sample_channel<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> ChannelVector {
    ChannelVector((0..cfg.users).map(|_| complex_normal(rng)).collect())
}

pub fn snr_to_noise_std(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 20.0)
}

fn check_users(delta: &ActivityVector, h: &ChannelVector, users: usize) -> Result<()> {
    if delta.len() != users {
        return Err(Error::DimensionMismatch {
            context: "activity vector",
            expected: users,
            actual: delta.len(),
        });
    }
    if h.0.len() != users {
        return Err(Error::DimensionMismatch {
            context: "channel vector",
            expected: users,
            actual: h.0.len(),
        });
    }
    Ok(())
}

/// Preamble observation with caller-supplied unit-variance noise.
pub fn superpose_preamble_with_noise(
    ps: &PreambleSet,
    delta: &ActivityVector,
    h: &ChannelVector,
    sigma: f64,
    unit_noise: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_users(delta, h, ps.len())?;
    if unit_noise.len() != ps.preamble_len() {
        return Err(Error::DimensionMismatch {
            context: "preamble noise",
            expected: ps.preamble_len(),
            actual: unit_noise.len(),
        });
    }
    let mut y: Vec<Complex64> = unit_noise.iter().map(|w| w * sigma).collect();
    for n in (0..ps.len()).filter(|&n| delta.is_active(n)) {
        for (yi, pi) in y.iter_mut().zip(ps.preamble(n)) {
            *yi += h.0[n] * pi;
        }
    }
    Ok(y)
}

/// `y_p = sum_n delta_n h_n p_n + n_p`.
pub fn superpose_preamble<R: Rng + ?Sized>(
    ps: &PreambleSet,
    delta: &ActivityVector,
    h: &ChannelVector,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let noise: Vec<Complex64> = (0..ps.preamble_len()).map(|_| complex_normal(rng)).collect();
    superpose_preamble_with_noise(ps, delta, h, sigma, &noise)
}

/// Data observations with caller-supplied unit-variance noise.
/// `codeword_idx[n][i]` is the codeword index of user `n` in block `i`.
pub fn superpose_data_indices(
    cbs: &ScmaCodebookSet,
    assoc: &[usize],
    delta: &ActivityVector,
    h: &ChannelVector,
    codeword_idx: &[Vec<usize>],
    sigma: f64,
    unit_noise: &[Vec<Complex64>],
) -> Result<Vec<Vec<Complex64>>> {
    check_users(delta, h, assoc.len())?;
    let blocks = unit_noise.len();
    let mut y: Vec<Vec<Complex64>> = unit_noise
        .iter()
        .map(|blk| {
            if blk.len() != cbs.resources() {
                return Err(Error::DimensionMismatch {
                    context: "data noise",
                    expected: cbs.resources(),
                    actual: blk.len(),
                });
            }
            Ok(blk.iter().map(|w| w * sigma).collect())
        })
        .collect::<Result<_>>()?;
    for n in (0..assoc.len()).filter(|&n| delta.is_active(n)) {
        let idx = codeword_idx
            .get(n)
            .filter(|b| b.len() >= blocks)
            .ok_or(Error::MissingBits(n))?;
        let layer = assoc[n];
        if layer >= cbs.layers() {
            return Err(Error::OutOfRange {
                context: "associated codebook",
                index: layer,
                limit: cbs.layers(),
            });
        }
        for (yi, &m) in y.iter_mut().zip(idx) {
            for (yk, ck) in yi.iter_mut().zip(cbs.codeword(layer, m)) {
                *yk += h.0[n] * ck;
            }
        }
    }
    Ok(y)
}

/// `y_i^(d) = sum_n delta_n h_n c_i^{nu(n)} + n_i^(d)` for `i = 1..N_d`.
///
/// `bits[n]` holds the `N_d` blocks of user `n`; inactive users may leave it
/// empty.
#[allow(clippy::too_many_arguments)]
pub fn superpose_data<R: Rng + ?Sized>(
    cbs: &ScmaCodebookSet,
    assoc: &[usize],
    delta: &ActivityVector,
    h: &ChannelVector,
    bits: &[Vec<SymbolBlock>],
    blocks: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>> {
    let mut idx = vec![Vec::new(); assoc.len()];
    for n in (0..assoc.len()).filter(|&n| n < delta.len() && delta.is_active(n)) {
        let user_bits = bits.get(n).filter(|b| b.len() >= blocks).ok_or(Error::MissingBits(n))?;
        idx[n] = user_bits[..blocks]
            .iter()
            .map(|b| {
                if b.len() != cbs.bits_per_block() {
                    return Err(Error::DimensionMismatch {
                        context: "symbol block length",
                        expected: cbs.bits_per_block(),
                        actual: b.len(),
                    });
                }
                Ok(b.index())
            })
            .collect::<Result<_>>()?;
    }
    let noise: Vec<Vec<Complex64>> = (0..blocks)
        .map(|_| (0..cbs.resources()).map(|_| complex_normal(rng)).collect())
        .collect();
    superpose_data_indices(cbs, assoc, delta, h, &idx, sigma, &noise)
}

/// Every random quantity of one trial, drawn from per-purpose streams keyed
/// by `(seed, trial)`. Noise is stored at unit variance so one draw can be
/// realized at any SNR and against any preamble set.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDraw {
    pub delta: ActivityVector,
    pub h: ChannelVector,
    pub preamble_noise: Vec<Complex64>,
    pub data_noise: Vec<Vec<Complex64>>,
    /// Codeword index per user and data block.
    pub codeword_idx: Vec<Vec<usize>>,
}

impl TrialDraw {
    pub fn sample(cfg: &ScenarioConfig, seed: u64, trial: u64) -> Self {
        let delta = sample_activity(cfg, &mut rng::stream(seed, Purpose::Activity, trial));
        let h = sample_channel(cfg, &mut rng::stream(seed, Purpose::Channel, trial));
        let mut noise = rng::stream(seed, Purpose::Noise, trial);
        let preamble_noise = (0..cfg.preamble_len).map(|_| complex_normal(&mut noise)).collect();
        let data_noise = (0..cfg.data_blocks)
            .map(|_| (0..cfg.resources).map(|_| complex_normal(&mut noise)).collect())
            .collect();
        let mut bits = rng::stream(seed, Purpose::Bits, trial);
        let codeword_idx = (0..cfg.users)
            .map(|_| {
                (0..cfg.data_blocks)
                    .map(|_| bits.random_range(0..cfg.codebook_size))
                    .collect()
            })
            .collect();
        Self {
            delta,
            h,
            preamble_noise,
            data_noise,
            codeword_idx,
        }
    }

    pub fn realize(&self, ps: &PreambleSet, cbs: &ScmaCodebookSet, sigma: f64) -> Result<ReceivedFrame> {
        Ok(ReceivedFrame {
            preamble: superpose_preamble_with_noise(ps, &self.delta, &self.h, sigma, &self.preamble_noise)?,
            data: superpose_data_indices(
                cbs,
                ps.assoc(),
                &self.delta,
                &self.h,
                &self.codeword_idx,
                sigma,
                &self.data_noise,
            )?,
            noise_std: sigma,
        })
    }
}
