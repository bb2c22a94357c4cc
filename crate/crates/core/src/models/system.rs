use std::path::Path;

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::table::PreambleTable;
use super::train::{TrainConfig, TrainingLog};
use crate::airlink::{ActivityVector, PreambleSet, ReceivedFrame, ScenarioConfig};
use crate::error::{Error, Result};
use crate::nn::checkpoint::{BlobReader, BlobWriter, TensorEntry, BLOB_FORMAT};
use crate::nn::{flatten_complex, Activation, Network, NetworkSpec};
use crate::scma::ScmaCodebookSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Trainable preambles, detector sees the preamble observation only.
    PreambleBased,
    /// Trainable preambles, detector also uses the data observations.
    DataAidedJoint,
    /// Frozen preamble set, data-aided detector trained alone.
    DataAidedIndependent,
}

impl Variant {
    pub const ALL: [Variant; 3] = [
        Variant::PreambleBased,
        Variant::DataAidedJoint,
        Variant::DataAidedIndependent,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Variant::PreambleBased => "preamble-based",
            Variant::DataAidedJoint => "data-aided-joint",
            Variant::DataAidedIndependent => "data-aided-independent",
        }
    }

    pub fn is_data_aided(self) -> bool {
        !matches!(self, Variant::PreambleBased)
    }

    pub fn trains_preambles(self) -> bool {
        !matches!(self, Variant::DataAidedIndependent)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.tag() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown variant '{s}'")))
    }
}

/// Receiver front end: observations are divided by the known noise
/// standard deviation, floored at `NOISE_STD_FLOOR` so noiseless frames stay
/// finite.
pub const NOISE_STD_FLOOR: f64 = 1e-2;

pub fn front_end_scale(noise_std: f64) -> f64 {
    1.0 / noise_std.max(NOISE_STD_FLOOR)
}

fn preamble_rows(frames: &[ReceivedFrame], width: usize) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((frames.len(), width));
    for (mut row, f) in x.rows_mut().into_iter().zip(frames) {
        if 2 * f.preamble.len() != width {
            return Err(Error::DimensionMismatch {
                context: "preamble observation width",
                expected: width,
                actual: 2 * f.preamble.len(),
            });
        }
        flatten_complex(
            &f.preamble,
            front_end_scale(f.noise_std),
            row.as_slice_mut().expect("standard layout"),
        );
    }
    Ok(x)
}

fn data_rows(frames: &[ReceivedFrame], width: usize) -> Result<Array2<f64>> {
    let mut x = Array2::zeros((frames.len(), width));
    for (mut row, f) in x.rows_mut().into_iter().zip(frames) {
        let flat: Vec<Complex64> = f.data.iter().flatten().copied().collect();
        if 2 * flat.len() != width {
            return Err(Error::DimensionMismatch {
                context: "data observation width",
                expected: width,
                actual: 2 * flat.len(),
            });
        }
        flatten_complex(
            &flat,
            front_end_scale(f.noise_std),
            row.as_slice_mut().expect("standard layout"),
        );
    }
    Ok(x)
}

/// Flattened, noise-normalized preamble observations.
pub fn preamble_features(frames: &[ReceivedFrame], preamble_len: usize) -> Result<Array2<f64>> {
    preamble_rows(frames, 2 * preamble_len)
}

/// All data blocks concatenated, flattened and noise-normalized.
pub fn data_features(frames: &[ReceivedFrame], resources: usize, blocks: usize) -> Result<Array2<f64>> {
    data_rows(frames, 2 * resources * blocks)
}

fn single(frame_pre: &[Complex64], data: Vec<Vec<Complex64>>, noise_std: f64) -> ReceivedFrame {
    ReceivedFrame {
        preamble: frame_pre.to_vec(),
        data,
        noise_std,
    }
}

/// Soft activity from the preamble observation alone.
pub fn audn_preamble_forward(audn: &Network, y_p: &[Complex64], noise_std: f64) -> Result<Vec<f64>> {
    let x = preamble_features(&[single(y_p, vec![], noise_std)], y_p.len())?;
    Ok(audn.predict(x.view())?.row(0).to_vec())
}

/// Per-user activity scores extracted from the data observations.
pub fn uaen_forward(uaen: &Network, y_d: &[Vec<Complex64>], noise_std: f64) -> Result<Vec<f64>> {
    let resources = y_d.first().map_or(0, |b| b.len());
    if y_d.iter().any(|b| b.len() != resources) {
        return Err(Error::InvalidParameter("data blocks must share one length".into()));
    }
    let x = data_features(&[single(&[], y_d.to_vec(), noise_std)], resources, y_d.len())?;
    Ok(uaen.predict(x.view())?.row(0).to_vec())
}

/// Soft activity from `[alpha | preamble observation]`.
pub fn audn_data_aided_forward(audn: &Network, alpha: &[f64], y_p: &[Complex64], noise_std: f64) -> Result<Vec<f64>> {
    let xp = preamble_features(&[single(y_p, vec![], noise_std)], y_p.len())?;
    let mut x = Array2::zeros((1, alpha.len() + xp.ncols()));
    x.slice_mut(s![0, ..alpha.len()]).assign(&ndarray::aview1(alpha));
    x.slice_mut(s![0, alpha.len()..]).assign(&xp.row(0));
    Ok(audn.predict(x.view())?.row(0).to_vec())
}

/// Decision rule: user `n` is declared active iff `soft[n] > threshold`.
pub const DECISION_THRESHOLD: f64 = 0.5;

pub fn hard_decision(soft: &[f64], threshold: f64) -> ActivityVector {
    ActivityVector(soft.iter().map(|&q| u8::from(q > threshold)).collect())
}

/// Where a system's preambles come from.
#[derive(Debug, Clone, PartialEq)]
pub enum PreambleSource {
    Table(PreambleTable),
    Frozen(PreambleSet),
}

/// Network shapes of a variant under a scenario.
pub fn network_specs(
    variant: Variant,
    scenario: &ScenarioConfig,
    hidden_factor: usize,
) -> (Option<NetworkSpec>, NetworkSpec) {
    let head = |input: usize, output: usize, act: Activation| {
        let hidden = hidden_factor * input;
        NetworkSpec::mlp(input, &[hidden, hidden], Activation::Relu, output, act)
    };
    let n = scenario.users;
    let preamble_width = 2 * scenario.preamble_len;
    if variant.is_data_aided() {
        let data_width = 2 * scenario.resources * scenario.data_blocks;
        (
            Some(head(data_width, n, Activation::Identity)),
            head(n + preamble_width, n, Activation::Sigmoid),
        )
    } else {
        (None, head(preamble_width, n, Activation::Sigmoid))
    }
}

/// A trained (or freshly initialized) active-user detection system.
#[derive(Debug, Clone)]
pub struct AudSystem {
    pub variant: Variant,
    pub scenario: ScenarioConfig,
    pub(crate) codebooks: ScmaCodebookSet,
    pub(crate) source: PreambleSource,
    /// Normalized view of `source`, refreshed whenever the table changes.
    pub(crate) preambles: PreambleSet,
    pub uaen: Option<Network>,
    pub audn: Network,
    pub train_config: Option<TrainConfig>,
    pub log: TrainingLog,
}

impl AudSystem {
    pub fn assemble(
        variant: Variant,
        scenario: ScenarioConfig,
        source: PreambleSource,
        uaen: Option<Network>,
        audn: Network,
    ) -> Result<Self> {
        scenario.validate()?;
        match (&source, variant.trains_preambles()) {
            (PreambleSource::Table(_), false) => {
                return Err(Error::InvalidParameter(format!(
                    "{variant} needs a frozen preamble set"
                )))
            }
            (PreambleSource::Frozen(_), true) => {
                return Err(Error::InvalidParameter(format!(
                    "{variant} needs a trainable preamble table"
                )))
            }
            _ => {}
        }
        let preambles = match &source {
            PreambleSource::Table(t) => t.to_preamble_set(),
            PreambleSource::Frozen(p) => p.clone(),
        };
        if preambles.len() != scenario.users || preambles.preamble_len() != scenario.preamble_len {
            return Err(Error::InvalidParameter(format!(
                "preamble set is {} x {}, scenario needs {} x {}",
                preambles.len(),
                preambles.preamble_len(),
                scenario.users,
                scenario.preamble_len
            )));
        }
        if uaen.is_some() != variant.is_data_aided() {
            return Err(Error::InvalidParameter(format!(
                "{variant}: extraction network presence mismatch"
            )));
        }
        let codebooks = scenario.build_codebooks()?;
        Ok(Self {
            variant,
            scenario,
            codebooks,
            source,
            preambles,
            uaen,
            audn,
            train_config: None,
            log: TrainingLog::default(),
        })
    }

    pub fn codebooks(&self) -> &ScmaCodebookSet {
        &self.codebooks
    }

    pub fn source(&self) -> &PreambleSource {
        &self.source
    }

    pub fn table(&self) -> Option<&PreambleTable> {
        match &self.source {
            PreambleSource::Table(t) => Some(t),
            PreambleSource::Frozen(_) => None,
        }
    }

    pub(crate) fn refresh_preambles(&mut self) {
        if let PreambleSource::Table(t) = &self.source {
            self.preambles = t.to_preamble_set();
        }
    }

    /// Current normalized preambles (what transmitters send).
    pub fn preamble_set(&self) -> &PreambleSet {
        &self.preambles
    }

    /// Normalized preambles with their association map.
    pub fn extract_preambles(&self) -> PreambleSet {
        self.preambles.clone()
    }

    /// Soft activity estimates, one row per frame.
    pub fn soft_outputs(&self, frames: &[ReceivedFrame]) -> Result<Array2<f64>> {
        let xp = preamble_features(frames, self.scenario.preamble_len)?;
        match &self.uaen {
            None => self.audn.predict(xp.view()),
            Some(uaen) => {
                let xd = data_features(frames, self.scenario.resources, self.scenario.data_blocks)?;
                let alpha = uaen.predict(xd.view())?;
                let n = alpha.ncols();
                let mut x = Array2::zeros((frames.len(), n + xp.ncols()));
                x.slice_mut(s![.., ..n]).assign(&alpha);
                x.slice_mut(s![.., n..]).assign(&xp);
                self.audn.predict(x.view())
            }
        }
    }

    pub fn detect(&self, frame: &ReceivedFrame) -> Result<ActivityVector> {
        Ok(self.detect_batch(std::slice::from_ref(frame))?.remove(0))
    }

    pub fn detect_batch(&self, frames: &[ReceivedFrame]) -> Result<Vec<ActivityVector>> {
        let soft = self.soft_outputs(frames)?;
        Ok(soft
            .rows()
            .into_iter()
            .map(|r| hard_decision(r.as_slice().expect("standard layout"), DECISION_THRESHOLD))
            .collect())
    }

    /// Write `manifest.json`, `params.bin`, `scenario.json`, `preambles.json`
    /// and `training_log.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut blob = BlobWriter::default();
        if let Some(t) = self.table() {
            let (r, c) = t.raw().dim();
            blob.push(
                "preamble_table",
                vec![r, c],
                t.raw().as_slice().expect("standard layout"),
            );
        }
        if let Some(u) = &self.uaen {
            blob.push_network("uaen", u);
        }
        blob.push_network("audn", &self.audn);
        let tensors = blob.finish(&dir.join("params.bin"))?;
        let manifest = SystemManifest {
            variant: self.variant,
            preamble_source: if self.table().is_some() { "table" } else { "frozen" }.into(),
            format: BLOB_FORMAT.into(),
            uaen: self.uaen.as_ref().map(|u| u.spec.clone()),
            audn: self.audn.spec.clone(),
            train: self.train_config.clone(),
            tensors,
        };
        std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        std::fs::write(dir.join("scenario.json"), serde_json::to_string_pretty(&self.scenario)?)?;
        self.preambles.save(dir.join("preambles.json"))?;
        std::fs::write(dir.join("training_log.json"), serde_json::to_string(&self.log)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: SystemManifest = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        if manifest.format != BLOB_FORMAT {
            return Err(Error::InvalidParameter(format!(
                "unknown blob format '{}'",
                manifest.format
            )));
        }
        let scenario: ScenarioConfig = serde_json::from_str(&std::fs::read_to_string(dir.join("scenario.json"))?)?;
        let scenario = scenario.normalized();
        let reader = BlobReader::open(&dir.join("params.bin"), manifest.tensors)?;
        let source = match manifest.preamble_source.as_str() {
            "table" => {
                let (shape, values) = reader.get("preamble_table")?;
                let raw = Array2::from_shape_vec((shape[0], shape[1]), values.to_vec())
                    .map_err(|e| Error::InvalidParameter(e.to_string()))?;
                PreambleSource::Table(PreambleTable::from_raw(raw, scenario.codebooks, scenario.assoc())?)
            }
            "frozen" => PreambleSource::Frozen(PreambleSet::load(dir.join("preambles.json"))?),
            other => return Err(Error::InvalidParameter(format!("unknown preamble source '{other}'"))),
        };
        let uaen = manifest.uaen.as_ref().map(|s| reader.network("uaen", s)).transpose()?;
        let audn = reader.network("audn", &manifest.audn)?;
        let mut sys = Self::assemble(manifest.variant, scenario, source, uaen, audn)?;
        sys.train_config = manifest.train;
        let log_path = dir.join("training_log.json");
        if log_path.exists() {
            sys.log = serde_json::from_str(&std::fs::read_to_string(log_path)?)?;
        }
        Ok(sys)
    }
}

#[derive(Serialize, Deserialize)]
struct SystemManifest {
    variant: Variant,
    preamble_source: String,
    format: String,
    uaen: Option<NetworkSpec>,
    audn: NetworkSpec,
    train: Option<TrainConfig>,
    tensors: Vec<TensorEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Network;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn full_scenario() -> ScenarioConfig {
        ScenarioConfig::homogeneous(6, 8, 16, 16, 0.0625)
    }

    #[test]
    fn variant_tags_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.tag().parse::<Variant>().unwrap(), v);
            assert_eq!(serde_json::to_value(v).unwrap(), v.tag());
        }
    }

    #[test]
    fn widths_for_full_configuration() {
        let sc = full_scenario();
        let (u, a) = network_specs(Variant::PreambleBased, &sc, 4);
        assert!(u.is_none());
        assert_eq!(a.input_width, 32);
        assert_eq!(a.output_width(), 48);
        let (u, a) = network_specs(Variant::DataAidedJoint, &sc, 4);
        let u = u.unwrap();
        assert_eq!(u.input_width, 128);
        assert_eq!(u.output_width(), 48);
        assert_eq!(u.layers.last().unwrap().activation, Activation::Identity);
        assert_eq!(a.input_width, 80);
        assert_eq!(a.layers[0].width, 320);
        assert_eq!(a.layers.last().unwrap().activation, Activation::Sigmoid);
    }

    #[test]
    fn zero_weight_heads() {
        let sc = full_scenario();
        let (u, a) = network_specs(Variant::DataAidedJoint, &sc, 4);
        let uaen = Network::zeros(u.unwrap()).unwrap();
        let audn = Network::zeros(a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y_p: Vec<Complex64> = (0..16).map(|_| Complex64::new(rng.random(), rng.random())).collect();
        let y_d: Vec<Vec<Complex64>> = (0..16)
            .map(|_| (0..4).map(|_| Complex64::new(rng.random(), rng.random())).collect())
            .collect();
        let alpha = uaen_forward(&uaen, &y_d, 1.0).unwrap();
        assert_eq!(alpha, vec![0.0; 48]);
        let q = audn_data_aided_forward(&audn, &alpha, &y_p, 1.0).unwrap();
        assert_eq!(q, vec![0.5; 48]);
        let (_, pb) = network_specs(Variant::PreambleBased, &sc, 4);
        let q = audn_preamble_forward(&Network::zeros(pb).unwrap(), &y_p, 1.0).unwrap();
        assert_eq!(q.len(), 48);
        assert!(q.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn forwards_are_deterministic_and_check_shapes() {
        let sc = ScenarioConfig::homogeneous(6, 2, 8, 4, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (u, a) = network_specs(Variant::DataAidedJoint, &sc, 2);
        let uaen = Network::new(u.unwrap(), &mut rng).unwrap();
        let audn = Network::new(a, &mut rng).unwrap();
        let y_p: Vec<Complex64> = (0..8).map(|k| Complex64::new(k as f64, 1.0)).collect();
        let y_d: Vec<Vec<Complex64>> = (0..4).map(|i| vec![Complex64::new(i as f64, -1.0); 4]).collect();
        let alpha = uaen_forward(&uaen, &y_d, 1.0).unwrap();
        assert_eq!(alpha, uaen_forward(&uaen, &y_d, 1.0).unwrap());
        let q1 = audn_data_aided_forward(&audn, &alpha, &y_p, 1.0).unwrap();
        assert_eq!(q1, audn_data_aided_forward(&audn, &alpha, &y_p, 1.0).unwrap());
        assert!(uaen_forward(&uaen, &y_d[..3], 1.0).is_err());
        assert!(audn_data_aided_forward(&audn, &alpha[..5], &y_p, 1.0).is_err());
    }

    #[test]
    fn block_order_matters_to_extraction() {
        let sc = ScenarioConfig::homogeneous(6, 2, 8, 4, 0.25);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (u, _) = network_specs(Variant::DataAidedJoint, &sc, 2);
        let uaen = Network::new(u.unwrap(), &mut rng).unwrap();
        let y_d: Vec<Vec<Complex64>> = (0..4)
            .map(|_| {
                (0..4)
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect()
            })
            .collect();
        let mut reordered = y_d.clone();
        reordered.swap(0, 3);
        assert_ne!(
            uaen_forward(&uaen, &y_d, 1.0).unwrap(),
            uaen_forward(&uaen, &reordered, 1.0).unwrap()
        );
    }

    #[test]
    fn strict_threshold() {
        assert_eq!(hard_decision(&[0.49, 0.51], 0.5).0, vec![0, 1]);
        assert_eq!(hard_decision(&[0.5, 0.5, 0.5], 0.5).0, vec![0, 0, 0]);
        assert_eq!(hard_decision(&[1.0, 0.0, 1.0], 0.5).0, vec![1, 0, 1]);
    }

    #[test]
    fn front_end_divides_by_noise_level() {
        let frame = ReceivedFrame {
            preamble: vec![Complex64::new(1.0, 2.0), Complex64::new(-3.0, 0.5)],
            data: vec![vec![Complex64::new(4.0, -1.0)]],
            noise_std: 0.5,
        };
        let xp = preamble_features(std::slice::from_ref(&frame), 2).unwrap();
        assert_eq!(xp.row(0).to_vec(), vec![2.0, -6.0, 4.0, 1.0]);
        let xd = data_features(std::slice::from_ref(&frame), 1, 1).unwrap();
        assert_eq!(xd.row(0).to_vec(), vec![8.0, -2.0]);
        assert_eq!(front_end_scale(0.0), 1.0 / NOISE_STD_FLOOR);
    }
}
