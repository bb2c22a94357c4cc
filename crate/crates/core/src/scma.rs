//! SCMA mapping matrices, procedural codebook sets and the bit-block encoder.
//!
//! A codebook set holds `J` layers. Layer `j` owns `M` sparse codewords of
//! length `K_d`, nonzero exactly on the rows selected by column `j` of the
//! mapping matrix. Columns are the first `J` subsets of size `N_m` of the
//! `K_d` resources in lexicographic order.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary `K_d x J` factor-graph matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingMatrix {
    resources: usize,
    layers: usize,
    nonzeros: usize,
    entries: Vec<Vec<u8>>,
}

impl MappingMatrix {
    pub fn resources(&self) -> usize {
        self.resources
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn nonzeros(&self) -> usize {
        self.nonzeros
    }

    /// Row-major entries, `K_d` rows of `J` zeros and ones.
    pub fn entries(&self) -> &[Vec<u8>] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> u8 {
        self.entries[row][col]
    }

    /// Rows of column `j` that carry a one, ascending.
    pub fn support(&self, j: usize) -> Vec<usize> {
        (0..self.resources).filter(|&r| self.entries[r][j] == 1).collect()
    }

    pub fn row_weight(&self, row: usize) -> usize {
        self.entries[row].iter().map(|&e| e as usize).sum()
    }

    /// `J / K_d`.
    pub fn overloading_factor(&self) -> f64 {
        self.layers as f64 / self.resources as f64
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// All `k`-subsets of `0..n` in lexicographic order, stopping after `limit`.
fn lexicographic_subsets(n: usize, k: usize, limit: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(limit);
    let mut idx: Vec<usize> = (0..k).collect();
    while out.len() < limit {
        out.push(idx.clone());
        // advance to the next combination
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < n - k + i {
                idx[i] += 1;
                for t in i + 1..k {
                    idx[t] = idx[t - 1] + 1;
                }
                break;
            }
        }
    }
    out
}

/// Build the `K_d x J` mapping matrix with `N_m` ones per column.
pub fn build_mapping_matrix(resources: usize, layers: usize, nonzeros: usize) -> Result<MappingMatrix> {
    if resources == 0 || layers == 0 || nonzeros == 0 {
        return Err(Error::InvalidParameter("K_d, J and N_m must all be positive".into()));
    }
    if nonzeros >= resources {
        return Err(Error::InvalidParameter(format!(
            "N_m ({nonzeros}) must be smaller than K_d ({resources})"
        )));
    }
    let available = binomial(resources, nonzeros);
    if layers > available {
        return Err(Error::Capacity {
            requested: layers,
            available,
            resources,
            nonzeros,
        });
    }
    let mut entries = vec![vec![0u8; layers]; resources];
    for (j, subset) in lexicographic_subsets(resources, nonzeros, layers).iter().enumerate() {
        for &r in subset {
            entries[r][j] = 1;
        }
    }
    Ok(MappingMatrix {
        resources,
        layers,
        nonzeros,
        entries,
    })
}

/// A block of `log2 M` data bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolBlock(Vec<u8>);

impl SymbolBlock {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidParameter(format!("bit value {b} is not 0 or 1")));
        }
        Ok(Self(bits))
    }

    /// Big-endian bits of `index` over `width` positions.
    pub fn from_index(index: usize, width: usize) -> Self {
        Self((0..width).rev().map(|s| ((index >> s) & 1) as u8).collect())
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Big-endian integer value.
    pub fn index(&self) -> usize {
        self.0.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }
}

/// `J` codebooks of `M` unit-energy sparse codewords.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmaCodebookSet {
    mapping: MappingMatrix,
    size: usize,
    codewords: Vec<Vec<Vec<Complex64>>>,
}

/// Unit-modulus `M`-PSK points offset by `pi/M`; QPSK for `M = 4`.
fn mother_constellation(size: usize) -> Vec<Complex64> {
    (0..size)
        .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / size as f64 + PI / size as f64))
        .collect()
}

/// Place a rotated mother constellation on each layer's support.
///
/// Layer `j` is rotated by `j * pi / (2J)`. The `r`-th nonzero dimension of
/// a codeword carries an extra phase `r * pi / M` so the dimensions are not
/// plain copies of one another.
pub fn build_codebook_set(mapping: MappingMatrix, size: usize) -> Result<ScmaCodebookSet> {
    if size < 2 || !size.is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "codebook size M = {size} must be a power of two and at least 2"
        )));
    }
    let mother = mother_constellation(size);
    let layers = mapping.layers();
    let scale = 1.0 / (mapping.nonzeros() as f64).sqrt();
    let codewords = (0..layers)
        .map(|j| {
            let theta = j as f64 * PI / (2.0 * layers as f64);
            let support = mapping.support(j);
            (0..size)
                .map(|m| {
                    let mut cw = vec![Complex64::new(0.0, 0.0); mapping.resources()];
                    for (r, &row) in support.iter().enumerate() {
                        let phase = theta + r as f64 * PI / size as f64;
                        cw[row] = mother[m] * Complex64::from_polar(scale, phase);
                    }
                    cw
                })
                .collect()
        })
        .collect();
    Ok(ScmaCodebookSet {
        mapping,
        size,
        codewords,
    })
}

impl ScmaCodebookSet {
    pub fn mapping(&self) -> &MappingMatrix {
        &self.mapping
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn layers(&self) -> usize {
        self.mapping.layers()
    }

    pub fn resources(&self) -> usize {
        self.mapping.resources()
    }

    pub fn bits_per_block(&self) -> usize {
        self.size.trailing_zeros() as usize
    }

    pub fn codeword(&self, layer: usize, index: usize) -> &[Complex64] {
        &self.codewords[layer][index]
    }

    pub fn layer(&self, layer: usize) -> &[Vec<Complex64>] {
        &self.codewords[layer]
    }

    /// Codeword of `layer` selected by the big-endian value of `block`.
    pub fn encode_block(&self, layer: usize, block: &SymbolBlock) -> Result<&[Complex64]> {
        if layer >= self.layers() {
            return Err(Error::OutOfRange {
                context: "codebook layer",
                index: layer,
                limit: self.layers(),
            });
        }
        if block.len() != self.bits_per_block() {
            return Err(Error::DimensionMismatch {
                context: "symbol block length",
                expected: self.bits_per_block(),
                actual: block.len(),
            });
        }
        Ok(&self.codewords[layer][block.index()])
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CodebookFile::from(self))?)
    }

    /// Parse a codebook document, checking it against the mapping it implies.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CodebookFile = serde_json::from_str(text)?;
        let mapping = build_mapping_matrix(file.resources, file.layers, file.nonzeros)?;
        if file.size < 2 || !file.size.is_power_of_two() {
            return Err(Error::InvalidParameter(format!(
                "M = {} is not a power of two",
                file.size
            )));
        }
        if file.codewords.len() != file.layers * file.size {
            return Err(Error::DimensionMismatch {
                context: "codeword count",
                expected: file.layers * file.size,
                actual: file.codewords.len(),
            });
        }
        let mut codewords = vec![Vec::with_capacity(file.size); file.layers];
        for (i, cw) in file.codewords.into_iter().enumerate() {
            if cw.len() != file.resources {
                return Err(Error::DimensionMismatch {
                    context: "codeword length",
                    expected: file.resources,
                    actual: cw.len(),
                });
            }
            let j = i / file.size;
            for r in 0..file.resources {
                if mapping.entry(r, j) == 0 && cw[r] != Complex64::new(0.0, 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "codeword {i} is nonzero on row {r} outside the support of layer {j}"
                    )));
                }
            }
            codewords[j].push(cw);
        }
        Ok(Self {
            mapping,
            size: file.size,
            codewords,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    #[serde(rename = "K_d")]
    resources: usize,
    #[serde(rename = "J")]
    layers: usize,
    #[serde(rename = "N_m")]
    nonzeros: usize,
    #[serde(rename = "M")]
    size: usize,
    /// Layer-major: entry `j * M + m` is codeword `m` of layer `j`.
    codewords: Vec<Vec<Complex64>>,
}

impl From<&ScmaCodebookSet> for CodebookFile {
    fn from(c: &ScmaCodebookSet) -> Self {
        Self {
            resources: c.resources(),
            layers: c.layers(),
            nonzeros: c.mapping.nonzeros(),
            size: c.size,
            codewords: c.codewords.iter().flatten().cloned().collect(),
        }
    }
}
