//! Cross-correlation analytics of a preamble set.
//!
//! Preambles are addressed by `(j, l)`: the `l`-th preamble (in increasing
//! original index) associated with codebook `j`. Report rows are numbered
//! `n = L*j + l` regardless of the association rule used to build the set.
//!
//! The inner product is conjugated, `<a, b> = sum_i a_i conj(b_i)`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Serialize, Serializer};

use crate::airlink::PreambleSet;
use crate::error::{Error, Result};

/// `|<a, b>|`.
pub fn pair_xcorr(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "cross-correlation operand",
            expected: a.len(),
            actual: b.len(),
        });
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y.conj()).sum::<Complex64>().norm())
}

/// `members[j][l]` is the original index of preamble `(j, l)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodebookLayout {
    members: Vec<Vec<usize>>,
}

impl CodebookLayout {
    /// Group a set by codebook; every codebook must hold the same count `L`.
    pub fn of(set: &PreambleSet) -> Result<Self> {
        let mut members = vec![Vec::new(); set.codebooks()];
        for (n, &j) in set.assoc().iter().enumerate() {
            members[j].push(n);
        }
        let per = members[0].len();
        if let Some(bad) = members.iter().position(|m| m.len() != per) {
            return Err(Error::InvalidParameter(format!(
                "codebook {bad} has {} preambles but codebook 0 has {per}; N = J*L is required",
                members[bad].len()
            )));
        }
        Ok(Self { members })
    }

    pub fn codebooks(&self) -> usize {
        self.members.len()
    }

    pub fn per_codebook(&self) -> usize {
        self.members[0].len()
    }

    pub fn users(&self) -> usize {
        self.codebooks() * self.per_codebook()
    }

    pub fn index(&self, j: usize, l: usize) -> Result<usize> {
        let row = self.members.get(j).ok_or(Error::OutOfRange {
            context: "codebook index j",
            index: j,
            limit: self.codebooks(),
        })?;
        row.get(l).copied().ok_or(Error::OutOfRange {
            context: "preamble index l",
            index: l,
            limit: self.per_codebook(),
        })
    }

    pub fn members(&self, j: usize) -> &[usize] {
        &self.members[j]
    }
}

fn row_sums(set: &PreambleSet, layout: &CodebookLayout, j: usize, l: usize) -> Result<(f64, f64, f64)> {
    let me = set.preamble(layout.index(j, l)?);
    let mut total = 0.0;
    for p in set.preambles() {
        total += pair_xcorr(me, p)?;
    }
    let own: f64 = layout
        .members(j)
        .iter()
        .map(|&m| pair_xcorr(me, set.preamble(m)))
        .sum::<Result<f64>>()?;
    let itself = pair_xcorr(me, me)?;
    Ok((total, own, itself))
}

/// Average correlation of `(j, l)` with every other preamble.
pub fn avg_xcorr(set: &PreambleSet, j: usize, l: usize) -> Result<f64> {
    let layout = CodebookLayout::of(set)?;
    let n = layout.users();
    if n < 2 {
        return Err(Error::Undefined("average cross-correlation needs N >= 2".into()));
    }
    let (total, _, itself) = row_sums(set, &layout, j, l)?;
    Ok((total - itself) / (n - 1) as f64)
}

/// Average correlation of `(j, l)` with the other preambles of codebook `j`.
pub fn intra_cb(set: &PreambleSet, j: usize, l: usize) -> Result<f64> {
    let layout = CodebookLayout::of(set)?;
    let per = layout.per_codebook();
    if per < 2 {
        return Err(Error::Undefined("intra-codebook correlation needs L >= 2".into()));
    }
    let (_, own, itself) = row_sums(set, &layout, j, l)?;
    Ok((own - itself) / (per - 1) as f64)
}

/// Average correlation of `(j, l)` with the preambles of all other codebooks.
pub fn inter_cb(set: &PreambleSet, j: usize, l: usize) -> Result<f64> {
    let layout = CodebookLayout::of(set)?;
    let (n, per) = (layout.users(), layout.per_codebook());
    if n == per {
        return Err(Error::Undefined("inter-codebook correlation needs N > L".into()));
    }
    let (total, own, _) = row_sums(set, &layout, j, l)?;
    Ok((total - own) / (n - per) as f64)
}

/// Aggregates at or below this are treated as zero by [`Gamma`].
pub const ZERO_TOL: f64 = 1e-12;

/// Heterogeneity ratio `R_intra / R_inter`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    Finite(f64),
    /// `R_inter` is zero while `R_intra` is not.
    Infinite,
    /// Both aggregates are zero.
    Undefined,
}

impl Gamma {
    pub fn from_aggregates(intra: f64, inter: f64) -> Self {
        match (intra <= ZERO_TOL, inter <= ZERO_TOL) {
            (true, true) => Gamma::Undefined,
            (false, true) => Gamma::Infinite,
            _ => Gamma::Finite(intra / inter),
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Gamma::Finite(g) => Some(g),
            Gamma::Infinite => Some(f64::INFINITY),
            Gamma::Undefined => None,
        }
    }
}

impl std::fmt::Display for Gamma {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Gamma::Finite(g) => write!(f, "{g}"),
            Gamma::Infinite => f.write_str("inf"),
            Gamma::Undefined => f.write_str("undefined"),
        }
    }
}

/// Finite values as numbers, `"inf"` for the infinite sentinel, `null` when undefined.
impl Serialize for Gamma {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Gamma::Finite(g) => s.serialize_f64(*g),
            Gamma::Infinite => s.serialize_str("inf"),
            Gamma::Undefined => s.serialize_none(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct XcorrRow {
    pub n: usize,
    pub j: usize,
    pub l: usize,
    pub avg_xcorr: f64,
    pub intra: f64,
    pub inter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XcorrSummary {
    #[serde(rename = "R_intra")]
    pub r_intra: f64,
    #[serde(rename = "R_inter")]
    pub r_inter: f64,
    pub gamma: Gamma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XcorrReport {
    pub rows: Vec<XcorrRow>,
    pub summary: XcorrSummary,
}

/// Per-preamble values for the whole set, plus aggregates averaged over
/// all `J*L` preambles.
pub fn xcorr_report(set: &PreambleSet) -> Result<XcorrReport> {
    let layout = CodebookLayout::of(set)?;
    let (codebooks, per, n) = (layout.codebooks(), layout.per_codebook(), layout.users());
    if per < 2 {
        return Err(Error::Undefined("heterogeneity needs L >= 2".into()));
    }
    if n == per {
        return Err(Error::Undefined("heterogeneity needs N > L".into()));
    }
    // |Gram| once, then row sums
    let gram: Vec<Vec<f64>> = set
        .preambles()
        .iter()
        .map(|a| {
            set.preambles()
                .iter()
                .map(|b| pair_xcorr(a, b))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(n);
    for j in 0..codebooks {
        for l in 0..per {
            let me = layout.index(j, l)?;
            let total: f64 = gram[me].iter().sum();
            let own: f64 = layout.members(j).iter().map(|&m| gram[me][m]).sum();
            let itself = gram[me][me];
            rows.push(XcorrRow {
                n: per * j + l,
                j,
                l,
                avg_xcorr: (total - itself) / (n - 1) as f64,
                intra: (own - itself) / (per - 1) as f64,
                inter: (total - own) / (n - per) as f64,
            });
        }
    }
    let r_intra = rows.iter().map(|r| r.intra).sum::<f64>() / n as f64;
    let r_inter = rows.iter().map(|r| r.inter).sum::<f64>() / n as f64;
    Ok(XcorrReport {
        rows,
        summary: XcorrSummary {
            r_intra,
            r_inter,
            gamma: Gamma::from_aggregates(r_intra, r_inter),
        },
    })
}

/// `R_intra / R_inter` of a set.
pub fn heterogeneity(set: &PreambleSet) -> Result<Gamma> {
    Ok(xcorr_report(set)?.summary.gamma)
}

impl XcorrReport {
    /// Columns `n, j, l, avg_xcorr, intra, inter`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.summary)?)
    }
}
