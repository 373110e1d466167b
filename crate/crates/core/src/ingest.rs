//! Canonical summaries from paired measurements or summary statistics.

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mvt::MvtSummary;
use crate::univariate::UnivSummary;

const CASE_STUDY_JSON: &str = include_str!("../data/case_study.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Positive measurements; differences are taken on the log scale.
    #[default]
    Raw,
    /// Measurements already on the log scale.
    Log,
}

impl std::str::FromStr for Scale {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Scale::Raw),
            "log" => Ok(Scale::Log),
            _ => Err(Error::invalid(format!("unknown scale {s:?}; expected raw or log"))),
        }
    }
}

/// One row of the paired-data CSV. Empty or `NA` cells are missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedRow {
    pub subject: String,
    pub dimension: String,
    pub reference: Option<f64>,
    pub test: Option<f64>,
}

/// Paired (reference, test) measurements per subject and dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedDataset {
    pub rows: Vec<PairedRow>,
    pub scale: Scale,
}

fn parse_cell(s: &str) -> Result<Option<f64>> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    t.parse::<f64>().map(Some).map_err(|_| Error::invalid(format!("cannot parse {t:?} as a number")))
}

impl PairedDataset {
    /// Reads CSV with header `subject,dimension,reference,test`.
    pub fn read_csv<R: Read>(r: R, scale: Scale) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header != ["subject", "dimension", "reference", "test"] {
            return Err(Error::invalid(format!(
                "expected header subject,dimension,reference,test, got {}",
                header.join(",")
            )));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            rows.push(PairedRow {
                subject: rec[0].to_string(),
                dimension: rec[1].to_string(),
                reference: parse_cell(&rec[2])?,
                test: parse_cell(&rec[3])?,
            });
        }
        Ok(Self { rows, scale })
    }

    pub fn load(path: &Path, scale: Scale) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, scale)
    }
}

/// Summary plus what happened on the way.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summarized {
    pub summary: MvtSummary,
    /// Dimension labels in first-appearance order.
    pub dimensions: Vec<String>,
    /// Subjects kept after listwise deletion.
    pub n: usize,
    pub dropped_subjects: Vec<String>,
    pub warnings: Vec<String>,
}

impl Summarized {
    /// The univariate summary when K = 1.
    pub fn univariate(&self) -> Option<UnivSummary> {
        (self.summary.dim() == 1).then(|| UnivSummary {
            theta_hat: self.summary.theta_hat[0],
            sigma1_hat: self.summary.sigma1_hat[0],
            nu2: self.summary.nu2,
        })
    }
}

/// θ̂_k = mean of d_k, σ̂_{1,k} = sd(d_k)/√n, ν₂ = n − 1, R̂ = sample
/// correlation of the difference vectors. Subjects missing any dimension
/// are dropped.
pub fn summarize(data: &PairedDataset) -> Result<Summarized> {
    let mut dims: Vec<String> = Vec::new();
    let mut dim_index = HashMap::new();
    let mut subjects: BTreeMap<&str, Vec<Option<f64>>> = BTreeMap::new();
    for row in &data.rows {
        if !dim_index.contains_key(&row.dimension) {
            dim_index.insert(row.dimension.clone(), dims.len());
            dims.push(row.dimension.clone());
        }
    }
    let k = dims.len();
    if k == 0 {
        return Err(Error::DegenerateData("no rows".into()));
    }
    for row in &data.rows {
        let j = dim_index[&row.dimension];
        let diff = match (row.reference, row.test) {
            (Some(r), Some(t)) => Some(match data.scale {
                Scale::Raw => {
                    if !(r > 0.0 && t > 0.0) {
                        return Err(Error::domain(format!(
                            "subject {} dimension {}: raw measurements must be positive",
                            row.subject, row.dimension
                        )));
                    }
                    t.ln() - r.ln()
                }
                Scale::Log => t - r,
            }),
            _ => None,
        };
        if diff.is_some_and(|d| !d.is_finite()) {
            return Err(Error::domain(format!("subject {}: non-finite measurement", row.subject)));
        }
        let slot = &mut subjects.entry(row.subject.as_str()).or_insert_with(|| vec![None; k])[j];
        if slot.is_some() {
            return Err(Error::invalid(format!("subject {} has two rows for dimension {}", row.subject, row.dimension)));
        }
        *slot = diff;
    }

    let mut warnings = Vec::new();
    let mut dropped = Vec::new();
    let mut d: Vec<Vec<f64>> = Vec::new();
    for (subject, v) in &subjects {
        if v.iter().all(Option::is_some) {
            d.push(v.iter().map(|x| x.expect("complete")).collect());
        } else {
            dropped.push(subject.to_string());
        }
    }
    let n = d.len();
    if !dropped.is_empty() {
        warnings.push(format!(
            "listwise deletion dropped {} incomplete subject(s); n = {n}",
            dropped.len()
        ));
    }
    if n < 2 {
        return Err(Error::DegenerateData(format!("need at least 2 complete pairs, got {n}")));
    }

    let nf = n as f64;
    let mean: Vec<f64> = (0..k).map(|j| d.iter().map(|r| r[j]).sum::<f64>() / nf).collect();
    let cov = DMatrix::from_fn(k, k, |a, b| d.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum::<f64>() / (nf - 1.0));
    let sd: Vec<f64> = (0..k).map(|j| cov[(j, j)].sqrt()).collect();
    for j in 0..k {
        let scale = d.iter().map(|r| r[j].abs()).fold(0.0, f64::max);
        if sd[j] <= 1e-12 * scale || sd[j] == 0.0 {
            return Err(Error::DegenerateData(format!("dimension {} has zero variance", dims[j])));
        }
    }
    let corr = DMatrix::from_fn(k, k, |a, b| if a == b { 1.0 } else { (cov[(a, b)] / (sd[a] * sd[b])).clamp(-1.0, 1.0) });
    let sigma1_hat = sd.iter().map(|s| s / nf.sqrt()).collect();
    let (summary, repair) = MvtSummary::with_repair(mean, sigma1_hat, corr, (n - 1) as u32)?;
    warnings.extend(repair);
    Ok(Summarized { summary, dimensions: dims, n, dropped_subjects: dropped, warnings })
}

/// Summary-statistics JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryJson {
    pub theta_hat: Vec<f64>,
    pub sigma1_hat: Vec<f64>,
    pub nu2: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlation: Option<Vec<Vec<f64>>>,
    #[serde(default = "log_scale")]
    pub scale: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<Vec<String>>,
}

fn log_scale() -> String {
    "log".into()
}

impl SummaryJson {
    pub fn from_summary(s: &MvtSummary) -> Self {
        let k = s.dim();
        Self {
            theta_hat: s.theta_hat.clone(),
            sigma1_hat: s.sigma1_hat.clone(),
            nu2: s.nu2,
            correlation: Some((0..k).map(|i| (0..k).map(|j| s.correlation_hat[(i, j)]).collect()).collect()),
            scale: log_scale(),
            dimensions: None,
        }
    }

    /// Canonical summary; a missing correlation means identity, reported
    /// as a warning when K > 1.
    pub fn to_summary(&self) -> Result<(MvtSummary, Vec<String>)> {
        if self.scale != "log" {
            return Err(Error::invalid("summary statistics must be on the log scale"));
        }
        let k = self.theta_hat.len();
        let mut warnings = Vec::new();
        let corr = match &self.correlation {
            Some(rows) => {
                if rows.len() != k || rows.iter().any(|r| r.len() != k) {
                    return Err(Error::Matrix(format!("correlation must be {k}x{k}")));
                }
                DMatrix::from_fn(k, k, |i, j| rows[i][j])
            }
            None => {
                if k > 1 {
                    warnings.push("no correlation supplied; assuming identity".into());
                }
                DMatrix::identity(k, k)
            }
        };
        let (s, repair) = MvtSummary::with_repair(self.theta_hat.clone(), self.sigma1_hat.clone(), corr, self.nu2)?;
        warnings.extend(repair);
        Ok((s, warnings))
    }
}

pub fn read_summary_json<R: Read>(r: R) -> Result<(MvtSummary, Vec<String>)> {
    let j: SummaryJson = serde_json::from_reader(r)?;
    j.to_summary()
}

/// The bundled four-layer skin case study (K = 4, ν₂ = 11, identity correlation).
pub fn load_case_study() -> MvtSummary {
    let j: SummaryJson = serde_json::from_str(CASE_STUDY_JSON).expect("bundled data parses");
    j.to_summary().expect("bundled data is valid").0
}

/// Layer names of the bundled case study.
pub fn case_study_dimensions() -> Vec<String> {
    let j: SummaryJson = serde_json::from_str(CASE_STUDY_JSON).expect("bundled data parses");
    j.dimensions.unwrap_or_default()
}
