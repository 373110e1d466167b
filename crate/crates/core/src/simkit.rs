//! Reproducible Monte Carlo experiments.
//!
//! Every replicate r of cell j draws from `substream_rng(seed, combine(h, j), r)`
//! where h is the configuration hash, so results do not depend on thread
//! count or scheduling. Within a replicate the same draws serve every
//! method and every θ (or κ) value, and rejections are aggregated as
//! integer counts.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{EquivalenceSpec, Method, DEFAULT_ALPHA0, DEFAULT_C0};
use crate::mvt::{ctost_mvt_adjust, search_faces, size_shared_t, MvtOptions, MvtSummary};
use crate::powerkernel::{is_identity, WishartEvaluator};
use crate::statdist::rng::{combine, substream_rng};
use crate::statdist::t_quantile;
use crate::statdist::wishart::{covariance_factor, sample_wishart};
use crate::univariate::{adjust, CalibrationOptions, CalibrationStrategy, CalibrationTable, UnivOptions};

pub const PLOT_HEADER: [&str; 11] =
    ["design", "K", "rho", "sigma_config", "nu2", "theta_or_kappa", "method", "rate", "stderr", "n", "seed"];

/// Wishart draws behind the worst-case search for t > 0.
pub const LAMBDA_DRAWS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    UnivariateSweep,
    MvtKappa,
}

impl Design {
    pub fn as_str(self) -> &'static str {
        match self {
            Design::UnivariateSweep => "univariate-sweep",
            Design::MvtKappa => "mvt-kappa",
        }
    }
}

impl std::str::FromStr for Design {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "univariate-sweep" => Ok(Design::UnivariateSweep),
            "mvt-kappa" => Ok(Design::MvtKappa),
            _ => Err(Error::invalid(format!("unknown design {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub design: Design,
    /// σ₁ values (univariate sweep).
    pub sigma_grid: Vec<f64>,
    /// (σ_a, σ_b) pairs (mvt-kappa); expanded by [`expand_sigma`].
    pub sigma_configs: Vec<[f64; 2]>,
    pub nu2_set: Vec<u32>,
    /// θ values (univariate sweep) or κ values (mvt-kappa).
    pub theta_or_kappa_grid: Vec<f64>,
    /// Dimensions K (mvt-kappa).
    pub dims: Vec<usize>,
    pub rho_set: Vec<f64>,
    pub methods: Vec<Method>,
    pub replicates: usize,
    pub seed: u64,
    pub c0: f64,
    pub alpha0: f64,
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

const SIGMA_CONFIGS: [[f64; 2]; 6] = [[0.08, 0.08], [0.12, 0.12], [0.16, 0.16], [0.08, 0.12], [0.08, 0.16], [0.12, 0.16]];

impl SimulationConfig {
    /// Desk-scale preset: minutes on one core.
    pub fn desk(design: Design) -> Self {
        match design {
            Design::UnivariateSweep => Self {
                design,
                sigma_grid: linspace(0.01, 0.2, 21),
                sigma_configs: Vec::new(),
                nu2_set: vec![10, 20, 40, 80],
                theta_or_kappa_grid: vec![DEFAULT_C0, 0.0],
                dims: vec![1],
                rho_set: vec![0.0],
                methods: vec![Method::Tost, Method::Ctost, Method::CtostStar],
                replicates: 10_000,
                seed: 0,
                c0: DEFAULT_C0,
                alpha0: DEFAULT_ALPHA0,
            },
            Design::MvtKappa => Self {
                design,
                sigma_grid: Vec::new(),
                sigma_configs: vec![SIGMA_CONFIGS[0]],
                nu2_set: vec![40],
                theta_or_kappa_grid: linspace(0.0, 1.2, 13),
                dims: vec![2],
                rho_set: vec![0.0, 0.5, 0.9],
                methods: vec![Method::Tost, Method::Ctost],
                replicates: 10_000,
                seed: 0,
                c0: DEFAULT_C0,
                alpha0: DEFAULT_ALPHA0,
            },
        }
    }

    /// Full-scale preset with the published grid sizes.
    pub fn full(design: Design) -> Self {
        let desk = Self::desk(design);
        match design {
            Design::UnivariateSweep => Self {
                sigma_grid: linspace(0.01, 0.2, 1000),
                nu2_set: vec![20, 40, 80],
                methods: vec![Method::Tost, Method::AlphaTost, Method::Ctost, Method::CtostStar],
                replicates: 100_000,
                ..desk
            },
            Design::MvtKappa => Self {
                sigma_configs: SIGMA_CONFIGS.to_vec(),
                nu2_set: vec![20, 40, 80],
                theta_or_kappa_grid: linspace(0.0, 1.2, 30),
                dims: vec![2, 4],
                replicates: 50_000,
                ..desk
            },
        }
    }

    pub fn spec(&self) -> Result<EquivalenceSpec> {
        EquivalenceSpec::new(self.c0, self.alpha0, Method::Ctost)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec()?;
        if self.replicates < 100 {
            return Err(Error::invalid("replicates must be at least 100"));
        }
        if self.replicates > u32::MAX as usize {
            return Err(Error::invalid("too many replicates"));
        }
        let nonempty = |ok: bool, what: &str| if ok { Ok(()) } else { Err(Error::invalid(format!("{what} must be nonempty"))) };
        nonempty(!self.nu2_set.is_empty(), "nu2_set")?;
        nonempty(!self.theta_or_kappa_grid.is_empty(), "theta_or_kappa_grid")?;
        nonempty(!self.methods.is_empty(), "methods")?;
        if self.nu2_set.contains(&0) {
            return Err(Error::domain("nu2 must be positive"));
        }
        if self.theta_or_kappa_grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("theta_or_kappa_grid must be finite"));
        }
        match self.design {
            Design::UnivariateSweep => {
                nonempty(!self.sigma_grid.is_empty(), "sigma_grid")?;
                if self.sigma_grid.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(Error::domain("sigma_grid entries must be positive"));
                }
            }
            Design::MvtKappa => {
                nonempty(!self.sigma_configs.is_empty(), "sigma_configs")?;
                nonempty(!self.dims.is_empty(), "dims")?;
                nonempty(!self.rho_set.is_empty(), "rho_set")?;
                if self.sigma_configs.iter().flatten().any(|&s| !(s > 0.0 && s.is_finite())) {
                    return Err(Error::domain("sigma_configs entries must be positive"));
                }
                if self.dims.iter().any(|&k| k < 2) {
                    return Err(Error::domain("mvt-kappa needs K >= 2"));
                }
                if self.theta_or_kappa_grid.iter().any(|&v| v < 0.0) {
                    return Err(Error::domain("kappa must be nonnegative"));
                }
                for m in &self.methods {
                    if !matches!(m, Method::Tost | Method::Ctost) {
                        return Err(Error::invalid(format!("method {m} is not supported by mvt-kappa")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    fn hash_word(&self) -> u64 {
        let json = serde_json::to_vec(self).expect("config serializes");
        let d = Sha256::digest(&json);
        u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
    }
}

/// Σ₁ standard errors for dimension `k`: the first ⌈k/2⌉ coordinates get σ_a.
pub fn expand_sigma(pair: [f64; 2], k: usize) -> Vec<f64> {
    let half = k.div_ceil(2);
    (0..k).map(|i| if i < half { pair[0] } else { pair[1] }).collect()
}

pub fn equicorrelation(k: usize, rho: f64) -> DMatrix<f64> {
    DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rho })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub design: Design,
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    pub sigma_config: String,
    pub nu2: u32,
    pub theta_or_kappa: f64,
    pub method: Method,
    pub rate: f64,
    pub stderr: f64,
    pub n: usize,
    pub seed: u64,
}

/// Worst-case null point used by one method in one mvt-kappa cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    #[serde(rename = "K")]
    pub k: usize,
    pub rho: f64,
    pub sigma_config: String,
    pub nu2: u32,
    pub method: Method,
    pub lambda: Vec<f64>,
    /// Size at λ under the true Σ₁.
    pub size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub config: SimulationConfig,
    pub records: Vec<CellRecord>,
    pub worst_cases: Vec<WorstCase>,
    /// Replicate-method pairs whose adjustment failed; counted as non-rejections.
    pub failures: u64,
    pub provenance: Provenance,
}

fn provenance(cfg: &SimulationConfig) -> Provenance {
    Provenance { seed: cfg.seed, config_hash: cfg.hash(), version: env!("CARGO_PKG_VERSION").to_string() }
}

fn binomial(count: u64, n: usize) -> (f64, f64) {
    let p = count as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn format_sigma(s: &[f64]) -> String {
    s.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("/")
}

/// Counts per slot plus failures, summed elementwise.
fn tally<F>(replicates: usize, slots: usize, f: F) -> (Vec<u64>, u64)
where
    F: Fn(u32, &mut [u64]) -> u64 + Sync,
{
    (0..replicates as u32)
        .into_par_iter()
        .fold(
            || (vec![0u64; slots], 0u64),
            |(mut acc, fails), r| {
                let extra = f(r, &mut acc);
                (acc, fails + extra)
            },
        )
        .reduce(
            || (vec![0u64; slots], 0u64),
            |(mut a, fa), (b, fb)| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                (a, fa + fb)
            },
        )
}

/// Size and power sweep over (σ₁, ν₂) cells for univariate procedures.
pub fn run_univariate_sweep(cfg: &SimulationConfig) -> Result<SimulationResult> {
    run_univariate_sweep_with(cfg, None)
}

/// As [`run_univariate_sweep`]; cTOST* reads α_c from `table` whenever the
/// table matches (c₀, α₀) and covers the drawn σ̂₁, and integrates otherwise.
pub fn run_univariate_sweep_with(cfg: &SimulationConfig, table: Option<&CalibrationTable>) -> Result<SimulationResult> {
    if cfg.design != Design::UnivariateSweep {
        return Err(Error::invalid("config design is not univariate-sweep"));
    }
    cfg.validate()?;
    let base = cfg.spec()?;
    let table = table.filter(|t| t.c0 == cfg.c0 && t.alpha0 == cfg.alpha0);
    let key = cfg.hash_word();
    let thetas = &cfg.theta_or_kappa_grid;
    let nm = cfg.methods.len();
    let mut records = Vec::new();
    let mut failures = 0;
    let cells: Vec<(f64, u32)> = cfg.sigma_grid.iter().flat_map(|&s| cfg.nu2_set.iter().map(move |&n| (s, n))).collect();
    for (j, &(sigma, nu2)) in cells.iter().enumerate() {
        let stream = combine(key, j as u64);
        let chi = ChiSquared::new(nu2 as f64).expect("positive df");
        let (counts, fails) = tally(cfg.replicates, nm * thetas.len(), |r, acc| {
            let mut rng = substream_rng(cfg.seed, stream, r);
            let z: f64 = StandardNormal.sample(&mut rng);
            let sigma_hat = sigma * (chi.sample(&mut rng) / nu2 as f64).sqrt();
            let mut fails = 0;
            for (m, &method) in cfg.methods.iter().enumerate() {
                let strategy = match table {
                    Some(t) if t.covers(sigma_hat, nu2) => CalibrationStrategy::Table(t),
                    _ => CalibrationStrategy::Quadrature,
                };
                let opts = UnivOptions { calibration: CalibrationOptions { strategy, iterate: false } };
                let margin = match adjust(sigma_hat, nu2, &base.with_method(method), &opts) {
                    Ok(a) => a.effective_margin(sigma_hat),
                    Err(_) => {
                        fails += 1;
                        continue;
                    }
                };
                for (i, &theta) in thetas.iter().enumerate() {
                    if (theta + sigma * z).abs() < margin {
                        acc[i * nm + m] += 1;
                    }
                }
            }
            fails
        });
        failures += fails;
        for (i, &theta) in thetas.iter().enumerate() {
            for (m, &method) in cfg.methods.iter().enumerate() {
                let (rate, stderr) = binomial(counts[i * nm + m], cfg.replicates);
                records.push(CellRecord {
                    design: cfg.design,
                    k: 1,
                    rho: 0.0,
                    sigma_config: format_sigma(&[sigma]),
                    nu2,
                    theta_or_kappa: theta,
                    method,
                    rate,
                    stderr,
                    n: cfg.replicates,
                    seed: cfg.seed,
                });
            }
        }
    }
    Ok(SimulationResult { config: cfg.clone(), records, worst_cases: Vec::new(), failures, provenance: provenance(cfg) })
}

/// Method-specific worst-case point under the true Σ₁.
///
/// TOST: face search of the Wishart-averaged ω_K at t = t_{α₀,ν₂}, c = c₀.
/// cTOST: λ from the fixed point run on the true Σ₁.
pub fn population_lambda(
    method: Method,
    sigma1: &[f64],
    correlation: &DMatrix<f64>,
    nu2: u32,
    spec: &EquivalenceSpec,
    seed: u64,
) -> Result<(Vec<f64>, f64)> {
    let k = sigma1.len();
    let s = MvtSummary::new(vec![0.0; k], sigma1.to_vec(), correlation.clone(), nu2)?;
    match method {
        Method::Tost => {
            let t = t_quantile(spec.alpha0, nu2)?;
            let eval = WishartEvaluator::new(sigma1, correlation, nu2, LAMBDA_DRAWS, seed)?;
            let c = vec![spec.c0; k];
            if is_identity(correlation) {
                let (size, lambda) = size_shared_t(&eval, &s, t, &c, spec.c0, 1e-7);
                Ok((lambda, size))
            } else {
                let tv = vec![t; k];
                let r = search_faces(k, spec.c0, |theta| eval.power(theta, &tv, &c, 1e-7));
                Ok((r.lambda, r.objective))
            }
        }
        Method::Ctost => {
            let adj = ctost_mvt_adjust(&s, spec, &MvtOptions { seed, ..MvtOptions::default() })?;
            Ok((adj.lambda.lambda, adj.global_size))
        }
        other => Err(Error::invalid(format!("method {other} is not supported by mvt-kappa"))),
    }
}

fn sample_correlation(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let k = s.nrows();
    let sd: Vec<f64> = (0..k).map(|i| s[(i, i)].sqrt()).collect();
    let r = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { s[(i, j)] / (sd[i] * sd[j]) });
    (sd, r)
}

/// Rejection rates along θ = κλ for each method's own λ.
pub fn run_mvt_kappa(cfg: &SimulationConfig) -> Result<SimulationResult> {
    if cfg.design != Design::MvtKappa {
        return Err(Error::invalid("config design is not mvt-kappa"));
    }
    cfg.validate()?;
    let base = cfg.spec()?;
    let key = cfg.hash_word();
    let kappas = &cfg.theta_or_kappa_grid;
    let nm = cfg.methods.len();
    let mut records = Vec::new();
    let mut worst_cases = Vec::new();
    let mut failures = 0;
    let mut cell = 0u64;
    for &k in &cfg.dims {
        for &rho in &cfg.rho_set {
            for &pair in &cfg.sigma_configs {
                for &nu2 in &cfg.nu2_set {
                    let stream = combine(key, cell);
                    cell += 1;
                    let sigma = expand_sigma(pair, k);
                    let corr = equicorrelation(k, rho);
                    let chol = covariance_factor(&sigma, &corr)?;
                    let sigma_config = format_sigma(&sigma);
                    let mut lambdas = Vec::with_capacity(nm);
                    for &method in &cfg.methods {
                        let (lambda, size) = population_lambda(method, &sigma, &corr, nu2, &base, stream)?;
                        worst_cases.push(WorstCase {
                            k,
                            rho,
                            sigma_config: sigma_config.clone(),
                            nu2,
                            method,
                            lambda: lambda.clone(),
                            size,
                        });
                        lambdas.push(lambda);
                    }
                    let t_tost = t_quantile(base.alpha0, nu2)?;
                    let opts = MvtOptions { seed: stream, ..MvtOptions::default() };
                    let (counts, fails) = tally(cfg.replicates, nm * kappas.len(), |r, acc| {
                        let mut rng = substream_rng(cfg.seed, stream, r);
                        let sigma_hat = sample_wishart(&chol, nu2, &mut rng);
                        let z = DVector::from_fn(k, |_, _| rng.sample::<f64, _>(StandardNormal));
                        let x = &chol * z;
                        let (sd, r_hat) = sample_correlation(&sigma_hat);
                        let mut fails = 0;
                        for (m, &method) in cfg.methods.iter().enumerate() {
                            let margins: Vec<f64> = match method {
                                Method::Tost => sd.iter().map(|s| base.c0 - t_tost * s).collect(),
                                _ => {
                                    let adj = MvtSummary::with_repair(vec![0.0; k], sd.clone(), r_hat.clone(), nu2)
                                        .and_then(|(s, _)| ctost_mvt_adjust(&s, &base, &opts));
                                    match adj {
                                        Ok(a) => a.c_star,
                                        Err(_) => {
                                            fails += 1;
                                            continue;
                                        }
                                    }
                                }
                            };
                            for (i, &kappa) in kappas.iter().enumerate() {
                                let inside = (0..k).all(|h| (kappa * lambdas[m][h] + x[h]).abs() < margins[h]);
                                if inside {
                                    acc[i * nm + m] += 1;
                                }
                            }
                        }
                        fails
                    });
                    failures += fails;
                    for (i, &kappa) in kappas.iter().enumerate() {
                        for (m, &method) in cfg.methods.iter().enumerate() {
                            let (rate, stderr) = binomial(counts[i * nm + m], cfg.replicates);
                            records.push(CellRecord {
                                design: cfg.design,
                                k,
                                rho,
                                sigma_config: sigma_config.clone(),
                                nu2,
                                theta_or_kappa: kappa,
                                method,
                                rate,
                                stderr,
                                n: cfg.replicates,
                                seed: cfg.seed,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(SimulationResult { config: cfg.clone(), records, worst_cases, failures, provenance: provenance(cfg) })
}

/// Runs the design named in the config.
pub fn run(cfg: &SimulationConfig, table: Option<&CalibrationTable>) -> Result<SimulationResult> {
    match cfg.design {
        Design::UnivariateSweep => run_univariate_sweep_with(cfg, table),
        Design::MvtKappa => run_mvt_kappa(cfg),
    }
}

/// Tidy CSV, one row per (cell, method), header [`PLOT_HEADER`].
pub fn write_plot_data<W: Write>(result: &SimulationResult, w: W) -> Result<()> {
    if result.records.is_empty() {
        return Err(Error::invalid("simulation result has no records"));
    }
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(PLOT_HEADER)?;
    for r in &result.records {
        wr.write_record([
            r.design.as_str().to_string(),
            r.k.to_string(),
            r.rho.to_string(),
            r.sigma_config.clone(),
            r.nu2.to_string(),
            r.theta_or_kappa.to_string(),
            r.method.as_str().to_string(),
            r.rate.to_string(),
            r.stderr.to_string(),
            r.n.to_string(),
            r.seed.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn emit_plot_data(result: &SimulationResult, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_plot_data(result, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expand_sigma_pairs() {
        assert_eq!(expand_sigma([0.08, 0.12], 2), vec![0.08, 0.12]);
        assert_eq!(expand_sigma([0.08, 0.12], 4), vec![0.08, 0.08, 0.12, 0.12]);
    }

    #[test]
    fn hash_depends_on_seed() {
        let a = SimulationConfig::desk(Design::UnivariateSweep);
        let b = SimulationConfig { seed: 1, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn validation() {
        let mut c = SimulationConfig::desk(Design::MvtKappa);
        c.methods.push(Method::CtostStar);
        assert!(c.validate().is_err());
        let c = SimulationConfig { replicates: 10, ..SimulationConfig::desk(Design::UnivariateSweep) };
        assert!(c.validate().is_err());
    }
}
