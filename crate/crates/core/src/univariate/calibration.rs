//! Small-sample calibration of the cTOST level (cTOST*).
//!
//! The plug-in margin ĉ(0, σ̂₁, α₀) has size above α₀ once the noise in σ̂₁
//! is accounted for. The calibrated level α_c is the root in γ of
//! E[ω{c₀, σ̂₁, ν₂, 0, ĉ(0, σ̂₁⋆, γ)}] = α₀, where ν₂σ̂₁⋆²/σ̂₁² ~ χ²(ν₂),
//! approached by α ← α₀ + α − E(α) from α = α₀.

use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{ChiSquared, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_sigma_nu, matched_margin_t0, UnivAdjustment};
use crate::error::{Error, Result};
use crate::model::{EquivalenceSpec, Method};
use crate::powerkernel::omega_t0;
use crate::statdist::rng::{combine, stream_rng};
use crate::statdist::{sigma_hat_expect, SigmaHatLaw};

/// Fixed-point tolerance when iterating to convergence.
pub const CALIBRATION_TOL: f64 = 1e-5;
const MAX_CALIBRATION_ITER: usize = 100;
// α_c is kept away from zero so the margin solve stays well posed.
const ALPHA_C_FLOOR: f64 = 1e-6;

/// How E[ω] (or α_c itself) is obtained.
#[derive(Debug, Clone, Copy, Default)]
pub enum CalibrationStrategy<'a> {
    /// Gauss–Legendre over the conditional law of σ̂₁⋆.
    #[default]
    Quadrature,
    /// Average over `n` draws of σ̂₁⋆; the stream depends on (seed, σ̂₁, ν₂).
    MonteCarlo { n: usize, seed: u64 },
    /// Bilinear interpolation of a precomputed table of α_c.
    Table(&'a CalibrationTable),
}

impl CalibrationStrategy<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            CalibrationStrategy::Quadrature => "quadrature",
            CalibrationStrategy::MonteCarlo { .. } => "monte-carlo",
            CalibrationStrategy::Table(_) => "table-lookup",
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CalibrationOptions<'a> {
    pub strategy: CalibrationStrategy<'a>,
    /// Iterate the update until |Δα| < 1e-5 instead of stopping after one step.
    pub iterate: bool,
}

/// E[ω{c₀, σ̂₁, ν₂, 0, ĉ(0, σ̂₁⋆, γ)}] and its Monte Carlo standard error.
fn expected_size(sigma1_hat: f64, nu2: u32, c0: f64, gamma: f64, strategy: &CalibrationStrategy) -> Result<(f64, Option<f64>)> {
    let size_given = |star: f64| -> f64 {
        match matched_margin_t0(star, c0, gamma) {
            Ok(r) => omega_t0(c0, sigma1_hat, r.x),
            Err(_) => f64::NAN,
        }
    };
    match *strategy {
        CalibrationStrategy::Quadrature => {
            let law = SigmaHatLaw::new(sigma1_hat, nu2)?;
            let e = sigma_hat_expect(&law, f64::INFINITY, size_given);
            if !e.is_finite() {
                return Err(Error::NonConvergence {
                    solver: "ctost_star_quadrature",
                    iterations: 0,
                    last: gamma,
                    residual: f64::NAN,
                    trace: Vec::new(),
                });
            }
            Ok((e, None))
        }
        CalibrationStrategy::MonteCarlo { n, seed } => {
            if n < 2 {
                return Err(Error::invalid("Monte Carlo calibration needs at least 2 draws"));
            }
            let law = SigmaHatLaw::new(sigma1_hat, nu2)?;
            let chi = ChiSquared::new(nu2 as f64).map_err(|e| Error::domain(e.to_string()))?;
            let mut rng = stream_rng(combine(seed, sigma1_hat.to_bits()), nu2 as u64);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let v = size_given(law.from_chi2(chi.sample(&mut rng)));
                s += v;
                s2 += v * v;
            }
            let nf = n as f64;
            let mean = s / nf;
            let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
            Ok((mean, Some((var / nf).sqrt())))
        }
        CalibrationStrategy::Table(_) => Err(Error::invalid("table lookup has no expectation to evaluate")),
    }
}

/// cTOST*: calibrated level α_c and refined margin c̃(0) = ĉ(0, σ̂₁, α_c).
pub fn ctost_star_calibrate(
    sigma1_hat: f64,
    nu2: u32,
    spec: &EquivalenceSpec,
    opts: &CalibrationOptions,
) -> Result<UnivAdjustment> {
    spec.validate()?;
    check_sigma_nu(sigma1_hat, nu2)?;
    let a0 = spec.alpha0;
    let mut clamped = false;
    let mut iterations = 0;
    let mut converged = true;
    let mut mc_stderr = None;
    let alpha_c = if let CalibrationStrategy::Table(table) = opts.strategy {
        table.check_spec(spec)?;
        table.lookup(sigma1_hat, nu2)?
    } else {
        let mut a = a0;
        loop {
            let (e, se) = expected_size(sigma1_hat, nu2, spec.c0, a, &opts.strategy)?;
            let mut next = a0 + a - e;
            if next > a0 {
                next = a0;
                clamped = true;
            }
            if next < ALPHA_C_FLOOR {
                next = ALPHA_C_FLOOR;
                clamped = true;
            }
            iterations += 1;
            mc_stderr = se;
            let delta = next - a;
            a = next;
            if !opts.iterate || delta.abs() < CALIBRATION_TOL {
                break;
            }
            if iterations >= MAX_CALIBRATION_ITER {
                converged = false;
                break;
            }
        }
        a
    };
    let root = matched_margin_t0(sigma1_hat, spec.c0, alpha_c)?;
    Ok(UnivAdjustment {
        method: Method::CtostStar,
        t_used: 0.0,
        c_used: root.x,
        alpha_adj: None,
        alpha_c: Some(alpha_c),
        iterations,
        converged,
        residual: root.residual,
        saturated: false,
        clamped,
        mc_stderr,
    })
}

/// σ₁ grid 0.01, 0.015, …, 0.3.
pub fn default_sigma_grid() -> Vec<f64> {
    (0..=58).map(|i| (10 + 5 * i) as f64 / 1000.0).collect()
}

/// ν₂ grid 5, 6, …, 100.
pub fn default_nu_grid() -> Vec<u32> {
    (5..=100).collect()
}

pub const TABLE_HEADER: [&str; 6] = ["sigma1", "nu2", "alpha_c", "strategy", "c0", "alpha0"];

/// α_c tabulated over a (σ₁, ν₂) grid, stored σ₁-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub c0: f64,
    pub alpha0: f64,
    pub strategy: String,
    pub sigma_grid: Vec<f64>,
    pub nu_grid: Vec<u32>,
    pub alpha_c: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableRow {
    sigma1: f64,
    nu2: u32,
    alpha_c: f64,
    strategy: String,
    c0: f64,
    alpha0: f64,
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Computes α_c at every grid cell (in parallel; output independent of
/// the worker count).
pub fn build_calibration_table(
    spec: &EquivalenceSpec,
    sigma_grid: &[f64],
    nu_grid: &[u32],
    opts: &CalibrationOptions,
) -> Result<CalibrationTable> {
    spec.validate()?;
    if sigma_grid.is_empty() || nu_grid.is_empty() {
        return Err(Error::invalid("calibration grids must be nonempty"));
    }
    if sigma_grid.windows(2).any(|w| !(w[0] < w[1])) || nu_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("calibration grids must be strictly ascending"));
    }
    if !(sigma_grid[0] > 0.0) || nu_grid[0] == 0 {
        return Err(Error::domain("grid values must be positive"));
    }
    if matches!(opts.strategy, CalibrationStrategy::Table(_)) {
        return Err(Error::invalid("cannot build a table from a table"));
    }
    let cells: Vec<(f64, u32)> = sigma_grid.iter().flat_map(|&s| nu_grid.iter().map(move |&n| (s, n))).collect();
    let alpha_c = cells
        .par_iter()
        .map(|&(s, n)| ctost_star_calibrate(s, n, spec, opts).map(|a| a.alpha_c.expect("calibrated")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(CalibrationTable {
        c0: spec.c0,
        alpha0: spec.alpha0,
        strategy: opts.strategy.name().to_string(),
        sigma_grid: sigma_grid.to_vec(),
        nu_grid: nu_grid.to_vec(),
        alpha_c,
    })
}

impl CalibrationTable {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.alpha_c[i * self.nu_grid.len() + j]
    }

    fn check_spec(&self, spec: &EquivalenceSpec) -> Result<()> {
        if (self.c0 - spec.c0).abs() > 1e-12 || (self.alpha0 - spec.alpha0).abs() > 1e-12 {
            return Err(Error::invalid(format!(
                "calibration table was built for c0 = {}, alpha0 = {}",
                self.c0, self.alpha0
            )));
        }
        Ok(())
    }

    /// True when (σ₁, ν₂) lies inside the tabulated grid.
    pub fn covers(&self, sigma1: f64, nu2: u32) -> bool {
        self.lookup(sigma1, nu2).is_ok()
    }

    /// Bilinear interpolation in (ln σ₁, 1/ν₂).
    pub fn lookup(&self, sigma1: f64, nu2: u32) -> Result<f64> {
        let out = || Error::Extrapolation { sigma1, nu2 };
        let (i, wx) = bracket(&self.sigma_grid, sigma1, f64::ln).ok_or_else(out)?;
        let nus: Vec<f64> = self.nu_grid.iter().map(|&n| n as f64).collect();
        let (j, wy) = bracket(&nus, nu2 as f64, |v| 1.0 / v).ok_or_else(out)?;
        let i1 = (i + 1).min(self.sigma_grid.len() - 1);
        let j1 = (j + 1).min(self.nu_grid.len() - 1);
        let v = (1.0 - wx) * (1.0 - wy) * self.get(i, j)
            + wx * (1.0 - wy) * self.get(i1, j)
            + (1.0 - wx) * wy * self.get(i, j1)
            + wx * wy * self.get(i1, j1);
        Ok(v)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(TABLE_HEADER)?;
        for (i, &s) in self.sigma_grid.iter().enumerate() {
            for (j, &n) in self.nu_grid.iter().enumerate() {
                wtr.write_record([
                    fmt17(s),
                    n.to_string(),
                    fmt17(self.get(i, j)),
                    self.strategy.clone(),
                    fmt17(self.c0),
                    fmt17(self.alpha0),
                ])?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if header != TABLE_HEADER {
            return Err(Error::invalid(format!("unexpected calibration table header {header:?}")));
        }
        let rows: Vec<TableRow> = rdr.deserialize().collect::<std::result::Result<_, _>>()?;
        let first = rows.first().ok_or_else(|| Error::invalid("calibration table is empty"))?;
        let (c0, alpha0, strategy) = (first.c0, first.alpha0, first.strategy.clone());
        let mut sigma_grid: Vec<f64> = rows.iter().map(|r| r.sigma1).collect();
        sigma_grid.sort_by(f64::total_cmp);
        sigma_grid.dedup();
        let mut nu_grid: Vec<u32> = rows.iter().map(|r| r.nu2).collect();
        nu_grid.sort_unstable();
        nu_grid.dedup();
        if rows.len() != sigma_grid.len() * nu_grid.len() {
            return Err(Error::invalid("calibration table is not a full grid"));
        }
        let mut alpha_c = vec![f64::NAN; rows.len()];
        for r in &rows {
            if r.c0 != c0 || r.alpha0 != alpha0 {
                return Err(Error::invalid("calibration table mixes c0/alpha0 values"));
            }
            let i = sigma_grid.binary_search_by(|v| v.total_cmp(&r.sigma1)).expect("present");
            let j = nu_grid.binary_search(&r.nu2).expect("present");
            alpha_c[i * nu_grid.len() + j] = r.alpha_c;
        }
        if alpha_c.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("calibration table has duplicate cells"));
        }
        Ok(Self { c0, alpha0, strategy, sigma_grid, nu_grid, alpha_c })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

// Index i and weight w ∈ [0, 1] with x between grid[i] and grid[i+1] in the
// coordinate `map`; None outside the grid.
fn bracket(grid: &[f64], x: f64, map: impl Fn(f64) -> f64) -> Option<(usize, f64)> {
    let n = grid.len();
    let eps = 1e-12 * x.abs();
    if !(x >= grid[0] - eps && x <= grid[n - 1] + eps) {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let i = match grid.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => return Some((i, 0.0)),
        Err(i) => i.clamp(1, n - 1) - 1,
    };
    let (a, b) = (map(grid[i]), map(grid[i + 1]));
    Some((i, ((map(x) - a) / (b - a)).clamp(0.0, 1.0)))
}
