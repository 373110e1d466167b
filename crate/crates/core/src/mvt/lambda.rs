//! Worst-case null point λ = argsup_{θ ∉ (−c₀, c₀)^K} ω_K(θ).
//!
//! For rejection regions symmetric about zero the supremum lies on a face
//! {θ_h = ±c₀, θ_{−h} ∈ [−c₀, c₀]^{K−1}} and ω_K(θ) = ω_K(−θ), so only the K
//! faces with θ_h = +c₀ are searched.

use serde::{Deserialize, Serialize};

use crate::roots::golden_max;

/// Relative per-coordinate tolerance of the face ascent (times c₀).
pub const COORD_TOL: f64 = 1e-6;
const MAX_SWEEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaResult {
    pub lambda: Vec<f64>,
    pub objective: f64,
    /// Index h of the boundary coordinate, |λ_h| = c₀.
    pub face: usize,
    /// Sign of λ_h.
    pub sign: i8,
    /// Number of objective evaluations.
    pub candidates_evaluated: usize,
    /// Every coordinate ascent stopped before the sweep cap.
    pub converged: bool,
}

impl LambdaResult {
    /// True when λ = ±c₀ e_h.
    pub fn is_axis(&self) -> bool {
        self.lambda.iter().enumerate().all(|(i, &v)| i == self.face || v == 0.0)
    }
}

/// Maximizes `objective` over the boundary of (−c₀, c₀)^K.
///
/// Candidates: all 2K axis points ±c₀e_k; then, on every face θ_h = +c₀,
/// projected coordinate ascent (golden section per coordinate) started
/// from the axis point and from the other coordinates at ±c₀/2. With a
/// single free coordinate one golden-section pass covers the face.
pub fn search_faces<F>(k: usize, c0: f64, mut objective: F) -> LambdaResult
where
    F: FnMut(&[f64]) -> f64,
{
    let mut evals = 0usize;
    let mut best = LambdaResult {
        lambda: vec![0.0; k],
        objective: f64::NEG_INFINITY,
        face: 0,
        sign: 1,
        candidates_evaluated: 0,
        converged: true,
    };
    let consider = |theta: &[f64], value: f64, face: usize, best: &mut LambdaResult| {
        // Ties keep the earlier candidate, so axis points win exact ties.
        if value > best.objective {
            best.lambda = theta.to_vec();
            best.objective = value;
            best.face = face;
            best.sign = if theta[face] < 0.0 { -1 } else { 1 };
        }
    };

    let mut theta = vec![0.0; k];
    for h in 0..k {
        for s in [1.0, -1.0] {
            theta.iter_mut().for_each(|v| *v = 0.0);
            theta[h] = s * c0;
            let v = objective(&theta);
            evals += 1;
            consider(&theta, v, h, &mut best);
        }
    }
    if k == 1 {
        best.candidates_evaluated = evals;
        return best;
    }

    let tol = COORD_TOL * c0;
    for h in 0..k {
        let starts: &[f64] = if k == 2 { &[0.0] } else { &[0.0, 0.5, -0.5] };
        for &start in starts {
            theta.iter_mut().for_each(|v| *v = start * c0);
            theta[h] = c0;
            let mut current = objective(&theta);
            evals += 1;
            let mut sweeps = 0;
            loop {
                let before = current;
                for j in (0..k).filter(|&j| j != h) {
                    let mut probe = theta.clone();
                    let (x, fx, n) = golden_max(
                        |x| {
                            probe[j] = x;
                            objective(&probe)
                        },
                        -c0,
                        c0,
                        tol,
                    );
                    evals += n;
                    if fx > current {
                        theta[j] = x;
                        current = fx;
                    }
                }
                sweeps += 1;
                if k == 2 || current - before <= 1e-14 * current.abs().max(1e-300) {
                    break;
                }
                if sweeps >= MAX_SWEEPS {
                    best.converged = false;
                    break;
                }
            }
            consider(&theta, current, h, &mut best);
        }
    }
    best.candidates_evaluated = evals;
    best
}
