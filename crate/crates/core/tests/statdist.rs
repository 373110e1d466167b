use ctost::statdist::chi::{chi2_quantile, SigmaHatLaw};
use ctost::statdist::mvn::{bvn_cdf, mvn_rect_prob, MvnEngine, MvnRect, DEFAULT_TOL};
use ctost::statdist::special::{erf, erfc, ln_gamma, reg_inc_beta, reg_inc_gamma_lower};
use ctost::statdist::wishart::{covariance_factor, sample_wishart};
use ctost::statdist::{
    norm_cdf, norm_interval, norm_quantile, rng::stream_rng, sample_wishart_diag, sigma_hat_density,
    sigma_hat_expect, t_quantile, t_sf,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn close(got: f64, want: f64, rel: f64, abs: f64) -> bool {
    (got - want).abs() <= abs.max(rel * want.abs())
}

#[test]
fn special_functions_match_high_precision_oracle() {
    let mut rdr = csv::Reader::from_path(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/special_oracle.csv")).unwrap();
    let mut checked = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let args: Vec<f64> = rec[1].split(';').map(|s| s.parse().unwrap()).collect();
        let want: f64 = rec[2].parse().unwrap();
        let (got, rel, abs) = match &rec[0] {
            "erf" => (erf(args[0]), 1e-12, 1e-300),
            "erfc" => (erfc(args[0]), 1e-12, 1e-300),
            "lgamma" => (ln_gamma(args[0]), 1e-12, 1e-14),
            "norm_cdf" => (norm_cdf(args[0]), 1e-12, 1e-300),
            "norm_quantile" => (norm_quantile(args[0]).unwrap(), 1e-12, 1e-15),
            "t_sf" => (t_sf(args[0], args[1]), 1e-12, 1e-300),
            "t_quantile" => (t_quantile(args[0], args[1] as u32).unwrap(), 1e-12, 1e-15),
            "reg_inc_beta" => (reg_inc_beta(args[0], args[1], args[2]), 1e-12, 1e-300),
            "reg_inc_gamma_lower" => (reg_inc_gamma_lower(args[0], args[1]), 1e-12, 1e-300),
            "chi2_quantile" => (chi2_quantile(args[0], args[1]).unwrap(), 1e-11, 1e-300),
            "bvn_cdf" => (bvn_cdf(args[0], args[1], args[2]), 1e-12, 1e-14),
            other => panic!("unknown oracle function {other}"),
        };
        assert!(close(got, want, rel, abs), "{}({}) = {got:e}, oracle {want:e}", &rec[0], &rec[1]);
        checked += 1;
    }
    assert!(checked > 100);
}

#[test]
fn normal_examples() {
    assert_eq!(norm_cdf(0.0), 0.5);
    assert!((norm_quantile(0.95).unwrap() - 1.6449).abs() < 1e-4);
    assert!(norm_quantile(1.5).is_err());
}

#[test]
fn t_quantile_case_study_interval() {
    let t = t_quantile(0.05, 11).unwrap();
    assert!((t - 1.7959).abs() < 5e-4);
    let (lo, hi) = (0.0976 - t * 0.3305, 0.0976 + t * 0.3305);
    assert!((lo + 0.496).abs() < 1e-3 && (hi - 0.691).abs() < 1e-3, "[{lo}, {hi}]");
}

#[test]
fn sigma_hat_density_moments() {
    let law = SigmaHatLaw::new(0.1, 20).unwrap();
    let mass = sigma_hat_expect(&law, f64::INFINITY, |_| 1.0);
    // The quadrature window omits exactly 1e-10 of the mass.
    assert!((mass - 1.0).abs() < 1e-8, "{mass}");
    let m2 = sigma_hat_expect(&law, f64::INFINITY, |x| x * x);
    assert!((m2 - 0.01).abs() < 1e-8, "{m2}");
    assert!(sigma_hat_density(-0.1, &law).is_err());

    // Mode from a fine grid search agrees with the analytic stationary point.
    let (mut best, mut arg) = (0.0, 0.0);
    for i in 1..200_000 {
        let x = 0.05 + i as f64 * 5e-7;
        let d = law.density(x).unwrap();
        if d > best {
            best = d;
            arg = x;
        }
    }
    assert!((arg - 0.1 * (19.0f64 / 20.0).sqrt()).abs() < 1e-6);
    assert!((law.mode() - arg).abs() < 1e-6);
}

#[test]
fn sigma_hat_quadrature_matches_monte_carlo() {
    let law = SigmaHatLaw::new(0.12, 7).unwrap();
    let g = |x: f64| (8.0 * x).sin().powi(2) + x.min(0.1);
    let q = sigma_hat_expect(&law, f64::INFINITY, g);
    let chi = rand_distr::ChiSquared::new(7.0).unwrap();
    let mut rng = stream_rng(2024, 0);
    let n = 1_000_000;
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let v = g(law.from_chi2(chi.sample(&mut rng)));
        s += v;
        s2 += v * v;
    }
    let mean = s / n as f64;
    let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((q - mean).abs() < 3.0 * se, "quad {q} mc {mean} se {se}");
}

fn rect(lo: &[f64], hi: &[f64], cov: DMatrix<f64>) -> MvnRect {
    MvnRect { lower: lo.to_vec(), upper: hi.to_vec(), mean: vec![0.0; lo.len()], covariance: cov }
}

#[test]
fn mvn_examples() {
    let p = mvn_rect_prob(&rect(&[-1.96], &[1.96], DMatrix::identity(1, 1)), DEFAULT_TOL, 1).unwrap();
    assert!((p.value - 0.95).abs() < 1e-4);

    let p = mvn_rect_prob(&rect(&[-1.0; 2], &[1.0; 2], DMatrix::identity(2, 2)), DEFAULT_TOL, 1).unwrap();
    let m = norm_cdf(1.0) - norm_cdf(-1.0);
    assert!((p.value - m * m).abs() < 1e-4 && (p.value - 0.4661).abs() < 1e-4);

    // Dense midpoint grid on [−1, 1]² for ρ = 0.5.
    let r: f64 = 0.5;
    let n = 2000;
    let h = 2.0 / n as f64;
    let det = 1.0 - r * r;
    let norm = 1.0 / (std::f64::consts::TAU * det.sqrt());
    let mut grid = 0.0;
    for i in 0..n {
        let x = -1.0 + (i as f64 + 0.5) * h;
        for j in 0..n {
            let y = -1.0 + (j as f64 + 0.5) * h;
            grid += norm * (-(x * x - 2.0 * r * x * y + y * y) / (2.0 * det)).exp();
        }
    }
    grid *= h * h;
    let cov = DMatrix::from_row_slice(2, 2, &[1.0, r, r, 1.0]);
    let p = mvn_rect_prob(&rect(&[-1.0; 2], &[1.0; 2], cov), DEFAULT_TOL, 1).unwrap();
    assert!((p.value - grid).abs() < 2e-4, "{} vs grid {grid}", p.value);
}

#[test]
fn mvn_diagonal_factorizes() {
    for k in [1usize, 2, 4] {
        let lo: Vec<f64> = (0..k).map(|i| -0.5 - 0.3 * i as f64).collect();
        let hi: Vec<f64> = (0..k).map(|i| 0.8 + 0.2 * i as f64).collect();
        let sd: Vec<f64> = (0..k).map(|i| 0.5 + 0.25 * i as f64).collect();
        let cov = DMatrix::from_fn(k, k, |i, j| if i == j { sd[i] * sd[i] } else { 0.0 });
        let p = mvn_rect_prob(&rect(&lo, &hi, cov), DEFAULT_TOL, 5).unwrap();
        let want: f64 = (0..k).map(|i| norm_interval(lo[i] / sd[i], hi[i] / sd[i])).product();
        assert!((p.value - want).abs() < DEFAULT_TOL);
    }
}

#[test]
fn mvn_general_matrix_matches_monte_carlo() {
    let c = DMatrix::from_row_slice(
        4,
        4,
        &[1.0, 0.4, 0.2, -0.1, 0.4, 1.0, 0.5, 0.0, 0.2, 0.5, 1.0, 0.3, -0.1, 0.0, 0.3, 1.0],
    );
    let lo = [-1.0, -0.4, -2.0, -0.8];
    let hi = [1.2, 1.5, 0.7, 0.9];
    let p = MvnEngine::new(&c, 77).unwrap().prob(&lo, &hi, 1e-5);
    let chol = c.clone().cholesky().unwrap().l();
    let mut rng = stream_rng(3, 3);
    let n = 400_000;
    let mut hits = 0usize;
    for _ in 0..n {
        let z = DVector::from_fn(4, |_, _| StandardNormal.sample(&mut rng));
        let x = &chol * z;
        if (0..4).all(|i| x[i] > lo[i] && x[i] < hi[i]) {
            hits += 1;
        }
    }
    let ph = hits as f64 / n as f64;
    let se = (ph * (1.0 - ph) / n as f64).sqrt();
    assert!((p.value - ph).abs() < 4.0 * se, "{} vs {ph}", p.value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mvn_negation_symmetry(
        r in -0.9f64..0.9,
        a in proptest::collection::vec(-2.0f64..0.0, 3),
        w in proptest::collection::vec(0.1f64..3.0, 3),
        mu in proptest::collection::vec(-0.5f64..0.5, 3),
    ) {
        for k in [2usize, 3] {
            let rr = if k == 3 { r.abs() } else { r };
            let cov = DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { rr });
            let lo: Vec<f64> = a[..k].to_vec();
            let hi: Vec<f64> = (0..k).map(|i| a[i] + w[i]).collect();
            let p = mvn_rect_prob(&MvnRect { lower: lo.clone(), upper: hi.clone(), mean: mu[..k].to_vec(), covariance: cov.clone() }, 1e-6, 9).unwrap();
            let neg = MvnRect {
                lower: hi.iter().map(|v| -v).collect(),
                upper: lo.iter().map(|v| -v).collect(),
                mean: mu[..k].iter().map(|v| -v).collect(),
                covariance: cov,
            };
            let q = mvn_rect_prob(&neg, 1e-6, 9).unwrap();
            prop_assert!((p.value - q.value).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&p.value));
        }
    }

    #[test]
    fn density_nonnegative(sigma in 0.01f64..1.0, nu in 1u32..200, x in 1e-6f64..3.0) {
        let law = SigmaHatLaw::new(sigma, nu).unwrap();
        prop_assert!(law.density(x).unwrap() >= 0.0);
    }
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
}

fn corr(x: &[f64], y: &[f64]) -> f64 {
    let (mx, vx) = mean_var(x);
    let (my, vy) = mean_var(y);
    let n = x.len() as f64;
    x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / ((n - 1.0) * (vx * vy).sqrt())
}

#[test]
fn wishart_univariate_mean() {
    let d = sample_wishart_diag(&[0.2], &DMatrix::identity(1, 1), 9, 100_000, 4).unwrap();
    let s2: Vec<f64> = d.iter().map(|v| v[0] * v[0]).collect();
    let (m, v) = mean_var(&s2);
    assert!((m - 0.04).abs() < 3.0 * (v / s2.len() as f64).sqrt());
}

#[test]
fn wishart_marginals_pass_ks() {
    // ν₂σ̂²/σ² against the χ²(ν₂) cdf, per coordinate.
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]);
    let nu = 6u32;
    let n = 20_000;
    let d = sample_wishart_diag(&[0.1, 0.3], &r, nu, n, 8).unwrap();
    for (k, s) in [0.1, 0.3].iter().enumerate() {
        let mut u: Vec<f64> = d
            .iter()
            .map(|v| ctost::statdist::chi::chi2_cdf(nu as f64 * v[k] * v[k] / (s * s), nu as f64))
            .collect();
        u.sort_by(f64::total_cmp);
        let dn = u
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        // 1% critical value of the Kolmogorov statistic.
        assert!(dn < 1.628 / (n as f64).sqrt(), "k={k} D={dn}");
    }
}

#[test]
fn wishart_diagonal_correlation() {
    let n = 40_000;
    let nu = 10;
    for &rho in &[0.0, 0.9] {
        let r = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
        let d = sample_wishart_diag(&[0.1, 0.1], &r, nu, n, 21).unwrap();
        let x: Vec<f64> = d.iter().map(|v| v[0] * v[0]).collect();
        let y: Vec<f64> = d.iter().map(|v| v[1] * v[1]).collect();
        let c = corr(&x, &y);
        // Fisher-z standard error of a sample correlation.
        let se = (1.0 - c * c) / (n as f64).sqrt();

        // Independent oracle: Σ̂ as the average of ν outer products of N(0, Σ) draws.
        let chol = covariance_factor(&[0.1, 0.1], &r).unwrap();
        let mut rng = stream_rng(99, 1);
        let mut ox = Vec::with_capacity(n);
        let mut oy = Vec::with_capacity(n);
        for _ in 0..n {
            let (mut a, mut b) = (0.0, 0.0);
            for _ in 0..nu {
                let z = DVector::from_fn(2, |_, _| StandardNormal.sample(&mut rng));
                let v = &chol * z;
                a += v[0] * v[0];
                b += v[1] * v[1];
            }
            ox.push(a / nu as f64);
            oy.push(b / nu as f64);
        }
        let oc = corr(&ox, &oy);
        if rho == 0.0 {
            assert!(c.abs() < 3.0 * se, "corr {c}");
        } else {
            assert!(c > 0.0);
            // Exact value for the Wishart diagonal: ρ².
            assert!((c - oc).abs() < 3.0 * (se * se * 2.0).sqrt(), "{c} vs oracle {oc}");
            assert!((c - rho * rho).abs() < 3.0 * se, "{c}");
        }
    }
}

#[test]
fn wishart_full_matrix_mean() {
    let r = DMatrix::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.3, 1.0, 0.5, -0.2, 0.5, 1.0]);
    let chol = covariance_factor(&[1.0, 2.0, 0.5], &r).unwrap();
    let cov = &chol * chol.transpose();
    let mut rng = stream_rng(5, 5);
    let n = 50_000;
    let mut acc = DMatrix::<f64>::zeros(3, 3);
    for _ in 0..n {
        acc += sample_wishart(&chol, 7, &mut rng);
    }
    acc /= n as f64;
    for i in 0..3 {
        for j in 0..3 {
            // Var of a Wishart mean entry: (Σ_ij² + Σ_ii Σ_jj)/(ν n).
            let se = ((cov[(i, j)].powi(2) + cov[(i, i)] * cov[(j, j)]) / (7.0 * n as f64)).sqrt();
            assert!((acc[(i, j)] - cov[(i, j)]).abs() < 4.0 * se, "({i},{j})");
        }
    }
}
