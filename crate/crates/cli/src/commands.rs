use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use ctost::ingest::{case_study_dimensions, load_case_study, read_summary_json, summarize, PairedDataset, Scale, SummaryJson};
use ctost::mvt::{alpha_tost_mvt_adjust, ctost_mvt_adjust, mvt_decide, MvtOptions, MvtSummary};
use ctost::powerkernel::{power_uni, size_uni, UnivPowerQuery};
use ctost::simkit::{self, Design, SimulationConfig, SimulationResult};
use ctost::univariate::{
    adjust, build_calibration_table, default_nu_grid, default_sigma_grid, univariate_decide, CalibrationOptions,
    CalibrationStrategy, CalibrationTable, UnivOptions, UnivSummary,
};
use ctost::{DecisionReport, EquivalenceSpec, Error, Method, Result};
use serde::Serialize;
use serde_json::json;

use crate::{Command, Common, DesignArg, Format, GridOpts, Input, MethodOpts, ScaleArg, StrategyArg};

pub fn report_error(kind: &str, message: &str, trace: &[String]) {
    let payload = json!({ "error": kind, "message": message, "trace": trace });
    let text = crate::json::to_string(&payload).expect("error payload serializes");
    let _ = io::stderr().write_all(text.as_bytes());
}

pub fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Assess { input, method, common } => assess(&input, &method, &common),
        Command::Adjust { input, method, common } => adjust_cmd(&input, &method, &common),
        Command::Power { theta, grid, common } => power_grid(Some(&theta), &grid, &common),
        Command::Size { grid, common } => power_grid(None, &grid, &common),
        Command::Simulate { design, desk: _, full, config, replicates, common } => {
            simulate(design, full, config.as_deref(), replicates, &common)
        }
        Command::Table { default_grid: _, sigma_grid, nu_grid, strategy, mc_draws, iterate, common } => {
            let sigma = sigma_grid.unwrap_or_else(default_sigma_grid);
            let nu = nu_grid.unwrap_or_else(default_nu_grid);
            table(&sigma, &nu, strategy, mc_draws, iterate, &common)
        }
        Command::CaseStudy { method, common } => {
            let input = Input {
                input: None,
                scale: ScaleArg::Raw,
                case_study: true,
                theta_hat: None,
                sigma1_hat: None,
                nu2: None,
            };
            assess(&input, &method, &common)
        }
    }
}

fn emit(common: &Common, text: &str) -> Result<()> {
    match &common.output {
        Some(p) => std::fs::write(p, text)?,
        None => io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    Ok(crate::json::to_string(v)?)
}

fn spec_of(common: &Common, method: Method) -> Result<EquivalenceSpec> {
    EquivalenceSpec::new(common.c0, common.alpha0, method)
}

fn load_table(common: &Common) -> Result<Option<CalibrationTable>> {
    match &common.table_path {
        None => Ok(None),
        Some(p) => {
            let t = CalibrationTable::load(p)?;
            if (t.c0 - common.c0).abs() > 1e-12 || (t.alpha0 - common.alpha0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "calibration table {} was built for c0 = {}, alpha0 = {}",
                    p.display(),
                    t.c0,
                    t.alpha0
                )));
            }
            Ok(Some(t))
        }
    }
}

/// Summary, dimension labels and ingest warnings.
struct Loaded {
    summary: MvtSummary,
    dimensions: Vec<String>,
    warnings: Vec<String>,
}

fn load_input(input: &Input) -> Result<Loaded> {
    let inline = input.theta_hat.is_some() || input.sigma1_hat.is_some() || input.nu2.is_some();
    let sources = [input.case_study, input.input.is_some(), inline].iter().filter(|&&b| b).count();
    if sources != 1 {
        return Err(Error::InvalidInput(
            "give exactly one of --case-study, --input, or --theta-hat/--sigma1-hat/--nu2".into(),
        ));
    }
    if input.case_study {
        return Ok(Loaded { summary: load_case_study(), dimensions: case_study_dimensions(), warnings: Vec::new() });
    }
    if let Some(path) = &input.input {
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        if is_json {
            let j: SummaryJson = serde_json::from_reader(io::BufReader::new(File::open(path)?))?;
            let dims = j.dimensions.clone().unwrap_or_else(|| default_labels(j.theta_hat.len()));
            let (summary, warnings) = j.to_summary()?;
            return Ok(Loaded { summary, dimensions: dims, warnings });
        }
        let scale = match input.scale {
            ScaleArg::Raw => Scale::Raw,
            ScaleArg::Log => Scale::Log,
        };
        let s = summarize(&PairedDataset::load(path, scale)?)?;
        return Ok(Loaded { summary: s.summary, dimensions: s.dimensions, warnings: s.warnings });
    }
    let (Some(theta), Some(sigma), Some(nu2)) = (input.theta_hat, input.sigma1_hat, input.nu2) else {
        return Err(Error::InvalidInput("--theta-hat, --sigma1-hat and --nu2 must be given together".into()));
    };
    let (summary, warnings) = read_summary_json(
        serde_json::to_string(&json!({ "theta_hat": [theta], "sigma1_hat": [sigma], "nu2": nu2 }))?.as_bytes(),
    )?;
    Ok(Loaded { summary, dimensions: default_labels(1), warnings })
}

fn default_labels(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("d{i}")).collect()
}

fn univariate_of(s: &MvtSummary) -> UnivSummary {
    UnivSummary { theta_hat: s.theta_hat[0], sigma1_hat: s.sigma1_hat[0], nu2: s.nu2 }
}

/// `--refined` turns cTOST into cTOST*.
fn effective_method(m: &MethodOpts) -> Method {
    let method: Method = m.method.into();
    if m.refined && method == Method::Ctost {
        Method::CtostStar
    } else {
        method
    }
}

/// Table lookup when the table covers (σ̂₁, ν₂), quadrature otherwise.
fn calibration<'a>(table: Option<&'a CalibrationTable>, sigma1_hat: f64, nu2: u32, iterate: bool) -> CalibrationOptions<'a> {
    let strategy = match table {
        Some(t) if t.covers(sigma1_hat, nu2) => CalibrationStrategy::Table(t),
        _ => CalibrationStrategy::Quadrature,
    };
    CalibrationOptions { strategy, iterate }
}

fn mvt_options(common: &Common, m: &MethodOpts) -> MvtOptions {
    MvtOptions { tol: common.tol, max_outer: common.max_outer, seed: common.seed, draws: m.draws }
}

fn decide(loaded: &Loaded, m: &MethodOpts, common: &Common) -> Result<DecisionReport> {
    let method = effective_method(m);
    let spec = spec_of(common, method)?;
    let s = &loaded.summary;
    let mut report = if s.dim() == 1 {
        let u = univariate_of(s);
        let table = load_table(common)?;
        let opts = UnivOptions { calibration: calibration(table.as_ref(), u.sigma1_hat, u.nu2, m.iterate) };
        univariate_decide(&u, &spec, &opts)?
    } else {
        mvt_decide(s, &spec, method, &mvt_options(common, m))?
    };
    let mut warnings = loaded.warnings.clone();
    warnings.append(&mut report.warnings);
    report.warnings = warnings;
    Ok(report)
}

fn assess(input: &Input, m: &MethodOpts, common: &Common) -> Result<()> {
    let loaded = load_input(input)?;
    let report = decide(&loaded, m, common)?;
    let text = match common.format {
        Format::Json => {
            let mut v = serde_json::to_value(&report)?;
            v["dimensions"] = json!(loaded.dimensions);
            to_json(&v)?
        }
        Format::Csv => report_csv(&report, &loaded.dimensions)?,
        Format::Text => report_text(&report, &loaded.dimensions),
    };
    emit(common, &text)
}

fn report_csv(r: &DecisionReport, dims: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dimension", "theta_hat", "sigma1_hat", "t", "c", "margin", "lower", "upper", "reject"])?;
    for k in 0..r.dimension {
        let (lo, hi) = match &r.intervals {
            Some(iv) => (crate::json::format_f64(iv[k].lower), crate::json::format_f64(iv[k].upper)),
            None => (String::new(), String::new()),
        };
        w.write_record([
            dims[k].clone(),
            crate::json::format_f64(r.theta_hat[k]),
            crate::json::format_f64(r.sigma1_hat[k]),
            crate::json::format_f64(r.t[k]),
            crate::json::format_f64(r.c[k]),
            crate::json::format_f64(r.margins[k]),
            lo,
            hi,
            r.reject_per_dimension[k].to_string(),
        ])?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8"))
}

fn report_text(r: &DecisionReport, dims: &[String]) -> String {
    let mut out = format!(
        "method: {}\nc0 = {:.6}, alpha0 = {}, nu2 = {}, K = {}\n",
        r.method, r.c0, r.alpha0, r.nu2, r.dimension
    );
    if let Some(g) = r.gamma {
        out += &format!("gamma = {g:.6}\n");
    }
    if let Some(a) = r.alpha_adjusted {
        out += &format!("adjusted alpha = {a:.6}\n");
    }
    if let Some(a) = r.alpha_c {
        out += &format!("calibrated alpha = {a:.6}\n");
    }
    for k in 0..r.dimension {
        let iv = r
            .intervals
            .as_ref()
            .map(|iv| format!("  [{:+.4}, {:+.4}]", iv[k].lower, iv[k].upper))
            .unwrap_or_default();
        out += &format!(
            "  {:<20} theta_hat {:+.4}  margin {:.4}{}  {}\n",
            dims[k],
            r.theta_hat[k],
            r.margins[k],
            iv,
            if r.reject_per_dimension[k] { "reject" } else { "retain" }
        );
    }
    for w in &r.warnings {
        out += &format!("warning: {w}\n");
    }
    out += &format!("verdict: {}\n", r.verdict);
    out
}

fn adjust_cmd(input: &Input, m: &MethodOpts, common: &Common) -> Result<()> {
    let loaded = load_input(input)?;
    let method = effective_method(m);
    let spec = spec_of(common, method)?;
    let s = &loaded.summary;
    let payload = if s.dim() == 1 {
        let table = load_table(common)?;
        let opts = UnivOptions { calibration: calibration(table.as_ref(), s.sigma1_hat[0], s.nu2, m.iterate) };
        let adj = adjust(s.sigma1_hat[0], s.nu2, &spec, &opts)?;
        let mut v = serde_json::to_value(&adj)?;
        v["effective_margin"] = json!(adj.effective_margin(s.sigma1_hat[0]));
        if let CalibrationStrategy::Table(_) = opts.calibration.strategy {
            if method == Method::CtostStar {
                v["calibration_strategy"] = json!("table-lookup");
            }
        }
        v
    } else {
        let opts = mvt_options(common, m);
        match method {
            Method::Ctost => serde_json::to_value(ctost_mvt_adjust(s, &spec, &opts)?)?,
            Method::AlphaTost => serde_json::to_value(alpha_tost_mvt_adjust(s, &spec, &opts)?)?,
            Method::Tost => {
                let r = mvt_decide(s, &spec, method, &opts)?;
                json!({ "t": r.t, "c": r.c })
            }
            other => {
                return Err(Error::InvalidInput(format!("method {other} is not available for multivariate summaries")))
            }
        }
    };
    let mut v = json!({ "method": method, "dimensions": loaded.dimensions });
    v["adjustment"] = payload;
    v["warnings"] = json!(loaded.warnings);
    emit(common, &to_json(&v)?)
}

#[derive(Debug, Serialize)]
struct GridRow {
    sigma1: f64,
    nu2: u32,
    method: String,
    theta: f64,
    t: f64,
    c: f64,
    value: f64,
}

/// Rows over θ × σ₁ × ν₂ × method. `thetas = None` means size.
fn grid_rows(thetas: Option<&[f64]>, grid: &GridOpts, common: &Common) -> Result<Vec<GridRow>> {
    let custom = match (grid.t, grid.c) {
        (Some(t), Some(c)) => Some((t, c)),
        (None, None) => None,
        _ => return Err(Error::InvalidInput("--t and --c must be given together".into())),
    };
    let table = load_table(common)?;
    let size_theta = [common.c0];
    let theta_list = thetas.unwrap_or(&size_theta);
    let methods: Vec<Option<Method>> = match custom {
        Some(_) => vec![None],
        None => grid.method.iter().map(|&m| Some(m.into())).collect(),
    };
    let mut rows = Vec::new();
    for &sigma1 in &grid.sigma1 {
        for &nu2 in &grid.nu2 {
            for &method in &methods {
                let (t, c, name) = match (method, custom) {
                    (Some(m), _) => {
                        let spec = spec_of(common, m)?;
                        let opts = UnivOptions { calibration: calibration(table.as_ref(), sigma1, nu2, false) };
                        let adj = adjust(sigma1, nu2, &spec, &opts)?;
                        (adj.t_used, adj.c_used, m.as_str().to_string())
                    }
                    (None, Some((t, c))) => (t, c, "custom".to_string()),
                    (None, None) => unreachable!("methods are nonempty without a custom member"),
                };
                for &theta in theta_list {
                    let value = match thetas {
                        Some(_) => power_uni(&UnivPowerQuery { theta, sigma1, nu2, t, c })?,
                        None => size_uni(sigma1, nu2, t, c, common.c0)?,
                    };
                    rows.push(GridRow { sigma1, nu2, method: name.clone(), theta, t, c, value });
                }
            }
        }
    }
    Ok(rows)
}

fn power_grid(thetas: Option<&[f64]>, grid: &GridOpts, common: &Common) -> Result<()> {
    let rows = grid_rows(thetas, grid, common)?;
    let label = if thetas.is_some() { "power" } else { "size" };
    let text = match common.format {
        Format::Json => {
            let arr: Vec<serde_json::Value> = rows
                .iter()
                .map(|r| {
                    json!({ "sigma1": r.sigma1, "nu2": r.nu2, "method": r.method, "theta": r.theta,
                            "t": r.t, "c": r.c, label: r.value })
                })
                .collect();
            to_json(&json!({ "c0": common.c0, "alpha0": common.alpha0, "rows": arr }))?
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["sigma1", "nu2", "method", "theta", "t", "c", label])?;
            for r in &rows {
                w.write_record([
                    crate::json::format_f64(r.sigma1),
                    r.nu2.to_string(),
                    r.method.clone(),
                    crate::json::format_f64(r.theta),
                    crate::json::format_f64(r.t),
                    crate::json::format_f64(r.c),
                    crate::json::format_f64(r.value),
                ])?;
            }
            String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).expect("csv is utf-8")
        }
        Format::Text => {
            let mut out = format!("{:>8} {:>5} {:>11} {:>9} {:>9} {:>9} {:>9}\n", "sigma1", "nu2", "method", "theta", "t", "c", label);
            for r in &rows {
                out += &format!(
                    "{:>8.4} {:>5} {:>11} {:>9.5} {:>9.5} {:>9.5} {:>9.6}\n",
                    r.sigma1, r.nu2, r.method, r.theta, r.t, r.c, r.value
                );
            }
            out
        }
    };
    emit(common, &text)
}

fn simulate(design: DesignArg, full: bool, config: Option<&Path>, replicates: Option<usize>, common: &Common) -> Result<()> {
    let design = match design {
        DesignArg::UnivariateSweep => Design::UnivariateSweep,
        DesignArg::MvtKappa => Design::MvtKappa,
    };
    let mut cfg = match config {
        Some(p) => serde_json::from_reader::<_, SimulationConfig>(io::BufReader::new(File::open(p)?))?,
        None => {
            let base = if full { SimulationConfig::full(design) } else { SimulationConfig::desk(design) };
            SimulationConfig { seed: common.seed, c0: common.c0, alpha0: common.alpha0, ..base }
        }
    };
    if let Some(n) = replicates {
        cfg.replicates = n;
    }
    let table = load_table(common)?;
    let result = simkit::run(&cfg, table.as_ref())?;
    let text = match common.format {
        Format::Json => to_json(&result)?,
        Format::Csv => {
            let mut buf = Vec::new();
            simkit::write_plot_data(&result, &mut buf)?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        Format::Text => simulation_text(&result),
    };
    emit(common, &text)
}

fn simulation_text(r: &SimulationResult) -> String {
    let mut out = format!(
        "design {} | {} cells | seed {} | config {}\n",
        r.config.design.as_str(),
        r.records.len(),
        r.provenance.seed,
        r.provenance.config_hash
    );
    for rec in &r.records {
        out += &format!(
            "K={} rho={:<4} sigma={:<10} nu2={:<3} x={:<8.5} {:<10} rate {:.4} (se {:.4})\n",
            rec.k, rec.rho, rec.sigma_config, rec.nu2, rec.theta_or_kappa, rec.method.as_str(), rec.rate, rec.stderr
        );
    }
    if r.failures > 0 {
        out += &format!("failures: {}\n", r.failures);
    }
    out
}

fn table(sigma: &[f64], nu: &[u32], strategy: StrategyArg, mc_draws: usize, iterate: bool, common: &Common) -> Result<()> {
    let spec = spec_of(common, Method::CtostStar)?;
    let strategy = match strategy {
        StrategyArg::Quadrature => CalibrationStrategy::Quadrature,
        StrategyArg::MonteCarlo => CalibrationStrategy::MonteCarlo { n: mc_draws, seed: common.seed },
    };
    let t = build_calibration_table(&spec, sigma, nu, &CalibrationOptions { strategy, iterate })?;
    let mut buf = Vec::new();
    t.write_csv(&mut buf)?;
    emit(common, std::str::from_utf8(&buf).expect("csv is utf-8"))
}
