use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use funcov::aft::cv_select_c;
use funcov::basis::KernelNorm;
use funcov::covariance::{center, sample_cov};
use funcov::digit::{digit_estimator_with, digit_fit};
use funcov::experiment::{loss_draws, mean_losses, rank_draws, selection_reports, Setting};
use funcov::fpoet::{fpoet_estimator_with, fpoet_fit};
use funcov::inverse::{correlation_pair, smw_inverse, truncated_inverse};
use funcov::io::{
    read_json, read_kernel, read_long_csv_path, write_json, write_kernel, write_long_csv, SCHEMA_VERSION,
};
use funcov::portfolio::{backtest, cidr, estimate_covariance, min_variance_weights, BacktestConfig, WindowRisk};
use funcov::select::{default_r0, ratio_digit, ratio_fpoet, select, spectra, SelectOptions};
use funcov::sim::{generate, loss};
use funcov::{
    BasisKind, BasisSpec, DgpConfig, Error, EstimatorKind, FunctionalPanel, GridSamples, InverseMode, KernelMatrix,
    SelectionReport, ThresholdFamily, ThresholdRule,
};
use serde::Serialize;

use crate::args::*;

fn header_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

fn save_kernel(dir: &Path, stem: &str, m: &KernelMatrix<f64>, basis: &BasisSpec<f64>) -> Result<()> {
    let csv = dir.join(format!("{stem}.csv"));
    write_kernel(&csv, &header_path(&csv), m, &basis.to_json())?;
    Ok(())
}

fn emit<S: Serialize>(out: Option<&Path>, value: &S) -> Result<()> {
    match out {
        Some(path) => write_json(path, value)?,
        None => {
            let mut stdout = io::stdout().lock();
            serde_json::to_writer_pretty(&mut stdout, value)?;
            stdout.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Maps an observed grid affinely onto `[0, 1]`.
fn unit_grid(grid: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi) = match (grid.first(), grid.last()) {
        (Some(&lo), Some(&hi)) if hi > lo => (lo, hi),
        _ => return Err(Error::Schema("grid needs at least two increasing points".into()).into()),
    };
    let mut out: Vec<f64> = grid.iter().map(|u| (u - lo) / (hi - lo)).collect();
    out[0] = 0.0;
    *out.last_mut().unwrap() = 1.0;
    Ok(out)
}

/// Reads curves and pairs them with a basis on the same grid.
fn curves_and_basis(
    input: &Path,
    value_name: &str,
    basis: Option<&Path>,
    kind: BasisKind,
    k: usize,
) -> Result<(GridSamples<f64>, BasisSpec<f64>)> {
    let samples = read_long_csv_path(input, value_name).with_context(|| format!("reading {}", input.display()))?;
    match basis {
        Some(path) => {
            let spec = BasisSpec::from_json(&read_json(path)?)?;
            if !spec.grid_matches(samples.grid()) {
                return Err(Error::Schema(format!("grid in {} differs from the data grid", path.display())).into());
            }
            Ok((samples, spec))
        }
        None => {
            let grid = unit_grid(samples.grid())?;
            let samples = samples.with_grid(grid.clone())?;
            Ok((samples, BasisSpec::on_grid(kind, k, grid)?))
        }
    }
}

struct Loaded {
    panel: FunctionalPanel<f64>,
    basis: BasisSpec<f64>,
    reconstruction_error: f64,
}

fn load_panel(args: &PanelArgs) -> Result<Loaded> {
    let (samples, basis) = curves_and_basis(&args.input, "value", args.basis.as_deref(), args.basis_kind, args.k)?;
    let proj = basis.project(&samples)?;
    let panel = if args.no_center { proj.panel } else { center(&proj.panel)? };
    Ok(Loaded { panel, basis, reconstruction_error: proj.reconstruction_error })
}

fn ratio_rank(panel: &FunctionalPanel<f64>, method: EstimatorKind) -> Result<usize> {
    let sp = spectra(panel)?;
    let (n, p) = (panel.n(), panel.p());
    let eps0 = funcov::select::DEFAULT_EPS0;
    Ok(match method {
        EstimatorKind::Digit => ratio_digit(sp.omega.as_slice(), p, funcov::select::DEFAULT_C_R, eps0)?,
        _ => ratio_fpoet(sp.tau.as_slice(), p, default_r0(n, p), eps0)?,
    })
}

#[derive(Serialize)]
struct SimulateReport {
    schema_version: u32,
    config: DgpConfig,
    basis_kind: BasisKind,
    k: usize,
    s_p: f64,
    projection_remainder: f64,
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let cfg = match &args.config {
        Some(path) => read_json::<DgpConfig>(path)?,
        None => DgpConfig::new(args.dgp, args.p, args.n, args.r, args.alpha, args.seed).with_replication(args.replication),
    };
    let basis = BasisSpec::new(BasisKind::Fourier, args.k, args.grid.unwrap_or(4 * args.k + 1))?;
    let sim = generate(&cfg, &basis)?;
    fs::create_dir_all(&args.out)?;
    let samples = basis.evaluate(&sim.panel);
    write_long_csv(File::create(args.out.join("panel.csv"))?, &samples, "value")?;
    write_json(&args.out.join("basis.json"), &basis.to_json())?;
    save_kernel(&args.out, "truth", &sim.truth.sigma_y, &basis)?;
    save_kernel(&args.out, "truth_eps", &sim.truth.sigma_eps, &basis)?;
    if args.prices {
        let mut data = samples.data().clone();
        data.iter_mut().for_each(|y| *y = 50.0 * (*y / 100.0).exp());
        let prices = GridSamples::new(samples.n(), samples.p(), samples.grid().to_vec(), data)?;
        write_long_csv(File::create(args.out.join("prices.csv"))?, &prices, "price")?;
    }
    let report = SimulateReport {
        schema_version: SCHEMA_VERSION,
        config: cfg,
        basis_kind: BasisKind::Fourier,
        k: args.k,
        s_p: sim.truth.s_p,
        projection_remainder: sim.truth.projection_remainder,
    };
    write_json(&args.out.join("sim.json"), &report)?;
    log::info!("wrote n={} p={} panel to {}", cfg.n, cfg.p, args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct LossReport {
    smax: f64,
    sf: f64,
    s1: f64,
}

#[derive(Serialize)]
struct FitReport {
    schema_version: u32,
    method: EstimatorKind,
    n: usize,
    p: usize,
    k: usize,
    basis_kind: BasisKind,
    centered: bool,
    reconstruction_error: f64,
    r: usize,
    r_estimated: bool,
    threshold: ThresholdFamily,
    c_dot: f64,
    cross_validated: bool,
    threshold_diagonal: bool,
    /// Leading eigenvalues of `Ω̂` (digit) or `Σ̂_y^S` (fpoet).
    eigenvalues: Vec<f64>,
    /// Rows of `B̂` (digit only).
    #[serde(skip_serializing_if = "Option::is_none")]
    loadings: Option<Vec<Vec<f64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    loss: Option<LossReport>,
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let Loaded { panel, basis, reconstruction_error } = load_panel(&args.panel)?;
    let (n, p, k) = (panel.n(), panel.p(), panel.k());
    let th = &args.thresh;
    let mut rule = ThresholdRule::new(th.threshold, th.cdot)?;
    let r_estimated = args.r.is_none() && args.method != EstimatorKind::Sample;
    let r = match (args.method, args.r) {
        (EstimatorKind::Sample, _) => 0,
        (_, Some(r)) => r,
        (m, None) => ratio_rank(&panel, m)?,
    };
    if let Some(folds) = th.cv_folds {
        let residuals = match args.method {
            EstimatorKind::Digit => digit_fit(&panel, r)?.residuals,
            EstimatorKind::Fpoet => fpoet_fit(&panel, r)?.residuals,
            EstimatorKind::Sample => bail!("--cv-folds has no effect on the sample covariance"),
        };
        let c = cv_select_c(&residuals, th.threshold, folds, &th.cv_grid, th.threshold_diagonal)?;
        log::info!("cross-validated threshold constant {c}");
        rule = rule.with_c_dot(c);
    }
    let eig_count = p;
    let (sigma, eigenvalues, loadings) = match args.method {
        EstimatorKind::Digit => {
            let (est, fit) = digit_estimator_with(&panel, r, &rule, th.threshold_diagonal)?;
            let rows = (0..p).map(|i| fit.b_hat.row(i).iter().copied().collect()).collect();
            let eig = fit.omega_eigenvalues.iter().take(eig_count).copied().collect();
            (est, eig, Some(rows))
        }
        EstimatorKind::Fpoet => {
            let (est, fit) = fpoet_estimator_with(&panel, r, &rule, th.threshold_diagonal)?;
            (est, fit.tau_hat.iter().take(eig_count).copied().collect(), None)
        }
        EstimatorKind::Sample => {
            let tau = spectra(&panel)?.tau;
            (sample_cov(&panel), tau.iter().take(eig_count).copied().collect(), None)
        }
    };
    let loss_report = match &args.truth {
        Some(path) => {
            let (truth, _) = read_kernel(path, &header_path(path))?;
            if truth.p_rows() != p || truth.k() != k {
                return Err(Error::Schema(format!(
                    "truth is p={} K={}, estimate is p={p} K={k}",
                    truth.p_rows(),
                    truth.k()
                ))
                .into());
            }
            Some(LossReport {
                smax: loss(&sigma, &truth, KernelNorm::Smax)?,
                sf: loss(&sigma, &truth, KernelNorm::SF)?,
                s1: loss(&sigma, &truth, KernelNorm::S1)?,
            })
        }
        None => None,
    };
    fs::create_dir_all(&args.out)?;
    save_kernel(&args.out, "sigma", &sigma, &basis)?;
    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        method: args.method,
        n,
        p,
        k,
        basis_kind: basis.kind(),
        centered: !args.panel.no_center,
        reconstruction_error,
        r,
        r_estimated,
        threshold: rule.family,
        c_dot: rule.c_dot,
        cross_validated: th.cv_folds.is_some(),
        threshold_diagonal: th.threshold_diagonal,
        eigenvalues,
        loadings,
        loss: loss_report,
    };
    write_json(&args.out.join("fit.json"), &report)?;
    log::info!("{} fit with r={r} written to {}", args.method, args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct SelectOutput {
    schema_version: u32,
    #[serde(flatten)]
    report: SelectionReport,
}

pub fn select_cmd(args: &SelectArgs) -> Result<()> {
    let Loaded { panel, .. } = load_panel(&args.panel)?;
    let opts = SelectOptions { c_r: args.c_r, eps0: args.eps0, r0: args.r0 };
    let report = select(&panel, &opts)?;
    if let Some(w) = &report.warning {
        log::warn!("{w}");
    }
    emit(args.out.as_deref(), &SelectOutput { schema_version: SCHEMA_VERSION, report })
}

#[derive(Serialize)]
struct InvertReport {
    schema_version: u32,
    mode: InverseMode,
    p: usize,
    k: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ridge: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
}

pub fn invert(args: &InvertArgs) -> Result<()> {
    if !(args.energy > 0.0 && args.energy <= 1.0) {
        return Err(Error::InvalidArgument(format!("energy must lie in (0, 1], got {}", args.energy)).into());
    }
    let mut report = InvertReport {
        schema_version: SCHEMA_VERSION,
        mode: args.mode,
        p: 0,
        k: 0,
        energy: None,
        rank: None,
        r: None,
        ridge: args.ridge,
        kappa: args.kappa,
    };
    let (sigma, inv, basis) = match args.mode {
        InverseMode::Truncated => {
            let Some(path) = &args.sigma else { bail!("truncated mode needs --sigma") };
            let (sigma, header) = read_kernel(path, &header_path(path))?;
            let basis = BasisSpec::from_json(&header.basis)?;
            let (inv, rank) = truncated_inverse(&sigma, args.energy)?;
            report.energy = Some(args.energy);
            report.rank = Some(rank);
            (sigma, inv, basis)
        }
        InverseMode::Smw => {
            let Some(input) = &args.input else { bail!("smw mode needs --input") };
            let panel_args = PanelArgs {
                input: input.clone(),
                basis: args.basis.clone(),
                basis_kind: args.basis_kind,
                k: args.k,
                no_center: false,
            };
            let Loaded { panel, basis, .. } = load_panel(&panel_args)?;
            let r = match args.r {
                Some(r) => r,
                None => ratio_rank(&panel, EstimatorKind::Digit)?,
            };
            let rule = ThresholdRule::new(args.threshold, args.cdot)?;
            let (sigma, fit) = digit_estimator_with(&panel, r, &rule, false)?;
            let sigma_eps_a = sigma.sub(&fit.common_cov())?;
            let inv = smw_inverse(&fit, &sigma_eps_a, args.ridge)?;
            report.r = Some(r);
            (sigma, inv, basis)
        }
    };
    report.p = sigma.p_rows();
    report.k = sigma.k();
    fs::create_dir_all(&args.out)?;
    save_kernel(&args.out, "inverse", &inv, &basis)?;
    if args.mode == InverseMode::Smw {
        save_kernel(&args.out, "sigma", &sigma, &basis)?;
    }
    if let Some(kappa) = args.kappa {
        let (corr, prec) = correlation_pair(&sigma, kappa)?;
        save_kernel(&args.out, "correlation", &corr, &basis)?;
        save_kernel(&args.out, "precision", &prec, &basis)?;
    }
    write_json(&args.out.join("invert.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct RiskRow {
    method: EstimatorKind,
    /// Requested number of factors; absent when estimated per window.
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    mean_r_hat: f64,
    monthly_risk: f64,
    windows: Vec<WindowRisk>,
}

#[derive(Serialize)]
struct RiskReport {
    schema_version: u32,
    n_days: usize,
    p: usize,
    k: usize,
    train: usize,
    eval: usize,
    energy: f64,
    rows: Vec<RiskRow>,
}

pub fn portfolio(args: &PortfolioArgs) -> Result<()> {
    let (prices, basis) = curves_and_basis(&args.prices, "price", None, args.basis_kind, args.k)?;
    let curves = cidr(&prices)?;
    let rule = ThresholdRule::new(args.threshold, args.cdot)?;
    let mut jobs: Vec<(EstimatorKind, Option<usize>)> = Vec::new();
    for &m in &args.methods {
        if m == EstimatorKind::Sample || args.ranks.is_empty() {
            jobs.push((m, None));
        } else {
            jobs.extend(args.ranks.iter().map(|&r| (m, Some(r))));
        }
    }
    fs::create_dir_all(&args.out)?;
    let mut weights_csv = csv::Writer::from_path(args.out.join("weights.csv"))?;
    weights_csv.write_record(["method", "r", "series", "u", "weight"])?;
    let mut rows = Vec::new();
    for (method, r) in jobs {
        let cfg = BacktestConfig { train: args.train, eval: args.eval, method, r, rule, energy: args.energy };
        let bt = backtest(&curves, &basis, &cfg)?;
        let mean_r_hat = bt.windows.iter().map(|w| w.r_hat as f64).sum::<f64>() / bt.windows.len() as f64;
        log::info!("{method} r={r:?}: monthly risk {:.6}", bt.mean_actual);

        // Weights from the most recent training window.
        let n = curves.n();
        let last: Vec<usize> = (n - args.train..n).collect();
        let panel = center(&basis.project(&curves.select_rows(&last))?.panel)?;
        let (sigma, r_used) = estimate_covariance(&panel, method, r, &rule)?;
        let w = min_variance_weights(&sigma, &basis, args.energy)?.on_grid(&basis);
        let r_label = if method == EstimatorKind::Sample { String::new() } else { r_used.to_string() };
        for i in 0..w.ncols() {
            for (g, u) in basis.grid().iter().enumerate() {
                weights_csv.write_record([
                    method.to_string(),
                    r_label.clone(),
                    i.to_string(),
                    u.to_string(),
                    w[(g, i)].to_string(),
                ])?;
            }
        }
        rows.push(RiskRow { method, r, mean_r_hat, monthly_risk: bt.mean_actual, windows: bt.windows });
    }
    weights_csv.flush()?;
    let report = RiskReport {
        schema_version: SCHEMA_VERSION,
        n_days: curves.n(),
        p: curves.p(),
        k: args.k,
        train: args.train,
        eval: args.eval,
        energy: args.energy,
        rows,
    };
    write_json(&args.out.join("risk.json"), &report)?;
    Ok(())
}

#[derive(Serialize)]
struct Table1Row {
    dgp: u8,
    freq_digit: f64,
    freq_fpoet: f64,
    mean_r_hat_digit: f64,
    mean_r_hat_fpoet: f64,
}

#[derive(Serialize)]
struct Figure1Row {
    dgp: u8,
    /// Share of replications with `ΔPC_i < 0` (columns `i = 1, 2, 3`).
    frac_delta_pc_negative: [f64; 3],
    frac_delta_ic_negative: [f64; 3],
    delta_pc: Vec<[f64; 3]>,
    delta_ic: Vec<[f64; 3]>,
}

#[derive(Serialize)]
struct LossRow {
    dgp: u8,
    /// Column means `[Smax, SF, S1]`.
    digit: [f64; 3],
    fpoet: [f64; 3],
    sample: [f64; 3],
    /// Share of replications where the estimator beats the sample covariance in SF.
    digit_beats_sample_sf: f64,
    fpoet_beats_sample_sf: f64,
}

#[derive(Serialize)]
struct BenchReport {
    schema_version: u32,
    p: usize,
    n: usize,
    r: usize,
    alpha: f64,
    k: usize,
    reps: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    table1: Vec<Table1Row>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    figure1: Vec<Figure1Row>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    losses: Vec<LossRow>,
}

fn frac(xs: impl Iterator<Item = bool>) -> f64 {
    let (mut hit, mut all) = (0usize, 0usize);
    for x in xs {
        hit += x as usize;
        all += 1;
    }
    hit as f64 / all.max(1) as f64
}

pub fn bench(args: &BenchArgs) -> Result<()> {
    if !(args.table1 || args.figure1 || args.losses) {
        bail!("choose at least one of --table1, --figure1, --losses");
    }
    let alpha = args.alpha.unwrap_or(if args.table1 { 0.75 } else { 0.5 });
    let dgps: Vec<u8> = match args.dgp {
        Some(d) => vec![d],
        None => vec![1, 2],
    };
    let rule = ThresholdRule::new(args.threshold, args.cdot)?;
    let mut report = BenchReport {
        schema_version: SCHEMA_VERSION,
        p: args.p,
        n: args.n,
        r: args.r,
        alpha,
        k: args.k,
        reps: args.reps,
        seed: args.seed,
        table1: Vec::new(),
        figure1: Vec::new(),
        losses: Vec::new(),
    };
    let mut csv_rows: Vec<[String; 6]> = Vec::new();
    for &dgp in &dgps {
        let setting = Setting { k: args.k, ..Setting::new(dgp, args.p, args.n, args.r, alpha, args.reps, args.seed) };
        setting.config(0).validate()?;
        if args.table1 {
            let draws = rank_draws(&setting)?;
            let mean = |f: &dyn Fn(&funcov::experiment::RankDraw) -> usize| {
                draws.iter().map(|d| f(d) as f64).sum::<f64>() / draws.len().max(1) as f64
            };
            report.table1.push(Table1Row {
                dgp,
                freq_digit: frac(draws.iter().map(|d| d.r_hat_digit == args.r)),
                freq_fpoet: frac(draws.iter().map(|d| d.r_hat_fpoet == args.r)),
                mean_r_hat_digit: mean(&|d| d.r_hat_digit),
                mean_r_hat_fpoet: mean(&|d| d.r_hat_fpoet),
            });
            for (rep, d) in draws.iter().enumerate() {
                csv_rows.push(row(dgp, rep, "r_hat", d.r_hat_digit as f64, d.r_hat_fpoet as f64, f64::NAN));
            }
        }
        if args.figure1 {
            let reports = selection_reports(&setting)?;
            let neg = |get: &dyn Fn(&SelectionReport) -> [f64; 3]| {
                let mut out = [0.0; 3];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = frac(reports.iter().map(|r| get(r)[i] < 0.0));
                }
                out
            };
            report.figure1.push(Figure1Row {
                dgp,
                frac_delta_pc_negative: neg(&|r| r.delta_pc),
                frac_delta_ic_negative: neg(&|r| r.delta_ic),
                delta_pc: reports.iter().map(|r| r.delta_pc).collect(),
                delta_ic: reports.iter().map(|r| r.delta_ic).collect(),
            });
            for (rep, r) in reports.iter().enumerate() {
                csv_rows.push(row(dgp, rep, "delta_pc", r.delta_pc[0], r.delta_pc[1], r.delta_pc[2]));
                csv_rows.push(row(dgp, rep, "delta_ic", r.delta_ic[0], r.delta_ic[1], r.delta_ic[2]));
            }
        }
        if args.losses {
            let draws = loss_draws(&setting, &rule)?;
            let col = |f: &dyn Fn(&funcov::experiment::LossDraw) -> [f64; 3]| {
                mean_losses(&draws.iter().map(f).collect::<Vec<_>>())
            };
            report.losses.push(LossRow {
                dgp,
                digit: col(&|d| d.digit),
                fpoet: col(&|d| d.fpoet),
                sample: col(&|d| d.sample),
                digit_beats_sample_sf: frac(draws.iter().map(|d| d.digit[1] < d.sample[1])),
                fpoet_beats_sample_sf: frac(draws.iter().map(|d| d.fpoet[1] < d.sample[1])),
            });
            for (rep, d) in draws.iter().enumerate() {
                for (name, v) in [("loss_digit", d.digit), ("loss_fpoet", d.fpoet), ("loss_sample", d.sample)] {
                    csv_rows.push(row(dgp, rep, name, v[0], v[1], v[2]));
                }
            }
        }
    }
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["dgp", "rep", "quantity", "v1", "v2", "v3"])?;
        for r in &csv_rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    emit(args.out.as_deref(), &report)
}

fn row(dgp: u8, rep: usize, what: &str, a: f64, b: f64, c: f64) -> [String; 6] {
    let f = |x: f64| if x.is_nan() { String::new() } else { x.to_string() };
    [dgp.to_string(), rep.to_string(), what.to_string(), f(a), f(b), f(c)]
}

pub fn run(args: &RunArgs) -> Result<()> {
    let config: RunConfig = read_json(&args.config)?;
    dispatch_config(&config)
}

pub fn dispatch_config(config: &RunConfig) -> Result<()> {
    match config {
        RunConfig::Simulate(a) => simulate(a),
        RunConfig::Fit(a) => fit(a),
        RunConfig::Select(a) => select_cmd(a),
        RunConfig::Invert(a) => invert(a),
        RunConfig::Portfolio(a) => portfolio(a),
        RunConfig::Bench(a) => bench(a),
    }
}
