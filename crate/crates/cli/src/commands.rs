use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fracvar::eigensolver::{lambda_from, maximize_quotient, target_seminorm, weak_residual, SolverOptions};
use fracvar::functionals::{gaussian, weighted_power, Nonlinearity, Weight};
use fracvar::lemma_oracles::{lemma1_fuzz, lemma2_fuzz, FuzzReport};
use fracvar::multiparam::{
    estimate_mu_budget, find_critical_points, persists, theta, Classification, CriticalSearch, MultiOptions,
    Thresholds, TwoParamProblem,
};
use fracvar::nonlocal_form::{assemble, BilinearForm, Kernel};
use fracvar::regularity::{ladder, moser_exponents, verify_chain, MoserLadder};
use fracvar::{build_grid, FracParams, Grid, GridFunction};
use serde::Serialize;
use serde_json::json;

use crate::config::{NonlinearityChoice, RunConfig, WeightChoice};
use crate::io::{coord_headers, read_grid_function, solution_rows, write_csv, write_json};
use crate::CliError;

/// Tolerance on the relative seminorm-identity defect used by `verify`.
pub const SEMINORM_TOL: f64 = 1e-6;

pub struct Setup {
    pub params: FracParams<f64>,
    pub grid: Arc<Grid<f64>>,
    pub form: BilinearForm<f64>,
}

pub fn setup(cfg: &RunConfig) -> Result<Setup, CliError> {
    let params = cfg.params()?;
    let grid = Arc::new(build_grid(cfg.problem.dim, cfg.grid.radius, cfg.grid.h)?);
    let form = assemble(grid.clone(), Kernel::fractional(cfg.problem.dim, cfg.problem.s), cfg.grid.exterior)?;
    Ok(Setup { params, grid, form })
}

fn solver_options(cfg: &RunConfig) -> SolverOptions {
    SolverOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        restarts: cfg.solver.restarts,
        seed: cfg.solver.seed,
    }
}

fn multi_options(cfg: &RunConfig) -> MultiOptions {
    MultiOptions {
        tol: cfg.solver.tol,
        max_iter: cfg.solver.max_iter,
        restarts: cfg.solver.restarts,
        seed: cfg.solver.seed,
        sep: cfg.solver.sep,
        ..MultiOptions::default()
    }
}

pub fn weight(cfg: &RunConfig, s: &Setup) -> Result<Weight<f64>, CliError> {
    let values = match cfg.problem.weight {
        WeightChoice::Gaussian => GridFunction::from_fn(s.grid.clone(), gaussian),
        WeightChoice::Csv => {
            let path = cfg.problem.weight_csv.as_ref().expect("validated");
            read_grid_function(path, &s.grid)?
        }
    };
    Ok(Weight::new(values, &s.params, cfg.nu())?)
}

/// Coefficient `x -> c(x)`: the Gaussian, or node values looked up by lattice index.
fn coefficient(cfg: &RunConfig, s: &Setup) -> Result<Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>, CliError> {
    let Some(path) = &cfg.problem.coefficient_csv else {
        return Ok(Arc::new(gaussian::<f64>));
    };
    let values = read_grid_function(path, &s.grid)?;
    let h = s.grid.spacing();
    let key = move |x: &[f64]| -> Vec<i64> { x.iter().map(|c| (c / h).round() as i64).collect() };
    let table: HashMap<Vec<i64>, f64> = s.grid.nodes().map(&key).zip(values.values().iter().copied()).collect();
    Ok(Arc::new(move |x: &[f64]| table.get(&key(x)).copied().unwrap_or(0.0)))
}

pub fn two_param_problem(cfg: &RunConfig, s: &Setup, lambda: f64, mu: f64) -> Result<TwoParamProblem<f64>, CliError> {
    let p = &cfg.problem;
    let c = coefficient(cfg, s)?;
    let (cf, cg) = (c.clone(), c);
    let f = match p.nonlinearity {
        NonlinearityChoice::Saturating => Nonlinearity::saturating(p.q, p.tau_g, move |x: &[f64]| cf(x))?,
        NonlinearityChoice::Power => Nonlinearity::power(p.q, move |x: &[f64]| cf(x))?,
    };
    let g = Nonlinearity::power(p.r, move |x: &[f64]| cg(x))?;
    Ok(TwoParamProblem::new(f, g, lambda, mu, s.params, p.r)?)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[derive(Serialize)]
struct EigenReport<'a> {
    lambda: f64,
    quotient_value: f64,
    residual: f64,
    seminorm: f64,
    target_seminorm: f64,
    seminorm_defect: f64,
    identity_defect: f64,
    iterations: usize,
    start: usize,
    nodes: usize,
    candidates: &'a [fracvar::eigensolver::Candidate],
}

pub fn solve_eigen(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let s = setup(cfg)?;
    let w = weight(cfg, &s)?;
    let pair = maximize_quotient(&w, &s.params, &s.form, &solver_options(cfg))?;
    let seminorm = s.form.seminorm(&pair.u)?;
    let target = target_seminorm(&s.params);
    let e = s.form.eval(&pair.u, &pair.u)?;
    let integral = weighted_power(&pair.u, w.values(), s.params.q)?;
    let report = EigenReport {
        lambda: pair.lambda,
        quotient_value: pair.quotient_value,
        residual: pair.residual,
        seminorm,
        target_seminorm: target,
        seminorm_defect: relative(seminorm, target),
        identity_defect: relative(pair.lambda * integral, e),
        iterations: pair.iterations,
        start: pair.start,
        nodes: s.grid.len(),
        candidates: &pair.candidates,
    };
    let path = write_json(cfg, "eigenpair.json", &report)?;
    if cfg.writes_csv() {
        let (header, rows) = solution_rows(&pair.u);
        write_csv(cfg, "solution.csv", &header, rows)?;
        write_plot(cfg, "plot.csv", &pair.u)?;
        if cfg.output.dump_matrix {
            write_matrix(cfg, &s.form)?;
        }
    }
    Ok(path)
}

fn write_plot(cfg: &RunConfig, name: &str, u: &GridFunction<f64>) -> Result<(), CliError> {
    let mut header = coord_headers(u.grid().dim());
    header.push("u".into());
    let rows = u.grid().nodes().zip(u.values()).map(|(x, v)| {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.push(v.to_string());
        row
    });
    write_csv(cfg, name, &header, rows)?;
    Ok(())
}

fn write_matrix(cfg: &RunConfig, form: &BilinearForm<f64>) -> Result<(), CliError> {
    let m = form.matrix();
    let n = m.size();
    let header: Vec<String> = (0..n).map(|j| format!("c{j}")).collect();
    let rows = (0..n).map(|i| m.row(i).iter().map(f64::to_string).collect());
    write_csv(cfg, "matrix.csv", &header, rows)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub value: Option<f64>,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            value: Some(value),
            tolerance,
            passed: value <= tolerance,
        }
    }

    fn skipped(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            value: None,
            tolerance,
            passed: false,
        }
    }
}

pub fn default_solution(cfg: &RunConfig) -> PathBuf {
    cfg.output.directory.join("solution.csv")
}

pub fn verify(cfg: &RunConfig, solution: &Path) -> Result<PathBuf, CliError> {
    let s = setup(cfg)?;
    let w = weight(cfg, &s)?;
    let u = read_grid_function(solution, &s.grid)?;
    let tol = cfg.solver.tol;
    let top = u.max_abs();
    let mut checks = vec![Check {
        name: "nontrivial",
        value: Some(top),
        tolerance: 0.0,
        passed: top > 0.0,
    }];
    let mut lambda = None;
    match lambda_from(&u, &w, &s.params, &s.form) {
        Ok(l) => {
            lambda = Some(l);
            let e = s.form.eval(&u, &u)?;
            let integral = weighted_power(&u, w.values(), s.params.q)?;
            let seminorm = s.form.seminorm(&u)?;
            checks.push(Check::new("residual", weak_residual(&u, l, &w, &s.params, &s.form)?, tol));
            checks.push(Check::new("phi_u_identity", relative(l * integral, e), tol));
            checks.push(Check::new(
                "seminorm_identity",
                relative(seminorm, target_seminorm(&s.params)),
                SEMINORM_TOL.max(tol),
            ));
        }
        Err(_) => {
            checks.push(Check::skipped("residual", tol));
            checks.push(Check::skipped("phi_u_identity", tol));
            checks.push(Check::skipped("seminorm_identity", SEMINORM_TOL.max(tol)));
        }
    }
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.to_string()).collect();
    let path = write_json(
        cfg,
        "verify_report.json",
        json!({
            "solution": solution.display().to_string(),
            "lambda": lambda,
            "checks": checks,
            "failed": failed,
            "passed": failed.is_empty(),
        }),
    )?;
    if failed.is_empty() {
        Ok(path)
    } else {
        Err(CliError::Verification { failed })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MoserReport {
    pub r_exp: f64,
    pub eta: f64,
    pub eta_conj: f64,
    pub n_steps: usize,
    pub base_norm: f64,
    pub sup_actual: f64,
    pub last_norm: f64,
    pub last_exponent: f64,
    /// `1 - last_norm / sup_actual`.
    pub sup_gap: Option<f64>,
    pub fitted_c: Option<f64>,
    pub fitted_c_doubled: Option<f64>,
    /// `|c(2n) - c(n)| / c(n)`.
    pub c_change: Option<f64>,
    pub certified: bool,
    pub chain: Vec<fracvar::regularity::ChainCheck<f64>>,
    pub warnings: Vec<String>,
}

pub fn moser_report(cfg: &RunConfig, u: &GridFunction<f64>, n_steps: usize) -> Result<(MoserReport, MoserLadder<f64>), CliError> {
    let s = setup(cfg)?;
    let ex = moser_exponents(s.params.crit, s.params.q, cfg.nu())?;
    let lad = ladder(u, &s.params, ex.r, n_steps)?;
    let doubled = ladder(u, &s.params, ex.r, 2 * n_steps)?;
    let mut warnings = Vec::new();
    let mut chain = Vec::new();
    if u.is_zero() {
        warnings.push("solution is identically zero: ladder norms are all zero and no constant is fitted".to_string());
    } else {
        let w = weight(cfg, &s)?;
        match lambda_from(u, &w, &s.params, &s.form) {
            Ok(l) => chain = verify_chain(u, l, &w, &s.params, &s.form, ex.r, None)?,
            Err(e) => warnings.push(format!("inequality chain skipped: {e}")),
        }
    }
    let report = MoserReport {
        r_exp: ex.r,
        eta: ex.eta,
        eta_conj: ex.eta_conj,
        n_steps,
        base_norm: lad.base_norm,
        sup_actual: lad.sup_actual,
        last_norm: lad.last_norm(),
        last_exponent: lad.rows.last().map_or(s.params.crit, |r| r.exponent),
        sup_gap: (lad.sup_actual > 0.0).then(|| 1.0 - lad.last_norm() / lad.sup_actual),
        fitted_c: lad.fitted_c,
        fitted_c_doubled: doubled.fitted_c,
        c_change: lad.fitted_c.zip(doubled.fitted_c).map(|(a, b)| (b - a).abs() / a),
        certified: lad.certified(),
        chain,
        warnings,
    };
    Ok((report, lad))
}

pub fn moser(cfg: &RunConfig, solution: &Path, n_steps: usize) -> Result<PathBuf, CliError> {
    let s = setup(cfg)?;
    let u = read_grid_function(solution, &s.grid)?;
    let (report, lad) = moser_report(cfg, &u, n_steps)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if cfg.writes_csv() {
        let header: Vec<String> = ["n", "k_n", "exponent", "norm", "ratio", "fitted_c"].map(String::from).to_vec();
        let c = lad.fitted_c.map_or(String::new(), |c| c.to_string());
        let rows = lad.rows.iter().map(|r| {
            vec![
                r.n.to_string(),
                r.k.to_string(),
                r.exponent.to_string(),
                r.norm.to_string(),
                r.ratio.to_string(),
                c.clone(),
            ]
        });
        write_csv(cfg, "ladder.csv", &header, rows)?;
    }
    write_json(cfg, "moser.json", json!({ "solution": solution.display().to_string(), "ladder": report }))
}

pub fn theta_cmd(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let s = setup(cfg)?;
    let problem = two_param_problem(cfg, &s, 1.0, 0.0)?;
    let est = theta(&problem.f, &s.params, &s.form, &multi_options(cfg))?;
    if cfg.writes_csv() {
        let (header, rows) = solution_rows(&est.u);
        write_csv(cfg, "theta_u.csv", &header, rows)?;
    }
    write_json(
        cfg,
        "theta.json",
        json!({
            "theta": est.theta,
            "residual": est.residual,
            "iterations": est.iterations,
            "converged": est.converged,
            "per_start": est.per_start,
        }),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub index: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub l2_norm: f64,
    pub classification: Classification,
    pub start: Option<usize>,
    pub nonzero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct PersistenceRow {
    pub mu: f64,
    pub persists: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiReport {
    pub theta: f64,
    pub lambda: f64,
    pub mu: f64,
    pub regime: fracvar::multiparam::Regime,
    pub nonzero_count: usize,
    pub points: Vec<PointReport>,
    pub starts: Vec<fracvar::multiparam::StartSummary>,
    pub minimax: Option<fracvar::multiparam::StartSummary>,
    pub mu_budget: Option<fracvar::multiparam::MuBudget>,
    pub persistence: Vec<PersistenceRow>,
}

fn minimizers(search: &CriticalSearch<f64>, sep: f64) -> Vec<GridFunction<f64>> {
    search
        .nonzero(sep)
        .filter(|p| p.classification == Classification::Minimizer)
        .map(|p| p.u.clone())
        .collect()
}

pub fn multi_report(cfg: &RunConfig) -> Result<(MultiReport, CriticalSearch<f64>), CliError> {
    let s = setup(cfg)?;
    let opts = multi_options(cfg);
    let base = two_param_problem(cfg, &s, 1.0, 0.0)?;
    let th = theta(&base.f, &s.params, &s.form, &opts)?;
    let lambda = cfg.problem.lambda.unwrap_or(cfg.problem.lambda_factor * th.theta);
    let at_zero = base.with_lambda(lambda)?;
    let mut thresholds = Thresholds {
        theta: Some(th.theta),
        mu_budget: None,
    };
    let mut budget = None;
    let mut persistence = Vec::new();
    let mut search = find_critical_points(&at_zero, &s.form, &opts, &thresholds)?;
    if cfg.problem.mu_sweep_points > 0 && lambda > th.theta {
        let mins = minimizers(&search, opts.sep);
        if !mins.is_empty() {
            let b = estimate_mu_budget(&at_zero, &s.form, &mins, &opts)?;
            let n = cfg.problem.mu_sweep_points;
            for i in 0..n {
                let mu = if n == 1 { 0.0 } else { 2.0 * b.mu_hat * i as f64 / (n - 1) as f64 };
                persistence.push(PersistenceRow {
                    mu,
                    persists: persists(&at_zero, &s.form, &mins, mu, &opts)?,
                });
            }
            thresholds.mu_budget = Some(b.mu_hat);
            budget = Some(b);
        }
    }
    let problem = at_zero.with_mu(cfg.problem.mu)?;
    if cfg.problem.mu != 0.0 || thresholds.mu_budget.is_some() {
        search = find_critical_points(&problem, &s.form, &opts, &thresholds)?;
    }
    let points = search
        .points
        .iter()
        .enumerate()
        .map(|(index, p)| PointReport {
            index,
            energy: p.energy,
            grad_norm: p.grad_norm,
            l2_norm: p.l2_norm(),
            classification: p.classification,
            start: p.start,
            nonzero: p.l2_norm() > opts.sep,
        })
        .collect::<Vec<_>>();
    let report = MultiReport {
        theta: th.theta,
        lambda,
        mu: cfg.problem.mu,
        regime: search.regime,
        nonzero_count: points.iter().filter(|p| p.nonzero).count(),
        points,
        starts: search.starts.clone(),
        minimax: search.minimax.clone(),
        mu_budget: budget,
        persistence,
    };
    Ok((report, search))
}

pub fn multi(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let (report, search) = multi_report(cfg)?;
    if cfg.writes_csv() {
        let grid = search.points[0].u.grid().clone();
        let mut header = vec!["node_index".to_string()];
        header.extend(coord_headers(grid.dim()));
        header.extend((0..search.points.len()).map(|k| format!("u{k}")));
        let rows = grid.nodes().enumerate().map(|(i, x)| {
            let mut row = vec![i.to_string()];
            row.extend(x.iter().map(f64::to_string));
            row.extend(search.points.iter().map(|p| p.u.values()[i].to_string()));
            row
        });
        write_csv(cfg, "critical_points.csv", &header, rows)?;
        if !report.persistence.is_empty() {
            let rows = report.persistence.iter().map(|r| vec![r.mu.to_string(), r.persists.to_string()]);
            write_csv(cfg, "persistence.csv", &["mu".into(), "persists".into()], rows)?;
        }
    }
    write_json(cfg, "multi.json", &report)
}

pub fn lemma_fuzz(cfg: &RunConfig, draws: usize) -> Result<PathBuf, CliError> {
    let seed = cfg.solver.seed;
    let reports: Vec<FuzzReport> = vec![lemma1_fuzz(draws, seed)?, lemma2_fuzz(draws, seed)?];
    let dir = crate::io::out_dir(cfg)?;
    let lines_path = dir.join("lemma_fuzz.jsonl");
    let mut lines = String::new();
    let header = crate::io::with_context(cfg, json!({ "draws": draws }))?;
    lines.push_str(&serde_json::to_string(&header).expect("serializes"));
    lines.push('\n');
    for r in &reports {
        for rec in &r.records {
            lines.push_str(&serde_json::to_string(rec).expect("serializes"));
            lines.push('\n');
        }
    }
    std::fs::write(&lines_path, lines).map_err(|e| crate::io::io_err(&lines_path, e))?;
    let violations: usize = reports.iter().map(|r| r.violations).sum();
    let path = write_json(cfg, "lemma_fuzz.json", json!({ "reports": reports, "violations": violations }))?;
    if violations > 0 {
        let failed = reports
            .iter()
            .filter(|r| r.violations > 0)
            .map(|r| format!("lemma{}", r.lemma))
            .collect();
        return Err(CliError::Verification { failed });
    }
    Ok(path)
}
