//! Run configuration (TOML) and its validation.

use std::path::{Path, PathBuf};

use fracvar::{critical_exponent, FracParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightChoice {
    /// `exp(-|x|^2)`.
    Gaussian,
    /// Node values from `problem.weight_csv` (solution CSV schema).
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonlinearityChoice {
    /// `m(x) sign(t) min(|t|^{q-1}, |t|^{tau_g-1})`.
    Saturating,
    /// `m(x) |t|^{q-2} t`.
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(rename = "N")]
    pub dim: usize,
    pub s: f64,
    pub q: f64,
    /// Exponent of `g(x,t) = h(x)|t|^{r-2}t`.
    pub r: f64,
    /// Integrability exponent of the weight; defaults to `(q + 2*) / 2`.
    pub nu: Option<f64>,
    pub tau_g: f64,
    pub weight: WeightChoice,
    pub weight_csv: Option<PathBuf>,
    pub nonlinearity: NonlinearityChoice,
    /// Coefficient `m(x)` of `f` and `h(x)` of `g` from CSV instead of `exp(-|x|^2)`.
    pub coefficient_csv: Option<PathBuf>,
    /// Absolute `lambda`; when absent `lambda = lambda_factor * theta`.
    pub lambda: Option<f64>,
    pub lambda_factor: f64,
    pub mu: f64,
    /// Number of rows of the `mu` persistence table (0 skips the `mu` bisection).
    pub mu_sweep_points: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            dim: 1,
            s: 0.25,
            q: 3.0,
            r: 3.5,
            nu: None,
            tau_g: 1.5,
            weight: WeightChoice::Gaussian,
            weight_csv: None,
            nonlinearity: NonlinearityChoice::Saturating,
            coefficient_csv: None,
            lambda: None,
            lambda_factor: 2.0,
            mu: 0.0,
            mu_sweep_points: 9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    #[serde(rename = "R")]
    pub radius: f64,
    pub h: f64,
    pub exterior: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            radius: 8.0,
            h: 0.125,
            exterior: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Distinctness threshold for critical points (discrete `L^2`).
    pub sep: f64,
    /// Moser ladder length.
    pub n_steps: usize,
    /// Draws per lemma for `lemma-fuzz`.
    pub fuzz_draws: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            restarts: 2,
            seed: 0,
            sep: 1e-3,
            n_steps: 12,
            fuzz_draws: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
    /// Also write the assembled form matrix as CSV.
    pub dump_matrix: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![Format::Json, Format::Csv],
            dump_matrix: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

fn fail(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| fail("config", e.message().to_string()))
    }

    /// Reads `path` (or the defaults when `None`), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| fail("config", format!("{}: {e}", p.display())))?;
                let mut cfg = Self::from_toml(&text)?;
                // relative CSV inputs are resolved against the config file
                let base = p.parent().unwrap_or(Path::new("."));
                for slot in [&mut cfg.problem.weight_csv, &mut cfg.problem.coefficient_csv] {
                    if let Some(f) = slot.as_mut() {
                        if f.is_relative() {
                            *f = base.join(&*f);
                        }
                    }
                }
                cfg
            }
            None => Self::default(),
        };
        if let Some(out) = &overrides.out {
            cfg.output.directory = out.clone();
        }
        if let Some(seed) = overrides.seed {
            cfg.solver.seed = seed;
        }
        if let Some(tol) = overrides.tol {
            cfg.solver.tol = tol;
        }
        cfg.validate()?;
        cfg.problem.nu = Some(cfg.nu());
        Ok(cfg)
    }

    pub fn crit(&self) -> f64 {
        critical_exponent(self.problem.dim, self.problem.s).unwrap_or(f64::NAN)
    }

    pub fn nu(&self) -> f64 {
        self.problem.nu.unwrap_or(0.5 * (self.problem.q + self.crit()))
    }

    pub fn params(&self) -> Result<FracParams<f64>, CliError> {
        let p = &self.problem;
        FracParams::new(p.dim, p.s, p.q).map_err(|e| match e {
            fracvar::Error::InvalidParameter { name, reason } => fail(&format!("problem.{name}"), reason),
            other => fail("problem", other.to_string()),
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let p = &self.problem;
        let params = self.params()?;
        let crit = params.crit;
        let nu = self.nu();
        if !(p.q < nu && nu < crit) {
            return Err(fail("problem.nu", format!("need q < nu < 2* ({} < nu < {crit}), got {nu}", p.q)));
        }
        if !(p.q < p.r && p.r <= crit) {
            return Err(fail("problem.r", format!("need q < r <= 2* ({} < r <= {crit}), got {}", p.q, p.r)));
        }
        if !(p.tau_g > 1.0 && p.tau_g < 2.0) {
            return Err(fail("problem.tau_g", format!("need 1 < tau_g < 2, got {}", p.tau_g)));
        }
        if p.weight == WeightChoice::Csv && p.weight_csv.is_none() {
            return Err(fail("problem.weight_csv", "weight = \"csv\" needs a weight_csv path"));
        }
        if let Some(l) = p.lambda {
            if !(l > 0.0) {
                return Err(fail("problem.lambda", format!("need lambda > 0, got {l}")));
            }
        }
        if !(p.lambda_factor > 0.0) {
            return Err(fail("problem.lambda_factor", format!("need lambda_factor > 0, got {}", p.lambda_factor)));
        }
        if !(p.mu >= 0.0) {
            return Err(fail("problem.mu", format!("need mu >= 0, got {}", p.mu)));
        }
        let g = &self.grid;
        if !(g.radius > 0.0 && g.radius.is_finite()) {
            return Err(fail("grid.R", format!("need R > 0, got {}", g.radius)));
        }
        if !(g.h > 0.0 && g.h < g.radius) {
            return Err(fail("grid.h", format!("need 0 < h < R, got {}", g.h)));
        }
        let s = &self.solver;
        if !(s.tol > 0.0) {
            return Err(fail("solver.tol", format!("need tol > 0, got {}", s.tol)));
        }
        if s.max_iter == 0 {
            return Err(fail("solver.max_iter", "need max_iter >= 1"));
        }
        if !(s.sep > 0.0) {
            return Err(fail("solver.sep", format!("need sep > 0, got {}", s.sep)));
        }
        if s.n_steps == 0 {
            return Err(fail("solver.n_steps", "need n_steps >= 1"));
        }
        if !self.output.formats.contains(&Format::Json) {
            return Err(fail("output.formats", "json output is required"));
        }
        Ok(())
    }

    pub fn writes_csv(&self) -> bool {
        self.output.formats.contains(&Format::Csv)
    }
}
