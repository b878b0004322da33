//! Two-parameter problem `(-Delta)^s u = lambda f(x,u) + mu g(x,u)` through the energy
//!
//! ```text
//! E_{lambda,mu}(u) = Phi(u) - lambda J(u) - mu Psi(u)
//! ```
//!
//! The threshold `theta = inf { Phi(u) / J(u) : J(u) > 0 }` is estimated by
//! ascent on `J/E`; critical points are searched by descent from several starts,
//! a minimax (mountain pass) refinement between `0` and the best minimizer, and
//! a bisection on `mu` for the range over which the minimizers persist.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FracParams, GridFunction};
use crate::error::{invalid, Error, Result};
use crate::functionals::{big_j, phi, Nonlinearity};
use crate::linalg::Cholesky;
use crate::nonlocal_form::{random_probe, BilinearForm};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MultiOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Minimal discrete `L^2` distance between distinct critical points.
    pub sep: f64,
    pub bisection_steps: usize,
}

impl Default for MultiOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            restarts: 2,
            seed: 0,
            sep: 1e-3,
            bisection_steps: 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TwoParamProblem<T> {
    pub f: Nonlinearity<T>,
    pub g: Nonlinearity<T>,
    pub lambda: T,
    pub mu: T,
    pub params: FracParams<T>,
    pub r: T,
}

impl<T: Real> TwoParamProblem<T> {
    pub fn new(f: Nonlinearity<T>, g: Nonlinearity<T>, lambda: T, mu: T, params: FracParams<T>, r: T) -> Result<Self> {
        if !(params.q < r && r <= params.crit) {
            return Err(invalid("r", format!("need q < r <= 2* ({} < r <= {}), got {r}", params.q, params.crit)));
        }
        if !(lambda > T::zero()) {
            return Err(invalid("lambda", format!("need lambda > 0, got {lambda}")));
        }
        if !(mu >= T::zero()) {
            return Err(invalid("mu", format!("need mu >= 0, got {mu}")));
        }
        Ok(Self {
            f,
            g,
            lambda,
            mu,
            params,
            r,
        })
    }

    pub fn with_lambda(&self, lambda: T) -> Result<Self> {
        Self::new(self.f.clone(), self.g.clone(), lambda, self.mu, self.params, self.r)
    }

    pub fn with_mu(&self, mu: T) -> Result<Self> {
        Self::new(self.f.clone(), self.g.clone(), self.lambda, mu, self.params, self.r)
    }

    pub fn is_odd(&self) -> bool {
        self.f.is_odd() && self.g.is_odd()
    }

    /// `h^N (lambda f(x_i, u_i) + mu g(x_i, u_i))`.
    fn load(&self, u: &GridFunction<T>) -> Vec<T> {
        let grid = u.grid();
        let vol = grid.cell_volume();
        grid.nodes()
            .zip(u.values())
            .map(|(x, &t)| vol * (self.lambda * self.f.evaluate(x, t) + self.mu * self.g.evaluate(x, t)))
            .collect()
    }

    /// `lambda J(u) + mu Psi(u)`.
    fn potential(&self, u: &GridFunction<T>) -> T {
        self.lambda * big_j(u, &self.f) + self.mu * big_j(u, &self.g)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn sup<T: Real>(a: impl Iterator<Item = T>) -> T {
    a.fold(T::zero(), |m, x| m.max(x.abs()))
}

/// `t -> E(t v)` with `E(v, v)` cached, so each evaluation is linear in the grid size.
struct Ray<'a, T> {
    problem: &'a TwoParamProblem<T>,
    v: GridFunction<T>,
    vmv: T,
}

impl<T: Real> Ray<'_, T> {
    fn energy(&self, t: T) -> T {
        t * t * self.vmv / T::lit(2.0) - self.problem.potential(&self.v.scaled(t))
    }

    fn slope(&self, t: T) -> T {
        t * self.vmv - dot(&self.problem.load(&self.v.scaled(t)), self.v.values())
    }
}

/// `Phi(u) - lambda J(u) - mu Psi(u)`.
pub fn energy<T: Real>(problem: &TwoParamProblem<T>, u: &GridFunction<T>, form: &BilinearForm<T>) -> Result<T> {
    Ok(phi(u, form)? - problem.lambda * big_j(u, &problem.f) - problem.mu * big_j(u, &problem.g))
}

/// Gradient of the energy in the discrete `L^2` pairing.
pub fn energy_gradient<T: Real>(problem: &TwoParamProblem<T>, u: &GridFunction<T>, form: &BilinearForm<T>) -> Result<GridFunction<T>> {
    let eu = form.pair_with_basis(u)?;
    let inv = form.grid().cell_volume().recip();
    let vals = eu.iter().zip(problem.load(u)).map(|(&e, l)| (e - l) * inv).collect();
    u.with_values(vals)
}

/// `max_i |E(u, e_i) - h^N (lambda f + mu g)(x_i, u_i)| / max(1, [u])`.
pub fn weak_residual_two_param<T: Real>(problem: &TwoParamProblem<T>, u: &GridFunction<T>, form: &BilinearForm<T>) -> Result<T> {
    let eu = form.pair_with_basis(u)?;
    let worst = eu
        .iter()
        .zip(problem.load(u))
        .map(|(&e, l)| (e - l).abs())
        .fold(T::zero(), T::max);
    Ok(worst / T::one().max(form.seminorm(u)?))
}

fn l2_norm<T: Real>(u: &GridFunction<T>) -> T {
    u.dot(u).sqrt()
}

fn l2_distance<T: Real>(u: &GridFunction<T>, v: &GridFunction<T>) -> T {
    l2_norm(&u.axpy(-T::one(), v))
}

/// Estimate of `theta = (1/2) inf [u]^2 / J(u)` over `J(u) > 0`.
#[derive(Debug, Clone)]
pub struct ThetaEstimate<T> {
    pub theta: T,
    /// Function attaining the estimate.
    pub u: GridFunction<T>,
    /// Stationarity defect of `u` for `Phi - theta J`.
    pub residual: T,
    pub iterations: usize,
    pub converged: bool,
    /// Estimates from every admissible start, in start order.
    pub per_start: Vec<f64>,
}

/// Maximizes `c -> value(c)` over a log grid `c in [1e-3, 1e3]`, then refines by golden section.
fn best_scale<T: Real>(mut value: impl FnMut(T) -> Option<T>) -> Option<(T, T)> {
    let n = 121;
    let mut best: Option<(usize, T)> = None;
    let logs: Vec<f64> = (0..n).map(|k| -3.0 * std::f64::consts::LN_10 + k as f64 * 0.05 * std::f64::consts::LN_10).collect();
    for (k, &lc) in logs.iter().enumerate() {
        if let Some(val) = value(T::lit(lc.exp())) {
            if best.map_or(true, |(_, b)| val > b) {
                best = Some((k, val));
            }
        }
    }
    let (k, _) = best?;
    let (mut a, mut b) = (logs[k.saturating_sub(1)], logs[(k + 1).min(n - 1)]);
    let phi_g = 0.5 * (5f64.sqrt() - 1.0);
    let mut eval = |lc: f64| value(T::lit(lc.exp())).unwrap_or(T::neg_infinity());
    let (mut c, mut d) = (b - phi_g * (b - a), a + phi_g * (b - a));
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..60 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi_g * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi_g * (b - a);
            fd = eval(d);
        }
    }
    let lc = 0.5 * (a + b);
    let val = eval(lc);
    (val > T::neg_infinity()).then(|| (T::lit(lc.exp()), val))
}

fn bump<T: Real>(form: &BilinearForm<T>, sign: T) -> GridFunction<T> {
    let grid = form.grid().clone();
    GridFunction::from_fn(grid, |x| sign * (-x.iter().map(|&c| c * c).sum::<T>()).exp())
}

fn starts<T: Real>(form: &BilinearForm<T>, restarts: usize, seed: u64) -> Vec<GridFunction<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![bump(form, T::one()), bump(form, -T::one())];
    for k in 0..restarts {
        out.push(random_probe(form.grid(), &mut rng, k));
    }
    out
}

/// Threshold estimate from ascent on `J/E` started at scaled bumps of both signs
/// and random probes.
pub fn theta<T: Real>(f: &Nonlinearity<T>, params: &FracParams<T>, form: &BilinearForm<T>, opts: &MultiOptions) -> Result<ThetaEstimate<T>> {
    let _ = params;
    let chol = form.factor()?;
    let tol = T::lit(opts.tol);
    let two = T::lit(2.0);
    let vol = form.grid().cell_volume();
    let mut best: Option<ThetaEstimate<T>> = None;
    let mut per_start = Vec::new();
    for start in starts(form, opts.restarts, opts.seed) {
        let vmv = form.eval(&start, &start)?;
        if !(vmv > T::zero()) {
            continue;
        }
        let along = |c: T| {
            let j = big_j(&start.scaled(c), f);
            (j > T::zero()).then(|| j / (c * c * vmv))
        };
        let Some((c, _)) = best_scale(along) else { continue };
        let mut u = start.scaled(c);
        let mut improvement = T::infinity();
        let mut iterations = 0;
        let (value, residual, converged) = loop {
            let mu = form.pair_with_basis(&u)?;
            let e = dot(u.values(), &mu);
            let value = big_j(&u, f) / e;
            let th = (two * value).recip();
            let load: Vec<T> = u.grid().nodes().zip(u.values()).map(|(x, &t)| vol * f.evaluate(x, t)).collect();
            let res = sup(mu.iter().zip(&load).map(|(&a, &b)| a - th * b)) / T::one().max(e.sqrt());
            if res < tol && improvement < tol {
                break (value, res, true);
            }
            if iterations >= opts.max_iter {
                break (value, res, false);
            }
            iterations += 1;
            let rhs: Vec<T> = load.iter().map(|&l| th * l).collect();
            let direction = u.with_values(chol.solve(&rhs))?.axpy(-T::one(), &u);
            let md: Vec<T> = rhs.iter().zip(&mu).map(|(&a, &b)| a - b).collect();
            let (dmd, umd) = (dot(direction.values(), &md), dot(u.values(), &md));
            let mut alpha = T::one();
            let mut accepted = None;
            while alpha > T::lit(1e-12) {
                let trial = u.axpy(alpha, &direction);
                let et = e + two * alpha * umd + alpha * alpha * dmd;
                let jt = big_j(&trial, f);
                if et > T::zero() && jt > T::zero() && jt / et >= value {
                    accepted = Some((trial, jt / et));
                    break;
                }
                alpha = alpha * T::lit(0.5);
            }
            match accepted {
                Some((next, tv)) => {
                    improvement = (tv - value) / value;
                    u = next;
                }
                None => improvement = T::zero(),
            }
        };
        let th = (two * value).recip();
        per_start.push(th.as_f64());
        if best.as_ref().map_or(true, |b| th < b.theta) {
            best = Some(ThetaEstimate {
                theta: th,
                u,
                residual,
                iterations,
                converged,
                per_start: Vec::new(),
            });
        }
    }
    let mut best = best.ok_or(Error::EmptyAdmissibleSet)?;
    best.per_start = per_start;
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Minimizer,
    SaddleCandidate,
    Unknown,
}

#[derive(Debug, Clone)]
pub struct CriticalPoint<T> {
    pub u: GridFunction<T>,
    pub energy: T,
    pub grad_norm: T,
    pub classification: Classification,
    /// Start that first reached this point (`None` for the zero point and the minimax point).
    pub start: Option<usize>,
}

impl<T: Real> CriticalPoint<T> {
    pub fn l2_norm(&self) -> T {
        l2_norm(&self.u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    /// `lambda <= theta`: no nonzero solutions are promised.
    BelowThreshold,
    /// `lambda > theta` and `mu` within the estimated persistence budget.
    TheoremRegime,
    /// `mu` above the estimated budget, or the budget is unknown while `mu > 0`.
    OutsideTheoremRegime,
}

/// Known thresholds used to label a search.
#[derive(Debug, Clone, Copy, Default)]
pub struct Thresholds<T> {
    pub theta: Option<T>,
    pub mu_budget: Option<T>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StartSummary {
    /// `None` for the minimax refinement.
    pub start: Option<usize>,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    pub energy: f64,
    pub grad_norm: f64,
}

#[derive(Debug, Clone)]
pub struct CriticalSearch<T> {
    /// Distinct accepted points sorted by (energy, start).
    pub points: Vec<CriticalPoint<T>>,
    pub starts: Vec<StartSummary>,
    /// Outcome of the minimax refinement, when one was attempted.
    pub minimax: Option<StartSummary>,
    pub regime: Regime,
}

impl<T: Real> CriticalSearch<T> {
    pub fn nonzero(&self, sep: T) -> impl Iterator<Item = &CriticalPoint<T>> {
        self.points.iter().filter(move |p| l2_norm(&p.u) > sep)
    }
}

struct Descent<T> {
    u: GridFunction<T>,
    energy: T,
    grad_norm: T,
    iterations: usize,
    converged: bool,
    diverged: bool,
}

/// Preconditioned gradient descent with Armijo backtracking.
fn descend<T: Real>(
    problem: &TwoParamProblem<T>,
    form: &BilinearForm<T>,
    chol: &Cholesky<T>,
    start: GridFunction<T>,
    opts: &MultiOptions,
) -> Result<Descent<T>> {
    let tol = T::lit(opts.tol);
    let two = T::lit(2.0);
    let blowup = T::lit(1e6) * start.max_abs().max(T::one());
    let mut u = start;
    let mut iterations = 0;
    loop {
        let mu = form.pair_with_basis(&u)?;
        let load = problem.load(&u);
        let umu = dot(u.values(), &mu);
        let value = umu / two - problem.potential(&u);
        let grad_norm = sup(mu.iter().zip(&load).map(|(&a, &b)| a - b)) / T::one().max(umu.max(T::zero()).sqrt());
        let converged = grad_norm <= tol;
        let diverged = !converged && (!value.is_finite() || u.max_abs() > blowup);
        if converged || diverged || iterations >= opts.max_iter {
            return Ok(Descent {
                u,
                energy: value,
                grad_norm,
                iterations,
                converged,
                diverged,
            });
        }
        iterations += 1;
        let direction = u.with_values(chol.solve(&load))?.axpy(-T::one(), &u);
        let md: Vec<T> = load.iter().zip(&mu).map(|(&a, &b)| a - b).collect();
        let (dmd, umd) = (dot(direction.values(), &md), dot(u.values(), &md));
        let along = |alpha: T| -> (GridFunction<T>, T) {
            let trial = u.axpy(alpha, &direction);
            let e = (umu + two * alpha * umd + alpha * alpha * dmd) / two - problem.potential(&trial);
            (trial, e)
        };
        let mut alpha = T::one();
        let mut next = None;
        while alpha > T::lit(1e-14) {
            let (trial, tv) = along(alpha);
            // directional derivative along the step is -E(d, d)
            if tv <= value - T::lit(1e-4) * alpha * dmd {
                next = Some(trial);
                break;
            }
            alpha = alpha * T::lit(0.5);
        }
        u = match next {
            Some(trial) => trial,
            None => {
                // stalled at working precision; take a short step unless it raises the energy
                let (trial, tv) = along(T::lit(1e-3));
                if tv > value {
                    return Ok(Descent {
                        u,
                        energy: value,
                        grad_norm,
                        iterations,
                        converged: false,
                        diverged: false,
                    });
                }
                trial
            }
        };
    }
}

/// Local minimality probe: random perturbations never lower the energy.
fn looks_like_minimizer<T: Real>(problem: &TwoParamProblem<T>, form: &BilinearForm<T>, u: &GridFunction<T>, seed: u64) -> Result<bool> {
    let base = energy(problem, u, form)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = T::lit(1e-3) * u.max_abs().max(T::lit(1e-2));
    for _ in 0..16 {
        let dir: Vec<T> = (0..u.len()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        let d = u.with_values(dir)?;
        if energy(problem, &u.axpy(scale, &d), form)? < base {
            return Ok(false);
        }
    }
    Ok(true)
}

/// First local maximum of `t -> E(t v)` for `t` in `(0, t_max]`, located by bisection on the slope.
fn first_peak<T: Real>(ray: &Ray<'_, T>, t_max: T) -> Option<T> {
    let mut t = t_max * T::lit(1e-6);
    let grow = T::lit(1.05);
    if !(ray.slope(t) > T::zero()) {
        return None;
    }
    while t < t_max {
        let next = t * grow;
        if ray.slope(next) < T::zero() {
            let (mut lo, mut hi) = (t, next);
            for _ in 0..80 {
                let mid = (lo + hi) / T::lit(2.0);
                if ray.slope(mid) > T::zero() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some((lo + hi) / T::lit(2.0));
        }
        t = next;
    }
    None
}

/// Minimax search for a mountain-pass point between `0` and `target`:
/// minimize over directions the height of the first peak along the ray.
fn minimax<T: Real>(
    problem: &TwoParamProblem<T>,
    form: &BilinearForm<T>,
    chol: &Cholesky<T>,
    target: &GridFunction<T>,
    opts: &MultiOptions,
) -> Result<Option<Descent<T>>> {
    let tol = T::lit(opts.tol);
    let t_max = form.seminorm(target)?;
    if !(t_max > T::zero()) {
        return Ok(None);
    }
    let mut v = target.scaled(t_max.recip());
    let mut mv: Vec<T> = form.pair_with_basis(&v)?;
    let mut ray = Ray {
        problem,
        v: v.clone(),
        vmv: dot(v.values(), &mv),
    };
    let Some(mut t) = first_peak(&ray, t_max) else { return Ok(None) };
    let mut height = ray.energy(t);
    let mut iterations = 0;
    let mut alpha = T::one();
    loop {
        let u = v.scaled(t);
        let mu: Vec<T> = mv.iter().map(|&x| x * t).collect();
        let load = problem.load(&u);
        let grad_norm = sup(mu.iter().zip(&load).map(|(&a, &b)| a - b)) / T::one().max(t * ray.vmv.sqrt());
        let peak = height;
        let done = |u, iterations| Descent {
            u,
            energy: peak,
            grad_norm,
            iterations,
            converged: grad_norm <= tol,
            diverged: false,
        };
        if grad_norm <= tol || iterations >= opts.max_iter {
            return Ok(Some(done(u, iterations)));
        }
        iterations += 1;
        // energy-metric gradient at the peak; its radial part vanishes there
        let step = u.axpy(-T::one(), &u.with_values(chol.solve(&load))?);
        let mstep: Vec<T> = mu.iter().zip(&load).map(|(&a, &b)| a - b).collect();
        let mut accepted = false;
        alpha = (alpha * T::lit(2.0)).min(T::one());
        while alpha > T::lit(1e-12) {
            let c = alpha / t;
            let trial = v.axpy(-c, &step);
            let trial_mv: Vec<T> = mv.iter().zip(&mstep).map(|(&a, &b)| a - c * b).collect();
            let nt = dot(trial.values(), &trial_mv);
            if nt > T::zero() {
                let inv = nt.sqrt().recip();
                let cand = Ray {
                    problem,
                    v: trial.scaled(inv),
                    vmv: nt * inv * inv,
                };
                if let Some(tt) = first_peak(&cand, t_max) {
                    let h = cand.energy(tt);
                    if h <= height {
                        v = cand.v.clone();
                        mv = form.pair_with_basis(&v)?;
                        ray = Ray {
                            problem,
                            v: v.clone(),
                            vmv: dot(v.values(), &mv),
                        };
                        t = tt;
                        height = h;
                        accepted = true;
                        break;
                    }
                }
            }
            alpha = alpha * T::lit(0.5);
        }
        if !accepted {
            return Ok(Some(done(u, iterations)));
        }
    }
}

fn summary<T: Real>(start: Option<usize>, d: &Descent<T>) -> StartSummary {
    StartSummary {
        start,
        converged: d.converged,
        diverged: d.diverged,
        iterations: d.iterations,
        energy: d.energy.as_f64(),
        grad_norm: d.grad_norm.as_f64(),
    }
}

fn regime<T: Real>(problem: &TwoParamProblem<T>, thresholds: &Thresholds<T>) -> Regime {
    if thresholds.theta.is_some_and(|th| problem.lambda <= th) {
        return Regime::BelowThreshold;
    }
    match thresholds.mu_budget {
        Some(b) if problem.mu <= b => Regime::TheoremRegime,
        None if problem.mu == T::zero() => Regime::TheoremRegime,
        _ => Regime::OutsideTheoremRegime,
    }
}

fn insert_distinct<T: Real>(points: &mut Vec<CriticalPoint<T>>, p: CriticalPoint<T>, sep: T) {
    if points.iter().all(|q| l2_distance(&q.u, &p.u) > sep) {
        points.push(p);
    }
}

/// Descent from a positive bump, a negative bump and `opts.restarts` random
/// starts (each scaled to the lowest energy along its ray), followed by a
/// minimax refinement between `0` and the lowest minimizer.
pub fn find_critical_points<T: Real>(
    problem: &TwoParamProblem<T>,
    form: &BilinearForm<T>,
    opts: &MultiOptions,
    thresholds: &Thresholds<T>,
) -> Result<CriticalSearch<T>> {
    let chol = form.factor()?;
    let sep = T::lit(opts.sep);
    let zero = GridFunction::zeros(form.grid().clone());
    let mut points = vec![CriticalPoint {
        energy: energy(problem, &zero, form)?,
        grad_norm: weak_residual_two_param(problem, &zero, form)?,
        classification: if looks_like_minimizer(problem, form, &zero, opts.seed)? {
            Classification::Minimizer
        } else {
            Classification::Unknown
        },
        u: zero,
        start: None,
    }];
    let mut summaries = Vec::new();
    let mut any_converged = false;
    for (idx, start) in starts(form, opts.restarts, opts.seed).into_iter().enumerate() {
        let ray = Ray {
            problem,
            vmv: form.eval(&start, &start)?,
            v: start,
        };
        let scaled = match best_scale(|c| Some(-ray.energy(c))) {
            Some((c, _)) => ray.v.scaled(c),
            None => ray.v,
        };
        let d = descend(problem, form, &chol, scaled, opts)?;
        summaries.push(summary(Some(idx), &d));
        if !d.converged {
            continue;
        }
        any_converged = true;
        let classification = if looks_like_minimizer(problem, form, &d.u, opts.seed + idx as u64)? {
            Classification::Minimizer
        } else {
            Classification::Unknown
        };
        insert_distinct(
            &mut points,
            CriticalPoint {
                u: d.u,
                energy: d.energy,
                grad_norm: d.grad_norm,
                classification,
                start: Some(idx),
            },
            sep,
        );
    }
    if !any_converged {
        return Err(Error::NonConvergence {
            iterations: opts.max_iter,
            residual: summaries.iter().map(|s| s.grad_norm).fold(f64::INFINITY, f64::min),
        });
    }
    let lowest = points
        .iter()
        .filter(|p| l2_norm(&p.u) > sep)
        .min_by(|a, b| a.energy.partial_cmp(&b.energy).expect("finite energies"))
        .map(|p| p.u.clone());
    let mut minimax_summary = None;
    if let Some(target) = lowest {
        if let Some(d) = minimax(problem, form, &chol, &target, opts)? {
            minimax_summary = Some(summary(None, &d));
            if d.converged && l2_norm(&d.u) > sep {
                insert_distinct(
                    &mut points,
                    CriticalPoint {
                        u: d.u,
                        energy: d.energy,
                        grad_norm: d.grad_norm,
                        classification: Classification::SaddleCandidate,
                        start: None,
                    },
                    sep,
                );
            }
        }
    }
    points.sort_by(|a, b| {
        a.energy
            .partial_cmp(&b.energy)
            .expect("finite energies")
            .then(a.start.unwrap_or(usize::MAX).cmp(&b.start.unwrap_or(usize::MAX)))
    });
    Ok(CriticalSearch {
        points,
        starts: summaries,
        minimax: minimax_summary,
        regime: regime(problem, thresholds),
    })
}

/// Do the given nonzero critical points survive (as distinct, nonzero, converged
/// points) when `mu` is switched on? Each is continued by descent at the new `mu`.
pub fn persists<T: Real>(
    problem: &TwoParamProblem<T>,
    form: &BilinearForm<T>,
    base_points: &[GridFunction<T>],
    mu: T,
    opts: &MultiOptions,
) -> Result<bool> {
    let chol = form.factor()?;
    let p = problem.with_mu(mu)?;
    let sep = T::lit(opts.sep);
    let mut found: Vec<GridFunction<T>> = Vec::new();
    for u0 in base_points {
        let d = descend(&p, form, &chol, u0.clone(), opts)?;
        if !d.converged || l2_norm(&d.u) <= sep || found.iter().any(|q| l2_distance(q, &d.u) <= sep) {
            return Ok(false);
        }
        found.push(d.u);
    }
    Ok(true)
}

#[derive(Debug, Clone, Serialize)]
pub struct MuBudget {
    /// Largest `mu` verified to keep the points.
    pub mu_hat: f64,
    /// Smallest `mu` verified to lose them (`None` if never lost up to the cap).
    pub mu_fail: Option<f64>,
    pub evaluations: usize,
}

/// Bisection on `mu` with [`persists`] as the predicate.
pub fn estimate_mu_budget<T: Real>(
    problem: &TwoParamProblem<T>,
    form: &BilinearForm<T>,
    base_points: &[GridFunction<T>],
    opts: &MultiOptions,
) -> Result<MuBudget> {
    if base_points.is_empty() {
        return Err(invalid("base_points", "need at least one nonzero critical point"));
    }
    let mut evaluations = 0;
    let mut check = |mu: f64| -> Result<bool> {
        evaluations += 1;
        persists(problem, form, base_points, T::lit(mu), opts)
    };
    let (mut lo, mut hi) = (0.0, None);
    let mut trial = 1e-3 * problem.lambda.as_f64();
    for _ in 0..60 {
        if check(trial)? {
            lo = trial;
            trial *= 2.0;
        } else {
            hi = Some(trial);
            break;
        }
    }
    if let Some(mut h) = hi {
        for _ in 0..opts.bisection_steps {
            if (h - lo) <= 1e-3 * h {
                break;
            }
            let mid = 0.5 * (lo + h);
            if check(mid)? {
                lo = mid;
            } else {
                h = mid;
            }
        }
        hi = Some(h);
    }
    Ok(MuBudget {
        mu_hat: lo,
        mu_fail: hi,
        evaluations,
    })
}
