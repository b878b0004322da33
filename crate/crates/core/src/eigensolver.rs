//! Maximization of the weighted quotient
//!
//! ```text
//! Q(u) = int w|u|^q / ([u]^2 + [u]^{2*})
//! ```
//!
//! and recovery of the eigenvalue of the associated weak problem
//! `E(u, phi) = lambda int w |u|^{q-2} u phi`.
//!
//! Along a ray `c -> Q(c v)` the maximum is attained exactly where
//! `[c v]^{2*-2} = (q-2)/(2*-q)`, so iterates are kept on that level set and
//! ascent only has to act on directions. Steps follow the gradient taken in
//! the energy inner product, which is the projected gradient preconditioned by
//! the form matrix.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{FracParams, GridFunction};
use crate::error::{Error, Result};
use crate::functionals::{quotient, weighted_power, Weight};
use crate::linalg::Cholesky;
use crate::nonlocal_form::{random_probe, BilinearForm};
use crate::scalar::{signed_pow, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 10_000,
            restarts: 2,
            seed: 0,
        }
    }
}

/// A stationary point reached from one start.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub start: usize,
    pub quotient_value: f64,
    pub lambda: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EigenPair<T> {
    pub u: GridFunction<T>,
    pub lambda: T,
    pub quotient_value: T,
    pub residual: T,
    pub iterations: usize,
    /// Index of the start that produced `u` (0 is the positive bump).
    pub start: usize,
    /// Quotient value after every accepted step of the winning run.
    pub history: Vec<T>,
    /// Every start, converged or not, in start order.
    pub candidates: Vec<Candidate>,
}

/// `((q-2)/(2*-q))^{1/(2*-2)}`: the seminorm of every nontrivial stationary point.
pub fn target_seminorm<T: Real>(params: &FracParams<T>) -> T {
    let two = T::lit(2.0);
    ((params.q - two) / (params.crit - params.q)).powf((params.crit - two).recip())
}

/// Rescales `v` to the maximizer of `c -> Q(c v)`, `c > 0`.
pub fn ray_scale<T: Real>(
    v: &GridFunction<T>,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
) -> Result<(T, GridFunction<T>)> {
    if !(weighted_power(v, w.values(), params.q)? > T::zero()) {
        return Err(Error::Undefined("ray scaling needs int w|v|^q > 0".into()));
    }
    let t = form.seminorm(v)?;
    if !(t > T::zero()) {
        return Err(Error::Undefined("ray scaling needs a nonzero seminorm".into()));
    }
    let c = target_seminorm(params) / t;
    Ok((c, v.scaled(c)))
}

/// `lambda = q([u]^2 + [u]^{2*}) / ((2 + 2* [u]^{2*-2}) int w|u|^q)`.
pub fn lambda_from<T: Real>(
    u: &GridFunction<T>,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
) -> Result<T> {
    let integral = weighted_power(u, w.values(), params.q)?;
    if !(integral > T::zero()) {
        return Err(Error::Undefined("eigenvalue needs int w|u|^q > 0".into()));
    }
    let g = form.eval(u, u)?.max(T::zero());
    let t = g.sqrt();
    let two = T::lit(2.0);
    let num = params.q * (g + t.powf(params.crit));
    let den = (two + params.crit * t.powf(params.crit - two)) * integral;
    Ok(num / den)
}

/// `max_i |E(u, e_i) - lambda h^N w_i |u_i|^{q-2} u_i| / max(1, [u])`.
pub fn weak_residual<T: Real>(
    u: &GridFunction<T>,
    lambda: T,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
) -> Result<T> {
    u.same_grid(w.values().grid())?;
    let eu = form.pair_with_basis(u)?;
    let vol = form.grid().cell_volume();
    let qm1 = params.q - T::one();
    let worst = eu
        .iter()
        .zip(u.values())
        .zip(w.values().values())
        .map(|((&e, &ui), &wi)| (e - lambda * vol * wi * signed_pow(ui, qm1)).abs())
        .fold(T::zero(), T::max);
    Ok(worst / T::one().max(form.seminorm(u)?))
}

/// Gradient of the quotient in the discrete `L^2` pairing.
pub fn quotient_gradient<T: Real>(
    u: &GridFunction<T>,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
) -> Result<GridFunction<T>> {
    let g = form.eval(u, u)?;
    if !(g > T::zero()) {
        return Err(Error::Undefined("quotient gradient at zero seminorm".into()));
    }
    let two = T::lit(2.0);
    let (q, crit) = (params.q, params.crit);
    let t = g.sqrt();
    let den = g + t.powf(crit);
    let integral = weighted_power(u, w.values(), q)?;
    let au = form.apply(u)?;
    let radial = (two + crit * t.powf(crit - two)) * integral;
    let vals = u
        .values()
        .iter()
        .zip(w.values().values())
        .zip(au.values())
        .map(|((&ui, &wi), &ai)| (q * den * wi * signed_pow(ui, q - T::one()) - radial * ai) / (den * den))
        .collect();
    u.with_values(vals)
}

struct Run<T> {
    u: GridFunction<T>,
    lambda: T,
    quotient_value: T,
    residual: T,
    iterations: usize,
    converged: bool,
    history: Vec<T>,
}

/// Residual below which the linearly convergent ascent hands over to Newton.
const POLISH_BELOW: f64 = 1e-5;

/// Newton on `M v = h^N w |v|^{q-2} v`, started from `v = lambda^{1/(q-2)} u` (the
/// rescaling that turns an approximate stationary point into an approximate root);
/// the root is ray-scaled back. `None` if Newton stalls or hits a singular Jacobian.
fn newton_polish<T: Real>(
    u: &GridFunction<T>,
    lambda: T,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
) -> Result<Option<GridFunction<T>>> {
    let two = T::lit(2.0);
    let q = params.q;
    let vol = form.grid().cell_volume();
    let m = form.matrix();
    let mut v: Vec<T> = u.values().iter().map(|&x| x * lambda.powf((q - two).recip())).collect();
    let wv = w.values().values();
    for _ in 0..20 {
        let mv = m.mul_vec(&v);
        let g: Vec<T> = mv
            .iter()
            .zip(&v)
            .zip(wv)
            .map(|((&a, &x), &wi)| a - vol * wi * signed_pow(x, q - T::one()))
            .collect();
        let diag: Vec<T> = v
            .iter()
            .zip(wv)
            .map(|(&x, &wi)| -(q - T::one()) * vol * wi * x.abs().powf(q - two))
            .collect();
        let step = match m.shifted(&diag).solve_general(&g) {
            Ok(step) => step,
            Err(Error::Undefined(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let size = step.iter().fold(T::zero(), |a, s| a.max(s.abs()));
        let top = v.iter().fold(T::zero(), |a, s| a.max(s.abs()));
        if !size.is_finite() {
            return Ok(None);
        }
        for (x, s) in v.iter_mut().zip(&step) {
            *x -= *s;
        }
        if size <= T::lit(1e-15) * top {
            break;
        }
    }
    let v = u.with_values(v)?;
    match ray_scale(&v, w, params, form) {
        Ok((_, scaled)) => Ok(Some(scaled)),
        Err(Error::Undefined(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn ascend<T: Real>(
    start: &GridFunction<T>,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
    chol: &Cholesky<T>,
    opts: &SolverOptions,
) -> Result<Run<T>> {
    let tol = T::lit(opts.tol);
    let vol = form.grid().cell_volume();
    let qm1 = params.q - T::one();
    let (_, mut u) = ray_scale(start, w, params, form)?;
    let mut value = quotient(&u, w, params, form)?;
    let mut history = vec![value];
    let mut improvement = T::infinity();
    let mut iterations = 0;
    let mut polish_attempts = 0;
    loop {
        let lambda = lambda_from(&u, w, params, form)?;
        let residual = weak_residual(&u, lambda, w, params, form)?;
        if residual < tol && improvement < tol {
            return Ok(Run {
                u,
                lambda,
                quotient_value: value,
                residual,
                iterations,
                converged: true,
                history,
            });
        }
        if iterations >= opts.max_iter {
            return Ok(Run {
                u,
                lambda,
                quotient_value: value,
                residual,
                iterations,
                converged: false,
                history,
            });
        }
        iterations += 1;
        if residual < T::lit(POLISH_BELOW) && polish_attempts < 3 {
            polish_attempts += 1;
            if let Some(next) = newton_polish(&u, lambda, w, params, form)? {
                let next_value = quotient(&next, w, params, form)?;
                let next_residual = weak_residual(&next, lambda_from(&next, w, params, form)?, w, params, form)?;
                if next_residual < residual && next_value >= value * (T::one() - T::lit(1e-13)) {
                    improvement = (next_value - value).abs() / value.abs().max(T::min_positive_value());
                    u = next;
                    value = next_value;
                    history.push(value);
                    continue;
                }
            }
        }
        // energy-gradient proposal; equals u exactly at a stationary point
        let rhs: Vec<T> = u
            .values()
            .iter()
            .zip(w.values().values())
            .map(|(&ui, &wi)| lambda * vol * wi * signed_pow(ui, qm1))
            .collect();
        let proposal = u.with_values(chol.solve(&rhs))?;
        let direction = proposal.axpy(-T::one(), &u);
        let mut alpha = T::one();
        let mut accepted = None;
        while alpha > T::lit(1e-12) {
            let trial = u.axpy(alpha, &direction);
            if let Ok((_, trial)) = ray_scale(&trial, w, params, form) {
                let tv = quotient(&trial, w, params, form)?;
                if tv >= value {
                    accepted = Some((trial, tv));
                    break;
                }
            }
            alpha = alpha * T::lit(0.5);
        }
        match accepted {
            Some((next, next_value)) => {
                improvement = (next_value - value) / value.abs().max(T::min_positive_value());
                u = next;
                value = next_value;
                history.push(value);
            }
            // no ascent direction left at working precision
            None => improvement = T::zero(),
        }
    }
}

/// Positive Gaussian bump centered at the node where the weight is largest.
pub fn positive_bump<T: Real>(w: &Weight<T>) -> GridFunction<T> {
    let grid = w.values().grid().clone();
    let center = grid.node(w.argmax()).to_vec();
    GridFunction::from_fn(grid, |x| {
        (-x.iter().zip(&center).map(|(&a, &c)| (a - c) * (a - c)).sum::<T>()).exp()
    })
}

/// Maximizes the quotient from the positive bump plus `opts.restarts` random
/// starts and returns the best stationary point with its eigenvalue.
pub fn maximize_quotient<T: Real>(
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
    opts: &SolverOptions,
) -> Result<EigenPair<T>> {
    if !w.is_positive_somewhere() {
        return Err(Error::WeightNotPositive);
    }
    w.values().same_grid(form.grid())?;
    let chol = form.factor()?;
    let grid: Arc<_> = form.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![positive_bump(w)];
    for k in 0..opts.restarts {
        starts.push(random_probe(&grid, &mut rng, k));
    }

    let mut candidates = Vec::new();
    let mut best: Option<(usize, Run<T>)> = None;
    let mut worst_residual = T::zero();
    for (idx, start) in starts.iter().enumerate() {
        let run = match ascend(start, w, params, form, &chol, opts) {
            Ok(run) => run,
            // a start with int w|v|^q = 0 has no ray maximizer
            Err(Error::Undefined(_)) => continue,
            Err(e) => return Err(e),
        };
        candidates.push(Candidate {
            start: idx,
            quotient_value: run.quotient_value.as_f64(),
            lambda: run.lambda.as_f64(),
            residual: run.residual.as_f64(),
            iterations: run.iterations,
            converged: run.converged,
        });
        if !run.converged {
            worst_residual = worst_residual.max(run.residual);
            continue;
        }
        let better = best.as_ref().map_or(true, |(_, b)| run.quotient_value > b.quotient_value);
        if better {
            best = Some((idx, run));
        }
    }
    match best {
        Some((start, run)) => Ok(EigenPair {
            u: run.u,
            lambda: run.lambda,
            quotient_value: run.quotient_value,
            residual: run.residual,
            iterations: run.iterations,
            start,
            history: run.history,
            candidates,
        }),
        None => Err(Error::NonConvergence {
            iterations: opts.max_iter,
            residual: worst_residual.as_f64(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Grid};
    use crate::nonlocal_form::{assemble, Kernel};
    use approx::assert_relative_eq;

    fn setup(radius: f64, h: f64, s: f64, q: f64) -> (FracParams<f64>, BilinearForm<f64>, Weight<f64>) {
        let g = Arc::new(build_grid::<f64>(1, radius, h).unwrap());
        let params = FracParams::new(1, s, q).unwrap();
        let form = assemble(g.clone(), Kernel::fractional(1, s), true).unwrap();
        let nu = 0.5 * (q + params.crit);
        let w = Weight::gaussian(g, &params, nu).unwrap();
        (params, form, w)
    }

    #[test]
    fn target_seminorm_values() {
        let p = FracParams::new(1, 0.25, 3.0).unwrap();
        assert_relative_eq!(target_seminorm(&p), 1.0);
        let p = FracParams::new(1, 0.25, 2.5).unwrap();
        assert_relative_eq!(target_seminorm(&p), (0.5f64 / 1.5).sqrt(), max_relative = 1e-15);
        assert_relative_eq!(target_seminorm(&p), 0.577350, epsilon = 1e-6);
    }

    #[test]
    fn lambda_consistency_at_unit_seminorm() {
        let (params, form, w) = setup(2.0, 0.5, 0.25, 3.0);
        let v = positive_bump(&w);
        let (_, u) = ray_scale(&v, &w, &params, &form).unwrap();
        assert_relative_eq!(form.seminorm(&u).unwrap(), 1.0, max_relative = 1e-12);
        let i = weighted_power(&u, w.values(), 3.0).unwrap();
        let lambda = lambda_from(&u, &w, &params, &form).unwrap();
        // 3 (1 + 1) / ((2 + 4) I) = 1 / I = t^2 / I
        assert_relative_eq!(lambda, 1.0 / i, max_relative = 1e-12);
        let neg = lambda_from(&u.scaled(-1.0), &w, &params, &form).unwrap();
        assert_eq!(lambda, neg);
    }

    #[test]
    fn lambda_and_ray_need_positive_numerator() {
        let g = Arc::new(build_grid::<f64>(1, 2.0, 0.5).unwrap());
        let params = FracParams::new(1, 0.25, 3.0).unwrap();
        let form = assemble(g.clone(), Kernel::fractional(1, 0.25), true).unwrap();
        let w = Weight::new(GridFunction::new(g.clone(), vec![0.0; 7]).unwrap(), &params, 3.5).unwrap();
        let u = GridFunction::new(g, vec![1.0; 7]).unwrap();
        assert!(lambda_from(&u, &w, &params, &form).is_err());
        assert!(ray_scale(&u, &w, &params, &form).is_err());
        assert!(matches!(
            maximize_quotient(&w, &params, &form, &SolverOptions::default()),
            Err(Error::WeightNotPositive)
        ));
    }

    #[test]
    fn weak_residual_zero_and_random() {
        let (params, form, w) = setup(2.0, 0.5, 0.25, 3.0);
        let z = GridFunction::zeros(form.grid().clone());
        assert_eq!(weak_residual(&z, 3.0, &w, &params, &form).unwrap(), 0.0);
        let u = GridFunction::new(form.grid().clone(), vec![0.1, -0.4, 0.9, 0.3, -0.2, 0.6, 0.05]).unwrap();
        let l = lambda_from(&u, &w, &params, &form).unwrap();
        assert!(weak_residual(&u, l, &w, &params, &form).unwrap() > 1e-6);
    }

    #[test]
    fn quotient_gradient_matches_finite_differences() {
        let (params, form, w) = setup(2.0, 0.5, 0.3, 3.2);
        let g = form.grid().clone();
        let u = GridFunction::new(g.clone(), vec![0.2, 0.5, 0.9, 1.0, 0.7, 0.1, -0.3]).unwrap();
        let phi = GridFunction::new(g, vec![0.3, -0.1, 0.4, 0.2, -0.5, 0.9, 0.1]).unwrap();
        let eps = 1e-5;
        let fd = (quotient(&u.axpy(eps, &phi), &w, &params, &form).unwrap()
            - quotient(&u.axpy(-eps, &phi), &w, &params, &form).unwrap())
            / (2.0 * eps);
        let an = quotient_gradient(&u, &w, &params, &form).unwrap().dot(&phi);
        assert_relative_eq!(fd, an, max_relative = 1e-6);
    }

    #[test]
    fn solver_reaches_stationarity_and_identities() {
        let (params, form, w) = setup(4.0, 0.25, 0.25, 3.0);
        let pair = maximize_quotient(&w, &params, &form, &SolverOptions::default()).unwrap();
        let t = form.seminorm(&pair.u).unwrap();
        assert_relative_eq!(t, 1.0, max_relative = 1e-6);
        assert!(pair.residual <= 1e-8);
        assert!(pair.lambda > 0.0);
        let e = form.eval(&pair.u, &pair.u).unwrap();
        let i = weighted_power(&pair.u, w.values(), params.q).unwrap();
        assert_relative_eq!(e, pair.lambda * i, max_relative = 1e-8);
        assert!(pair.history.windows(2).all(|h| h[1] >= h[0] * (1.0 - 1e-13)));
        let neg = pair.u.scaled(-1.0);
        assert_eq!(quotient(&neg, &w, &params, &form).unwrap(), pair.quotient_value);
        assert!(weak_residual(&neg, pair.lambda, &w, &params, &form).unwrap() <= 1e-8);
    }

    #[test]
    fn three_node_grid_solves() {
        let g = Arc::new(Grid::<f64>::from_nodes(1, 1.0, 0.5, &[vec![-0.5], vec![0.0], vec![0.5]]).unwrap());
        let params = FracParams::new(1, 0.25, 3.0).unwrap();
        let form = assemble(g.clone(), Kernel::fractional(1, 0.25), true).unwrap();
        let w = Weight::new(GridFunction::new(g, vec![1.0; 3]).unwrap(), &params, 3.5).unwrap();
        let pair = maximize_quotient(&w, &params, &form, &SolverOptions::default()).unwrap();
        assert!(pair.residual <= 1e-8);
    }
}
