//! Weights, nonlinearities and the energy functionals built on the discrete form.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{lp_norm, FracParams, Grid, GridFunction};
use crate::error::{invalid, Error, Result};
use crate::lemma_oracles::adaptive_simpson;
use crate::nonlocal_form::{apply_operator, BilinearForm};
use crate::scalar::{signed_pow, Real};

/// `exp(-|x|^2)`.
pub fn gaussian<T: Real>(x: &[T]) -> T {
    (-x.iter().map(|&c| c * c).sum::<T>()).exp()
}

/// Sampled weight `w` together with its declared integrability exponent `nu`.
#[derive(Debug, Clone)]
pub struct Weight<T> {
    values: GridFunction<T>,
    nu: T,
    tau_range: (T, T),
}

impl<T: Real> Weight<T> {
    /// Requires `q < nu < crit`; the `L^tau` range is recorded for diagnostics only.
    pub fn new(values: GridFunction<T>, params: &FracParams<T>, nu: T) -> Result<Self> {
        let (q, crit) = (params.q, params.crit);
        if !(nu > q && nu < crit) {
            return Err(invalid("nu", format!("need q < nu < 2N/(N-2s) ({q} < nu < {crit}), got {nu}")));
        }
        let lo = crit / (crit - q);
        let hi = nu / (nu - T::one()) * lo;
        Ok(Self {
            values,
            nu,
            tau_range: (lo, hi),
        })
    }

    /// The default weight `exp(-|x|^2)` sampled on `grid`.
    pub fn gaussian(grid: Arc<Grid<T>>, params: &FracParams<T>, nu: T) -> Result<Self> {
        Self::new(GridFunction::from_fn(grid, gaussian), params, nu)
    }

    pub fn values(&self) -> &GridFunction<T> {
        &self.values
    }

    pub fn nu(&self) -> T {
        self.nu
    }

    pub fn tau_range(&self) -> (T, T) {
        self.tau_range
    }

    /// Discrete stand-in for an open set where `w > 0`.
    pub fn is_positive_somewhere(&self) -> bool {
        self.values.values().iter().any(|&v| v > T::zero())
    }

    /// `L^tau` norms of `|w|` at both ends of the admissible range.
    pub fn tau_norms(&self) -> Result<(T, T)> {
        let a = self.values.map(T::abs);
        Ok((lp_norm(&a, self.tau_range.0)?, lp_norm(&a, self.tau_range.1)?))
    }

    /// The weight of the maximum (first one on ties).
    pub fn argmax(&self) -> usize {
        self.values
            .values()
            .iter()
            .enumerate()
            .fold((0, T::neg_infinity()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
            .0
    }
}

type Coefficient<T> = dyn Fn(&[T]) -> T + Send + Sync;
type PointFn<T> = dyn Fn(&[T], T) -> T + Send + Sync;

#[derive(Clone)]
enum Profile<T> {
    /// `sign(t) min(|t|^{q-1}, |t|^{tau-1})`.
    Saturating { q: T, tau: T },
    /// `|t|^{r-2} t`.
    Power { r: T },
    Custom { f: Arc<PointFn<T>>, odd: bool },
}

/// A Caratheodory nonlinearity `f(x, t) = c(x) * profile(t)` with its primitive in `t`.
///
/// `bound` returns the dominating coefficient in `|f(x,t)| <= bound(x) |t|^exponent`.
#[derive(Clone)]
pub struct Nonlinearity<T> {
    coeff: Arc<Coefficient<T>>,
    profile: Profile<T>,
    exponent: T,
    growth_tau: Option<T>,
    label: String,
}

impl<T: fmt::Debug> fmt::Debug for Nonlinearity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Nonlinearity")
            .field("label", &self.label)
            .field("exponent", &self.exponent)
            .field("growth_tau", &self.growth_tau)
            .finish()
    }
}

impl<T: Real> Nonlinearity<T> {
    /// `m(x) sign(t) min(|t|^{q-1}, |t|^{tau-1})` with `tau` in `(1, 2)`: `q`-growth near
    /// zero and sub-quadratic growth at infinity.
    pub fn saturating(q: T, tau: T, coeff: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Result<Self> {
        if !(q > T::lit(2.0)) {
            return Err(invalid("q", format!("need q > 2, got {q}")));
        }
        if !(tau > T::one() && tau < T::lit(2.0)) {
            return Err(invalid("tau", format!("need 1 < tau < 2, got {tau}")));
        }
        Ok(Self {
            coeff: Arc::new(coeff),
            profile: Profile::Saturating { q, tau },
            exponent: q - T::one(),
            growth_tau: Some(tau),
            label: format!("saturating(q={q}, tau={tau})"),
        })
    }

    /// `h(x) |t|^{r-2} t`.
    pub fn power(r: T, coeff: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Result<Self> {
        if !(r > T::one()) {
            return Err(invalid("r", format!("need r > 1, got {r}")));
        }
        Ok(Self {
            coeff: Arc::new(coeff),
            profile: Profile::Power { r },
            exponent: r - T::one(),
            growth_tau: None,
            label: format!("power(r={r})"),
        })
    }

    /// Arbitrary `f(x, t) = coeff(x) * profile(x, t)`; the primitive is computed by quadrature.
    pub fn custom(
        exponent: T,
        odd: bool,
        label: impl Into<String>,
        coeff: impl Fn(&[T]) -> T + Send + Sync + 'static,
        profile: impl Fn(&[T], T) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            coeff: Arc::new(coeff),
            profile: Profile::Custom {
                f: Arc::new(profile),
                odd,
            },
            exponent,
            growth_tau: None,
            label: label.into(),
        }
    }

    /// Replaces the coefficient, keeping the profile.
    pub fn with_coefficient(mut self, coeff: impl Fn(&[T]) -> T + Send + Sync + 'static) -> Self {
        self.coeff = Arc::new(coeff);
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn exponent(&self) -> T {
        self.exponent
    }

    pub fn growth_tau(&self) -> Option<T> {
        self.growth_tau
    }

    pub fn is_odd(&self) -> bool {
        match &self.profile {
            Profile::Custom { odd, .. } => *odd,
            _ => true,
        }
    }

    pub fn bound(&self, x: &[T]) -> T {
        (self.coeff)(x)
    }

    pub fn evaluate(&self, x: &[T], t: T) -> T {
        let c = (self.coeff)(x);
        match &self.profile {
            Profile::Saturating { q, tau } => {
                let a = t.abs();
                let e = if a <= T::one() { *q } else { *tau } - T::one();
                c * signed_pow(t, e)
            }
            Profile::Power { r } => c * signed_pow(t, *r - T::one()),
            Profile::Custom { f, .. } => c * f(x, t),
        }
    }

    /// `F(x, t) = int_0^t f(x, xi) d xi`.
    pub fn primitive(&self, x: &[T], t: T) -> T {
        let c = (self.coeff)(x);
        match &self.profile {
            Profile::Saturating { q, tau } => {
                let a = t.abs();
                if a <= T::one() {
                    c * a.powf(*q) / *q
                } else {
                    c * (q.recip() + (a.powf(*tau) - T::one()) / *tau)
                }
            }
            Profile::Power { r } => c * t.abs().powf(*r) / *r,
            Profile::Custom { f, .. } => {
                let g = |xi: f64| f(x, T::lit(xi)).as_f64();
                let v = adaptive_simpson(&g, 0.0, t.as_f64(), 1e-12, 40).unwrap_or(f64::NAN);
                c * T::lit(v)
            }
        }
    }

    /// `d/dt f(x, t)` by central differences.
    pub fn derivative(&self, x: &[T], t: T) -> T {
        let h = T::lit(1e-6) * (T::one() + t.abs());
        (self.evaluate(x, t + h) - self.evaluate(x, t - h)) / (h + h)
    }

    fn random_samples(&self, grid: &Grid<T>, samples: usize, seed: u64, t_range: (f64, f64)) -> Vec<(Vec<T>, T)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = grid.radius().as_f64();
        let (lo, hi) = (t_range.0.ln(), t_range.1.ln());
        (0..samples)
            .map(|_| {
                let x: Vec<T> = (0..grid.dim()).map(|_| T::lit(rng.gen_range(-r..r))).collect();
                let mag = rng.gen_range(lo..hi).exp();
                let t = if rng.gen_bool(0.5) { mag } else { -mag };
                (x, T::lit(t))
            })
            .collect()
    }

    /// Count of random `(x, t)` with `|f(x,t)| > bound(x) |t|^exponent`.
    pub fn growth_violations(&self, grid: &Grid<T>, samples: usize, seed: u64) -> usize {
        let slack = T::one() + T::epsilon() * T::lit(64.0);
        self.random_samples(grid, samples, seed, (1e-4, 1e2))
            .iter()
            .filter(|(x, t)| self.evaluate(x, *t).abs() > slack * self.bound(x) * t.abs().powf(self.exponent))
            .count()
    }

    /// Count of random large `|t|` with `F(x,t) > bound(x) |t|^tau / tau` (sub-quadratic growth at infinity).
    pub fn growth_at_infinity_violations(&self, grid: &Grid<T>, samples: usize, seed: u64) -> Option<usize> {
        let tau = self.growth_tau?;
        let slack = T::one() + T::epsilon() * T::lit(64.0);
        Some(
            self.random_samples(grid, samples, seed, (10.0, 1e6))
                .iter()
                .filter(|(x, t)| self.primitive(x, *t) > slack * self.bound(x) * t.abs().powf(tau) / tau)
                .count(),
        )
    }

    /// Largest relative mismatch between `dF/dt` (central differences) and `f`.
    pub fn primitive_defect(&self, grid: &Grid<T>, samples: usize, seed: u64) -> T {
        self.random_samples(grid, samples, seed, (1e-2, 1e1))
            .iter()
            .filter(|(_, t)| (t.abs() - T::one()).abs() > T::lit(1e-3))
            .map(|(x, t)| {
                let h = T::lit(1e-5) * t.abs();
                let fd = (self.primitive(x, *t + h) - self.primitive(x, *t - h)) / (h + h);
                let f = self.evaluate(x, *t);
                (fd - f).abs() / f.abs().max(T::lit(1e-12))
            })
            .fold(T::zero(), T::max)
    }
}

/// `h^N sum_i w_i |u_i|^q`.
pub fn weighted_power<T: Real>(u: &GridFunction<T>, w: &GridFunction<T>, q: T) -> Result<T> {
    u.same_grid(w.grid())?;
    Ok(u.grid().cell_volume()
        * u.values()
            .iter()
            .zip(w.values())
            .map(|(&ui, &wi)| wi * ui.abs().powf(q))
            .sum::<T>())
}

/// `int w|u|^q / ([u]^2 + [u]^{crit})`, undefined when `[u] = 0`.
pub fn quotient<T: Real>(u: &GridFunction<T>, w: &Weight<T>, params: &FracParams<T>, form: &BilinearForm<T>) -> Result<T> {
    let g = form.eval(u, u)?.max(T::zero());
    if !(g > T::zero()) {
        return Err(Error::Undefined("quotient at a function of zero seminorm".into()));
    }
    let den = g + g.powf(params.crit / T::lit(2.0));
    Ok(weighted_power(u, w.values(), params.q)? / den)
}

/// `Phi(u) = E(u, u) / 2`.
pub fn phi<T: Real>(u: &GridFunction<T>, form: &BilinearForm<T>) -> Result<T> {
    Ok(form.eval(u, u)? / T::lit(2.0))
}

/// `J(u) = h^N sum_i F(x_i, u_i)`.
pub fn big_j<T: Real>(u: &GridFunction<T>, f: &Nonlinearity<T>) -> T {
    let g = u.grid();
    g.cell_volume()
        * g.nodes()
            .zip(u.values())
            .map(|(x, &t)| f.primitive(x, t))
            .sum::<T>()
}

/// `Psi(u) = (1/r) h^N sum_i h_i |u_i|^r`.
pub fn psi<T: Real>(u: &GridFunction<T>, g_weight: &GridFunction<T>, r: T) -> Result<T> {
    if !(r > T::one()) {
        return Err(invalid("r", format!("need r > 1, got {r}")));
    }
    Ok(weighted_power(u, g_weight, r)? / r)
}

/// One of the three energy functionals, for uniform value/gradient access.
#[derive(Debug, Clone, Copy)]
pub enum Functional<'a, T> {
    Phi(&'a BilinearForm<T>),
    BigJ(&'a Nonlinearity<T>),
    Psi { weight: &'a GridFunction<T>, r: T },
}

impl<T: Real> Functional<'_, T> {
    pub fn value(&self, u: &GridFunction<T>) -> Result<T> {
        match *self {
            Functional::Phi(form) => phi(u, form),
            Functional::BigJ(f) => Ok(big_j(u, f)),
            Functional::Psi { weight, r } => psi(u, weight, r),
        }
    }

    /// Gradient in the discrete `L^2` pairing.
    pub fn gradient(&self, u: &GridFunction<T>) -> Result<GridFunction<T>> {
        gradient(*self, u)
    }
}

/// `G` with `<G, phi> = d/de F(u + e phi)|_{e=0}` in the discrete `L^2` pairing.
pub fn gradient<T: Real>(functional: Functional<'_, T>, u: &GridFunction<T>) -> Result<GridFunction<T>> {
    match functional {
        Functional::Phi(form) => apply_operator(form, u),
        Functional::BigJ(f) => {
            let g = u.grid();
            let vals = g.nodes().zip(u.values()).map(|(x, &t)| f.evaluate(x, t)).collect();
            u.with_values(vals)
        }
        Functional::Psi { weight, r } => {
            if !(r > T::one()) {
                return Err(invalid("r", format!("need r > 1, got {r}")));
            }
            u.same_grid(weight.grid())?;
            let vals = u
                .values()
                .iter()
                .zip(weight.values())
                .map(|(&t, &h)| h * signed_pow(t, r - T::one()))
                .collect();
            u.with_values(vals)
        }
    }
}
