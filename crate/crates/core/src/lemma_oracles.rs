//! Pointwise oracles for the two algebraic inequalities behind the regularity
//! argument, plus seeded fuzz campaigns over them.
//!
//! With `J_p(t) = |t|^{p-2} t`:
//!
//! ```text
//! (convex f, A, B >= 0)   J_p(a-b) [A J_p(f'(a)) - B J_p(f'(b))] >= J_p(f(a)-f(b)) (A-B)
//! (increasing g)          J_p(a-b) (g(a) - g(b)) >= |G(a) - G(b)|^p,   G(t) = int_0^t g'(s)^{1/p} ds
//! ```

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::scalar::{signed_pow, Real};

/// Relative slack used when deciding whether an inequality holds.
pub const INEQUALITY_TOL: f64 = 1e-12;

/// Relative accuracy of the quadrature for `G`.
pub const TRANSFORM_TOL: f64 = 1e-10;

type ScalarFn<T> = dyn Fn(T) -> T + Send + Sync;

/// `J_p(t) = |t|^{p-2} t`.
#[inline]
pub fn jp<T: Real>(t: T, p: T) -> T {
    signed_pow(t, p - T::one())
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` (either orientation).
pub fn adaptive_simpson<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, rel_tol: T, max_depth: u32) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    if b < a {
        return adaptive_simpson(f, b, a, rel_tol, max_depth).map(|v| -v);
    }
    let six = T::lit(6.0);
    let half = T::lit(0.5);
    let (fa, fb) = (f(a), f(b));
    let m = (a + b) * half;
    let fm = f(m);
    let whole = (b - a) / six * (fa + T::lit(4.0) * fm + fb);
    if !whole.is_finite() {
        return Err(Error::Quadrature(format!("non-finite integrand on [{a}, {b}]")));
    }
    // a coarse estimate sets the absolute scale of the requested relative accuracy
    let eps = rel_tol * whole.abs().max(T::min_positive_value().sqrt());
    #[allow(clippy::too_many_arguments)]
    fn step<T: Real>(f: &dyn Fn(T) -> T, a: T, b: T, fa: T, fm: T, fb: T, whole: T, eps: T, depth: u32) -> Result<T> {
        let half = T::lit(0.5);
        let m = (a + b) * half;
        let (lm, rm) = ((a + m) * half, (m + b) * half);
        let (flm, frm) = (f(lm), f(rm));
        let six = T::lit(6.0);
        let four = T::lit(4.0);
        let left = (m - a) / six * (fa + four * flm + fm);
        let right = (b - m) / six * (fm + four * frm + fb);
        let delta = left + right - whole;
        if !delta.is_finite() {
            return Err(Error::Quadrature(format!("non-finite integrand near {m}")));
        }
        if depth == 0 || delta.abs() <= T::lit(15.0) * eps {
            return Ok(left + right + delta / T::lit(15.0));
        }
        Ok(step(f, a, m, fa, flm, fm, left, eps * half, depth - 1)?
            + step(f, m, b, fm, frm, fb, right, eps * half, depth - 1)?)
    }
    step(f, a, b, fa, fm, fb, whole, eps, max_depth)
}

/// A convex function with its derivative.
#[derive(Clone)]
pub struct ConvexProbe<T> {
    f: Arc<ScalarFn<T>>,
    f_prime: Arc<ScalarFn<T>>,
    p: T,
    label: String,
}

impl<T: Real> fmt::Debug for ConvexProbe<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConvexProbe({}, p={})", self.label, self.p)
    }
}

impl<T: Real> ConvexProbe<T> {
    pub fn new(
        label: impl Into<String>,
        p: T,
        f: impl Fn(T) -> T + Send + Sync + 'static,
        f_prime: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(p > T::one()) || !p.is_finite() {
            return Err(invalid("p", format!("need 1 < p < inf, got {p}")));
        }
        Ok(Self {
            f: Arc::new(f),
            f_prime: Arc::new(f_prime),
            p,
            label: label.into(),
        })
    }

    pub fn square(p: T) -> Result<Self> {
        Self::new("t^2", p, |t| t * t, |t| t + t)
    }

    pub fn abs(p: T) -> Result<Self> {
        Self::new("|t|", p, T::abs, |t| if t == T::zero() { T::zero() } else { t.signum() })
    }

    pub fn exp(p: T) -> Result<Self> {
        Self::new("exp t", p, T::exp, T::exp)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn p(&self) -> T {
        self.p
    }

    /// Midpoint convexity on the given pairs; returns the number of failures.
    pub fn convexity_failures(&self, pairs: &[(T, T)]) -> usize {
        let half = T::lit(0.5);
        pairs
            .iter()
            .filter(|(a, b)| {
                let mid = (self.f)((*a + *b) * half);
                let avg = ((self.f)(*a) + (self.f)(*b)) * half;
                mid > avg + T::lit(INEQUALITY_TOL) * avg.abs().max(T::one())
            })
            .count()
    }
}

/// An increasing function with its (nonnegative) derivative.
#[derive(Clone)]
pub struct MonotoneProbe<T> {
    g: Arc<ScalarFn<T>>,
    g_prime: Arc<ScalarFn<T>>,
    p: T,
    label: String,
}

impl<T: Real> fmt::Debug for MonotoneProbe<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MonotoneProbe({}, p={})", self.label, self.p)
    }
}

impl<T: Real> MonotoneProbe<T> {
    pub fn new(
        label: impl Into<String>,
        p: T,
        g: impl Fn(T) -> T + Send + Sync + 'static,
        g_prime: impl Fn(T) -> T + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(p > T::one()) || !p.is_finite() {
            return Err(invalid("p", format!("need 1 < p < inf, got {p}")));
        }
        Ok(Self {
            g: Arc::new(g),
            g_prime: Arc::new(g_prime),
            p,
            label: label.into(),
        })
    }

    pub fn identity(p: T) -> Result<Self> {
        Self::new("t", p, |t| t, |_| T::one())
    }

    pub fn cube(p: T) -> Result<Self> {
        Self::new("t^3", p, |t| t * t * t, |t| T::lit(3.0) * t * t)
    }

    pub fn arctan(p: T) -> Result<Self> {
        Self::new("arctan t", p, T::atan, |t| (T::one() + t * t).recip())
    }

    pub fn cubic_plus_linear(p: T) -> Result<Self> {
        Self::new("t + t^3", p, |t| t + t * t * t, |t| T::one() + T::lit(3.0) * t * t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn p(&self) -> T {
        self.p
    }

    pub fn value(&self, t: T) -> T {
        (self.g)(t)
    }

    /// `int_from^to g'(s)^{1/p} ds`.
    fn integral(&self, from: T, to: T) -> Result<T> {
        let inv_p = self.p.recip();
        let bad = std::cell::Cell::new(false);
        let integrand = |s: T| {
            let d = (self.g_prime)(s);
            if d < T::zero() {
                bad.set(true);
                T::zero()
            } else {
                d.powf(inv_p)
            }
        };
        let v = adaptive_simpson(&integrand, from, to, T::lit(TRANSFORM_TOL), 48)?;
        if bad.get() {
            return Err(invalid("g_prime", "negative derivative sample: g is not increasing"));
        }
        Ok(v)
    }
}

/// `G(t) = int_0^t g'(s)^{1/p} ds`.
pub fn g_transform<T: Real>(probe: &MonotoneProbe<T>, t: T) -> Result<T> {
    probe.integral(T::zero(), t)
}

/// Both sides of an inequality `lhs >= rhs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck<T> {
    pub lhs: T,
    pub rhs: T,
    pub holds: bool,
}

impl<T: Real> InequalityCheck<T> {
    fn new(lhs: T, rhs: T) -> Self {
        let scale = T::one().max(lhs.abs()).max(rhs.abs());
        let holds = lhs >= rhs - T::lit(INEQUALITY_TOL) * scale;
        Self { lhs, rhs, holds }
    }

    pub fn margin(&self) -> T {
        self.lhs - self.rhs
    }
}

#[allow(non_snake_case)]
pub fn lemma1_check<T: Real>(probe: &ConvexProbe<T>, a: T, b: T, A: T, B: T) -> Result<InequalityCheck<T>> {
    if A < T::zero() || B < T::zero() {
        return Err(invalid("A, B", format!("weights must be nonnegative, got A = {A}, B = {B}")));
    }
    let p = probe.p;
    let lhs = jp(a - b, p) * (A * jp((probe.f_prime)(a), p) - B * jp((probe.f_prime)(b), p));
    let rhs = jp((probe.f)(a) - (probe.f)(b), p) * (A - B);
    Ok(InequalityCheck::new(lhs, rhs))
}

pub fn lemma2_check<T: Real>(probe: &MonotoneProbe<T>, a: T, b: T) -> Result<InequalityCheck<T>> {
    let p = probe.p;
    // also validates g' >= 0 on the span of 0, a, b
    g_transform(probe, a)?;
    g_transform(probe, b)?;
    // integrating b..a directly avoids cancellation in G(a) - G(b)
    let dg = probe.integral(b, a)?;
    let lhs = jp(a - b, p) * ((probe.g)(a) - (probe.g)(b));
    let rhs = dg.abs().powf(p);
    Ok(InequalityCheck::new(lhs, rhs))
}

/// One fuzz draw, serialized as a JSON line.
#[derive(Debug, Clone, Serialize)]
pub struct FuzzRecord {
    pub lemma: u8,
    pub function: String,
    pub p: f64,
    pub a: f64,
    pub b: f64,
    #[serde(rename = "A", skip_serializing_if = "Option::is_none")]
    pub big_a: Option<f64>,
    #[serde(rename = "B", skip_serializing_if = "Option::is_none")]
    pub big_b: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FuzzReport {
    pub lemma: u8,
    pub draws: usize,
    pub violations: usize,
    pub min_margin: f64,
    pub seed: u64,
    #[serde(skip)]
    pub records: Vec<FuzzRecord>,
}

impl FuzzReport {
    fn from_records(lemma: u8, seed: u64, records: Vec<FuzzRecord>) -> Self {
        Self {
            lemma,
            draws: records.len(),
            violations: records.iter().filter(|r| !r.holds).count(),
            min_margin: records.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min),
            seed,
            records,
        }
    }
}

const FUZZ_EXPONENTS: [f64; 3] = [1.5, 2.0, 3.0];

/// Random `a, b in [-10, 10]`, `A, B in [0, 10]`, `f in {t^2, |t|, exp t}`, `p in {1.5, 2, 3}`.
pub fn lemma1_fuzz(draws: usize, seed: u64) -> Result<FuzzReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::new();
    for p in FUZZ_EXPONENTS {
        probes.push(ConvexProbe::square(p)?);
        probes.push(ConvexProbe::abs(p)?);
        probes.push(ConvexProbe::exp(p)?);
    }
    let mut records = Vec::with_capacity(draws);
    for _ in 0..draws {
        let probe = &probes[rng.gen_range(0..probes.len())];
        let (a, b) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let (ca, cb) = (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0));
        let c = lemma1_check(probe, a, b, ca, cb)?;
        records.push(FuzzRecord {
            lemma: 1,
            function: probe.label.clone(),
            p: probe.p,
            a,
            b,
            big_a: Some(ca),
            big_b: Some(cb),
            lhs: c.lhs,
            rhs: c.rhs,
            margin: c.margin(),
            holds: c.holds,
        });
    }
    Ok(FuzzReport::from_records(1, seed, records))
}

/// Random `a, b in [-10, 10]`, `g in {t^3, arctan t, t + t^3}`, `p in {1.5, 2, 3}`.
pub fn lemma2_fuzz(draws: usize, seed: u64) -> Result<FuzzReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = Vec::new();
    for p in FUZZ_EXPONENTS {
        probes.push(MonotoneProbe::cube(p)?);
        probes.push(MonotoneProbe::arctan(p)?);
        probes.push(MonotoneProbe::cubic_plus_linear(p)?);
    }
    let mut records = Vec::with_capacity(draws);
    for _ in 0..draws {
        let probe = &probes[rng.gen_range(0..probes.len())];
        let (a, b) = (rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
        let c = lemma2_check(probe, a, b)?;
        records.push(FuzzRecord {
            lemma: 2,
            function: probe.label.clone(),
            p: probe.p,
            a,
            b,
            big_a: None,
            big_b: None,
            lhs: c.lhs,
            rhs: c.rhs,
            margin: c.margin(),
            holds: c.holds,
        });
    }
    Ok(FuzzReport::from_records(2, seed, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12, 50).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-11);
        let w = adaptive_simpson(&|x: f64| x.exp(), 1.0, -1.0, 1e-12, 50).unwrap();
        assert_relative_eq!(w, -(1f64.exp() - (-1f64).exp()), max_relative = 1e-11);
    }

    #[test]
    fn lemma1_examples() {
        let id = ConvexProbe::new("t", 2.0, |t: f64| t, |_| 1.0).unwrap();
        let c = lemma1_check(&id, 2.0, 1.0, 3.0, 1.0).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (2.0, 2.0, true));
        let sq = ConvexProbe::square(2.0).unwrap();
        let c = lemma1_check(&sq, 1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!((c.lhs, c.rhs, c.holds), (2.0, 0.0, true));
        assert!(lemma1_check(&sq, 1.0, 0.0, -1.0, 1.0).is_err());
        assert!(ConvexProbe::square(1.0).is_err());
    }

    #[test]
    fn lemma1_swap_invariance_is_exact() {
        let e = ConvexProbe::exp(3.0).unwrap();
        let x = lemma1_check(&e, 1.3, -0.7, 2.5, 0.25).unwrap();
        let y = lemma1_check(&e, -0.7, 1.3, 0.25, 2.5).unwrap();
        assert_eq!(x.lhs, y.lhs);
        assert_eq!(x.rhs, y.rhs);
    }

    #[test]
    fn transform_examples() {
        let id = MonotoneProbe::identity(2.0).unwrap();
        assert_relative_eq!(g_transform(&id, 1.7).unwrap(), 1.7, max_relative = 1e-12);
        let cube = MonotoneProbe::cube(2.0).unwrap();
        // int_0^1 sqrt(3 s^2) ds = sqrt(3)/2
        assert_relative_eq!(g_transform(&cube, 1.0).unwrap(), 3f64.sqrt() / 2.0, max_relative = 1e-10);
        assert_eq!(g_transform(&cube, 0.0).unwrap(), 0.0);
        let dec = MonotoneProbe::new("-t", 2.0, |t: f64| -t, |_| -1.0).unwrap();
        assert!(g_transform(&dec, 1.0).is_err());
    }

    #[test]
    fn lemma2_examples() {
        let id = MonotoneProbe::identity(2.0).unwrap();
        let c = lemma2_check(&id, 0.3, -1.1).unwrap();
        assert_relative_eq!(c.lhs, 1.4f64.powi(2), max_relative = 1e-12);
        assert_relative_eq!(c.rhs, c.lhs, max_relative = 1e-10);
        assert!(c.holds);
        let cube = MonotoneProbe::cube(2.0).unwrap();
        let c = lemma2_check(&cube, 1.0, 0.0).unwrap();
        assert_relative_eq!(c.lhs, 1.0);
        assert_relative_eq!(c.rhs, 0.75, max_relative = 1e-10);
        assert!(c.holds);
    }

    #[test]
    fn transform_is_increasing() {
        for probe in [MonotoneProbe::arctan(3.0).unwrap(), MonotoneProbe::cube(1.5).unwrap()] {
            let mut prev = f64::NEG_INFINITY;
            for k in -20..=20 {
                let g = g_transform(&probe, k as f64 * 0.5).unwrap();
                assert!(g > prev);
                prev = g;
            }
        }
    }

    #[test]
    fn convexity_sampling_flags_concave() {
        let pairs: Vec<(f64, f64)> = (0..20).map(|k| (k as f64 * 0.3 - 3.0, 2.0 - k as f64 * 0.1)).collect();
        assert_eq!(ConvexProbe::square(2.0).unwrap().convexity_failures(&pairs), 0);
        let concave = ConvexProbe::new("-t^2", 2.0, |t: f64| -t * t, |t| -2.0 * t).unwrap();
        assert!(concave.convexity_failures(&pairs) > 0);
    }

    #[test]
    fn small_fuzz_is_clean() {
        assert_eq!(lemma1_fuzz(500, 9).unwrap().violations, 0);
        assert_eq!(lemma2_fuzz(200, 9).unwrap().violations, 0);
    }
}
