//! Moser iteration on discrete solutions.
//!
//! The integrability exponent is raised along `(k_n + 1) 2* = (2*/r)^n 2*`,
//! where `r` is fixed by the Holder exponents of the weight. On a grid every
//! norm is finite, so the ladder reports the norms, their growth and the
//! smallest constant `c` with `||u||_{(k_n+1)2*} <= c ||u||_{2*}` over the
//! computed range.

use std::fmt::Debug;

use num_traits::Num;
use serde::Serialize;

use crate::domain::{lp_norm, FracParams, GridFunction};
use crate::error::{invalid, Error, Result};
use crate::functionals::Weight;
use crate::nonlocal_form::BilinearForm;
use crate::scalar::{signed_pow, Real};

/// Holder exponents of the iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoserExponents<T> {
    /// `eta = nu/(nu-1) * 2*/(2*-q)`.
    pub eta: T,
    /// Conjugate `eta' = eta/(eta-1)`.
    pub eta_conj: T,
    /// `r = 2 * 2* eta' / (2* - (q-2) eta')`.
    pub r: T,
    /// `(r/(2 eta'))' * eta' * (q-2)`, which must equal `2*`.
    pub identity: T,
}

fn conjugate<T: Num + Clone>(x: T) -> T {
    x.clone() / (x - T::one())
}

/// Exponents for `q < nu < 2*`, in any field (floating point or exact rationals).
pub fn moser_exponents<T>(crit: T, q: T, nu: T) -> Result<MoserExponents<T>>
where
    T: Num + Clone + PartialOrd + Debug,
{
    if !(q < nu && nu < crit) {
        return Err(invalid("nu", format!("need q < nu < 2* ({q:?} < {nu:?} < {crit:?})")));
    }
    let one = T::one();
    let two = one.clone() + one.clone();
    let eta = nu.clone() / (nu - one.clone()) * (crit.clone() / (crit.clone() - q.clone()));
    let eta_conj = conjugate(eta.clone());
    let qm2 = q - two.clone();
    let denom = crit.clone() - qm2.clone() * eta_conj.clone();
    if !(denom > T::zero()) {
        return Err(invalid("nu", format!("degenerate exponent: 2* - (q-2) eta' = {denom:?}")));
    }
    let r = two.clone() * crit.clone() * eta_conj.clone() / denom;
    if !(r > one && r < crit) {
        return Err(invalid("nu", format!("need 1 < r < 2*, got r = {r:?}")));
    }
    let identity = conjugate(r.clone() / (two * eta_conj.clone())) * eta_conj.clone() * qm2;
    Ok(MoserExponents {
        eta,
        eta_conj,
        r,
        identity,
    })
}

/// The iteration exponent `r` for floating point parameters.
pub fn moser_exponent_r<T: Real>(params: &FracParams<T>, nu: T) -> Result<T> {
    let e = moser_exponents(params.crit, params.q, nu)?;
    let scale = params.crit.abs().max(T::one());
    if (e.identity - params.crit).abs() > T::lit(1e-10) * scale {
        return Err(Error::Undefined(format!(
            "exponent identity failed: {} != {}",
            e.identity, params.crit
        )));
    }
    Ok(e.r)
}

/// `k_n = (2*/r)^n - 1` for `n = 1..=n_steps`.
pub fn k_schedule<T: Num + Clone>(crit: T, r: T, n_steps: usize) -> Vec<T> {
    let ratio = crit / r;
    let mut pow = T::one();
    (0..n_steps)
        .map(|_| {
            pow = pow.clone() * ratio.clone();
            pow.clone() - T::one()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct LadderRow<T> {
    pub n: usize,
    pub k: T,
    /// `(k_n + 1) 2*`.
    pub exponent: T,
    pub norm: T,
    /// `norm_n / norm_{n-1}`, with `norm_0 = ||u||_{2*}`; zero when undefined.
    pub ratio: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct MoserLadder<T> {
    pub r_exp: T,
    pub base_norm: T,
    pub rows: Vec<LadderRow<T>>,
    /// `max_n ||u||_{(k_n+1)2*} / ||u||_{2*}`; `None` for `u = 0`.
    pub fitted_c: Option<T>,
    pub sup_bound: Option<T>,
    pub sup_actual: T,
}

impl<T: Real> MoserLadder<T> {
    pub fn k_seq(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.k).collect()
    }

    pub fn norms(&self) -> Vec<T> {
        self.rows.iter().map(|r| r.norm).collect()
    }

    pub fn last_norm(&self) -> T {
        self.rows.last().map_or(self.base_norm, |r| r.norm)
    }

    /// `sup |u| <= c ||u||_{2*}` with the fitted constant.
    pub fn certified(&self) -> bool {
        self.sup_bound.is_some_and(|b| self.sup_actual <= b)
    }
}

pub fn ladder<T: Real>(u: &GridFunction<T>, params: &FracParams<T>, r_exp: T, n_steps: usize) -> Result<MoserLadder<T>> {
    if n_steps == 0 {
        return Err(invalid("n_steps", "need at least one step"));
    }
    if !(r_exp > T::one() && r_exp < params.crit) {
        return Err(invalid("r_exp", format!("need 1 < r < 2* = {}, got {r_exp}", params.crit)));
    }
    let crit = params.crit;
    let base = lp_norm(u, crit)?;
    let mut prev = base;
    let mut rows = Vec::with_capacity(n_steps);
    for (i, k) in k_schedule(crit, r_exp, n_steps).into_iter().enumerate() {
        let exponent = (k + T::one()) * crit;
        let norm = lp_norm(u, exponent)?;
        let ratio = if prev > T::zero() { norm / prev } else { T::zero() };
        rows.push(LadderRow {
            n: i + 1,
            k,
            exponent,
            norm,
            ratio,
        });
        prev = norm;
    }
    let fitted_c = (base > T::zero()).then(|| rows.iter().map(|r| r.norm / base).fold(T::zero(), T::max));
    Ok(MoserLadder {
        r_exp,
        base_norm: base,
        sup_bound: fitted_c.map(|c| c * base),
        fitted_c,
        sup_actual: u.max_abs(),
        rows,
    })
}

/// `((z+1)/(2z+1)^{1/2})^{1/sqrt(z+1)}`, which exceeds 1 for every `z > 0`.
pub fn bracket_factor<T: Real>(z: T) -> Result<T> {
    if !(z > T::zero()) || !z.is_finite() {
        return Err(invalid("z", format!("need z > 0, got {z}")));
    }
    let one = T::one();
    let two = T::lit(2.0);
    Ok(((z + one) / (two * z + one).sqrt()).powf((z + one).sqrt().recip()))
}

/// Pointwise `min(u_i, M)`.
pub fn cutoff<T: Real>(u: &GridFunction<T>, m: T) -> Result<GridFunction<T>> {
    if !(m > T::zero()) {
        return Err(invalid("M", format!("need M > 0, got {m}")));
    }
    Ok(u.map(|v| v.min(m)))
}

/// Both sides of the energy inequality obtained by testing the weak form with
/// `psi = (min(|u|, M))^{2k+1}`:
///
/// ```text
/// (2k+1)/(k+1)^2 E(v, v) <= lambda h^N sum |w| |u|^{q-1} psi,   v = min(|u|, M)^{k+1}
/// ```
///
/// and the embedded variant with `c4 = 1 / C^2` for an empirical embedding constant `C`.
#[derive(Debug, Clone, Serialize)]
pub struct ChainCheck<T> {
    pub k: T,
    pub cutoff: T,
    pub form_side: T,
    pub embedded_side: Option<T>,
    pub rhs: T,
    /// `sum_i psi_i |weak residual_i|`: how far `u` is from an exact solution, in this pairing.
    pub slack: T,
    pub holds: bool,
    pub holds_embedded: Option<bool>,
}

#[allow(clippy::too_many_arguments)]
pub fn chain_check<T: Real>(
    u: &GridFunction<T>,
    lambda: T,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
    k: T,
    m: T,
    embedding_const: Option<T>,
) -> Result<ChainCheck<T>> {
    if !(k > T::zero()) {
        return Err(invalid("k", format!("need k > 0, got {k}")));
    }
    let one = T::one();
    let two = T::lit(2.0);
    let abs_u = u.map(T::abs);
    let um = cutoff(&abs_u, m)?;
    let v = um.map(|x| x.powf(k + one));
    let psi = um.map(|x| x.powf(two * k + one));
    let factor = (two * k + one) / ((k + one) * (k + one));
    let form_side = factor * form.eval(&v, &v)?;

    let vol = form.grid().cell_volume();
    let qm1 = params.q - one;
    let rhs = lambda
        * vol
        * abs_u
            .values()
            .iter()
            .zip(w.values().values())
            .zip(psi.values())
            .map(|((&a, &wi), &p)| wi.abs() * a.powf(qm1) * p)
            .sum::<T>();
    let eu = form.pair_with_basis(u)?;
    let slack = eu
        .iter()
        .zip(u.values())
        .zip(w.values().values())
        .zip(psi.values())
        .map(|(((&e, &ui), &wi), &p)| p * (e - lambda * vol * wi * signed_pow(ui, qm1)).abs())
        .sum::<T>();
    let tiny = T::lit(1e-12) * rhs.abs().max(form_side.abs());
    let holds = form_side <= rhs + slack + tiny;

    let embedded_side = embedding_const
        .map(|c| -> Result<T> {
            let n = lp_norm(&um, (k + one) * params.crit)?;
            Ok(factor / (c * c) * n.powf(two * (k + one)))
        })
        .transpose()?;
    let holds_embedded = embedded_side.map(|e| e <= rhs + slack + tiny);
    Ok(ChainCheck {
        k,
        cutoff: m,
        form_side,
        embedded_side,
        rhs,
        slack,
        holds,
        holds_embedded,
    })
}

/// Chain checks at `k_1` and `k_2` with the cutoff at `max |u|` (inactive) and at half of it.
pub fn verify_chain<T: Real>(
    u: &GridFunction<T>,
    lambda: T,
    w: &Weight<T>,
    params: &FracParams<T>,
    form: &BilinearForm<T>,
    r_exp: T,
    embedding_const: Option<T>,
) -> Result<Vec<ChainCheck<T>>> {
    let top = u.max_abs();
    if !(top > T::zero()) {
        return Err(Error::Undefined("chain check on the zero function".into()));
    }
    let mut out = Vec::new();
    for k in k_schedule(params.crit, r_exp, 2) {
        for m in [top, top / T::lit(2.0)] {
            out.push(chain_check(u, lambda, w, params, form, k, m, embedding_const)?);
        }
    }
    Ok(out)
}
