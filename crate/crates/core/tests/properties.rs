use std::sync::Arc;

use approx::assert_relative_eq;
use fracvar::eigensolver::{maximize_quotient, ray_scale, target_seminorm, SolverOptions};
use fracvar::functionals::{gaussian, quotient, Functional, Nonlinearity, Weight};
use fracvar::nonlocal_form::{assemble, BilinearForm, Kernel};
use fracvar::regularity::{moser_exponent_r, verify_chain};
use fracvar::{build_grid, lp_norm, FracParams, Grid, GridFunction};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn form(grid: &Arc<Grid<f64>>, s: f64) -> BilinearForm<f64> {
    assemble(grid.clone(), Kernel::fractional(1, s), true).unwrap()
}

fn random_function(grid: &Arc<Grid<f64>>, rng: &mut ChaCha8Rng) -> GridFunction<f64> {
    let vals = (0..grid.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
    GridFunction::new(grid.clone(), vals).unwrap()
}

fn vec7() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, 7)
}

proptest! {
    #[test]
    fn lp_norm_is_homogeneous(vals in vec7(), c in -4.0f64..4.0, p in 1.0f64..60.0) {
        let g = Arc::new(build_grid::<f64>(1, 2.0, 0.5).unwrap());
        let u = GridFunction::new(g, vals).unwrap();
        let lhs = lp_norm(&u.scaled(c), p).unwrap();
        let rhs = c.abs() * lp_norm(&u, p).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
    }

    #[test]
    fn lp_norm_bounded_by_sup_times_measure(vals in vec7(), p in 1.0f64..500.0) {
        let g = Arc::new(build_grid::<f64>(1, 2.0, 0.5).unwrap());
        let measure = g.cell_volume() * g.len() as f64;
        let u = GridFunction::new(g, vals).unwrap();
        let n = lp_norm(&u, p).unwrap();
        prop_assert!(n <= u.max_abs() * measure.powf(1.0 / p) * (1.0 + 1e-12));
    }

    #[test]
    fn seminorm_is_homogeneous_and_even(vals in vec7(), c in -4.0f64..4.0) {
        let g = Arc::new(build_grid::<f64>(1, 2.0, 0.5).unwrap());
        let f = form(&g, 0.3);
        let u = GridFunction::new(g, vals).unwrap();
        let t = f.seminorm(&u).unwrap();
        prop_assert!((f.seminorm(&u.scaled(c)).unwrap() - c.abs() * t).abs() <= 1e-12 * t.max(1e-300));
    }

    #[test]
    fn ray_scaled_functions_share_one_seminorm(vals in vec7(), c in 0.01f64..100.0) {
        let g = Arc::new(build_grid::<f64>(1, 2.0, 0.5).unwrap());
        let params = FracParams::new(1, 0.25, 3.2).unwrap();
        let f = form(&g, 0.25);
        let w = Weight::gaussian(g.clone(), &params, 3.5).unwrap();
        let u = GridFunction::new(g, vals).unwrap();
        prop_assume!(u.max_abs() > 1e-6);
        let (_, a) = ray_scale(&u, &w, &params, &f).unwrap();
        let (_, b) = ray_scale(&u.scaled(c), &w, &params, &f).unwrap();
        prop_assert!((f.seminorm(&a).unwrap() - target_seminorm(&params)).abs() <= 1e-12);
        prop_assert!((quotient(&a, &w, &params, &f).unwrap() - quotient(&b, &w, &params, &f).unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn gradients_match_central_differences() {
    let g = Arc::new(build_grid::<f64>(1, 3.0, 0.25).unwrap());
    let f_form = form(&g, 0.3);
    let f = Nonlinearity::saturating(3.0, 1.5, gaussian).unwrap();
    let weight = GridFunction::from_fn(g.clone(), gaussian);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let functionals = [
        Functional::Phi(&f_form),
        Functional::BigJ(&f),
        Functional::Psi { weight: &weight, r: 3.5 },
    ];
    for functional in functionals {
        for _ in 0..50 {
            let u = random_function(&g, &mut rng);
            let phi = random_function(&g, &mut rng);
            let eps = 1e-5;
            let fd = (functional.value(&u.axpy(eps, &phi)).unwrap() - functional.value(&u.axpy(-eps, &phi)).unwrap())
                / (2.0 * eps);
            let an = functional.gradient(&u).unwrap().dot(&phi);
            assert_relative_eq!(fd, an, max_relative = 1e-6);
        }
    }
}

/// Dense sweep of directions on a small grid; the quotient is maximized along each ray in closed form.
fn brute_force_max(w: &Weight<f64>, params: &FracParams<f64>, f: &BilinearForm<f64>, per_axis: usize) -> f64 {
    let n = f.grid().len();
    let mut best = f64::NEG_INFINITY;
    let mut idx = vec![0usize; n - 1];
    loop {
        // hyperspherical angles: first n-2 in [0, pi], last in [0, 2 pi)
        let angles: Vec<f64> = idx
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                if i + 2 < n {
                    std::f64::consts::PI * k as f64 / (per_axis - 1) as f64
                } else {
                    2.0 * std::f64::consts::PI * k as f64 / per_axis as f64
                }
            })
            .collect();
        let mut dir = vec![0.0; n];
        let mut sin_prod = 1.0;
        for i in 0..n - 1 {
            dir[i] = sin_prod * angles[i].cos();
            sin_prod *= angles[i].sin();
        }
        dir[n - 1] = sin_prod;
        let v = GridFunction::new(f.grid().clone(), dir).unwrap();
        if let Ok((_, u)) = ray_scale(&v, w, params, f) {
            best = best.max(quotient(&u, w, params, f).unwrap());
        }
        let mut carry = 0;
        while carry < idx.len() {
            idx[carry] += 1;
            if idx[carry] < per_axis {
                break;
            }
            idx[carry] = 0;
            carry += 1;
        }
        if carry == idx.len() {
            return best;
        }
    }
}

#[test]
fn solver_matches_brute_force_on_tiny_grids() {
    let params = FracParams::new(1, 0.25, 3.0).unwrap();
    for (radius, per_axis) in [(0.75, 400), (1.0, 120)] {
        let g = Arc::new(build_grid::<f64>(1, radius, 0.5).unwrap());
        assert!(g.len() <= 4);
        let f = form(&g, 0.25);
        let w = Weight::gaussian(g.clone(), &params, 3.5).unwrap();
        let pair = maximize_quotient(&w, &params, &f, &SolverOptions::default()).unwrap();
        let brute = brute_force_max(&w, &params, &f, per_axis);
        assert!(pair.quotient_value >= brute * (1.0 - 1e-12));
        assert_relative_eq!(pair.quotient_value, brute, max_relative = 1e-3);
    }
}

#[test]
fn hundred_directions_ray_scale_to_the_same_seminorm() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for s in [0.2, 0.25, 0.3, 0.4] {
        let g = Arc::new(build_grid::<f64>(1, 4.0, 0.25).unwrap());
        let crit = fracvar::critical_exponent(1, s).unwrap();
        let q = rng.gen_range(2.05..crit - 0.05);
        let params = FracParams::new(1, s, q).unwrap();
        let f = form(&g, s);
        let w = Weight::gaussian(g.clone(), &params, 0.5 * (q + crit)).unwrap();
        let target = target_seminorm(&params);
        for _ in 0..100 {
            let v = random_function(&g, &mut rng);
            let (_, u) = ray_scale(&v, &w, &params, &f).unwrap();
            assert_relative_eq!(f.seminorm(&u).unwrap(), target, max_relative = 1e-10);
        }
    }
}

#[test]
fn inequality_chain_holds_on_a_solution() {
    let g = Arc::new(build_grid::<f64>(1, 4.0, 0.25).unwrap());
    let params = FracParams::new(1, 0.25, 3.0).unwrap();
    let f = form(&g, 0.25);
    let w = Weight::gaussian(g.clone(), &params, 3.5).unwrap();
    let pair = maximize_quotient(&w, &params, &f, &SolverOptions::default()).unwrap();
    let r = moser_exponent_r(&params, 3.5).unwrap();
    let checks = verify_chain(&pair.u, pair.lambda, &w, &params, &f, r, None).unwrap();
    assert_eq!(checks.len(), 4);
    for c in &checks {
        assert!(c.holds, "{c:?}");
        assert!(c.slack <= 1e-6 * c.rhs);
    }
}
