//! Discrete Gagliardo form `E(u, v)`, its seminorm and the induced nonlocal operator.
//!
//! With nodes `x_i`, cell volume `h^N` and kernel `K`,
//!
//! ```text
//! E(u, v) = sum_{i != j} (u_i - u_j)(v_i - v_j) K(x_i - x_j) h^{2N}
//!         + 2 sum_i sum_{y in shell} u_i v_i K(x_i - y) h^{2N}
//! ```
//!
//! where the sum runs over ordered pairs (no factor 1/2) and the second line is
//! present only when exterior interactions are enabled. The shell is the set of
//! lattice points with `R <= |y| < 2R`, on which functions vanish.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{lp_norm, Grid, GridFunction};
use crate::error::{invalid, Error, Result};
use crate::linalg::{Cholesky, DenseMatrix};
use crate::scalar::Real;

type KernelFn<T> = dyn Fn(&[T]) -> T + Send + Sync;

/// Symmetric positive interaction kernel `K(x)`, `x != 0`.
#[derive(Clone)]
pub struct Kernel<T> {
    eval: Arc<KernelFn<T>>,
    dim: usize,
    s: T,
    gamma: T,
    label: String,
}

impl<T: fmt::Debug> fmt::Debug for Kernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Kernel")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("s", &self.s)
            .field("gamma", &self.gamma)
            .finish()
    }
}

fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&c| c * c).sum::<T>().sqrt()
}

impl<T: Real> Kernel<T> {
    /// `K(x) = |x|^{-(N+2s)}`, the kernel of the fractional Laplacian (lower bound constant 1).
    pub fn fractional(dim: usize, s: T) -> Self {
        let exponent = -(T::from_usize_lossy(dim) + s + s);
        Self {
            eval: Arc::new(move |x: &[T]| norm(x).powf(exponent)),
            dim,
            s,
            gamma: T::one(),
            label: format!("|x|^-(N+2s), N={dim}, s={s}"),
        }
    }

    /// A user kernel with declared lower-bound constant `gamma`: `K(x) >= gamma |x|^{-(N+2s)}`.
    pub fn custom(
        dim: usize,
        s: T,
        gamma: T,
        label: impl Into<String>,
        eval: impl Fn(&[T]) -> T + Send + Sync + 'static,
    ) -> Self {
        Self {
            eval: Arc::new(eval),
            dim,
            s,
            gamma,
            label: label.into(),
        }
    }

    #[inline]
    pub fn evaluate(&self, x: &[T]) -> T {
        (self.eval)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn s(&self) -> T {
        self.s
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    fn random_displacements(&self, samples: usize, seed: u64) -> Vec<Vec<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..samples)
            .map(|_| loop {
                let x: Vec<T> = (0..self.dim).map(|_| T::lit(rng.gen_range(-4.0..4.0))).collect();
                if norm(&x) > T::lit(1e-3) {
                    break x;
                }
            })
            .collect()
    }

    /// Largest relative gap `|K(x) - K(-x)| / K(x)` over random displacements.
    pub fn symmetry_defect(&self, samples: usize, seed: u64) -> T {
        self.random_displacements(samples, seed)
            .iter()
            .map(|x| {
                let neg: Vec<T> = x.iter().map(|&c| -c).collect();
                let (a, b) = (self.evaluate(x), self.evaluate(&neg));
                (a - b).abs() / a.abs().max(b.abs()).max(T::min_positive_value())
            })
            .fold(T::zero(), T::max)
    }

    /// Number of random displacements where `K(x) < gamma |x|^{-(N+2s)}`.
    pub fn lower_bound_violations(&self, samples: usize, seed: u64) -> usize {
        let exponent = -(T::from_usize_lossy(self.dim) + self.s + self.s);
        let slack = T::one() - T::epsilon() * T::lit(16.0);
        self.random_displacements(samples, seed)
            .iter()
            .filter(|x| self.evaluate(x) < slack * self.gamma * norm(x).powf(exponent))
            .count()
    }
}

/// Assembled symmetric matrix of the discrete Gagliardo form.
#[derive(Debug, Clone)]
pub struct BilinearForm<T> {
    grid: Arc<Grid<T>>,
    kernel: Kernel<T>,
    exterior: bool,
    matrix: DenseMatrix<T>,
}

/// Assembles `E` on `grid`. With `exterior` set, the interaction with the zero
/// exterior shell is included and the form is positive definite.
pub fn assemble<T: Real>(grid: Arc<Grid<T>>, kernel: Kernel<T>, exterior: bool) -> Result<BilinearForm<T>> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty grid"));
    }
    if kernel.dim() != grid.dim() {
        return Err(invalid(
            "kernel",
            format!("kernel dimension {} differs from grid dimension {}", kernel.dim(), grid.dim()),
        ));
    }
    let n = grid.len();
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let w = vol * vol;
    let two = T::lit(2.0);
    let mut m = DenseMatrix::zeros(n);
    let mut diag = vec![T::zero(); n];
    let mut d = vec![T::zero(); dim];
    let mut nd = vec![T::zero(); dim];
    for i in 0..n {
        let xi = grid.node(i);
        for j in i + 1..n {
            let xj = grid.node(j);
            for c in 0..dim {
                d[c] = xi[c] - xj[c];
                nd[c] = -d[c];
            }
            if d.iter().all(|&c| c == T::zero()) {
                return Err(Error::CoincidentNodes(i, j));
            }
            let k = kernel.evaluate(&d);
            let k_back = kernel.evaluate(&nd);
            let scale = k.abs().max(k_back.abs());
            if !(k > T::zero()) || !k.is_finite() || (k - k_back).abs() > scale * T::lit(1e-12) {
                return Err(invalid(
                    "kernel",
                    format!("kernel must be positive, finite and even (pair {i},{j}: {k} vs {k_back})"),
                ));
            }
            let entry = two * k * w;
            m.set(i, j, -entry);
            m.set(j, i, -entry);
            diag[i] += entry;
            diag[j] += entry;
        }
    }
    if exterior {
        let shell = grid.exterior_shell();
        for (i, di) in diag.iter_mut().enumerate() {
            let xi = grid.node(i);
            let mut acc = T::zero();
            for y in shell.chunks_exact(dim) {
                for c in 0..dim {
                    d[c] = xi[c] - y[c];
                }
                acc += kernel.evaluate(&d);
            }
            *di += two * acc * w;
        }
    }
    for (i, v) in diag.into_iter().enumerate() {
        m.set(i, i, v);
    }
    Ok(BilinearForm {
        grid,
        kernel,
        exterior,
        matrix: m,
    })
}

impl<T: Real> BilinearForm<T> {
    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn kernel(&self) -> &Kernel<T> {
        &self.kernel
    }

    pub fn exterior(&self) -> bool {
        self.exterior
    }

    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    fn check(&self, u: &GridFunction<T>) -> Result<()> {
        u.same_grid(&self.grid)
    }

    /// `E(u, v)`.
    pub fn eval(&self, u: &GridFunction<T>, v: &GridFunction<T>) -> Result<T> {
        self.check(u)?;
        self.check(v)?;
        Ok(self.matrix.bilinear(u.values(), v.values()))
    }

    /// `E(u, e_i)` for every node basis vector `e_i`.
    pub fn pair_with_basis(&self, u: &GridFunction<T>) -> Result<Vec<T>> {
        self.check(u)?;
        Ok(self.matrix.mul_vec(u.values()))
    }

    pub fn seminorm(&self, u: &GridFunction<T>) -> Result<T> {
        seminorm(self, u)
    }

    pub fn apply(&self, u: &GridFunction<T>) -> Result<GridFunction<T>> {
        apply_operator(self, u)
    }

    /// Factorization used to take gradients in the energy inner product.
    pub fn factor(&self) -> Result<Cholesky<T>> {
        self.matrix.cholesky()
    }
}

/// `[u] = sqrt(E(u, u))`.
pub fn seminorm<T: Real>(form: &BilinearForm<T>, u: &GridFunction<T>) -> Result<T> {
    Ok(form.eval(u, u)?.max(T::zero()).sqrt())
}

/// Discrete operator `v_i = 2 h^N sum_{j != i} (u_i - u_j) K(x_i - x_j)` (plus exterior terms),
/// so that `<apply_operator(u), phi> = E(u, phi)` in the discrete `L^2` pairing.
pub fn apply_operator<T: Real>(form: &BilinearForm<T>, u: &GridFunction<T>) -> Result<GridFunction<T>> {
    let inv = form.grid.cell_volume().recip();
    let v = form.pair_with_basis(u)?.into_iter().map(|x| x * inv).collect();
    u.with_values(v)
}

/// Largest observed `||u||_crit / [u]` over random grid functions, a lower
/// estimate of the discrete embedding constant. Functions with zero seminorm
/// are skipped.
pub fn embedding_ratio<T: Real>(form: &BilinearForm<T>, samples: usize, crit: T, seed: u64) -> Result<T> {
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    let grid = form.grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<T> = None;
    for k in 0..samples {
        let u = random_probe(&grid, &mut rng, k);
        let t = seminorm(form, &u)?;
        if !(t > T::zero()) {
            continue;
        }
        let r = lp_norm(&u, crit)? / t;
        best = Some(best.map_or(r, |b| b.max(r)));
    }
    best.ok_or_else(|| Error::NoAdmissibleSamples("every sampled function has zero seminorm".into()))
}

/// Alternates uniform noise and positive Gaussian bumps of random center and width.
pub(crate) fn random_probe<T: Real, R: Rng>(grid: &Arc<Grid<T>>, rng: &mut R, k: usize) -> GridFunction<T> {
    if k % 2 == 0 {
        let vals = (0..grid.len()).map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
        GridFunction::new(grid.clone(), vals).expect("length matches grid")
    } else {
        let r = grid.radius().as_f64();
        let center: Vec<f64> = (0..grid.dim()).map(|_| rng.gen_range(-0.5 * r..0.5 * r)).collect();
        let width = rng.gen_range(0.05..0.5) * r;
        GridFunction::from_fn(grid.clone(), |x| {
            let d2: f64 = x.iter().zip(&center).map(|(a, c)| (a.as_f64() - c).powi(2)).sum();
            T::lit((-d2 / (width * width)).exp())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::build_grid;
    use approx::assert_relative_eq;

    fn two_node() -> BilinearForm<f64> {
        let g = Arc::new(Grid::<f64>::from_nodes(1, 1.0, 0.5, &[vec![0.0], vec![0.5]]).unwrap());
        assemble(g, Kernel::fractional(1, 0.25), false).unwrap()
    }

    fn gf(form: &BilinearForm<f64>, v: Vec<f64>) -> GridFunction<f64> {
        GridFunction::new(form.grid().clone(), v).unwrap()
    }

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    }

    /// Ordered-pair double sum straight from the definition, independent of the matrix.
    fn double_sum(form: &BilinearForm<f64>, u: &[f64], v: &[f64]) -> f64 {
        let g = form.grid();
        let w = g.cell_volume().powi(2);
        let mut acc = 0.0;
        for i in 0..g.len() {
            for j in 0..g.len() {
                if i != j {
                    let d: Vec<f64> = g.node(i).iter().zip(g.node(j)).map(|(a, b)| a - b).collect();
                    acc += (u[i] - u[j]) * (v[i] - v[j]) * form.kernel().evaluate(&d) * w;
                }
            }
        }
        acc
    }

    #[test]
    fn two_node_hand_computation() {
        let f = two_node();
        let u = gf(&f, vec![1.0, 0.0]);
        let expected = 2.0 * 0.5f64.powf(-1.5) * 0.25;
        assert_relative_eq!(f.eval(&u, &u).unwrap(), expected, max_relative = 1e-14);
        assert_relative_eq!(expected, 1.414214, epsilon = 1e-6);
        assert_relative_eq!(seminorm(&f, &u).unwrap(), 1.189207, epsilon = 1e-6);
        let v = apply_operator(&f, &u).unwrap();
        assert_relative_eq!(v.values()[0], 2.828427, epsilon = 1e-6);
        assert_relative_eq!(v.values()[1], -v.values()[0], max_relative = 1e-15);
    }

    #[test]
    fn constants_have_zero_energy_without_exterior() {
        let g = Arc::new(build_grid::<f64>(1, 2.0, 0.5).unwrap());
        let f = assemble(g.clone(), Kernel::fractional(1, 0.3), false).unwrap();
        let c = GridFunction::new(g.clone(), vec![2.5; g.len()]).unwrap();
        assert!(f.eval(&c, &c).unwrap().abs() < 1e-12);
        let fe = assemble(g, Kernel::fractional(1, 0.3), true).unwrap();
        assert!(fe.eval(&c, &c).unwrap() > 0.0);
    }

    #[test]
    fn matches_double_sum_and_is_symmetric() {
        let g = Arc::new(build_grid::<f64>(1, 1.5, 0.5).unwrap());
        assert_eq!(g.len(), 5);
        let f = assemble(g.clone(), Kernel::fractional(1, 0.25), false).unwrap();
        assert!(f.matrix().is_symmetric());
        let mut seed = 7;
        let u: Vec<f64> = (0..5).map(|_| lcg(&mut seed)).collect();
        let v: Vec<f64> = (0..5).map(|_| lcg(&mut seed)).collect();
        let (gu, gv) = (gf(&f, u.clone()), gf(&f, v.clone()));
        let euv = f.eval(&gu, &gv).unwrap();
        assert_relative_eq!(euv, f.eval(&gv, &gu).unwrap(), max_relative = 1e-14);
        assert_relative_eq!(euv, double_sum(&f, &u, &v), max_relative = 1e-12);
    }

    #[test]
    fn duality_with_operator() {
        let g = Arc::new(build_grid::<f64>(1, 2.0, 0.5).unwrap());
        assert_eq!(g.len(), 7);
        let f = assemble(g.clone(), Kernel::fractional(1, 0.4), true).unwrap();
        let mut seed = 11;
        for _ in 0..20 {
            let u = gf(&f, (0..7).map(|_| lcg(&mut seed)).collect());
            let phi = gf(&f, (0..7).map(|_| lcg(&mut seed)).collect());
            let lhs = apply_operator(&f, &u).unwrap().dot(&phi);
            let rhs = f.eval(&u, &phi).unwrap();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
        let z = GridFunction::zeros(g);
        assert!(apply_operator(&f, &z).unwrap().is_zero());
    }

    #[test]
    fn seminorm_homogeneity() {
        let f = two_node();
        let u = gf(&f, vec![0.3, -1.7]);
        let a = seminorm(&f, &u.scaled(-2.0)).unwrap();
        assert_relative_eq!(a, 2.0 * seminorm(&f, &u).unwrap(), max_relative = 1e-15);
        assert_eq!(seminorm(&f, &gf(&f, vec![0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn default_kernel_properties() {
        let k = Kernel::<f64>::fractional(2, 0.3);
        assert_eq!(k.symmetry_defect(1000, 1), 0.0);
        assert_eq!(k.lower_bound_violations(1000, 2), 0);
        let weak = Kernel::custom(1, 0.3, 2.0, "too small", |x: &[f64]| x[0].abs().powf(-1.6));
        assert!(weak.lower_bound_violations(100, 3) > 0);
    }

    #[test]
    fn rejects_odd_kernel_and_dimension_mismatch() {
        let g = Arc::new(build_grid::<f64>(1, 1.0, 0.5).unwrap());
        let odd = Kernel::custom(1, 0.25, 1.0, "lopsided", |x: &[f64]| if x[0] > 0.0 { 1.0 } else { 2.0 });
        assert!(assemble(g.clone(), odd, false).is_err());
        assert!(assemble(g, Kernel::fractional(2, 0.25), false).is_err());
    }

    #[test]
    fn embedding_ratio_behaviour() {
        let g = Arc::new(build_grid::<f64>(1, 2.5, 0.5).unwrap());
        assert_eq!(g.len(), 9);
        let f = assemble(g, Kernel::fractional(1, 0.25), true).unwrap();
        let a = embedding_ratio(&f, 200, 4.0, 42).unwrap();
        let b = embedding_ratio(&f, 200, 4.0, 42).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(a > 0.0);

        let single = Arc::new(Grid::<f64>::from_nodes(1, 1.0, 0.5, &[vec![0.0]]).unwrap());
        let flat = assemble(single, Kernel::fractional(1, 0.25), false).unwrap();
        assert!(matches!(embedding_ratio(&flat, 10, 4.0, 1), Err(Error::NoAdmissibleSamples(_))));
    }
}
