//! Truncated computational domains `B_R`, uniform lattices and grid functions.
//!
//! Functions live on the lattice nodes strictly inside the ball of radius `R`
//! and are implicitly zero everywhere else.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scalar::Real;

/// Uniform lattice `h * Z^N` restricted to the open ball `B_R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    dim: usize,
    radius: T,
    spacing: T,
    coords: Vec<T>,
}

/// Build the lattice of multiples of `spacing` lying strictly inside `B_radius`.
pub fn build_grid<T: Real>(dim: usize, radius: T, spacing: T) -> Result<Grid<T>> {
    Grid::new(dim, radius, spacing)
}

fn check_geometry<T: Real>(dim: usize, radius: T, spacing: T) -> Result<()> {
    if !(1..=2).contains(&dim) {
        return Err(invalid("dim", format!("expected 1 or 2, got {dim}")));
    }
    if !(radius > T::zero()) || !radius.is_finite() {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    if !(spacing > T::zero()) || !spacing.is_finite() {
        return Err(invalid("spacing", format!("must be positive, got {spacing}")));
    }
    if spacing >= radius + radius {
        return Err(invalid(
            "spacing",
            format!("spacing {spacing} must be smaller than the diameter {}", radius + radius),
        ));
    }
    Ok(())
}

/// Lattice indices `k` with `|k * h|` in `[inner, outer)`, lexicographic order.
pub(crate) fn lattice_points<T: Real>(dim: usize, spacing: T, inner: T, outer: T) -> Vec<T> {
    let kmax = (outer / spacing).ceil().to_i64().unwrap_or(0);
    let inner2 = inner * inner;
    let outer2 = outer * outer;
    let mut coords = Vec::new();
    let cell = |k: i64| T::from_i64(k).expect("lattice index") * spacing;
    match dim {
        1 => {
            for k in -kmax..=kmax {
                let x = cell(k);
                let r2 = x * x;
                if r2 >= inner2 && r2 < outer2 {
                    coords.push(x);
                }
            }
        }
        _ => {
            for k in -kmax..=kmax {
                for l in -kmax..=kmax {
                    let (x, y) = (cell(k), cell(l));
                    let r2 = x * x + y * y;
                    if r2 >= inner2 && r2 < outer2 {
                        coords.push(x);
                        coords.push(y);
                    }
                }
            }
        }
    }
    coords
}

impl<T: Real> Grid<T> {
    pub fn new(dim: usize, radius: T, spacing: T) -> Result<Self> {
        check_geometry(dim, radius, spacing)?;
        let coords = lattice_points(dim, spacing, T::zero(), radius);
        if coords.is_empty() {
            return Err(invalid("radius", "no lattice node inside the ball"));
        }
        Ok(Self {
            dim,
            radius,
            spacing,
            coords,
        })
    }

    /// Grid from explicit nodes (flattened, `dim` coordinates per node).
    ///
    /// Nodes are sorted lexicographically; every node must lie strictly inside
    /// `B_radius` and no two nodes may coincide.
    pub fn from_nodes(dim: usize, radius: T, spacing: T, nodes: &[Vec<T>]) -> Result<Self> {
        check_geometry(dim, radius, spacing)?;
        if nodes.is_empty() {
            return Err(invalid("nodes", "at least one node required"));
        }
        let mut sorted: Vec<Vec<T>> = nodes.to_vec();
        for p in &sorted {
            if p.len() != dim {
                return Err(invalid("nodes", format!("node has {} coordinates, expected {dim}", p.len())));
            }
            let r2: T = p.iter().map(|&c| c * c).sum();
            if !(r2 < radius * radius) {
                return Err(invalid("nodes", "node outside the open ball"));
            }
        }
        sorted.sort_by(|a, b| {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.partial_cmp(y).expect("finite coordinates"))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        for i in 1..sorted.len() {
            if sorted[i] == sorted[i - 1] {
                return Err(Error::CoincidentNodes(i - 1, i));
            }
        }
        Ok(Self {
            dim,
            radius,
            spacing,
            coords: sorted.into_iter().flatten().collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn node(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[T]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Quadrature weight `h^N` attached to every node.
    pub fn cell_volume(&self) -> T {
        self.spacing.powi(self.dim as i32)
    }

    /// Lattice points of the exterior shell `R <= |x| < 2R` not occupied by a node.
    pub fn exterior_shell(&self) -> Vec<T> {
        let shell = lattice_points(self.dim, self.spacing, self.radius, self.radius + self.radius);
        shell
            .chunks_exact(self.dim)
            .filter(|p| !self.nodes().any(|q| q == *p))
            .flatten()
            .copied()
            .collect()
    }

    /// Index of the node closest to the origin (first one on ties).
    pub fn center_index(&self) -> usize {
        self.nodes()
            .map(|p| p.iter().map(|&c| c * c).sum::<T>())
            .enumerate()
            .fold((0, T::infinity()), |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) })
            .0
    }
}

/// Samples of a function on the nodes of a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![T::zero(); n],
        }
    }

    /// Samples `f` at every node.
    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn(&[T]) -> T) -> Self {
        let values = grid.nodes().map(&f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.grid.clone(), values)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: T, other: &Self) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + c * b).collect(),
        }
    }

    /// Discrete `L^2` pairing `h^N * sum u_i v_i`.
    pub fn dot(&self, other: &Self) -> T {
        self.grid.cell_volume() * self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum::<T>()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == T::zero())
    }

    pub(crate) fn same_grid(&self, grid: &Grid<T>) -> Result<()> {
        if self.values.len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: grid.len(),
                got: self.values.len(),
            });
        }
        Ok(())
    }
}

/// `(N, s, q)` together with the critical exponent `2N / (N - 2s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FracParams<T> {
    pub dim: usize,
    pub s: T,
    pub q: T,
    pub crit: T,
}

impl<T: Real> FracParams<T> {
    pub fn new(dim: usize, s: T, q: T) -> Result<Self> {
        let crit = critical_exponent(dim, s)?;
        if !(q > T::lit(2.0) && q < crit) {
            return Err(invalid("q", format!("need 2 < q < 2N/(N-2s) = {crit}, got {q}")));
        }
        Ok(Self { dim, s, q, crit })
    }
}

/// Fractional Sobolev critical exponent `2N / (N - 2s)`.
pub fn critical_exponent<T: Real>(dim: usize, s: T) -> Result<T> {
    if !(s > T::zero() && s < T::one()) {
        return Err(invalid("s", format!("need 0 < s < 1, got {s}")));
    }
    let n = T::from_usize_lossy(dim);
    if dim == 0 || !(s + s < n) {
        return Err(invalid("s", format!("need 2s < N, got s = {s}, N = {dim}")));
    }
    Ok((n + n) / (n - (s + s)))
}

/// Discrete Lebesgue norm with midpoint weight `h^N`; `p = +inf` gives the max norm.
///
/// The sum is scaled by `max |u_i|` so arbitrarily large exponents neither
/// overflow nor lose the dominant terms.
pub fn lp_norm<T: Real>(u: &GridFunction<T>, p: T) -> Result<T> {
    if p.is_nan() || p < T::one() {
        return Err(invalid("p", format!("need p >= 1, got {p}")));
    }
    let top = u.max_abs();
    if p.is_infinite() || top == T::zero() {
        return Ok(top);
    }
    let scaled: T = u.values().iter().map(|v| (v.abs() / top).powf(p)).sum();
    Ok(top * (u.grid().cell_volume() * scaled).powf(p.recip()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_dimensional_lattice() {
        let g = build_grid::<f64>(1, 1.0, 0.5).unwrap();
        let xs: Vec<f64> = g.nodes().map(|p| p[0]).collect();
        assert_eq!(xs, vec![-0.5, 0.0, 0.5]);
    }

    #[test]
    fn two_dimensional_lattice_keeps_all_nine() {
        let g = build_grid::<f64>(2, 1.0, 0.5).unwrap();
        // brute-force enumeration of {-1,-0.5,0,0.5,1}^2 filtered by |x| < 1
        let mut expected = Vec::new();
        for a in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            for b in [-1.0, -0.5, 0.0, 0.5, 1.0f64] {
                if a * a + b * b < 1.0 {
                    expected.push(vec![a, b]);
                }
            }
        }
        assert_eq!(g.len(), 9);
        let got: Vec<Vec<f64>> = g.nodes().map(|p| p.to_vec()).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(build_grid::<f64>(1, 1.0, 2.5).is_err());
        assert!(build_grid::<f64>(1, 1.0, 2.0).is_err());
        assert!(build_grid(3, 1.0, 0.5).is_err());
        assert!(build_grid::<f64>(1, -1.0, 0.5).is_err());
        assert!(build_grid::<f64>(1, 1.0, 0.0).is_err());
    }

    #[test]
    fn build_is_deterministic() {
        assert_eq!(build_grid::<f64>(2, 2.0, 0.25).unwrap(), build_grid::<f64>(2, 2.0, 0.25).unwrap());
    }

    #[test]
    fn explicit_nodes_sorted_and_distinct() {
        let g = Grid::<f64>::from_nodes(1, 1.0, 0.5, &[vec![0.5], vec![0.0]]).unwrap();
        assert_eq!(g.node(0), &[0.0]);
        assert!(matches!(
            Grid::<f64>::from_nodes(1, 1.0, 0.5, &[vec![0.5], vec![0.5]]),
            Err(Error::CoincidentNodes(0, 1))
        ));
    }

    #[test]
    fn exterior_shell_skips_nodes() {
        let g = build_grid::<f64>(1, 1.0, 0.5).unwrap();
        let shell = g.exterior_shell();
        assert_eq!(shell, vec![-1.5, -1.0, 1.0, 1.5]);
    }

    #[test]
    fn critical_exponent_values() {
        assert_eq!(critical_exponent(1, 0.25).unwrap(), 4.0);
        assert_eq!(critical_exponent(3, 0.5).unwrap(), 3.0);
        assert!(critical_exponent(1, 0.5).is_err());
        assert!(FracParams::new(1, 0.25, 4.0).is_err());
        assert!(FracParams::new(1, 0.25, 3.0).is_ok());
    }

    #[test]
    fn lp_norm_examples() {
        let g = Arc::new(build_grid::<f64>(1, 1.0, 0.5).unwrap());
        let zero = GridFunction::zeros(g.clone());
        assert_eq!(lp_norm(&zero, 2.0).unwrap(), 0.0);
        let ones = GridFunction::new(g.clone(), vec![1.0, 1.0, 1.0]).unwrap();
        assert_relative_eq!(lp_norm(&ones, 1.0).unwrap(), 1.5, epsilon = 1e-15);
        let u = GridFunction::new(g.clone(), vec![2.0, -3.0, 1.0]).unwrap();
        assert_eq!(lp_norm(&u, f64::INFINITY).unwrap(), 3.0);
        assert!(lp_norm(&u, 0.5).is_err());
        // direct unscaled sum agrees
        let direct = (0.5 * (8.0 + 27.0 + 1.0f64)).powf(1.0 / 3.0);
        assert_relative_eq!(lp_norm(&u, 3.0).unwrap(), direct, max_relative = 1e-14);
    }

    #[test]
    fn lp_norm_huge_exponent_does_not_overflow() {
        let g = Arc::new(build_grid::<f64>(1, 1.0, 0.5).unwrap());
        let u = GridFunction::new(g, vec![1e3, 2e3, 5e2]).unwrap();
        let n = lp_norm(&u, 5000.0).unwrap();
        assert!(n.is_finite() && n <= 2e3 && n > 1.99e3);
    }

    #[test]
    fn single_precision_grid() {
        let g: Grid<f32> = build_grid(1, 1.0, 0.5).unwrap();
        assert_eq!(g.len(), 3);
    }
}
