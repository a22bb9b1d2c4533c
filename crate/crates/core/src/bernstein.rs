//! Multivariate Bernstein polynomial and density kernels.
//!
//! A function `f` on the unit cube, evaluated on the lattice of a
//! [`GridSpec`], induces the Bernstein polynomial (a weighted sum of
//! products of binomial basis terms) and, one derivative later, a density
//! written as a mixture of products of beta densities whose weights are
//! alternating-sign corner differences of `f` over the grid cells. Those
//! corner differences are the glue between the polynomial world and the
//! discrete skeletons in [`crate::skeleton`]: a copula built there is
//! exactly such a mixture with nonnegative weights.
//!
//! Evaluation is exact-ish direct arithmetic, intended for the grid sizes
//! this crate targets (up to a few hundred cells per axis, dimensions up
//! to five or so). Nothing here is asymptotically clever.

use crate::{Error, Result};

/// A corner difference this far below zero is a genuine monotonicity
/// violation; anything closer to zero is attributed to rounding.
pub const MONOTONICITY_SLACK: f64 = 1e-12;

/// Cells per axis of a rectangular grid on the unit cube.
///
/// Axis `j` with size `n_j` splits `[0,1]` into cells
/// `[i/n_j, (i+1)/n_j)`, `i = 0..n_j`; the lattice has `n_j + 1` nodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    sizes: Vec<usize>,
}

impl GridSpec {
    /// At least one axis, every axis at least one cell.
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::Parameter("grid needs at least one axis".into()));
        }
        if let Some(axis) = sizes.iter().position(|&n| n == 0) {
            return Err(Error::Parameter(format!(
                "grid axis {axis} has zero cells"
            )));
        }
        Ok(GridSpec { sizes })
    }

    pub fn dimension(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Total number of cells, `prod n_j`.
    pub fn cell_count(&self) -> usize {
        self.sizes.iter().product()
    }

    /// Lower and upper corners of cell `index`.
    pub(crate) fn cell(&self, index: &[usize]) -> Hyperbox {
        let lower: Vec<f64> = index
            .iter()
            .zip(&self.sizes)
            .map(|(&i, &n)| i as f64 / n as f64)
            .collect();
        let upper: Vec<f64> = index
            .iter()
            .zip(&self.sizes)
            .map(|(&i, &n)| (i + 1) as f64 / n as f64)
            .collect();
        Hyperbox { lower, upper }
    }
}

/// An axis-aligned box with strictly positive volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Parameter("box needs at least one axis".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::Dimension { expected: lower.len(), got: upper.len() });
        }
        for (axis, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::Parameter(format!(
                    "box axis {axis}: need finite lower < upper, got [{a}, {b}]"
                )));
            }
        }
        Ok(Hyperbox { lower, upper })
    }

    pub fn dimension(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }
}

/// Shape parameters of a beta density; both strictly positive and finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    alpha: f64,
    beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::Parameter(format!(
                "beta shape parameters must be finite and positive, got ({alpha}, {beta})"
            )));
        }
        Ok(BetaParams { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Beta density at `x`, zero outside `[0, 1]`.
///
/// Endpoints follow the `t^0 = 1` convention: a zero exponent contributes
/// factor one, a negative exponent makes the density diverge to `+inf`.
/// Interior evaluation goes through log space, so large shape parameters
/// (grids with thousands of cells per axis) neither overflow nor underflow
/// prematurely.
pub fn beta_pdf(x: f64, params: &BetaParams) -> f64 {
    if !(0.0..=1.0).contains(&x) {
        return 0.0;
    }
    let a = params.alpha;
    let b = params.beta;
    let ln_norm = statrs::function::beta::ln_beta(a, b);
    if x == 0.0 || x == 1.0 {
        let factor = |base: f64, exp: f64| -> f64 {
            if exp == 0.0 {
                1.0
            } else if base == 0.0 {
                if exp < 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            } else {
                base.powf(exp)
            }
        };
        let num = factor(x, a - 1.0) * factor(1.0 - x, b - 1.0);
        // Return before multiplying: exp(-ln_norm) may overflow for large
        // shapes, and 0 * inf would poison the exact endpoint values.
        if num == 0.0 || num.is_infinite() {
            return num;
        }
        return num * (-ln_norm).exp();
    }
    // ln_1p keeps ln(1 - x) accurate for x near zero.
    ((a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p() - ln_norm).exp()
}

/// Alternating-sign sum of `g` over the corners of `bounds`: each corner
/// picks lower or upper per axis, and its sign is `-1` raised to the number
/// of axes where the lower bound was picked. In one dimension this is
/// `g(b) - g(a)`; in two, `g(b1,b2) - g(a1,b2) - g(b1,a2) + g(a1,a2)`.
///
/// For a distribution function `g` this is the probability mass of the box.
pub fn delta_difference(g: impl Fn(&[f64]) -> f64, bounds: &Hyperbox) -> f64 {
    let d = bounds.dimension();
    let mut corner = vec![0.0f64; d];
    let mut total = 0.0;
    for mask in 0u64..(1u64 << d) {
        let mut lower_picks = 0u32;
        for (axis, slot) in corner.iter_mut().enumerate() {
            if mask >> axis & 1 == 1 {
                *slot = bounds.upper[axis];
            } else {
                *slot = bounds.lower[axis];
                lower_picks += 1;
            }
        }
        let sign = if lower_picks.is_multiple_of(2) { 1.0 } else { -1.0 };
        total += sign * g(&corner);
    }
    total
}

/// Iterates multi-indices `0 <= idx[j] < sizes[j]` in lexicographic order,
/// last axis fastest.
pub(crate) fn for_each_multi_index(sizes: &[usize], mut visit: impl FnMut(&[usize])) {
    if sizes.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; sizes.len()];
    'outer: loop {
        visit(&idx);
        let mut axis = sizes.len();
        while axis > 0 {
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < sizes[axis] {
                continue 'outer;
            }
            idx[axis] = 0;
        }
        return;
    }
}

/// `f` evaluated once per lattice node, indexable by multi-index.
struct LatticeCache {
    node_counts: Vec<usize>,
    values: Vec<f64>,
}

impl LatticeCache {
    /// Evaluates `f` at every node `(i_1/n_1, ..., i_d/n_d)`.
    fn build(f: impl Fn(&[f64]) -> f64, sizes: &[usize]) -> LatticeCache {
        let node_counts: Vec<usize> = sizes.iter().map(|&n| n + 1).collect();
        let mut values = Vec::with_capacity(node_counts.iter().product());
        let mut point = vec![0.0f64; sizes.len()];
        for_each_multi_index(&node_counts, |idx| {
            for (axis, &i) in idx.iter().enumerate() {
                point[axis] = i as f64 / sizes[axis] as f64;
            }
            values.push(f(&point));
        });
        LatticeCache { node_counts, values }
    }

    fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for (axis, &i) in idx.iter().enumerate() {
            flat = flat * self.node_counts[axis] + i;
        }
        flat
    }

    /// Corner difference of the cached function over the cell at `cell_idx`.
    fn cell_delta(&self, cell_idx: &[usize]) -> f64 {
        let d = cell_idx.len();
        let mut corner = vec![0usize; d];
        let mut total = 0.0;
        for mask in 0u64..(1u64 << d) {
            let mut lower_picks = 0u32;
            for axis in 0..d {
                if mask >> axis & 1 == 1 {
                    corner[axis] = cell_idx[axis] + 1;
                } else {
                    corner[axis] = cell_idx[axis];
                    lower_picks += 1;
                }
            }
            let sign = if lower_picks.is_multiple_of(2) { 1.0 } else { -1.0 };
            total += sign * self.values[self.flatten(&corner)];
        }
        total
    }
}

/// Corner differences of `f` over every cell of `grid`, in one tensor.
///
/// `f` is evaluated once per lattice node and the differences are formed
/// from the cached values, so adjacent cells see identical corner values.
pub fn delta_tensor(f: impl Fn(&[f64]) -> f64, grid: &GridSpec) -> CoefficientTensor {
    let cache = LatticeCache::build(f, grid.sizes());
    let mut values = Vec::with_capacity(grid.cell_count());
    for_each_multi_index(grid.sizes(), |cell| values.push(cache.cell_delta(cell)));
    CoefficientTensor { grid: grid.clone(), values }
}

/// A value per grid cell, stored row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTensor {
    grid: GridSpec,
    values: Vec<f64>,
}

impl CoefficientTensor {
    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::Parameter(format!(
                "coefficient tensor needs {} values for grid {:?}, got {}",
                grid.cell_count(),
                grid.sizes(),
                values.len()
            )));
        }
        Ok(CoefficientTensor { grid, values })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.grid.dimension());
        let mut flat = 0usize;
        for (axis, &i) in index.iter().enumerate() {
            debug_assert!(i < self.grid.sizes()[axis]);
            flat = flat * self.grid.sizes()[axis] + i;
        }
        self.values[flat]
    }
}

fn check_unit_cube(x: &[f64], dimension: usize) -> Result<()> {
    if x.len() != dimension {
        return Err(Error::Dimension { expected: dimension, got: x.len() });
    }
    for (index, &value) in x.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutsideUnitCube { index, value });
        }
    }
    Ok(())
}

/// Binomial basis weights `C(n, i) x^i (1-x)^(n-i)` for `i = 0..=n`.
fn bernstein_basis(n: usize, x: f64) -> Vec<f64> {
    let mut weights = Vec::with_capacity(n + 1);
    let mut binom = 1.0f64;
    for i in 0..=n {
        weights.push(binom * x.powi(i as i32) * (1.0 - x).powi((n - i) as i32));
        binom = binom * (n - i) as f64 / (i + 1) as f64;
    }
    weights
}

/// Bernstein polynomial of `f` on `grid`, evaluated at `x`:
/// the lattice values `f(i/n)` weighted by products of per-axis binomial
/// basis terms. Reproduces constants and linear functions exactly and
/// converges uniformly for continuous `f` as the grid refines.
pub fn bernstein_poly_eval(
    f: impl Fn(&[f64]) -> f64,
    grid: &GridSpec,
    x: &[f64],
) -> Result<f64> {
    check_unit_cube(x, grid.dimension())?;
    let cache = LatticeCache::build(f, grid.sizes());
    let basis: Vec<Vec<f64>> = grid
        .sizes()
        .iter()
        .zip(x)
        .map(|(&n, &xj)| bernstein_basis(n, xj))
        .collect();
    let mut total = 0.0;
    let mut flat = 0usize;
    for_each_multi_index(&cache.node_counts, |idx| {
        let mut weight = 1.0;
        for (axis, &i) in idx.iter().enumerate() {
            weight *= basis[axis][i];
        }
        total += weight * cache.values[flat];
        flat += 1;
    });
    Ok(total)
}

/// Density induced by a coefficient tensor: the mixture
/// `sum_i c_i * prod_j beta_pdf(x_j; i_j + 1, n_j - i_j)`.
///
/// With `c = delta_tensor(f, grid)` for a distribution function `f` this
/// is the density of the Bernstein polynomial of `f`. Weights may be
/// negative when `f` is not componentwise monotone; the result is then a
/// signed density.
pub fn bernstein_density_eval(coefficients: &CoefficientTensor, x: &[f64]) -> Result<f64> {
    let grid = &coefficients.grid;
    check_unit_cube(x, grid.dimension())?;
    // Per-axis beta kernel values for every cell level, computed once.
    let kernels: Vec<Vec<f64>> = grid
        .sizes()
        .iter()
        .zip(x)
        .map(|(&n, &xj)| {
            (0..n)
                .map(|i| {
                    let params = BetaParams::new((i + 1) as f64, (n - i) as f64)
                        .expect("cell kernel parameters are positive integers");
                    beta_pdf(xj, &params)
                })
                .collect()
        })
        .collect();
    let mut total = 0.0;
    let mut flat = 0usize;
    for_each_multi_index(grid.sizes(), |cell| {
        let mut weight = 1.0;
        for (axis, &i) in cell.iter().enumerate() {
            weight *= kernels[axis][i];
        }
        total += weight * coefficients.values[flat];
        flat += 1;
    });
    Ok(total)
}

/// Outcome of a grid monotonicity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityCheck {
    pub is_monotone: bool,
    /// First offending cell in scan order, if any.
    pub violation: Option<MonotonicityViolation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityViolation {
    pub bounds: Hyperbox,
    pub delta: f64,
}

/// Scans a uniform grid with `resolution` cells per axis and reports the
/// first cell (lexicographic order, last axis fastest) whose corner
/// difference of `f` falls below `-`[`MONOTONICITY_SLACK`].
///
/// A pass certifies nonnegative corner differences at this resolution
/// only; a fail is definitive since the witness box is checked exactly.
pub fn is_d_monotone_on_grid(
    f: impl Fn(&[f64]) -> f64,
    dimension: usize,
    resolution: usize,
) -> Result<MonotonicityCheck> {
    if dimension == 0 {
        return Err(Error::Parameter("dimension must be at least one".into()));
    }
    if resolution == 0 {
        return Err(Error::Parameter("resolution must be at least one".into()));
    }
    let nodes = (resolution + 1) as f64;
    if nodes.powi(dimension as i32) > 1e8 {
        return Err(Error::Parameter(format!(
            "monotonicity scan lattice too large: (resolution+1)^d = {nodes}^{dimension}"
        )));
    }
    let grid = GridSpec::new(vec![resolution; dimension])?;
    let cache = LatticeCache::build(f, grid.sizes());
    let mut violation = None;
    for_each_multi_index(grid.sizes(), |cell| {
        if violation.is_some() {
            return;
        }
        let delta = cache.cell_delta(cell);
        if delta < -MONOTONICITY_SLACK {
            violation = Some(MonotonicityViolation { bounds: grid.cell(cell), delta });
        }
    });
    Ok(MonotonicityCheck { is_monotone: violation.is_none(), violation })
}
