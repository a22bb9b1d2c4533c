//! Rank matrices, pseudo-rank augmentation and reduction onto coarse grids.
//!
//! The adaptive pipeline starts from the componentwise ranks of `n`
//! multivariate observations. When a target grid's axis sizes do not
//! divide `n`, each observation is first *augmented* into `M` pseudo
//! observations — rank `r` expands to the integer interval
//! `((r-1)M, rM]`, so every row stays a permutation, now of `1..=nM` —
//! and the pseudo ranks are then *reduced* onto the grid by rescaling
//! `r* = ceil(r+ * n_i / (nM))`. Counting coincident reduced columns
//! yields a [`DiscreteSkeleton`]: point masses `count / (nM)` on grid
//! cells. With `M` chosen so that every `n_i` divides `nM`, the skeleton
//! is *admissible* — each axis level carries mass exactly `1/n_i` — which
//! is precisely the condition for the beta-kernel mixture built on it (see
//! [`crate::copula`]) to have uniform marginals.

use std::collections::BTreeMap;

use crate::bernstein::GridSpec;
use crate::{Error, Result};

/// Componentwise ranks of a multivariate sample: row `i` holds the ranks
/// of component `i` across the `n` observations (columns), and every row
/// is a permutation of `1..=n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankMatrix {
    rows: Vec<Vec<u64>>,
}

impl RankMatrix {
    pub fn new(rows: Vec<Vec<u64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Ranks("need at least one component row".into()));
        }
        let n = rows[0].len();
        if n == 0 {
            return Err(Error::Ranks("need at least one observation".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Ranks(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            let mut seen = vec![false; n];
            for &r in row {
                if r == 0 || r > n as u64 {
                    return Err(Error::Ranks(format!(
                        "row {i} contains rank {r}, outside 1..={n}"
                    )));
                }
                if std::mem::replace(&mut seen[(r - 1) as usize], true) {
                    return Err(Error::Ranks(format!(
                        "row {i} contains rank {r} twice; rows must be permutations"
                    )));
                }
            }
        }
        Ok(RankMatrix { rows })
    }

    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    /// Number of observations `n`.
    pub fn observations(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }

    /// Rank of component `component` in observation `observation` (0-based
    /// indices, 1-based rank value).
    pub fn rank(&self, component: usize, observation: usize) -> u64 {
        self.rows[component][observation]
    }
}

/// Ranks raw data columns (component-major: `columns[i][j]` is component
/// `i` of observation `j`). Returns the rank matrix and whether any ties
/// were encountered; ties are broken by observation order, so the result
/// is deterministic but mildly order-dependent.
pub fn ranks_from_data(columns: &[Vec<f64>]) -> Result<(RankMatrix, bool)> {
    if columns.is_empty() || columns[0].is_empty() {
        return Err(Error::Ranks("need at least one column and one observation".into()));
    }
    let n = columns[0].len();
    let mut rows = Vec::with_capacity(columns.len());
    let mut ties = false;
    for (i, column) in columns.iter().enumerate() {
        if column.len() != n {
            return Err(Error::Ranks(format!(
                "column {i} has {} entries, expected {n}",
                column.len()
            )));
        }
        if let Some(&bad) = column.iter().find(|v| !v.is_finite()) {
            return Err(Error::Ranks(format!(
                "column {i} contains non-finite value {bad}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| column[a].total_cmp(&column[b]).then(a.cmp(&b)));
        ties |= order.windows(2).any(|w| column[w[0]] == column[w[1]]);
        let mut row = vec![0u64; n];
        for (pos, &obs) in order.iter().enumerate() {
            row[obs] = (pos + 1) as u64;
        }
        rows.push(row);
    }
    Ok((RankMatrix::new(rows)?, ties))
}

/// Ranks blown up by a multiplier `M`: each observation became `M`
/// columns and every row is a permutation of `1..=nM`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoRankMatrix {
    rows: Vec<Vec<u64>>,
    observations: usize,
    multiplier: u64,
}

impl PseudoRankMatrix {
    pub fn dimension(&self) -> usize {
        self.rows.len()
    }

    /// Number of original observations `n`.
    pub fn observations(&self) -> usize {
        self.observations
    }

    pub fn multiplier(&self) -> u64 {
        self.multiplier
    }

    /// Total pseudo observations `n * M`.
    pub fn pseudo_count(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<u64>] {
        &self.rows
    }
}

/// Expands every observation into `multiplier` pseudo observations.
///
/// The pseudo column `j` (1-based) belongs to original observation
/// `k = ceil(j / M)` and receives, for each component, the value
/// `r * M + (k - 1) * M + 1 - j` where `r` is the component's original
/// rank — i.e. the block of `M` consecutive integers `((r-1)M, rM]`,
/// walked downwards. Each row of the result is a permutation of `1..=nM`.
pub fn augment(ranks: &RankMatrix, multiplier: u64) -> Result<PseudoRankMatrix> {
    augment_with_order(ranks, multiplier, |_, slots| {
        // Identity slot order within each block.
        for (t, slot) in slots.iter_mut().enumerate() {
            *slot = t as u64;
        }
    })
}

/// Like [`augment`], but the `M` slots inside each observation block are
/// emitted in a seeded random order. The same order is used for every
/// component, so each pseudo column stays an intact tuple and the reduced
/// skeleton is unchanged — only the column layout varies.
pub fn augment_shuffled(
    ranks: &RankMatrix,
    multiplier: u64,
    seed: u64,
) -> Result<PseudoRankMatrix> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    augment_with_order(ranks, multiplier, move |_, slots| {
        for (t, slot) in slots.iter_mut().enumerate() {
            *slot = t as u64;
        }
        slots.shuffle(&mut rng);
    })
}

fn augment_with_order(
    ranks: &RankMatrix,
    multiplier: u64,
    mut slot_order: impl FnMut(usize, &mut [u64]),
) -> Result<PseudoRankMatrix> {
    if multiplier == 0 {
        return Err(Error::Parameter("multiplier must be at least one".into()));
    }
    let d = ranks.dimension();
    let n = ranks.observations();
    let total = n
        .checked_mul(multiplier as usize)
        .filter(|&t| t <= u32::MAX as usize)
        .ok_or_else(|| Error::Parameter(format!("n * M = {n} * {multiplier} too large")))?;
    let mut rows = vec![Vec::with_capacity(total); d];
    let mut slots = vec![0u64; multiplier as usize];
    for observation in 0..n {
        slot_order(observation, &mut slots);
        for &slot in &slots {
            for (row, rank_row) in rows.iter_mut().zip(ranks.rows()) {
                let r = rank_row[observation];
                // Slot t of the block occupies (r-1)M + M - t.
                row.push((r - 1) * multiplier + multiplier - slot);
            }
        }
    }
    Ok(PseudoRankMatrix { rows, observations: n, multiplier })
}

/// A point mass on a grid cell: `index[j]` is the cell level on axis `j`
/// (0-based, below `grid.sizes()[j]`) and the mass is `count / denominator`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonPoint {
    pub index: Vec<usize>,
    pub count: u64,
}

/// A discrete distribution on the cells of a grid, stored sparsely as
/// lexicographically sorted support points with positive integer counts
/// over a common denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiscreteSkeleton {
    grid: GridSpec,
    denominator: u64,
    points: Vec<SkeletonPoint>,
}

impl DiscreteSkeleton {
    /// Validates and sorts the support. Counts must be positive, indices
    /// in range and distinct, and the counts must sum to `denominator`.
    pub fn new(grid: GridSpec, denominator: u64, points: Vec<SkeletonPoint>) -> Result<Self> {
        let sk = Self::from_parts_rounded(grid, denominator, points)?;
        let total = sk.total_count();
        if total != sk.denominator {
            return Err(Error::Skeleton(format!(
                "counts sum to {total}, expected denominator {}",
                sk.denominator
            )));
        }
        Ok(sk)
    }

    /// Same structural checks as [`DiscreteSkeleton::new`] but the counts
    /// need not sum to the denominator. For skeletons that only exist as
    /// rounded masses scaled to integers; everything downstream that
    /// needs exact total mass one must go through [`DiscreteSkeleton::new`]
    /// or check admissibility.
    pub fn from_parts_rounded(
        grid: GridSpec,
        denominator: u64,
        mut points: Vec<SkeletonPoint>,
    ) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::Skeleton("denominator must be positive".into()));
        }
        if points.is_empty() {
            return Err(Error::Skeleton("support must not be empty".into()));
        }
        for p in &points {
            if p.index.len() != grid.dimension() {
                return Err(Error::Skeleton(format!(
                    "point {:?} has dimension {}, grid has {}",
                    p.index,
                    p.index.len(),
                    grid.dimension()
                )));
            }
            for (axis, (&level, &size)) in p.index.iter().zip(grid.sizes()).enumerate() {
                if level >= size {
                    return Err(Error::Skeleton(format!(
                        "point {:?} exceeds grid on axis {axis} (size {size})",
                        p.index
                    )));
                }
            }
            if p.count == 0 {
                return Err(Error::Skeleton(format!(
                    "point {:?} has zero count; omit unsupported cells",
                    p.index
                )));
            }
        }
        points.sort_by(|a, b| a.index.cmp(&b.index));
        if points.windows(2).any(|w| w[0].index == w[1].index) {
            return Err(Error::Skeleton("support contains duplicate points".into()));
        }
        Ok(DiscreteSkeleton { grid, denominator, points })
    }

    /// The uniform skeleton over the full lattice (count one per cell),
    /// whose beta-kernel mixture is the independence copula.
    pub fn independence(grid: GridSpec) -> DiscreteSkeleton {
        let mut points = Vec::with_capacity(grid.cell_count());
        crate::bernstein::for_each_multi_index(grid.sizes(), |idx| {
            points.push(SkeletonPoint { index: idx.to_vec(), count: 1 });
        });
        let denominator = grid.cell_count() as u64;
        DiscreteSkeleton { grid, denominator, points }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn dimension(&self) -> usize {
        self.grid.dimension()
    }

    pub fn denominator(&self) -> u64 {
        self.denominator
    }

    pub fn points(&self) -> &[SkeletonPoint] {
        &self.points
    }

    pub fn support_size(&self) -> usize {
        self.points.len()
    }

    pub fn total_count(&self) -> u64 {
        self.points.iter().map(|p| p.count).sum()
    }

    /// Mass of support point `k`.
    pub fn mass(&self, k: usize) -> f64 {
        self.points[k].count as f64 / self.denominator as f64
    }

    /// Distribution function of the *rescaled* support: point `s` sits at
    /// `((s_1+1)/n_1, ..., (s_d+1)/n_d)`. Its Bernstein polynomial on the
    /// skeleton grid is exactly the CDF of the beta-kernel copula built
    /// from this skeleton, which makes it a useful cross-check.
    pub fn rescaled_cdf(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dimension());
        let sizes = self.grid.sizes();
        let mut acc = 0u64;
        'points: for p in &self.points {
            for (axis, &level) in p.index.iter().enumerate() {
                if ((level + 1) as f64 / sizes[axis] as f64) > x[axis] {
                    continue 'points;
                }
            }
            acc += p.count;
        }
        acc as f64 / self.denominator as f64
    }
}

/// Per-axis marginal level counts and the exact admissibility verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibilityReport {
    /// True iff `n_axis * level_count == denominator` for every level of
    /// every axis — each level carries mass exactly `1 / n_axis`.
    pub admissible: bool,
    /// `level_counts[axis][level]`: total count at that marginal level.
    pub level_counts: Vec<Vec<u64>>,
    /// Largest `|level_count / denominator - 1 / n_axis|`, for reporting
    /// near-misses of rounded skeletons.
    pub max_deviation: f64,
    /// First `(axis, level)` failing the exact check, if any.
    pub first_violation: Option<(usize, usize)>,
}

/// Checks whether every marginal level of every axis carries mass exactly
/// `1 / n_axis`. The comparison `n_axis * count == denominator` is integer
/// arithmetic, so there is no tolerance to tune.
pub fn check_admissible(skeleton: &DiscreteSkeleton) -> AdmissibilityReport {
    let sizes = skeleton.grid().sizes();
    let denominator = skeleton.denominator();
    let mut level_counts: Vec<Vec<u64>> = sizes.iter().map(|&n| vec![0u64; n]).collect();
    for p in skeleton.points() {
        for (axis, &level) in p.index.iter().enumerate() {
            level_counts[axis][level] += p.count;
        }
    }
    let mut admissible = true;
    let mut first_violation = None;
    let mut max_deviation = 0.0f64;
    for (axis, counts) in level_counts.iter().enumerate() {
        for (level, &count) in counts.iter().enumerate() {
            if count as u128 * sizes[axis] as u128 != denominator as u128 {
                admissible = false;
                first_violation.get_or_insert((axis, level));
            }
            let deviation =
                (count as f64 / denominator as f64 - 1.0 / sizes[axis] as f64).abs();
            max_deviation = max_deviation.max(deviation);
        }
    }
    AdmissibilityReport { admissible, level_counts, max_deviation, first_violation }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn lcm(a: u64, b: u64) -> u64 {
    a / gcd(a, b) * b
}

/// Smallest multiplier `M >= 1` such that every grid axis size divides
/// `n * M`: the least common multiple of `n_i / gcd(n_i, n)`.
pub fn choose_multiplier(n: u64, grid: &GridSpec) -> u64 {
    grid.sizes()
        .iter()
        .map(|&size| size as u64 / gcd(size as u64, n))
        .fold(1, lcm)
}

/// Rescales pseudo ranks onto `grid` and counts coincident columns.
///
/// Pseudo rank `r+` on axis `i` lands on level `ceil(r+ * n_i / (nM)) - 1`.
/// Requires every `n_i` to divide `nM`; the masses then sit over the
/// denominator `nM` and the result is admissible by construction.
pub fn reduce(pseudo: &PseudoRankMatrix, grid: &GridSpec) -> Result<DiscreteSkeleton> {
    if grid.dimension() != pseudo.dimension() {
        return Err(Error::Dimension {
            expected: pseudo.dimension(),
            got: grid.dimension(),
        });
    }
    let total = pseudo.pseudo_count() as u64;
    for (axis, &size) in grid.sizes().iter().enumerate() {
        if !total.is_multiple_of(size as u64) {
            return Err(Error::Divisibility {
                axis,
                grid_size: size as u64,
                n: pseudo.observations() as u64,
                multiplier: pseudo.multiplier(),
                smallest: choose_multiplier(pseudo.observations() as u64, grid),
            });
        }
    }
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    let mut index = vec![0usize; grid.dimension()];
    for j in 0..pseudo.pseudo_count() {
        for (axis, row) in pseudo.rows().iter().enumerate() {
            let size = grid.sizes()[axis] as u64;
            // ceil(r * n_i / total) - 1 in exact integer arithmetic.
            let level = (row[j] as u128 * size as u128).div_ceil(total as u128) - 1;
            index[axis] = level as usize;
        }
        *counts.entry(index.clone()).or_insert(0) += 1;
    }
    let points = counts
        .into_iter()
        .map(|(index, count)| SkeletonPoint { index, count })
        .collect();
    DiscreteSkeleton::new(grid.clone(), total, points)
}

/// The skeleton of the raw ranks themselves: grid `(n, ..., n)`, one count
/// per observation. Always admissible.
pub fn empirical_skeleton(ranks: &RankMatrix) -> DiscreteSkeleton {
    let n = ranks.observations();
    let grid = GridSpec::new(vec![n; ranks.dimension()]).expect("rank matrix is non-degenerate");
    let mut counts: BTreeMap<Vec<usize>, u64> = BTreeMap::new();
    for j in 0..n {
        let index: Vec<usize> =
            (0..ranks.dimension()).map(|i| (ranks.rank(i, j) - 1) as usize).collect();
        *counts.entry(index).or_insert(0) += 1;
    }
    let points = counts
        .into_iter()
        .map(|(index, count)| SkeletonPoint { index, count })
        .collect();
    DiscreteSkeleton::new(grid, n as u64, points)
        .expect("ranks are permutations, so the empirical skeleton is valid")
}

/// Inverse of [`empirical_skeleton`]: recovers the rank matrix from a
/// full-resolution skeleton (grid `(n,…,n)`, denominator `n`, one count
/// per support point). The observations come back in lexicographic
/// support order rather than the original row order, which everything
/// downstream (reduction, fitting) is invariant to.
pub fn ranks_from_empirical(skeleton: &DiscreteSkeleton) -> Result<RankMatrix> {
    let n = skeleton.denominator() as usize;
    let shape_ok = skeleton.grid().sizes().iter().all(|&s| s == n)
        && skeleton.support_size() == n
        && skeleton.points().iter().all(|p| p.count == 1);
    if !shape_ok {
        return Err(Error::Parameter(format!(
            "not an empirical skeleton: need grid ({n},…,{n}) with {n} unit-count support \
             points, got grid {:?} with {} points",
            skeleton.grid().sizes(),
            skeleton.support_size()
        )));
    }
    let rows = (0..skeleton.dimension())
        .map(|i| skeleton.points().iter().map(|p| p.index[i] as u64 + 1).collect())
        .collect();
    RankMatrix::new(rows)
}

/// Augment-and-reduce in one step. `multiplier` of `None` picks the
/// smallest valid value via [`choose_multiplier`]; an explicit value is
/// validated against the divisibility requirement.
pub fn adaptive_pipeline(
    ranks: &RankMatrix,
    grid: &GridSpec,
    multiplier: Option<u64>,
) -> Result<DiscreteSkeleton> {
    let m = multiplier.unwrap_or_else(|| choose_multiplier(ranks.observations() as u64, grid));
    reduce(&augment(ranks, m)?, grid)
}
