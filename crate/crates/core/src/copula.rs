//! Copula models: beta-kernel mixtures over admissible skeletons, a
//! Gaussian copula fitted from normal scores, and the independence /
//! comonotonic / countermonotonic references.
//!
//! All samplers are seeded and chunked (see [`crate::exec`]): the chunk
//! at index `c` draws from `ChaCha8` stream `c + 1` of the batch seed, so
//! output is bit-identical between the parallel and sequential paths and
//! a prefix of a longer batch equals the shorter batch.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bernstein::{beta_pdf, BetaParams};
use crate::exec;
use crate::skeleton::{check_admissible, DiscreteSkeleton, RankMatrix};
use crate::{Error, Result};

/// Off-diagonal correlations are clamped this far inside (-1, 1) so that
/// perfectly concordant or discordant ranks still yield a factorizable
/// matrix.
pub const CORRELATION_CLAMP: f64 = 1.0 - 1e-9;

/// Eigenvalue floor used when repairing an indefinite fitted matrix.
pub const EIGENVALUE_FLOOR: f64 = 1e-9;

/// A seeded batch of copula samples, row-major (`len * dimension` values).
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    dimension: usize,
    seed: u64,
    values: Vec<f64>,
    component_trace: Option<Vec<u32>>,
}

impl SampleBatch {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dimension)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Mixture-component index picked per draw; only the beta-kernel
    /// sampler records this.
    pub fn component_trace(&self) -> Option<&[u32]> {
        self.component_trace.as_deref()
    }
}

/// Runs the chunked sampler given a per-chunk row generator.
fn assemble_batch(
    dimension: usize,
    n: usize,
    seed: u64,
    parallel: bool,
    with_trace: bool,
    fill: impl Fn(&mut ChaCha8Rng, usize, &mut Vec<f64>, Option<&mut Vec<u32>>) + Sync + Send,
) -> SampleBatch {
    let chunks = exec::chunk_count(n);
    let task = |chunk: usize| {
        let mut rng = chunk_rng(seed, chunk);
        let len = exec::chunk_len(chunk, n);
        let mut values = Vec::with_capacity(len * dimension);
        let mut trace = with_trace.then(|| Vec::with_capacity(len));
        fill(&mut rng, len, &mut values, trace.as_mut());
        (values, trace)
    };
    let parts = if parallel {
        exec::map_chunks(chunks, task)
    } else {
        exec::map_chunks_sequential(chunks, task)
    };
    let mut values = Vec::with_capacity(n * dimension);
    let mut component_trace = with_trace.then(|| Vec::with_capacity(n));
    for (part_values, part_trace) in parts {
        values.extend_from_slice(&part_values);
        if let (Some(all), Some(part)) = (component_trace.as_mut(), part_trace) {
            all.extend_from_slice(&part);
        }
    }
    SampleBatch { dimension, seed, values, component_trace }
}

/// RNG for one chunk: the batch seed keys the cipher, the chunk picks the
/// stream. Stream 0 is left unused so ad-hoc single-stream consumers of
/// the same seed cannot collide with chunk 0.
pub(crate) fn chunk_rng(seed: u64, chunk: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk as u64 + 1);
    rng
}

/// A copula whose density is the mixture of product beta kernels
/// `Beta(s_j + 1, n_j - s_j)` weighted by the masses of an admissible
/// skeleton.
#[derive(Debug, Clone, PartialEq)]
pub struct BernsteinCopula {
    skeleton: DiscreteSkeleton,
    /// Cumulative counts over the support, for inversion sampling.
    cumulative: Vec<u64>,
}

impl BernsteinCopula {
    /// Requires an admissible skeleton (every marginal level carries mass
    /// exactly `1/n_j`) on a grid with at least two cells per axis; these
    /// are the conditions under which the mixture has uniform marginals.
    pub fn new(skeleton: DiscreteSkeleton) -> Result<Self> {
        if let Some(axis) = skeleton.grid().sizes().iter().position(|&n| n < 2) {
            return Err(Error::Parameter(format!(
                "copula grid needs at least 2 cells per axis, axis {axis} has {}",
                skeleton.grid().sizes()[axis]
            )));
        }
        let report = check_admissible(&skeleton);
        if !report.admissible {
            let (axis, level) = report.first_violation.unwrap_or((0, 0));
            return Err(Error::Parameter(format!(
                "skeleton is not admissible: axis {axis} level {level} carries count {} \
                 over denominator {}, expected {} (mass 1/{})",
                report.level_counts[axis][level],
                skeleton.denominator(),
                skeleton.denominator() / skeleton.grid().sizes()[axis] as u64,
                skeleton.grid().sizes()[axis],
            )));
        }
        Ok(Self::new_unchecked(skeleton))
    }

    /// Builds the mixture without the admissibility check. The result is
    /// a valid product-beta mixture distribution but not necessarily a
    /// copula (marginals may be non-uniform). Useful for studying single
    /// kernels and rounded skeletons.
    pub fn new_unchecked(skeleton: DiscreteSkeleton) -> Self {
        let mut acc = 0u64;
        let cumulative = skeleton
            .points()
            .iter()
            .map(|p| {
                acc += p.count;
                acc
            })
            .collect();
        BernsteinCopula { skeleton, cumulative }
    }

    pub fn skeleton(&self) -> &DiscreteSkeleton {
        &self.skeleton
    }

    pub fn dimension(&self) -> usize {
        self.skeleton.dimension()
    }

    /// CDF: mixture of products of regularized incomplete beta functions,
    /// one product per support point. Equivalent to the Bernstein
    /// polynomial of the rescaled skeleton CDF (see
    /// [`DiscreteSkeleton::rescaled_cdf`]), at cost proportional to the
    /// support size instead of the grid volume.
    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        check_unit_cube(u, self.dimension())?;
        let sizes = self.skeleton.grid().sizes();
        // Per-axis regularized incomplete beta values for every level.
        let levels: Vec<Vec<f64>> = sizes
            .iter()
            .zip(u)
            .map(|(&n, &uj)| {
                (0..n)
                    .map(|s| {
                        statrs::function::beta::beta_reg(
                            (s + 1) as f64,
                            (n - s) as f64,
                            uj,
                        )
                    })
                    .collect()
            })
            .collect();
        let denominator = self.skeleton.denominator() as f64;
        let mut total = 0.0;
        for point in self.skeleton.points() {
            let mut product = point.count as f64 / denominator;
            for (axis, &level) in point.index.iter().enumerate() {
                product *= levels[axis][level];
            }
            total += product;
        }
        Ok(total.clamp(0.0, 1.0))
    }

    /// Density: `sum_s mass(s) * prod_j beta_pdf(u_j; s_j + 1, n_j - s_j)`.
    pub fn pdf(&self, u: &[f64]) -> Result<f64> {
        check_unit_cube(u, self.dimension())?;
        let sizes = self.skeleton.grid().sizes();
        let kernels: Vec<Vec<f64>> = sizes
            .iter()
            .zip(u)
            .map(|(&n, &uj)| {
                (0..n)
                    .map(|s| {
                        let params = BetaParams::new((s + 1) as f64, (n - s) as f64)
                            .expect("integer kernel parameters are positive");
                        beta_pdf(uj, &params)
                    })
                    .collect()
            })
            .collect();
        let denominator = self.skeleton.denominator() as f64;
        let mut total = 0.0;
        for point in self.skeleton.points() {
            let mut product = point.count as f64 / denominator;
            for (axis, &level) in point.index.iter().enumerate() {
                product *= kernels[axis][level];
            }
            total += product;
        }
        Ok(total)
    }

    /// Inverts a uniform integer draw over the denominator into a support
    /// point index.
    fn pick_component(&self, rng: &mut ChaCha8Rng) -> usize {
        let ticket = rng.random_range(0..self.skeleton.denominator());
        self.cumulative.partition_point(|&c| c <= ticket)
    }

    fn fill_rows(
        &self,
        kernels: &[Vec<rand_distr::Beta<f64>>],
        rng: &mut ChaCha8Rng,
        len: usize,
        values: &mut Vec<f64>,
        mut trace: Option<&mut Vec<u32>>,
    ) {
        for _ in 0..len {
            let k = self.pick_component(rng);
            if let Some(t) = trace.as_deref_mut() {
                t.push(k as u32);
            }
            for kernel in &kernels[k] {
                values.push(kernel.sample(rng));
            }
        }
    }

    /// One beta sampler per (support point, axis).
    fn samplers(&self) -> Vec<Vec<rand_distr::Beta<f64>>> {
        let sizes = self.skeleton.grid().sizes();
        self.skeleton
            .points()
            .iter()
            .map(|p| {
                p.index
                    .iter()
                    .zip(sizes)
                    .map(|(&s, &n)| {
                        rand_distr::Beta::new((s + 1) as f64, (n - s) as f64)
                            .expect("integer kernel parameters are positive")
                    })
                    .collect()
            })
            .collect()
    }
}

/// Two-step mixture sampler: pick a support point by mass (exact integer
/// inversion), then draw one beta variate per axis. `component_trace`
/// records the picked point per draw. `n = 0` yields an empty batch.
pub fn sample_bernstein(copula: &BernsteinCopula, n: usize, seed: u64) -> SampleBatch {
    sample_bernstein_inner(copula, n, seed, true)
}

/// Sequential twin of [`sample_bernstein`]; bit-identical output.
pub fn sample_bernstein_seq(copula: &BernsteinCopula, n: usize, seed: u64) -> SampleBatch {
    sample_bernstein_inner(copula, n, seed, false)
}

fn sample_bernstein_inner(
    copula: &BernsteinCopula,
    n: usize,
    seed: u64,
    parallel: bool,
) -> SampleBatch {
    let kernels = copula.samplers();
    assemble_batch(
        copula.dimension(),
        n,
        seed,
        parallel,
        true,
        |rng, len, values, trace| copula.fill_rows(&kernels, rng, len, values, trace),
    )
}

/// A Gaussian copula: dependence of a multivariate normal with the given
/// correlation matrix, marginals transformed to uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCopulaModel {
    correlation: DMatrix<f64>,
    /// Lower Cholesky factor of the correlation matrix.
    factor: DMatrix<f64>,
    precision: DMatrix<f64>,
    ln_det: f64,
}

impl GaussianCopulaModel {
    /// Requires a symmetric positive-definite matrix with unit diagonal.
    pub fn new(correlation: DMatrix<f64>) -> Result<Self> {
        let d = correlation.nrows();
        if d == 0 || correlation.ncols() != d {
            return Err(Error::Parameter(format!(
                "correlation matrix must be square and non-empty, got {}x{}",
                correlation.nrows(),
                correlation.ncols()
            )));
        }
        for i in 0..d {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Parameter(format!(
                    "correlation diagonal entry {i} is {}, expected 1",
                    correlation[(i, i)]
                )));
            }
            for j in 0..i {
                if (correlation[(i, j)] - correlation[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Parameter(format!(
                        "correlation matrix is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        let cholesky = nalgebra::Cholesky::new(correlation.clone()).ok_or_else(|| {
            Error::Parameter("correlation matrix is not positive definite".into())
        })?;
        let factor = cholesky.l();
        let ln_det = 2.0 * factor.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let precision = cholesky.inverse();
        Ok(GaussianCopulaModel { correlation, factor, precision, ln_det })
    }

    /// Convenience constructor from row data.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::Parameter("correlation rows must form a square matrix".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(d, d, &flat))
    }

    /// The exchangeable matrix with a common off-diagonal entry.
    pub fn exchangeable(dimension: usize, rho: f64) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Parameter("dimension must be at least one".into()));
        }
        let m = DMatrix::from_fn(dimension, dimension, |i, j| if i == j { 1.0 } else { rho });
        Self::new(m)
    }

    pub fn dimension(&self) -> usize {
        self.correlation.nrows()
    }

    pub fn correlation(&self) -> &DMatrix<f64> {
        &self.correlation
    }

    /// Density `phi_corr(z) / prod_j phi(z_j)` with `z_j` the standard
    /// normal quantile of `u_j`. Defined on the open cube only.
    pub fn pdf(&self, u: &[f64]) -> Result<f64> {
        check_unit_cube(u, self.dimension())?;
        if u.iter().any(|&v| v == 0.0 || v == 1.0) {
            return Err(Error::Parameter(
                "gaussian copula density requires interior points".into(),
            ));
        }
        let normal = Normal::standard();
        let z = DVector::from_iterator(u.len(), u.iter().map(|&v| normal.inverse_cdf(v)));
        let quad = (&self.precision * &z).dot(&z) - z.dot(&z);
        Ok((-0.5 * (quad + self.ln_det)).exp())
    }
}

/// Correlation matrix of the normal scores of the ranks, repaired to
/// positive definiteness when needed.
///
/// Scores are `z_ij = Phi^{-1}((r_ij - 0.5) / n)`. Off-diagonal entries
/// of the score correlation are clamped to [`CORRELATION_CLAMP`] in
/// magnitude (perfect concordance or discordance would otherwise give a
/// singular matrix); if the clamped matrix still fails to factor, its
/// eigenvalues are floored at [`EIGENVALUE_FLOOR`] and the diagonal is
/// re-normalized to one.
pub fn fit_gaussian(ranks: &RankMatrix) -> Result<GaussianCopulaModel> {
    let n = ranks.observations();
    if n < 3 {
        return Err(Error::Parameter(format!(
            "gaussian fit needs at least 3 observations, got {n}"
        )));
    }
    let d = ranks.dimension();
    let normal = Normal::standard();
    let scores: Vec<Vec<f64>> = ranks
        .rows()
        .iter()
        .map(|row| {
            row.iter()
                .map(|&r| normal.inverse_cdf((r as f64 - 0.5) / n as f64))
                .collect()
        })
        .collect();
    let means: Vec<f64> = scores.iter().map(|s| s.iter().sum::<f64>() / n as f64).collect();
    let mut centered = scores;
    for (col, mean) in centered.iter_mut().zip(&means) {
        for v in col.iter_mut() {
            *v -= mean;
        }
    }
    let norms: Vec<f64> = centered
        .iter()
        .map(|col| col.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    if let Some(i) = norms.iter().position(|&v| v == 0.0) {
        return Err(Error::Parameter(format!(
            "score column {i} is constant; correlation undefined"
        )));
    }
    let mut matrix = DMatrix::identity(d, d);
    for i in 0..d {
        for j in 0..i {
            let raw: f64 = centered[i]
                .iter()
                .zip(&centered[j])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / (norms[i] * norms[j]);
            let clamped = raw.clamp(-CORRELATION_CLAMP, CORRELATION_CLAMP);
            matrix[(i, j)] = clamped;
            matrix[(j, i)] = clamped;
        }
    }
    match GaussianCopulaModel::new(matrix.clone()) {
        Ok(model) => Ok(model),
        Err(_) => GaussianCopulaModel::new(repair_correlation(matrix)),
    }
}

/// Floors the eigenvalues and re-normalizes to a unit diagonal.
fn repair_correlation(matrix: DMatrix<f64>) -> DMatrix<f64> {
    let d = matrix.nrows();
    let eigen = nalgebra::SymmetricEigen::new(matrix);
    let values = eigen.eigenvalues.map(|v| v.max(EIGENVALUE_FLOOR));
    let rebuilt = &eigen.eigenvectors
        * DMatrix::from_diagonal(&values)
        * eigen.eigenvectors.transpose();
    let scale: Vec<f64> = (0..d).map(|i| rebuilt[(i, i)].sqrt()).collect();
    DMatrix::from_fn(d, d, |i, j| {
        if i == j {
            1.0
        } else {
            (rebuilt[(i, j)] / (scale[i] * scale[j]))
                .clamp(-CORRELATION_CLAMP, CORRELATION_CLAMP)
        }
    })
}

/// Cholesky transform sampler: standard normals, correlate, map through
/// the normal CDF. `n = 0` yields an empty batch.
pub fn sample_gaussian(model: &GaussianCopulaModel, n: usize, seed: u64) -> SampleBatch {
    sample_gaussian_inner(model, n, seed, true)
}

/// Sequential twin of [`sample_gaussian`]; bit-identical output.
pub fn sample_gaussian_seq(model: &GaussianCopulaModel, n: usize, seed: u64) -> SampleBatch {
    sample_gaussian_inner(model, n, seed, false)
}

fn sample_gaussian_inner(
    model: &GaussianCopulaModel,
    n: usize,
    seed: u64,
    parallel: bool,
) -> SampleBatch {
    let d = model.dimension();
    let factor = &model.factor;
    let normal = Normal::standard();
    assemble_batch(d, n, seed, parallel, false, |rng, len, values, _| {
        let mut eps = vec![0.0f64; d];
        for _ in 0..len {
            for e in eps.iter_mut() {
                *e = rand_distr::StandardNormal.sample(rng);
            }
            for i in 0..d {
                let mut z = 0.0;
                for j in 0..=i {
                    z += factor[(i, j)] * eps[j];
                }
                values.push(normal.cdf(z));
            }
        }
    })
}

/// The three standard reference copulas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    Independence,
    Comonotonic,
    Countermonotonic,
}

impl ReferenceKind {
    pub fn name(&self) -> &'static str {
        match self {
            ReferenceKind::Independence => "independence",
            ReferenceKind::Comonotonic => "comonotonic",
            ReferenceKind::Countermonotonic => "countermonotonic",
        }
    }
}

/// Independence draws iid uniforms, comonotonic repeats one uniform per
/// row, countermonotonic (two dimensions only — no such copula exists
/// beyond d = 2) emits `(U, 1-U)`.
pub fn sample_reference(
    kind: ReferenceKind,
    dimension: usize,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    sample_reference_inner(kind, dimension, n, seed, true)
}

/// Sequential twin of [`sample_reference`]; bit-identical output.
pub fn sample_reference_seq(
    kind: ReferenceKind,
    dimension: usize,
    n: usize,
    seed: u64,
) -> Result<SampleBatch> {
    sample_reference_inner(kind, dimension, n, seed, false)
}

fn check_reference(kind: ReferenceKind, dimension: usize) -> Result<()> {
    if dimension == 0 {
        return Err(Error::Parameter("dimension must be at least one".into()));
    }
    if kind == ReferenceKind::Countermonotonic && dimension != 2 {
        return Err(Error::Parameter(format!(
            "countermonotonic copula exists only in dimension 2, got {dimension}"
        )));
    }
    Ok(())
}

fn sample_reference_inner(
    kind: ReferenceKind,
    dimension: usize,
    n: usize,
    seed: u64,
    parallel: bool,
) -> Result<SampleBatch> {
    check_reference(kind, dimension)?;
    Ok(assemble_batch(
        dimension,
        n,
        seed,
        parallel,
        false,
        move |rng, len, values, _| {
            for _ in 0..len {
                match kind {
                    ReferenceKind::Independence => {
                        for _ in 0..dimension {
                            values.push(rng.random::<f64>());
                        }
                    }
                    ReferenceKind::Comonotonic => {
                        let u = rng.random::<f64>();
                        for _ in 0..dimension {
                            values.push(u);
                        }
                    }
                    ReferenceKind::Countermonotonic => {
                        let u = rng.random::<f64>();
                        values.push(u);
                        values.push(1.0 - u);
                    }
                }
            }
        },
    ))
}

/// One front door over every copula this crate can sample, so the risk
/// engine and the CLI can hold "some copula" uniformly.
#[derive(Debug, Clone, PartialEq)]
pub enum CopulaModel {
    Bernstein(BernsteinCopula),
    Gaussian(GaussianCopulaModel),
    Reference { kind: ReferenceKind, dimension: usize },
}

impl CopulaModel {
    pub fn reference(kind: ReferenceKind, dimension: usize) -> Result<Self> {
        check_reference(kind, dimension)?;
        Ok(CopulaModel::Reference { kind, dimension })
    }

    pub fn dimension(&self) -> usize {
        match self {
            CopulaModel::Bernstein(c) => c.dimension(),
            CopulaModel::Gaussian(m) => m.dimension(),
            CopulaModel::Reference { dimension, .. } => *dimension,
        }
    }

    /// Short identifier used in reports, e.g. `bernstein-10x10`.
    pub fn describe(&self) -> String {
        match self {
            CopulaModel::Bernstein(c) => {
                let sizes: Vec<String> =
                    c.skeleton().grid().sizes().iter().map(|n| n.to_string()).collect();
                format!("bernstein-{}", sizes.join("x"))
            }
            CopulaModel::Gaussian(m) => format!("gaussian-d{}", m.dimension()),
            CopulaModel::Reference { kind, dimension } => {
                format!("{}-d{dimension}", kind.name())
            }
        }
    }

    pub fn sample(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        self.sample_inner(n, seed, true)
    }

    /// Sequential twin of [`CopulaModel::sample`]; bit-identical output.
    pub fn sample_seq(&self, n: usize, seed: u64) -> Result<SampleBatch> {
        self.sample_inner(n, seed, false)
    }

    fn sample_inner(&self, n: usize, seed: u64, parallel: bool) -> Result<SampleBatch> {
        match self {
            CopulaModel::Bernstein(c) => Ok(sample_bernstein_inner(c, n, seed, parallel)),
            CopulaModel::Gaussian(m) => Ok(sample_gaussian_inner(m, n, seed, parallel)),
            CopulaModel::Reference { kind, dimension } => {
                sample_reference_inner(*kind, *dimension, n, seed, parallel)
            }
        }
    }

    /// Density, for the models that have one (the monotonicity extremes
    /// concentrate on a null set and are rejected).
    pub fn pdf(&self, u: &[f64]) -> Result<f64> {
        match self {
            CopulaModel::Bernstein(c) => c.pdf(u),
            CopulaModel::Gaussian(m) => m.pdf(u),
            CopulaModel::Reference { kind: ReferenceKind::Independence, dimension } => {
                check_unit_cube(u, *dimension)?;
                Ok(1.0)
            }
            CopulaModel::Reference { kind, .. } => Err(Error::Parameter(format!(
                "{} copula has no density",
                kind.name()
            ))),
        }
    }
}

fn check_unit_cube(u: &[f64], dimension: usize) -> Result<()> {
    if u.len() != dimension {
        return Err(Error::Dimension { expected: dimension, got: u.len() });
    }
    for (index, &value) in u.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::OutsideUnitCube { index, value });
        }
    }
    Ok(())
}
