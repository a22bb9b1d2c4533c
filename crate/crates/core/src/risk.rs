//! Marginal quantile models, portfolio aggregation and tail risk
//! estimation.
//!
//! A portfolio couples a sampled dependence structure with one marginal
//! loss model per coordinate: each copula row is mapped componentwise
//! through the marginal quantile functions and summed into an aggregate
//! loss. Value-at-risk is a pure order statistic (no interpolation), so
//! results are reproducible across implementations; tail value-at-risk
//! averages the losses strictly beyond that order statistic. Bootstrap
//! resampling quantifies the Monte Carlo error of the VaR estimate.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::copula::CopulaModel;
use crate::exec;
use crate::{Error, Result};

pub const DEFAULT_SEED: u64 = 42;
/// One-in-two-hundred-year tail level.
pub const DEFAULT_ALPHA: f64 = 0.005;
pub const DEFAULT_BINS: usize = 60;
pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 200;

/// Fewer tail observations than this flags the TVaR estimate as
/// low-resolution.
pub const TVAR_RESOLUTION_FLOOR: usize = 10;

/// Chunk indices below this are reserved for sample generation; bootstrap
/// replica `r` uses chunk index `BOOTSTRAP_STREAM_BASE + r`, so a
/// simulation and its error estimate never share random numbers.
const BOOTSTRAP_STREAM_BASE: usize = 1 << 32;

/// A one-dimensional loss model, usable wherever a quantile function is
/// needed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum MarginalModel {
    /// `exp(mu + sigma * Z)` with standard normal `Z`.
    Lognormal { mu: f64, sigma: f64 },
    /// Survival `(scale / x)^shape` on `x >= scale`.
    Pareto { scale: f64, shape: f64 },
    /// Shape-scale parametrization; mean `shape * scale`.
    Gamma { shape: f64, scale: f64 },
    /// Piecewise-linear quantile table of `(probability, quantile)` pairs
    /// with strictly increasing probabilities in (0, 1) and nondecreasing
    /// quantiles; flat beyond the first/last entry. A single entry models
    /// a point mass.
    Empirical { table: Vec<(f64, f64)> },
}

impl MarginalModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Parameter(format!("{name} must be finite and positive, got {v}")))
            }
        };
        match self {
            MarginalModel::Lognormal { mu, sigma } => {
                if !mu.is_finite() {
                    return Err(Error::Parameter(format!("mu must be finite, got {mu}")));
                }
                positive("sigma", *sigma)
            }
            MarginalModel::Pareto { scale, shape } => {
                positive("scale", *scale)?;
                positive("shape", *shape)
            }
            MarginalModel::Gamma { shape, scale } => {
                positive("shape", *shape)?;
                positive("scale", *scale)
            }
            MarginalModel::Empirical { table } => {
                if table.is_empty() {
                    return Err(Error::Parameter("quantile table must not be empty".into()));
                }
                for &(p, q) in table {
                    if !(p.is_finite() && p > 0.0 && p < 1.0) {
                        return Err(Error::Parameter(format!(
                            "table probability {p} outside (0, 1)"
                        )));
                    }
                    if !q.is_finite() {
                        return Err(Error::Parameter(format!("table quantile {q} not finite")));
                    }
                }
                for pair in table.windows(2) {
                    if pair[1].0 <= pair[0].0 {
                        return Err(Error::Parameter(format!(
                            "table probabilities must strictly increase ({} then {})",
                            pair[0].0, pair[1].0
                        )));
                    }
                    if pair[1].1 < pair[0].1 {
                        return Err(Error::Parameter(format!(
                            "table quantiles must not decrease ({} then {})",
                            pair[0].1, pair[1].1
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    /// The `p`-quantile. `p` must lie strictly inside (0, 1).
    pub fn inverse_cdf(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Parameter(format!(
                "quantile level must lie strictly inside (0, 1), got {p}"
            )));
        }
        self.validate()?;
        Ok(self.quantile_unchecked(p))
    }

    /// Quantile without re-validating parameters; `p` in the open
    /// interval. The simulation hot loop uses this after validating the
    /// portfolio once.
    fn quantile_unchecked(&self, p: f64) -> f64 {
        match self {
            MarginalModel::Lognormal { mu, sigma } => {
                (mu + sigma * Normal::standard().inverse_cdf(p)).exp()
            }
            MarginalModel::Pareto { scale, shape } => scale * (1.0 - p).powf(-1.0 / shape),
            MarginalModel::Gamma { shape, scale } => {
                statrs::distribution::Gamma::new(*shape, 1.0 / scale)
                    .expect("parameters validated")
                    .inverse_cdf(p)
            }
            MarginalModel::Empirical { table } => {
                match table.binary_search_by(|(tp, _)| tp.total_cmp(&p)) {
                    Ok(hit) => table[hit].1,
                    Err(0) => table[0].1,
                    Err(k) if k == table.len() => table[k - 1].1,
                    Err(k) => {
                        let (p0, q0) = table[k - 1];
                        let (p1, q1) = table[k];
                        q0 + (q1 - q0) * (p - p0) / (p1 - p0)
                    }
                }
            }
        }
    }
}

/// Everything needed to run one portfolio simulation.
#[derive(Debug, Clone)]
pub struct PortfolioSpec {
    pub label: String,
    pub copula: CopulaModel,
    /// One marginal per copula dimension.
    pub marginals: Vec<MarginalModel>,
    /// Monte Carlo repetitions.
    pub draws: usize,
    pub seed: u64,
    /// Tail level of the reported VaR/TVaR.
    pub alpha: f64,
    pub bins: usize,
    pub bootstrap_resamples: usize,
}

impl PortfolioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.marginals.len() != self.copula.dimension() {
            return Err(Error::Dimension {
                expected: self.copula.dimension(),
                got: self.marginals.len(),
            });
        }
        for marginal in &self.marginals {
            marginal.validate()?;
        }
        check_alpha(self.alpha)?;
        let needed = minimum_samples(self.alpha);
        if self.draws < needed {
            return Err(Error::InsufficientSamples {
                needed,
                got: self.draws,
                alpha: self.alpha,
            });
        }
        if self.bins == 0 {
            return Err(Error::Parameter("need at least one histogram bin".into()));
        }
        if self.bootstrap_resamples < 2 {
            return Err(Error::Parameter(
                "bootstrap needs at least two resamples".into(),
            ));
        }
        Ok(())
    }
}

/// Tail diagnostics attached to a TVaR estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub tvar: f64,
    /// Observations strictly beyond the VaR order statistic.
    pub tail_count: usize,
    /// Set when fewer than [`TVAR_RESOLUTION_FLOOR`] observations support
    /// the mean.
    pub low_resolution: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` strictly increasing edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

/// Bin request: a count of equal-width bins over the sample range, or
/// explicit edges.
#[derive(Debug, Clone, PartialEq)]
pub enum HistogramBins {
    Count(usize),
    Edges(Vec<f64>),
}

/// The full outcome of a portfolio simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub label: String,
    /// Copula identifier, e.g. `bernstein-10x10`.
    pub copula: String,
    pub draws: usize,
    pub seed: u64,
    pub alpha: f64,
    pub var: f64,
    /// Bootstrap standard error of `var`.
    pub var_se: f64,
    pub tvar: f64,
    pub tail_count: usize,
    pub tail_low_resolution: bool,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
    pub histogram: Histogram,
    /// Where the CLI wrote the histogram, when it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram_file: Option<String>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!(
            "risk level alpha must lie strictly inside (0, 1), got {alpha}"
        )))
    }
}

/// Smallest sample count that puts at least one observation at or beyond
/// the `(1 - alpha)` order statistic: `ceil(1 / alpha)`.
pub fn minimum_samples(alpha: f64) -> usize {
    (1.0 / alpha).ceil() as usize
}

/// 1-based index of the VaR order statistic: `ceil((1 - alpha) * n)`,
/// snapped to the nearest integer first to keep exact products like
/// `0.995 * 1000` from drifting across the ceiling.
fn order_statistic_index(n: usize, alpha: f64) -> usize {
    let t = (1.0 - alpha) * n as f64;
    let snapped = t.round();
    let index = if (t - snapped).abs() < 1e-9 { snapped } else { t.ceil() } as usize;
    index.clamp(1, n)
}

fn check_tail_request(samples: &[f64], alpha: f64) -> Result<()> {
    check_alpha(alpha)?;
    let needed = minimum_samples(alpha);
    if samples.len() < needed {
        return Err(Error::InsufficientSamples { needed, got: samples.len(), alpha });
    }
    Ok(())
}

/// Partitions a scratch copy around the VaR order statistic and returns
/// `(var, mean of the strict tail, tail length)`.
fn split_at_var(scratch: &mut [f64], alpha: f64) -> (f64, f64, usize) {
    let n = scratch.len();
    let k = order_statistic_index(n, alpha) - 1; // 0-based pivot position
    let (_, pivot, tail) = scratch.select_nth_unstable_by(k, f64::total_cmp);
    let var = *pivot;
    if tail.is_empty() {
        (var, var, 0)
    } else {
        (var, tail.iter().sum::<f64>() / tail.len() as f64, tail.len())
    }
}

/// Empirical `(1 - alpha)`-quantile: the `ceil((1 - alpha) * n)`-th order
/// statistic of the ascending sort, no interpolation.
pub fn var_estimate(samples: &[f64], alpha: f64) -> Result<f64> {
    check_tail_request(samples, alpha)?;
    let mut scratch = samples.to_vec();
    Ok(split_at_var(&mut scratch, alpha).0)
}

/// Mean of the observations strictly beyond the VaR order statistic; an
/// empty tail falls back to the VaR itself and is flagged.
pub fn tvar_estimate(samples: &[f64], alpha: f64) -> Result<TailEstimate> {
    check_tail_request(samples, alpha)?;
    let mut scratch = samples.to_vec();
    let (_, tvar, tail_count) = split_at_var(&mut scratch, alpha);
    Ok(TailEstimate { tvar, tail_count, low_resolution: tail_count < TVAR_RESOLUTION_FLOOR })
}

/// Standard deviation of the VaR estimate across seeded bootstrap
/// resamples, each a with-replacement redraw of the full sample.
pub fn bootstrap_var_se(
    samples: &[f64],
    alpha: f64,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    bootstrap_var_se_inner(samples, alpha, resamples, seed, true)
}

/// Sequential twin of [`bootstrap_var_se`]; bit-identical output.
pub fn bootstrap_var_se_seq(
    samples: &[f64],
    alpha: f64,
    resamples: usize,
    seed: u64,
) -> Result<f64> {
    bootstrap_var_se_inner(samples, alpha, resamples, seed, false)
}

fn bootstrap_var_se_inner(
    samples: &[f64],
    alpha: f64,
    resamples: usize,
    seed: u64,
    parallel: bool,
) -> Result<f64> {
    check_tail_request(samples, alpha)?;
    if resamples < 2 {
        return Err(Error::Parameter("bootstrap needs at least two resamples".into()));
    }
    let n = samples.len();
    let replica = |r: usize| {
        let mut rng = crate::copula::chunk_rng(seed, BOOTSTRAP_STREAM_BASE + r);
        let mut resample: Vec<f64> =
            (0..n).map(|_| samples[rng.random_range(0..n)]).collect();
        split_at_var(&mut resample, alpha).0
    };
    let estimates = if parallel {
        exec::map_chunks(resamples, replica)
    } else {
        exec::map_chunks_sequential(resamples, replica)
    };
    let mean = estimates.iter().sum::<f64>() / resamples as f64;
    let ss: f64 = estimates.iter().map(|e| (e - mean) * (e - mean)).sum();
    Ok((ss / (resamples - 1) as f64).sqrt())
}

/// Bins the samples: equal width over `[min, max]` for a `Count` request
/// (a degenerate range becomes the single bin `[v - 1/2, v + 1/2]`), or
/// the given strictly increasing `Edges` with out-of-range samples
/// clamped into the end bins so counts always sum to the sample size.
pub fn histogram(samples: &[f64], bins: &HistogramBins) -> Result<Histogram> {
    if samples.is_empty() {
        return Err(Error::Parameter("cannot bin an empty sample".into()));
    }
    if let Some(&bad) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::Parameter(format!("cannot bin non-finite sample {bad}")));
    }
    let edges = match bins {
        HistogramBins::Count(0) => {
            return Err(Error::Parameter("need at least one histogram bin".into()));
        }
        HistogramBins::Count(k) => {
            let min = samples.iter().copied().fold(f64::INFINITY, f64::min);
            let max = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if min == max {
                vec![min - 0.5, min + 0.5]
            } else {
                (0..=*k)
                    .map(|i| min + (max - min) * i as f64 / *k as f64)
                    .collect()
            }
        }
        HistogramBins::Edges(edges) => {
            if edges.len() < 2 {
                return Err(Error::Parameter("need at least two bin edges".into()));
            }
            if edges.iter().any(|e| !e.is_finite())
                || edges.windows(2).any(|w| w[1] <= w[0])
            {
                return Err(Error::Parameter(
                    "bin edges must be finite and strictly increasing".into(),
                ));
            }
            edges.clone()
        }
    };
    let k = edges.len() - 1;
    let mut counts = vec![0u64; k];
    for &x in samples {
        // Last bin is closed; everything outside clamps to the end bins.
        let bin = edges[1..k].partition_point(|&e| e <= x);
        counts[bin] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Number of local maxima of the histogram after a centered moving
/// average of the given odd `window`. Runs of equal smoothed values
/// count once, and the flat ends of the run must actually fall away on
/// both sides. A unimodal histogram reports 1.
pub fn smoothed_peak_count(hist: &Histogram, window: usize) -> usize {
    if window == 0 || window.is_multiple_of(2) {
        return 0;
    }
    let counts = &hist.counts;
    if counts.is_empty() {
        return 0;
    }
    let half = window / 2;
    let smoothed: Vec<f64> = (0..counts.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(counts.len());
            counts[lo..hi].iter().sum::<u64>() as f64 / (hi - lo) as f64
        })
        .collect();
    let mut peaks = 0;
    let mut rising = false;
    for pair in smoothed.windows(2) {
        if pair[1] > pair[0] {
            rising = true;
        } else if pair[1] < pair[0] {
            if rising {
                peaks += 1;
            }
            rising = false;
        }
    }
    if rising {
        peaks += 1; // rose into the last bin
    }
    peaks
}

/// Draws `spec.draws` copula samples, maps coordinate `j` through
/// marginal `j`'s quantile function, sums each row into an aggregate
/// loss, and estimates VaR, TVaR, bootstrap SE and the histogram.
/// Deterministic for a fixed spec (including seed).
pub fn simulate_portfolio(spec: &PortfolioSpec) -> Result<RiskReport> {
    simulate_portfolio_inner(spec, true)
}

/// Sequential twin of [`simulate_portfolio`]; bit-identical output.
pub fn simulate_portfolio_seq(spec: &PortfolioSpec) -> Result<RiskReport> {
    simulate_portfolio_inner(spec, false)
}

/// Aggregate losses only (no estimation); exposed for benchmarks and
/// diagnostics that want the raw sample.
pub fn aggregate_losses(spec: &PortfolioSpec, parallel: bool) -> Result<Vec<f64>> {
    spec.validate()?;
    let batch = if parallel {
        spec.copula.sample(spec.draws, spec.seed)?
    } else {
        spec.copula.sample_seq(spec.draws, spec.seed)?
    };
    let d = spec.copula.dimension();
    let values = batch.values();
    let transform = |chunk: usize| -> Vec<f64> {
        let start = chunk * exec::CHUNK_SIZE;
        let rows = exec::chunk_len(chunk, spec.draws);
        values[start * d..(start + rows) * d]
            .chunks_exact(d)
            .map(|row| {
                row.iter()
                    .zip(&spec.marginals)
                    .map(|(u, marginal)| {
                        // Endpoint draws have probability ~2^-53; nudge
                        // them inside the open interval the quantile
                        // functions require.
                        let p = u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
                        marginal.quantile_unchecked(p)
                    })
                    .sum()
            })
            .collect()
    };
    let tasks = exec::chunk_count(spec.draws);
    let parts = if parallel {
        exec::map_chunks(tasks, transform)
    } else {
        exec::map_chunks_sequential(tasks, transform)
    };
    let mut losses = Vec::with_capacity(spec.draws);
    for part in parts {
        losses.extend_from_slice(&part);
    }
    Ok(losses)
}

fn simulate_portfolio_inner(spec: &PortfolioSpec, parallel: bool) -> Result<RiskReport> {
    let losses = aggregate_losses(spec, parallel)?;
    let mut scratch = losses.clone();
    let (var, tvar, tail_count) = split_at_var(&mut scratch, spec.alpha);
    let var_se = bootstrap_var_se_inner(
        &losses,
        spec.alpha,
        spec.bootstrap_resamples,
        spec.seed,
        parallel,
    )?;
    let hist = histogram(&losses, &HistogramBins::Count(spec.bins))?;
    let n = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / n;
    let ss: f64 = losses.iter().map(|x| (x - mean) * (x - mean)).sum();
    let sd = (ss / (n - 1.0)).sqrt();
    let min = losses.iter().copied().fold(f64::INFINITY, f64::min);
    let max = losses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RiskReport {
        label: spec.label.clone(),
        copula: spec.copula.describe(),
        draws: spec.draws,
        seed: spec.seed,
        alpha: spec.alpha,
        var,
        var_se,
        tvar,
        tail_count,
        tail_low_resolution: tail_count < TVAR_RESOLUTION_FLOOR,
        mean,
        sd,
        min,
        max,
        histogram: hist,
        histogram_file: None,
    })
}
