//! File formats: rank tables (CSV), skeleton documents (JSON), portfolio
//! configs (TOML), and the tabular outputs consumed by plotting scripts.
//!
//! Skeletons persist as integer counts over an explicit denominator, so
//! admissibility stays machine-checkable in exact arithmetic after a round
//! trip. Skeletons that only exist as rounded decimal masses carry a
//! `rounded` flag and skip the counts-sum-to-denominator check.
//!
//! All writers are deterministic: fixed field order, shortest round-trip
//! decimals for reals, plain integers for counts. Same input, same bytes.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::Digest;

use crate::copula::{fit_gaussian, BernsteinCopula, CopulaModel, GaussianCopulaModel, ReferenceKind, SampleBatch};
use crate::risk::{self, Histogram, MarginalModel, PortfolioSpec, RiskReport};
use crate::bernstein::GridSpec;
use crate::skeleton::{
    check_admissible, ranks_from_data, AdmissibilityReport, DiscreteSkeleton, RankMatrix,
    SkeletonPoint,
};
use crate::{Error, Result};

/// How to interpret the data rows of a rank table file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankInput {
    /// Integer ranks; every column must be a permutation of `1..=n`.
    Ranks,
    /// Real-valued observations; ranked per column on load.
    Raw,
}

/// A rank table read from disk, with the header names preserved.
#[derive(Debug, Clone)]
pub struct LoadedRanks {
    pub ranks: RankMatrix,
    /// Component names from the header row.
    pub names: Vec<String>,
    /// True when raw mode hit equal values and broke the tie by row order.
    pub ties_broken: bool,
}

/// Reads a comma-separated table: one header row of component names, then
/// one row per observation. Blank lines are skipped; fields are trimmed.
pub fn load_ranks(path: &Path, mode: RankInput) -> Result<LoadedRanks> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display();
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::Ranks(format!("{name}: file is empty")))?;
    let names: Vec<String> = header.split(',').map(|f| f.trim().to_string()).collect();
    if names.iter().any(String::is_empty) {
        return Err(Error::Ranks(format!("{name}: header has an empty component name")));
    }
    let d = names.len();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != d {
            return Err(Error::Ranks(format!(
                "{name}: line {}: expected {d} fields, found {}",
                lineno + 1,
                fields.len()
            )));
        }
        for (column, field) in columns.iter_mut().zip(&fields) {
            let value: f64 = field.parse().map_err(|_| {
                Error::Ranks(format!(
                    "{name}: line {}: cannot parse {field:?} as a number",
                    lineno + 1
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Ranks(format!(
                    "{name}: line {}: non-finite value {field:?}",
                    lineno + 1
                )));
            }
            column.push(value);
        }
    }
    if columns[0].is_empty() {
        return Err(Error::Ranks(format!("{name}: no data rows")));
    }

    match mode {
        RankInput::Raw => {
            let (ranks, ties_broken) = ranks_from_data(&columns)?;
            Ok(LoadedRanks { ranks, names, ties_broken })
        }
        RankInput::Ranks => {
            let n = columns[0].len();
            let mut rows = Vec::with_capacity(d);
            for (column, column_name) in columns.iter().zip(&names) {
                let mut row = Vec::with_capacity(n);
                let mut seen = vec![false; n];
                for &value in column {
                    let rank = value as u64;
                    if rank as f64 != value || rank < 1 || rank > n as u64 {
                        return Err(Error::Ranks(format!(
                            "{name}: column {column_name}: rank {value} outside 1..={n}"
                        )));
                    }
                    if std::mem::replace(&mut seen[rank as usize - 1], true) {
                        return Err(Error::Ranks(format!(
                            "{name}: column {column_name}: duplicate rank {rank}"
                        )));
                    }
                    row.push(rank);
                }
                rows.push(row);
            }
            Ok(LoadedRanks { ranks: RankMatrix::new(rows)?, names, ties_broken: false })
        }
    }
}

/// Hex SHA-256 of a file, for skeleton provenance records.
pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = sha2::Sha256::digest(&bytes);
    let mut hex = String::with_capacity(64);
    for byte in digest {
        write!(hex, "{byte:02x}").expect("writing to a String cannot fail");
    }
    Ok(hex)
}

/// Where a stored skeleton came from. Purely informational; never
/// validated against the referenced files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    /// Typically the rank table the skeleton was built from.
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ranks_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multiplier: Option<u64>,
    /// Accepted for hand-annotated files; the writers here never set it,
    /// keeping outputs byte-reproducible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
}

/// A skeleton as persisted: the distribution plus file-level metadata.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkeletonFile {
    pub skeleton: DiscreteSkeleton,
    /// Counts are scaled rounded masses, not exact; the sum may miss the
    /// denominator.
    pub rounded: bool,
    pub provenance: Option<Provenance>,
}

impl SkeletonFile {
    pub fn exact(skeleton: DiscreteSkeleton) -> Self {
        SkeletonFile { skeleton, rounded: false, provenance: None }
    }
}

/// A loaded skeleton file together with its admissibility report. Loading
/// never refuses an inadmissible skeleton — callers that require
/// admissibility (e.g. copula construction) enforce it themselves.
#[derive(Debug, Clone)]
pub struct LoadedSkeleton {
    pub file: SkeletonFile,
    pub admissibility: AdmissibilityReport,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SkeletonDocument {
    dimension: usize,
    grid: Vec<usize>,
    denominator: u64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    rounded: bool,
    points: Vec<PointDocument>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<Provenance>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PointDocument {
    index: Vec<usize>,
    count: u64,
}

pub fn render_skeleton_json(file: &SkeletonFile) -> String {
    let doc = SkeletonDocument {
        dimension: file.skeleton.dimension(),
        grid: file.skeleton.grid().sizes().to_vec(),
        denominator: file.skeleton.denominator(),
        rounded: file.rounded,
        points: file
            .skeleton
            .points()
            .iter()
            .map(|p| PointDocument { index: p.index.clone(), count: p.count })
            .collect(),
        provenance: file.provenance.clone(),
    };
    let mut text =
        serde_json::to_string_pretty(&doc).expect("skeleton documents always serialize");
    text.push('\n');
    text
}

pub fn save_skeleton(file: &SkeletonFile, path: &Path) -> Result<()> {
    fs::write(path, render_skeleton_json(file)).map_err(|e| Error::io(path, e))
}

pub fn load_skeleton(path: &Path) -> Result<LoadedSkeleton> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display();
    let doc: SkeletonDocument = serde_json::from_str(&text)
        .map_err(|e| Error::Skeleton(format!("{name}: {e}")))?;
    if doc.dimension != doc.grid.len() {
        return Err(Error::Skeleton(format!(
            "{name}: dimension field is {} but the grid has {} axes",
            doc.dimension,
            doc.grid.len()
        )));
    }
    let grid = GridSpec::new(doc.grid).map_err(|e| Error::Skeleton(format!("{name}: {e}")))?;
    let points: Vec<SkeletonPoint> = doc
        .points
        .into_iter()
        .map(|p| SkeletonPoint { index: p.index, count: p.count })
        .collect();
    let skeleton = if doc.rounded {
        DiscreteSkeleton::from_parts_rounded(grid, doc.denominator, points)?
    } else {
        DiscreteSkeleton::new(grid, doc.denominator, points)?
    };
    let admissibility = check_admissible(&skeleton);
    Ok(LoadedSkeleton {
        file: SkeletonFile { skeleton, rounded: doc.rounded, provenance: doc.provenance },
        admissibility,
    })
}

/// Largest number of grid rows a density dump may produce.
pub const MAX_GRID_ROWS: usize = 10_000_000;

/// Writes the copula density on the uniform interior grid with midpoints
/// `(k + 0.5) / resolution` per axis, row-major with the last axis
/// fastest: a header `u1,…,ud,density`, then `resolution^d` data rows.
pub fn write_density_grid(
    w: &mut dyn Write,
    model: &CopulaModel,
    resolution: usize,
) -> Result<()> {
    if resolution < 2 {
        return Err(Error::Parameter(format!(
            "density grid resolution must be at least 2, got {resolution}"
        )));
    }
    let d = model.dimension();
    let rows = (resolution as u128).checked_pow(d as u32).unwrap_or(u128::MAX);
    if rows > MAX_GRID_ROWS as u128 {
        return Err(Error::Parameter(format!(
            "density grid of {resolution}^{d} rows exceeds the {MAX_GRID_ROWS} row limit"
        )));
    }
    // Fail before writing anything if the model has no density at all.
    model.pdf(&vec![0.5; d])?;

    let wio = |e: std::io::Error| Error::io("<density grid output>", e);
    let mut header = String::new();
    for j in 1..=d {
        write!(header, "u{j},").expect("writing to a String cannot fail");
    }
    header.push_str("density");
    writeln!(w, "{header}").map_err(wio)?;

    let sizes = vec![resolution; d];
    let mut point = vec![0.0; d];
    let mut line = String::new();
    let mut failure: Option<Error> = None;
    crate::bernstein::for_each_multi_index(&sizes, |index| {
        if failure.is_some() {
            return;
        }
        for (x, &k) in point.iter_mut().zip(index) {
            *x = (k as f64 + 0.5) / resolution as f64;
        }
        match model.pdf(&point) {
            Ok(value) => {
                line.clear();
                for x in &point {
                    write!(line, "{x},").expect("writing to a String cannot fail");
                }
                write!(line, "{value}").expect("writing to a String cannot fail");
                if let Err(e) = writeln!(w, "{line}") {
                    failure = Some(wio(e));
                }
            }
            Err(e) => failure = Some(e),
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

pub fn save_density_grid(path: &Path, model: &CopulaModel, resolution: usize) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_density_grid(&mut w, model, resolution)?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a sample batch as CSV with header `u1,…,ud`.
pub fn write_samples_csv(w: &mut dyn Write, batch: &SampleBatch) -> std::io::Result<()> {
    let d = batch.dimension();
    let mut line = String::new();
    for j in 1..=d {
        if j > 1 {
            line.push(',');
        }
        write!(line, "u{j}").expect("writing to a String cannot fail");
    }
    writeln!(w, "{line}")?;
    for row in batch.rows() {
        line.clear();
        for (j, x) in row.iter().enumerate() {
            if j > 0 {
                line.push(',');
            }
            write!(line, "{x}").expect("writing to a String cannot fail");
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_samples_csv(path: &Path, batch: &SampleBatch) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_samples_csv(&mut w, batch).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a histogram as CSV with header `lower,upper,count`.
pub fn write_histogram_csv(w: &mut dyn Write, hist: &Histogram) -> std::io::Result<()> {
    writeln!(w, "lower,upper,count")?;
    for (k, &count) in hist.counts.iter().enumerate() {
        writeln!(w, "{},{},{count}", hist.edges[k], hist.edges[k + 1])?;
    }
    Ok(())
}

pub fn save_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_histogram_csv(&mut w, hist).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn render_report_json(report: &RiskReport) -> String {
    let mut text =
        serde_json::to_string_pretty(report).expect("risk reports always serialize");
    text.push('\n');
    text
}

pub fn save_report_json(path: &Path, report: &RiskReport) -> Result<()> {
    fs::write(path, render_report_json(report)).map_err(|e| Error::io(path, e))
}

pub const COMPARISON_HEADER: &str = "label,copula,draws,alpha,var,var_se,tvar,tail_count";

/// Writes one CSV row per report, columns per [`COMPARISON_HEADER`].
pub fn write_comparison_csv(w: &mut dyn Write, reports: &[RiskReport]) -> std::io::Result<()> {
    writeln!(w, "{COMPARISON_HEADER}")?;
    for r in reports {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.label, r.copula, r.draws, r.alpha, r.var, r.var_se, r.tvar, r.tail_count
        )?;
    }
    Ok(())
}

pub fn save_comparison_csv(path: &Path, reports: &[RiskReport]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_comparison_csv(&mut w, reports).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Dependence structure section of a portfolio config.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum CopulaConfig {
    /// Bernstein copula of a stored skeleton.
    Skeleton { file: String },
    /// Exactly one of `correlation` (full matrix), `rho` (exchangeable),
    /// or `ranks_file` (fit from data) must be present.
    Gaussian {
        correlation: Option<Vec<Vec<f64>>>,
        rho: Option<f64>,
        dimension: Option<usize>,
        ranks_file: Option<String>,
        #[serde(default)]
        raw: bool,
    },
    Independence { dimension: Option<usize> },
    Comonotonic { dimension: Option<usize> },
    Countermonotonic { dimension: Option<usize> },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigDocument {
    label: Option<String>,
    draws: usize,
    seed: Option<u64>,
    alpha: Option<f64>,
    bins: Option<usize>,
    bootstrap_resamples: Option<usize>,
    copula: CopulaConfig,
    marginals: Vec<MarginalModel>,
}

fn resolve_path(base: &Path, relative: &str) -> PathBuf {
    base.join(relative)
}

fn resolve_copula(
    config: CopulaConfig,
    base: &Path,
    marginal_count: usize,
) -> Result<CopulaModel> {
    match config {
        CopulaConfig::Skeleton { file } => {
            let loaded = load_skeleton(&resolve_path(base, &file))?;
            let copula = BernsteinCopula::new(loaded.file.skeleton)
                .map_err(|e| Error::Config(format!("skeleton {file}: {e}")))?;
            Ok(CopulaModel::Bernstein(copula))
        }
        CopulaConfig::Gaussian { correlation, rho, dimension, ranks_file, raw } => {
            let sources =
                correlation.is_some() as u8 + rho.is_some() as u8 + ranks_file.is_some() as u8;
            if sources != 1 {
                return Err(Error::Config(
                    "gaussian copula needs exactly one of correlation, rho, or ranks_file"
                        .into(),
                ));
            }
            let model = if let Some(rows) = correlation {
                GaussianCopulaModel::from_rows(&rows)
            } else if let Some(rho) = rho {
                let d = dimension.unwrap_or(marginal_count);
                GaussianCopulaModel::exchangeable(d, rho)
            } else {
                let file = ranks_file.expect("checked above");
                let mode = if raw { RankInput::Raw } else { RankInput::Ranks };
                let loaded = load_ranks(&resolve_path(base, &file), mode)?;
                fit_gaussian(&loaded.ranks)
            }
            .map_err(|e| Error::Config(format!("gaussian copula: {e}")))?;
            Ok(CopulaModel::Gaussian(model))
        }
        CopulaConfig::Independence { dimension } => reference_from_config(
            ReferenceKind::Independence,
            dimension.unwrap_or(marginal_count),
        ),
        CopulaConfig::Comonotonic { dimension } => reference_from_config(
            ReferenceKind::Comonotonic,
            dimension.unwrap_or(marginal_count),
        ),
        CopulaConfig::Countermonotonic { dimension } => reference_from_config(
            ReferenceKind::Countermonotonic,
            dimension.unwrap_or(marginal_count),
        ),
    }
}

fn reference_from_config(kind: ReferenceKind, dimension: usize) -> Result<CopulaModel> {
    CopulaModel::reference(kind, dimension)
        .map_err(|e| Error::Config(format!("{} copula: {e}", kind.name())))
}

/// Reads a portfolio config (TOML), resolves file references relative to
/// the config's directory, and validates the assembled spec. All failures
/// — including semantic ones like a too-small draw count — are reported
/// as config errors, since they originate in the file.
///
/// Schema: top-level `draws` (required), `label`, `seed`, `alpha`,
/// `bins`, `bootstrap_resamples` (all optional with the documented
/// defaults), a `[copula]` table with a `kind` tag, and one `[[marginals]]`
/// table per component with a `family` tag.
pub fn load_portfolio_config(path: &Path) -> Result<PortfolioSpec> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let name = path.display();
    let doc: ConfigDocument =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{name}: {e}")))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let label = doc.label.unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "portfolio".into())
    });
    let copula = resolve_copula(doc.copula, base, doc.marginals.len())?;
    let spec = PortfolioSpec {
        label,
        copula,
        marginals: doc.marginals,
        draws: doc.draws,
        seed: doc.seed.unwrap_or(risk::DEFAULT_SEED),
        alpha: doc.alpha.unwrap_or(risk::DEFAULT_ALPHA),
        bins: doc.bins.unwrap_or(risk::DEFAULT_BINS),
        bootstrap_resamples: doc.bootstrap_resamples.unwrap_or(risk::DEFAULT_BOOTSTRAP_RESAMPLES),
    };
    spec.validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
    Ok(spec)
}
