//! Command-line surface over the copula-forge pipeline: fit a skeleton
//! from ranks, reduce it to a coarser grid, sample or tabulate copulas,
//! and run portfolio risk simulations.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input (including
//! flag errors), 3 domain error (e.g. divisibility violations,
//! countermonotonic in d > 2), 4 internal error. Data goes to stdout
//! unless `--output DIR` is given; status lines always go to stderr.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand, ValueEnum};

use copula_forge::bernstein::GridSpec;
use copula_forge::copula::{BernsteinCopula, CopulaModel, GaussianCopulaModel, ReferenceKind};
use copula_forge::io::{self, Provenance, RankInput, SkeletonFile};
use copula_forge::risk::{self, RiskReport};
use copula_forge::skeleton::{
    augment, augment_shuffled, check_admissible, choose_multiplier, empirical_skeleton,
    ranks_from_empirical, reduce, RankMatrix,
};
use copula_forge::{Error, Result};

#[derive(Parser)]
#[command(name = "copula-forge", version, about = "Adaptive Bernstein copulas and tail risk")]
struct Cli {
    /// RNG seed (default 42); overrides config-file seeds when given.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Write output files into this directory instead of stdout.
    #[arg(long, global = true, value_name = "DIR")]
    output: Option<PathBuf>,

    /// Stdout format for var/compare (other subcommands have one format).
    #[arg(long, global = true, value_enum, default_value_t = Format::Report)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// JSON report (var) or an aligned text table (compare).
    Report,
    /// Comma-separated table, one row per portfolio.
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    /// Exchangeable Gaussian copula (see --rho, --dim).
    Gaussian,
    #[value(alias = "indep")]
    Independence,
    #[value(alias = "como")]
    Comonotonic,
    /// Perfect negative dependence; two dimensions only.
    #[value(alias = "counter")]
    Countermonotonic,
}

/// `--multiplier M` or `--multiplier auto`.
#[derive(Clone, Copy)]
struct Multiplier(Option<u64>);

fn parse_multiplier(s: &str) -> std::result::Result<Multiplier, String> {
    if s == "auto" {
        return Ok(Multiplier(None));
    }
    match s.parse::<u64>() {
        Ok(0) | Err(_) => Err(format!("must be a positive integer or \"auto\", got {s:?}")),
        Ok(m) => Ok(Multiplier(Some(m))),
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the empirical skeleton of a rank table.
    Fit {
        /// Rank table CSV: header of component names, one row per
        /// observation.
        #[arg(long, value_name = "FILE")]
        ranks: PathBuf,
        /// Treat the table as raw observations and rank each column.
        #[arg(long)]
        raw: bool,
    },

    /// Reduce ranks (or a fitted skeleton) to a coarser grid.
    #[command(group(ArgGroup::new("input").required(true)))]
    Reduce {
        #[arg(long, value_name = "FILE", group = "input")]
        ranks: Option<PathBuf>,
        /// Treat --ranks as raw observations.
        #[arg(long, requires = "ranks")]
        raw: bool,
        /// A full-resolution skeleton as written by fit.
        #[arg(long, value_name = "FILE", group = "input")]
        skeleton: Option<PathBuf>,
        /// Target grid sizes, e.g. 10,10.
        #[arg(long, required = true, value_delimiter = ',', value_name = "N1,N2,...")]
        grid: Vec<usize>,
        /// Rank multiplier M; "auto" picks the smallest valid value.
        #[arg(long, default_value = "auto", value_parser = parse_multiplier)]
        multiplier: Multiplier,
        /// Shuffle pseudo-rank slots with this seed before reducing.
        /// The reduced skeleton is invariant; useful as a self-check.
        #[arg(long, value_name = "SEED")]
        shuffle: Option<u64>,
    },

    /// Draw copula samples as CSV.
    #[command(group(ArgGroup::new("model").required(true)))]
    Sample {
        /// Skeleton file; its Bernstein copula is sampled.
        #[arg(long, value_name = "FILE", group = "model")]
        skeleton: Option<PathBuf>,
        /// A reference copula instead of a skeleton.
        #[arg(long, value_enum, group = "model", value_name = "KIND")]
        copula: Option<Kind>,
        /// Pairwise correlation for --copula gaussian.
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        /// Dimension for --copula models.
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Number of sample rows.
        #[arg(long)]
        n: usize,
    },

    /// Tabulate a copula density on a uniform grid (CSV).
    #[command(group(ArgGroup::new("model").required(true)))]
    Density {
        #[arg(long, value_name = "FILE", group = "model")]
        skeleton: Option<PathBuf>,
        #[arg(long, value_enum, group = "model", value_name = "KIND")]
        copula: Option<Kind>,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        /// Grid points per axis; rows are evaluated at (k + 0.5)/R.
        #[arg(long, value_name = "R")]
        resolution: usize,
    },

    /// Simulate a portfolio config and report VaR/TVaR.
    Var {
        /// Portfolio config (TOML); see the repository README for the
        /// schema.
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
    },

    /// Run several portfolio configs and tabulate the risk measures.
    Compare {
        #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
        configs: Vec<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    // Catching panics keeps the documented internal-error exit code
    // distinct from ordinary failures; the default hook has already
    // printed the panic message.
    match std::panic::catch_unwind(move || run(cli)) {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            std::process::exit(if e.is_input_error() { 2 } else { 3 });
        }
        Err(_) => std::process::exit(4),
    }
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed.unwrap_or(risk::DEFAULT_SEED);
    let output = cli.output.as_deref();
    match cli.command {
        Command::Fit { ranks, raw } => cmd_fit(output, &ranks, raw),
        Command::Reduce { ranks, raw, skeleton, grid, multiplier, shuffle } => {
            cmd_reduce(output, ranks.as_deref(), raw, skeleton.as_deref(), grid, multiplier, shuffle)
        }
        Command::Sample { skeleton, copula, rho, dim, n } => {
            let model = resolve_model(skeleton.as_deref(), copula, rho, dim)?;
            cmd_sample(output, &model, n, seed)
        }
        Command::Density { skeleton, copula, rho, dim, resolution } => {
            let model = resolve_model(skeleton.as_deref(), copula, rho, dim)?;
            cmd_density(output, &model, resolution)
        }
        Command::Var { config } => cmd_var(output, cli.format, &config, cli.seed),
        Command::Compare { configs } => cmd_compare(output, cli.format, &configs, cli.seed),
    }
}

fn stream_err(e: std::io::Error) -> Error {
    Error::Io { path: "<stdout>".into(), source: e }
}

/// Writes one artifact: into `dir/filename` under --output, to stdout
/// otherwise.
fn emit(
    output: Option<&Path>,
    filename: &str,
    write: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match output {
        Some(dir) => {
            std::fs::create_dir_all(dir)
                .map_err(|e| Error::Io { path: dir.into(), source: e })?;
            let path = dir.join(filename);
            let file = std::fs::File::create(&path)
                .map_err(|e| Error::Io { path: path.clone(), source: e })?;
            let mut w = std::io::BufWriter::new(file);
            write(&mut w)?;
            w.flush().map_err(|e| Error::Io { path: path.clone(), source: e })?;
            eprintln!("wrote {}", path.display());
            Ok(())
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            write(&mut w)?;
            w.flush().map_err(stream_err)
        }
    }
}

fn resolve_model(
    skeleton: Option<&Path>,
    kind: Option<Kind>,
    rho: f64,
    dim: usize,
) -> Result<CopulaModel> {
    if let Some(path) = skeleton {
        let loaded = io::load_skeleton(path)?;
        if !loaded.admissibility.admissible {
            eprintln!(
                "note: skeleton is not admissible (max marginal deviation {:.2e})",
                loaded.admissibility.max_deviation
            );
        }
        return Ok(CopulaModel::Bernstein(BernsteinCopula::new(loaded.file.skeleton)?));
    }
    match kind.expect("clap guarantees one model source") {
        Kind::Gaussian => {
            Ok(CopulaModel::Gaussian(GaussianCopulaModel::exchangeable(dim, rho)?))
        }
        Kind::Independence => CopulaModel::reference(ReferenceKind::Independence, dim),
        Kind::Comonotonic => CopulaModel::reference(ReferenceKind::Comonotonic, dim),
        Kind::Countermonotonic => CopulaModel::reference(ReferenceKind::Countermonotonic, dim),
    }
}

fn skeleton_with_provenance(
    skeleton: copula_forge::skeleton::DiscreteSkeleton,
    source: &Path,
    multiplier: Option<u64>,
) -> Result<SkeletonFile> {
    Ok(SkeletonFile {
        skeleton,
        rounded: false,
        provenance: Some(Provenance {
            source: source.display().to_string(),
            ranks_sha256: Some(io::file_sha256(source)?),
            multiplier,
            created: None,
        }),
    })
}

fn cmd_fit(output: Option<&Path>, ranks_path: &Path, raw: bool) -> Result<()> {
    let mode = if raw { RankInput::Raw } else { RankInput::Ranks };
    let loaded = io::load_ranks(ranks_path, mode)?;
    if loaded.ties_broken {
        eprintln!("note: ties in the raw data were broken by row order");
    }
    let skeleton = empirical_skeleton(&loaded.ranks);
    eprintln!(
        "fit: n={} observations, d={} components, {} support points over {}",
        loaded.ranks.observations(),
        loaded.ranks.dimension(),
        skeleton.support_size(),
        skeleton.denominator()
    );
    let file = skeleton_with_provenance(skeleton, ranks_path, None)?;
    emit(output, "skeleton.json", |w| {
        w.write_all(io::render_skeleton_json(&file).as_bytes()).map_err(stream_err)
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_reduce(
    output: Option<&Path>,
    ranks_path: Option<&Path>,
    raw: bool,
    skeleton_path: Option<&Path>,
    grid_sizes: Vec<usize>,
    multiplier: Multiplier,
    shuffle: Option<u64>,
) -> Result<()> {
    let (ranks, source): (RankMatrix, &Path) = match (ranks_path, skeleton_path) {
        (Some(path), None) => {
            let mode = if raw { RankInput::Raw } else { RankInput::Ranks };
            let loaded = io::load_ranks(path, mode)?;
            if loaded.ties_broken {
                eprintln!("note: ties in the raw data were broken by row order");
            }
            (loaded.ranks, path)
        }
        (None, Some(path)) => (ranks_from_empirical(&io::load_skeleton(path)?.file.skeleton)?, path),
        _ => unreachable!("clap guarantees exactly one input source"),
    };
    let grid = GridSpec::new(grid_sizes)?;
    let m = multiplier
        .0
        .unwrap_or_else(|| choose_multiplier(ranks.observations() as u64, &grid));
    eprintln!("M={m}");
    let pseudo = match shuffle {
        Some(shuffle_seed) => augment_shuffled(&ranks, m, shuffle_seed)?,
        None => augment(&ranks, m)?,
    };
    let reduced = reduce(&pseudo, &grid)?;
    let admissibility = check_admissible(&reduced);
    eprintln!(
        "support points: {} -> {} over denominator {}",
        ranks.observations(),
        reduced.support_size(),
        reduced.denominator()
    );
    eprintln!("admissible: {}", if admissibility.admissible { "yes" } else { "NO" });
    let file = skeleton_with_provenance(reduced, source, Some(m))?;
    emit(output, "skeleton.json", |w| {
        w.write_all(io::render_skeleton_json(&file).as_bytes()).map_err(stream_err)
    })
}

fn cmd_sample(output: Option<&Path>, model: &CopulaModel, n: usize, seed: u64) -> Result<()> {
    let batch = model.sample(n, seed)?;
    eprintln!("sampled {n} rows from {} (seed {seed})", model.describe());
    emit(output, "samples.csv", |w| io::write_samples_csv(w, &batch).map_err(stream_err))
}

fn cmd_density(output: Option<&Path>, model: &CopulaModel, resolution: usize) -> Result<()> {
    eprintln!(
        "density grid for {}: {resolution} points per axis, {} rows",
        model.describe(),
        resolution.pow(model.dimension() as u32)
    );
    emit(output, "density.csv", |w| io::write_density_grid(w, model, resolution))
}

fn run_portfolio(config: &Path, seed_override: Option<u64>) -> Result<RiskReport> {
    let mut spec = io::load_portfolio_config(config)?;
    if let Some(seed) = seed_override {
        spec.seed = seed;
    }
    let report = risk::simulate_portfolio(&spec)?;
    eprintln!(
        "{}: VaR_{} = {:.4} (bootstrap SE {:.4}), TVaR = {:.4}, {} tail points",
        report.label, report.alpha, report.var, report.var_se, report.tvar, report.tail_count
    );
    if report.tail_low_resolution {
        eprintln!("note: fewer than 10 tail points; the TVaR estimate is coarse");
    }
    Ok(report)
}

fn cmd_var(
    output: Option<&Path>,
    format: Format,
    config: &Path,
    seed_override: Option<u64>,
) -> Result<()> {
    let mut report = run_portfolio(config, seed_override)?;
    match output {
        Some(_) => {
            report.histogram_file = Some("histogram.csv".into());
            emit(output, "histogram.csv", |w| {
                io::write_histogram_csv(w, &report.histogram).map_err(stream_err)
            })?;
            emit(output, "report.json", |w| {
                w.write_all(io::render_report_json(&report).as_bytes()).map_err(stream_err)
            })
        }
        None => match format {
            Format::Report => emit(None, "", |w| {
                w.write_all(io::render_report_json(&report).as_bytes()).map_err(stream_err)
            }),
            Format::Csv => emit(None, "", |w| {
                io::write_comparison_csv(w, std::slice::from_ref(&report)).map_err(stream_err)
            }),
        },
    }
}

fn cmd_compare(
    output: Option<&Path>,
    format: Format,
    configs: &[PathBuf],
    seed_override: Option<u64>,
) -> Result<()> {
    let reports: Vec<RiskReport> = configs
        .iter()
        .map(|config| run_portfolio(config, seed_override))
        .collect::<Result<_>>()?;
    match output {
        Some(_) => emit(output, "comparison.csv", |w| {
            io::write_comparison_csv(w, &reports).map_err(stream_err)
        }),
        None => match format {
            Format::Csv => emit(None, "", |w| {
                io::write_comparison_csv(w, &reports).map_err(stream_err)
            }),
            Format::Report => emit(None, "", |w| {
                w.write_all(render_table(&reports).as_bytes()).map_err(stream_err)
            }),
        },
    }
}

/// Plain aligned text table for terminal use; full precision lives in
/// the CSV/JSON outputs.
fn render_table(reports: &[RiskReport]) -> String {
    let mut rows = vec![[
        "label".to_string(),
        "copula".to_string(),
        "VaR".to_string(),
        "SE".to_string(),
        "TVaR".to_string(),
        "tail".to_string(),
    ]];
    for r in reports {
        rows.push([
            r.label.clone(),
            r.copula.clone(),
            format!("{:.4}", r.var),
            format!("{:.4}", r.var_se),
            format!("{:.4}", r.tvar),
            r.tail_count.to_string(),
        ]);
    }
    let mut widths = [0usize; 6];
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    for row in &rows {
        for (k, (cell, w)) in row.iter().zip(widths).enumerate() {
            if k > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            if k + 1 < row.len() {
                for _ in cell.len()..w {
                    out.push(' ');
                }
            }
        }
        out.push('\n');
    }
    out
}
