use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use hofd::hogs::HofdBasis;
use hofd::pipeline::PipelineConfig;
use hofd::regression::{CoefficientVector, Method};
use hofd::{ErrorCategory, HofdError};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_DATA: u8 = 4;

/// Hierarchically orthogonal functional decomposition and generalized
/// Sobol indices for models with dependent inputs.
#[derive(Debug, Parser)]
#[command(name = "hofd", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; the bundled toy setup when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (replicate r uses seed + r).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; all cores by default.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Regression method: ols, ridge, foba or lars.
    #[arg(long, global = true)]
    method: Option<Method>,
    /// Sample size for generated samples.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Maximal interaction order.
    #[arg(long, global = true)]
    order: Option<usize>,
    /// Number of replicates.
    #[arg(long, global = true)]
    replicates: Option<usize>,
    /// CSV sample to use instead of generating one.
    #[arg(long, global = true)]
    sample: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a sample and write sample.csv.
    Sample,
    /// Build the basis and fit coefficients (basis.json, fit.json).
    Fit {
        /// Reuse a basis.json instead of building one from the sample.
        #[arg(long)]
        basis: Option<PathBuf>,
    },
    /// Estimate indices (report.json, report.csv, boxplot.csv).
    Indices,
    /// Compare methods over the replicate seeds (bench.json).
    Bench,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HOFD_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<HofdError>() {
            return match e.category() {
                ErrorCategory::Config => EXIT_CONFIG,
                ErrorCategory::Numerical => EXIT_NUMERICAL,
                ErrorCategory::Data => EXIT_DATA,
            };
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return EXIT_CONFIG;
        }
    }
    1
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    if let Some(jobs) = common.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = load_config(&common)?;
    cfg.validate()?;
    fs::create_dir_all(&common.out).with_context(|| format!("creating {}", common.out.display()))?;
    let out = common.out.as_path();
    match cli.command {
        Command::Sample => cmd_sample(&cfg, out),
        Command::Fit { basis } => cmd_fit(&cfg, basis.as_deref(), out),
        Command::Indices => cmd_indices(&cfg, out),
        Command::Bench => cmd_bench(&cfg, out),
    }
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let mut cfg: PipelineConfig =
                toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            // relative sample paths are resolved against the config file
            if let (Some(sample), Some(dir)) = (&cfg.sample, path.parent()) {
                if sample.is_relative() {
                    cfg.sample = Some(dir.join(sample));
                }
            }
            cfg
        }
        None => PipelineConfig::toy(),
    };
    if let Some(sample) = &common.sample {
        cfg.sample = Some(sample.clone());
        cfg.inputs = None;
        cfg.model = None;
    }
    if cfg.inputs.is_none() && cfg.model.is_none() && cfg.sample.is_none() {
        let toy = PipelineConfig::toy();
        cfg.inputs = toy.inputs;
        cfg.model = toy.model;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(method) = common.method {
        cfg.fit.method = method;
    }
    if let Some(n) = common.n {
        cfg.n = n;
    }
    if let Some(order) = common.order {
        cfg.order = order;
    }
    if let Some(r) = common.replicates {
        cfg.replicates = r;
    }
    Ok(cfg)
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(path: &Path, write: impl FnOnce(&mut fs::File) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing {}", path.display()))?;
    write(tmp.as_file_mut())?;
    tmp.as_file_mut().flush()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |f| Ok(f.write_all(text.as_bytes())?))
}

fn cmd_sample(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let sample = cfg.sample(cfg.seed)?;
    write_atomic(&out.join("sample.csv"), |f| Ok(sample.write_csv(f)?))?;
    println!("sample: n = {}, p = {}", sample.n(), sample.p());
    Ok(())
}

fn cmd_fit(cfg: &PipelineConfig, basis_path: Option<&Path>, out: &Path) -> Result<()> {
    let sample = cfg.sample(cfg.seed)?;
    let basis = match basis_path {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            HofdBasis::from_json(&text)?
        }
        None => cfg.basis(&sample)?,
    };
    let (design, coef) = cfg.fit_on_basis(&basis, &sample, cfg.seed)?;
    if let Some(rcond) = design.gram_rcond() {
        info!("design Gram reciprocal condition {rcond:.3e}");
    }
    if cfg.sample.is_none() {
        write_atomic(&out.join("sample.csv"), |f| Ok(sample.write_csv(f)?))?;
    }
    if basis_path.is_none() {
        write_text(&out.join("basis.json"), &basis.to_json()?)?;
    }
    write_text(&out.join("fit.json"), &serde_json::to_string_pretty(&coef)?)?;
    print_fit(&coef, design.n());
    Ok(())
}

fn print_fit(coef: &CoefficientVector, n: usize) {
    println!(
        "{}: support {} of {}, residual norm {:.6e} (n = {n})",
        coef.method,
        coef.support_size(),
        coef.beta.len(),
        coef.residual_norm_sq.sqrt()
    );
}

fn cmd_indices(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let run = cfg.run(cfg.seed)?;
    print_fit(&run.fit, run.design.n());
    let mut report = run.report;
    if cfg.replicates > 1 {
        let summary = cfg.replicate(&cfg.replicate_seeds())?;
        for failure in &summary.failures {
            warn!("replicate {} (seed {}) failed: {}", failure.replicate, failure.seed, failure.error);
        }
        println!("replicates: {} of {} succeeded", summary.succeeded, summary.requested);
        write_atomic(&out.join("boxplot.csv"), |f| Ok(summary.write_boxplot_csv(f)?))?;
        report.replicates = Some(summary);
    }
    report.validate()?;
    write_text(&out.join("report.json"), &report.to_json()?)?;
    write_atomic(&out.join("report.csv"), |f| Ok(report.write_csv(f)?))?;
    for e in &report.entries {
        println!("{:>10}  S = {:+.4}  (var {:+.4}, cov {:+.4})", e.subset.to_string(), e.s, e.var_part, e.cov_part);
    }
    Ok(())
}

fn cmd_bench(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let bench = cfg.bench(&cfg.replicate_seeds())?;
    for note in &bench.notes {
        println!("note: {note}");
    }
    for m in &bench.methods {
        let support = m.summary.median_support_size().map_or("n/a".to_string(), |s| format!("{s}"));
        println!(
            "{}: {} of {} replicates, median support {support}",
            m.method, m.summary.succeeded, m.summary.requested
        );
    }
    if !bench.samples_identical {
        anyhow::bail!("methods saw different samples");
    }
    write_text(&out.join("bench.json"), &serde_json::to_string_pretty(&bench)?)?;
    Ok(())
}
