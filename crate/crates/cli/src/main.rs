use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use gbtrsc::dataio::{generate, load_csv, write_csv, write_metrics, write_result, DataMatrix, GeneratorSpec, MetricRecord};
use gbtrsc::metrics::{ari, nmi};
use gbtrsc::spectral::{cluster_with, ClusterConfig};
use gbtrsc::{Error, EPSILON};

mod bench;
mod plot;

use bench::{BenchInput, Method};

/// Deterministic MDL granular-ball-tree regularized spectral clustering.
#[derive(Parser)]
#[command(name = "gbtrsc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster one dataset and write labels (plus metrics when ground truth is known).
    Cluster(ClusterArgs),
    /// Compare methods over several datasets.
    Bench(BenchArgs),
    /// Write a synthetic dataset to CSV.
    Generate(GenerateArgs),
    /// Draw a 2-D scatter of a dataset coloured by a label file.
    Plot(PlotArgs),
}

#[derive(Args)]
struct InputArgs {
    /// CSV file with one sample per row.
    #[arg(long, conflicts_with = "gen")]
    input: Option<PathBuf>,
    /// Zero-based column holding ground-truth labels.
    #[arg(long)]
    label_col: Option<usize>,
    /// The CSV starts with a header row.
    #[arg(long)]
    header: bool,
    /// Synthetic data as `kind:n:k:noise:seed` (kinds: spirals, nested_circles, moons, blobs).
    #[arg(long)]
    gen: Option<GeneratorSpec>,
}

#[derive(Args)]
struct TuningArgs {
    /// Upper end of the eigengap scan when --k is omitted.
    #[arg(long, default_value_t = 20)]
    k_max: usize,
    /// Numerical floor used throughout the pipeline.
    #[arg(long, default_value_t = EPSILON)]
    epsilon: f64,
}

impl TuningArgs {
    fn config(&self) -> anyhow::Result<ClusterConfig> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            bail!("--epsilon must be positive, got {}", self.epsilon);
        }
        if self.k_max < 2 {
            bail!("--k-max must be at least 2, got {}", self.k_max);
        }
        Ok(ClusterConfig {
            k_max: self.k_max,
            epsilon: self.epsilon,
            ..ClusterConfig::default()
        })
    }
}

#[derive(Args)]
struct ClusterArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Number of clusters; estimated from the eigengap when omitted.
    #[arg(long)]
    k: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write plot.svg.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct BenchArgs {
    /// CSV datasets (repeatable); every dataset needs a label column.
    #[arg(long)]
    input: Vec<PathBuf>,
    #[arg(long)]
    label_col: Option<usize>,
    #[arg(long)]
    header: bool,
    /// Generated datasets (repeatable). With no --input or --gen, a default
    /// synthetic suite is used.
    #[arg(long)]
    gen: Vec<GeneratorSpec>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', default_value = "mdl_gbtrsc,sc_knn")]
    methods: Vec<Method>,
    /// Output CSV file.
    #[arg(long, default_value = "bench.csv")]
    out: PathBuf,
    #[command(flatten)]
    tuning: TuningArgs,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    gen: GeneratorSpec,
    /// Output CSV file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    label_col: Option<usize>,
    #[arg(long)]
    header: bool,
    /// One integer label per line.
    #[arg(long)]
    labels: PathBuf,
    /// Output SVG file.
    #[arg(long)]
    out: PathBuf,
}

/// Default bench suite: the four synthetic shapes.
pub const DEFAULT_SUITE: [&str; 4] = [
    "spirals:312:3:0.02:0",
    "nested_circles:770:3:0.02:0",
    "moons:373:2:0.05:0",
    "blobs:300:3:0.3:0",
];

/// Missing inputs exit with 2, everything else with 1.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        let error = e.into();
        let missing = error.chain().any(|cause| {
            matches!(cause.downcast_ref::<Error>(), Some(Error::Io { source, .. }) if source.kind() == ErrorKind::NotFound)
        });
        Failure {
            code: if missing { 2 } else { 1 },
            error,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    let result = match cli.command {
        Command::Cluster(args) => cmd_cluster(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Generate(args) => cmd_generate(args),
        Command::Plot(args) => cmd_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var("GBTRSC_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .with_context(|| format!("GBTRSC_THREADS must be a positive integer, got `{value}`"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .context("configuring the worker pool")
}

fn load_input(args: &InputArgs) -> anyhow::Result<(String, DataMatrix)> {
    match (&args.input, &args.gen) {
        (Some(path), None) => {
            let x = load_csv(path, args.header, args.label_col)?;
            Ok((path.display().to_string(), x))
        }
        (None, Some(spec)) => Ok((spec.to_string(), generate(spec)?)),
        _ => bail!("give exactly one of --input or --gen"),
    }
}

fn cmd_cluster(args: ClusterArgs) -> Result<(), Failure> {
    let cfg = args.tuning.config()?;
    let (name, x) = load_input(&args.input)?;
    if let Some(k) = args.k {
        if k < 2 || k > x.n() {
            return Err(anyhow::anyhow!("--k must lie in [2, {}], got {k}", x.n()).into());
        }
    }
    let run = cluster_with(&x, args.k, &cfg).with_context(|| format!("clustering {name}"))?;
    let labels = &run.partition.labels;

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    write_result(labels, None, args.out.join("labels.csv"))?;

    let mut summary = format!(
        "{name}: k_used={} leaves={}",
        run.partition.k_used,
        run.tree.num_leaves()
    );
    if let Some(truth) = &x.labels {
        let record = MetricRecord {
            ari: ari(truth, labels)?,
            nmi: nmi(truth, labels)?,
            k_used: run.partition.k_used,
            num_leaves: run.tree.num_leaves(),
            runtime_seconds: run.runtime_seconds,
        };
        write_metrics(&record, args.out.join("metrics.json"))?;
        summary.push_str(&format!(" ari={:.4} nmi={:.4}", record.ari, record.nmi));
    }
    if args.plot {
        plot::write_svg(&x, labels, &args.out.join("plot.svg"))?;
    }
    summary.push_str(&format!(" time={:.3}s", run.runtime_seconds));
    println!("{summary}");
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let cfg = args.tuning.config()?;
    if args.methods.is_empty() {
        return Err(anyhow::anyhow!("--methods is empty").into());
    }
    let mut inputs: Vec<BenchInput> = args
        .input
        .iter()
        .map(|path| BenchInput {
            name: path.display().to_string(),
            data: load_csv(path, args.header, args.label_col).map_err(|e| e.to_string()),
        })
        .collect();
    let mut specs = args.gen.clone();
    if inputs.is_empty() && specs.is_empty() {
        specs = DEFAULT_SUITE.iter().map(|s| s.parse().expect("valid suite spec")).collect();
    }
    inputs.extend(specs.iter().map(|spec| BenchInput {
        name: spec.to_string(),
        data: generate(spec).map_err(|e| e.to_string()),
    }));

    let rows = bench::run(&inputs, &args.methods, &cfg);
    write_file(&args.out, &bench::to_csv(&rows, &args.methods))?;
    println!("{} datasets, {} methods -> {}", rows.len(), args.methods.len(), args.out.display());
    if !bench::any_succeeded(&rows) {
        return Err(anyhow::anyhow!("every dataset failed").into());
    }
    Ok(())
}

fn cmd_generate(args: GenerateArgs) -> Result<(), Failure> {
    let x = generate(&args.gen)?;
    write_csv(&x, &args.out)?;
    println!("{} -> {}", args.gen, args.out.display());
    Ok(())
}

fn cmd_plot(args: PlotArgs) -> Result<(), Failure> {
    let x = load_csv(&args.input, args.header, args.label_col)?;
    let text = fs::read_to_string(&args.labels).map_err(|e| Error::Io {
        path: args.labels.clone(),
        source: e,
    })?;
    let labels = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            l.trim()
                .parse::<usize>()
                .with_context(|| format!("{} line {}: `{l}` is not a label", args.labels.display(), i + 1))
        })
        .collect::<anyhow::Result<Vec<usize>>>()?;
    plot::write_svg(&x, &labels, &args.out)?;
    println!("{}", args.out.display());
    Ok(())
}

fn write_file(path: &Path, body: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}
