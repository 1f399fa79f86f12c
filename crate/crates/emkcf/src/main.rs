use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use emkcf::ingest::{
    load_features, read_labels, save_features_binary, save_features_csv, write_labels, FeatureFormat,
};
use emkcf::kcs::save_sparse_kernel;
use emkcf::memory::CountingAllocator;
use emkcf::pipeline::{kernel_from_file, kernels_from_features};
use emkcf::recipe::{load_recipe, save_recipe};
use emkcf::{run_pipeline_with_threads, RunConfig};
use emkcf_core::kernels::default_twelve_kernels;
use emkcf_core::labeling::LabelMode;
use emkcf_core::metrics::{accuracy, nmi};

#[global_allocator]
static ALLOC: CountingAllocator = CountingAllocator;

#[derive(Parser)]
#[command(name = "emkcf", version, about = "Multiple kernel concept factorization clustering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a dataset and write report.json, labels.csv and convergence.csv.
    Run(RunArgs),
    /// Generate gaussian blobs with ground-truth labels.
    Synth(SynthArgs),
    /// Build sparse neighbor kernels and save them as .kcs files.
    Kernels(KernelArgs),
    /// Accuracy and NMI of a label file against ground truth.
    Score(ScoreArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<FeatureFormat>,
    /// Precomputed kernel file (dense or sparse); repeat for each kernel.
    #[arg(long = "kernel")]
    kernels: Vec<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    recipe: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<LabelMode>,
    /// Worker threads (output is identical for any count).
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    c: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long, default_value_t = 10.0)]
    sep: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes features.csv (or features.f64) and truth.csv here.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_parser = parse_format, default_value = "csv")]
    format: FeatureFormat,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, conflicts_with = "kernels")]
    features: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    format: Option<FeatureFormat>,
    /// Dense precomputed kernel; repeat for each kernel.
    #[arg(long = "kernel")]
    kernels: Vec<PathBuf>,
    #[arg(long)]
    recipe: Option<PathBuf>,
    #[arg(long, default_value_t = 15)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

fn parse_format(s: &str) -> Result<FeatureFormat, String> {
    s.parse()
}

fn parse_mode(s: &str) -> Result<LabelMode, String> {
    match s {
        "kmeans" => Ok(LabelMode::Kmeans),
        "argmax" => Ok(LabelMode::Argmax),
        other => Err(format!("unknown labeling mode {other:?} (kmeans or argmax)")),
    }
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::new(args.c.ok_or_else(|| anyhow::anyhow!("--c is required without --config"))?),
    };
    if args.features.is_some() {
        cfg.features = args.features;
    }
    if !args.kernels.is_empty() {
        cfg.kernels = args.kernels;
    }
    if args.format.is_some() {
        cfg.feature_format = args.format;
    }
    if args.truth.is_some() {
        cfg.truth = args.truth;
    }
    if args.recipe.is_some() {
        cfg.recipe = args.recipe;
    }
    if let Some(out) = args.out {
        cfg.output = out;
    }
    cfg.c = args.c.unwrap_or(cfg.c);
    cfg.k = args.k.unwrap_or(cfg.k);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.max_iter = args.max_iter.unwrap_or(cfg.max_iter);
    cfg.rel_tol = args.rel_tol.unwrap_or(cfg.rel_tol);
    cfg.mode = args.mode.unwrap_or(cfg.mode);

    let report = run_pipeline_with_threads(&cfg, args.threads)?;
    let mut summary = format!(
        "n={} m={} iterations={} objective={:?}",
        report.n,
        report.m,
        report.iterations,
        report.objective_trace.last().copied().unwrap_or(f64::NAN)
    );
    if let Some(s) = &report.scores {
        summary.push_str(&format!(" acc={:.4} nmi={:.4}", s.accuracy, s.nmi));
    }
    println!("{summary}");
    println!("wrote {}", cfg.output.display());
    Ok(())
}

fn synth(args: SynthArgs) -> anyhow::Result<()> {
    let (features, labels) = emkcf::synth::make_synthetic(args.n, args.c, args.d, args.sep, args.seed)?;
    std::fs::create_dir_all(&args.out)?;
    let path = match args.format {
        FeatureFormat::Csv => {
            let p = args.out.join("features.csv");
            save_features_csv(&p, &features)?;
            p
        }
        FeatureFormat::Binary => {
            let p = args.out.join("features.f64");
            save_features_binary(&p, &features)?;
            p
        }
    };
    write_labels(&args.out.join("truth.csv"), labels.as_slice())?;
    println!("wrote {} and {}", path.display(), args.out.join("truth.csv").display());
    Ok(())
}

fn kernels(args: KernelArgs) -> anyhow::Result<()> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.threads).build()?;
    std::fs::create_dir_all(&args.out)?;
    let built = pool.install(|| -> anyhow::Result<_> {
        match &args.features {
            Some(path) => {
                let features = load_features(path, args.format.unwrap_or_else(|| FeatureFormat::infer(path)))?;
                let specs = match &args.recipe {
                    Some(p) => load_recipe(p)?,
                    None => default_twelve_kernels(),
                };
                Ok(kernels_from_features(&features, specs, args.k, 1000, args.seed)?)
            }
            None if !args.kernels.is_empty() => Ok(emkcf::pipeline::BuiltKernels {
                kernels: args.kernels.iter().map(|p| kernel_from_file(p, args.k)).collect::<Result<_, _>>()?,
                recipe: None,
                base_distance: None,
            }),
            None => anyhow::bail!("give --features or at least one --kernel"),
        }
    })?;
    for (r, k) in built.kernels.iter().enumerate() {
        save_sparse_kernel(&args.out.join(format!("kernel_{:02}.kcs", r + 1)), k)?;
    }
    if let Some(recipe) = &built.recipe {
        save_recipe(&args.out.join("kernels.json"), recipe)?;
    }
    println!("wrote {} sparse kernels to {}", built.kernels.len(), args.out.display());
    Ok(())
}

fn score(args: ScoreArgs) -> anyhow::Result<()> {
    let pred = read_labels(&args.pred)?;
    let truth = read_labels(&args.truth)?;
    let out = serde_json::json!({ "accuracy": accuracy(&pred, &truth)?, "nmi": nmi(&pred, &truth)? });
    println!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Synth(a) => synth(a),
        Command::Kernels(a) => kernels(a),
        Command::Score(a) => score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // Error messages already embed their causes.
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
