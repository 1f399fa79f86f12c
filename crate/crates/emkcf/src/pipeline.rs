//! End-to-end run: inputs, sparse kernels, solver, labels, scores, files.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use emkcf_core::graph::{build_sparse_kernel, build_sparse_kernels};
use emkcf_core::kernels::{default_twelve_kernels, KernelBank};
use emkcf_core::labeling::labels_from_u;
use emkcf_core::metrics::{accuracy, nmi};
use emkcf_core::rows::RowAffinity;
use emkcf_core::{solver, FeatureMatrix, KernelSpec, SparseKernel};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::ingest::{load_features, open_precomputed_kernel, read_labels, write_labels, FeatureFormat, KERNEL_MAGIC};
use crate::kcs::{load_sparse_kernel, SPARSE_MAGIC};
use crate::memory;
use crate::recipe::load_recipe;
use crate::report::{RunReport, Scores, Timings, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Ingest,
    KernelBuild,
    Solve,
    Label,
    Score,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::KernelBuild => "kernel build",
            Stage::Solve => "solve",
            Stage::Label => "label",
            Stage::Score => "score",
            Stage::Output => "output",
        })
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage: {source}")]
pub struct PipelineError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> std::result::Result<T, PipelineError> {
        self.map_err(|e| PipelineError { stage, source: e.into() })
    }
}

/// Base kernels on disk, or generated from features.
pub enum KernelInput {
    Features { features: FeatureMatrix, specs: Vec<KernelSpec> },
    Files(Vec<std::path::PathBuf>),
}

/// Sparse kernels plus what the report needs to know about them.
pub struct BuiltKernels {
    pub kernels: Vec<SparseKernel>,
    pub recipe: Option<Vec<KernelSpec>>,
    pub base_distance: Option<f64>,
}

/// Sparse kernels for every recipe entry, streaming kernel rows from the
/// features.
pub fn kernels_from_features(
    features: &FeatureMatrix,
    specs: Vec<KernelSpec>,
    k: usize,
    sample_cap: usize,
    seed: u64,
) -> Result<BuiltKernels> {
    let bank = KernelBank::with_estimated_distance(features, specs, sample_cap, seed)?;
    let kernels = build_sparse_kernels(&bank, k)?;
    Ok(BuiltKernels { kernels, recipe: Some(bank.specs().to_vec()), base_distance: Some(bank.base_distance()) })
}

fn magic(path: &Path) -> Result<[u8; 4]> {
    let mut m = [0u8; 4];
    File::open(path)
        .and_then(|mut f| f.read_exact(&mut m))
        .map_err(|e| Error::io(path, e))?;
    Ok(m)
}

/// Sparse kernel from a file: dense kernels are streamed row by row into
/// neighbor affinities, sparse kernels are loaded as they are.
pub fn kernel_from_file(path: &Path, k: usize) -> Result<SparseKernel> {
    match &magic(path)? {
        m if m == KERNEL_MAGIC => {
            let src = open_precomputed_kernel(path)?;
            build_sparse_kernel(&RowAffinity::new(&src), k).map_err(|e| Error::format(path, e.to_string()))
        }
        m if m == SPARSE_MAGIC => load_sparse_kernel(path),
        _ => Err(Error::format(path, "neither a dense (EMKK) nor a sparse (EMKS) kernel file")),
    }
}

fn load_input(config: &RunConfig) -> Result<KernelInput> {
    match &config.features {
        Some(path) => {
            let format = config.feature_format.unwrap_or_else(|| FeatureFormat::infer(path));
            let features = load_features(path, format)?;
            let specs = match &config.recipe {
                Some(p) => load_recipe(p)?,
                None => default_twelve_kernels(),
            };
            Ok(KernelInput::Features { features, specs })
        }
        None => Ok(KernelInput::Files(config.kernels.clone())),
    }
}

fn build(config: &RunConfig, input: KernelInput) -> Result<BuiltKernels> {
    match input {
        KernelInput::Features { features, specs } => {
            kernels_from_features(&features, specs, config.k, config.base_distance_sample, config.seed)
        }
        KernelInput::Files(paths) => {
            let kernels = paths.iter().map(|p| kernel_from_file(p, config.k)).collect::<Result<Vec<_>>>()?;
            if kernels.iter().any(|k| k.n() != kernels[0].n()) {
                return Err(Error::Config("kernel files differ in size".into()));
            }
            Ok(BuiltKernels { kernels, recipe: None, base_distance: None })
        }
    }
}

/// `iter,objective,mu_1,...,mu_m` with shortest round-trip floats.
pub fn write_convergence(path: &Path, objective: &[f64], mu: &[Vec<f64>]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let m = mu.first().map_or(0, Vec::len);
    let mut header = String::from("iter,objective");
    for r in 1..=m {
        header.push_str(&format!(",mu_{r}"));
    }
    writeln!(w, "{header}").map_err(io)?;
    for (t, (f, weights)) in objective.iter().zip(mu).enumerate() {
        let mut line = format!("{},{f:?}", t + 1);
        for w in weights {
            line.push_str(&format!(",{w:?}"));
        }
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

fn write_report(path: &Path, report: &RunReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|source| Error::Json { path: path.to_path_buf(), source })?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Runs every stage and writes `report.json`, `labels.csv` and
/// `convergence.csv` into the configured output directory.
pub fn run_pipeline(config: &RunConfig) -> std::result::Result<RunReport, PipelineError> {
    let t0 = Instant::now();
    let baseline = memory::start_tracking();
    config.validate().at(Stage::Config)?;

    let input = load_input(config).at(Stage::Ingest)?;
    let truth = config.truth.as_deref().map(read_labels).transpose().at(Stage::Ingest)?;
    let t_ingest = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let built = build(config, input).at(Stage::KernelBuild)?;
    let n = built.kernels[0].n();
    if let Some(t) = &truth {
        if t.len() != n {
            return Err(Error::Config(format!("truth has {} labels for {n} samples", t.len()))).at(Stage::Ingest);
        }
    }
    let t_build = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let state = solver::run(&built.kernels, config.c, &config.solver_options()).at(Stage::Solve)?;
    let t_solve = t2.elapsed().as_secs_f64();

    let t3 = Instant::now();
    let labels = labels_from_u(state.u.as_mat(), config.mode, config.seed).at(Stage::Label)?.into_vec();
    let t_label = t3.elapsed().as_secs_f64();

    let scores = match &truth {
        Some(t) => Some(Scores {
            accuracy: accuracy(&labels, t).at(Stage::Score)?,
            nmi: nmi(&labels, t).at(Stage::Score)?,
        }),
        None => None,
    };

    let out = &config.output;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)).at(Stage::Output)?;
    write_labels(&out.join("labels.csv"), &labels).at(Stage::Output)?;
    write_convergence(&out.join("convergence.csv"), &state.objective_trace, &state.mu_trace).at(Stage::Output)?;

    let peak = memory::stats().map(|s| s.peak.saturating_sub(baseline) as u64);
    let report = RunReport {
        schema: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        n,
        m: built.kernels.len(),
        recipe: built.recipe,
        base_distance: built.base_distance,
        labels,
        scores,
        mu: state.mu.as_slice().to_vec(),
        objective_trace: state.objective_trace,
        iterations: state.iter,
        converged: state.converged,
        timings: Timings {
            ingest: t_ingest,
            kernel_build: t_build,
            solve: t_solve,
            label: t_label,
            total: t0.elapsed().as_secs_f64(),
        },
        peak_allocation_bytes: peak,
    };
    write_report(&out.join("report.json"), &report).at(Stage::Output)?;
    Ok(report)
}

/// [`run_pipeline`] on a dedicated pool of `threads` workers. Output does
/// not depend on the thread count.
pub fn run_pipeline_with_threads(
    config: &RunConfig,
    threads: usize,
) -> std::result::Result<RunReport, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {threads} worker threads: {e}")))
        .at(Stage::Config)?;
    pool.install(|| run_pipeline(config))
}
