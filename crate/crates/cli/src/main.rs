use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wsimmd::cluster::Linkage;
use wsimmd::ksvm::{ClassWeight, SvmParams, DEFAULT_C};
use wsimmd::mmd::{DEFAULT_BLOCK_SIZE, DEFAULT_GAMMA, DEFAULT_SIGMA};
use wsimmd::workflow::{
    cmd_classify, cmd_cluster, cmd_kernel, cmd_survival, cmd_synth, ClassifyConfig, GammaMode, KernelSettings,
    MatrixSource, SurvivalConfig, DEFAULT_OOB_RUNS,
};
use wsimmd::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "wsimmd", version, about = "MMD kernels between bags of patch features")]
struct Cli {
    /// Worker threads for parallel sections (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset from a JSON generator file.
    Synth {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed stored in the generator file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the MMD distance and kernel matrices of a manifest.
    Kernel {
        #[arg(long)]
        manifest: PathBuf,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Hierarchical clustering of the distance matrix.
    Cluster {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        kernel: KernelArgs,
        #[arg(long, default_value = "average")]
        linkage: Linkage,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a precomputed-kernel SVM and report test AUC with a bootstrap CI.
    Classify {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        kernel: KernelArgs,
        /// CSV with `id,label` (defaults to the manifest's labels).
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Training ids, one per line.
        #[arg(long)]
        train: PathBuf,
        /// Test ids, one per line.
        #[arg(long)]
        test: PathBuf,
        #[arg(long = "svm-c", default_value_t = DEFAULT_C)]
        svm_c: f64,
        #[arg(long)]
        balanced: bool,
        #[arg(long = "bootstrap-runs", default_value_t = wsimmd::eval::DEFAULT_BOOTSTRAP_RUNS)]
        bootstrap_runs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Out-of-bag kernel survival SVM evaluation.
    Survival {
        #[command(flatten)]
        input: MatrixInput,
        #[command(flatten)]
        kernel: KernelArgs,
        /// CSV with `id,time,event` (defaults to the manifest's outcomes).
        #[arg(long)]
        outcomes: Option<PathBuf>,
        #[arg(long, default_value_t = wsimmd::ksurv::DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long = "oob-runs", default_value_t = DEFAULT_OOB_RUNS)]
        oob_runs: usize,
        #[arg(long = "censor-horizon", default_value_t = wsimmd::ksurv::DEFAULT_CENSOR_HORIZON)]
        censor_horizon: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct MatrixInput {
    /// Compute the matrix from this manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Precomputed matrix file (kernel for classify/survival, distance for cluster).
    #[arg(long, visible_aliases = ["kernel", "distance"])]
    matrix: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Fixed gamma (used with --gamma-mode fixed).
    #[arg(long)]
    gamma: Option<f64>,
    /// `fixed` or `median`; defaults to median for survival, fixed otherwise.
    #[arg(long = "gamma-mode")]
    gamma_mode: Option<GammaMode>,
    #[arg(long = "block-size", default_value_t = DEFAULT_BLOCK_SIZE)]
    block_size: usize,
}

impl KernelArgs {
    fn settings(&self, default_mode: GammaMode) -> KernelSettings {
        let gamma_mode = match (self.gamma_mode, self.gamma) {
            (Some(m), _) => m,
            (None, Some(_)) => GammaMode::Fixed,
            (None, None) => default_mode,
        };
        KernelSettings {
            sigma: self.sigma,
            gamma_mode,
            gamma: self.gamma.unwrap_or(DEFAULT_GAMMA),
            block_size: self.block_size,
        }
    }
}

impl MatrixInput {
    fn source(&self, kernel: &KernelArgs, default_mode: GammaMode) -> MatrixSource {
        match (&self.manifest, &self.matrix) {
            (Some(m), _) => MatrixSource::Manifest(m.clone(), kernel.settings(default_mode)),
            (None, Some(p)) => MatrixSource::File(p.clone()),
            (None, None) => unreachable!("clap enforces one input"),
        }
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64, Error> {
    seed.ok_or_else(|| Error::validation("--seed is required for this subcommand"))
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Synth { spec, seed, out } => {
            cmd_synth(&spec, seed, &out)?;
        }
        Command::Kernel { manifest, kernel, out } => {
            cmd_kernel(&manifest, &kernel.settings(GammaMode::Fixed), &out)?;
        }
        Command::Cluster {
            input,
            kernel,
            linkage,
            k,
            out,
        } => {
            cmd_cluster(&input.source(&kernel, GammaMode::Fixed), linkage, k, &out)?;
        }
        Command::Classify {
            input,
            kernel,
            labels,
            train,
            test,
            svm_c,
            balanced,
            bootstrap_runs,
            seed,
            out,
        } => {
            let mut cfg = ClassifyConfig::new(
                input.source(&kernel, GammaMode::Fixed),
                train,
                test,
                require_seed(seed)?,
                out,
            );
            cfg.labels = labels;
            cfg.svm = SvmParams {
                c: svm_c,
                class_weight: if balanced { ClassWeight::Balanced } else { ClassWeight::None },
                ..SvmParams::default()
            };
            cfg.bootstrap_runs = bootstrap_runs;
            let o = cmd_classify(&cfg)?;
            println!("{}", o.report.to_json().trim_end());
        }
        Command::Survival {
            input,
            kernel,
            outcomes,
            alpha,
            oob_runs,
            censor_horizon,
            seed,
            out,
        } => {
            let mut cfg = SurvivalConfig::new(input.source(&kernel, GammaMode::Median), require_seed(seed)?, out);
            cfg.outcomes = outcomes;
            cfg.alpha = alpha;
            cfg.runs = oob_runs;
            cfg.censor_horizon = censor_horizon;
            let o = cmd_survival(&cfg)?;
            println!("{}", o.report.to_json().trim_end());
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Validation => 1,
        ErrorCategory::Numerical => 2,
        ErrorCategory::Io => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            let body = serde_json::json!({
                "error": "usage",
                "category": "validation",
                "message": e.kind().to_string(),
            });
            eprintln!("{body}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| run(cli.command)),
            Err(e) => Err(Error::validation(format!("cannot build a pool of {n} threads: {e}"))),
        },
        None => run(cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let body = serde_json::json!({
                "error": e.kind(),
                "category": format!("{:?}", e.category()).to_lowercase(),
                "message": e.to_string(),
            });
            eprintln!("{body}");
            ExitCode::from(exit_code(&e))
        }
    }
}
