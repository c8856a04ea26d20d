//! `qcausal`: kernel-based causal discovery from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use qcausal_core::datagen::{
    default_generator_spec, gen_junction, gen_quantum_junction, JunctionKind, DEFAULT_NOISE_RATIO,
};
use qcausal_core::eval::{
    roc_csv, run_trials, GeneratorConfig, Method, RocPoint, TrialOutcome, DEFAULT_ALPHAS,
};
use qcausal_core::kcit::DEFAULT_EPSILON;
use qcausal_core::kta::OptimizerConfig;
use qcausal_core::pc::{run_pc, GraphJson, KernelChoice, PcConfig};
use qcausal_core::qsim::{CircuitSpec, DEFAULT_MAX_QUBITS};
use qcausal_core::{Dataset, Error};

#[derive(Parser)]
#[command(name = "qcausal", version, about = "Causal discovery with classical and quantum kernel independence tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a CPDAG from a CSV file.
    Discover(DiscoverArgs),
    /// Generate a synthetic three-variable junction dataset.
    GenData(GenDataArgs),
    /// Score discovery methods on synthetic junction data.
    Benchmark(BenchmarkArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum KernelArg {
    Gaussian,
    Quantum,
}

#[derive(Args)]
struct DiscoverArgs {
    /// CSV with a header row of variable names.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value_t = KernelArg::Gaussian)]
    kernel: KernelArg,
    /// Circuit template for the quantum kernel, as JSON.
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Significance level. 0.05 suits synthetic data; 0.01 is customary for
    /// real data.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Tune kernel hyperparameters by KTA minimization before testing.
    #[arg(long)]
    optimize: bool,
    /// Optimizer settings as JSON (defaults depend on the kernel).
    #[arg(long, requires = "optimize")]
    optimizer: Option<PathBuf>,
    /// Ridge regularization of the conditional test.
    #[arg(long, default_value_t = DEFAULT_EPSILON)]
    epsilon: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest conditioning set size (unbounded if absent).
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_MAX_QUBITS)]
    max_qubits: usize,
    /// Output prefix; writes `<prefix>.dot`, `<prefix>.json` and
    /// `<prefix>.tests.csv`. Defaults to the input path without extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    /// collider, fork, chain or independent.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Noise standard deviation relative to the signal's.
    #[arg(long, default_value_t = DEFAULT_NOISE_RATIO)]
    noise: f64,
    /// Draw source variables from circuit measurements.
    #[arg(long)]
    quantum: bool,
    /// Generator circuit as JSON (implies --quantum).
    #[arg(long)]
    circuit: Option<PathBuf>,
    /// Output CSV; the ground truth goes to `<stem>.truth.json` beside it.
    #[arg(long, default_value = "data.csv")]
    output: PathBuf,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_value = "collider,fork,chain,independent")]
    kinds: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "25,50,100,200")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_value = "pc-gaussian,qpc-default,qpc-optimized")]
    methods: Vec<String>,
    /// Significance level for the accuracy grid.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Also sweep these significance levels and write a ROC table.
    #[arg(long)]
    roc: bool,
    /// Levels for the ROC sweep (defaults to the standard 12-level set).
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_NOISE_RATIO)]
    noise: f64,
    /// Draw source variables from circuit measurements.
    #[arg(long)]
    quantum: bool,
    /// Trial `t` uses seed `seed + t`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long, default_value = "benchmark")]
    out_dir: PathBuf,
}

/// A failure with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.root() {
            Error::DegenerateData(_) => 3,
            Error::Numeric(_) | Error::UnsupportedKernel(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|source| {
        Failure::from(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

#[derive(Serialize)]
struct DiscoverReport<'a> {
    input: &'a Path,
    kernel: KernelArg,
    config: &'a PcConfig,
    graph: GraphJson,
    sepsets: Vec<SepsetEntry>,
    optimization: &'a Option<qcausal_core::pc::OptimizationSummary>,
    notes: &'a [String],
}

#[derive(Serialize)]
struct SepsetEntry {
    pair: [String; 2],
    set: Vec<String>,
}

fn discover(args: DiscoverArgs) -> Result<(), Failure> {
    if !(args.alpha > 0.0 && args.alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {}", args.alpha)));
    }
    let data = Dataset::read_csv(&args.input)?;
    info!("read {} samples of {} variables", data.n_samples(), data.n_vars());
    let kernel = match args.kernel {
        KernelArg::Gaussian => KernelChoice::Gaussian,
        KernelArg::Quantum => KernelChoice::Quantum(match &args.circuit {
            Some(p) => read_json(p)?,
            None => CircuitSpec::default(),
        }),
    };
    let optimizer = match (&args.optimizer, args.optimize) {
        (Some(p), _) => Some(read_json::<OptimizerConfig>(p)?),
        (None, true) => Some(match args.kernel {
            KernelArg::Gaussian => OptimizerConfig::gaussian_default(),
            KernelArg::Quantum => OptimizerConfig::quantum_default(),
        }),
        (None, false) => None,
    }
    .map(|o| OptimizerConfig { seed: args.seed, ..o });
    let config = PcConfig {
        kernel,
        alpha: args.alpha,
        epsilon: args.epsilon,
        optimizer,
        max_depth: args.max_depth,
        max_qubits: args.max_qubits,
        seed: args.seed,
        ..PcConfig::default()
    };
    let out = run_pc(&data, &config)?;
    let prefix = args.out.unwrap_or_else(|| args.input.with_extension(""));
    let names = out.graph.nodes();
    let report = DiscoverReport {
        input: &args.input,
        kernel: args.kernel,
        config: &config,
        graph: out.graph.to_json(),
        sepsets: out
            .sepsets
            .iter()
            .map(|((a, b), set)| SepsetEntry {
                pair: [names[a].clone(), names[b].clone()],
                set: set.iter().map(|&v| names[v].clone()).collect(),
            })
            .collect(),
        optimization: &out.report.optimization,
        notes: &out.report.notes,
    };
    let json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    write(&with_suffix(&prefix, ".dot"), &out.graph.to_dot())?;
    write(&with_suffix(&prefix, ".json"), &json)?;
    write(&with_suffix(&prefix, ".tests.csv"), &out.report.tests_csv()?)?;
    println!("{}", out.graph.to_dot().trim_end());
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<(), Failure> {
    let kind: JunctionKind = args.kind.parse()?;
    let (data, truth) = match (&args.circuit, args.quantum) {
        (Some(p), _) => gen_quantum_junction(kind, args.n, args.noise, &read_json(p)?, args.seed)?,
        (None, true) => {
            gen_quantum_junction(kind, args.n, args.noise, &default_generator_spec(), args.seed)?
        }
        (None, false) => gen_junction(kind, args.n, args.noise, args.seed)?,
    };
    data.write_csv(&args.output)?;
    let truth_path = args.output.with_extension("truth.json");
    let json = serde_json::to_string_pretty(&truth).map_err(Error::from)?;
    write(&truth_path, &json)?;
    info!("wrote {} and {}", args.output.display(), truth_path.display());
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkConfig<'a> {
    kinds: Vec<&'a str>,
    sizes: &'a [usize],
    trials: usize,
    methods: Vec<&'a str>,
    alpha: f64,
    roc_alphas: Option<&'a [f64]>,
    noise: f64,
    quantum_generator: Option<CircuitSpec>,
    seed: u64,
}

/// One (kind, size, method, alpha) cell of the benchmark grid.
struct Cell {
    kind: JunctionKind,
    n: usize,
    method: Method,
    alpha: f64,
    outcomes: Vec<Result<TrialOutcome, String>>,
}

impl Cell {
    fn successes(&self) -> Vec<TrialOutcome> {
        self.outcomes.iter().filter_map(|r| r.as_ref().ok().copied()).collect()
    }
}

fn run_cell(
    args: &BenchmarkArgs,
    kind: JunctionKind,
    n: usize,
    method: Method,
    alpha: f64,
) -> Cell {
    let gen = GeneratorConfig {
        noise_ratio: args.noise,
        quantum: args.quantum.then(default_generator_spec),
        base_seed: args.seed,
        ..GeneratorConfig::new(kind, n)
    };
    let outcomes = run_trials(&gen, &method.config(alpha, args.seed), args.trials)
        .into_iter()
        .map(|r| {
            r.map_err(|e| {
                let msg = e.to_string();
                warn!("{kind} n={n} {}: {msg}", method.as_str());
                msg
            })
        })
        .collect();
    Cell {
        kind,
        n,
        method,
        alpha,
        outcomes,
    }
}

fn trials_csv(cells: &[Cell], seed: u64) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::from(Error::from(e));
    w.write_record([
        "kind", "n", "method", "alpha", "trial", "seed", "status", "tp", "fp", "tn", "fn",
        "markov_equivalent", "error",
    ])
    .map_err(io)?;
    for c in cells {
        for (t, r) in c.outcomes.iter().enumerate() {
            let mut row = vec![
                c.kind.to_string(),
                c.n.to_string(),
                c.method.as_str().to_string(),
                format!("{:?}", c.alpha),
                t.to_string(),
                seed.wrapping_add(t as u64).to_string(),
            ];
            match r {
                Ok(o) => row.extend([
                    "ok".to_string(),
                    o.confusion.tp.to_string(),
                    o.confusion.fp.to_string(),
                    o.confusion.tn.to_string(),
                    o.confusion.fn_.to_string(),
                    o.markov_equivalent.to_string(),
                    String::new(),
                ]),
                Err(e) => {
                    row.push("failed".to_string());
                    row.extend(std::iter::repeat_n(String::new(), 5));
                    row.push(e.clone());
                }
            }
            w.write_record(&row).map_err(io)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::from(Error::Numeric(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Accuracy grid: one row per (kind, n), one column per method holding the
/// fraction of successful trials whose CPDAG matched the truth exactly.
fn accuracy_csv(cells: &[Cell], methods: &[Method]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::from(Error::from(e));
    let mut header = vec!["kind".to_string(), "n".to_string(), "trials".to_string()];
    header.extend(methods.iter().map(|m| m.as_str().to_string()));
    w.write_record(&header).map_err(io)?;
    let mut keys: Vec<(JunctionKind, usize)> = Vec::new();
    for c in cells {
        if !keys.contains(&(c.kind, c.n)) {
            keys.push((c.kind, c.n));
        }
    }
    for (kind, n) in keys {
        let mut row = vec![kind.to_string(), n.to_string()];
        let mut trials = 0;
        for &m in methods {
            let cell = cells
                .iter()
                .find(|c| c.kind == kind && c.n == n && c.method == m)
                .expect("grid cell");
            trials = cell.outcomes.len();
            let ok = cell.successes();
            let acc = (!ok.is_empty()).then(|| {
                ok.iter().filter(|o| o.markov_equivalent).count() as f64 / ok.len() as f64
            });
            row.push(acc.map(|a| format!("{a:?}")).unwrap_or_default());
        }
        row.insert(2, trials.to_string());
        w.write_record(&row).map_err(io)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Failure::from(Error::Numeric(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn benchmark(args: BenchmarkArgs) -> Result<(), Failure> {
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    if args.sizes.iter().any(|&n| n < 10) {
        return Err(usage("--sizes entries must be at least 10"));
    }
    let kinds = args
        .kinds
        .iter()
        .map(|k| k.parse::<JunctionKind>())
        .collect::<Result<Vec<_>, _>>()?;
    let methods = args
        .methods
        .iter()
        .map(|m| m.parse::<Method>())
        .collect::<Result<Vec<_>, _>>()?;
    let roc_alphas: Option<Vec<f64>> = args
        .roc
        .then(|| args.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec()));
    for &a in std::iter::once(&args.alpha).chain(roc_alphas.iter().flatten()) {
        if !(a > 0.0 && a < 1.0) {
            return Err(usage(format!("significance levels must lie in (0, 1), got {a}")));
        }
    }
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| usage(format!("--jobs: {e}")))?;
    }
    fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;

    let config = BenchmarkConfig {
        kinds: kinds.iter().map(|k| k.as_str()).collect(),
        sizes: &args.sizes,
        trials: args.trials,
        methods: methods.iter().map(|m| m.as_str()).collect(),
        alpha: args.alpha,
        roc_alphas: roc_alphas.as_deref(),
        noise: args.noise,
        quantum_generator: args.quantum.then(default_generator_spec),
        seed: args.seed,
    };
    let config_json = serde_json::to_string_pretty(&config).map_err(Error::from)?;
    write(&args.out_dir.join("config.json"), &config_json)?;

    let mut cells = Vec::new();
    for &kind in &kinds {
        for &n in &args.sizes {
            for &method in &methods {
                info!("{kind} n={n} {} alpha={}", method.as_str(), args.alpha);
                cells.push(run_cell(&args, kind, n, method, args.alpha));
            }
        }
    }
    write(&args.out_dir.join("accuracy.csv"), &accuracy_csv(&cells, &methods)?)?;

    let mut roc_cells = Vec::new();
    if let Some(alphas) = &roc_alphas {
        for &kind in &kinds {
            for &n in &args.sizes {
                for &method in &methods {
                    for &alpha in alphas {
                        info!("ROC {kind} n={n} {} alpha={alpha}", method.as_str());
                        roc_cells.push(run_cell(&args, kind, n, method, alpha));
                    }
                }
            }
        }
        let points: Vec<(Vec<String>, RocPoint)> = roc_cells
            .iter()
            .map(|c| {
                (
                    vec![c.kind.to_string(), c.n.to_string(), c.method.as_str().to_string()],
                    RocPoint::pooled(c.alpha, &c.successes()),
                )
            })
            .collect();
        let csv = roc_csv(
            &["kind", "n", "method"],
            points.iter().map(|(l, p)| (l.clone(), p)),
        )?;
        write(&args.out_dir.join("roc.csv"), &csv)?;
    }
    let all: Vec<Cell> = cells.into_iter().chain(roc_cells).collect();
    write(&args.out_dir.join("trials.csv"), &trials_csv(&all, args.seed)?)?;

    let empty: Vec<String> = all
        .iter()
        .filter(|c| c.successes().is_empty())
        .map(|c| format!("{} n={} {} alpha={}", c.kind, c.n, c.method.as_str(), c.alpha))
        .collect();
    if !empty.is_empty() {
        return Err(Failure {
            code: 4,
            message: format!("no successful trial in: {}", empty.join("; ")),
        });
    }
    println!("wrote results to {}", args.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("QCAUSAL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Discover(a) => discover(a),
        Command::GenData(a) => gen_data(a),
        Command::Benchmark(a) => benchmark(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
