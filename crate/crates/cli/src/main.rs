use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qnpe_core::classical::{run_classical_npe, ClassicalParams, NeighborRule};
use qnpe_core::data::{emit_csv, ingest_csv, DataMatrix, Normalize, StoreKind, TreeStore};
use qnpe_core::harness::{
    compare, load_summary, run_scaling, Axis, ClassicalReport, DatasetKind, DatasetSpec,
    RunManifest, CLUSTER_SIZE, MANIFEST_FILE,
};
use qnpe_core::linalg::from_rows;
use qnpe_core::nalgebra::DMatrix;
use qnpe_core::pipeline::{run_quantum_npe, QnpeConfig};
use qnpe_core::subroutines::Tier;
use qnpe_core::Error;
use serde::Serialize;

/// Neighborhood preserving embedding: classical reference and simulated
/// quantum pipeline.
#[derive(Debug, Parser)]
#[command(name = "qnpe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset as CSV.
    Gen(GenArgs),
    /// Run the classical or quantum pipeline on a CSV dataset.
    Run(RunArgs),
    /// Compare two result files produced by `run`.
    Compare(CompareArgs),
    /// Measure per-stage query counts along one parameter and fit exponents.
    Scaling(ScalingArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long, value_parser = parse_kind)]
    dataset: DatasetKind,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Points per cluster (clusters only).
    #[arg(long, default_value_t = CLUSTER_SIZE)]
    cluster_size: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Classical,
    Quantum,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TierArg {
    Spectral,
    Circuit,
}

impl From<TierArg> for Tier {
    fn from(t: TierArg) -> Self {
        match t {
            TierArg::Spectral => Tier::Spectral,
            TierArg::Circuit => Tier::Circuit,
        }
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    /// CSV file, one point per row.
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    mode: Mode,
    #[arg(long, value_enum, default_value = "spectral")]
    tier: TierArg,
    /// Neighbor radius (default 1).
    #[arg(long)]
    r: Option<f64>,
    /// k nearest neighbors instead of a radius (classical only).
    #[arg(long, conflicts_with = "r")]
    k: Option<usize>,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long)]
    alpha: Option<f64>,
    /// Global error ε (quantum only).
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full quantum configuration as JSON; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scale every row to unit norm after reading.
    #[arg(long)]
    unit_rows: bool,
    /// Attach a comparison against the classical run (quantum only).
    #[arg(long)]
    compare: bool,
    /// Also write the stored data states and readouts.
    #[arg(long)]
    dump_states: bool,
    /// The dataset's first line is a header.
    #[arg(long)]
    header: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Reference result (usually classical.json).
    reference: PathBuf,
    /// Result to check against it.
    other: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ScalingArgs {
    #[arg(long, value_parser = parse_axis)]
    axis: Axis,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',', required = true)]
    sizes: Vec<usize>,
    #[arg(long, value_parser = parse_kind, default_value = "clusters")]
    dataset: DatasetKind,
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
    #[arg(long, default_value_t = 3)]
    data_seed: u64,
    #[arg(long, default_value_t = CLUSTER_SIZE)]
    cluster_size: usize,
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, value_enum, default_value = "spectral")]
    tier: TierArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_kind(s: &str) -> Result<DatasetKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// A command failure: usage problems exit 1, pipeline errors exit 2.
enum Failure {
    Usage(String),
    Pipeline(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Pipeline(e)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    step: Option<u8>,
}

#[derive(Serialize)]
struct ErrorJson<'a> {
    error: ErrorBody<'a>,
}

impl Failure {
    fn report(&self) -> ExitCode {
        let (body, code) = match self {
            Failure::Usage(msg) => (
                ErrorBody {
                    kind: "usage",
                    message: msg.clone(),
                    step: None,
                },
                1,
            ),
            Failure::Pipeline(e) => (
                ErrorBody {
                    kind: e.kind(),
                    message: e.to_string(),
                    step: e.step(),
                },
                2,
            ),
        };
        let json = serde_json::to_string(&ErrorJson { error: body })
            .unwrap_or_else(|_| "{\"error\":{\"kind\":\"internal\"}}".into());
        eprintln!("{json}");
        ExitCode::from(code)
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(f) = configure_threads() {
        return f.report();
    }
    let outcome = match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::Scaling(a) => cmd_scaling(&a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}

fn configure_threads() -> CmdResult {
    let Ok(v) = std::env::var("QNPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::Usage(format!("QNPE_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("cannot size the thread pool: {e}")))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn prepare_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

fn finish(mut manifest: RunManifest, dir: &Path, files: &[PathBuf], start: Instant) -> CmdResult {
    for f in files {
        manifest.record(dir, f)?;
    }
    manifest.wall_time = start.elapsed().as_secs_f64();
    manifest.write(&dir.join(MANIFEST_FILE))?;
    log::info!("wrote {} files to {}", files.len(), dir.display());
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> CmdResult {
    let start = Instant::now();
    let spec = DatasetSpec {
        noise: a.noise,
        seed: a.seed,
        cluster_size: a.cluster_size,
        ..DatasetSpec::new(a.dataset, a.m, a.n)
    };
    let x = spec.generate()?;
    prepare_dir(&a.out_dir)?;
    let path = a.out_dir.join(format!("{}.csv", a.dataset));
    emit_csv(x.entries(), &path)?;
    let config = serde_json::to_value(spec).map_err(Error::from)?;
    let manifest = RunManifest::new("gen", config, x.fingerprint());
    finish(manifest, &a.out_dir, &[path], start)
}

fn quantum_config(a: &RunArgs) -> Result<QnpeConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            serde_json::from_str(&text).map_err(Error::from)?
        }
        None => QnpeConfig::default(),
    };
    if let Some(r) = a.r {
        c.r = r;
    }
    if let Some(eps) = a.eps {
        c.eps = eps;
    }
    if a.alpha.is_some() {
        c.alpha = a.alpha;
    }
    if a.compare {
        c.compare = true;
    }
    c.d = a.d;
    c.seed = a.seed;
    c.tier = a.tier.into();
    c.validate()?;
    Ok(c)
}

/// Columns of the n×d direction matrix.
fn columns_matrix(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, cols.len(), |r, c| cols[c][r])
}

#[derive(Serialize)]
struct StatesDump {
    x_store: qnpe_core::data::StoreDump,
    norm_state: Vec<f64>,
    row_states: Vec<Vec<f64>>,
    a_states: Vec<Vec<f64>>,
}

fn dump_states(x: &DataMatrix, a_states: Vec<Vec<f64>>, path: &Path) -> Result<(), Error> {
    let store = TreeStore::build(x.entries(), StoreKind::X)?;
    let row_states = (0..store.rows())
        .map(|i| store.row_state(i))
        .collect::<Result<Vec<_>, _>>()?;
    let dump = StatesDump {
        norm_state: store.norm_state()?,
        row_states,
        x_store: store.dump(),
        a_states,
    };
    write_json(&dump, path)
}

fn cmd_run(a: &RunArgs) -> CmdResult {
    let start = Instant::now();
    let normalize = if a.unit_rows {
        Normalize::UnitRows
    } else {
        Normalize::None
    };
    let x = ingest_csv(&a.dataset, normalize, a.header)?;
    let fingerprint = x.fingerprint();
    match a.mode {
        Mode::Classical => {
            if a.eps.is_some() || a.config.is_some() || a.compare {
                return Err(Failure::Usage(
                    "--eps, --config and --compare apply to --mode quantum".into(),
                ));
            }
            let params = ClassicalParams {
                neighbors: match a.k {
                    Some(k) => NeighborRule::Knn(k),
                    None => NeighborRule::Radius(a.r.unwrap_or(1.0)),
                },
                d: a.d,
                alpha: a.alpha,
            };
            let run = run_classical_npe(&x, &params)?;
            let report = ClassicalReport::from_run(&run, &fingerprint);
            prepare_dir(&a.out_dir)?;
            let json = a.out_dir.join("classical.json");
            let w = a.out_dir.join("W.csv");
            let am = a.out_dir.join("A.csv");
            write_json(&report, &json)?;
            emit_csv(run.weights(), &w)?;
            emit_csv(run.a(), &am)?;
            let mut files = vec![json, w, am];
            if a.dump_states {
                let p = a.out_dir.join("states.json");
                dump_states(&x, report.summary().directions, &p)?;
                files.push(p);
            }
            let config = serde_json::to_value(params).map_err(Error::from)?;
            let mut manifest = RunManifest::new("run classical", config, fingerprint);
            let t = run.timings;
            manifest.timings = [
                ("neighbors", t.neighbors),
                ("weights", t.weights),
                ("spectral", t.spectral),
                ("regression", t.regression),
            ]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
            finish(manifest, &a.out_dir, &files, start)
        }
        Mode::Quantum => {
            if a.k.is_some() {
                return Err(Failure::Usage(
                    "the quantum pipeline finds neighbors by radius; use --r".into(),
                ));
            }
            let config = quantum_config(a)?;
            let result = run_quantum_npe(&x, &config)?;
            prepare_dir(&a.out_dir)?;
            let json = a.out_dir.join("quantum.json");
            let w = a.out_dir.join("W.csv");
            let am = a.out_dir.join("A.csv");
            write_json(&result, &json)?;
            emit_csv(&from_rows(&result.w), &w)?;
            emit_csv(&columns_matrix(&result.a_states), &am)?;
            let mut files = vec![json, w, am];
            if a.dump_states {
                let p = a.out_dir.join("states.json");
                dump_states(&x, result.a_states.clone(), &p)?;
                files.push(p);
            }
            let cfg = serde_json::to_value(&config).map_err(Error::from)?;
            let manifest = RunManifest::new("run quantum", cfg, fingerprint);
            finish(manifest, &a.out_dir, &files, start)
        }
    }
}

fn cmd_compare(a: &CompareArgs) -> CmdResult {
    let start = Instant::now();
    let reference = load_summary(&a.reference)?;
    let other = load_summary(&a.other)?;
    let report = compare(&reference, &other)?;
    prepare_dir(&a.out_dir)?;
    let path = a.out_dir.join("comparison.json");
    write_json(&report, &path)?;
    let config = serde_json::json!({
        "reference": a.reference.display().to_string(),
        "other": a.other.display().to_string(),
    });
    let manifest = RunManifest::new("compare", config, report.fingerprint.clone());
    finish(manifest, &a.out_dir, &[path], start)
}

fn cmd_scaling(a: &ScalingArgs) -> CmdResult {
    let start = Instant::now();
    let dataset = DatasetSpec {
        noise: a.noise,
        seed: a.data_seed,
        cluster_size: a.cluster_size,
        ..DatasetSpec::new(a.dataset, a.m, a.n)
    };
    let mut config = QnpeConfig::new(a.r, a.d);
    config.alpha = a.alpha;
    if let Some(eps) = a.eps {
        config.eps = eps;
    }
    config.tier = a.tier.into();
    config.seed = a.seed;
    config.validate()?;
    let record = run_scaling(a.axis, &a.sizes, &dataset, &config)?;
    prepare_dir(&a.out_dir)?;
    let json = a.out_dir.join("scaling.json");
    let csv = a.out_dir.join("scaling.csv");
    write_json(&record, &json)?;
    fs::write(&csv, record.to_csv()).map_err(|e| io_err(&csv, e))?;
    for (stage, e) in &record.fitted_exponent {
        log::info!(
            "{stage}: fitted {e:.3}, reference {:.3}",
            record.reference_exponent[stage]
        );
    }
    let fingerprint = dataset.generate().map(|x| x.fingerprint()).unwrap_or_default();
    let cfg = serde_json::json!({ "axis": a.axis, "sizes": a.sizes, "dataset": dataset, "config": config });
    let mut manifest = RunManifest::new("scaling", cfg, fingerprint);
    for p in &record.points {
        manifest.timings.insert(format!("{}={}", a.axis.name(), p.size), p.wall_time);
    }
    finish(manifest, &a.out_dir, &[json, csv], start)
}
