//! Command-line front end: argument parsing, configuration layering and the
//! subcommands that drive the forecasting engine.

pub mod config;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;
use trafficast_core::error::{Error as CoreError, ErrorCategory};
use trafficast_core::eval::{benchmark, split, write_report};
use trafficast_core::pipeline::{
    acf, axis_for, format_utc, generate_synthetic, ingest_csv, parse_utc, preprocess,
    write_observations, GraphKind,
};
use trafficast_core::predictors::{fit, parse_methods, FitInput, FittedModel, MethodKind};
use trafficast_core::roadnet::{LinkId, RoadGraph, SeriesSet};
use trafficast_core::wavelet::{
    assign, cluster_links, link_features, write_curves, ClusterAssignment,
};

pub use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl CliError {
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Core(e) => match e.category() {
                ErrorCategory::Validation => "validation",
                ErrorCategory::Runtime => "runtime",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            "usage" => 2,
            "validation" => 3,
            _ => 4,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "trafficast",
    version,
    about = "Traffic speed forecasting on road networks"
)]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores, 1 = sequential).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output on standard error (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic road graph and observation feed.
    Generate(GenerateArgs),
    /// Clean raw observations onto the 15-minute grid.
    Preprocess(PreprocessArgs),
    /// Cluster links by their wavelet energy profiles.
    Cluster(ClusterArgs),
    /// Fit one method and save the model.
    Train(TrainArgs),
    /// Forecast the next h steps from one origin.
    Predict(PredictArgs),
    /// Benchmark methods on the test week and write report files.
    Evaluate(EvaluateArgs),
    /// Render the Markdown tables from a report directory.
    Report(ReportArgs),
    /// Autocorrelation of each link series.
    Acf(AcfArgs),
    /// Print the default configuration.
    DumpDefaults(DumpArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub links: Option<usize>,
    #[arg(long)]
    pub weeks: Option<usize>,
    /// grid, ring or random-planar
    #[arg(long)]
    pub graph_kind: Option<String>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub wave_rate: Option<f64>,
    /// Also write the clean ground truth.
    #[arg(long)]
    pub truth: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub observations: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub set: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Inertia and silhouette per K.
    #[arg(long)]
    pub curves: Option<PathBuf>,
    /// Fixed cluster count instead of automatic selection.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub k_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub set: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    /// Comma-separated link ids for per-link methods (default: all).
    #[arg(long)]
    pub links: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub set: Option<PathBuf>,
    /// Forecast origin, e.g. 2018-10-21T00:00Z.
    #[arg(long)]
    pub at: String,
    #[arg(long)]
    pub links: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, default_value = "baseline,ar,gb,mlp,lstm,bmlp,cmlp,gcnn")]
    pub methods: String,
    #[arg(long)]
    pub set: Option<PathBuf>,
    #[arg(long)]
    pub graph: Option<PathBuf>,
    #[arg(long)]
    pub clusters: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Directory holding report.csv.
    #[arg(long)]
    pub from: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AcfArgs {
    #[arg(long)]
    pub set: Option<PathBuf>,
    #[arg(long, default_value_t = 1344)]
    pub max_lag: usize,
    #[arg(long)]
    pub links: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    /// Write to a file instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn need(flag: &Option<PathBuf>, fallback: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.clone().or_else(|| fallback.clone()).ok_or_else(|| {
        CliError::Usage(format!(
            "missing --{what} (or paths.{what} in the configuration)"
        ))
    })
}

fn parse_links(list: &str) -> Result<Vec<LinkId>> {
    list.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map(LinkId)
                .map_err(|_| CliError::Usage(format!("bad link id {s:?}")))
        })
        .collect()
}

fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    if let Some(t) = parse_utc(s) {
        return Ok(t);
    }
    // minutes-only form without seconds
    let padded = s.strip_suffix('Z').map(|x| format!("{x}:00Z"));
    padded
        .and_then(|p| parse_utc(&p))
        .ok_or_else(|| CliError::Core(CoreError::Validation(format!("cannot parse time {s:?}"))))
}

fn csv_out(path: &Path) -> Result<csv::Writer<fs::File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    Ok(cfg)
}

fn setup_threads(n: usize) {
    let mut b = rayon::ThreadPoolBuilder::new();
    if n > 0 {
        b = b.num_threads(n);
    }
    if let Err(e) = b.build_global() {
        log::debug!("thread pool already configured: {e}");
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .target(env_logger::Target::Stderr)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.category());
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    setup_threads(cfg.threads);
    match &cli.command {
        Command::Generate(a) => generate(&cfg, a),
        Command::Preprocess(a) => run_preprocess(&cfg, a),
        Command::Cluster(a) => cluster(&cfg, a),
        Command::Train(a) => train(&cfg, a),
        Command::Predict(a) => predict(&cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Report(a) => report(a),
        Command::Acf(a) => run_acf(&cfg, a),
        Command::DumpDefaults(a) => {
            let text = RunConfig::default().to_toml();
            match &a.out {
                Some(p) => fs::write(p, text)?,
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

fn generate(cfg: &RunConfig, a: &GenerateArgs) -> Result<()> {
    let dir = need(&a.out_dir, &cfg.paths.out_dir, "out-dir")?;
    let mut spec = cfg.synth.clone();
    spec.seed = cfg.seed;
    if let Some(n) = a.links {
        spec.n_links = n;
    }
    if let Some(w) = a.weeks {
        spec.n_weeks = w;
    }
    if let Some(k) = &a.graph_kind {
        spec.graph_kind = match k.as_str() {
            "grid" => GraphKind::Grid,
            "ring" => GraphKind::Ring,
            "random-planar" => GraphKind::RandomPlanar,
            other => return Err(CliError::Usage(format!("unknown graph kind {other:?}"))),
        };
    }
    if let Some(x) = a.noise {
        spec.noise_std = x;
    }
    if let Some(x) = a.wave_rate {
        spec.wave_rate = x;
    }
    let syn = generate_synthetic(&spec)?;
    fs::create_dir_all(&dir)?;
    syn.graph.write_csv(dir.join("graph.csv"))?;
    write_observations(
        std::io::BufWriter::new(fs::File::create(dir.join("observations.csv"))?),
        &syn.observations,
    )?;
    if a.truth {
        syn.truth.write_csv(dir.join("truth.csv"))?;
    }
    log::info!(
        "wrote {} links and {} observations to {}",
        syn.graph.len(),
        syn.observations.len(),
        dir.display()
    );
    Ok(())
}

fn run_preprocess(cfg: &RunConfig, a: &PreprocessArgs) -> Result<()> {
    let graph = RoadGraph::read_csv(need(&a.graph, &cfg.paths.graph, "graph")?)?;
    let ing = ingest_csv(need(
        &a.observations,
        &cfg.paths.observations,
        "observations",
    )?)?;
    for w in &ing.warnings {
        log::warn!("{w}");
    }
    let axis = axis_for(&ing.observations)?;
    let (set, rep) = preprocess(&graph, &ing.observations, &axis, &cfg.preprocess)?;
    log::info!(
        "{} rows ({} malformed), {} default readings removed, {} links kept, {} dropped",
        ing.rows,
        ing.malformed,
        rep.defaults_removed,
        set.len(),
        rep.coverage.dropped.len()
    );
    set.write(&a.out)?;
    Ok(())
}

fn load_set(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<SeriesSet> {
    Ok(SeriesSet::read(need(flag, &cfg.paths.set, "set")?)?)
}

fn cluster(cfg: &RunConfig, a: &ClusterArgs) -> Result<()> {
    let set = load_set(cfg, &a.set)?;
    let range = match split(&set, &cfg.eval.split) {
        Ok(s) => s.train,
        Err(_) => {
            log::info!("set is shorter than the configured split; using every step");
            0..set.axis().count()
        }
    };
    let feats = link_features(&set, range)?;
    let assignment = match a.k {
        Some(k) => assign(&feats, k, cfg.seed)?,
        None => {
            let (assignment, sel) =
                cluster_links(&feats, a.k_max.unwrap_or(cfg.eval.k_max), cfg.seed)?;
            log::info!("selected K = {} (elbow {})", sel.k, sel.elbow);
            if let Some(p) = &a.curves {
                write_curves(fs::File::create(p)?, &sel)?;
            }
            assignment
        }
    };
    assignment.write_csv(&a.out)?;
    Ok(())
}

fn load_clusters(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<Option<ClusterAssignment>> {
    match flag.clone().or_else(|| cfg.paths.clusters.clone()) {
        Some(p) => Ok(Some(ClusterAssignment::read_csv(p)?)),
        None => Ok(None),
    }
}

fn load_graph(cfg: &RunConfig, flag: &Option<PathBuf>) -> Result<Option<RoadGraph>> {
    match flag.clone().or_else(|| cfg.paths.graph.clone()) {
        Some(p) => Ok(Some(RoadGraph::read_csv(p)?)),
        None => Ok(None),
    }
}

fn train(cfg: &RunConfig, a: &TrainArgs) -> Result<()> {
    let method: MethodKind = a.method.parse()?;
    let set = load_set(cfg, &a.set)?;
    let sp = split(&set, &cfg.eval.split)?;
    let graph = load_graph(cfg, &a.graph)?;
    let mut clusters = load_clusters(cfg, &a.clusters)?;
    if method == MethodKind::Cmlp && clusters.is_none() {
        let feats = link_features(&set, sp.train.clone())?;
        clusters = Some(cluster_links(&feats, cfg.eval.k_max, cfg.seed)?.0);
    }
    let links = a
        .links
        .as_deref()
        .map(parse_links)
        .transpose()?
        .unwrap_or_default();
    let model = fit(
        method,
        &cfg.methods(),
        &FitInput {
            set: &set,
            graph: graph.as_ref(),
            clusters: clusters.as_ref(),
            train: sp.train.clone(),
            val: (!sp.val.is_empty()).then(|| sp.val.clone()),
            links,
            seed: cfg.seed,
        },
    )?;
    let size = model.save(&a.out)?;
    log::info!(
        "{}: {} models, {size} bytes",
        method.label(),
        model.model_count()
    );
    Ok(())
}

fn predict(cfg: &RunConfig, a: &PredictArgs) -> Result<()> {
    let model = FittedModel::load(&a.model)?;
    let set = load_set(cfg, &a.set)?;
    let at = parse_time(&a.at)?;
    let t = set.axis().index_of(at)?;
    let links = match &a.links {
        Some(l) => parse_links(l)?,
        None => {
            let available: BTreeSet<LinkId> = set.link_ids().into_iter().collect();
            model
                .links()
                .map(|v| v.into_iter().filter(|l| available.contains(l)).collect())
                .unwrap_or_else(|| set.link_ids())
        }
    };
    let preds = model
        .predict_origins(&set, &[t], &links)?
        .pop()
        .expect("one origin");
    let mut w = csv_out(&a.out)?;
    w.write_record(["link_id", "origin_time", "h", "predicted_kmh"])?;
    let stamp = format_utc(at);
    for (l, p) in links.iter().zip(&preds) {
        for (k, v) in p.iter().enumerate() {
            w.write_record([
                l.to_string(),
                stamp.clone(),
                (k + 1).to_string(),
                v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn evaluate(cfg: &RunConfig, a: &EvaluateArgs) -> Result<()> {
    let methods = parse_methods(&a.methods)?;
    let out = need(&a.out, &cfg.paths.out_dir, "out")?;
    let set = load_set(cfg, &a.set)?;
    let graph = load_graph(cfg, &a.graph)?;
    if methods.contains(&MethodKind::Gcnn) && graph.is_none() {
        return Err(CliError::Usage("the gcnn method needs --graph".into()));
    }
    let clusters = load_clusters(cfg, &a.clusters)?;
    let result = benchmark(
        &methods,
        &set,
        graph.as_ref(),
        clusters.as_ref(),
        &cfg.methods(),
        &cfg.eval,
        cfg.seed,
    )?;
    let files = write_report(&out, &result, &set)?;
    if let Some(c) = &result.clusters {
        c.write_csv(out.join("clusters.csv"))?;
    }
    log::info!("report written to {}", files.markdown.display());
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let mut r = csv::Reader::from_path(a.from.join("report.csv"))?;
    let header = r.headers()?.clone();
    let steps: Vec<usize> = header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with('h') && h[1..].parse::<usize>().is_ok())
        .map(|(i, _)| i)
        .collect();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| {
            CliError::Core(CoreError::Format(format!(
                "report.csv has no {name} column"
            )))
        })
    };
    let (time, size, class) = (
        col("train_time_s")?,
        col("size_bytes")?,
        col("model_count_class")?,
    );
    let mut rmse = String::from("| Method |");
    let mut cost = String::from("| Method | Train time per model (s) | Size per model (bytes) | # of models |\n|---|---:|---:|---|\n");
    for &i in &steps {
        rmse.push_str(&format!(" {} |", &header[i]));
    }
    rmse.push_str("\n|---|");
    rmse.push_str(&"---:|".repeat(steps.len()));
    rmse.push('\n');
    for row in r.records() {
        let row = row?;
        let num = |i: usize| -> Result<f64> {
            row[i]
                .parse::<f64>()
                .map_err(|_| CliError::Core(CoreError::Format(format!("bad number {:?}", &row[i]))))
        };
        rmse.push_str(&format!("| {} |", &row[0]));
        for &i in &steps {
            rmse.push_str(&format!(" {:.3} |", num(i)?));
        }
        rmse.push('\n');
        cost.push_str(&format!(
            "| {} | {:.3} | {:.0} | {} |\n",
            &row[0],
            num(time)?,
            num(size)?,
            &row[class]
        ));
    }
    fs::write(
        &a.out,
        format!("## RMSE (km/h) per horizon step\n\n{rmse}\n## Training cost\n\n{cost}"),
    )?;
    Ok(())
}

fn run_acf(cfg: &RunConfig, a: &AcfArgs) -> Result<()> {
    let set = load_set(cfg, &a.set)?;
    let links = match &a.links {
        Some(l) => parse_links(l)?,
        None => set.link_ids(),
    };
    let mut w = csv_out(&a.out)?;
    w.write_record(["link_id", "lag", "acf"])?;
    for l in links {
        let r = acf(set.values(l)?, a.max_lag)?;
        for (lag, v) in r.iter().enumerate() {
            w.write_record([l.to_string(), lag.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
