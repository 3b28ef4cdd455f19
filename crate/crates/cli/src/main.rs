use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use brainet::attribution::{aggregate_importance, explain_rows, sample_background, Estimator};
use brainet::evaluation::compute_metrics;
use brainet::graph::{
    build_graph, connected_components, degree_table, diff_graphs, export, import_json, prune_isolated, ExportFormat, GraphMode,
    GroupTag,
};
use brainet::ingest::{parse_csv, preprocess, read_schema, BiomarkerMatrix, ParseOptions};
use brainet::models::{grid_search_cv, train, HyperparameterGrid, ModelConfig, ModelKind, Predictor, TrainedModel};
use brainet::pipeline::{render_report, run_pipeline, EstimatorChoice, PipelineConfig};
use brainet::select::{mrmr_select, write_mrmr_report, MrmrOptions};
use brainet::stats::{correlation_matrix, CorrelationMatrix};
use brainet::synth::{generate_cohort, SynthSpec};
use brainet::{Error, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

#[derive(Parser)]
#[command(name = "brainet", version, about = "Biomarker attribution pooling and correlation-network analysis")]
struct Cli {
    /// Pipeline configuration (JSON). Flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "BRAINET_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage from the configuration.
    Run(RunArgs),
    /// Clean a cohort CSV into a normalized matrix snapshot.
    Preprocess(PreprocessArgs),
    /// Rank features by mRMR.
    Select(SelectArgs),
    /// Fit one model on a matrix snapshot.
    Train(TrainArgs),
    /// Shapley attributions of a saved model.
    Explain(ExplainArgs),
    /// Thresholded correlation graph.
    Graph(GraphArgs),
    /// Degree table and structural diff of a case and a control graph.
    Compare(CompareArgs),
    /// Generate a synthetic cohort.
    Synth(SynthArgs),
    /// Render a finished output directory as markdown.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mode: Option<GraphModeArg>,
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    top_n: Option<usize>,
    #[arg(long)]
    background_size: Option<usize>,
    #[arg(long)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    n_coalitions: Option<usize>,
    #[arg(long)]
    hoist_grid_search: bool,
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    k_impute: Option<usize>,
}

#[derive(Args)]
struct SelectArgs {
    /// Matrix snapshot written by `preprocess`.
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    m: usize,
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    model: ModelKind,
    /// Hyperparameter override, `name=value`; repeatable.
    #[arg(long = "hp", value_parser = parse_hp)]
    hyperparameters: Vec<(String, f64)>,
    /// Pick hyperparameters by stratified cross-validation over the grid.
    #[arg(long)]
    grid_search: bool,
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Model file written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Rows to explain.
    #[arg(long)]
    matrix: PathBuf,
    /// Rows to draw the background from; defaults to `--matrix`.
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    background_size: Option<usize>,
    #[arg(long)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    n_coalitions: Option<usize>,
}

#[derive(Args)]
struct GraphArgs {
    /// Correlation matrix CSV with header row and name column.
    #[arg(long, conflicts_with = "matrix", required_unless_present = "matrix")]
    corr: Option<PathBuf>,
    /// Matrix snapshot to correlate instead.
    #[arg(long)]
    matrix: Option<PathBuf>,
    /// Comma-separated feature subset when correlating a matrix.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    #[arg(long, default_value = "combined")]
    group: GroupArg,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    mode: Option<GraphModeArg>,
    /// Keep nodes without edges.
    #[arg(long)]
    keep_isolated: bool,
}

#[derive(Args)]
struct CompareArgs {
    case: PathBuf,
    control: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Generator spec as JSON.
    #[arg(long)]
    spec: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a finished run; defaults to `--out`.
    dir: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum GraphModeArg {
    Signed,
    Absolute,
}

impl From<GraphModeArg> for GraphMode {
    fn from(m: GraphModeArg) -> Self {
        match m {
            GraphModeArg::Signed => GraphMode::Signed,
            GraphModeArg::Absolute => GraphMode::Absolute,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EstimatorArg {
    Exact,
    Sampled,
}

impl From<EstimatorArg> for EstimatorChoice {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Exact => EstimatorChoice::Exact,
            EstimatorArg::Sampled => EstimatorChoice::Sampled,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum GroupArg {
    Combined,
    Case,
    Control,
}

fn parse_hp(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got {s:?}"))?;
    let v: f64 = v.trim().parse().map_err(|_| format!("bad value in {s:?}"))?;
    Ok((k.trim().to_string(), v))
}

struct Ctx {
    cfg: PipelineConfig,
    out: PathBuf,
    jobs: usize,
    seed_override: Option<u64>,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Self> {
        let mut cfg = match &cli.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(o) = &cli.out {
            cfg.paths.output = o.clone();
        }
        if let Some(s) = cli.seed {
            cfg.base_seed = s;
        }
        let jobs = cli
            .jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
        Ok(Ctx {
            out: cfg.paths.output.clone(),
            cfg,
            jobs,
            seed_override: cli.seed,
        })
    }

    fn out_file(&self, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        Ok(self.out.join(name))
    }

    fn pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))?
            .install(f)
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load_matrix(path: &Path) -> Result<BiomarkerMatrix> {
    BiomarkerMatrix::read_snapshot(path, None)
}

fn cmd_run(ctx: &mut Ctx, a: RunArgs) -> Result<()> {
    let cfg = &mut ctx.cfg;
    if let Some(v) = a.input {
        cfg.paths.input = v;
    }
    if let Some(v) = a.schema {
        cfg.paths.schema = v;
    }
    if let Some(v) = a.alpha {
        cfg.graph.alpha = v;
    }
    if let Some(v) = a.mode {
        cfg.graph.mode = v.into();
    }
    if let Some(v) = a.bootstrap {
        cfg.evaluation.bootstrap_iterations = v;
    }
    if let Some(v) = a.top_n {
        cfg.attribution.top_n = v;
    }
    if let Some(v) = a.background_size {
        cfg.attribution.background_size = v;
    }
    if let Some(v) = a.estimator {
        cfg.attribution.estimator = v.into();
    }
    if let Some(v) = a.n_coalitions {
        cfg.attribution.n_coalitions = v;
    }
    if a.hoist_grid_search {
        cfg.evaluation.hoist_grid_search = true;
    }
    let summary = run_pipeline(cfg, ctx.jobs)?;
    println!("output: {}", summary.output.display());
    println!("pool: {}", summary.pool.join(", "));
    for (group, sizes) in &summary.component_sizes {
        println!("components[{group}]: {sizes:?}");
    }
    Ok(())
}

fn cmd_preprocess(ctx: &Ctx, a: PreprocessArgs) -> Result<()> {
    let input = a.input.unwrap_or_else(|| ctx.cfg.paths.input.clone());
    let schema = read_schema(&a.schema.unwrap_or_else(|| ctx.cfg.paths.schema.clone()))?;
    let opts = ParseOptions {
        missing_tokens: ctx.cfg.preprocess.missing_tokens.clone(),
    };
    let table = parse_csv(&input, &schema, &opts)?;
    let missing = table.missing_count();
    let m = ctx.pool(|| preprocess(table, a.k_impute.unwrap_or(ctx.cfg.preprocess.k_impute)))?;
    let path = ctx.out_file("matrix.csv")?;
    m.write_snapshot(&path, Some(&ctx.out_file("normalization.json")?))?;
    println!(
        "{} rows, {} features, {missing} cells imputed -> {}",
        m.n_samples(),
        m.n_features(),
        path.display()
    );
    for name in m.constant_features() {
        println!("constant feature: {name}");
    }
    Ok(())
}

fn cmd_select(ctx: &Ctx, a: SelectArgs) -> Result<()> {
    let m = load_matrix(&a.matrix)?;
    let opts = MrmrOptions {
        bins: a.bins.unwrap_or(ctx.cfg.select.bins),
        redundancy: ctx.cfg.select.redundancy,
    };
    let r = mrmr_select(&m, a.m, &opts)?;
    write_mrmr_report(&r, &m.feature_names, &ctx.out_file("mrmr.json")?, &ctx.out_file("mrmr.csv")?)?;
    for (rank, (&j, g)) in r.order.iter().zip(&r.gains).enumerate() {
        println!("{:>3} {:<24} {g:.6}", rank + 1, m.feature_names[j]);
    }
    Ok(())
}

fn cmd_train(ctx: &Ctx, a: TrainArgs) -> Result<()> {
    let m = load_matrix(&a.matrix)?;
    let seed = ctx.cfg.base_seed;
    let overrides: BTreeMap<String, f64> = a.hyperparameters.into_iter().collect();
    let config = if a.grid_search {
        let mut grid = match ctx.cfg.models.grids.get(&a.model) {
            Some(axes) => HyperparameterGrid::new(axes.iter().map(|(k, v)| (k.clone(), v.clone())).collect())?,
            None => HyperparameterGrid::default_for(a.model),
        };
        for (k, v) in &overrides {
            grid.axes.retain(|(name, _)| name != k);
            grid.axes.push((k.clone(), vec![*v]));
        }
        let folds = a.folds.unwrap_or(ctx.cfg.evaluation.folds);
        let report = ctx.pool(|| grid_search_cv(&m, a.model, &grid, folds, seed))?;
        for (point, score) in &report.scores {
            info!("cv {point:?}: {score:.4}");
        }
        report.best
    } else {
        ModelConfig::new(a.model, overrides, seed)
    };
    let model = ctx.pool(|| train(&m, &config))?;
    let path = ctx.out_file(&format!("model_{}.json", a.model))?;
    model.save(&path)?;
    let prob = model.predict_proba(m.values.view())?;
    let r = compute_metrics(&m.labels, &prob, 0.5)?;
    println!("hyperparameters: {:?}", model.config.hyperparameters);
    println!(
        "training accuracy {:.4}, auc {}",
        r.accuracy,
        r.auc.map(|v| format!("{v:.4}")).unwrap_or_else(|| "n/a".into())
    );
    println!("model -> {}", path.display());
    Ok(())
}

fn cmd_explain(ctx: &Ctx, a: ExplainArgs) -> Result<()> {
    let model = TrainedModel::load(&a.model)?;
    let rows = load_matrix(&a.matrix)?.select_features(&model.feature_names)?;
    let bg_source = match &a.background {
        Some(p) => load_matrix(p)?.select_features(&model.feature_names)?,
        None => rows.clone(),
    };
    let seed = ctx.cfg.base_seed;
    let background = sample_background(&bg_source, a.background_size.unwrap_or(ctx.cfg.attribution.background_size), seed)?;
    let estimator = match a.estimator.map(EstimatorChoice::from).unwrap_or(ctx.cfg.attribution.estimator) {
        EstimatorChoice::Exact => Estimator::Exact,
        EstimatorChoice::Sampled => Estimator::Sampled {
            n_coalitions: a.n_coalitions.unwrap_or(ctx.cfg.attribution.n_coalitions),
        },
    };
    let att = ctx.pool(|| {
        explain_rows(
            &model as &dyn Predictor,
            &model.feature_names,
            rows.values.view(),
            background.view(),
            estimator,
            seed,
            model.config.kind,
            0,
        )
    })?;
    let path = ctx.out_file("attributions.csv")?;
    let mut w = csv::Writer::from_path(&path)?;
    let mut header = att.feature_names.clone();
    header.push("base_value".into());
    w.write_record(&header)?;
    for row in att.values.outer_iter() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        rec.push(att.base_value.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    let agg = aggregate_importance(std::slice::from_ref(&att))?;
    agg.write_csv(&ctx.out_file(&format!("importance_{}.csv", model.config.kind))?)?;
    for j in agg.ranking().into_iter().take(10) {
        println!("{:<24} {:.6}", agg.feature_names[j], agg.scores[j]);
    }
    Ok(())
}

fn cmd_graph(ctx: &Ctx, a: GraphArgs) -> Result<()> {
    let group = match a.group {
        GroupArg::Combined => GroupTag::Combined,
        GroupArg::Case => GroupTag::Case,
        GroupArg::Control => GroupTag::Control,
    };
    let corr = match (&a.corr, &a.matrix) {
        (Some(p), _) => CorrelationMatrix::read_csv(p)?,
        (None, Some(p)) => {
            let m = load_matrix(p)?;
            let m = match group {
                GroupTag::Combined => m,
                GroupTag::Case => m.group(1),
                GroupTag::Control => m.group(0),
            };
            let subset = if a.features.is_empty() { m.feature_names.clone() } else { a.features.clone() };
            ctx.pool(|| correlation_matrix(&m, &subset))?
        }
        (None, None) => return Err(Error::Config("graph needs --corr or --matrix".into())),
    };
    let alpha = a.alpha.unwrap_or(ctx.cfg.graph.alpha);
    let mode = a.mode.map(GraphMode::from).unwrap_or(ctx.cfg.graph.mode);
    let mut g = build_graph(&corr, alpha, mode, group)?;
    if !a.keep_isolated {
        g = prune_isolated(&g);
    }
    for format in ExportFormat::ALL {
        export(&g, format, &ctx.out_file(&format!("graph_{}.{}", group.as_str(), format.extension()))?)?;
    }
    let cs = connected_components(&g);
    write_json(&ctx.out_file(&format!("components_{}.json", group.as_str()))?, &cs.names(&g))?;
    println!("alpha {alpha}, {} nodes, {} edges", g.n_nodes(), g.edges.len());
    println!("component sizes: {:?}", cs.sizes);
    Ok(())
}

fn read_graph(path: &Path) -> Result<brainet::graph::BiomarkerGraph> {
    import_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

fn cmd_compare(ctx: &Ctx, a: CompareArgs) -> Result<()> {
    let case = read_graph(&a.case)?;
    let control = read_graph(&a.control)?;
    let table = degree_table(&case, &control)?;
    table.write_csv(&ctx.out_file("degree_table.csv")?)?;
    write_json(&ctx.out_file("diff.json")?, &diff_graphs(&case, &control)?)?;
    println!("{:<24} {:>11} {:>14}  present_only_in_case", "name", "degree_case", "degree_control");
    for r in &table.rows {
        println!(
            "{:<24} {:>11} {:>14}  {}",
            r.name, r.degree_case, r.degree_control, r.present_only_in_case
        );
    }
    Ok(())
}

fn cmd_synth(ctx: &Ctx, a: SynthArgs) -> Result<()> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(name), _) => SynthSpec::preset(name)?,
        (None, Some(p)) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        (None, None) => return Err(Error::Config("synth needs --preset or --spec".into())),
    };
    if let Some(s) = ctx.seed_override {
        spec.seed = s;
    }
    let cohort = generate_cohort(&spec)?;
    cohort.write(&ctx.out)?;
    if a.preset.as_deref() == Some("demo") {
        let mut cfg = PipelineConfig::demo();
        cfg.paths.output = "out".into();
        write_json(&ctx.out.join("pipeline.json"), &cfg)?;
    }
    println!(
        "{} rows, {} columns -> {}",
        cohort.table.n_rows(),
        cohort.schema.len(),
        ctx.out.display()
    );
    Ok(())
}

fn cmd_report(ctx: &Ctx, a: ReportArgs) -> Result<()> {
    let dir = a.dir.unwrap_or_else(|| ctx.out.clone());
    let text = render_report(&dir)?;
    let path = dir.join("report.md");
    std::fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
    print!("{text}");
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut ctx = Ctx::new(&cli)?;
    match cli.command {
        Command::Run(a) => cmd_run(&mut ctx, a),
        Command::Preprocess(a) => cmd_preprocess(&ctx, a),
        Command::Select(a) => cmd_select(&ctx, a),
        Command::Train(a) => cmd_train(&ctx, a),
        Command::Explain(a) => cmd_explain(&ctx, a),
        Command::Graph(a) => cmd_graph(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Synth(a) => cmd_synth(&ctx, a),
        Command::Report(a) => cmd_report(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut shown = e.to_string();
            eprintln!("error: {shown}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                let text = s.to_string();
                if !shown.contains(&text) {
                    eprintln!("  caused by: {text}");
                }
                shown = text;
                source = s.source();
            }
            ExitCode::from(e.class().exit_code() as u8)
        }
    }
}
