//! End-to-end orchestration from one JSON configuration.
//!
//! Every output lands in `<output>/partial` first and is moved into
//! `<output>` only after the whole run succeeds, so a failed run leaves its
//! completed stages behind for inspection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attribution::{aggregate_importance, select_pool, Estimator, ImportanceAggregate, SelectionConfig, DEFAULT_BACKGROUND_SIZE, DEFAULT_TOP_N};
use crate::error::{Error, Result};
use crate::evaluation::{bootstrap_run, write_metrics_csv, write_summary_json, AttributionOptions, BootstrapOptions, ModelPlan, SplitSpec};
use crate::graph::{
    build_graph, connected_components, degree_distribution, degree_table, diff_graphs, export, prune_isolated, ExportFormat, GraphMode,
    GroupTag, DEFAULT_ALPHA,
};
use crate::ingest::{parse_csv, preprocess, read_schema, BiomarkerMatrix, ParseOptions};
use crate::models::{HyperparameterGrid, ModelKind};
use crate::select::{mrmr_select, write_mrmr_report, MrmrOptions, RedundancyMode, DEFAULT_BINS};
use crate::stats::{anova_oneway, correlation_matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub input: PathBuf,
    pub schema: PathBuf,
    pub output: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            input: "cohort.csv".into(),
            schema: "schema.json".into(),
            output: "out".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub k_impute: usize,
    pub missing_tokens: Vec<String>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            k_impute: 5,
            missing_tokens: ParseOptions::default().missing_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectConfig {
    /// Length of the mRMR ranking report; no report when absent.
    pub mrmr_m: Option<usize>,
    pub bins: usize,
    pub redundancy: RedundancyMode,
}

impl Default for SelectConfig {
    fn default() -> Self {
        SelectConfig {
            mrmr_m: None,
            bins: DEFAULT_BINS,
            redundancy: RedundancyMode::WithDiagonal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelsConfig {
    pub kinds: Vec<ModelKind>,
    /// Per-kind grids; kinds without an entry use the built-in grid.
    pub grids: BTreeMap<ModelKind, BTreeMap<String, Vec<f64>>>,
}

impl Default for ModelsConfig {
    fn default() -> Self {
        ModelsConfig {
            kinds: ModelKind::ALL.to_vec(),
            grids: BTreeMap::new(),
        }
    }
}

impl ModelsConfig {
    pub fn plans(&self) -> Result<Vec<ModelPlan>> {
        self.kinds
            .iter()
            .map(|&kind| {
                let grid = match self.grids.get(&kind) {
                    Some(axes) => HyperparameterGrid::new(axes.iter().map(|(k, v)| (k.clone(), v.clone())).collect())?,
                    None => HyperparameterGrid::default_for(kind),
                };
                Ok(ModelPlan { kind, grid })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorChoice {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttributionConfig {
    pub top_n: usize,
    pub exclusion_patterns: Vec<String>,
    pub background_size: usize,
    pub estimator: EstimatorChoice,
    pub n_coalitions: usize,
}

impl Default for AttributionConfig {
    fn default() -> Self {
        AttributionConfig {
            top_n: DEFAULT_TOP_N,
            exclusion_patterns: vec!["APOE".into()],
            background_size: DEFAULT_BACKGROUND_SIZE,
            estimator: EstimatorChoice::Sampled,
            n_coalitions: 512,
        }
    }
}

impl AttributionConfig {
    pub fn estimator(&self) -> Estimator {
        match self.estimator {
            EstimatorChoice::Exact => Estimator::Exact,
            EstimatorChoice::Sampled => Estimator::Sampled {
                n_coalitions: self.n_coalitions,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub alpha: f64,
    pub mode: GraphMode,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            alpha: DEFAULT_ALPHA,
            mode: GraphMode::Signed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub bootstrap_iterations: usize,
    pub folds: usize,
    pub test_fraction: f64,
    pub hoist_grid_search: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let s = SplitSpec::default();
        EvaluationConfig {
            bootstrap_iterations: s.bootstrap_iterations,
            folds: s.folds,
            test_fraction: s.test_fraction,
            hoist_grid_search: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub preprocess: PreprocessConfig,
    pub select: SelectConfig,
    pub models: ModelsConfig,
    pub attribution: AttributionConfig,
    pub graph: GraphConfig,
    pub evaluation: EvaluationConfig,
    pub base_seed: u64,
}

impl PipelineConfig {
    /// Parses a config file. Relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.paths.input, &mut cfg.paths.schema, &mut cfg.paths.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preprocess.k_impute == 0 {
            return Err(Error::Config("k_impute must be positive".into()));
        }
        if self.select.bins < 2 {
            return Err(Error::Config("bins must be at least 2".into()));
        }
        if self.models.kinds.is_empty() {
            return Err(Error::Config("models.kinds is empty".into()));
        }
        self.models.plans()?;
        if self.attribution.top_n == 0 || self.attribution.background_size == 0 {
            return Err(Error::Config("top_n and background_size must be positive".into()));
        }
        SelectionConfig {
            top_n: self.attribution.top_n,
            exclusion_patterns: self.attribution.exclusion_patterns.clone(),
        }
        .compile_patterns()?;
        crate::graph::check_alpha(self.graph.alpha)?;
        self.split_spec().validate()
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_fraction: self.evaluation.test_fraction,
            folds: self.evaluation.folds,
            bootstrap_iterations: self.evaluation.bootstrap_iterations,
            base_seed: self.base_seed,
        }
    }

    /// Settings sized for the bundled demo cohort.
    pub fn demo() -> Self {
        PipelineConfig {
            select: SelectConfig {
                mrmr_m: Some(10),
                ..SelectConfig::default()
            },
            attribution: AttributionConfig {
                top_n: 8,
                exclusion_patterns: vec!["^APOE".into()],
                background_size: 20,
                estimator: EstimatorChoice::Sampled,
                n_coalitions: 64,
            },
            evaluation: EvaluationConfig {
                bootstrap_iterations: 4,
                ..EvaluationConfig::default()
            },
            base_seed: 7,
            ..PipelineConfig::default()
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub base_seed: u64,
    /// Checksums of the input CSV and schema.
    pub inputs: BTreeMap<String, String>,
    /// Stage name to the sorted output files it produced.
    pub stages: Vec<(String, Vec<String>)>,
    /// Output file name to its SHA-256.
    pub checksums: BTreeMap<String, String>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

struct Outputs {
    partial: PathBuf,
    stages: Vec<(String, Vec<String>)>,
}

impl Outputs {
    fn path(&self, name: &str) -> PathBuf {
        self.partial.join(name)
    }

    fn record(&mut self, stage: &str, mut files: Vec<String>) {
        files.sort();
        self.stages.push((stage.to_string(), files));
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(value)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => Error::Stage {
            stage: name.to_string(),
            iteration: None,
            source: Box::new(e),
        },
        other => other.in_stage(name, None),
    })
}

/// Result of a successful run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output: PathBuf,
    pub manifest: Manifest,
    pub pool: Vec<String>,
    pub component_sizes: BTreeMap<String, Vec<usize>>,
}

/// Runs every stage with a dedicated pool of `jobs` worker threads.
pub fn run_pipeline(cfg: &PipelineConfig, jobs: usize) -> Result<RunSummary> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| run_stages(cfg))
}

fn run_stages(cfg: &PipelineConfig) -> Result<RunSummary> {
    let out_dir = cfg.paths.output.clone();
    let partial = out_dir.join("partial");
    if partial.exists() {
        std::fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    }
    std::fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
    let mut out = Outputs {
        partial: partial.clone(),
        stages: Vec::new(),
    };

    info!("preprocess: reading {}", cfg.paths.input.display());
    let matrix = stage("preprocess", load_matrix(cfg))?;
    matrix.write_snapshot(&out.path("matrix.csv"), Some(&out.path("normalization.json")))?;
    out.record("preprocess", vec!["matrix.csv".into(), "normalization.json".into()]);

    if let Some(m) = cfg.select.mrmr_m {
        info!("select: mRMR ranking of {m} features");
        let opts = MrmrOptions {
            bins: cfg.select.bins,
            redundancy: cfg.select.redundancy,
        };
        let result = stage("select", mrmr_select(&matrix, m.min(matrix.n_features()), &opts))?;
        write_mrmr_report(&result, &matrix.feature_names, &out.path("mrmr.json"), &out.path("mrmr.csv"))?;
        out.record("select", vec!["mrmr.json".into(), "mrmr.csv".into()]);
    }

    let confounds = stage("confound_anova", confound_anova(&matrix, &cfg.attribution.exclusion_patterns))?;
    out.json("confound_anova.json", &confounds)?;
    out.record("confound_anova", vec!["confound_anova.json".into()]);

    info!(
        "evaluation: {} bootstrap iterations over {} model kinds",
        cfg.evaluation.bootstrap_iterations,
        cfg.models.kinds.len()
    );
    let plans = cfg.models.plans()?;
    let opts = BootstrapOptions {
        hoist_grid_search: cfg.evaluation.hoist_grid_search,
        attribution: Some(AttributionOptions {
            background_size: cfg.attribution.background_size,
            estimator: cfg.attribution.estimator(),
        }),
    };
    let outcome = stage("evaluation", bootstrap_run(&matrix, &plans, &cfg.split_spec(), &opts))?;
    write_metrics_csv(&outcome, &out.path("metrics.csv"))?;
    write_summary_json(&outcome, &out.path("summary.json"))?;
    out.record("evaluation", vec!["metrics.csv".into(), "summary.json".into()]);

    info!("attribution: pooling importances");
    let per_model: Vec<ImportanceAggregate> = stage(
        "attribution",
        cfg.models
            .kinds
            .iter()
            .map(|&k| aggregate_importance(&outcome.attributions_for(k)))
            .collect(),
    )?;
    let overall = stage("attribution", aggregate_importance(&outcome.attributions))?;
    let mut files = Vec::new();
    for agg in &per_model {
        let name = format!("importance_{}.csv", agg.label());
        agg.write_csv(&out.path(&name))?;
        files.push(name);
    }
    overall.write_csv(&out.path("importance_all.csv"))?;
    files.push("importance_all.csv".into());
    let selection = SelectionConfig {
        top_n: cfg.attribution.top_n.min(matrix.n_features()),
        exclusion_patterns: cfg.attribution.exclusion_patterns.clone(),
    };
    let pool = stage("attribution", select_pool(&per_model, &selection))?;
    out.json("pool.json", &pool)?;
    files.push("pool.json".into());
    out.record("attribution", files);

    info!("graph: {} pooled biomarkers at alpha {}", pool.pool.len(), cfg.graph.alpha);
    let component_sizes = stage("graph", write_graphs(cfg, &matrix, &pool.pool, &mut out))?;

    let manifest = finalize(cfg, out, &out_dir)?;
    Ok(RunSummary {
        output: out_dir,
        manifest,
        pool: pool.pool,
        component_sizes,
    })
}

fn load_matrix(cfg: &PipelineConfig) -> Result<BiomarkerMatrix> {
    let schema = read_schema(&cfg.paths.schema)?;
    let opts = ParseOptions {
        missing_tokens: cfg.preprocess.missing_tokens.clone(),
    };
    let table = parse_csv(&cfg.paths.input, &schema, &opts)?;
    preprocess(table, cfg.preprocess.k_impute)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfoundTest {
    pub feature: String,
    pub f_stat: f64,
    pub df_between: usize,
    pub df_within: usize,
    pub p_value: f64,
    pub significant_at_05: bool,
}

/// Case-versus-control ANOVA on every column matching an exclusion pattern.
pub fn confound_anova(matrix: &BiomarkerMatrix, patterns: &[String]) -> Result<Vec<ConfoundTest>> {
    let res = SelectionConfig {
        top_n: 1,
        exclusion_patterns: patterns.to_vec(),
    }
    .compile_patterns()?;
    let mut tests = Vec::new();
    for (j, name) in matrix.feature_names.iter().enumerate() {
        if !res.iter().any(|re| re.is_match(name)) {
            continue;
        }
        let col = matrix.column(j);
        let groups: Vec<Vec<f64>> = [1u8, 0u8]
            .iter()
            .map(|&g| col.iter().zip(&matrix.labels).filter(|(_, l)| **l == g).map(|(v, _)| *v).collect())
            .collect();
        let a = anova_oneway(&groups)?;
        tests.push(ConfoundTest {
            feature: name.clone(),
            f_stat: a.f_stat,
            df_between: a.df_between,
            df_within: a.df_within,
            p_value: a.p_value,
            significant_at_05: a.significant(0.05),
        });
    }
    Ok(tests)
}

#[derive(Serialize)]
struct ComponentReport {
    group: GroupTag,
    sizes: Vec<usize>,
    components: Vec<Vec<String>>,
}

fn write_graphs(
    cfg: &PipelineConfig,
    matrix: &BiomarkerMatrix,
    pool: &[String],
    out: &mut Outputs,
) -> Result<BTreeMap<String, Vec<usize>>> {
    let mut files = Vec::new();
    let mut graphs = BTreeMap::new();
    let mut components = Vec::new();
    let mut distribution_rows = Vec::new();
    for group in GroupTag::ALL {
        let rows = match group {
            GroupTag::Combined => matrix.clone(),
            GroupTag::Case => matrix.group(1),
            GroupTag::Control => matrix.group(0),
        };
        let corr = correlation_matrix(&rows, pool)?;
        let corr_name = format!("correlation_{}.csv", group.as_str());
        corr.write_csv(&out.path(&corr_name))?;
        files.push(corr_name);
        let g = prune_isolated(&build_graph(&corr, cfg.graph.alpha, cfg.graph.mode, group)?);
        for format in ExportFormat::ALL {
            let name = format!("graph_{}.{}", group.as_str(), format.extension());
            export(&g, format, &out.path(&name))?;
            files.push(name);
        }
        let cs = connected_components(&g);
        for (degree, count) in degree_distribution(&g) {
            distribution_rows.push([group.as_str().to_string(), degree.to_string(), count.to_string()]);
        }
        components.push(ComponentReport {
            group,
            sizes: cs.sizes.clone(),
            components: cs.names(&g),
        });
        graphs.insert(group, g);
    }
    let (case, control) = (&graphs[&GroupTag::Case], &graphs[&GroupTag::Control]);
    degree_table(case, control)?.write_csv(&out.path("degree_table.csv"))?;
    out.json("diff.json", &diff_graphs(case, control)?)?;
    out.json("components.json", &components)?;
    let path = out.path("degree_distribution.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["group", "degree", "count"])?;
    for row in &distribution_rows {
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    files.extend(["degree_table.csv", "diff.json", "components.json", "degree_distribution.csv"].map(String::from));
    out.record("graph", files);
    Ok(components.into_iter().map(|c| (c.group.as_str().to_string(), c.sizes)).collect())
}

fn finalize(cfg: &PipelineConfig, out: Outputs, out_dir: &Path) -> Result<Manifest> {
    let hash_file = |p: &Path| -> Result<String> { Ok(sha256_hex(&std::fs::read(p).map_err(|e| Error::io(p, e))?)) };
    let mut checksums = BTreeMap::new();
    for (_, files) in &out.stages {
        for f in files {
            checksums.insert(f.clone(), hash_file(&out.path(f))?);
        }
    }
    let inputs = BTreeMap::from([
        ("input".to_string(), hash_file(&cfg.paths.input)?),
        ("schema".to_string(), hash_file(&cfg.paths.schema)?),
    ]);
    let manifest = Manifest {
        config_sha256: sha256_hex(cfg.canonical_json().as_bytes()),
        base_seed: cfg.base_seed,
        inputs,
        stages: out.stages.clone(),
        checksums,
    };
    out.json("manifest.json", &manifest)?;
    for name in manifest.checksums.keys().map(String::as_str).chain(["manifest.json"]) {
        let (from, to) = (out.path(name), out_dir.join(name));
        std::fs::rename(&from, &to).map_err(|e| Error::io(&to, e))?;
    }
    std::fs::remove_dir(&out.partial).map_err(|e| Error::io(&out.partial, e))?;
    Ok(manifest)
}

/// Markdown summary of a finished output directory.
pub fn render_report(out_dir: &Path) -> Result<String> {
    let manifest = Manifest::load(&out_dir.join("manifest.json"))?;
    let read_json = |name: &str| -> Result<serde_json::Value> {
        let p = out_dir.join(name);
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        Ok(serde_json::from_str(&text)?)
    };
    let mut s = String::new();
    let _ = writeln!(s, "# Biomarker network report\n");
    let _ = writeln!(s, "- config sha256: `{}`", manifest.config_sha256);
    let _ = writeln!(s, "- base seed: {}", manifest.base_seed);
    for (k, v) in &manifest.inputs {
        let _ = writeln!(s, "- {k} sha256: `{v}`");
    }

    let summary = read_json("summary.json")?;
    let _ = writeln!(s, "\n## Bootstrap metrics (median [IQR])\n");
    let _ = writeln!(s, "| model | accuracy | micro_f1 | sensitivity | specificity | auc |");
    let _ = writeln!(s, "|---|---|---|---|---|---|");
    if let Some(models) = summary.as_object() {
        for (model, metrics) in models {
            let cell = |m: &str| {
                let med = metrics[m]["median"].as_f64();
                let iqr = metrics[m]["iqr"].as_f64();
                match (med, iqr) {
                    (Some(a), Some(b)) => format!("{a:.3} [{b:.3}]"),
                    _ => "n/a".into(),
                }
            };
            let _ = writeln!(
                s,
                "| {model} | {} | {} | {} | {} | {} |",
                cell("accuracy"),
                cell("micro_f1"),
                cell("sensitivity"),
                cell("specificity"),
                cell("auc")
            );
        }
    }

    let pool = read_json("pool.json")?;
    let names = |v: &serde_json::Value| -> Vec<String> {
        v.as_array()
            .map(|a| a.iter().filter_map(|x| x.as_str().map(String::from)).collect())
            .unwrap_or_default()
    };
    let _ = writeln!(s, "\n## Biomarker pool\n");
    let _ = writeln!(s, "{}", names(&pool["pool"]).join(", "));
    let excluded = names(&pool["excluded"]);
    if !excluded.is_empty() {
        let _ = writeln!(s, "\nExcluded by pattern: {}", excluded.join(", "));
    }

    let comps = read_json("components.json")?;
    let _ = writeln!(s, "\n## Graph components\n");
    for c in comps.as_array().into_iter().flatten() {
        let _ = writeln!(
            s,
            "- {}: sizes {}",
            c["group"].as_str().unwrap_or("?"),
            serde_json::to_string(&c["sizes"]).unwrap_or_default()
        );
    }
    let _ = writeln!(s, "\n## Output checksums\n");
    for (f, h) in &manifest.checksums {
        let _ = writeln!(s, "- `{f}` {h}");
    }
    Ok(s)
}
