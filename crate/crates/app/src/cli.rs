//! Command-line interface.

use crate::pipeline::{self, read_text, write_text};
use crate::service::{self, AppState};
use crate::store::ModelSet;
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use tarml_core::data::{kfold_split, normalize, write_dataset, Bounds, Dataset, OutlierPolicy};
use tarml_core::metrics::{evaluate_cv, EvalReport};
use tarml_core::regressors::{subsample, Family, RegressorConfig};
use tarml_core::shap::summarize;
use tarml_core::stats::{kde2d, pca, response_surface, spearman_matrix, GridSpec};
use tarml_core::swarm::{pareto_csv, MopsoParams, PsoParams};
use tarml_core::synth::synthetic_dataset;
use tarml_core::tuner::{tune, SearchSpace};
use tarml_core::xrd::{analyze_curve, parse_curve, parse_windows, XrdConstants};

#[derive(Debug, Parser)]
#[command(name = "tarml", version, about = "Catalytic tar reforming: data, models, optimization and explanations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a data file, drop outlier rows and write the cleaned table.
    Ingest(IngestArgs),
    /// Fit diffraction peaks and report crystal size and crystallinity index.
    Xrd(XrdArgs),
    /// Cross-validate a model family and save one artifact per target.
    Train(TrainArgs),
    /// Search hyperparameters with PSO on cross-validated test RMSE.
    Tune(TuneArgs),
    /// Cross-validate a configuration without saving models.
    Evaluate(EvaluateArgs),
    /// Multi-objective search for operating points over saved models.
    Optimize(OptimizeArgs),
    /// Shapley attributions for rows of a data file.
    Explain(ExplainArgs),
    /// Rank correlations, PCA, density grids and response surfaces.
    Stats(StatsArgs),
    /// Write a seeded synthetic data file on the canonical schema.
    Synth(SynthArgs),
    /// Serve predictions, explanations and optimization over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Comma-separated data file with the 16 canonical column names.
    #[arg(long)]
    pub data: PathBuf,
    /// Outlier policy on target columns: none, iqr[:k] or zscore[:t].
    #[arg(long, default_value = "iqr:1.5")]
    pub outliers: String,
}

impl DataArgs {
    fn load(&self) -> Result<(Dataset, String)> {
        let policy: OutlierPolicy = self.outliers.parse()?;
        let raw = pipeline::load_dataset(&self.data)?;
        let (clean, report) = pipeline::clean(&raw, policy)?;
        if !report.is_empty() {
            log::info!("{} of {} rows removed as outliers", raw.len() - clean.len(), raw.len());
        }
        Ok((clean, report.to_string()))
    }
}

#[derive(Debug, Args)]
pub struct ModelChoice {
    /// Model family: lsboost, gpr or mlp.
    #[arg(long, default_value = "lsboost")]
    pub family: Family,
    /// Configuration file (JSON, as written by `tune`); overrides --family.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl ModelChoice {
    fn resolve(&self) -> Result<RegressorConfig> {
        match &self.config {
            Some(path) => read_config(path),
            None => Ok(RegressorConfig::default_for(self.family)),
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Cleaned data file.
    #[arg(long)]
    pub out: PathBuf,
    /// Removal report file.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct XrdArgs {
    /// Two-column diffractogram: 2θ (degrees), intensity.
    #[arg(long)]
    pub curve: PathBuf,
    /// Peak windows: `lo hi label` per line.
    #[arg(long)]
    pub windows: PathBuf,
    /// Report file; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = XrdConstants::default().shape_factor)]
    pub shape_factor: f64,
    /// Wavelength in nm.
    #[arg(long, default_value_t = XrdConstants::default().wavelength_nm)]
    pub wavelength: f64,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelChoice,
    #[command(flatten)]
    pub cv: CvArgs,
    /// Configuration for one target, `key=path`; repeatable. Other targets use
    /// --config or --family.
    #[arg(long = "target-config")]
    pub target_configs: Vec<String>,
    /// Model directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "lsboost")]
    pub family: Family,
    /// Search space file (JSON); family defaults when absent.
    #[arg(long)]
    pub space: Option<PathBuf>,
    #[command(flatten)]
    pub cv: CvArgs,
    #[arg(long, default_value_t = 10)]
    pub swarm: usize,
    #[arg(long, default_value_t = 10)]
    pub iterations: usize,
    /// Tune on one target (key or column name) instead of all.
    #[arg(long)]
    pub target: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelChoice,
    #[command(flatten)]
    pub cv: CvArgs,
    /// Output directory for the report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Model directory written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 40)]
    pub swarm: usize,
    #[arg(long, default_value_t = 500)]
    pub iterations: usize,
    #[arg(long, default_value_t = 100)]
    pub archive: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Override a feature's search range: `key=min:max`. Repeatable.
    #[arg(long = "bound")]
    pub bounds: Vec<String>,
    /// Pareto table; a `.json` summary is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Rows to explain (original units).
    #[arg(long)]
    pub data: PathBuf,
    /// Explain at most this many rows (seeded subsample).
    #[arg(long, default_value_t = 200)]
    pub rows: usize,
    /// Permutations for non-tree models.
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Use the covariance of raw columns instead of correlations.
    #[arg(long)]
    pub no_standardize: bool,
    /// Density grid for a column pair `x:y` (keys). Repeatable; defaults to
    /// reaction temperature against each target.
    #[arg(long = "pair")]
    pub pairs: Vec<String>,
    /// Response surfaces `a:b` over two features; needs --model.
    #[arg(long = "surface")]
    pub surfaces: Vec<String>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Grid points per axis.
    #[arg(long, default_value_t = 50)]
    pub grid: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 600)]
    pub rows: usize,
    /// Noise standard deviation as a fraction of each target's range.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, env = "TARML_BIND", default_value = "127.0.0.1:8080")]
    pub bind: String,
    /// Maximum model evaluations per optimize request.
    #[arg(long, default_value_t = service::DEFAULT_OPTIMIZE_BUDGET)]
    pub budget: usize,
}

fn write_report(dir: &Path, report: &EvalReport) -> Result<()> {
    write_named_report(dir, "", report)
}

fn write_named_report(dir: &Path, suffix: &str, report: &EvalReport) -> Result<()> {
    write_text(&dir.join(format!("eval{suffix}.json")), &report.to_json())?;
    write_text(&dir.join(format!("eval{suffix}.txt")), &report.to_table())?;
    write_text(&dir.join(format!("fold_scores{suffix}.csv")), &report.fold_scores_csv())
}

fn read_config(path: &Path) -> Result<RegressorConfig> {
    RegressorConfig::from_text(&read_text(path)?).with_context(|| format!("{}", path.display()))
}

fn column_index(data: &Dataset, key: &str) -> Result<usize> {
    let s = data.schema();
    s.feature_index(key)
        .or_else(|| s.target_index(key).map(|t| s.n_features() + t))
        .ok_or_else(|| anyhow!("unknown column `{key}`"))
}

fn split_pair(s: &str) -> Result<(&str, &str)> {
    s.split_once(':').ok_or_else(|| anyhow!("expected `a:b`, got `{s}`"))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(a) => {
            let (clean, removed) = a.data.load()?;
            write_text(&a.out, &write_dataset(&clean))?;
            match &a.report {
                Some(path) => write_text(path, &removed)?,
                None => print!("{removed}"),
            }
            println!("{} rows written to {}", clean.len(), a.out.display());
        }
        Command::Xrd(a) => {
            let curve = parse_curve(&read_text(&a.curve)?).with_context(|| format!("{}", a.curve.display()))?;
            let windows =
                parse_windows(&read_text(&a.windows)?).with_context(|| format!("{}", a.windows.display()))?;
            let constants = XrdConstants {
                shape_factor: a.shape_factor,
                wavelength_nm: a.wavelength,
            };
            let text = analyze_curve(&curve, &windows, constants)?.to_text();
            match &a.out {
                Some(path) => write_text(path, &text)?,
                None => print!("{text}"),
            }
        }
        Command::Train(a) => {
            let (data, removed) = a.data.load()?;
            let config = a.model.resolve()?;
            let mut overrides = Vec::new();
            for spec in &a.target_configs {
                let (key, path) = spec
                    .split_once('=')
                    .ok_or_else(|| anyhow!("--target-config expects key=path, got `{spec}`"))?;
                let t = data.schema().target_index(key).ok_or_else(|| anyhow!("unknown target `{key}`"))?;
                if overrides.iter().any(|(i, _)| *i == t) {
                    bail!("target `{key}` configured more than once");
                }
                overrides.push((t, read_config(Path::new(path))?));
            }
            let (models, reports) = pipeline::train_models(&data, &config, &overrides, a.cv.folds, a.cv.seed)?;
            models.save(&a.out)?;
            let shared = reports.len() - overrides.len();
            for (i, report) in reports.iter().enumerate() {
                let suffix = match i.checked_sub(shared) {
                    None => String::new(),
                    Some(o) => format!("_{}", data.schema().targets[overrides[o].0].key),
                };
                write_named_report(&a.out, &suffix, report)?;
                print!("{}", report.to_table());
            }
            if !removed.is_empty() {
                write_text(&a.out.join("removed.txt"), &removed)?;
            }
        }
        Command::Tune(a) => {
            let (data, _) = a.data.load()?;
            let space = match &a.space {
                Some(path) => {
                    let s: SearchSpace = serde_json::from_str(&read_text(path)?)
                        .with_context(|| format!("{}", path.display()))?;
                    SearchSpace::new(s.family, s.dimensions)?
                }
                None => SearchSpace::default_for(a.family),
            };
            let (normalized, _) = normalize(&data)?;
            let plan = kfold_split(normalized.len(), a.cv.folds, a.cv.seed)?;
            let targets: Vec<usize> = match &a.target {
                Some(key) => vec![data
                    .schema()
                    .target_index(key)
                    .ok_or_else(|| anyhow!("unknown target `{key}`"))?],
                None => (0..data.schema().n_targets()).collect(),
            };
            let mut pso = PsoParams::new(vec![]);
            pso.swarm_size = a.swarm;
            pso.iterations = a.iterations;
            pso.seed = a.cv.seed;
            let result = tune(&space, &normalized, &plan, &targets, &pso)?;
            write_text(&a.out.join("best_config.json"), &result.best.to_text())?;
            write_text(&a.out.join("tune_trace.tsv"), &result.trace_text())?;
            write_report(&a.out, &result.report)?;
            println!("best mean test RMSE (normalized): {}", result.best_objective);
            println!("{}", result.best.to_text());
        }
        Command::Evaluate(a) => {
            let (data, _) = a.data.load()?;
            let config = a.model.resolve()?;
            let (normalized, _) = normalize(&data)?;
            let plan = kfold_split(normalized.len(), a.cv.folds, a.cv.seed)?;
            let report = evaluate_cv(&config, &normalized, &plan)?;
            if let Some(dir) = &a.out {
                write_report(dir, &report)?;
            }
            print!("{}", report.to_table());
        }
        Command::Optimize(a) => {
            let models = ModelSet::load(&a.model)?;
            let mut bounds = models.feature_bounds();
            for spec in &a.bounds {
                let (key, range) = spec
                    .split_once('=')
                    .ok_or_else(|| anyhow!("--bound expects key=min:max, got `{spec}`"))?;
                let j = models
                    .schema
                    .feature_index(key)
                    .ok_or_else(|| anyhow!("unknown feature `{key}`"))?;
                let (lo, hi) = split_pair(range)?;
                bounds[j] = Bounds::new(lo.trim().parse()?, hi.trim().parse()?);
            }
            let mut params = MopsoParams::new(vec![], vec![]);
            params.pso.swarm_size = a.swarm;
            params.pso.iterations = a.iterations;
            params.pso.seed = a.seed;
            params.archive_capacity = a.archive;
            let outcome = pipeline::optimize(&models, Some(bounds), params)?;
            let names = |cols: &[tarml_core::data::ColumnSpec]| cols.iter().map(|c| c.name.clone()).collect::<Vec<_>>();
            write_text(
                &a.out,
                &pareto_csv(&outcome.solutions, &names(&models.schema.features), &names(&models.schema.targets)),
            )?;
            write_text(
                &a.out.with_extension("json"),
                &serde_json::to_string_pretty(&outcome).expect("outcome serializes"),
            )?;
            println!("{} Pareto solutions written to {}", outcome.solutions.len(), a.out.display());
        }
        Command::Explain(a) => {
            let models = ModelSet::load(&a.model)?;
            let data = pipeline::load_dataset(&a.data)?;
            let rows = subsample(&data.feature_matrix(), a.rows, a.seed);
            let names: Vec<String> = models.schema.features.iter().map(|c| c.name.clone()).collect();
            for art in &models.artifacts {
                let explanations = rows
                    .iter()
                    .map(|x| tarml_core::shap::explain(art, x, a.permutations, a.seed))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                let mut table = String::from("row,feature,value,shap\n");
                for (i, e) in explanations.iter().enumerate() {
                    for line in e.to_csv(&names).lines().skip(1) {
                        table.push_str(&format!("{i},{line}\n"));
                    }
                }
                let key = &art.target.key;
                let summary = summarize(&explanations, &models.schema)?;
                write_text(&a.out.join(format!("shap_{key}.csv")), &table)?;
                write_text(&a.out.join(format!("shap_{key}_ranking.csv")), &summary.ranking_csv())?;
                write_text(&a.out.join(format!("shap_{key}_groups.csv")), &summary.groups_csv())?;
                let pct = |p: Option<f64>| p.map_or("n/a".to_string(), |v| format!("{v:.1}%"));
                println!(
                    "{}: operating {} / catalyst {}",
                    art.target.name,
                    pct(summary.operating_pct),
                    pct(summary.catalyst_pct)
                );
            }
        }
        Command::Stats(a) => {
            let (data, _) = a.data.load()?;
            write_text(&a.out.join("spearman.csv"), &spearman_matrix(&data)?.to_csv())?;
            let p = pca(&data, !a.no_standardize)?;
            write_text(&a.out.join("pca.csv"), &p.to_csv())?;
            let mut scores = String::from("row,PC1,PC2,PC3\n");
            for (i, s) in p.scores.iter().enumerate() {
                let cells: Vec<String> = s.iter().map(f64::to_string).collect();
                scores.push_str(&format!("{i},{}\n", cells.join(",")));
            }
            write_text(&a.out.join("pca_scores.csv"), &scores)?;
            let schema = data.schema().clone();
            let pairs: Vec<(String, String)> = if a.pairs.is_empty() {
                schema
                    .targets
                    .iter()
                    .map(|t| ("reaction_temperature".to_string(), t.key.clone()))
                    .collect()
            } else {
                a.pairs
                    .iter()
                    .map(|s| split_pair(s).map(|(x, y)| (x.to_string(), y.to_string())))
                    .collect::<Result<_>>()?
            };
            let spec = GridSpec {
                nx: a.grid,
                ny: a.grid,
                ..GridSpec::default()
            };
            let cols: Vec<_> = schema.columns().cloned().collect();
            for (x, y) in &pairs {
                let (i, j) = (column_index(&data, x)?, column_index(&data, y)?);
                let k = kde2d(&cols[i].name, &data.column(i), &cols[j].name, &data.column(j), &spec)?;
                let file = format!("kde_{}_{}.csv", cols[i].key, cols[j].key);
                write_text(&a.out.join(file), &k.grid.to_csv("density"))?;
            }
            if !a.surfaces.is_empty() {
                let dir = a.model.as_ref().ok_or_else(|| anyhow!("--surface needs --model"))?;
                let models = ModelSet::load(dir)?;
                let medians = data.feature_medians();
                let bounds = models.feature_bounds();
                for s in &a.surfaces {
                    let (x, y) = split_pair(s)?;
                    let fi = schema.feature_index(x).ok_or_else(|| anyhow!("unknown feature `{x}`"))?;
                    let fj = schema.feature_index(y).ok_or_else(|| anyhow!("unknown feature `{y}`"))?;
                    for art in &models.artifacts {
                        let g = response_surface(
                            |r| art.predict(r).map_or(f64::NAN, |p| p.value),
                            &medians,
                            (fi, &cols[fi].name, (bounds[fi].min, bounds[fi].max)),
                            (fj, &cols[fj].name, (bounds[fj].min, bounds[fj].max)),
                            a.grid,
                        )?;
                        let file = format!("surface_{}_{}_{}.csv", art.target.key, cols[fi].key, cols[fj].key);
                        write_text(&a.out.join(file), &g.to_csv(&art.target.name))?;
                    }
                }
            }
            println!("statistics written to {}", a.out.display());
        }
        Command::Synth(a) => {
            if a.rows < 2 {
                bail!("--rows must be at least 2");
            }
            write_text(&a.out, &write_dataset(&synthetic_dataset(a.rows, a.noise, a.seed)))?;
            println!("{} rows written to {}", a.rows, a.out.display());
        }
        Command::Serve(a) => {
            let models = ModelSet::load(&a.model)?;
            let state = Arc::new(AppState::new(models, Some(a.model.clone())).with_budget(a.budget));
            let rt = tokio::runtime::Runtime::new().context("cannot start runtime")?;
            rt.block_on(service::serve(state, &a.bind))?;
        }
    }
    Ok(())
}
