//! Hyperparameter search: PSO over a unit box decoded into model configurations.

use crate::data::{Bounds, Dataset, FoldPlan};
use crate::metrics::{evaluate_cv_targets, EvalReport, MetricsError};
use crate::regressors::{Activation, Family, Lengthscale, RegressorConfig, RegressorError};
use crate::swarm::{pso_minimize_with, PsoParams, SwarmError};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TuneError {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error(transparent)]
    Swarm(#[from] SwarmError),
    #[error("every evaluated configuration failed to train")]
    AllFailed,
}

pub type Result<T> = std::result::Result<T, TuneError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Choice(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Domain {
    /// `lo + p·(hi − lo)`.
    Continuous { lo: f64, hi: f64 },
    /// Continuous map rounded to the nearest integer.
    Integer { lo: i64, hi: i64 },
    /// `floor(p·m)`, capped at `m − 1`.
    Categorical { values: Vec<String> },
    Pinned { value: ParamValue },
}

impl Domain {
    fn is_pinned(&self) -> bool {
        matches!(self, Domain::Pinned { .. })
    }

    fn decode(&self, p: f64) -> ParamValue {
        let p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        match self {
            Domain::Continuous { lo, hi } => ParamValue::Number(lo + p * (hi - lo)),
            Domain::Integer { lo, hi } => ParamValue::Number((*lo as f64 + p * (hi - lo) as f64).round()),
            Domain::Categorical { values } => {
                let i = ((p * values.len() as f64).floor() as usize).min(values.len() - 1);
                ParamValue::Choice(values[i].clone())
            }
            Domain::Pinned { value } => value.clone(),
        }
    }

    fn encode(&self, v: &ParamValue) -> Option<f64> {
        match (self, v) {
            (Domain::Continuous { lo, hi }, ParamValue::Number(x)) => Some((x - lo) / (hi - lo)),
            (Domain::Integer { lo, hi }, ParamValue::Number(x)) => Some((x - *lo as f64) / (hi - lo) as f64),
            (Domain::Categorical { values }, ParamValue::Choice(c)) => {
                let i = values.iter().position(|v| v == c)?;
                Some((i as f64 + 0.5) / values.len() as f64)
            }
            _ => None,
        }
    }

    fn endpoints(&self) -> [ParamValue; 2] {
        [self.decode(0.0), self.decode(1.0)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub domain: Domain,
}

impl Dimension {
    pub fn new(name: &str, domain: Domain) -> Self {
        Self {
            name: name.into(),
            domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub family: Family,
    pub dimensions: Vec<Dimension>,
}

fn param_names(family: Family) -> &'static [&'static str] {
    match family {
        Family::LsBoost => &["max_splits", "min_leaf", "cycles", "learning_rate"],
        Family::Gpr => &["variance", "lengthscale", "noise"],
        Family::Mlp => &["hidden", "activation", "epochs", "step_size", "seed"],
    }
}

fn set_param(config: &mut RegressorConfig, name: &str, value: &ParamValue) -> std::result::Result<(), String> {
    let num = || match value {
        ParamValue::Number(x) if x.is_finite() => Ok(*x),
        _ => Err(format!("`{name}` needs a number")),
    };
    let count = || {
        let x = num()?;
        if x < 0.0 || x.fract() != 0.0 {
            return Err(format!("`{name}` needs a non-negative integer, got {x}"));
        }
        Ok(x as usize)
    };
    match (config, name) {
        (RegressorConfig::LsBoost(p), "max_splits") => p.max_splits = count()?,
        (RegressorConfig::LsBoost(p), "min_leaf") => p.min_leaf = count()?,
        (RegressorConfig::LsBoost(p), "cycles") => p.cycles = count()?,
        (RegressorConfig::LsBoost(p), "learning_rate") => p.learning_rate = num()?,
        (RegressorConfig::Gpr(p), "variance") => p.variance = num()?,
        (RegressorConfig::Gpr(p), "lengthscale") => p.lengthscale = Lengthscale::Shared(num()?),
        (RegressorConfig::Gpr(p), "noise") => p.noise = num()?,
        (RegressorConfig::Mlp(p), "hidden") => p.hidden = count()?,
        (RegressorConfig::Mlp(p), "epochs") => p.epochs = count()?,
        (RegressorConfig::Mlp(p), "seed") => p.seed = count()? as u64,
        (RegressorConfig::Mlp(p), "step_size") => p.step_size = num()?,
        (RegressorConfig::Mlp(p), "activation") => {
            let ParamValue::Choice(c) = value else {
                return Err("`activation` needs a name".into());
            };
            p.activation = c.parse::<Activation>().map_err(|e| e.to_string())?;
        }
        (c, other) => return Err(format!("`{other}` is not a {} hyperparameter", c.family())),
    }
    Ok(())
}

fn get_param(config: &RegressorConfig, name: &str) -> Option<ParamValue> {
    let n = |x: f64| Some(ParamValue::Number(x));
    match (config, name) {
        (RegressorConfig::LsBoost(p), "max_splits") => n(p.max_splits as f64),
        (RegressorConfig::LsBoost(p), "min_leaf") => n(p.min_leaf as f64),
        (RegressorConfig::LsBoost(p), "cycles") => n(p.cycles as f64),
        (RegressorConfig::LsBoost(p), "learning_rate") => n(p.learning_rate),
        (RegressorConfig::Gpr(p), "variance") => n(p.variance),
        (RegressorConfig::Gpr(p), "lengthscale") => match p.lengthscale {
            Lengthscale::Shared(l) => n(l),
            Lengthscale::PerDimension(_) => None,
        },
        (RegressorConfig::Gpr(p), "noise") => n(p.noise),
        (RegressorConfig::Mlp(p), "hidden") => n(p.hidden as f64),
        (RegressorConfig::Mlp(p), "epochs") => n(p.epochs as f64),
        (RegressorConfig::Mlp(p), "seed") => n(p.seed as f64),
        (RegressorConfig::Mlp(p), "step_size") => n(p.step_size),
        (RegressorConfig::Mlp(p), "activation") => Some(ParamValue::Choice(
            match p.activation {
                Activation::Tanh => "tanh",
                Activation::Logistic => "logistic",
            }
            .into(),
        )),
        _ => None,
    }
}

impl SearchSpace {
    /// Checks names and that both ends of every range decode to a valid configuration.
    pub fn new(family: Family, dimensions: Vec<Dimension>) -> Result<Self> {
        let bad = |m: String| Err(TuneError::InvalidSpace(m));
        if dimensions.is_empty() {
            return bad("no dimensions".into());
        }
        for (i, d) in dimensions.iter().enumerate() {
            if !param_names(family).contains(&d.name.as_str()) {
                return bad(format!("`{}` is not a {family} hyperparameter", d.name));
            }
            if dimensions[..i].iter().any(|e| e.name == d.name) {
                return bad(format!("`{}` listed twice", d.name));
            }
            match &d.domain {
                Domain::Continuous { lo, hi } if !(lo.is_finite() && hi.is_finite() && lo < hi) => {
                    return bad(format!("`{}`: range [{lo}, {hi}] is degenerate", d.name));
                }
                Domain::Integer { lo, hi } if lo >= hi => {
                    return bad(format!("`{}`: range [{lo}, {hi}] is degenerate", d.name));
                }
                Domain::Categorical { values } if values.len() < 2 => {
                    return bad(format!("`{}`: needs at least two choices", d.name));
                }
                _ => {}
            }
            for v in d.domain.endpoints() {
                let mut c = RegressorConfig::default_for(family);
                set_param(&mut c, &d.name, &v).map_err(TuneError::InvalidSpace)?;
                c.validate().map_err(|e| TuneError::InvalidSpace(format!("`{}`: {e}", d.name)))?;
            }
        }
        Ok(Self { family, dimensions })
    }

    /// Broad default ranges for each family.
    pub fn default_for(family: Family) -> Self {
        use Domain::*;
        let dims = match family {
            Family::LsBoost => vec![
                Dimension::new("max_splits", Integer { lo: 0, hi: 20 }),
                Dimension::new("min_leaf", Integer { lo: 1, hi: 20 }),
                Dimension::new("cycles", Integer { lo: 1, hi: 250 }),
                Dimension::new("learning_rate", Continuous { lo: 0.001, hi: 1.0 }),
            ],
            Family::Gpr => vec![
                Dimension::new("variance", Continuous { lo: 0.01, hi: 5.0 }),
                Dimension::new("lengthscale", Continuous { lo: 0.05, hi: 5.0 }),
                Dimension::new("noise", Continuous { lo: 1e-6, hi: 0.1 }),
            ],
            Family::Mlp => vec![
                Dimension::new("hidden", Integer { lo: 2, hi: 32 }),
                Dimension::new(
                    "activation",
                    Categorical {
                        values: vec!["tanh".into(), "logistic".into()],
                    },
                ),
                Dimension::new("epochs", Integer { lo: 200, hi: 3000 }),
                Dimension::new("step_size", Continuous { lo: 0.01, hi: 0.5 }),
            ],
        };
        Self::new(family, dims).expect("default space is valid")
    }

    /// Every hyperparameter of `config` pinned.
    pub fn pinned(config: &RegressorConfig) -> Self {
        let family = config.family();
        let dimensions = param_names(family)
            .iter()
            .filter_map(|name| {
                get_param(config, name).map(|value| Dimension::new(name, Domain::Pinned { value }))
            })
            .collect();
        Self { family, dimensions }
    }

    /// Number of free (non-pinned) dimensions.
    pub fn active_dims(&self) -> usize {
        self.dimensions.iter().filter(|d| !d.domain.is_pinned()).count()
    }

    /// Maps one coordinate per free dimension (clamped to [0, 1]) onto a configuration.
    /// Parameters not listed keep their family defaults.
    pub fn decode(&self, point: &[f64]) -> RegressorConfig {
        let mut config = RegressorConfig::default_for(self.family);
        let mut coords = point.iter();
        for d in &self.dimensions {
            let p = if d.domain.is_pinned() {
                0.0
            } else {
                coords.next().copied().unwrap_or(0.0)
            };
            set_param(&mut config, &d.name, &d.domain.decode(p)).expect("validated space");
        }
        config
    }

    /// Inverse of [`decode`](Self::decode) for configurations inside the space.
    pub fn encode(&self, config: &RegressorConfig) -> Option<Vec<f64>> {
        if config.family() != self.family {
            return None;
        }
        self.dimensions
            .iter()
            .filter(|d| !d.domain.is_pinned())
            .map(|d| d.domain.encode(&get_param(config, &d.name)?))
            .collect()
    }
}

/// One candidate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub config: String,
    /// Mean test RMSE; infinite when training failed.
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: RegressorConfig,
    pub best_objective: f64,
    pub report: EvalReport,
    pub trace: Vec<TraceEntry>,
}

impl TuneResult {
    /// `iteration objective config`, tab separated.
    pub fn trace_text(&self) -> String {
        let mut out = String::from("iteration\tobjective\tconfig\n");
        for e in &self.trace {
            let _ = writeln!(out, "{}\t{}\t{}", e.iteration, e.objective, e.config);
        }
        out
    }
}

type Cached = Option<(f64, EvalReport)>;

struct Evaluator<'a> {
    data: &'a Dataset,
    plan: &'a FoldPlan,
    targets: &'a [usize],
    cache: Mutex<HashMap<String, Cached>>,
}

impl Evaluator<'_> {
    fn score(&self, config: &RegressorConfig) -> Cached {
        let key = config.to_text();
        if let Some(hit) = self.cache.lock().get(&key) {
            return hit.clone();
        }
        let result = match evaluate_cv_targets(config, self.data, self.plan, self.targets) {
            Ok(report) => Some((report.mean_test_rmse(), report)),
            Err(e) => {
                log_failure(&key, &e);
                None
            }
        };
        self.cache.lock().entry(key).or_insert(result).clone()
    }

    fn objective(&self, config: &RegressorConfig) -> f64 {
        self.score(config).map_or(f64::INFINITY, |(v, _)| v)
    }
}

fn log_failure(key: &str, e: &MetricsError) {
    if let MetricsError::Training {
        source: RegressorError::Diverged { .. },
        ..
    } = e
    {
        log::debug!("candidate {key} diverged: {e}");
        return;
    }
    log::warn!("candidate {key} failed: {e}");
}

/// Minimizes mean cross-validated test RMSE over `targets` (indices into the
/// dataset's targets) with PSO on the unit box of the free dimensions.
///
/// `pso` supplies swarm size, iterations, coefficients and seed; its bounds are
/// replaced. Failed trainings score +∞ in the trace and never stop the search.
pub fn tune(
    space: &SearchSpace,
    data: &Dataset,
    plan: &FoldPlan,
    targets: &[usize],
    pso: &PsoParams,
) -> Result<TuneResult> {
    if targets.is_empty() || targets.iter().any(|&t| t >= data.schema().n_targets()) {
        return Err(TuneError::InvalidSpace("target selection out of range".into()));
    }
    let eval = Evaluator {
        data,
        plan,
        targets,
        cache: Mutex::new(HashMap::new()),
    };
    let mut trace = Vec::new();
    let best = if space.active_dims() == 0 {
        let config = space.decode(&[]);
        trace.push(TraceEntry {
            iteration: 0,
            config: config.to_text(),
            objective: eval.objective(&config),
        });
        config
    } else {
        let mut params = pso.clone();
        params.bounds = vec![Bounds::new(0.0, 1.0); space.active_dims()];
        // The swarm needs finite values; failures sort last.
        let f = |p: &[f64]| {
            let v = eval.objective(&space.decode(p));
            if v.is_finite() {
                v
            } else {
                f64::MAX
            }
        };
        let result = pso_minimize_with(f, &params, None, |view| {
            for (x, &v) in view.positions.iter().zip(view.values) {
                trace.push(TraceEntry {
                    iteration: view.iteration,
                    config: space.decode(x).to_text(),
                    objective: if v == f64::MAX { f64::INFINITY } else { v },
                });
            }
        })?;
        space.decode(&result.best_position)
    };
    let (best_objective, report) = eval.score(&best).ok_or(TuneError::AllFailed)?;
    Ok(TuneResult {
        best,
        best_objective,
        report,
        trace,
    })
}
