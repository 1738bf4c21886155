//! Steps shared by the CLI and the service.

use crate::store::ModelSet;
use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use tarml_core::data::{
    kfold_split, normalize, parse_dataset, remove_outliers, Bounds, Dataset, FeatureSchema, OutlierPolicy,
    RemovalReport,
};
use tarml_core::metrics::{evaluate_cv_targets, EvalReport};
use tarml_core::regressors::{RegressorArtifact, RegressorConfig};
use tarml_core::shap::{explain, ShapExplanation};
use tarml_core::swarm::{mopso, MopsoParams, ParetoSolution, ParetoSummary, Sense};

/// Objective senses for the canonical targets: maximize conversion and H₂,
/// minimize CO, CO₂ and CH₄.
pub const TARGET_SENSES: [Sense; 5] = [
    Sense::Maximize,
    Sense::Maximize,
    Sense::Minimize,
    Sense::Minimize,
    Sense::Minimize,
];

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// Parses a canonical-schema data file.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = read_text(path)?;
    parse_dataset(&text, &FeatureSchema::canonical()).with_context(|| format!("{}", path.display()))
}

pub fn clean(data: &Dataset, policy: OutlierPolicy) -> Result<(Dataset, RemovalReport)> {
    Ok(remove_outliers(data, policy)?)
}

/// Cross-validates and fits one artifact per target on all rows.
///
/// `config` is shared by every target not listed in `overrides`. Returns one
/// report for the shared targets (when any remain) followed by one per override.
pub fn train_models(
    data: &Dataset,
    config: &RegressorConfig,
    overrides: &[(usize, RegressorConfig)],
    folds: usize,
    seed: u64,
) -> Result<(ModelSet, Vec<EvalReport>)> {
    let n_targets = data.schema().n_targets();
    let config_for = |t: usize| overrides.iter().find(|(i, _)| *i == t).map_or(config, |(_, c)| c);
    let (normalized, scaling) = normalize(data)?;
    let plan = kfold_split(normalized.len(), folds, seed)?;
    let shared: Vec<usize> = (0..n_targets).filter(|t| overrides.iter().all(|(i, _)| i != t)).collect();
    let mut reports = Vec::new();
    if !shared.is_empty() {
        reports.push(evaluate_cv_targets(config, &normalized, &plan, &shared)?);
    }
    for (t, c) in overrides {
        ensure!(*t < n_targets, "target index {t} out of range");
        reports.push(evaluate_cv_targets(c, &normalized, &plan, &[*t])?);
    }
    let artifacts = (0..n_targets)
        .map(|t| RegressorArtifact::fit(config_for(t), &normalized, &scaling, t, seed, Some(plan.describe())))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let models = ModelSet::new(data.schema().clone(), artifacts)?;
    Ok((models, reports))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeOutcome {
    pub feature_keys: Vec<String>,
    pub target_keys: Vec<String>,
    pub solutions: Vec<ParetoSolution>,
    pub summary: Option<ParetoSummary>,
    pub evaluations: usize,
}

/// MOPSO over the five model outputs inside `bounds` (training bounds by default).
pub fn optimize(models: &ModelSet, bounds: Option<Vec<Bounds>>, mut params: MopsoParams) -> Result<OptimizeOutcome> {
    params.pso.bounds = bounds.unwrap_or_else(|| models.feature_bounds());
    params.senses = TARGET_SENSES[..models.artifacts.len().min(5)].to_vec();
    let evaluations = params.pso.swarm_size * (params.pso.iterations + 1);
    let f = |x: &[f64]| -> Vec<f64> {
        models
            .artifacts
            .iter()
            .map(|a| a.predict(x).map_or(f64::NAN, |p| p.value))
            .collect()
    };
    let result = mopso(f, &params)?;
    Ok(OptimizeOutcome {
        feature_keys: models.schema.features.iter().map(|c| c.key.clone()).collect(),
        target_keys: models.schema.targets.iter().map(|c| c.key.clone()).collect(),
        summary: ParetoSummary::of(&result.solutions),
        solutions: result.solutions,
        evaluations,
    })
}

/// One explanation per target for an original-unit instance.
pub fn explain_all(models: &ModelSet, x: &[f64], permutations: Option<usize>, seed: u64) -> Result<Vec<ShapExplanation>> {
    models
        .artifacts
        .iter()
        .map(|a| explain(a, x, permutations, seed).map_err(Into::into))
        .collect()
}
