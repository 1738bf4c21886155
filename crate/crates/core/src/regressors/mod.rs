//! Regression models behind one contract: least-squares boosted trees, Gaussian
//! process regression and a one-hidden-layer perceptron.
//!
//! Models are fit in normalized `[0, 1]` space, one per target. A
//! [`RegressorArtifact`] wraps a fitted model with the [`ScalingSpec`] it was
//! trained under, so callers predict in original units.

mod gpr;
mod mlp;
mod tree;

pub use gpr::GprModel;
pub use mlp::MlpModel;
pub use tree::{fit_tree, RegressionTree, TreeEnsemble, TreeNode};

use crate::data::{ColumnSpec, DataError, Dataset, ScalingSpec};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub const ARTIFACT_VERSION: &str = "v1";
/// Upper bound on background rows kept inside an artifact for explanations.
pub const BACKGROUND_CAP: usize = 256;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressorError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {need} training rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("non-finite training data: {0}")]
    NonFinite(String),
    #[error("training diverged (non-finite loss) with step size {step_size}")]
    Diverged { step_size: f64 },
    #[error("kernel matrix solve failed: {0}")]
    SolveFailed(String),
    #[error("expected {expected} input values, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("input is not finite")]
    NonFiniteInput,
    #[error("schema fingerprint mismatch: artifact {artifact}, caller {caller}")]
    FingerprintMismatch { artifact: String, caller: String },
    #[error("empty artifact stream")]
    EmptyStream,
    #[error("corrupt artifact: {0}")]
    Corrupt(String),
    #[error("unsupported artifact version {found:?} (expected \"{ARTIFACT_VERSION}\")")]
    VersionMismatch { found: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, RegressorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    LsBoost,
    Gpr,
    Mlp,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::LsBoost => "lsboost",
            Family::Gpr => "gpr",
            Family::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = RegressorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lsboost" => Ok(Family::LsBoost),
            "gpr" => Ok(Family::Gpr),
            "mlp" => Ok(Family::Mlp),
            other => Err(RegressorError::InvalidConfig(format!(
                "unknown family {other:?} (expected lsboost, gpr or mlp)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsBoostParams {
    /// Maximum decision splits per tree; 0 gives single-leaf trees.
    pub max_splits: usize,
    /// Minimum training rows per leaf.
    pub min_leaf: usize,
    pub cycles: usize,
    pub learning_rate: f64,
}

impl Default for LsBoostParams {
    /// 6 splits, 5 rows per leaf, 250 cycles, rate 0.295.
    fn default() -> Self {
        Self {
            max_splits: 6,
            min_leaf: 5,
            cycles: 250,
            learning_rate: 0.295,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lengthscale {
    Shared(f64),
    PerDimension(Vec<f64>),
}

impl Lengthscale {
    fn expand(&self, dims: usize) -> Result<Vec<f64>> {
        match self {
            Lengthscale::Shared(l) => Ok(vec![*l; dims]),
            Lengthscale::PerDimension(v) if v.len() == dims => Ok(v.clone()),
            Lengthscale::PerDimension(v) => Err(RegressorError::InvalidConfig(format!(
                "{} lengthscales for {dims} input dimensions",
                v.len()
            ))),
        }
    }
}

/// Squared-exponential kernel `variance · exp(−Σ (a−b)² / (2ℓ²))` plus `noise` on the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprParams {
    pub variance: f64,
    pub lengthscale: Lengthscale,
    pub noise: f64,
}

impl Default for GprParams {
    fn default() -> Self {
        Self {
            variance: 1.0,
            lengthscale: Lengthscale::Shared(0.5),
            noise: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Logistic,
}

impl FromStr for Activation {
    type Err = RegressorError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "logistic" => Ok(Activation::Logistic),
            other => Err(RegressorError::InvalidConfig(format!("unknown activation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: 16,
            activation: Activation::Tanh,
            epochs: 3000,
            step_size: 0.2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum RegressorConfig {
    LsBoost(LsBoostParams),
    Gpr(GprParams),
    Mlp(MlpParams),
}

impl RegressorConfig {
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::LsBoost => RegressorConfig::LsBoost(LsBoostParams::default()),
            Family::Gpr => RegressorConfig::Gpr(GprParams::default()),
            Family::Mlp => RegressorConfig::Mlp(MlpParams::default()),
        }
    }

    pub fn family(&self) -> Family {
        match self {
            RegressorConfig::LsBoost(_) => Family::LsBoost,
            RegressorConfig::Gpr(_) => Family::Gpr,
            RegressorConfig::Mlp(_) => Family::Mlp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(RegressorError::InvalidConfig(m));
        match self {
            RegressorConfig::LsBoost(p) => {
                if p.min_leaf == 0 || p.cycles == 0 {
                    return bad("min_leaf and cycles must be at least 1".into());
                }
                if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) {
                    return bad(format!("learning rate {} outside (0, 1]", p.learning_rate));
                }
            }
            RegressorConfig::Gpr(p) => {
                let ls_ok = match &p.lengthscale {
                    Lengthscale::Shared(l) => *l > 0.0,
                    Lengthscale::PerDimension(v) => !v.is_empty() && v.iter().all(|l| *l > 0.0),
                };
                if !(p.variance > 0.0 && p.noise > 0.0 && ls_ok) {
                    return bad("variance, noise and lengthscales must be positive".into());
                }
            }
            RegressorConfig::Mlp(p) => {
                if p.hidden == 0 || p.epochs == 0 {
                    return bad("hidden width and epochs must be at least 1".into());
                }
                if !(p.step_size > 0.0 && p.step_size.is_finite()) {
                    return bad(format!("step size {} must be positive", p.step_size));
                }
            }
        }
        Ok(())
    }

    /// Compact text form, also used as a cache key.
    pub fn to_text(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text).map_err(|e| RegressorError::InvalidConfig(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FittedModel {
    LsBoost(TreeEnsemble),
    Gpr(GprModel),
    Mlp(MlpModel),
}

impl FittedModel {
    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::LsBoost(m) => m.n_features,
            FittedModel::Gpr(m) => m.n_features(),
            FittedModel::Mlp(m) => m.n_inputs,
        }
    }

    /// Prediction in normalized space.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::LsBoost(m) => m.predict(x),
            FittedModel::Gpr(m) => m.predict_mean(x),
            FittedModel::Mlp(m) => m.predict(x),
        }
    }

    /// Latent predictive variance, for GPR only.
    pub fn variance(&self, x: &[f64]) -> Option<f64> {
        match self {
            FittedModel::Gpr(m) => Some(m.predict_variance(x)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub final_train_mse: f64,
    /// Training MSE after each boosting cycle; empty for other families.
    pub loss_trace: Vec<f64>,
}

/// Fits one model in normalized space. Rows of `x` are feature vectors.
pub fn train(config: &RegressorConfig, x: &[Vec<f64>], y: &[f64]) -> Result<(FittedModel, TrainingSummary)> {
    config.validate()?;
    if x.len() != y.len() {
        return Err(RegressorError::InvalidConfig(format!(
            "{} input rows but {} targets",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(RegressorError::TooFewRows { need: 1, got: 0 });
    }
    let width = x[0].len();
    if x.iter().any(|r| r.len() != width) {
        return Err(RegressorError::InvalidConfig("ragged input rows".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressorError::NonFinite("inputs or targets contain NaN/inf".into()));
    }
    match config {
        RegressorConfig::LsBoost(p) => {
            let (m, trace) = TreeEnsemble::fit(p, x, y)?;
            let final_train_mse = *trace.last().expect("at least one cycle");
            Ok((FittedModel::LsBoost(m), TrainingSummary { final_train_mse, loss_trace: trace }))
        }
        RegressorConfig::Gpr(p) => {
            let m = GprModel::fit(p, x, y)?;
            let final_train_mse = mse(x, y, |r| m.predict_mean(r));
            Ok((FittedModel::Gpr(m), TrainingSummary { final_train_mse, loss_trace: vec![] }))
        }
        RegressorConfig::Mlp(p) => {
            let (m, final_train_mse) = MlpModel::fit(p, x, y)?;
            Ok((FittedModel::Mlp(m), TrainingSummary { final_train_mse, loss_trace: vec![] }))
        }
    }
}

fn mse(x: &[Vec<f64>], y: &[f64], f: impl Fn(&[f64]) -> f64) -> f64 {
    x.iter().zip(y).map(|(r, t)| (f(r) - t).powi(2)).sum::<f64>() / y.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub config: RegressorConfig,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fold_provenance: Option<String>,
    pub train_rows: usize,
    pub final_train_mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    /// Predictive variance in squared target units (GPR only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance: Option<f64>,
}

/// A trained single-target model with everything needed to predict in original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorArtifact {
    pub version: String,
    pub target: ColumnSpec,
    pub target_index: usize,
    pub schema_fingerprint: String,
    pub feature_names: Vec<String>,
    pub scaling: ScalingSpec,
    pub metadata: TrainingMetadata,
    /// Normalized training inputs (seeded subsample) used as the explanation background.
    pub background: Vec<Vec<f64>>,
    pub model: FittedModel,
}

impl RegressorArtifact {
    /// Trains on target `target_index` of a dataset already normalized with `scaling`.
    pub fn fit(
        config: &RegressorConfig,
        normalized: &Dataset,
        scaling: &ScalingSpec,
        target_index: usize,
        seed: u64,
        fold_provenance: Option<String>,
    ) -> Result<Self> {
        let schema = normalized.schema();
        if !scaling.matches(schema) {
            return Err(DataError::SchemaMismatch("scaling spec does not match dataset".into()).into());
        }
        let target = schema
            .targets
            .get(target_index)
            .ok_or_else(|| RegressorError::InvalidConfig(format!("no target {target_index}")))?
            .clone();
        let x = normalized.feature_matrix();
        let y = normalized.target_column(target_index);
        let (model, summary) = train(config, &x, &y)?;
        let background = subsample(&x, BACKGROUND_CAP, seed);
        Ok(Self {
            version: ARTIFACT_VERSION.into(),
            target,
            target_index,
            schema_fingerprint: schema.fingerprint(),
            feature_names: schema.features.iter().map(|c| c.name.clone()).collect(),
            scaling: scaling.clone(),
            metadata: TrainingMetadata {
                config: config.clone(),
                seed,
                fold_provenance,
                train_rows: x.len(),
                final_train_mse: summary.final_train_mse,
            },
            background,
            model,
        })
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(RegressorError::WidthMismatch {
                expected: self.n_features(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(RegressorError::NonFiniteInput);
        }
        Ok(())
    }

    /// Maps original-unit features into the model's normalized space.
    pub fn scale_input(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.scaling.scale_features(x))
    }

    /// Normalized model output back to target units.
    pub fn unscale_output(&self, v: f64) -> f64 {
        self.scaling.target(self.target_index).unscale(v)
    }

    /// Prediction in original units for original-unit features.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let u = self.scale_input(x)?;
        let scale = self.scaling.target(self.target_index);
        let range = scale.max - scale.min;
        Ok(Prediction {
            value: scale.unscale(self.model.predict(&u)),
            variance: self.model.variance(&u).map(|v| v * range * range),
        })
    }

    /// Like [`predict`](Self::predict) but also checks the caller's schema fingerprint.
    pub fn predict_checked(&self, fingerprint: &str, x: &[f64]) -> Result<Prediction> {
        if fingerprint != self.schema_fingerprint {
            return Err(RegressorError::FingerprintMismatch {
                artifact: self.schema_fingerprint.clone(),
                caller: fingerprint.into(),
            });
        }
        self.predict(x)
    }

    /// Background rows in original units.
    pub fn background_original(&self) -> Vec<Vec<f64>> {
        self.background.iter().map(|r| self.scaling.unscale_features(r)).collect()
    }

    /// JSON document with a top-level `"version": "v1"` field.
    pub fn save(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn load(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(RegressorError::EmptyStream);
        }
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| RegressorError::Corrupt(e.to_string()))?;
        match value.get("version").and_then(|v| v.as_str()) {
            Some(ARTIFACT_VERSION) => {}
            Some(other) => return Err(RegressorError::VersionMismatch { found: other.into() }),
            None => return Err(RegressorError::Corrupt("missing version field".into())),
        }
        let artifact: Self = serde_json::from_value(value).map_err(|e| RegressorError::Corrupt(e.to_string()))?;
        if artifact.model.n_features() != artifact.n_features()
            || artifact.scaling.n_features != artifact.n_features()
            || artifact.target_index >= artifact.scaling.n_targets()
        {
            return Err(RegressorError::Corrupt("inconsistent dimensions".into()));
        }
        Ok(artifact)
    }
}

/// Seeded subsample of at most `cap` rows, in original order.
pub fn subsample(rows: &[Vec<f64>], cap: usize, seed: u64) -> Vec<Vec<f64>> {
    if rows.len() <= cap {
        return rows.to_vec();
    }
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    SeededRng::new(seed).shuffle(&mut idx);
    idx.truncate(cap);
    idx.sort_unstable();
    idx.into_iter().map(|i| rows[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{normalize, test_support::toy_schema, Sample};

    fn toy_dataset(n: usize, seed: u64) -> Dataset {
        let mut rng = SeededRng::new(seed);
        let rows = (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..3).map(|_| rng.uniform_in(-5.0, 20.0)).collect();
                let y = 3.0 * x[0] - x[1] * x[2] * 0.1 + 40.0;
                Sample::new(x, vec![y, -y])
            })
            .collect();
        Dataset::new(toy_schema(3, 2), rows).unwrap()
    }

    fn artifacts() -> Vec<RegressorArtifact> {
        let (nd, spec) = normalize(&toy_dataset(60, 1)).unwrap();
        let configs = [
            RegressorConfig::LsBoost(LsBoostParams { cycles: 30, ..Default::default() }),
            RegressorConfig::Gpr(GprParams::default()),
            RegressorConfig::Mlp(MlpParams { epochs: 50, ..Default::default() }),
        ];
        configs
            .iter()
            .map(|c| RegressorArtifact::fit(c, &nd, &spec, 1, 3, Some("all rows".into())).unwrap())
            .collect()
    }

    #[test]
    fn config_validation() {
        assert!(RegressorConfig::LsBoost(LsBoostParams { learning_rate: 0.0, ..Default::default() })
            .validate()
            .is_err());
        assert!(RegressorConfig::LsBoost(LsBoostParams { learning_rate: 1.0, max_splits: 0, ..Default::default() })
            .validate()
            .is_ok());
        assert!(RegressorConfig::Mlp(MlpParams { epochs: 0, ..Default::default() }).validate().is_err());
        assert!(RegressorConfig::Gpr(GprParams { noise: 0.0, ..Default::default() }).validate().is_err());
        let text = RegressorConfig::default_for(Family::LsBoost).to_text();
        assert_eq!(
            text,
            r#"{"family":"lsboost","max_splits":6,"min_leaf":5,"cycles":250,"learning_rate":0.295}"#
        );
        assert_eq!(RegressorConfig::from_text(&text).unwrap(), RegressorConfig::default_for(Family::LsBoost));
    }

    #[test]
    fn reference_configuration_is_echoed() {
        let (nd, spec) = normalize(&toy_dataset(40, 2)).unwrap();
        let config = RegressorConfig::LsBoost(LsBoostParams {
            max_splits: 6,
            min_leaf: 5,
            cycles: 250,
            learning_rate: 0.295,
        });
        let a = RegressorArtifact::fit(&config, &nd, &spec, 0, 0, None).unwrap();
        assert_eq!(a.metadata.config, config);
        let text = a.save();
        assert!(text.contains("\"max_splits\": 6") && text.contains("\"learning_rate\": 0.295"));
    }

    #[test]
    fn save_load_predicts_identically() {
        let mut rng = SeededRng::new(11);
        for a in artifacts() {
            let back = RegressorArtifact::load(&a.save()).unwrap();
            assert_eq!(back, a);
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.uniform_in(-10.0, 30.0)).collect();
                let p = a.predict(&x).unwrap();
                let q = back.predict(&x).unwrap();
                assert_eq!(p.value.to_bits(), q.value.to_bits());
                assert_eq!(p.variance.map(f64::to_bits), q.variance.map(f64::to_bits));
            }
        }
    }

    #[test]
    fn load_rejects_bad_streams() {
        let a = &artifacts()[0];
        assert_eq!(RegressorArtifact::load("").unwrap_err(), RegressorError::EmptyStream);
        assert!(matches!(RegressorArtifact::load("{not json"), Err(RegressorError::Corrupt(_))));
        assert!(matches!(RegressorArtifact::load(&a.save()[..200]), Err(RegressorError::Corrupt(_))));
        let bumped = a.save().replacen("\"version\": \"v1\"", "\"version\": \"v2\"", 1);
        assert_eq!(
            RegressorArtifact::load(&bumped).unwrap_err(),
            RegressorError::VersionMismatch { found: "v2".into() }
        );
        assert!(matches!(RegressorArtifact::load("{\"model\": 1}"), Err(RegressorError::Corrupt(_))));
    }

    #[test]
    fn predict_checks_width_and_fingerprint() {
        let a = &artifacts()[0];
        assert!(matches!(a.predict(&[1.0, 2.0]), Err(RegressorError::WidthMismatch { expected: 3, got: 2 })));
        assert!(matches!(a.predict(&[1.0, f64::NAN, 2.0]), Err(RegressorError::NonFiniteInput)));
        assert!(a.predict_checked(&a.schema_fingerprint, &[1.0, 2.0, 3.0]).is_ok());
        assert!(matches!(
            a.predict_checked("deadbeef", &[1.0, 2.0, 3.0]),
            Err(RegressorError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn predict_is_pure() {
        for a in artifacts() {
            let x = [1.0, 2.0, 3.0];
            let p = a.predict(&x).unwrap();
            for _ in 0..5 {
                assert_eq!(a.predict(&x).unwrap(), p);
            }
            assert_eq!(p.variance.is_some(), a.model.variance(&x).is_some());
        }
    }

    #[test]
    fn subsample_caps_rows() {
        let rows: Vec<Vec<f64>> = (0..300).map(|i| vec![i as f64]).collect();
        let s = subsample(&rows, 256, 4);
        assert_eq!(s.len(), 256);
        assert!(s.windows(2).all(|w| w[0][0] < w[1][0]));
        assert_eq!(subsample(&rows, 256, 4), s);
        assert_eq!(subsample(&rows[..10], 256, 4).len(), 10);
    }
}
