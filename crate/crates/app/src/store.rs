//! On-disk model directory: one `<target_key>.v1` artifact per target plus a `schema` file.

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use tarml_core::data::{Bounds, FeatureSchema};
use tarml_core::regressors::{Prediction, RegressorArtifact, ARTIFACT_VERSION};

pub const SCHEMA_FILE: &str = "schema";

/// Contents of the `schema` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub version: String,
    pub fingerprint: String,
    /// Schema with the training bounds of every column.
    pub schema: FeatureSchema,
}

/// Every target's artifact, all trained against one schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSet {
    pub schema: FeatureSchema,
    pub fingerprint: String,
    /// In schema target order.
    pub artifacts: Vec<RegressorArtifact>,
}

pub fn artifact_file_name(target_key: &str) -> String {
    format!("{target_key}.{ARTIFACT_VERSION}")
}

impl ModelSet {
    pub fn new(schema: FeatureSchema, artifacts: Vec<RegressorArtifact>) -> Result<Self> {
        let fingerprint = schema.fingerprint();
        ensure!(
            artifacts.len() == schema.n_targets(),
            "{} artifacts for {} targets",
            artifacts.len(),
            schema.n_targets()
        );
        for (t, a) in artifacts.iter().enumerate() {
            ensure!(
                a.schema_fingerprint == fingerprint,
                "artifact for `{}` has schema fingerprint {} but the model set uses {}",
                a.target.key,
                a.schema_fingerprint,
                fingerprint
            );
            ensure!(
                a.target_index == t && a.target.key == schema.targets[t].key,
                "artifact for `{}` is out of target order",
                a.target.key
            );
        }
        Ok(Self {
            schema,
            fingerprint,
            artifacts,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        for a in &self.artifacts {
            let path = dir.join(artifact_file_name(&a.target.key));
            fs::write(&path, a.save()).with_context(|| format!("cannot write {}", path.display()))?;
        }
        let file = SchemaFile {
            version: ARTIFACT_VERSION.into(),
            fingerprint: self.fingerprint.clone(),
            schema: self.schema.clone(),
        };
        let path = dir.join(SCHEMA_FILE);
        let text = serde_json::to_string_pretty(&file).expect("schema serializes");
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SCHEMA_FILE);
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let file: SchemaFile =
            serde_json::from_str(&text).with_context(|| format!("{} is not a valid schema file", path.display()))?;
        if file.version != ARTIFACT_VERSION {
            bail!("{}: unsupported version {}", path.display(), file.version);
        }
        if file.schema.fingerprint() != file.fingerprint {
            bail!("{}: fingerprint does not match the stored schema", path.display());
        }
        let artifacts = file
            .schema
            .targets
            .iter()
            .map(|t| {
                let path = dir.join(artifact_file_name(&t.key));
                let text =
                    fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
                RegressorArtifact::load(&text).with_context(|| format!("cannot load {}", path.display()))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.schema, artifacts)
    }

    /// Training bounds per feature, from the scaling of the first artifact.
    pub fn feature_bounds(&self) -> Vec<Bounds> {
        let s = &self.artifacts[0].scaling;
        (0..s.n_features).map(|j| Bounds::new(s.feature(j).min, s.feature(j).max)).collect()
    }

    /// True where a value lies outside its training bound.
    pub fn extrapolation_flags(&self, x: &[f64]) -> Vec<bool> {
        self.feature_bounds().iter().zip(x).map(|(b, v)| !b.contains(*v)).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vec<Prediction>> {
        self.artifacts
            .iter()
            .map(|a| a.predict_checked(&self.fingerprint, x).map_err(Into::into))
            .collect()
    }
}
