//! Interventional Shapley attributions: exact for boosted trees, permutation
//! sampling for any model.

use crate::data::{FeatureKind, FeatureSchema};
use crate::regressors::{FittedModel, RegressionTree, RegressorArtifact, RegressorError, TreeEnsemble, TreeNode};
use crate::rng::SeededRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Permutation count used for non-tree models.
pub const DEFAULT_PERMUTATIONS: usize = 2048;
/// Widest input accepted for exhaustive permutation enumeration.
pub const MAX_EXHAUSTIVE_FEATURES: usize = 8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ShapError {
    #[error("exact attribution needs a boosted-tree model, got {0}")]
    NotTreeModel(String),
    #[error("background set is empty")]
    EmptyBackground,
    #[error("expected {expected} features, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("permutation count must be at least 1")]
    NoPermutations,
    #[error("exhaustive enumeration limited to {MAX_EXHAUSTIVE_FEATURES} features, got {0}")]
    TooManyFeatures(usize),
    #[error("no explanations to summarize")]
    Empty,
    #[error(transparent)]
    Model(#[from] RegressorError),
}

pub type Result<T> = std::result::Result<T, ShapError>;

/// Base value and per-feature attributions in model output units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub base: f64,
    pub values: Vec<f64>,
}

impl Attribution {
    pub fn total(&self) -> f64 {
        self.base + self.values.iter().sum::<f64>()
    }
}

fn check(x: &[f64], background: &[Vec<f64>]) -> Result<()> {
    if background.is_empty() {
        return Err(ShapError::EmptyBackground);
    }
    for r in background {
        if r.len() != x.len() {
            return Err(ShapError::WidthMismatch {
                expected: x.len(),
                got: r.len(),
            });
        }
    }
    Ok(())
}

fn factorials(n: usize) -> Vec<f64> {
    let mut f = vec![1.0; n + 1];
    for i in 1..=n {
        f[i] = f[i - 1] * i as f64;
    }
    f
}

struct PathWalk<'a> {
    nodes: &'a [TreeNode],
    x: &'a [f64],
    z: &'a [f64],
    fact: &'a [f64],
    /// Per feature: 0 unseen, 1 taken from x, 2 taken from z.
    state: Vec<u8>,
    phi: &'a mut [f64],
}

impl PathWalk<'_> {
    fn visit(&mut self, id: usize) {
        let node = &self.nodes[id];
        let (Some(f), Some(_)) = (node.feature, node.threshold) else {
            self.leaf(node.value);
            return;
        };
        let cx = node.next(self.x).expect("internal node");
        let cz = node.next(self.z).expect("internal node");
        if cx == cz {
            self.visit(cx);
            return;
        }
        match self.state[f] {
            1 => self.visit(cx),
            2 => self.visit(cz),
            _ => {
                self.state[f] = 1;
                self.visit(cx);
                self.state[f] = 2;
                self.visit(cz);
                self.state[f] = 0;
            }
        }
    }

    fn leaf(&mut self, v: f64) {
        let a = self.state.iter().filter(|&&s| s == 1).count();
        let b = self.state.iter().filter(|&&s| s == 2).count();
        if a + b == 0 {
            return;
        }
        let total = self.fact[a + b];
        let wx = if a > 0 { self.fact[a - 1] * self.fact[b] / total } else { 0.0 };
        let wz = if b > 0 { self.fact[a] * self.fact[b - 1] / total } else { 0.0 };
        for (p, s) in self.phi.iter_mut().zip(&self.state) {
            match s {
                1 => *p += v * wx,
                2 => *p -= v * wz,
                _ => {}
            }
        }
    }
}

/// Exact Shapley values of one tree for `x` against a single reference row `z`.
pub fn tree_shap_single(tree: &RegressionTree, x: &[f64], z: &[f64]) -> Vec<f64> {
    let mut phi = vec![0.0; x.len()];
    let fact = factorials(x.len());
    PathWalk {
        nodes: &tree.nodes,
        x,
        z,
        fact: &fact,
        state: vec![0; x.len()],
        phi: &mut phi,
    }
    .visit(0);
    phi
}

/// Exact interventional Shapley values of a boosted ensemble, averaged over `background`.
pub fn shap_tree(model: &TreeEnsemble, x: &[f64], background: &[Vec<f64>]) -> Result<Attribution> {
    check(x, background)?;
    if x.len() != model.n_features {
        return Err(ShapError::WidthMismatch {
            expected: model.n_features,
            got: x.len(),
        });
    }
    let fact = factorials(x.len());
    let mut phi = vec![0.0; x.len()];
    for z in background {
        let mut per_z = vec![0.0; x.len()];
        for tree in &model.trees {
            PathWalk {
                nodes: &tree.nodes,
                x,
                z,
                fact: &fact,
                state: vec![0; x.len()],
                phi: &mut per_z,
            }
            .visit(0);
        }
        for (p, v) in phi.iter_mut().zip(&per_z) {
            *p += model.learning_rate * v;
        }
    }
    let n = background.len() as f64;
    phi.iter_mut().for_each(|p| *p /= n);
    let base = background.iter().map(|z| model.predict(z)).sum::<f64>() / n;
    Ok(Attribution { base, values: phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingMode {
    /// Every permutation against every background row.
    Exhaustive,
    /// Random permutations, each paired with the next background row in turn.
    /// The count is rounded up to a multiple of the background size.
    Permutations(usize),
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("successor exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Marginal contributions along one permutation, switching features from `z` to `x`.
fn walk<F: Fn(&[f64]) -> f64>(f: &F, x: &[f64], z: &[f64], order: &[usize], phi: &mut [f64]) {
    let mut v = z.to_vec();
    let mut prev = f(&v);
    for &j in order {
        v[j] = x[j];
        let cur = f(&v);
        phi[j] += cur - prev;
        prev = cur;
    }
}

/// Permutation-sampling Shapley estimator with background imputation.
pub fn shap_sampling<F>(f: F, x: &[f64], background: &[Vec<f64>], mode: SamplingMode, seed: u64) -> Result<Attribution>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check(x, background)?;
    let d = x.len();
    let mut phi = vec![0.0; d];
    let samples = match mode {
        SamplingMode::Exhaustive => {
            if d > MAX_EXHAUSTIVE_FEATURES {
                return Err(ShapError::TooManyFeatures(d));
            }
            let mut perms = Vec::new();
            let mut p: Vec<usize> = (0..d).collect();
            loop {
                perms.push(p.clone());
                if !next_permutation(&mut p) {
                    break;
                }
            }
            let parts: Vec<Vec<f64>> = background
                .par_iter()
                .map(|z| {
                    let mut acc = vec![0.0; d];
                    for order in &perms {
                        walk(&f, x, z, order, &mut acc);
                    }
                    acc
                })
                .collect();
            for part in parts {
                phi.iter_mut().zip(&part).for_each(|(p, v)| *p += v);
            }
            perms.len() * background.len()
        }
        SamplingMode::Permutations(count) => {
            if count == 0 {
                return Err(ShapError::NoPermutations);
            }
            let m = background.len();
            let total = count.div_ceil(m) * m;
            let mut rng = SeededRng::new(seed);
            let orders: Vec<Vec<usize>> = (0..total)
                .map(|_| {
                    let mut p: Vec<usize> = (0..d).collect();
                    rng.shuffle(&mut p);
                    p
                })
                .collect();
            let parts: Vec<Vec<f64>> = orders
                .par_chunks(m)
                .map(|chunk| {
                    let mut acc = vec![0.0; d];
                    for (order, z) in chunk.iter().zip(background) {
                        walk(&f, x, z, order, &mut acc);
                    }
                    acc
                })
                .collect();
            for part in parts {
                phi.iter_mut().zip(&part).for_each(|(p, v)| *p += v);
            }
            total
        }
    };
    phi.iter_mut().for_each(|p| *p /= samples as f64);
    let base = background.iter().map(|z| f(z)).sum::<f64>() / background.len() as f64;
    Ok(Attribution { base, values: phi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapMethod {
    Tree,
    Sampling,
}

/// Attribution for one instance in the target's original units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    pub target: String,
    pub method: ShapMethod,
    /// Feature values in original units.
    pub instance: Vec<f64>,
    pub base: f64,
    pub values: Vec<f64>,
    pub prediction: f64,
}

impl ShapExplanation {
    /// `feature,value,shap` rows.
    pub fn to_csv(&self, feature_names: &[String]) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["feature", "value", "shap"]).expect("in-memory write");
        for ((name, v), p) in feature_names.iter().zip(&self.instance).zip(&self.values) {
            w.write_record([name.as_str(), &v.to_string(), &p.to_string()])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Explains an original-unit instance against the artifact's stored background.
///
/// Boosted trees use the exact algorithm; other families use `permutations`
/// sampled permutations (default [`DEFAULT_PERMUTATIONS`]).
pub fn explain(
    artifact: &RegressorArtifact,
    x: &[f64],
    permutations: Option<usize>,
    seed: u64,
) -> Result<ShapExplanation> {
    let u = artifact.scale_input(x)?;
    let (method, attr) = match &artifact.model {
        FittedModel::LsBoost(m) => (ShapMethod::Tree, shap_tree(m, &u, &artifact.background)?),
        model => (
            ShapMethod::Sampling,
            shap_sampling(
                |r| model.predict(r),
                &u,
                &artifact.background,
                SamplingMode::Permutations(permutations.unwrap_or(DEFAULT_PERMUTATIONS)),
                seed,
            )?,
        ),
    };
    let scale = artifact.scaling.target(artifact.target_index);
    let range = scale.max - scale.min;
    Ok(ShapExplanation {
        target: artifact.target.name.clone(),
        method,
        instance: x.to_vec(),
        base: scale.unscale(attr.base),
        values: attr.values.iter().map(|v| v * range).collect(),
        prediction: scale.unscale(artifact.model.predict(&u)),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub index: usize,
    pub name: String,
    pub kind: Option<FeatureKind>,
    pub max_abs: f64,
    pub mean_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapSummary {
    /// Features in descending order of maximum |φ|; ties keep schema order.
    pub ranking: Vec<FeatureImportance>,
    /// Share of total mean |φ| per group, in percent. Absent when every φ is zero.
    pub operating_pct: Option<f64>,
    pub catalyst_pct: Option<f64>,
}

pub fn summarize(explanations: &[ShapExplanation], schema: &FeatureSchema) -> Result<ShapSummary> {
    let first = explanations.first().ok_or(ShapError::Empty)?;
    let d = schema.n_features();
    if let Some(bad) = explanations.iter().find(|e| e.values.len() != d) {
        return Err(ShapError::WidthMismatch {
            expected: d,
            got: bad.values.len(),
        });
    }
    debug_assert_eq!(first.values.len(), d);
    let n = explanations.len() as f64;
    let mut ranking: Vec<FeatureImportance> = schema
        .features
        .iter()
        .enumerate()
        .map(|(j, c)| FeatureImportance {
            index: j,
            name: c.name.clone(),
            kind: c.kind,
            max_abs: explanations.iter().map(|e| e.values[j].abs()).fold(0.0, f64::max),
            mean_abs: explanations.iter().map(|e| e.values[j].abs()).sum::<f64>() / n,
        })
        .collect();
    let total: f64 = ranking.iter().map(|f| f.mean_abs).sum();
    let share = |kind: FeatureKind| {
        let s: f64 = ranking.iter().filter(|f| f.kind == Some(kind)).map(|f| f.mean_abs).sum();
        (total > 0.0).then(|| 100.0 * s / total)
    };
    let operating_pct = share(FeatureKind::OperatingCondition);
    let catalyst_pct = share(FeatureKind::CatalystProperty);
    ranking.sort_by(|a, b| b.max_abs.total_cmp(&a.max_abs).then(a.index.cmp(&b.index)));
    Ok(ShapSummary {
        ranking,
        operating_pct,
        catalyst_pct,
    })
}

impl ShapSummary {
    /// `rank,feature,group,max_abs,mean_abs` rows.
    pub fn ranking_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["rank", "feature", "group", "max_abs", "mean_abs"])
            .expect("in-memory write");
        for (r, f) in self.ranking.iter().enumerate() {
            w.write_record([
                (r + 1).to_string(),
                f.name.clone(),
                f.kind.map(|k| k.as_str().to_string()).unwrap_or_default(),
                f.max_abs.to_string(),
                f.mean_abs.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// `group,percent` rows; empty percent when undefined.
    pub fn groups_csv(&self) -> String {
        let cell = |p: Option<f64>| p.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "group,percent\noperating-condition,{}\ncatalyst-property,{}\n",
            cell(self.operating_pct),
            cell(self.catalyst_pct)
        )
    }
}
