//! Regression scores and k-fold evaluation.

use crate::data::{Dataset, FoldPlan};
use crate::regressors::{train, RegressorConfig, RegressorError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("length mismatch: {0} observations vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} points, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("R² undefined: observations are constant")]
    ConstantTarget,
    #[error("fold {fold}: training set has {rows} row(s), need at least 2")]
    FoldTooSmall { fold: usize, rows: usize },
    #[error("fold plan covers {plan} rows but dataset has {data}")]
    PlanMismatch { plan: usize, data: usize },
    #[error("target `{target}`, fold {fold}: {source}")]
    Training {
        target: String,
        fold: usize,
        source: RegressorError,
    },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check(y: &[f64], y_hat: &[f64], need: usize) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(MetricsError::LengthMismatch(y.len(), y_hat.len()));
    }
    if y.len() < need {
        return Err(MetricsError::TooShort { need, got: y.len() });
    }
    Ok(())
}

/// Coefficient of determination `1 − SSres/SStot`.
pub fn r2(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat, 2)?;
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ConstantTarget);
    }
    let ss_res: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat, 1)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

pub fn rmse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat, 1)?;
    Ok((y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Train,
    Test,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Test => "test",
        }
    }
}

/// Scores for one (target, fold, phase). `r2` is absent when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub r2: Option<f64>,
    pub mae: f64,
    pub rmse: f64,
}

impl Scores {
    pub fn compute(y: &[f64], y_hat: &[f64]) -> Result<Self> {
        Ok(Self {
            r2: r2(y, y_hat).ok(),
            mae: mae(y, y_hat)?,
            rmse: rmse(y, y_hat)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for a single value. None for no values.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: Phase,
    pub r2: Option<MeanStd>,
    pub mae: MeanStd,
    pub rmse: MeanStd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub fold: usize,
    pub test_rows: usize,
    pub train: Scores,
    pub test: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target: String,
    pub folds: Vec<FoldScores>,
    pub train: PhaseSummary,
    pub test: PhaseSummary,
}

impl TargetReport {
    fn new(target: String, folds: Vec<FoldScores>) -> Self {
        let summary = |phase: Phase| {
            let pick = |f: &FoldScores| match phase {
                Phase::Train => f.train,
                Phase::Test => f.test,
            };
            let r2: Vec<f64> = folds.iter().filter_map(|f| pick(f).r2).collect();
            let mae: Vec<f64> = folds.iter().map(|f| pick(f).mae).collect();
            let rmse: Vec<f64> = folds.iter().map(|f| pick(f).rmse).collect();
            PhaseSummary {
                phase,
                r2: MeanStd::of(&r2),
                mae: MeanStd::of(&mae).expect("at least one fold"),
                rmse: MeanStd::of(&rmse).expect("at least one fold"),
            }
        };
        Self {
            train: summary(Phase::Train),
            test: summary(Phase::Test),
            target,
            folds,
        }
    }

    pub fn summary(&self, phase: Phase) -> &PhaseSummary {
        match phase {
            Phase::Train => &self.train,
            Phase::Test => &self.test,
        }
    }
}

/// Cross-validated scores for every target of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: RegressorConfig,
    pub k: usize,
    pub seed: u64,
    pub targets: Vec<TargetReport>,
}

impl EvalReport {
    /// Mean test RMSE averaged over targets.
    pub fn mean_test_rmse(&self) -> f64 {
        self.targets.iter().map(|t| t.test.rmse.mean).sum::<f64>() / self.targets.len() as f64
    }

    pub fn target(&self, name: &str) -> Option<&TargetReport> {
        self.targets.iter().find(|t| t.target == name)
    }

    pub fn to_table(&self) -> String {
        let fmt_ms = |m: Option<MeanStd>| match m {
            Some(m) => format!("{:.4} ± {:.4}", m.mean, m.std),
            None => "n/a".to_string(),
        };
        let mut out = format!("model: {}  folds: {}  seed: {}\n", self.config.family(), self.k, self.seed);
        let _ = writeln!(
            out,
            "{:<28} {:<6} {:>20} {:>20} {:>20}",
            "target", "phase", "R²", "MAE", "RMSE"
        );
        for t in &self.targets {
            for s in [&t.train, &t.test] {
                let _ = writeln!(
                    out,
                    "{:<28} {:<6} {:>20} {:>20} {:>20}",
                    t.target,
                    s.phase.as_str(),
                    fmt_ms(s.r2),
                    fmt_ms(Some(s.mae)),
                    fmt_ms(Some(s.rmse))
                );
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per (target, phase, fold), for violin plots.
    pub fn fold_scores_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["target", "phase", "fold", "r2", "mae", "rmse"]).expect("in-memory write");
        for t in &self.targets {
            for phase in [Phase::Train, Phase::Test] {
                for f in &t.folds {
                    let s = match phase {
                        Phase::Train => f.train,
                        Phase::Test => f.test,
                    };
                    w.write_record([
                        t.target.clone(),
                        phase.as_str().to_string(),
                        f.fold.to_string(),
                        s.r2.map(|v| v.to_string()).unwrap_or_default(),
                        s.mae.to_string(),
                        s.rmse.to_string(),
                    ])
                    .expect("in-memory write");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Trains on each fold's complement and scores both sides, for every target.
///
/// Scores are in the units of `data` (normalized data gives normalized scores).
pub fn evaluate_cv(config: &RegressorConfig, data: &Dataset, plan: &FoldPlan) -> Result<EvalReport> {
    let targets: Vec<usize> = (0..data.schema().n_targets()).collect();
    evaluate_cv_targets(config, data, plan, &targets)
}

/// [`evaluate_cv`] restricted to the given target indices.
pub fn evaluate_cv_targets(
    config: &RegressorConfig,
    data: &Dataset,
    plan: &FoldPlan,
    targets: &[usize],
) -> Result<EvalReport> {
    if plan.n() != data.len() {
        return Err(MetricsError::PlanMismatch {
            plan: plan.n(),
            data: data.len(),
        });
    }
    for fold in 0..plan.k {
        let rows = data.len() - plan.test_indices(fold).len();
        if rows < 2 {
            return Err(MetricsError::FoldTooSmall { fold, rows });
        }
    }
    let x = data.feature_matrix();
    let jobs: Vec<(usize, usize)> = targets
        .iter()
        .flat_map(|&t| (0..plan.k).map(move |f| (t, f)))
        .collect();
    let scored: Vec<FoldScores> = jobs
        .par_iter()
        .map(|&(t, fold)| {
            let y = data.target_column(t);
            let train_idx = plan.train_indices(fold);
            let test_idx = plan.test_indices(fold);
            let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<f64>) {
                (idx.iter().map(|&i| x[i].clone()).collect(), idx.iter().map(|&i| y[i]).collect())
            };
            let (xtr, ytr) = pick(&train_idx);
            let (xte, yte) = pick(test_idx);
            let (model, _) = train(config, &xtr, &ytr).map_err(|source| MetricsError::Training {
                target: data.schema().targets[t].name.clone(),
                fold,
                source,
            })?;
            let ptr: Vec<f64> = xtr.iter().map(|r| model.predict(r)).collect();
            let pte: Vec<f64> = xte.iter().map(|r| model.predict(r)).collect();
            Ok(FoldScores {
                fold,
                test_rows: yte.len(),
                train: Scores::compute(&ytr, &ptr)?,
                test: Scores::compute(&yte, &pte)?,
            })
        })
        .collect::<Result<_>>()?;
    let reports = targets
        .iter()
        .zip(scored.chunks(plan.k))
        .map(|(&t, folds)| TargetReport::new(data.schema().targets[t].name.clone(), folds.to_vec()))
        .collect();
    Ok(EvalReport {
        config: config.clone(),
        k: plan.k,
        seed: plan.seed,
        targets: reports,
    })
}
