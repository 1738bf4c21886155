use super::{DataError, Dataset, Result};
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

/// Row filter applied to target columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutlierPolicy {
    None,
    /// Tukey fences `[Q1 − m·IQR, Q3 + m·IQR]`.
    Iqr { multiplier: f64 },
    /// Iterated z-score clipping: rows with `|v − mean| > t·sd` (population sd) are
    /// dropped and the statistics recomputed until a pass removes nothing.
    ZScore { threshold: f64 },
}

impl Default for OutlierPolicy {
    fn default() -> Self {
        OutlierPolicy::Iqr { multiplier: 1.5 }
    }
}

impl OutlierPolicy {
    fn validate(self) -> Result<Self> {
        match self {
            OutlierPolicy::Iqr { multiplier: m } if !(m > 0.0) => {
                Err(DataError::InvalidPolicy(format!("iqr multiplier must be positive, got {m}")))
            }
            OutlierPolicy::ZScore { threshold: t } if !(t > 0.0) => {
                Err(DataError::InvalidPolicy(format!("z-score threshold must be positive, got {t}")))
            }
            p => Ok(p),
        }
    }
}

impl FromStr for OutlierPolicy {
    type Err = DataError;

    /// `none`, `iqr`, `iqr:<multiplier>`, `zscore`, `zscore:<threshold>`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse().map_err(|_| DataError::InvalidPolicy(format!("bad number {a:?}")))
            })
        };
        let policy = match name {
            "none" => OutlierPolicy::None,
            "iqr" => OutlierPolicy::Iqr { multiplier: num(1.5)? },
            "zscore" => OutlierPolicy::ZScore { threshold: num(3.0)? },
            other => return Err(DataError::InvalidPolicy(format!("unknown policy {other:?}"))),
        };
        policy.validate()
    }
}

impl fmt::Display for OutlierPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutlierPolicy::None => write!(f, "none"),
            OutlierPolicy::Iqr { multiplier } => write!(f, "iqr:{multiplier}"),
            OutlierPolicy::ZScore { threshold } => write!(f, "zscore:{threshold}"),
        }
    }
}

/// One fence violation. `row` indexes the input dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovalEntry {
    pub row: usize,
    pub column: String,
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RemovalReport {
    pub entries: Vec<RemovalEntry>,
}

impl RemovalReport {
    pub fn removed_rows(&self) -> Vec<usize> {
        self.entries
            .iter()
            .map(|e| e.row)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for RemovalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "row {} removed: {} = {} outside [{}, {}]",
                e.row, e.column, e.value, e.lo, e.hi
            )?;
        }
        Ok(())
    }
}

/// Quantile of sorted data by linear interpolation between order statistics
/// (position `p·(n−1)`).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty slice");
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn fences(values: &[f64], policy: OutlierPolicy) -> Option<(f64, f64)> {
    match policy {
        OutlierPolicy::None => None,
        OutlierPolicy::Iqr { multiplier } => {
            let mut sorted = values.to_vec();
            sorted.sort_by(f64::total_cmp);
            let q1 = quantile(&sorted, 0.25);
            let q3 = quantile(&sorted, 0.75);
            let iqr = q3 - q1;
            Some((q1 - multiplier * iqr, q3 + multiplier * iqr))
        }
        OutlierPolicy::ZScore { threshold } => {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            Some((mean - threshold * sd, mean + threshold * sd))
        }
    }
}

/// One pass over `keep` (indices into `d`). Returns violations found.
fn flag_pass(d: &Dataset, keep: &[usize], policy: OutlierPolicy) -> Vec<RemovalEntry> {
    let mut entries = Vec::new();
    for (t, col) in d.schema().targets.iter().enumerate() {
        let values: Vec<f64> = keep.iter().map(|&i| d.rows()[i].targets[t]).collect();
        let Some((lo, hi)) = fences(&values, policy) else {
            continue;
        };
        for (&i, &v) in keep.iter().zip(&values) {
            if v < lo || v > hi {
                entries.push(RemovalEntry {
                    row: i,
                    column: col.name.clone(),
                    value: v,
                    lo,
                    hi,
                });
            }
        }
    }
    entries
}

/// Drops rows whose target values fall outside the policy's fences.
pub fn remove_outliers(d: &Dataset, policy: OutlierPolicy) -> Result<(Dataset, RemovalReport)> {
    let policy = policy.validate()?;
    let mut keep: Vec<usize> = (0..d.len()).collect();
    let mut report = RemovalReport::default();
    loop {
        let entries = flag_pass(d, &keep, policy);
        if entries.is_empty() {
            break;
        }
        let dropped: BTreeSet<usize> = entries.iter().map(|e| e.row).collect();
        keep.retain(|i| !dropped.contains(i));
        report.entries.extend(entries);
        if !matches!(policy, OutlierPolicy::ZScore { .. }) {
            break;
        }
    }
    report.entries.sort_by_key(|e| e.row);
    let cleaned = if report.is_empty() {
        d.clone()
    } else {
        d.subset(&keep)?
    };
    Ok((cleaned, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::toy_schema;
    use crate::data::Sample;
    use crate::rng::SeededRng;

    fn targets(values: &[f64]) -> Dataset {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample::new(vec![i as f64], vec![v]))
            .collect();
        Dataset::new(toy_schema(1, 1), rows).unwrap()
    }

    #[test]
    fn quantiles_interpolate() {
        let s = [1.0, 2.0, 3.0, 4.0, 100.0];
        assert_eq!(quantile(&s, 0.25), 2.0);
        assert_eq!(quantile(&s, 0.75), 4.0);
        assert_eq!(quantile(&[1.0, 2.0], 0.5), 1.5);
    }

    #[test]
    fn none_is_noop() {
        let d = targets(&[1.0, 2.0, 500.0]);
        let (out, report) = remove_outliers(&d, OutlierPolicy::None).unwrap();
        assert_eq!(out, d);
        assert!(report.is_empty());
    }

    #[test]
    fn iqr_removes_far_value() {
        let d = targets(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        let (out, report) = remove_outliers(&d, OutlierPolicy::Iqr { multiplier: 1.5 }).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(report.removed_rows(), vec![4]);
        let e = &report.entries[0];
        assert_eq!((e.lo, e.hi), (-1.0, 7.0));
        assert_eq!(report.to_string(), "row 4 removed: y0 = 100 outside [-1, 7]\n");
    }

    #[test]
    fn identical_targets_are_kept() {
        let d = targets(&[3.0; 6]);
        let (out, report) = remove_outliers(&d, OutlierPolicy::Iqr { multiplier: 1.5 }).unwrap();
        assert_eq!(out.len(), 6);
        assert!(report.is_empty());
        let (out, _) = remove_outliers(&d, OutlierPolicy::ZScore { threshold: 2.0 }).unwrap();
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn non_positive_parameters_rejected() {
        let d = targets(&[1.0, 2.0]);
        assert!(remove_outliers(&d, OutlierPolicy::Iqr { multiplier: 0.0 }).is_err());
        assert!(remove_outliers(&d, OutlierPolicy::ZScore { threshold: -1.0 }).is_err());
        assert!("iqr:-2".parse::<OutlierPolicy>().is_err());
    }

    #[test]
    fn policy_parsing() {
        assert_eq!("none".parse::<OutlierPolicy>().unwrap(), OutlierPolicy::None);
        assert_eq!("iqr".parse::<OutlierPolicy>().unwrap(), OutlierPolicy::default());
        assert_eq!(
            "zscore:2.5".parse::<OutlierPolicy>().unwrap(),
            OutlierPolicy::ZScore { threshold: 2.5 }
        );
    }

    fn heavy_tailed(seed: u64, n: usize) -> Dataset {
        let mut rng = SeededRng::new(seed);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                let z = rng.standard_normal();
                (50.0 + 5.0 * z * z * z.signum()).clamp(0.0, 100.0)
            })
            .collect();
        targets(&values)
    }

    #[test]
    fn zscore_is_idempotent() {
        for seed in 0..20 {
            let d = heavy_tailed(seed, 200);
            let policy = OutlierPolicy::ZScore { threshold: 2.5 };
            let (once, _) = remove_outliers(&d, policy).unwrap();
            let (twice, report) = remove_outliers(&once, policy).unwrap();
            assert!(report.is_empty(), "seed {seed}");
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn iqr_removals_violate_input_fences() {
        for seed in 0..20 {
            let d = heavy_tailed(seed, 150);
            let policy = OutlierPolicy::Iqr { multiplier: 1.5 };
            let (once, report) = remove_outliers(&d, policy).unwrap();
            let (lo, hi) = fences(&d.target_column(0), policy).unwrap();
            for e in &report.entries {
                assert!(e.value < lo || e.value > hi);
                assert_eq!((e.lo, e.hi), (lo, hi));
            }
            let (twice, _) = remove_outliers(&once, policy).unwrap();
            assert!(twice.len() <= once.len() && once.len() <= d.len());
        }
    }
}
