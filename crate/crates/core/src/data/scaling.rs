use super::{DataError, Dataset, FeatureSchema, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScale {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ColumnScale {
    pub fn scale(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    pub fn unscale(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

/// Min/max affine map of every column onto `[0, 1]`: features first, then targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub n_features: usize,
    pub columns: Vec<ColumnScale>,
}

impl ScalingSpec {
    /// min = 0, max = 1 for every column of `schema`.
    pub fn identity(schema: &FeatureSchema) -> Self {
        Self {
            n_features: schema.n_features(),
            columns: schema
                .columns()
                .map(|c| ColumnScale {
                    name: c.name.clone(),
                    min: 0.0,
                    max: 1.0,
                })
                .collect(),
        }
    }

    pub fn feature(&self, j: usize) -> &ColumnScale {
        &self.columns[j]
    }

    pub fn target(&self, t: usize) -> &ColumnScale {
        &self.columns[self.n_features + t]
    }

    pub fn n_targets(&self) -> usize {
        self.columns.len() - self.n_features
    }

    pub fn scale_features(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.columns).map(|(&v, c)| c.scale(v)).collect()
    }

    pub fn unscale_features(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.columns).map(|(&v, c)| c.unscale(v)).collect()
    }

    pub fn matches(&self, schema: &FeatureSchema) -> bool {
        self.n_features == schema.n_features()
            && self.columns.len() == schema.n_columns()
            && self.columns.iter().zip(schema.columns()).all(|(s, c)| s.name == c.name)
    }
}

/// Maps every column so its observed minimum becomes 0 and maximum 1.
pub fn normalize(d: &Dataset) -> Result<(Dataset, ScalingSpec)> {
    let mut columns = Vec::with_capacity(d.schema().n_columns());
    for (j, col) in d.schema().columns().enumerate() {
        let values = d.column(j);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(max > min) {
            return Err(DataError::ConstantColumn(col.name.clone()));
        }
        columns.push(ColumnScale {
            name: col.name.clone(),
            min,
            max,
        });
    }
    let spec = ScalingSpec {
        n_features: d.schema().n_features(),
        columns,
    };
    let scaled = d.map_values(|j, v| spec.columns[j].scale(v))?;
    Ok((scaled, spec))
}

/// Inverse of [`normalize`].
pub fn denormalize(d: &Dataset, s: &ScalingSpec) -> Result<Dataset> {
    if !s.matches(d.schema()) {
        return Err(DataError::SchemaMismatch(format!(
            "scaling spec has {} columns, dataset has {}",
            s.columns.len(),
            d.schema().n_columns()
        )));
    }
    d.map_values(|j, v| s.columns[j].unscale(v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_support::toy_schema;
    use crate::data::Sample;
    use proptest::prelude::*;

    fn one_column(values: &[f64]) -> Dataset {
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Sample::new(vec![v], vec![i as f64]))
            .collect();
        Dataset::new(toy_schema(1, 1), rows).unwrap()
    }

    #[test]
    fn endpoints_map_to_unit_interval() {
        let (n, spec) = normalize(&one_column(&[300.0, 600.0, 900.0])).unwrap();
        assert_eq!(n.column(0), vec![0.0, 0.5, 1.0]);
        assert_eq!(spec.feature(0).min, 300.0);
        assert_eq!(spec.feature(0).max, 900.0);
        let back = denormalize(&n, &spec).unwrap();
        assert_eq!(back.column(0), vec![300.0, 600.0, 900.0]);
    }

    #[test]
    fn single_row_is_constant() {
        let err = normalize(&one_column(&[5.0])).unwrap_err();
        assert_eq!(err, DataError::ConstantColumn("x0".into()));
    }

    #[test]
    fn identity_spec_leaves_data_unchanged() {
        let d = one_column(&[0.1, 0.7, 0.3]);
        let spec = ScalingSpec::identity(d.schema());
        assert_eq!(denormalize(&d, &spec).unwrap(), d);
    }

    #[test]
    fn mismatched_spec_is_rejected() {
        let a = one_column(&[1.0, 2.0]);
        let b = Dataset::new(
            toy_schema(2, 1),
            vec![Sample::new(vec![1.0, 2.0], vec![0.0]), Sample::new(vec![3.0, 4.0], vec![1.0])],
        )
        .unwrap();
        let (_, spec) = normalize(&a).unwrap();
        assert!(matches!(denormalize(&b, &spec), Err(DataError::SchemaMismatch(_))));
    }

    proptest! {
        #[test]
        fn round_trip_within_tolerance(
            rows in prop::collection::vec((-1e4f64..1e4, -1e3f64..1e3, 0f64..1.0), 2..40)
        ) {
            let samples: Vec<Sample> = rows
                .iter()
                .map(|&(a, b, c)| Sample::new(vec![a, b], vec![c]))
                .collect();
            let d = Dataset::new(toy_schema(2, 1), samples).unwrap();
            let Ok((n, spec)) = normalize(&d) else { return Ok(()); };
            for j in 0..3 {
                let col = n.column(j);
                prop_assert!(col.iter().all(|v| (0.0..=1.0).contains(v)));
                prop_assert!(col.contains(&0.0) && col.contains(&1.0));
            }
            let back = denormalize(&n, &spec).unwrap();
            for j in 0..3 {
                let s = &spec.columns[j];
                let scale = s.min.abs().max(s.max.abs());
                for (a, b) in d.column(j).iter().zip(back.column(j)) {
                    prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(scale));
                }
            }
        }
    }
}
