//! Descriptive statistics: rank correlation, PCA, 2-D kernel density, response grids.

use crate::data::Dataset;
use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("need at least {need} rows, got {got}")]
    TooFewRows { need: usize, got: usize },
    #[error("need at least {need} columns, got {got}")]
    TooFewColumns { need: usize, got: usize },
    #[error("non-finite value in column {0}")]
    NonFinite(usize),
    #[error("columns have different lengths")]
    Ragged,
    #[error("{0} has zero variance")]
    ZeroVariance(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

pub type Result<T> = std::result::Result<T, StatsError>;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation.
fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// 1-based ranks, ties share the average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman coefficient; `None` when either column is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub names: Vec<String>,
    /// Absent entries involve a constant column.
    pub matrix: Vec<Vec<Option<f64>>>,
    /// Leaf order of an average-linkage clustering of the matrix rows.
    pub order: Vec<usize>,
}

fn check_columns(columns: &[Vec<f64>], min_rows: usize) -> Result<usize> {
    let n = columns.first().map_or(0, Vec::len);
    if columns.iter().any(|c| c.len() != n) {
        return Err(StatsError::Ragged);
    }
    if n < min_rows {
        return Err(StatsError::TooFewRows { need: min_rows, got: n });
    }
    for (j, c) in columns.iter().enumerate() {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(j));
        }
    }
    Ok(n)
}

pub fn spearman_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<CorrelationReport> {
    check_columns(columns, 3)?;
    let ranks: Vec<Vec<f64>> = columns.iter().map(|c| average_ranks(c)).collect();
    let k = columns.len();
    let matrix: Vec<Vec<Option<f64>>> = (0..k)
        .into_par_iter()
        .map(|i| {
            (0..k)
                .map(|j| {
                    let r = pearson(&ranks[i], &ranks[j])?;
                    Some(if i == j { 1.0 } else { r })
                })
                .collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = matrix.iter().map(|r| r.iter().map(|v| v.unwrap_or(0.0)).collect()).collect();
    let order = average_linkage_order(&rows);
    Ok(CorrelationReport { names, matrix, order })
}

/// Spearman matrix over every feature and target column.
pub fn spearman_matrix(data: &Dataset) -> Result<CorrelationReport> {
    let (names, columns) = data.columns();
    spearman_columns(names, &columns)
}

impl CorrelationReport {
    /// Square table in clustered order; absent entries are empty cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.order.iter().map(|&i| self.names[i].clone()));
        w.write_record(&header).expect("in-memory write");
        for &i in &self.order {
            let mut rec = vec![self.names[i].clone()];
            rec.extend(
                self.order
                    .iter()
                    .map(|&j| self.matrix[i][j].map(|v| v.to_string()).unwrap_or_default()),
            );
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        self.matrix[i][j]
    }
}

/// UPGMA on Euclidean distances between rows; returns the dendrogram leaf order.
/// The closest pair merges first (ties to the lowest indices); within a merge the
/// cluster holding the smaller original index goes left.
pub fn average_linkage_order(rows: &[Vec<f64>]) -> Vec<usize> {
    let n = rows.len();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let mut clusters: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(&rows[i], &rows[j])).collect()).collect();
    while clusters.len() > 1 {
        let mut best = (0, 1);
        for i in 0..clusters.len() {
            for j in i + 1..clusters.len() {
                if d[i][j] < d[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        let (i, j) = best;
        let (ni, nj) = (clusters[i].len() as f64, clusters[j].len() as f64);
        let merged_row: Vec<f64> = (0..clusters.len()).map(|k| (ni * d[i][k] + nj * d[j][k]) / (ni + nj)).collect();
        let right = clusters.remove(j);
        let mut left = std::mem::take(&mut clusters[i]);
        let (min_l, min_r) = (left.iter().min(), right.iter().min());
        if min_r < min_l {
            let mut r = right;
            r.extend(left);
            left = r;
        } else {
            left.extend(right);
        }
        clusters[i] = left;
        d.remove(j);
        for row in d.iter_mut() {
            row.remove(j);
        }
        let mut merged_row = merged_row;
        merged_row.remove(j);
        for (k, v) in merged_row.iter().enumerate() {
            d[i][k] = *v;
            d[k][i] = *v;
        }
        d[i][i] = 0.0;
    }
    clusters.pop().unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaReport {
    pub names: Vec<String>,
    pub standardized: bool,
    /// Eigenvalues, descending; tiny negative round-off clamped to zero.
    pub eigenvalues: Vec<f64>,
    pub explained: Vec<f64>,
    /// Unit loading vector per component, largest-magnitude entry positive.
    pub loadings: Vec<Vec<f64>>,
    /// Per-row scores on the leading components (at most three).
    pub scores: Vec<Vec<f64>>,
}

/// Eigen-decomposition of a symmetric matrix: (eigenvalues desc, unit vectors).
pub fn pca_from_covariance(cov: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let k = cov.len();
    if k < 2 {
        return Err(StatsError::TooFewColumns { need: 2, got: k });
    }
    let m = DMatrix::from_fn(k, k, |i, j| cov[i][j]);
    if m.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite(0));
    }
    let eig = SymmetricEigen::new(m);
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = idx.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let vectors = idx
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let pivot = v.iter().copied().fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok((values, vectors))
}

/// PCA of column-major data. Standardizing divides by each column's sample
/// standard deviation (constant columns are left centred at zero).
pub fn pca_columns(names: Vec<String>, columns: &[Vec<f64>], standardize: bool) -> Result<PcaReport> {
    let n = check_columns(columns, 2)?;
    let k = columns.len();
    if k < 2 {
        return Err(StatsError::TooFewColumns { need: 2, got: k });
    }
    let centred: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| {
            let m = mean(c);
            let s = if standardize { std_dev(c) } else { 1.0 };
            let s = if s > 0.0 { s } else { 1.0 };
            c.iter().map(|v| (v - m) / s).collect()
        })
        .collect();
    let cov: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 - 1.0))
                .collect()
        })
        .collect();
    let (eigenvalues, loadings) = pca_from_covariance(&cov)?;
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(StatsError::ZeroVariance("every column".into()));
    }
    let explained = eigenvalues.iter().map(|v| v / total).collect();
    let top = k.min(3);
    let scores = (0..n)
        .map(|r| {
            loadings[..top]
                .iter()
                .map(|l| l.iter().zip(&centred).map(|(w, c)| w * c[r]).sum())
                .collect()
        })
        .collect();
    Ok(PcaReport {
        names,
        standardized: standardize,
        eigenvalues,
        explained,
        loadings,
        scores,
    })
}

pub fn pca(data: &Dataset, standardize: bool) -> Result<PcaReport> {
    let (names, columns) = data.columns();
    pca_columns(names, &columns, standardize)
}

impl PcaReport {
    /// Loadings table (one row per variable) followed by the variance rows.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["variable".to_string()];
        header.extend((1..=self.loadings.len()).map(|c| format!("PC{c}")));
        w.write_record(&header).expect("in-memory write");
        for (j, name) in self.names.iter().enumerate() {
            let mut rec = vec![name.clone()];
            rec.extend(self.loadings.iter().map(|l| l[j].to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        let mut ev = vec!["eigenvalue".to_string()];
        ev.extend(self.eigenvalues.iter().map(f64::to_string));
        w.write_record(&ev).expect("in-memory write");
        let mut ex = vec!["explained".to_string()];
        ex.extend(self.explained.iter().map(f64::to_string));
        w.write_record(&ex).expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    /// Axis ranges; default is the data range padded by three bandwidths.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
    /// Per-axis bandwidths; default is 1.06·σ·n^(−1/5).
    pub bandwidth: Option<(f64, f64)>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 50,
            ny: 50,
            x_range: None,
            y_range: None,
            bandwidth: None,
        }
    }
}

/// Values on a 2-D grid: `values[i][j]` at `(x_axis[i], y_axis[j])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub x_name: String,
    pub y_name: String,
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl Grid {
    /// Long format: `x,y,value` per grid point.
    pub fn to_csv(&self, value_name: &str) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([self.x_name.as_str(), self.y_name.as_str(), value_name])
            .expect("in-memory write");
        for (i, x) in self.x_axis.iter().enumerate() {
            for (j, y) in self.y_axis.iter().enumerate() {
                w.write_record([x.to_string(), y.to_string(), self.values[i][j].to_string()])
                    .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    /// Index of the largest value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        for (i, row) in self.values.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if *v > self.values[best.0][best.1] {
                    best = (i, j);
                }
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeGrid {
    pub grid: Grid,
    pub bandwidth: (f64, f64),
}

fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn silverman_bandwidth(v: &[f64]) -> f64 {
    1.06 * std_dev(v) * (v.len() as f64).powf(-0.2)
}

/// Product-Gaussian kernel density estimate on a regular grid.
pub fn kde2d(x_name: &str, x: &[f64], y_name: &str, y: &[f64], spec: &GridSpec) -> Result<KdeGrid> {
    check_columns(&[x.to_vec(), y.to_vec()], 2)?;
    if spec.nx < 2 || spec.ny < 2 {
        return Err(StatsError::InvalidGrid("need at least 2 points per axis".into()));
    }
    let (hx, hy) = match spec.bandwidth {
        Some((hx, hy)) if hx > 0.0 && hy > 0.0 => (hx, hy),
        Some(_) => return Err(StatsError::InvalidGrid("bandwidths must be positive".into())),
        None => {
            let hx = silverman_bandwidth(x);
            let hy = silverman_bandwidth(y);
            if hx <= 0.0 {
                return Err(StatsError::ZeroVariance(x_name.into()));
            }
            if hy <= 0.0 {
                return Err(StatsError::ZeroVariance(y_name.into()));
            }
            (hx, hy)
        }
    };
    let padded = |v: &[f64], h: f64| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo - 3.0 * h, hi + 3.0 * h)
    };
    let (x0, x1) = spec.x_range.unwrap_or_else(|| padded(x, hx));
    let (y0, y1) = spec.y_range.unwrap_or_else(|| padded(y, hy));
    if !(x0 < x1 && y0 < y1) {
        return Err(StatsError::InvalidGrid("empty axis range".into()));
    }
    let xa = axis(x0, x1, spec.nx);
    let ya = axis(y0, y1, spec.ny);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * hx * hy * x.len() as f64);
    let values = xa
        .par_iter()
        .map(|gx| {
            ya.iter()
                .map(|gy| {
                    let s: f64 = x
                        .iter()
                        .zip(y)
                        .map(|(px, py)| (-0.5 * (((gx - px) / hx).powi(2) + ((gy - py) / hy).powi(2))).exp())
                        .sum();
                    norm * s
                })
                .collect()
        })
        .collect();
    Ok(KdeGrid {
        grid: Grid {
            x_name: x_name.into(),
            y_name: y_name.into(),
            x_axis: xa,
            y_axis: ya,
            values,
        },
        bandwidth: (hx, hy),
    })
}

/// Trapezoidal integral of grid values.
pub fn trapezoid_2d(grid: &Grid) -> f64 {
    let weights = |a: &[f64]| -> Vec<f64> {
        (0..a.len())
            .map(|i| {
                let left = if i > 0 { a[i] - a[i - 1] } else { 0.0 };
                let right = if i + 1 < a.len() { a[i + 1] - a[i] } else { 0.0 };
                0.5 * (left + right)
            })
            .collect()
    };
    let (wx, wy) = (weights(&grid.x_axis), weights(&grid.y_axis));
    grid.values
        .iter()
        .zip(&wx)
        .map(|(row, a)| row.iter().zip(&wy).map(|(v, b)| v * a * b).sum::<f64>())
        .sum()
}

/// Evaluates `f` over a grid of features `i` and `j`, other inputs fixed at `base`.
pub fn response_surface<F>(
    f: F,
    base: &[f64],
    (i, i_name, i_range): (usize, &str, (f64, f64)),
    (j, j_name, j_range): (usize, &str, (f64, f64)),
    n: usize,
) -> Result<Grid>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if n < 2 || i == j || i >= base.len() || j >= base.len() {
        return Err(StatsError::InvalidGrid("need two distinct features and n >= 2".into()));
    }
    let xa = axis(i_range.0, i_range.1, n);
    let ya = axis(j_range.0, j_range.1, n);
    let values = xa
        .par_iter()
        .map(|&a| {
            ya.iter()
                .map(|&b| {
                    let mut x = base.to_vec();
                    x[i] = a;
                    x[j] = b;
                    f(&x)
                })
                .collect()
        })
        .collect();
    Ok(Grid {
        x_name: i_name.into(),
        y_name: j_name.into(),
        x_axis: xa,
        y_axis: ya,
        values,
    })
}
