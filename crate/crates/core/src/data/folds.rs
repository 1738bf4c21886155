use super::{DataError, Result};
use crate::rng::SeededRng;
use serde::{Deserialize, Serialize};

/// Disjoint test folds covering `0..n`. Fold `f` trains on every other fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub folds: Vec<Vec<usize>>,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(f, _)| f != fold)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect()
    }

    /// Short provenance string recorded in artifacts.
    pub fn describe(&self) -> String {
        format!("kfold(k={}, n={}, seed={})", self.k, self.n(), self.seed)
    }
}

/// Shuffles `0..n` with [`SeededRng`] and cuts it into `k` contiguous folds; the
/// first `n mod k` folds get one extra index.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(DataError::InvalidFolds(format!("k must be at least 2, got {k}")));
    }
    if k > n {
        return Err(DataError::InvalidFolds(format!("k = {k} exceeds row count {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(FoldPlan { k, seed, folds })
}
