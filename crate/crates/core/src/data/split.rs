use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPlan {
    /// Train/val/test fractions; the test set takes the remainder.
    Ratio { train: f64, val: f64, seed: u64 },
    /// `k` folds; each run tests on one fold and validates on a
    /// `val_fraction` share of the remaining samples.
    KFold {
        k: usize,
        val_fraction: f64,
        seed: u64,
    },
}

impl SplitPlan {
    pub fn kfold(k: usize, seed: u64) -> Self {
        Self::KFold {
            k,
            val_fraction: 0.1,
            seed,
        }
    }

    pub fn ratio(seed: u64) -> Self {
        Self::Ratio {
            train: 0.8,
            val: 0.1,
            seed,
        }
    }

    /// One train/val/test assignment per run: a single one for ratio
    /// plans, one per held-out fold for k-fold plans.
    pub fn apply(&self, n: usize) -> Result<Vec<RatioSplit>> {
        match *self {
            Self::Ratio { train, val, seed } => Ok(vec![split_ratio(n, train, val, seed)?]),
            Self::KFold {
                k,
                val_fraction,
                seed,
            } => {
                if !(val_fraction > 0.0 && val_fraction < 1.0) {
                    return Err(Error::Config(format!(
                        "validation fraction {val_fraction} outside (0, 1)"
                    )));
                }
                let folds = kfold(n, k, seed)?;
                (0..k)
                    .map(|i| fold_roles(&folds, i, val_fraction))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatioSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

/// Seeded shuffle, then contiguous cuts of `floor(train·n)` and
/// `floor(val·n)` rows; the rest is the test set.
pub fn split_ratio(n: usize, train: f64, val: f64, seed: u64) -> Result<RatioSplit> {
    if n < 10 {
        return Err(Error::Data(format!(
            "ratio split needs at least 10 samples, got {n}"
        )));
    }
    if !(train > 0.0 && val > 0.0 && train + val < 1.0) {
        return Err(Error::Config(format!("bad split fractions {train}/{val}")));
    }
    let order = shuffled(n, seed);
    let n_train = (train * n as f64).floor() as usize;
    let n_val = (val * n as f64).floor() as usize;
    Ok(RatioSplit {
        train: order[..n_train].to_vec(),
        val: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    })
}

/// Seeded shuffle cut into `k` contiguous folds; the first `n mod k` folds
/// hold one extra sample.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k ≥ 2, got {k}")));
    }
    if n < k {
        return Err(Error::Data(format!("{n} samples cannot fill {k} folds")));
    }
    let order = shuffled(n, seed);
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(order[start..start + len].to_vec());
        start += len;
    }
    Ok(folds)
}

/// Roles for fold `i`: that fold is the test set; the first
/// `floor(val_fraction · rest)` (at least one) of the remaining shuffled
/// samples validate and the rest train.
pub fn fold_roles(folds: &[Vec<usize>], i: usize, val_fraction: f64) -> Result<RatioSplit> {
    let rest: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|&(f, _)| f != i)
        .flat_map(|(_, fold)| fold.iter().copied())
        .collect();
    let n_val = ((val_fraction * rest.len() as f64).floor() as usize).max(1);
    if n_val >= rest.len() {
        return Err(Error::Data(format!(
            "{} samples outside fold {i} leave none for training",
            rest.len()
        )));
    }
    Ok(RatioSplit {
        train: rest[n_val..].to_vec(),
        val: rest[..n_val].to_vec(),
        test: folds[i].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sorted(mut v: Vec<usize>) -> Vec<usize> {
        v.sort_unstable();
        v
    }

    #[test]
    fn eighty_ten_ten() {
        let s = split_ratio(100, 0.8, 0.1, 3).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (80, 10, 10));
        assert_eq!(s, split_ratio(100, 0.8, 0.1, 3).unwrap());
        assert_ne!(s.train, split_ratio(100, 0.8, 0.1, 4).unwrap().train);
    }

    #[test]
    fn balanced_fold_remainder() {
        let folds = kfold(101, 10, 0).unwrap();
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![11, 10, 10, 10, 10, 10, 10, 10, 10, 10]);
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(split_ratio(9, 0.8, 0.1, 0).is_err());
        assert!(kfold(4, 5, 0).is_err());
        assert!(kfold(10, 1, 0).is_err());
    }

    #[test]
    fn fold_roles_partition() {
        let folds = kfold(23, 5, 1).unwrap();
        for i in 0..5 {
            let r = fold_roles(&folds, i, 0.1).unwrap();
            assert_eq!(r.val.len(), (18 - usize::from(i < 3)) / 10);
            let all = sorted([r.train, r.val, r.test].concat());
            assert_eq!(all, (0..23).collect::<Vec<_>>());
        }
    }

    #[test]
    fn plans_yield_one_split_per_run() {
        assert_eq!(SplitPlan::ratio(1).apply(50).unwrap().len(), 1);
        let runs = SplitPlan::kfold(10, 2).apply(200).unwrap();
        assert_eq!(runs.len(), 10);
        for r in &runs {
            assert_eq!((r.train.len(), r.val.len(), r.test.len()), (162, 18, 20));
        }
    }

    proptest! {
        #[test]
        fn ratio_split_partitions(n in 10usize..400, seed in any::<u64>()) {
            let s = split_ratio(n, 0.8, 0.1, seed).unwrap();
            prop_assert_eq!(s.train.len(), n * 8 / 10);
            let all = sorted([s.train, s.val, s.test].concat());
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn folds_partition_within_one(n in 20usize..400, k in 2usize..21, seed in any::<u64>()) {
            let folds = kfold(n, k, seed).unwrap();
            let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert_eq!(sorted(folds.concat()), (0..n).collect::<Vec<_>>());
            prop_assert_eq!(folds, kfold(n, k, seed).unwrap());
        }
    }
}
