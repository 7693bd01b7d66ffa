//! Statue-level train/validation/test partition.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fractions that reproduce a 91/10/9 partition of 110 statues.
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.827, 0.091, 0.082);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_statues: Vec<u32>,
    pub val_statues: Vec<u32>,
    pub test_statues: Vec<u32>,
    pub seed: u64,
}

impl SplitSpec {
    /// Pairwise disjointness and membership in `all`.
    pub fn validate(&self, all: &[u32]) -> Result<()> {
        let groups = [&self.train_statues, &self.val_statues, &self.test_statues];
        for (i, a) in groups.iter().enumerate() {
            for id in a.iter() {
                if !all.contains(id) {
                    return Err(Error::invalid(format!("split statue {id} is not in the dataset")));
                }
                if groups[i + 1..].iter().any(|b| b.contains(id)) {
                    return Err(Error::invalid(format!("statue {id} appears in two splits")));
                }
            }
        }
        Ok(())
    }

    /// Class index of a training statue.
    pub fn label_of(&self, statue: u32) -> Option<usize> {
        self.train_statues.iter().position(|&s| s == statue)
    }
}

/// Shuffles statue ids with `seed`, then takes `round(f·N)` statues for
/// validation and test; training gets the remainder. Each list is returned
/// sorted.
pub fn split_by_statue(statues: &[u32], fractions: (f64, f64, f64), seed: u64) -> Result<SplitSpec> {
    let (ft, fv, fs) = fractions;
    if !(ft > 0.0 && fv > 0.0 && fs > 0.0) {
        return Err(Error::invalid(format!("split fractions must be positive, got {fractions:?}")));
    }
    if ((ft + fv + fs) - 1.0).abs() > 1e-3 {
        return Err(Error::invalid(format!("split fractions must sum to 1, got {}", ft + fv + fs)));
    }
    let mut ids = statues.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 statues to split, got {}", ids.len())));
    }
    let n = ids.len();
    let n_val = ((fv * n as f64).round() as usize).max(1);
    let n_test = ((fs * n as f64).round() as usize).max(1);
    if n_val + n_test >= n {
        return Err(Error::invalid("split leaves no training statues"));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut val = ids[..n_val].to_vec();
    let mut test = ids[n_val..n_val + n_test].to_vec();
    let mut train = ids[n_val + n_test..].to_vec();
    val.sort_unstable();
    test.sort_unstable();
    train.sort_unstable();
    Ok(SplitSpec {
        train_statues: train,
        val_statues: val,
        test_statues: test,
        seed,
    })
}
