use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Simulation-level split fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub train: f64,
    #[serde(default)]
    pub validation: f64,
    pub test: f64,
    #[serde(default)]
    pub seed: u64,
}

impl PartitionSpec {
    pub fn new(train: f64, validation: f64, test: f64, seed: u64) -> Self {
        PartitionSpec { train, validation, test, seed }
    }

    /// Train and test must be positive; validation may be zero.
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f.is_finite() && f >= 0.0;
        if !(ok(self.train) && ok(self.validation) && ok(self.test) && self.train > 0.0 && self.test > 0.0) {
            return Err(Error::invalid("partition fractions must be finite, train and test > 0"));
        }
        if (self.train + self.validation + self.test - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("partition fractions must sum to 1"));
        }
        Ok(())
    }

    /// `(train, validation, test)` simulation counts for `n` simulations:
    /// train rounds down, test rounds half up, validation takes the rest
    /// (or train does, when the validation fraction is zero).
    pub fn counts(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let nf = n as f64;
        let train = (self.train * nf + 1e-9).floor() as usize;
        let test = (self.test * nf + 0.5 + 1e-9).floor() as usize;
        let test = test.min(n.saturating_sub(train));
        let (train, val) = if self.validation > 0.0 {
            (train, n - train - test)
        } else {
            (n - test, 0)
        };
        if train == 0 || test == 0 || (self.validation > 0.0 && val == 0) {
            return Err(Error::invalid(format!(
                "{n} simulations are too few for fractions ({}, {}, {})",
                self.train, self.validation, self.test
            )));
        }
        Ok((train, val, test))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles the simulation ids with `spec.seed` and cuts them by [`PartitionSpec::counts`].
pub fn partition(sim_ids: &[usize], spec: &PartitionSpec) -> Result<Partition> {
    let (n_train, n_val, _) = spec.counts(sim_ids.len())?;
    let mut ids = sim_ids.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != sim_ids.len() {
        return Err(Error::invalid("duplicate simulation ids"));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let mut train = ids[..n_train].to_vec();
    let mut validation = ids[n_train..n_train + n_val].to_vec();
    let mut test = ids[n_train + n_val..].to_vec();
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(Partition { train, validation, test })
}

/// `k` disjoint folds covering `sim_ids`; the first `n mod k` folds hold one extra id.
pub fn kfold(sim_ids: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let n = sim_ids.len();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("k = {k} must be in 2..={n}")));
    }
    let mut ids = sim_ids.to_vec();
    ids.sort_unstable();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        let mut fold = ids[start..start + len].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += len;
    }
    Ok(folds)
}
