use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::AnnotatedLog;
use crate::{Error, Result};

/// Train/validation/test fractions and the shuffle seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_frac: f64, val_frac: f64, test_frac: f64, seed: u64) -> Result<SplitSpec> {
        let fracs = [train_frac, val_frac, test_frac];
        if fracs.iter().any(|f| !(f.is_finite() && *f > 0.0 && *f < 1.0)) {
            return Err(Error::InvalidArgument(format!(
                "split fractions must lie in (0, 1), got {fracs:?}"
            )));
        }
        let sum: f64 = fracs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split fractions must sum to 1, got {sum}"
            )));
        }
        Ok(SplitSpec {
            train_frac,
            val_frac,
            test_frac,
            seed,
        })
    }

    /// The 20% / 20% / 60% protocol.
    pub fn standard(seed: u64) -> SplitSpec {
        SplitSpec::new(0.2, 0.2, 0.6, seed).expect("valid fractions")
    }

    /// `(train, val, test)` sizes for `n` items; the remainder goes to test.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let part = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
        let (tr, va) = (part(self.train_frac), part(self.val_frac));
        (tr, va, n - tr - va)
    }
}

pub type Split = (Vec<AnnotatedLog>, Vec<AnnotatedLog>, Vec<AnnotatedLog>);

/// Seeded shuffle followed by a cut into three disjoint parts.
pub fn split_dataset(logs: &[AnnotatedLog], spec: &SplitSpec) -> Result<Split> {
    if logs.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "need at least 5 logs to split, got {}",
            logs.len()
        )));
    }
    let mut order: Vec<usize> = (0..logs.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let (tr, va, _) = spec.sizes(logs.len());
    let pick = |idx: &[usize]| idx.iter().map(|&i| logs[i].clone()).collect::<Vec<_>>();
    Ok((
        pick(&order[..tr]),
        pick(&order[tr..tr + va]),
        pick(&order[tr + va..]),
    ))
}
