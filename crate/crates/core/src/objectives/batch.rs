use crate::distributions::{Action, PolicyDist};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Tolerance between a recorded old log-probability and the snapshot it came from.
pub const OLD_LOG_PROB_TOLERANCE: f64 = 1e-9;

/// One transition collected under the old policy.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub state: Vec<T>,
    pub action: Action<T>,
    pub old_log_prob: T,
    pub advantage: T,
    pub ret: T,
    pub old_dist: PolicyDist<T>,
}

impl<T: Scalar> Sample<T> {
    /// Builds a sample whose old log-probability is read off `old_dist`.
    pub fn from_dist(state: Vec<T>, action: Action<T>, advantage: T, ret: T, old_dist: PolicyDist<T>) -> Result<Self> {
        let old_log_prob = old_dist.log_prob(&action)?.value();
        Ok(Self {
            state,
            action,
            old_log_prob,
            advantage,
            ret,
            old_dist,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch<T> {
    samples: Vec<Sample<T>>,
}

impl<T: Scalar> SampleBatch<T> {
    /// Rejects empty batches and samples whose `old_log_prob` disagrees with `old_dist`.
    pub fn new(samples: Vec<Sample<T>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid_argument("sample batch is empty"));
        }
        let tol = T::lit(OLD_LOG_PROB_TOLERANCE);
        for (i, s) in samples.iter().enumerate() {
            let lp = s.old_dist.log_prob(&s.action)?.value();
            let scale = T::one().max(lp.abs());
            if !((lp - s.old_log_prob).abs() <= tol * scale) {
                return Err(Error::invalid_argument(format!(
                    "sample {i}: recorded old log-prob {} but snapshot gives {lp}",
                    s.old_log_prob
                )));
            }
            if !s.advantage.is_finite() || !s.ret.is_finite() {
                return Err(Error::invalid_argument(format!(
                    "sample {i}: non-finite advantage or return"
                )));
            }
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample<T>] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Option<&Sample<T>> {
        self.samples.get(i)
    }

    /// Shifts advantages to zero mean and scales them by `1 / (std + 1e-8)`.
    pub fn normalize_advantages(&mut self) {
        let n = T::from_usize_lossy(self.samples.len());
        let mean = self.samples.iter().map(|s| s.advantage).sum::<T>() / n;
        let var = self
            .samples
            .iter()
            .map(|s| (s.advantage - mean) * (s.advantage - mean))
            .sum::<T>()
            / n;
        let denom = var.sqrt() + T::lit(1e-8);
        for s in &mut self.samples {
            s.advantage = (s.advantage - mean) / denom;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::CategoricalDist;

    fn sample(a: usize, adv: f64) -> Sample<f64> {
        let dist = PolicyDist::Categorical(CategoricalDist::new(vec![0.0, 1.0]).unwrap());
        Sample::from_dist(vec![0.0], Action::Discrete(a), adv, adv, dist).unwrap()
    }

    #[test]
    fn rejects_inconsistent_log_prob() {
        let mut s = sample(0, 1.0);
        s.old_log_prob += 1e-6;
        assert!(SampleBatch::new(vec![s]).is_err());
        assert!(SampleBatch::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn normalization_gives_zero_mean_unit_std() {
        let mut b = SampleBatch::new((0..5).map(|i| sample(i % 2, i as f64 * 3.0)).collect()).unwrap();
        b.normalize_advantages();
        let adv: Vec<f64> = b.samples().iter().map(|s| s.advantage).collect();
        let mean = adv.iter().sum::<f64>() / 5.0;
        let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / 5.0;
        assert!(mean.abs() < 1e-12);
        assert!((var.sqrt() - 1.0).abs() < 1e-6);
    }
}
