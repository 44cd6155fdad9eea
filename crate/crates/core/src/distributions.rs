//! Action distributions: diagonal Gaussian and categorical.
//!
//! Every quantity the surrogate objectives consume is defined here on plain
//! scalars: log-probability, likelihood ratio, closed-form KL divergence and
//! entropy. The tape-tracked counterparts live in [`crate::objectives::head`].

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{ln_two_pi, Scalar};

/// Tolerance on `Σ p = 1` for probability vectors handed to [`kl_categorical`].
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

/// Natural-log density (continuous) or log-mass (discrete).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogProb<T>(pub T);

impl<T: Scalar> LogProb<T> {
    pub fn value(self) -> T {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action<T> {
    Discrete(usize),
    Continuous(Vec<T>),
}

impl<T: Scalar> Action<T> {
    pub fn as_discrete(&self) -> Option<usize> {
        match self {
            Action::Discrete(a) => Some(*a),
            Action::Continuous(_) => None,
        }
    }

    pub fn as_continuous(&self) -> Option<&[T]> {
        match self {
            Action::Discrete(_) => None,
            Action::Continuous(a) => Some(a),
        }
    }
}

/// Diagonal Gaussian with a per-dimension log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist<T> {
    mean: Vec<T>,
    log_std: Vec<T>,
}

impl<T: Scalar> GaussianDist<T> {
    pub fn new(mean: Vec<T>, log_std: Vec<T>) -> Result<Self> {
        if mean.is_empty() || mean.len() != log_std.len() {
            return Err(Error::invalid_argument(format!(
                "gaussian needs equal nonzero dimensions, got mean {} / log_std {}",
                mean.len(),
                log_std.len()
            )));
        }
        Ok(Self { mean, log_std })
    }

    /// One-dimensional Gaussian from mean and standard deviation.
    pub fn scalar(mean: T, std: T) -> Result<Self> {
        if std.is_nan() || std <= T::zero() {
            return Err(Error::invalid_argument("standard deviation must be positive"));
        }
        Self::new(vec![mean], vec![std.ln()])
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn log_std(&self) -> &[T] {
        &self.log_std
    }

    pub fn std(&self) -> Vec<T> {
        self.log_std.iter().map(|l| l.exp()).collect()
    }

    fn check_finite(&self) -> Result<()> {
        let finite = self.mean.iter().chain(&self.log_std).all(|x| x.is_finite());
        if finite {
            Ok(())
        } else {
            Err(Error::invalid_state("gaussian has non-finite mean or log_std"))
        }
    }

    pub fn log_prob(&self, action: &[T]) -> Result<LogProb<T>> {
        if action.len() != self.dim() {
            return Err(Error::invalid_argument(format!(
                "action has dimension {}, distribution has {}",
                action.len(),
                self.dim()
            )));
        }
        self.check_finite()?;
        let half = T::lit(0.5);
        let mut total = T::zero();
        for ((&a, &mu), &ls) in action.iter().zip(&self.mean).zip(&self.log_std) {
            let z = (a - mu) * (-ls).exp();
            total += -half * z * z - ls - half * ln_two_pi::<T>();
        }
        Ok(LogProb(total))
    }

    pub fn entropy(&self) -> T {
        let per_dim = T::lit(0.5) * (ln_two_pi::<T>() + T::one());
        self.log_std.iter().map(|&ls| ls + per_dim).sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(&mu, &ls)| {
                let z: f64 = rng.sample(StandardNormal);
                mu + ls.exp() * T::lit(z)
            })
            .collect()
    }
}

/// Categorical distribution parametrized by unnormalized logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDist<T> {
    logits: Vec<T>,
}

impl<T: Scalar> CategoricalDist<T> {
    pub fn new(logits: Vec<T>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::invalid_argument("categorical needs at least one logit"));
        }
        Ok(Self { logits })
    }

    pub fn n_actions(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    fn check_finite(&self) -> Result<()> {
        if self.logits.iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid_state("categorical has non-finite logits"))
        }
    }

    /// Log-softmax of the logits, shifted by the maximum for stability.
    pub fn log_probs(&self) -> Vec<T> {
        let max = self.logits.iter().copied().fold(T::neg_infinity(), T::max);
        let log_norm = self.logits.iter().map(|&l| (l - max).exp()).sum::<T>().ln() + max;
        self.logits.iter().map(|&l| l - log_norm).collect()
    }

    pub fn probs(&self) -> Vec<T> {
        self.log_probs().into_iter().map(T::exp).collect()
    }

    pub fn log_prob(&self, action: usize) -> Result<LogProb<T>> {
        if action >= self.n_actions() {
            return Err(Error::invalid_argument(format!(
                "action index {action} out of range for {} actions",
                self.n_actions()
            )));
        }
        self.check_finite()?;
        Ok(LogProb(self.log_probs()[action]))
    }

    pub fn entropy(&self) -> T {
        self.log_probs()
            .into_iter()
            .map(|lp| {
                let p = lp.exp();
                if p > T::zero() {
                    -p * lp
                } else {
                    T::zero()
                }
            })
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.probs(), rng)
    }
}

/// Inverse-CDF draw from a probability vector. Zero-mass entries are never returned.
pub fn sample_categorical<T: Scalar, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> usize {
    let u = T::lit(rng.random::<f64>());
    let mut acc = T::zero();
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > T::zero() {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// The distribution produced by a policy at one state.
#[derive(Debug, Clone, PartialEq)]
pub enum PolicyDist<T> {
    Gaussian(GaussianDist<T>),
    Categorical(CategoricalDist<T>),
}

impl<T: Scalar> PolicyDist<T> {
    pub fn log_prob(&self, action: &Action<T>) -> Result<LogProb<T>> {
        match (self, action) {
            (PolicyDist::Gaussian(g), Action::Continuous(a)) => g.log_prob(a),
            (PolicyDist::Categorical(c), Action::Discrete(a)) => c.log_prob(*a),
            _ => Err(Error::invalid_argument("action kind does not match distribution kind")),
        }
    }

    pub fn entropy(&self) -> T {
        match self {
            PolicyDist::Gaussian(g) => g.entropy(),
            PolicyDist::Categorical(c) => c.entropy(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Action<T> {
        match self {
            PolicyDist::Gaussian(g) => Action::Continuous(g.sample(rng)),
            PolicyDist::Categorical(c) => Action::Discrete(c.sample(rng)),
        }
    }

    /// `D_KL(self || other)` with `self` playing the old policy.
    pub fn kl(&self, other: &PolicyDist<T>) -> Result<T> {
        match (self, other) {
            (PolicyDist::Gaussian(old), PolicyDist::Gaussian(new)) => kl_gaussian(old, new),
            (PolicyDist::Categorical(old), PolicyDist::Categorical(new)) => kl_categorical_logits(old, new),
            _ => Err(Error::invalid_argument("KL between different distribution kinds")),
        }
    }
}

/// `exp(new − old)`; errors when the ratio overflows.
pub fn ratio<T: Scalar>(new_lp: LogProb<T>, old_lp: LogProb<T>) -> Result<T> {
    if !new_lp.0.is_finite() || !old_lp.0.is_finite() {
        return Err(Error::invalid_argument("log-probabilities must be finite"));
    }
    let r = (new_lp.0 - old_lp.0).exp();
    if r.is_infinite() {
        return Err(Error::NumericOverflow(format!(
            "likelihood ratio overflows: log ratio {}",
            new_lp.0 - old_lp.0
        )));
    }
    Ok(r)
}

fn check_normalized<T: Scalar>(p: &[T], name: &str) -> Result<()> {
    let sum: T = p.iter().copied().sum();
    let ok =
        p.iter().all(|&x| x >= T::zero() && x.is_finite()) && (sum - T::one()).abs() <= T::lit(NORMALIZATION_TOLERANCE);
    if ok {
        Ok(())
    } else {
        Err(Error::invalid_argument(format!(
            "{name} is not a probability vector (sum {sum})"
        )))
    }
}

/// `Σ_d p_old(d) ln(p_old(d) / p_new(d))` on probability vectors.
///
/// Returns `+∞` when `p_new` drops support that `p_old` has.
pub fn kl_categorical<T: Scalar>(old: &[T], new: &[T]) -> Result<T> {
    if old.len() != new.len() || old.is_empty() {
        return Err(Error::invalid_argument(format!(
            "probability vectors have lengths {} and {}",
            old.len(),
            new.len()
        )));
    }
    check_normalized(old, "old distribution")?;
    check_normalized(new, "new distribution")?;
    let mut total = T::zero();
    for (&po, &pn) in old.iter().zip(new) {
        if po == T::zero() {
            continue;
        }
        if pn == T::zero() {
            return Ok(T::infinity());
        }
        total += po * (po.ln() - pn.ln());
    }
    // Rounding can leave a tiny negative value for equal inputs.
    Ok(total.max(T::zero()))
}

/// Categorical KL computed in log space from logits.
pub fn kl_categorical_logits<T: Scalar>(old: &CategoricalDist<T>, new: &CategoricalDist<T>) -> Result<T> {
    if old.n_actions() != new.n_actions() {
        return Err(Error::invalid_argument("categorical KL over different supports"));
    }
    let lo = old.log_probs();
    let ln = new.log_probs();
    let total: T = lo
        .iter()
        .zip(&ln)
        .map(|(&a, &b)| {
            let p = a.exp();
            if p > T::zero() {
                p * (a - b)
            } else {
                T::zero()
            }
        })
        .sum();
    Ok(total.max(T::zero()))
}

/// Closed-form `D_KL(old || new)` for diagonal Gaussians, summed over dimensions.
pub fn kl_gaussian<T: Scalar>(old: &GaussianDist<T>, new: &GaussianDist<T>) -> Result<T> {
    if old.dim() != new.dim() {
        return Err(Error::invalid_argument(format!(
            "gaussian KL over dimensions {} and {}",
            old.dim(),
            new.dim()
        )));
    }
    let half = T::lit(0.5);
    let mut total = T::zero();
    for i in 0..old.dim() {
        let (mo, lo) = (old.mean[i], old.log_std[i]);
        let (mn, ln) = (new.mean[i], new.log_std[i]);
        let var_ratio = ((lo - ln) + (lo - ln)).exp();
        let diff = mo - mn;
        total += (ln - lo) + half * var_ratio + half * diff * diff * (-(ln + ln)).exp() - half;
    }
    Ok(total.max(T::zero()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normal_pdf_ln(x: f64, mu: f64, sigma: f64) -> f64 {
        // Evaluated from the textbook density, not the implementation's formula.
        let pdf = (-(x - mu).powi(2) / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
        pdf.ln()
    }

    #[test]
    fn gaussian_log_prob_matches_density() {
        let g = GaussianDist::new(vec![0.0], vec![0.0]).unwrap();
        let lp = g.log_prob(&[0.0]).unwrap().value();
        assert_abs_diff_eq!(lp, -0.918_938_533_204_672_7, epsilon = 1e-12);
        assert_abs_diff_eq!(lp, normal_pdf_ln(0.0, 0.0, 1.0), epsilon = 1e-12);

        let g2 = GaussianDist::new(vec![1.0, 1.0], vec![0.0, 0.0]).unwrap();
        let lp2 = g2.log_prob(&[1.0, 1.0]).unwrap().value();
        assert_abs_diff_eq!(lp2, -(2.0 * std::f64::consts::PI).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lp2, -1.8379, epsilon = 1e-4);
    }

    #[test]
    fn categorical_log_prob_uniform() {
        let c = CategoricalDist::new(vec![0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(c.log_prob(0).unwrap().value(), 0.5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn log_prob_errors() {
        let g = GaussianDist::new(vec![0.0, 0.0], vec![0.0, 0.0]).unwrap();
        assert!(matches!(g.log_prob(&[0.0]), Err(Error::InvalidArgument(_))));
        let c = CategoricalDist::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(c.log_prob(2), Err(Error::InvalidArgument(_))));
        let bad = GaussianDist::new(vec![f64::NAN], vec![0.0]).unwrap();
        assert!(matches!(bad.log_prob(&[0.0]), Err(Error::InvalidState(_))));
        let bad_c = CategoricalDist::new(vec![f64::INFINITY, 0.0]).unwrap();
        assert!(matches!(bad_c.log_prob(0), Err(Error::InvalidState(_))));
        assert!(GaussianDist::<f64>::new(vec![0.0], vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn ratio_examples() {
        let lp = LogProb(-1.3f64);
        assert_eq!(ratio(lp, lp).unwrap(), 1.0);
        assert_abs_diff_eq!(ratio(LogProb(-1.3 + 2f64.ln()), lp).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ratio(LogProb(-1.3 - 4f64.ln()), lp).unwrap(), 0.25, epsilon = 1e-15);
        assert!(matches!(
            ratio(LogProb(800.0f64), LogProb(-10.0)),
            Err(Error::NumericOverflow(_))
        ));
    }

    #[test]
    fn kl_categorical_examples() {
        assert_eq!(kl_categorical(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        let got = kl_categorical(&[0.5, 0.5], &[0.9, 0.1]).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.5108, epsilon = 1e-4);
        assert!(kl_categorical::<f64>(&[0.5, 0.5], &[1.0, 0.0]).unwrap().is_infinite());
        assert!(matches!(
            kl_categorical(&[0.5, 0.6], &[0.5, 0.5]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn kl_gaussian_examples() {
        let std_normal = GaussianDist::scalar(0.0f64, 1.0).unwrap();
        assert_eq!(kl_gaussian(&std_normal, &std_normal).unwrap(), 0.0);
        let shifted = GaussianDist::scalar(1.0, 1.0).unwrap();
        assert_abs_diff_eq!(kl_gaussian(&std_normal, &shifted).unwrap(), 0.5, epsilon = 1e-15);
        let wide = GaussianDist::new(vec![0.0], vec![1.0]).unwrap();
        let expected = 1.0 + (-2.0f64).exp() / 2.0 - 0.5;
        let got = kl_gaussian(&std_normal, &wide).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(got, 0.5677, epsilon = 1e-4);
    }

    #[test]
    fn entropy_examples() {
        let g = GaussianDist::new(vec![0.0], vec![0.0]).unwrap();
        let expected = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert_abs_diff_eq!(g.entropy(), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(g.entropy(), 1.4189, epsilon = 1e-4);
        let c = CategoricalDist::new(vec![0.0f64; 4]).unwrap();
        assert_abs_diff_eq!(c.entropy(), 4f64.ln(), epsilon = 1e-15);
        let nearly_det = CategoricalDist::new(vec![0.0, -800.0, -800.0]).unwrap();
        assert_abs_diff_eq!(nearly_det.entropy(), 0.0, epsilon = 1e-300);
    }

    #[test]
    fn sampling_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let g = GaussianDist::new(vec![0.3, -1.2], vec![-20.0, -20.0]).unwrap();
        let a = g.sample(&mut rng);
        assert_abs_diff_eq!(a[0], 0.3, epsilon = 1e-6);
        assert_abs_diff_eq!(a[1], -1.2, epsilon = 1e-6);

        for _ in 0..200 {
            assert_eq!(sample_categorical(&[1.0f64, 0.0], &mut rng), 0);
        }
        let c = CategoricalDist::new(vec![0.0, -1000.0]).unwrap();
        for _ in 0..200 {
            assert_eq!(c.sample(&mut rng), 0);
        }

        let d = PolicyDist::Gaussian(GaussianDist::new(vec![0.0], vec![0.0]).unwrap());
        let mut r1 = ChaCha8Rng::seed_from_u64(99);
        let mut r2 = ChaCha8Rng::seed_from_u64(99);
        assert_eq!(d.sample(&mut r1), d.sample(&mut r2));
    }

    #[test]
    fn gaussian_kl_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for case in 0..5 {
            let dim = 1 + case % 3;
            let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<f64> {
                (0..dim).map(|_| rng.random_range(lo..hi)).collect()
            };
            let old = GaussianDist::new(draw(&mut rng, -1.0, 1.0), draw(&mut rng, -0.5, 0.5)).unwrap();
            let new = GaussianDist::new(draw(&mut rng, -1.0, 1.0), draw(&mut rng, -0.5, 0.5)).unwrap();
            let n = 100_000;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..n {
                let x = old.sample(&mut rng);
                let d = old.log_prob(&x).unwrap().value() - new.log_prob(&x).unwrap().value();
                sum += d;
                sum_sq += d * d;
            }
            let mean = sum / n as f64;
            let se = ((sum_sq / n as f64 - mean * mean) / n as f64).sqrt();
            let exact = kl_gaussian(&old, &new).unwrap();
            assert!(
                (exact - mean).abs() <= 3.0 * se,
                "case {case}: exact {exact} vs MC {mean} ± {se}"
            );
        }
    }

    fn probs_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, len).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_categorical_nonnegative_and_direct_sum(
            (old, new) in (2usize..6).prop_flat_map(|d| (probs_strategy(d), probs_strategy(d)))
        ) {
            let kl = kl_categorical(&old, &new).unwrap();
            prop_assert!(kl >= 0.0);
            let direct: f64 = old.iter().zip(&new).map(|(p, q)| p * (p / q).ln()).sum();
            prop_assert!((kl - direct.max(0.0)).abs() <= 1e-12);
            prop_assert_eq!(kl_categorical(&old, &old).unwrap(), 0.0);
        }

        #[test]
        fn logits_kl_matches_probability_kl(
            a in prop::collection::vec(-3.0f64..3.0, 3),
            b in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let old = CategoricalDist::new(a).unwrap();
            let new = CategoricalDist::new(b).unwrap();
            let via_logits = kl_categorical_logits(&old, &new).unwrap();
            let via_probs = kl_categorical(&old.probs(), &new.probs()).unwrap();
            prop_assert!((via_logits - via_probs).abs() <= 1e-12);
        }

        #[test]
        fn kl_gaussian_nonnegative(
            m1 in prop::collection::vec(-2.0f64..2.0, 2),
            m2 in prop::collection::vec(-2.0f64..2.0, 2),
            s1 in prop::collection::vec(-1.5f64..1.5, 2),
            s2 in prop::collection::vec(-1.5f64..1.5, 2),
        ) {
            let old = GaussianDist::new(m1, s1).unwrap();
            let new = GaussianDist::new(m2, s2).unwrap();
            prop_assert!(kl_gaussian(&old, &new).unwrap() >= 0.0);
            prop_assert_eq!(kl_gaussian(&old, &old).unwrap(), 0.0);
        }

        #[test]
        fn ratio_of_equal_log_probs_is_one(lp in -1e3f64..1e3) {
            prop_assert_eq!(ratio(LogProb(lp), LogProb(lp)).unwrap(), 1.0);
        }

        #[test]
        fn categorical_entropy_bounds(logits in prop::collection::vec(-5.0f64..5.0, 1..7)) {
            let d = logits.len();
            let c = CategoricalDist::new(logits).unwrap();
            let h = c.entropy();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (d as f64).ln() + 1e-12);
            let s: f64 = c.probs().iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let g = GaussianDist::new(vec![0.0f32], vec![0.0]).unwrap();
        assert!((g.log_prob(&[0.0]).unwrap().value() + 0.918_938_5).abs() < 1e-6);
        let kl = kl_categorical(&[0.5f32, 0.5], &[0.9, 0.1]).unwrap();
        assert!((kl - 0.5108).abs() < 1e-4);
    }
}
