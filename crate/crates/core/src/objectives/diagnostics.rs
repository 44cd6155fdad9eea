use super::{improved, out_of_ratio_range, out_of_trust_region, ObjectiveConfig, SampleBatch, TriggerKind};
use crate::distributions::{ratio, LogProb, PolicyDist};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerSampleDiagnostics<T> {
    pub ratio: T,
    pub kl: T,
    /// Outside the proximal region with an improved objective.
    pub clipped: bool,
    /// `r·A ≥ r_old·A`.
    pub improved: bool,
    /// `|r − 1| ≥ ε` for ratio-triggered variants, `kl ≥ δ` for trust-region ones.
    pub out_of_range: bool,
}

/// Statistics between the pre-epoch policy and the policy after the epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSummary<T> {
    /// Fraction of samples with `|r − 1| ≥ ε`.
    pub clipfrac: T,
    pub max_ratio: T,
    pub max_kl: T,
    pub mean_kl: T,
    /// Mean entropy of the new policy over the batch states.
    pub entropy: T,
    /// Fraction of samples that are out of range and not improved.
    pub unimproved_frac: T,
    pub per_sample: Vec<PerSampleDiagnostics<T>>,
}

/// `new_dists[i]` is the post-epoch distribution at `batch[i].state`; the
/// pre-epoch distribution is the sample's recorded snapshot.
pub fn epoch_diagnostics<T: Scalar>(
    config: &ObjectiveConfig<T>,
    batch: &SampleBatch<T>,
    new_dists: &[PolicyDist<T>],
) -> Result<DiagnosticsSummary<T>> {
    if new_dists.len() != batch.len() || batch.is_empty() {
        return Err(Error::invalid_argument(format!(
            "{} distributions for {} samples",
            new_dists.len(),
            batch.len()
        )));
    }
    let trigger = config.variant.trigger();
    let mut per_sample = Vec::with_capacity(batch.len());
    let (mut n_clip, mut n_unimproved) = (0usize, 0usize);
    let (mut max_ratio, mut max_kl) = (T::zero(), T::zero());
    let (mut kl_sum, mut entropy_sum) = (T::zero(), T::zero());
    for (s, new) in batch.samples().iter().zip(new_dists) {
        let r = ratio(new.log_prob(&s.action)?, LogProb(s.old_log_prob))?;
        let kl = s.old_dist.kl(new)?;
        let out_of_range = match trigger {
            TriggerKind::Ratio => out_of_ratio_range(r, config.epsilon),
            TriggerKind::TrustRegion => out_of_trust_region(kl, config.delta),
        };
        let improved = improved(r, s.advantage);
        if out_of_ratio_range(r, config.epsilon) {
            n_clip += 1;
        }
        if out_of_range && !improved {
            n_unimproved += 1;
        }
        max_ratio = max_ratio.max(r);
        max_kl = max_kl.max(kl);
        kl_sum += kl;
        entropy_sum += new.entropy();
        per_sample.push(PerSampleDiagnostics {
            ratio: r,
            kl,
            clipped: out_of_range && improved,
            improved,
            out_of_range,
        });
    }
    let n = T::from_usize_lossy(batch.len());
    Ok(DiagnosticsSummary {
        clipfrac: T::from_usize_lossy(n_clip) / n,
        max_ratio,
        max_kl,
        mean_kl: kl_sum / n,
        entropy: entropy_sum / n,
        unimproved_frac: T::from_usize_lossy(n_unimproved) / n,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{Action, CategoricalDist};
    use crate::objectives::{Sample, Variant};
    use approx::assert_abs_diff_eq;

    fn cat(p: &[f64]) -> PolicyDist<f64> {
        PolicyDist::Categorical(CategoricalDist::new(p.iter().map(|x| x.ln()).collect()).unwrap())
    }

    fn batch(old: &PolicyDist<f64>, actions: &[usize], adv: f64) -> SampleBatch<f64> {
        SampleBatch::new(
            actions
                .iter()
                .map(|&a| Sample::from_dist(vec![0.0], Action::Discrete(a), adv, 0.0, old.clone()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_policies() {
        let old = cat(&[0.3, 0.7]);
        let b = batch(&old, &[0, 1, 1], 1.0);
        let cfg = ObjectiveConfig::for_variant(Variant::Clip);
        let d = epoch_diagnostics(&cfg, &b, &vec![old.clone(); 3]).unwrap();
        assert_eq!(d.clipfrac, 0.0);
        assert_abs_diff_eq!(d.max_ratio, 1.0, epsilon = 1e-15);
        assert_eq!(d.max_kl, 0.0);
        assert_eq!(d.unimproved_frac, 0.0);
    }

    #[test]
    fn hand_built_ratios() {
        // Three one-state samples under uniform old, new policies giving ratios 1.0, 1.3, 0.7.
        let old = cat(&[0.5, 0.5]);
        let b = batch(&old, &[0, 0, 0], -1.0);
        let news = vec![cat(&[0.5, 0.5]), cat(&[0.65, 0.35]), cat(&[0.35, 0.65])];
        let cfg = ObjectiveConfig::for_variant(Variant::Clip);
        let d = epoch_diagnostics(&cfg, &b, &news).unwrap();
        assert_abs_diff_eq!(d.clipfrac, 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d.max_ratio, 1.3, epsilon = 1e-12);
        // A < 0: ratio 1.3 worsened the objective, ratio 0.7 improved it.
        assert_abs_diff_eq!(d.unimproved_frac, 1.0 / 3.0, epsilon = 1e-15);
        assert!(d.per_sample[2].clipped && !d.per_sample[1].clipped);
    }

    #[test]
    fn max_kl_single_state() {
        let old = cat(&[0.5, 0.5]);
        let b = batch(&old, &[0], 1.0);
        let cfg = ObjectiveConfig::for_variant(Variant::Truly);
        let d = epoch_diagnostics(&cfg, &b, &[cat(&[0.9, 0.1])]).unwrap();
        let expected = 0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln();
        assert_abs_diff_eq!(d.max_kl, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(d.max_kl, 0.5108, epsilon = 1e-4);
        assert!(d.per_sample[0].out_of_range && d.per_sample[0].clipped);
    }
}
