//! Surrogate objectives, clipping functions, and epoch diagnostics.
//!
//! Every per-sample objective takes the likelihood ratio `r = π/π_old` and an
//! advantage `A`. Samples are always drawn under the old policy, so the
//! reference ratio `r_old` is exactly 1 and the improvement condition
//! `r·A ≥ r_old·A` reduces to `r·A ≥ A`.
//!
//! The functions here work on plain scalars. [`head`] holds the tape-tracked
//! versions used for gradients; both dispatch through the same branch
//! predicates so they cannot disagree on which case is active.

mod batch;
mod config;
mod diagnostics;
pub mod head;

pub use batch::{Sample, SampleBatch};
pub use config::{ObjectiveConfig, TriggerKind, Variant};
pub use diagnostics::{epoch_diagnostics, DiagnosticsSummary, PerSampleDiagnostics};
pub use head::{batch_objective, sample_objective, sample_surrogate, DistVars, Surrogate};

use crate::scalar::Scalar;

/// Lower bound of the clamp applied by [`adapt_penalty_coef`].
pub const PENALTY_ALPHA_MIN: f64 = 1e-4;
/// Upper bound of the clamp applied by [`adapt_penalty_coef`].
pub const PENALTY_ALPHA_MAX: f64 = 1e4;
/// Width of the dead band around the KL target, as a multiplicative ratio.
pub const PENALTY_BAND: f64 = 1.5;

/// `r·A ≥ r_old·A` with `r_old = 1`.
#[inline]
pub fn improved<T: Scalar>(r: T, advantage: T) -> bool {
    r * advantage >= advantage
}

/// Ratio strictly below the lower clipping edge.
#[inline]
pub(crate) fn below_range<T: Scalar>(r: T, eps: T) -> bool {
    r < T::one() - eps
}

/// Ratio strictly above the upper clipping edge.
#[inline]
pub(crate) fn above_range<T: Scalar>(r: T, eps: T) -> bool {
    r > T::one() + eps
}

/// `|r − 1| ≥ ε`, the out-of-range test used by the diagnostics.
#[inline]
pub fn out_of_ratio_range<T: Scalar>(r: T, eps: T) -> bool {
    (r - T::one()).abs() >= eps
}

#[inline]
pub fn out_of_trust_region<T: Scalar>(kl: T, delta: T) -> bool {
    kl >= delta
}

/// Unclipped surrogate `r·A`.
pub fn l_pg<T: Scalar>(r: T, advantage: T) -> T {
    r * advantage
}

/// Ratio clipping into `[1 − ε, 1 + ε]`.
pub fn f_clip<T: Scalar>(r: T, eps: T) -> T {
    if below_range(r, eps) {
        T::one() - eps
    } else if above_range(r, eps) {
        T::one() + eps
    } else {
        r
    }
}

pub fn l_clip<T: Scalar>(r: T, advantage: T, eps: T) -> T {
    (r * advantage).min(f_clip(r, eps) * advantage)
}

/// Clipped value without the minimum.
pub fn l_clip_simple<T: Scalar>(r: T, advantage: T, eps: T) -> T {
    f_clip(r, eps) * advantage
}

/// Rollback clipping: slope `−α` outside the range, continuous at both edges.
pub fn f_rb<T: Scalar>(r: T, eps: T, alpha: T) -> T {
    if below_range(r, eps) {
        -alpha * r + (T::one() + alpha) * (T::one() - eps)
    } else if above_range(r, eps) {
        -alpha * r + (T::one() + alpha) * (T::one() + eps)
    } else {
        r
    }
}

pub fn l_rb<T: Scalar>(r: T, advantage: T, eps: T, alpha: T) -> T {
    (r * advantage).min(f_rb(r, eps, alpha) * advantage)
}

/// Trust-region-triggered ratio: `r_old = 1` once `kl ≥ δ`, else `r`.
pub fn f_tr<T: Scalar>(r: T, kl: T, delta: T) -> T {
    if out_of_trust_region(kl, delta) {
        T::one()
    } else {
        r
    }
}

pub fn l_tr<T: Scalar>(r: T, advantage: T, kl: T, delta: T) -> T {
    (r * advantage).min(f_tr(r, kl, delta) * advantage)
}

pub fn l_tr_simple<T: Scalar>(r: T, advantage: T, kl: T, delta: T) -> T {
    f_tr(r, kl, delta) * advantage
}

/// `r·A − α·kl` when outside the trust region with an improved objective,
/// `r·A − δ` otherwise.
pub fn l_truly<T: Scalar>(r: T, advantage: T, kl: T, delta: T, alpha: T) -> T {
    if out_of_trust_region(kl, delta) && improved(r, advantage) {
        r * advantage - alpha * kl
    } else {
        r * advantage - delta
    }
}

/// Trust-region trigger with rollback on the ratio: `−α·r·A` when triggered.
pub fn l_tr_rb_ratio<T: Scalar>(r: T, advantage: T, kl: T, delta: T, alpha: T) -> T {
    if out_of_trust_region(kl, delta) && improved(r, advantage) {
        r * advantage * -alpha
    } else {
        r * advantage
    }
}

pub fn l_penalty<T: Scalar>(r: T, advantage: T, kl: T, alpha_live: T) -> T {
    r * advantage - alpha_live * kl
}

/// Multiplies `α` by `factor` when the measured KL exceeds `1.5 × target`,
/// divides when it is below `target / 1.5`, and clamps to `[1e-4, 1e4]`.
pub fn adapt_penalty_coef<T: Scalar>(alpha_live: T, measured_mean_kl: T, target: T, factor: T) -> T {
    let band = T::lit(PENALTY_BAND);
    let next = if measured_mean_kl > band * target {
        alpha_live * factor
    } else if measured_mean_kl < target / band {
        alpha_live / factor
    } else {
        alpha_live
    };
    next.max(T::lit(PENALTY_ALPHA_MIN)).min(T::lit(PENALTY_ALPHA_MAX))
}

/// Per-sample objective for any variant on plain scalars.
pub fn evaluate<T: Scalar>(config: &ObjectiveConfig<T>, r: T, advantage: T, kl: T, alpha_live: T) -> T {
    let (eps, delta, alpha) = (config.epsilon, config.delta, config.alpha);
    match config.variant {
        Variant::Pg => l_pg(r, advantage),
        Variant::Clip => l_clip(r, advantage, eps),
        Variant::ClipSimple => l_clip_simple(r, advantage, eps),
        Variant::Rb => l_rb(r, advantage, eps, alpha),
        Variant::Tr => l_tr(r, advantage, kl, delta),
        Variant::TrSimple => l_tr_simple(r, advantage, kl, delta),
        Variant::Truly => l_truly(r, advantage, kl, delta, alpha),
        Variant::TrRbRatio => l_tr_rb_ratio(r, advantage, kl, delta, alpha),
        Variant::Penalty => l_penalty(r, advantage, kl, alpha_live),
    }
}
