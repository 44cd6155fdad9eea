use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Pg,
    Clip,
    ClipSimple,
    Rb,
    Tr,
    TrSimple,
    Truly,
    TrRbRatio,
    Penalty,
}

/// Which quantity decides that a sample is outside the proximal region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerKind {
    /// `|r − 1| ≥ ε`.
    Ratio,
    /// `kl ≥ δ`.
    TrustRegion,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Pg,
        Variant::Clip,
        Variant::ClipSimple,
        Variant::Rb,
        Variant::Tr,
        Variant::TrSimple,
        Variant::Truly,
        Variant::TrRbRatio,
        Variant::Penalty,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Pg => "pg",
            Variant::Clip => "clip",
            Variant::ClipSimple => "clip_simple",
            Variant::Rb => "rb",
            Variant::Tr => "tr",
            Variant::TrSimple => "tr_simple",
            Variant::Truly => "truly",
            Variant::TrRbRatio => "tr_rb_ratio",
            Variant::Penalty => "penalty",
        }
    }

    pub fn trigger(self) -> TriggerKind {
        match self {
            Variant::Tr | Variant::TrSimple | Variant::Truly | Variant::TrRbRatio => TriggerKind::TrustRegion,
            _ => TriggerKind::Ratio,
        }
    }

    /// True when the per-sample objective reads the per-state KL.
    pub fn uses_kl(self) -> bool {
        matches!(
            self,
            Variant::Tr | Variant::TrSimple | Variant::Truly | Variant::TrRbRatio | Variant::Penalty
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL.into_iter().find(|v| v.name() == key).ok_or_else(|| {
            let names: Vec<_> = Variant::ALL.iter().map(|v| v.name()).collect();
            Error::invalid_argument(format!("unknown variant {s:?}, expected one of {}", names.join(", ")))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveConfig<T> {
    pub variant: Variant,
    pub epsilon: T,
    pub delta: T,
    pub alpha: T,
    pub penalty_target: T,
    pub penalty_adapt_factor: T,
}

impl<T: Scalar> ObjectiveConfig<T> {
    /// Defaults for `variant`: ε = 0.2; δ = 0.035 for the trust-region clip
    /// and 0.03 for the KL-penalized forms; α = 0.3 for rollback, 5 for the
    /// trust-region rollback forms, 1 as the starting penalty coefficient.
    pub fn for_variant(variant: Variant) -> Self {
        let delta = match variant {
            Variant::Truly | Variant::TrRbRatio => 0.03,
            _ => 0.035,
        };
        let alpha = match variant {
            Variant::Rb => 0.3,
            Variant::Truly | Variant::TrRbRatio => 5.0,
            _ => 1.0,
        };
        Self {
            variant,
            epsilon: T::lit(0.2),
            delta: T::lit(delta),
            alpha: T::lit(alpha),
            penalty_target: T::lit(0.01),
            penalty_adapt_factor: T::lit(2.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str, v: T| {
            if ok {
                Ok(())
            } else {
                Err(Error::invalid_argument(format!("{what}, got {v}")))
            }
        };
        let e = self.epsilon;
        check(e > T::zero() && e < T::one(), "epsilon must lie in (0, 1)", e)?;
        check(
            self.delta > T::zero() && self.delta.is_finite(),
            "delta must be positive",
            self.delta,
        )?;
        check(
            self.alpha > T::zero() && self.alpha.is_finite(),
            "alpha must be positive",
            self.alpha,
        )?;
        check(
            self.penalty_target > T::zero() && self.penalty_target.is_finite(),
            "penalty_target must be positive",
            self.penalty_target,
        )?;
        check(
            self.penalty_adapt_factor > T::one() && self.penalty_adapt_factor.is_finite(),
            "penalty_adapt_factor must exceed 1",
            self.penalty_adapt_factor,
        )
    }
}

impl<T: Scalar> Default for ObjectiveConfig<T> {
    fn default() -> Self {
        Self::for_variant(Variant::Clip)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("TR-RB-RATIO".parse::<Variant>().unwrap(), Variant::TrRbRatio);
        assert!("ppo2".parse::<Variant>().is_err());
    }

    #[test]
    fn defaults_are_valid() {
        for v in Variant::ALL {
            ObjectiveConfig::<f64>::for_variant(v).validate().unwrap();
        }
        let truly = ObjectiveConfig::<f64>::for_variant(Variant::Truly);
        assert_eq!((truly.delta, truly.alpha), (0.03, 5.0));
        assert_eq!(ObjectiveConfig::<f64>::for_variant(Variant::Tr).delta, 0.035);
    }

    #[test]
    fn rejects_out_of_range() {
        let mut c = ObjectiveConfig::<f64>::default();
        c.epsilon = 1.5;
        assert!(c.validate().is_err());
        let mut c = ObjectiveConfig::<f64>::default();
        c.penalty_adapt_factor = 1.0;
        assert!(c.validate().is_err());
        let mut c = ObjectiveConfig::<f32>::default();
        c.delta = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn triggers() {
        assert_eq!(Variant::Clip.trigger(), TriggerKind::Ratio);
        assert_eq!(Variant::Truly.trigger(), TriggerKind::TrustRegion);
        assert!(!Variant::Rb.uses_kl());
        assert!(Variant::Penalty.uses_kl());
    }
}
