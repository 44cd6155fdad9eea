use std::collections::HashSet;
use std::fmt;

use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::objectives::{ObjectiveConfig, Variant};
use crate::scalar::Scalar;

/// Training settings. `epsilon_end` / `delta_end`, when set, anneal the
/// objective's ε / δ linearly from their configured value over the run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    pub objective: ObjectiveConfig<T>,
    pub epsilon_end: Option<T>,
    pub delta_end: Option<T>,
    pub env: EnvKind,
    pub total_timesteps: usize,
    pub timesteps_per_epoch: usize,
    pub minibatch_size: usize,
    pub optimization_epochs: usize,
    pub learning_rate: T,
    pub gamma: T,
    pub lambda: T,
    pub n_envs: usize,
    pub seed: u64,
    /// `None` means 0.01 for discrete actions and 0 for continuous ones.
    pub entropy_coef: Option<T>,
    pub value_loss_coef: T,
    pub hidden: Vec<usize>,
    pub init_log_std: T,
    pub normalize_advantages: bool,
}

/// Entropy coefficient used for discrete-action environments by default.
pub const DISCRETE_ENTROPY_COEF: f64 = 0.01;

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            objective: ObjectiveConfig::default(),
            epsilon_end: None,
            delta_end: None,
            env: EnvKind::Balance,
            total_timesteps: 100 * 1024,
            timesteps_per_epoch: 1024,
            minibatch_size: 64,
            optimization_epochs: 10,
            learning_rate: T::lit(3e-4),
            gamma: T::lit(0.99),
            lambda: T::lit(0.95),
            n_envs: 2,
            seed: 0,
            entropy_coef: None,
            value_loss_coef: T::lit(0.5),
            hidden: vec![64, 64],
            init_log_std: T::zero(),
            normalize_advantages: true,
        }
    }
}

impl<T: Scalar> TrainConfig<T> {
    pub fn for_variant(variant: Variant) -> Self {
        Self {
            objective: ObjectiveConfig::for_variant(variant),
            ..Self::default()
        }
    }

    pub fn n_epochs(&self) -> usize {
        self.total_timesteps / self.timesteps_per_epoch
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_fields()?;
        let bad = |msg: String| Err(Error::invalid_argument(msg));
        if self.timesteps_per_epoch % self.minibatch_size != 0 {
            return bad(format!(
                "timesteps_per_epoch {} is not divisible by minibatch_size {}",
                self.timesteps_per_epoch, self.minibatch_size
            ));
        }
        if self.timesteps_per_epoch % self.n_envs != 0 {
            return bad(format!(
                "timesteps_per_epoch {} is not divisible by n_envs {}",
                self.timesteps_per_epoch, self.n_envs
            ));
        }
        if self.total_timesteps < self.timesteps_per_epoch {
            return bad("total_timesteps must cover at least one epoch".into());
        }
        Ok(())
    }

    /// Range checks that involve a single field each.
    fn validate_fields(&self) -> Result<()> {
        self.objective.validate()?;
        let bad = |msg: String| Err(Error::invalid_argument(msg));
        if self.timesteps_per_epoch == 0 || self.minibatch_size == 0 || self.n_envs == 0 {
            return bad("timesteps_per_epoch, minibatch_size and n_envs must be positive".into());
        }
        if self.optimization_epochs == 0 {
            return bad("optimization_epochs must be positive".into());
        }
        if !(self.learning_rate > T::zero() && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.lambda >= T::zero() && self.lambda <= T::one()) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if let Some(c) = self.entropy_coef {
            if !(c >= T::zero() && c.is_finite()) {
                return bad(format!("entropy_coef must be non-negative, got {c}"));
            }
        }
        if !(self.value_loss_coef > T::zero() && self.value_loss_coef.is_finite()) {
            return bad(format!(
                "value_loss_coef must be positive, got {}",
                self.value_loss_coef
            ));
        }
        if self.hidden.iter().any(|&h| h == 0) {
            return bad("hidden layer sizes must be positive".into());
        }
        if !self.init_log_std.is_finite() {
            return bad("init_log_std must be finite".into());
        }
        if let Some(e) = self.epsilon_end {
            if !(e >= T::zero() && e < T::one()) {
                return bad(format!("annealed epsilon must end in [0, 1), got {e}"));
            }
        }
        if let Some(d) = self.delta_end {
            if !(d >= T::zero() && d.is_finite()) {
                return bad(format!("annealed delta must end non-negative, got {d}"));
            }
        }
        Ok(())
    }

    pub fn entropy_coef_for(&self, discrete: bool) -> T {
        self.entropy_coef.unwrap_or(if discrete {
            T::lit(DISCRETE_ENTROPY_COEF)
        } else {
            T::zero()
        })
    }

    /// Objective in effect during `epoch` with annealing applied.
    pub fn objective_at(&self, epoch: usize) -> ObjectiveConfig<T> {
        let progress = T::from_usize_lossy(epoch) / T::from_usize_lossy(self.n_epochs().max(1));
        let lerp = |start: T, end: Option<T>| end.map_or(start, |e| start + (e - start) * progress);
        let mut cfg = self.objective;
        cfg.epsilon = lerp(cfg.epsilon, self.epsilon_end);
        cfg.delta = lerp(cfg.delta, self.delta_end);
        cfg
    }

    /// Parses `key = value` lines; `#` starts a comment. Absent keys keep the
    /// defaults of the chosen variant. `path` only labels errors.
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let mut entries = Vec::new();
        let mut seen = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(line_no, format!("expected `key = value`, got {line:?}")))?;
            let key = key.trim().to_string();
            if !seen.insert(key.clone()) {
                return Err(err(line_no, format!("duplicate key {key:?}")));
            }
            entries.push((line_no, key, value.trim().to_string()));
        }

        let variant = match entries.iter().find(|(_, k, _)| k == "variant") {
            Some((line, _, v)) => v.parse::<Variant>().map_err(|e| err(*line, e.to_string()))?,
            None => Variant::Clip,
        };
        let mut cfg = Self::for_variant(variant);
        for (line, key, value) in &entries {
            let line = *line;
            let num = || -> Result<T> {
                let x: f64 = value
                    .parse()
                    .map_err(|_| err(line, format!("{key}: cannot parse {value:?} as a number")))?;
                Ok(T::lit(x))
            };
            let int = || -> Result<usize> {
                value
                    .parse()
                    .map_err(|_| err(line, format!("{key}: cannot parse {value:?} as a non-negative integer")))
            };
            let schedule = || -> Result<(T, Option<T>)> {
                match parse_linear(value) {
                    Some(Ok((a, b))) => Ok((T::lit(a), Some(T::lit(b)))),
                    Some(Err(())) => Err(err(
                        line,
                        format!("{key}: malformed schedule {value:?}, expected linear(start, end)"),
                    )),
                    None => Ok((num()?, None)),
                }
            };
            match key.as_str() {
                "variant" => {}
                "epsilon" => (cfg.objective.epsilon, cfg.epsilon_end) = schedule()?,
                "delta" => (cfg.objective.delta, cfg.delta_end) = schedule()?,
                "alpha" => cfg.objective.alpha = num()?,
                "penalty_target" => cfg.objective.penalty_target = num()?,
                "penalty_adapt_factor" => cfg.objective.penalty_adapt_factor = num()?,
                "env" => cfg.env = value.parse().map_err(|e: Error| err(line, e.to_string()))?,
                "total_timesteps" => cfg.total_timesteps = int()?,
                "timesteps_per_epoch" => cfg.timesteps_per_epoch = int()?,
                "minibatch_size" => cfg.minibatch_size = int()?,
                "optimization_epochs" => cfg.optimization_epochs = int()?,
                "learning_rate" => cfg.learning_rate = num()?,
                "gamma" => cfg.gamma = num()?,
                "lambda" => cfg.lambda = num()?,
                "n_envs" => cfg.n_envs = int()?,
                "seed" => {
                    cfg.seed = value
                        .parse()
                        .map_err(|_| err(line, format!("seed: cannot parse {value:?} as an unsigned integer")))?
                }
                "entropy_coef" => cfg.entropy_coef = Some(num()?),
                "value_loss_coef" => cfg.value_loss_coef = num()?,
                "hidden" => {
                    cfg.hidden = value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<std::result::Result<_, _>>()
                        .map_err(|_| err(line, format!("hidden: expected comma-separated sizes, got {value:?}")))?
                }
                "init_log_std" => cfg.init_log_std = num()?,
                "normalize_advantages" => {
                    cfg.normalize_advantages = value.parse().map_err(|_| {
                        err(
                            line,
                            format!("normalize_advantages: expected true or false, got {value:?}"),
                        )
                    })?
                }
                other => return Err(err(line, format!("unknown key {other:?}"))),
            }
            cfg.validate_fields().map_err(|e| err(line, strip_prefix(e)))?;
        }
        cfg.validate().map_err(|e| err(0, strip_prefix(e)))?;
        Ok(cfg)
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::InvalidArgument(m) => m,
        other => other.to_string(),
    }
}

/// `linear(a, b)` → `Some(Ok((a, b)))`; other text starting with `linear` →
/// `Some(Err(()))`; anything else → `None`.
fn parse_linear(value: &str) -> Option<std::result::Result<(f64, f64), ()>> {
    let rest = value.strip_prefix("linear")?;
    let inner = rest.trim().strip_prefix('(').and_then(|s| s.strip_suffix(')'));
    let parsed = inner.and_then(|s| {
        let (a, b) = s.split_once(',')?;
        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
    });
    Some(parsed.ok_or(()))
}

impl<T: Scalar> fmt::Display for TrainConfig<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let o = &self.objective;
        let schedule = |start: T, end: Option<T>| match end {
            Some(e) => format!("linear({start}, {e})"),
            None => start.to_string(),
        };
        writeln!(f, "variant = {}", o.variant)?;
        writeln!(f, "epsilon = {}", schedule(o.epsilon, self.epsilon_end))?;
        writeln!(f, "delta = {}", schedule(o.delta, self.delta_end))?;
        writeln!(f, "alpha = {}", o.alpha)?;
        writeln!(f, "penalty_target = {}", o.penalty_target)?;
        writeln!(f, "penalty_adapt_factor = {}", o.penalty_adapt_factor)?;
        writeln!(f, "env = {}", self.env)?;
        writeln!(f, "total_timesteps = {}", self.total_timesteps)?;
        writeln!(f, "timesteps_per_epoch = {}", self.timesteps_per_epoch)?;
        writeln!(f, "minibatch_size = {}", self.minibatch_size)?;
        writeln!(f, "optimization_epochs = {}", self.optimization_epochs)?;
        writeln!(f, "learning_rate = {}", self.learning_rate)?;
        writeln!(f, "gamma = {}", self.gamma)?;
        writeln!(f, "lambda = {}", self.lambda)?;
        writeln!(f, "n_envs = {}", self.n_envs)?;
        writeln!(f, "seed = {}", self.seed)?;
        writeln!(
            f,
            "entropy_coef = {}",
            self.entropy_coef_for(self.env != EnvKind::PointMass)
        )?;
        writeln!(f, "value_loss_coef = {}", self.value_loss_coef)?;
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        writeln!(f, "hidden = {}", hidden.join(", "))?;
        writeln!(f, "init_log_std = {}", self.init_log_std)?;
        writeln!(f, "normalize_advantages = {}", self.normalize_advantages)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let cfg = TrainConfig::<f64>::parse("", "t").unwrap();
        assert_eq!(cfg, TrainConfig::default());
        assert_eq!(cfg.objective.variant, Variant::Clip);
        assert_eq!(cfg.objective.epsilon, 0.2);
        assert_eq!(cfg.learning_rate, 3e-4);
        assert_eq!(cfg.lambda, 0.95);
        assert_eq!(cfg.timesteps_per_epoch, 1024);
    }

    #[test]
    fn truly_settings_parse_in_any_order() {
        for text in [
            "variant = truly\ndelta = 0.03\nalpha = 5",
            "alpha = 5\ndelta = 0.03 # trust region\nvariant = TRULY",
        ] {
            let cfg = TrainConfig::<f64>::parse(text, "t").unwrap();
            assert_eq!(cfg.objective.variant, Variant::Truly);
            assert_eq!(cfg.objective.delta, 0.03);
            assert_eq!(cfg.objective.alpha, 5.0);
        }
        let cfg = TrainConfig::<f64>::parse("variant = truly\nalpha = 2", "t").unwrap();
        assert_eq!(cfg.objective.alpha, 2.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let line_of = |text: &str| match TrainConfig::<f64>::parse(text, "cfg.txt") {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        };
        assert_eq!(line_of("epsilon = 1.5"), 1);
        assert_eq!(line_of("# header\n\nbogus = 1"), 3);
        assert_eq!(line_of("seed = 1\nlearning_rate = fast"), 2);
        assert_eq!(line_of("epsilon = linear(0.1"), 1);
        assert_eq!(line_of("gamma = 0.9\ngamma = 0.8"), 2);
        assert_eq!(line_of("no equals sign"), 1);
        assert_eq!(line_of("variant = sac"), 1);
        assert_eq!(line_of("timesteps_per_epoch = 1000"), 0);
        let msg = TrainConfig::<f64>::parse("epsilon = 1.5", "cfg.txt")
            .unwrap_err()
            .to_string();
        assert!(msg.starts_with("cfg.txt:1:"), "{msg}");
    }

    #[test]
    fn annealing_and_roundtrip() {
        let text = "epsilon = linear(0.1, 0)\ntotal_timesteps = 4096\nhidden = 32, 16\nenv = chain\nseed = 7";
        let cfg = TrainConfig::<f64>::parse(text, "t").unwrap();
        assert_eq!(cfg.n_epochs(), 4);
        assert_eq!(cfg.objective_at(0).epsilon, 0.1);
        assert!((cfg.objective_at(2).epsilon - 0.05).abs() < 1e-15);
        assert!(cfg.objective_at(3).epsilon > 0.0);
        let again = TrainConfig::<f64>::parse(&cfg.to_string(), "t").unwrap();
        assert_eq!(again.objective, cfg.objective);
        assert_eq!(again.epsilon_end, cfg.epsilon_end);
        assert_eq!(again.hidden, vec![32, 16]);
        assert_eq!(again.env, EnvKind::Chain);
        assert_eq!(again.seed, 7);
    }
}
