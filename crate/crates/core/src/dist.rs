//! Configurable sampling distributions for weights, basket values and client traits.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};

/// Rejection attempts before a truncated draw falls back to clamping.
const MAX_REJECTIONS: usize = 10_000;

/// A continuous distribution over positive reals, selected by its `dist` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum RealDist {
    Fixed { value: f64 },
    Uniform { min: f64, max: f64 },
    Normal { mean: f64, sd: f64 },
    #[serde(rename = "lognormal")]
    LogNormal { mu: f64, sigma: f64 },
}

impl RealDist {
    /// Checks parameters and that the distribution has mass inside `(0, cap]`.
    pub fn validate(&self, what: &str, cap: f64) -> Result<()> {
        let bad = |msg: String| Err(SimError::invalid(format!("{what}: {msg}")));
        let finite = |x: f64| x.is_finite();
        match *self {
            RealDist::Fixed { value } => {
                if !(finite(value) && value > 0.0 && value <= cap) {
                    return bad(format!("fixed value {value} outside (0, {cap}]"));
                }
            }
            RealDist::Uniform { min, max } => {
                if !(finite(min) && finite(max) && min >= 0.0 && min <= max) {
                    return bad(format!("uniform bounds [{min}, {max}] invalid"));
                }
                if max <= 0.0 || min > cap {
                    return bad(format!("uniform [{min}, {max}] has no mass in (0, {cap}]"));
                }
            }
            RealDist::Normal { mean, sd } => {
                if !(finite(mean) && finite(sd) && sd >= 0.0) {
                    return bad(format!("normal(mean={mean}, sd={sd}) invalid"));
                }
                if !(mean > 0.0 && mean <= cap) {
                    return bad(format!("normal mean {mean} outside (0, {cap}]"));
                }
            }
            RealDist::LogNormal { mu, sigma } => {
                if !(finite(mu) && finite(sigma) && sigma >= 0.0) {
                    return bad(format!("lognormal(mu={mu}, sigma={sigma}) invalid"));
                }
                if mu.exp() > cap {
                    return bad(format!("lognormal median {} above cap {cap}", mu.exp()));
                }
            }
        }
        Ok(())
    }

    /// Draws from the distribution truncated to `(0, cap]`.
    pub fn sample_truncated<R: Rng + ?Sized>(&self, rng: &mut R, cap: f64) -> f64 {
        match *self {
            RealDist::Fixed { value } => value.min(cap),
            RealDist::Uniform { min, max } => {
                let hi = max.min(cap);
                if min >= hi {
                    return hi;
                }
                let x = rng.random_range(min..=hi);
                if x > 0.0 {
                    x
                } else {
                    // only reachable when min == 0 and the draw hits it exactly
                    hi.min(f64::EPSILON)
                }
            }
            RealDist::Normal { mean, sd } => {
                if sd == 0.0 {
                    return mean.min(cap);
                }
                let normal = Normal::new(mean, sd).expect("validated normal");
                Self::reject(rng, cap, |r| normal.sample(r))
            }
            RealDist::LogNormal { mu, sigma } => {
                if sigma == 0.0 {
                    return mu.exp().min(cap);
                }
                let ln = LogNormal::new(mu, sigma).expect("validated lognormal");
                Self::reject(rng, cap, |r| ln.sample(r))
            }
        }
    }

    fn reject<R: Rng + ?Sized>(rng: &mut R, cap: f64, mut draw: impl FnMut(&mut R) -> f64) -> f64 {
        let mut last = cap;
        for _ in 0..MAX_REJECTIONS {
            let x = draw(rng);
            if x > 0.0 && x <= cap {
                return x;
            }
            last = x;
        }
        last.clamp(f64::EPSILON, cap)
    }

    /// Mean of the distribution truncated to `(0, cap]`, when it has a closed form.
    pub fn truncated_mean(&self, cap: f64) -> Option<f64> {
        match *self {
            RealDist::Fixed { value } => Some(value.min(cap)),
            RealDist::Uniform { min, max } => {
                let hi = max.min(cap);
                Some(if min >= hi { hi } else { 0.5 * (min + hi) })
            }
            _ => None,
        }
    }
}

/// Integer-valued distribution for delay tolerance in days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case", deny_unknown_fields)]
pub enum DaysDist {
    Fixed { days: u32 },
    /// `weights[d]` is the relative weight of tolerating `d` extra days.
    Categorical { weights: Vec<f64> },
}

impl DaysDist {
    pub fn validate(&self, what: &str) -> Result<()> {
        if let DaysDist::Categorical { weights } = self {
            if weights.is_empty()
                || weights.iter().any(|w| !w.is_finite() || *w < 0.0)
                || weights.iter().sum::<f64>() <= 0.0
            {
                return Err(SimError::invalid(format!(
                    "{what}: categorical weights must be non-negative with a positive sum"
                )));
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self {
            DaysDist::Fixed { days } => *days,
            DaysDist::Categorical { weights } => {
                let idx = WeightedIndex::new(weights).expect("validated weights");
                idx.sample(rng) as u32
            }
        }
    }
}
