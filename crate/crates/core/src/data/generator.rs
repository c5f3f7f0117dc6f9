//! Synthetic task generators with closed-form conditional probabilities.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::adaptive_simpson;

/// A synthetic binary classification task whose `η(x) = P(Y=1 | X=x)` is
/// known exactly.
///
/// The threshold and logistic kinds draw `X` uniformly from the box
/// `[low, high]^d`; the mixture kind draws the label first and then `X` from
/// an isotropic Gaussian around the class mean.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Generator {
    /// `η(x) = 1 − q` when `w·x ≥ θ`, `q` otherwise.
    FlipNoiseThreshold {
        direction: Vec<f64>,
        threshold: f64,
        flip: f64,
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
    /// `η(x) = 1 / (1 + exp(−(a·x + b)))`.
    SmoothLogistic {
        slope: Vec<f64>,
        offset: f64,
        #[serde(default = "default_low")]
        low: f64,
        #[serde(default = "default_high")]
        high: f64,
    },
    /// Two isotropic Gaussian classes with shared standard deviation.
    GaussianMixture {
        mean_pos: Vec<f64>,
        mean_neg: Vec<f64>,
        std: f64,
        prior_pos: f64,
    },
}

fn default_low() -> f64 {
    -1.0
}

fn default_high() -> f64 {
    1.0
}

impl Generator {
    /// One-dimensional flip-noise threshold on `[−1, 1]`.
    pub fn threshold_1d(threshold: f64, flip: f64) -> Result<Self> {
        let g = Generator::FlipNoiseThreshold {
            direction: vec![1.0],
            threshold,
            flip,
            low: -1.0,
            high: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn logistic_1d(slope: f64, offset: f64, low: f64, high: f64) -> Result<Self> {
        let g = Generator::SmoothLogistic {
            slope: vec![slope],
            offset,
            low,
            high,
        };
        g.validate()?;
        Ok(g)
    }

    /// `η ≡ 1/2` on `[−1, 1]^dim`.
    pub fn pure_noise(dim: usize) -> Self {
        Generator::SmoothLogistic {
            slope: vec![0.0; dim],
            offset: 0.0,
            low: -1.0,
            high: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Generator::FlipNoiseThreshold { direction, .. } => direction.len(),
            Generator::SmoothLogistic { slope, .. } => slope.len(),
            Generator::GaussianMixture { mean_pos, .. } => mean_pos.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::invalid("generator dimension must be at least 1"));
        }
        let finite = |v: &[f64]| v.iter().all(|a| a.is_finite());
        match self {
            Generator::FlipNoiseThreshold {
                direction,
                threshold,
                flip,
                low,
                high,
            } => {
                if !(0.0..0.5).contains(flip) {
                    return Err(Error::invalid(format!(
                        "flip must lie in [0, 0.5), got {flip}"
                    )));
                }
                if !finite(direction)
                    || !threshold.is_finite()
                    || direction.iter().all(|&w| w == 0.0)
                {
                    return Err(Error::invalid("direction must be finite and nonzero"));
                }
                check_box(*low, *high)
            }
            Generator::SmoothLogistic {
                slope,
                offset,
                low,
                high,
            } => {
                if !finite(slope) || !offset.is_finite() {
                    return Err(Error::invalid("logistic parameters must be finite"));
                }
                check_box(*low, *high)
            }
            Generator::GaussianMixture {
                mean_pos,
                mean_neg,
                std,
                prior_pos,
            } => {
                if mean_pos.len() != mean_neg.len() {
                    return Err(Error::invalid("mixture means differ in dimension"));
                }
                if !finite(mean_pos) || !finite(mean_neg) {
                    return Err(Error::invalid("mixture means must be finite"));
                }
                if !(std.is_finite() && *std > 0.0) {
                    return Err(Error::invalid(format!("std must be positive, got {std}")));
                }
                if !(*prior_pos > 0.0 && *prior_pos < 1.0) {
                    return Err(Error::invalid(format!(
                        "prior_pos must lie in (0, 1), got {prior_pos}"
                    )));
                }
                Ok(())
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!(
                "dimension mismatch: point has {} features, generator expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Exact conditional probability `P(Y = 1 | X = x)`.
    pub fn eta(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.eta_unchecked(x))
    }

    pub(crate) fn eta_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Generator::FlipNoiseThreshold {
                direction,
                threshold,
                flip,
                ..
            } => {
                if dot(direction, x) >= *threshold {
                    1.0 - flip
                } else {
                    *flip
                }
            }
            Generator::SmoothLogistic { slope, offset, .. } => logistic(dot(slope, x) + offset),
            Generator::GaussianMixture {
                mean_pos,
                mean_neg,
                std,
                prior_pos,
            } => {
                // log-odds of the two isotropic class densities
                let s2 = 2.0 * std * std;
                let dpos: f64 = mean_pos.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
                let dneg: f64 = mean_neg.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
                let log_odds = (prior_pos / (1.0 - prior_pos)).ln() + (dneg - dpos) / s2;
                logistic(log_odds)
            }
        }
    }

    /// Bayes rule `sgn(η(x) − 1/2)` with ties sent to `+1`.
    pub fn bayes_label(&self, x: &[f64]) -> Result<i8> {
        Ok(sign_of_eta(self.eta(x)?))
    }

    /// Bayes error `E[min(η, 1 − η)]` of the task.
    ///
    /// Exact for flip noise (`q`), constant-η logistic tasks and Gaussian
    /// mixtures; adaptive quadrature for one-dimensional logistic tasks.
    pub fn bayes_risk(&self) -> Result<f64> {
        match self {
            Generator::FlipNoiseThreshold { flip, .. } => Ok(*flip),
            Generator::SmoothLogistic {
                slope,
                offset,
                low,
                high,
            } => {
                if slope.iter().all(|&a| a == 0.0) {
                    let eta = logistic(*offset);
                    return Ok(eta.min(1.0 - eta));
                }
                if slope.len() != 1 {
                    return Err(Error::Unsupported(format!(
                        "quadrature Bayes risk needs a 1-D logistic task, got dimension {}",
                        slope.len()
                    )));
                }
                let a = slope[0];
                let integral = adaptive_simpson(
                    |x| {
                        let eta = logistic(a * x + offset);
                        eta.min(1.0 - eta)
                    },
                    *low,
                    *high,
                    1e-13,
                );
                Ok(integral / (high - low))
            }
            Generator::GaussianMixture {
                mean_pos,
                mean_neg,
                std,
                prior_pos,
            } => {
                let dist: f64 = mean_pos
                    .iter()
                    .zip(mean_neg)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let prior_neg = 1.0 - prior_pos;
                if dist == 0.0 {
                    return Ok(prior_pos.min(prior_neg));
                }
                // Project on the mean difference: each class is N(±D/2, 1) in
                // standardized units and the rule thresholds at k/D.
                let d = dist / std;
                let k = (prior_neg / prior_pos).ln();
                Ok(prior_pos * std_normal_cdf(k / d - d / 2.0)
                    + prior_neg * std_normal_cdf(-k / d - d / 2.0))
            }
        }
    }

    /// Draws one feature vector from the marginal of `X` together with
    /// `η(x)`, without drawing a label. Used for Rao-Blackwellized estimates.
    pub fn draw_x<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            Generator::FlipNoiseThreshold { low, high, .. }
            | Generator::SmoothLogistic { low, high, .. } => (0..self.dim())
                .map(|_| rng.random_range(*low..*high))
                .collect(),
            Generator::GaussianMixture { .. } => self.draw(rng).0,
        }
    }

    /// Draws one labeled observation `(x, y)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, i8) {
        match self {
            Generator::GaussianMixture {
                mean_pos,
                mean_neg,
                std,
                prior_pos,
            } => {
                let positive = rng.random::<f64>() < *prior_pos;
                let mean = if positive { mean_pos } else { mean_neg };
                let x = mean
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + std * z
                    })
                    .collect();
                (x, if positive { 1 } else { -1 })
            }
            _ => {
                let x = self.draw_x(rng);
                let eta = self.eta_unchecked(&x);
                let y = if rng.random::<f64>() < eta { 1 } else { -1 };
                (x, y)
            }
        }
    }
}

fn check_box(low: f64, high: f64) -> Result<()> {
    if !(low.is_finite() && high.is_finite() && low < high) {
        return Err(Error::invalid(format!(
            "marginal box needs low < high, got [{low}, {high}]"
        )));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[inline]
fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `+1` when `η ≥ 1/2`, else `−1`.
#[inline]
pub fn sign_of_eta(eta: f64) -> i8 {
    if eta >= 0.5 {
        1
    } else {
        -1
    }
}
