//! Conformal score families: fit the score-defining models, evaluate
//! `S(x, y)`, and invert `{y : S(x, y) <= r}` into an interval.

use crate::error::{Error, Result};
use crate::learners::{self, BasisSpec, LinearModel, QuantileModel};
use crate::scalar::{fl, Scalar};
use serde::{Deserialize, Serialize};

/// Floor applied to the fitted residual-scale model, preventing division
/// blow-ups in the locally weighted score.
pub const SCALE_FLOOR: f64 = 0.05;
/// Minimum number of training rows for score models.
const MIN_SCORE_ROWS: usize = 10;

/// Which conformal score to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreKind<F> {
    /// Absolute residual `|y - mu(x)|`.
    Asr,
    /// Absolute residual scaled by a fitted residual-spread model.
    LocalAsr,
    /// Quantile-regression score with miscoverage `alpha`; the internal
    /// quantile levels are `alpha/2` and `1 - alpha/2`.
    Cqr { alpha: F },
}

impl<F: Scalar> ScoreKind<F> {
    fn validate(&self) -> Result<()> {
        if let ScoreKind::Cqr { alpha } = self {
            if *alpha <= F::zero() || *alpha >= fl(0.5) {
                return Err(Error::Domain(format!(
                    "cqr miscoverage must lie in (0, 0.5), got {alpha}"
                )));
            }
        }
        Ok(())
    }
}

/// A trained conformal score: exactly the models its kind requires.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FittedScore<F> {
    Asr {
        mu: LinearModel<F>,
    },
    LocalAsr {
        mu: LinearModel<F>,
        scale: LinearModel<F>,
    },
    Cqr {
        alpha: F,
        lower: QuantileModel<F>,
        upper: QuantileModel<F>,
    },
}

/// Closed prediction interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval<F> {
    pub lower: F,
    pub upper: F,
}

impl<F: Scalar> Interval<F> {
    pub fn new(lower: F, upper: F) -> Result<Self> {
        if lower > upper {
            return Err(Error::EmptyInterval);
        }
        Ok(Self { lower, upper })
    }

    pub fn width(&self) -> F {
        self.upper - self.lower
    }

    pub fn contains(&self, y: F) -> bool {
        self.lower <= y && y <= self.upper
    }
}

/// Fits the score-defining models on observed-outcome rows with a degree-2
/// basis.
pub fn fit_score<F: Scalar>(
    xs: &[Vec<F>],
    ys: &[F],
    kind: ScoreKind<F>,
) -> Result<FittedScore<F>> {
    kind.validate()?;
    if xs.len() < MIN_SCORE_ROWS {
        return Err(Error::InsufficientData(format!(
            "score fitting needs at least {MIN_SCORE_ROWS} observed rows, got {}",
            xs.len()
        )));
    }
    let basis = BasisSpec::new(2)?;
    match kind {
        ScoreKind::Asr => Ok(FittedScore::Asr {
            mu: learners::fit_linear(xs, ys, basis)?,
        }),
        ScoreKind::LocalAsr => {
            let mu = learners::fit_linear(xs, ys, basis)?;
            let abs_residuals: Vec<F> = xs
                .iter()
                .zip(ys)
                .map(|(x, &y)| (y - mu.predict(x)).abs())
                .collect();
            let scale = learners::fit_linear(xs, &abs_residuals, basis)?;
            Ok(FittedScore::LocalAsr { mu, scale })
        }
        ScoreKind::Cqr { alpha } => {
            let half = alpha / fl(2.0);
            let lower = learners::fit_quantile(xs, ys, half, basis)?;
            let upper = learners::fit_quantile(xs, ys, F::one() - half, basis)?;
            Ok(FittedScore::Cqr {
                alpha,
                lower,
                upper,
            })
        }
    }
}

impl<F: Scalar> FittedScore<F> {
    /// Residual-scale prediction with its floor applied.
    fn floored_scale(model: &LinearModel<F>, x: &[F]) -> F {
        model.predict(x).max(fl(SCALE_FLOOR))
    }

    /// Evaluates the conformal score `S(x, y)`.
    pub fn score(&self, x: &[F], y: F) -> F {
        match self {
            FittedScore::Asr { mu } => (y - mu.predict(x)).abs(),
            FittedScore::LocalAsr { mu, scale } => {
                (y - mu.predict(x)).abs() / Self::floored_scale(scale, x)
            }
            FittedScore::Cqr { lower, upper, .. } => {
                let lo = lower.predict(x);
                let hi = upper.predict(x);
                (lo - y).max(y - hi)
            }
        }
    }

    /// Inverts the sublevel set `{y : S(x, y) <= r}` into a closed interval.
    ///
    /// Returns [`Error::EmptyInterval`] when no outcome value attains the
    /// threshold (negative `r` for the residual scores, or a quantile-score
    /// threshold below half the negative quantile gap).
    pub fn invert(&self, x: &[F], r: F) -> Result<Interval<F>> {
        match self {
            FittedScore::Asr { mu } => {
                if r < F::zero() {
                    return Err(Error::EmptyInterval);
                }
                let center = mu.predict(x);
                Interval::new(center - r, center + r)
            }
            FittedScore::LocalAsr { mu, scale } => {
                if r < F::zero() {
                    return Err(Error::EmptyInterval);
                }
                let center = mu.predict(x);
                let spread = r * Self::floored_scale(scale, x);
                Interval::new(center - spread, center + spread)
            }
            FittedScore::Cqr { lower, upper, .. } => {
                Interval::new(lower.predict(x) - r, upper.predict(x) + r)
            }
        }
    }
}
