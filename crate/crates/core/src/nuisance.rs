//! Nuisance functions behind the estimating equations: conditional score
//! CDFs (per site and pooled), missingness odds, covariate density ratios,
//! and the target-site propensity. All are trained on the nuisance fold and
//! predicted on the estimation fold.

use crate::error::{Error, Result};
use crate::learners::{self, BasisSpec, LogisticModel};
use crate::scalar::{fl, Scalar};
use crate::stats::quantile_sorted;
use serde::{Deserialize, Serialize};

/// Clip bound for ratio and propensity predictions.
pub const RATIO_CLIP: f64 = 0.01;
/// Default number of grid points for the conditional CDFs.
pub const DEFAULT_GRID_SIZE: usize = 40;

/// Discretization of the score axis: strictly increasing interior points
/// bracketed by sentinels one unit below the minimum and above the maximum.
///
/// Conditional CDFs evaluate to exactly 0 at the lower sentinel and exactly
/// 1 at the upper sentinel, so estimating equations always bracket a root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid<F> {
    points: Vec<F>,
    lower_sentinel: F,
    upper_sentinel: F,
}

impl<F: Scalar> ScoreGrid<F> {
    /// Quantile-spaced grid over the given scores.
    ///
    /// Uses `size` linear-interpolation quantiles at levels `g/size`,
    /// deduplicated; when `size` is at least the number of distinct scores,
    /// the grid is the distinct values themselves.
    pub fn build(scores: &[F], size: usize) -> Result<Self> {
        if scores.is_empty() || size == 0 {
            return Err(Error::InsufficientData(
                "grid construction needs scores and a positive size".into(),
            ));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        let mut distinct = sorted.clone();
        distinct.dedup();

        let points = if distinct.len() <= size {
            distinct
        } else {
            let mut pts: Vec<F> = (1..=size)
                .map(|g| quantile_sorted(&sorted, g as f64 / size as f64))
                .collect();
            pts.dedup();
            pts
        };
        let lower_sentinel = sorted[0] - F::one();
        let upper_sentinel = sorted[sorted.len() - 1] + F::one();
        Ok(Self {
            points,
            lower_sentinel,
            upper_sentinel,
        })
    }

    pub fn points(&self) -> &[F] {
        &self.points
    }

    pub fn lower_sentinel(&self) -> F {
        self.lower_sentinel
    }

    pub fn upper_sentinel(&self) -> F {
        self.upper_sentinel
    }

    /// Candidate thresholds scanned by the root solver: lower sentinel,
    /// interior points, upper sentinel.
    pub fn candidates(&self) -> Vec<F> {
        let mut v = Vec::with_capacity(self.points.len() + 2);
        v.push(self.lower_sentinel);
        v.extend_from_slice(&self.points);
        v.push(self.upper_sentinel);
        v
    }

    pub fn num_candidates(&self) -> usize {
        self.points.len() + 2
    }

    /// Smallest candidate index `j` whose threshold is >= `score`, i.e. the
    /// first threshold at which the indicator `1{S <= r}` turns on. Scores
    /// above the upper sentinel return `num_candidates()` (never on).
    pub fn indicator_onset(&self, score: F) -> usize {
        let candidates = self.candidates();
        candidates
            .iter()
            .position(|&c| c >= score)
            .unwrap_or(candidates.len())
    }

    /// Candidate index for an arbitrary threshold: the largest candidate
    /// <= `r`, saturating at the sentinels.
    pub fn candidate_index(&self, r: F) -> usize {
        if r >= self.upper_sentinel {
            return self.num_candidates() - 1;
        }
        let mut idx = 0;
        for (j, &p) in self.points.iter().enumerate() {
            if p <= r {
                idx = j + 1;
            } else {
                break;
            }
        }
        idx
    }
}

/// Scope of a conditional score CDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdfScope {
    /// Observed rows of one site.
    Site(usize),
    /// Observed rows pooled over all sites.
    Pooled,
}

/// Conditional CDF of the conformal score given covariates: one logistic
/// model per grid point, monotonized across grid points at evaluation time.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalCdf<F> {
    pub scope: CdfScope,
    grid: ScoreGrid<F>,
    models: Vec<LogisticModel<F>>,
    trained_on: Vec<usize>,
}

impl<F: Scalar> ConditionalCdf<F> {
    /// Fits one threshold classifier per grid point from `(x, score)` pairs.
    ///
    /// Grid points where every label agrees use a constant clipped model in
    /// place of the iterative fit.
    pub fn fit(
        scope: CdfScope,
        xs: &[Vec<F>],
        scores: &[F],
        grid: &ScoreGrid<F>,
        basis: BasisSpec,
        trained_on: Vec<usize>,
    ) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InsufficientData(format!(
                "conditional CDF for {scope:?} has no observed rows"
            )));
        }
        let covariate_dim = xs[0].len();
        let mut models = Vec::with_capacity(grid.points().len());
        for &r in grid.points() {
            let labels: Vec<bool> = scores.iter().map(|&s| s <= r).collect();
            let positives = labels.iter().filter(|&&l| l).count();
            let model = if positives == 0 || positives == labels.len() {
                let p = fl::<F>(positives as f64 / labels.len() as f64);
                LogisticModel::constant(p, basis, covariate_dim)
            } else {
                learners::fit_logistic(xs, &labels, basis)?
            };
            models.push(model);
        }
        Ok(Self {
            scope,
            grid: grid.clone(),
            models,
            trained_on,
        })
    }

    pub fn trained_on(&self) -> &[usize] {
        &self.trained_on
    }

    /// Monotone CDF profile over the solver candidates at a fixed `x`:
    /// `[0, m(r_1, x), ..., m(r_G, x), 1]` after isotonic projection.
    pub fn profile(&self, x: &[F]) -> Vec<F> {
        let raw: Vec<F> = self.models.iter().map(|m| m.predict_prob(x)).collect();
        let weights = vec![F::one(); raw.len()];
        let monotone = learners::pav(&raw, &weights)
            .expect("equal lengths and unit weights")
            .fitted;
        let mut profile = Vec::with_capacity(monotone.len() + 2);
        profile.push(F::zero());
        profile.extend(monotone);
        profile.push(F::one());
        profile
    }

    /// Step evaluation at an arbitrary threshold `r`.
    pub fn evaluate(&self, r: F, x: &[F]) -> F {
        let profile = self.profile(x);
        profile[self.grid.candidate_index(r)]
    }
}

/// Odds of a missing outcome given covariates, `P(R=0|x) / P(R=1|x)`,
/// within a site scope.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingnessRatio<F> {
    model: LogisticModel<F>,
    trained_on: Vec<usize>,
}

impl<F: Scalar> MissingnessRatio<F> {
    /// Fits `P(R=1 | x)` on the scope rows; `observed[i]` is the R label.
    pub fn fit(
        xs: &[Vec<F>],
        observed: &[bool],
        basis: BasisSpec,
        trained_on: Vec<usize>,
    ) -> Result<Self> {
        let n_observed = observed.iter().filter(|&&r| r).count();
        if n_observed == 0 || n_observed == observed.len() {
            return Err(Error::DegenerateClass(format!(
                "missingness ratio needs both observed and missing rows in scope \
                 ({n_observed} of {} observed); widen the scope or check the data",
                observed.len()
            )));
        }
        let model = learners::fit_logistic(xs, observed, basis)?;
        Ok(Self { model, trained_on })
    }

    pub fn trained_on(&self) -> &[usize] {
        &self.trained_on
    }

    /// Clipped odds `(1 - e(x)) / e(x)`.
    pub fn ratio(&self, x: &[F]) -> F {
        let e = self.model.predict_prob(x);
        clip_ratio((F::one() - e) / e)
    }
}

/// Covariate density ratio of the target missing population over a source
/// observed population, via a probabilistic classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRatio<F> {
    pub source_site: usize,
    model: LogisticModel<F>,
    /// Sample-size correction `n_source / n_target` for the class odds.
    correction: F,
    trained_on: Vec<usize>,
}

impl<F: Scalar> DensityRatio<F> {
    /// Fits a classifier of target-missing rows (class A) against source
    /// observed rows (class B); the odds times `n_B/n_A` estimate the ratio.
    pub fn fit(
        source_site: usize,
        target_xs: &[Vec<F>],
        source_xs: &[Vec<F>],
        basis: BasisSpec,
        trained_on: Vec<usize>,
    ) -> Result<Self> {
        if target_xs.is_empty() || source_xs.is_empty() {
            return Err(Error::DegenerateClass(format!(
                "density ratio for source site {source_site} needs both classes; \
                 target-missing rows: {}, source-observed rows: {}",
                target_xs.len(),
                source_xs.len()
            )));
        }
        let mut xs = Vec::with_capacity(target_xs.len() + source_xs.len());
        let mut labels = Vec::with_capacity(xs.capacity());
        for x in target_xs {
            xs.push(x.clone());
            labels.push(true);
        }
        for x in source_xs {
            xs.push(x.clone());
            labels.push(false);
        }
        let model = learners::fit_logistic(&xs, &labels, basis)?;
        let correction = fl::<F>(source_xs.len() as f64 / target_xs.len() as f64);
        Ok(Self {
            source_site,
            model,
            correction,
            trained_on,
        })
    }

    pub fn trained_on(&self) -> &[usize] {
        &self.trained_on
    }

    /// Clipped density-ratio prediction.
    pub fn ratio(&self, x: &[F]) -> F {
        let p = self.model.predict_prob(x);
        clip_ratio(p / (F::one() - p) * self.correction)
    }
}

/// One-vs-rest site membership probabilities among missing-outcome rows,
/// renormalized to sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SitePropensity<F> {
    models: Vec<LogisticModel<F>>,
    trained_on: Vec<usize>,
}

impl<F: Scalar> SitePropensity<F> {
    /// Fits per-site one-vs-rest classifiers on missing-outcome rows.
    pub fn fit(
        xs: &[Vec<F>],
        sites: &[usize],
        num_sites: usize,
        basis: BasisSpec,
        trained_on: Vec<usize>,
    ) -> Result<Self> {
        let mut present = vec![false; num_sites];
        for &s in sites {
            present[s] = true;
        }
        if !present[0] {
            return Err(Error::DegenerateClass(
                "site propensity needs target rows among the missing-outcome rows".into(),
            ));
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::DegenerateClass(
                "site propensity needs at least two sites among missing-outcome rows".into(),
            ));
        }
        let covariate_dim = xs.first().map_or(1, Vec::len);
        let mut models = Vec::with_capacity(num_sites);
        for site in 0..num_sites {
            let labels: Vec<bool> = sites.iter().map(|&s| s == site).collect();
            let positives = labels.iter().filter(|&&l| l).count();
            let model = if positives == 0 || positives == labels.len() {
                let p = fl::<F>(positives as f64 / labels.len() as f64);
                LogisticModel::constant(p, basis, covariate_dim)
            } else {
                learners::fit_logistic(xs, &labels, basis)?
            };
            models.push(model);
        }
        Ok(Self { models, trained_on })
    }

    pub fn trained_on(&self) -> &[usize] {
        &self.trained_on
    }

    /// Renormalized one-vs-rest probabilities; sums to one.
    pub fn probs(&self, x: &[F]) -> Vec<F> {
        let raw: Vec<F> = self.models.iter().map(|m| m.predict_prob(x)).collect();
        let total = raw.iter().fold(F::zero(), |acc, &p| acc + p);
        raw.into_iter().map(|p| p / total).collect()
    }

    /// Clipped target-site component.
    pub fn target_prob(&self, x: &[F]) -> F {
        let p = self.probs(x)[0];
        let lo = fl::<F>(RATIO_CLIP);
        p.max(lo).min(F::one() - lo)
    }
}

fn clip_ratio<F: Scalar>(v: F) -> F {
    let lo = fl::<F>(RATIO_CLIP);
    v.max(lo).min(F::one() / lo)
}
