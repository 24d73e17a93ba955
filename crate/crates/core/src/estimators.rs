//! Influence-function evaluation and estimating-equation root solving for
//! the site-specific score quantiles, the pooled quantile, and the
//! between-site discrepancies.
//!
//! All evaluation happens on the estimation fold against nuisance
//! predictions precomputed per row, so the estimating function is a
//! piecewise-constant function of the threshold whose roots live on the
//! score grid.

use crate::dataset::CellProbabilities;
use crate::error::{Error, Result};
use crate::nuisance::ScoreGrid;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Precomputed nuisance values for one estimation-fold row.
///
/// CDF profiles are indexed by solver candidate (sentinels included) and are
/// monotone with endpoints pinned at 0 and 1.
#[derive(Debug, Clone)]
pub struct ContextRow<F> {
    pub site: usize,
    pub observed: bool,
    /// First candidate index at which `1{S <= r}` turns on; `None` for rows
    /// without an observed outcome.
    pub indicator_onset: Option<usize>,
    /// Target-site conditional CDF profile.
    pub cdf_target: Vec<F>,
    /// Source-site CDF profiles, indexed by `site - 1`.
    pub cdf_sources: Vec<Vec<F>>,
    /// Pooled CDF profile, when the pooled estimator is requested.
    pub cdf_pooled: Option<Vec<F>>,
    /// Target-scope missingness odds.
    pub missing_odds_target: F,
    /// Pooled missingness odds.
    pub missing_odds_pooled: Option<F>,
    /// Target-site propensity among missing rows.
    pub target_propensity: Option<F>,
    /// Density ratios, indexed by `site - 1`.
    pub density_ratios: Vec<F>,
}

impl<F: Scalar> ContextRow<F> {
    fn indicator(&self, candidate: usize) -> F {
        match self.indicator_onset {
            Some(onset) if candidate >= onset => F::one(),
            _ => F::zero(),
        }
    }
}

/// Everything the influence evaluators need on the estimation fold.
#[derive(Debug, Clone)]
pub struct InfluenceContext<F> {
    pub alpha: F,
    pub num_sites: usize,
    pub cells: CellProbabilities<F>,
    pub grid: ScoreGrid<F>,
    pub rows: Vec<ContextRow<F>>,
    /// Source sites with fitted nuisances, i.e. those the source equations
    /// can be solved for.
    pub live_sources: Vec<usize>,
    /// Source sites excluded for having no observed outcomes.
    pub dropped_sources: Vec<usize>,
}

/// Which estimating equation to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Evaluator {
    /// Target-site equation using target data only.
    Target,
    /// Source-site equation for site `k >= 1`.
    Source(usize),
    /// Pooled equation assuming a shared outcome distribution.
    Pooled,
}

impl<F: Scalar> InfluenceContext<F> {
    fn one_minus_alpha(&self) -> F {
        F::one() - self.alpha
    }

    /// Target-site influence contribution of one row at a candidate
    /// threshold.
    pub fn influence_target(&self, row: &ContextRow<F>, candidate: usize) -> F {
        if row.site != 0 {
            return F::zero();
        }
        if !row.observed {
            let p = self.cells.prob(0, false);
            (row.cdf_target[candidate] - self.one_minus_alpha()) / p
        } else {
            let p = self.cells.prob(0, true);
            row.missing_odds_target * (row.indicator(candidate) - row.cdf_target[candidate]) / p
        }
    }

    /// Source-site influence contribution of one row at a candidate
    /// threshold.
    ///
    /// Both terms use the source-site CDF: the first term transports the
    /// source score distribution onto target missing rows, which is what
    /// makes the resulting quantile sensitive to outcome shift in that
    /// source, and the second term centers the source indicators.
    pub fn influence_source(&self, row: &ContextRow<F>, candidate: usize, source: usize) -> F {
        debug_assert!(source >= 1 && source < self.num_sites);
        let cdf = &row.cdf_sources[source - 1];
        if row.site == 0 && !row.observed {
            let p = self.cells.prob(0, false);
            (cdf[candidate] - self.one_minus_alpha()) / p
        } else if row.site == source && row.observed {
            let p = self.cells.prob(source, true);
            row.density_ratios[source - 1] * (row.indicator(candidate) - cdf[candidate]) / p
        } else {
            F::zero()
        }
    }

    /// Pooled influence contribution of one row at a candidate threshold.
    ///
    /// Left un-normalized: the proportionality constant does not move the
    /// root.
    pub fn influence_pooled(&self, row: &ContextRow<F>, candidate: usize) -> F {
        let cdf = row
            .cdf_pooled
            .as_ref()
            .expect("pooled nuisances present when the pooled evaluator is used");
        if row.site == 0 && !row.observed {
            cdf[candidate] - self.one_minus_alpha()
        } else if row.observed {
            let odds = row
                .missing_odds_pooled
                .expect("pooled missingness odds present");
            let q = row
                .target_propensity
                .expect("target propensity present");
            odds * q * (row.indicator(candidate) - cdf[candidate])
        } else {
            F::zero()
        }
    }

    fn influence(&self, evaluator: Evaluator, row: &ContextRow<F>, candidate: usize) -> F {
        match evaluator {
            Evaluator::Target => self.influence_target(row, candidate),
            Evaluator::Source(k) => self.influence_source(row, candidate, k),
            Evaluator::Pooled => self.influence_pooled(row, candidate),
        }
    }

    /// Mean estimating function over the fold at one candidate threshold.
    pub fn estimating_value(&self, evaluator: Evaluator, candidate: usize) -> F {
        let total = self
            .rows
            .iter()
            .fold(F::zero(), |acc, row| acc + self.influence(evaluator, row, candidate));
        total / F::from_usize(self.rows.len()).expect("fold size fits scalar")
    }

    /// Estimating-function values at every candidate threshold.
    pub fn estimating_profile(&self, evaluator: Evaluator) -> Vec<F> {
        (0..self.grid.num_candidates())
            .map(|j| self.estimating_value(evaluator, j))
            .collect()
    }

    fn check_preconditions(&self, evaluator: Evaluator) -> Result<()> {
        let cell_ok = |site: usize, observed: bool| self.cells.prob(site, observed) > F::zero();
        match evaluator {
            Evaluator::Target => {
                if !cell_ok(0, false) || !cell_ok(0, true) {
                    return Err(Error::Estimation(
                        "target equation needs both observed and missing target rows".into(),
                    ));
                }
            }
            Evaluator::Source(k) => {
                if !cell_ok(0, false) || !cell_ok(k, true) {
                    return Err(Error::Estimation(format!(
                        "source equation for site {k} needs missing target rows and observed \
                         site-{k} rows"
                    )));
                }
            }
            Evaluator::Pooled => {
                if !cell_ok(0, false) {
                    return Err(Error::Estimation(
                        "pooled equation needs missing target rows".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Accumulation slack for the zero-crossing test: exact ties of the
    /// estimating function must count as roots despite summation noise.
    fn root_tolerance() -> F {
        F::epsilon().sqrt() * crate::scalar::fl(0.01)
    }

    /// Smallest candidate threshold at which the mean estimating function is
    /// nonnegative.
    ///
    /// The CDF profiles are pinned to 0 at the lower sentinel and 1 at the
    /// upper sentinel, so under the cell preconditions the profile starts
    /// below zero and ends near `alpha` times the relevant cell mass; a
    /// crossing exists except in pathological tail configurations, which
    /// report an estimation error.
    pub fn solve_quantile(&self, evaluator: Evaluator) -> Result<QuantileRoot<F>> {
        self.check_preconditions(evaluator)?;
        let tol = Self::root_tolerance();
        let profile = self.estimating_profile(evaluator);
        let candidate = profile
            .iter()
            .position(|&v| v >= -tol)
            .ok_or_else(|| {
                Error::Estimation(format!(
                    "estimating function never crosses zero for {evaluator:?}; \
                     scores on the estimation fold escape the grid sentinels"
                ))
            })?;
        Ok(QuantileRoot {
            candidate,
            value: self.grid.candidates()[candidate],
        })
    }

    /// Bisection fast path: maintains a sign bracket and returns a crossing.
    ///
    /// Agrees with the exhaustive scan whenever the estimating function has
    /// a single sign change; the scan remains the reference implementation.
    pub fn solve_quantile_bisect(&self, evaluator: Evaluator) -> Result<QuantileRoot<F>> {
        self.check_preconditions(evaluator)?;
        let tol = Self::root_tolerance();
        let last = self.grid.num_candidates() - 1;
        if self.estimating_value(evaluator, 0) >= -tol {
            return Ok(QuantileRoot {
                candidate: 0,
                value: self.grid.candidates()[0],
            });
        }
        if self.estimating_value(evaluator, last) < -tol {
            return Err(Error::Estimation(format!(
                "estimating function never crosses zero for {evaluator:?}"
            )));
        }
        let mut lo = 0;
        let mut hi = last;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.estimating_value(evaluator, mid) >= -tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(QuantileRoot {
            candidate: hi,
            value: self.grid.candidates()[hi],
        })
    }
}

/// A root of the estimating equation, on the candidate grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantileRoot<F> {
    pub candidate: usize,
    pub value: F,
}

/// Site-specific quantiles, their discrepancies to the target quantile, and
/// the optional pooled quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteQuantiles<F> {
    /// Quantile per site (index 0 = target); `None` for dropped sources.
    pub r_hat: Vec<Option<F>>,
    /// Candidate index per site, aligned with `r_hat`.
    pub candidates: Vec<Option<usize>>,
    /// Discrepancy `|r_0 - r_k|` per source site (index `k - 1`).
    pub chi: Vec<Option<F>>,
    /// Pooled quantile, when requested.
    pub r_pooled: Option<F>,
}

impl<F: Scalar> SiteQuantiles<F> {
    pub fn target(&self) -> F {
        self.r_hat[0].expect("target quantile always present")
    }

    pub fn target_candidate(&self) -> usize {
        self.candidates[0].expect("target quantile always present")
    }
}

/// Solves the target equation, every live source equation, and optionally
/// the pooled equation.
pub fn site_quantiles<F: Scalar>(
    ctx: &InfluenceContext<F>,
    include_pooled: bool,
) -> Result<SiteQuantiles<F>> {
    let target = ctx.solve_quantile(Evaluator::Target)?;
    let mut r_hat = vec![Some(target.value)];
    let mut candidates = vec![Some(target.candidate)];
    let mut chi = Vec::with_capacity(ctx.num_sites.saturating_sub(1));
    for site in 1..ctx.num_sites {
        if !ctx.live_sources.contains(&site) {
            r_hat.push(None);
            candidates.push(None);
            chi.push(None);
            continue;
        }
        let root = ctx.solve_quantile(Evaluator::Source(site))?;
        chi.push(Some((target.value - root.value).abs()));
        r_hat.push(Some(root.value));
        candidates.push(Some(root.candidate));
    }
    let r_pooled = if include_pooled {
        Some(ctx.solve_quantile(Evaluator::Pooled)?.value)
    } else {
        None
    };
    Ok(SiteQuantiles {
        r_hat,
        candidates,
        chi,
        r_pooled,
    })
}
