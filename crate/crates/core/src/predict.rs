//! End-to-end pipeline: split the data, fit the score models, fit the
//! nuisances, solve the site quantiles, optimize the federated weights, and
//! emit a predictor that turns new covariates into intervals.

use crate::dataset::{cell_probs, split, Dataset, Fold, SplitPlan};
use crate::error::{Error, Result, StageExt};
use crate::estimators::{site_quantiles, ContextRow, InfluenceContext, SiteQuantiles};
use crate::federate::{
    aggregate, solve_weights, FederatedWeights, WeightObjective, WeightScheme,
};
use crate::learners::BasisSpec;
use crate::nuisance::{
    CdfScope, ConditionalCdf, DensityRatio, MissingnessRatio, ScoreGrid, SitePropensity,
    DEFAULT_GRID_SIZE,
};
use crate::scalar::Scalar;
use crate::scores::{fit_score, FittedScore, Interval, ScoreKind};
use serde::{Deserialize, Serialize};

/// How the federated penalty is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaPolicy<F> {
    CrossValidated,
    Fixed(F),
}

impl<F> Default for LambdaPolicy<F> {
    fn default() -> Self {
        LambdaPolicy::CrossValidated
    }
}

/// Which threshold the predictor uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", bound = "F: Scalar")]
pub enum MethodSpec<F> {
    /// Weighted combination of site quantiles.
    Federated {
        scheme: WeightScheme,
        #[serde(default)]
        lambda: LambdaPolicy<F>,
        #[serde(default)]
        objective: WeightObjective,
    },
    /// Target-site estimating equation only.
    TargetOnly,
    /// Pooled estimating equation assuming a shared outcome distribution.
    Pooled,
    /// Uniform weights over all sites.
    EqualWeights,
}

impl<F> MethodSpec<F> {
    /// Stable label used in CSV output and logs.
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Federated { scheme, .. } => match scheme {
                WeightScheme::Fed1 => "federated-fed1".into(),
                WeightScheme::Fed2 => "federated-fed2".into(),
                WeightScheme::Fed3 => "federated-fed3".into(),
                WeightScheme::Equal => "federated-equal".into(),
            },
            MethodSpec::TargetOnly => "target-only".into(),
            MethodSpec::Pooled => "pooled".into(),
            MethodSpec::EqualWeights => "equal-weights".into(),
        }
    }

    pub fn needs_sources(&self) -> bool {
        matches!(
            self,
            MethodSpec::Federated { .. } | MethodSpec::EqualWeights
        )
    }

    pub fn needs_pooled(&self) -> bool {
        matches!(self, MethodSpec::Pooled)
    }
}

/// Tuning knobs of the fit; defaults match the simulation studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of interior grid points for the conditional CDFs.
    pub grid_size: usize,
    /// Basis degree for every nuisance and score model.
    pub basis_degree: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            basis_degree: 2,
        }
    }
}

/// Fit diagnostics carried by the predictor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<F> {
    /// Site quantiles (target first); `None` marks a dropped source.
    pub r_hat: Vec<Option<F>>,
    /// Discrepancies to the target quantile per source.
    pub chi: Vec<Option<F>>,
    /// Pooled quantile, when computed.
    pub r_pooled: Option<F>,
    /// Federated weights (target first), absent for threshold-only methods.
    pub weights: Option<Vec<F>>,
    /// Penalty actually used, absent unless weights were optimized.
    pub lambda: Option<F>,
    /// Source sites dropped for having no observed outcomes.
    pub dropped_sites: Vec<usize>,
}

/// A fitted predictor: the trained score plus its chosen threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct FittedPredictor<F> {
    pub score: FittedScore<F>,
    pub threshold: F,
    pub alpha: F,
    pub method: MethodSpec<F>,
    pub covariate_dim: usize,
    pub seed: u64,
    pub diagnostics: Diagnostics<F>,
}

impl<F: Scalar> FittedPredictor<F> {
    /// Serializes the predictor as a JSON document.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Reads a predictor back from JSON.
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Shared artifacts of one pipeline run, reusable across methods.
pub struct PipelineArtifacts<F> {
    pub score: FittedScore<F>,
    pub context: InfluenceContext<F>,
    pub quantiles: SiteQuantiles<F>,
    pub plan: SplitPlan,
    pub seed: u64,
    pub alpha: F,
    pub covariate_dim: usize,
}

fn validate_alpha<F: Scalar>(alpha: F) -> Result<()> {
    if alpha <= F::zero() || alpha >= crate::scalar::fl(0.5) {
        return Err(Error::Domain(format!(
            "miscoverage must lie in (0, 0.5), got {alpha}"
        )));
    }
    Ok(())
}

/// Runs the shared pipeline once: split, score fit, nuisance fits, and site
/// quantiles. `need_sources` / `need_pooled` control which nuisances are
/// trained.
pub fn fit_pipeline<F: Scalar>(
    data: &Dataset<F>,
    alpha: F,
    kind: ScoreKind<F>,
    seed: u64,
    need_sources: bool,
    need_pooled: bool,
    options: FitOptions,
) -> Result<PipelineArtifacts<F>> {
    validate_alpha(alpha)?;
    let basis = BasisSpec::new(options.basis_degree).stage("configuration")?;
    let plan = split(data, seed).stage("split")?;
    let obs = data.observations();

    // Score models: target-site observed rows of the score fold. Fitting on
    // the target keeps the score centered on the target outcome law, so
    // source shift surfaces in the source CDFs rather than in the score.
    let mut score_xs = Vec::new();
    let mut score_ys = Vec::new();
    for i in plan.indices(Fold::ScoreFit) {
        let o = &obs[i];
        if o.site == 0 {
            if let Some(y) = o.outcome {
                score_xs.push(o.covariates.clone());
                score_ys.push(y);
            }
        }
    }
    let score = fit_score(&score_xs, &score_ys, kind).stage("score-fit")?;

    // Grid from the observed scores of the nuisance fold, pooled over sites
    // so thresholds span every site's score range.
    let nuisance_idx = plan.indices(Fold::NuisanceFit);
    let mut pooled_scores = Vec::new();
    for &i in &nuisance_idx {
        let o = &obs[i];
        if let Some(y) = o.outcome {
            pooled_scores.push(score.score(&o.covariates, y));
        }
    }
    let grid =
        ScoreGrid::build(&pooled_scores, options.grid_size).stage("grid")?;

    // Conditional CDFs per scope.
    let num_sites = data.num_sites();
    let scope_fit = |scope: CdfScope| -> Result<ConditionalCdf<F>> {
        let mut xs = Vec::new();
        let mut ss = Vec::new();
        let mut trained_on = Vec::new();
        for &i in &nuisance_idx {
            let o = &obs[i];
            let keep = match scope {
                CdfScope::Site(k) => o.site == k,
                CdfScope::Pooled => true,
            };
            if keep {
                if let Some(y) = o.outcome {
                    xs.push(o.covariates.clone());
                    ss.push(score.score(&o.covariates, y));
                    trained_on.push(i);
                }
            }
        }
        ConditionalCdf::fit(scope, &xs, &ss, &grid, basis, trained_on)
    };

    let cdf_target = scope_fit(CdfScope::Site(0)).stage("target-cdf")?;

    let mut cdf_sources: Vec<Option<ConditionalCdf<F>>> = Vec::new();
    let mut density_ratios: Vec<Option<DensityRatio<F>>> = Vec::new();
    let mut dropped_sources = Vec::new();
    let mut live_sources = Vec::new();
    if need_sources {
        // Density-ratio class A: target rows with missing outcomes.
        let mut target_missing_xs = Vec::new();
        let mut target_missing_idx = Vec::new();
        for &i in &nuisance_idx {
            let o = &obs[i];
            if o.site == 0 && !o.observed() {
                target_missing_xs.push(o.covariates.clone());
                target_missing_idx.push(i);
            }
        }
        for site in 1..num_sites {
            let has_estimation_rows = plan
                .indices(Fold::Estimation)
                .iter()
                .any(|&i| obs[i].site == site && obs[i].observed());
            let mut source_xs = Vec::new();
            let mut source_idx = Vec::new();
            for &i in &nuisance_idx {
                let o = &obs[i];
                if o.site == site && o.observed() {
                    source_xs.push(o.covariates.clone());
                    source_idx.push(i);
                }
            }
            if source_xs.is_empty() || !has_estimation_rows {
                dropped_sources.push(site);
                cdf_sources.push(None);
                density_ratios.push(None);
                continue;
            }
            cdf_sources.push(Some(scope_fit(CdfScope::Site(site)).stage("source-cdf")?));
            let mut trained_on = target_missing_idx.clone();
            trained_on.extend_from_slice(&source_idx);
            density_ratios.push(Some(
                DensityRatio::fit(site, &target_missing_xs, &source_xs, basis, trained_on)
                    .stage("density-ratio")?,
            ));
            live_sources.push(site);
        }
    } else {
        for _ in 1..num_sites {
            cdf_sources.push(None);
            density_ratios.push(None);
        }
    }

    // Missingness odds on the target scope.
    let mut target_xs = Vec::new();
    let mut target_r = Vec::new();
    let mut target_idx = Vec::new();
    for &i in &nuisance_idx {
        let o = &obs[i];
        if o.site == 0 {
            target_xs.push(o.covariates.clone());
            target_r.push(o.observed());
            target_idx.push(i);
        }
    }
    let missing_odds_target =
        MissingnessRatio::fit(&target_xs, &target_r, basis, target_idx)
            .stage("missingness-ratio")?;

    // Pooled nuisances only when the pooled method is requested.
    let (cdf_pooled, missing_odds_pooled, target_propensity) = if need_pooled {
        let pooled_cdf = scope_fit(CdfScope::Pooled).stage("pooled-cdf")?;
        let mut all_xs = Vec::new();
        let mut all_r = Vec::new();
        let mut all_idx = Vec::new();
        let mut missing_xs = Vec::new();
        let mut missing_sites = Vec::new();
        let mut missing_idx = Vec::new();
        for &i in &nuisance_idx {
            let o = &obs[i];
            all_xs.push(o.covariates.clone());
            all_r.push(o.observed());
            all_idx.push(i);
            if !o.observed() {
                missing_xs.push(o.covariates.clone());
                missing_sites.push(o.site);
                missing_idx.push(i);
            }
        }
        let pooled_odds = MissingnessRatio::fit(&all_xs, &all_r, basis, all_idx)
            .stage("pooled-missingness-ratio")?;
        let propensity =
            SitePropensity::fit(&missing_xs, &missing_sites, num_sites, basis, missing_idx)
                .stage("site-propensity")?;
        (Some(pooled_cdf), Some(pooled_odds), Some(propensity))
    } else {
        (None, None, None)
    };

    // Assemble the estimation-fold context.
    let estimation_idx = plan.indices(Fold::Estimation);
    let cells = cell_probs(data, &plan, Fold::Estimation).stage("cell-probabilities")?;
    let mut rows = Vec::with_capacity(estimation_idx.len());
    for &i in &estimation_idx {
        let o = &obs[i];
        let x = &o.covariates;
        let indicator_onset = o
            .outcome
            .map(|y| grid.indicator_onset(score.score(x, y)));
        let cdf_sources_row: Vec<Vec<F>> = cdf_sources
            .iter()
            .map(|c| c.as_ref().map_or_else(Vec::new, |c| c.profile(x)))
            .collect();
        let density_row: Vec<F> = density_ratios
            .iter()
            .map(|d| d.as_ref().map_or(F::zero(), |d| d.ratio(x)))
            .collect();
        rows.push(ContextRow {
            site: o.site,
            observed: o.observed(),
            indicator_onset,
            cdf_target: cdf_target.profile(x),
            cdf_sources: cdf_sources_row,
            cdf_pooled: cdf_pooled.as_ref().map(|c| c.profile(x)),
            missing_odds_target: missing_odds_target.ratio(x),
            missing_odds_pooled: missing_odds_pooled.as_ref().map(|m| m.ratio(x)),
            target_propensity: target_propensity.as_ref().map(|p| p.target_prob(x)),
            density_ratios: density_row,
        });
    }

    // Cross-fitting hygiene: nothing predicted on the estimation fold was
    // trained on it.
    #[cfg(debug_assertions)]
    {
        let estimation: std::collections::HashSet<usize> =
            estimation_idx.iter().copied().collect();
        let mut trained: Vec<&[usize]> = vec![
            cdf_target.trained_on(),
            missing_odds_target.trained_on(),
        ];
        for c in cdf_sources.iter().flatten() {
            trained.push(c.trained_on());
        }
        for d in density_ratios.iter().flatten() {
            trained.push(d.trained_on());
        }
        for t in trained {
            debug_assert!(t.iter().all(|i| !estimation.contains(i)));
        }
    }

    let context = InfluenceContext {
        alpha,
        num_sites,
        cells,
        grid,
        rows,
        live_sources,
        dropped_sources,
    };
    let quantiles = site_quantiles(&context, need_pooled).stage("quantiles")?;

    Ok(PipelineArtifacts {
        score,
        context,
        quantiles,
        plan,
        seed,
        alpha,
        covariate_dim: data.covariate_dim(),
    })
}

/// Resolves one method's threshold and diagnostics from shared artifacts.
pub fn threshold_for<F: Scalar>(
    artifacts: &PipelineArtifacts<F>,
    method: &MethodSpec<F>,
) -> Result<(F, Diagnostics<F>)> {
    let quantiles = &artifacts.quantiles;
    let base = Diagnostics {
        r_hat: quantiles.r_hat.clone(),
        chi: quantiles.chi.clone(),
        r_pooled: quantiles.r_pooled,
        weights: None,
        lambda: None,
        dropped_sites: artifacts.context.dropped_sources.clone(),
    };
    match method {
        MethodSpec::TargetOnly => Ok((quantiles.target(), base)),
        MethodSpec::Pooled => {
            let r = quantiles.r_pooled.ok_or_else(|| {
                Error::Estimation("pooled quantile was not computed".into())
            })?;
            Ok((r, base))
        }
        MethodSpec::EqualWeights => {
            let live = quantiles.r_hat.iter().filter(|r| r.is_some()).count();
            let w = F::one() / F::from_usize(live).expect("site count fits scalar");
            let weights: Vec<F> = quantiles
                .r_hat
                .iter()
                .map(|r| if r.is_some() { w } else { F::zero() })
                .collect();
            let fed = FederatedWeights {
                weights: weights.clone(),
                scheme: WeightScheme::Equal,
                lambda: F::zero(),
            };
            let threshold = aggregate(quantiles, &fed);
            Ok((
                threshold,
                Diagnostics {
                    weights: Some(weights),
                    ..base
                },
            ))
        }
        MethodSpec::Federated {
            scheme,
            lambda,
            objective,
        } => {
            let fixed = match lambda {
                LambdaPolicy::Fixed(l) => Some(*l),
                LambdaPolicy::CrossValidated => None,
            };
            let (weights, _) = solve_weights(
                &artifacts.context,
                quantiles,
                *scheme,
                *objective,
                fixed,
                artifacts.seed,
            )
            .stage("weights")?;
            let threshold = aggregate(quantiles, &weights);
            Ok((
                threshold,
                Diagnostics {
                    weights: Some(weights.weights),
                    lambda: Some(weights.lambda),
                    ..base
                },
            ))
        }
    }
}

/// Fits the full pipeline for one method and packages the predictor.
pub fn musci_fit<F: Scalar>(
    data: &Dataset<F>,
    alpha: F,
    kind: ScoreKind<F>,
    method: MethodSpec<F>,
    seed: u64,
) -> Result<FittedPredictor<F>> {
    musci_fit_with(data, alpha, kind, method, seed, FitOptions::default())
}

/// As [`musci_fit`], with explicit tuning knobs.
pub fn musci_fit_with<F: Scalar>(
    data: &Dataset<F>,
    alpha: F,
    kind: ScoreKind<F>,
    method: MethodSpec<F>,
    seed: u64,
    options: FitOptions,
) -> Result<FittedPredictor<F>> {
    let artifacts = fit_pipeline(
        data,
        alpha,
        kind,
        seed,
        method.needs_sources(),
        method.needs_pooled(),
        options,
    )?;
    let (threshold, diagnostics) = threshold_for(&artifacts, &method)?;
    Ok(FittedPredictor {
        score: artifacts.score,
        threshold,
        alpha,
        method,
        covariate_dim: artifacts.covariate_dim,
        seed,
        diagnostics,
    })
}

/// Interval for a new covariate vector.
pub fn predict_interval<F: Scalar>(fp: &FittedPredictor<F>, x: &[F]) -> Result<Interval<F>> {
    if x.len() != fp.covariate_dim {
        return Err(Error::Domain(format!(
            "covariate dimension mismatch: predictor expects {}, got {}",
            fp.covariate_dim,
            x.len()
        )));
    }
    fp.score.invert(x, fp.threshold)
}
