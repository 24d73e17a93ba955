//! Federated weight optimization: build the weight loss from estimated
//! influence values at the target quantile, solve the constrained penalized
//! quadratic program, cross-validate the penalty, and aggregate the site
//! quantiles.

use crate::error::{Error, Result};
use crate::estimators::{InfluenceContext, SiteQuantiles};
use crate::scalar::{fl, Scalar};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Projected-gradient iteration cap.
const PGD_MAX_ITER: usize = 5000;
/// Relative objective-change stopping rule.
const PGD_TOL: f64 = 1e-10;
/// Default cross-validation fold count.
pub const DEFAULT_CV_FOLDS: usize = 5;
/// Default penalty grid, as multiples of the estimation-fold size.
pub const DEFAULT_LAMBDA_SCALES: [f64; 5] = [0.0, 0.1, 1.0, 10.0, 100.0];

/// Per-row influence values at the anchor quantile.
#[derive(Debug, Clone, PartialEq)]
pub struct LossComponents<F> {
    /// Target influence values, one per estimation-fold row.
    pub target: Vec<F>,
    /// Source influence values: `source_cols[k][i]` is live source `k`'s
    /// value at row `i`.
    pub source_cols: Vec<Vec<F>>,
    /// Squared discrepancies, aligned with `source_cols`.
    pub chi_sq: Vec<F>,
    /// Site labels of the live sources, aligned with `source_cols`.
    pub source_sites: Vec<usize>,
}

/// Constraint family for the weight program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightScheme {
    /// Source weights in `[0, 1]`, total at most 1.
    Fed1,
    /// As `Fed1`, then source weights rescaled by `S/(S+1)` so the target
    /// keeps at least `1/(S+1)`.
    Fed2,
    /// Source weights capped at `1/(S+1)`.
    Fed3,
    /// Uniform `1/K` on every site, no optimization.
    Equal,
}

/// Which quadratic form to minimize.
///
/// The combination form penalizes the variance of the weighted influence
/// combination; the residual form penalizes the gap between the target
/// influence and a weighted sum of source influences. They are not
/// algebraically equal; the combination form is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WeightObjective {
    #[default]
    Combination,
    Residual,
}

/// Solved weights over all sites (target first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederatedWeights<F> {
    pub weights: Vec<F>,
    pub scheme: WeightScheme,
    pub lambda: F,
}

/// Evaluates the influence columns at the anchor (target) quantile.
pub fn build_loss<F: Scalar>(
    ctx: &InfluenceContext<F>,
    quantiles: &SiteQuantiles<F>,
) -> LossComponents<F> {
    let anchor = quantiles.target_candidate();
    let target: Vec<F> = ctx
        .rows
        .iter()
        .map(|row| ctx.influence_target(row, anchor))
        .collect();
    let mut source_cols = Vec::new();
    let mut chi_sq = Vec::new();
    let mut source_sites = Vec::new();
    for site in 1..ctx.num_sites {
        let Some(chi) = quantiles.chi[site - 1] else {
            continue;
        };
        source_cols.push(
            ctx.rows
                .iter()
                .map(|row| ctx.influence_source(row, anchor, site))
                .collect(),
        );
        chi_sq.push(chi * chi);
        source_sites.push(site);
    }
    LossComponents {
        target,
        source_cols,
        chi_sq,
        source_sites,
    }
}

impl<F: Scalar> LossComponents<F> {
    pub fn num_rows(&self) -> usize {
        self.target.len()
    }

    pub fn num_sources(&self) -> usize {
        self.source_cols.len()
    }

    fn subset(&self, rows: &[usize]) -> LossComponents<F> {
        LossComponents {
            target: rows.iter().map(|&i| self.target[i]).collect(),
            source_cols: self
                .source_cols
                .iter()
                .map(|col| rows.iter().map(|&i| col[i]).collect())
                .collect(),
            chi_sq: self.chi_sq.clone(),
            source_sites: self.source_sites.clone(),
        }
    }

    /// Design column for source `k` under the given objective, evaluated at
    /// row `i`.
    fn design(&self, objective: WeightObjective, k: usize, i: usize) -> F {
        match objective {
            WeightObjective::Combination => self.target[i] - self.source_cols[k][i],
            WeightObjective::Residual => self.source_cols[k][i],
        }
    }

    /// Mean squared data term at source weights `w` (unpenalized).
    pub fn data_loss(&self, objective: WeightObjective, w: &[F]) -> F {
        let n = self.num_rows();
        let mut total = F::zero();
        for i in 0..n {
            let mut fitted = F::zero();
            for (k, &wk) in w.iter().enumerate() {
                fitted = fitted + wk * self.design(objective, k, i);
            }
            let r = fitted - self.target[i];
            total = total + r * r;
        }
        total / F::from_usize(n).expect("row count fits scalar")
    }

    /// Full penalized objective at source weights `w`.
    pub fn objective(&self, objective: WeightObjective, w: &[F], lambda: F) -> F {
        let n = F::from_usize(self.num_rows()).expect("row count fits scalar");
        let penalty = w
            .iter()
            .zip(&self.chi_sq)
            .fold(F::zero(), |acc, (&wk, &c)| acc + wk * c);
        self.data_loss(objective, w) + lambda * penalty / n
    }
}

fn source_cap<F: Scalar>(scheme: WeightScheme, num_sources: usize) -> F {
    match scheme {
        WeightScheme::Fed3 => F::one() / F::from_usize(num_sources + 1).expect("site count"),
        _ => F::one(),
    }
}

/// Euclidean projection onto `{w : 0 <= w_i <= cap, sum w_i <= 1}`.
fn project_capped<F: Scalar>(v: &[F], cap: F) -> Vec<F> {
    let clamp = |theta: F| -> Vec<F> {
        v.iter()
            .map(|&vi| (vi - theta).max(F::zero()).min(cap))
            .collect()
    };
    let boxed = clamp(F::zero());
    let total = boxed.iter().fold(F::zero(), |acc, &w| acc + w);
    if total <= F::one() {
        return boxed;
    }
    // Bisect the shift until the capped sum hits one.
    let mut lo = F::zero();
    let mut hi = v
        .iter()
        .fold(F::zero(), |acc, &vi| acc.max(vi));
    for _ in 0..200 {
        let mid = (lo + hi) / fl(2.0);
        let s = clamp(mid).iter().fold(F::zero(), |acc, &w| acc + w);
        if s > F::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    clamp(hi)
}

/// Minimizes the penalized quadratic over the scheme's feasible set by
/// projected gradient descent with a Lipschitz step.
pub fn optimize_weights<F: Scalar>(
    lc: &LossComponents<F>,
    lambda: F,
    scheme: WeightScheme,
    objective: WeightObjective,
) -> Result<FederatedWeights<F>> {
    if lambda < F::zero() {
        return Err(Error::Domain(format!("lambda must be >= 0, got {lambda}")));
    }
    let s = lc.num_sources();
    let num_sites = s + 1;

    if scheme == WeightScheme::Equal {
        let w = fl::<F>(1.0 / num_sites as f64);
        return Ok(FederatedWeights {
            weights: vec![w; num_sites],
            scheme,
            lambda,
        });
    }
    if s == 0 {
        return Ok(FederatedWeights {
            weights: vec![F::one()],
            scheme,
            lambda,
        });
    }

    let n = lc.num_rows();
    let nf = F::from_usize(n).expect("row count fits scalar");
    // Quadratic pieces: objective = w' G w - 2 g'w + const + (lambda/n) chi'w.
    let mut gram = vec![vec![F::zero(); s]; s];
    let mut lin = vec![F::zero(); s];
    for i in 0..n {
        for k in 0..s {
            let dk = lc.design(objective, k, i);
            lin[k] = lin[k] + dk * lc.target[i] / nf;
            for l in k..s {
                gram[k][l] = gram[k][l] + dk * lc.design(objective, l, i) / nf;
            }
        }
    }
    for k in 0..s {
        for l in 0..k {
            gram[k][l] = gram[l][k];
        }
    }

    // Gershgorin bound on the largest eigenvalue of the Hessian 2G.
    let lipschitz = (0..s)
        .map(|k| {
            (0..s).fold(F::zero(), |acc, l| acc + gram[k][l].abs()) * fl::<F>(2.0)
        })
        .fold(F::zero(), |acc, v| acc.max(v))
        .max(fl(1e-12));
    let step = F::one() / lipschitz;
    let cap = source_cap::<F>(scheme, s);
    let penalty_grad: Vec<F> = lc.chi_sq.iter().map(|&c| lambda * c / nf).collect();

    let mut w = vec![F::zero(); s];
    let mut last_obj = lc.objective(objective, &w, lambda);
    for _ in 0..PGD_MAX_ITER {
        let mut grad = penalty_grad.clone();
        for k in 0..s {
            let mut gw = F::zero();
            for l in 0..s {
                gw = gw + gram[k][l] * w[l];
            }
            grad[k] = grad[k] + fl::<F>(2.0) * (gw - lin[k]);
        }
        let stepped: Vec<F> = w
            .iter()
            .zip(&grad)
            .map(|(&wk, &gk)| wk - step * gk)
            .collect();
        w = project_capped(&stepped, cap);
        let obj = lc.objective(objective, &w, lambda);
        let denom = last_obj.abs().max(F::one());
        if (last_obj - obj).abs() / denom < fl(PGD_TOL) {
            last_obj = obj;
            break;
        }
        last_obj = obj;
    }
    let _ = last_obj;

    // Post-scaling and target weight per scheme.
    let scaled: Vec<F> = match scheme {
        WeightScheme::Fed2 => {
            let factor = fl::<F>(s as f64 / (s as f64 + 1.0));
            w.iter().map(|&wk| wk * factor).collect()
        }
        _ => w,
    };
    let source_total = scaled.iter().fold(F::zero(), |acc, &wk| acc + wk);
    let mut weights = Vec::with_capacity(num_sites);
    weights.push((F::one() - source_total).max(F::zero()));
    weights.extend(scaled);
    Ok(FederatedWeights {
        weights,
        scheme,
        lambda,
    })
}

/// V-fold cross-validation of the penalty over a grid; held-out loss is the
/// unpenalized data term, ties break toward the smaller penalty.
pub fn cv_lambda<F: Scalar>(
    lc: &LossComponents<F>,
    scheme: WeightScheme,
    objective: WeightObjective,
    grid: &[F],
    folds: usize,
    seed: u64,
) -> Result<F> {
    if grid.is_empty() {
        return Err(Error::Domain("lambda grid must be nonempty".into()));
    }
    if folds < 2 {
        return Err(Error::Domain(format!(
            "cross-validation needs at least 2 folds, got {folds}"
        )));
    }
    if grid.len() == 1 || lc.num_sources() == 0 {
        return Ok(grid[0]);
    }

    let n = lc.num_rows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let assignments: Vec<usize> = (0..n).map(|i| i % folds).collect();

    let mut best: Option<(F, F)> = None;
    for &lambda in grid {
        let mut held_out = F::zero();
        for fold in 0..folds {
            let train: Vec<usize> = order
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a != fold)
                .map(|(&i, _)| i)
                .collect();
            let test: Vec<usize> = order
                .iter()
                .zip(&assignments)
                .filter(|(_, &a)| a == fold)
                .map(|(&i, _)| i)
                .collect();
            let fitted = optimize_weights(&lc.subset(&train), lambda, scheme, objective)?;
            let source_w = &fitted.weights[1..];
            held_out = held_out + lc.subset(&test).data_loss(objective, source_w);
        }
        match &best {
            Some((_, best_loss)) if held_out >= *best_loss => {}
            _ => best = Some((lambda, held_out)),
        }
    }
    Ok(best.expect("nonempty grid").0)
}

/// Default penalty grid for an estimation fold of `n` rows.
pub fn default_lambda_grid<F: Scalar>(n: usize) -> Vec<F> {
    DEFAULT_LAMBDA_SCALES
        .iter()
        .map(|&s| fl(s * n as f64))
        .collect()
}

/// Weighted average of the site quantiles; dropped sites carry zero weight.
pub fn aggregate<F: Scalar>(quantiles: &SiteQuantiles<F>, weights: &FederatedWeights<F>) -> F {
    debug_assert_eq!(weights.weights.len(), quantiles.r_hat.len());
    quantiles
        .r_hat
        .iter()
        .zip(&weights.weights)
        .map(|(r, &w)| r.map_or(F::zero(), |r| r * w))
        .fold(F::zero(), |acc, v| acc + v)
}

/// Evaluates influence columns for a context and solves the full weight
/// problem, cross-validating the penalty when asked.
pub fn solve_weights<F: Scalar>(
    ctx: &InfluenceContext<F>,
    quantiles: &SiteQuantiles<F>,
    scheme: WeightScheme,
    objective: WeightObjective,
    lambda: Option<F>,
    cv_seed: u64,
) -> Result<(FederatedWeights<F>, LossComponents<F>)> {
    let lc = build_loss(ctx, quantiles);
    let lambda = match lambda {
        Some(l) => l,
        None => cv_lambda(
            &lc,
            scheme,
            objective,
            &default_lambda_grid(lc.num_rows()),
            DEFAULT_CV_FOLDS,
            cv_seed,
        )?,
    };
    let compact = optimize_weights(&lc, lambda, scheme, objective)?;

    // Re-expand over all sites, putting zero weight on dropped sources.
    let mut weights = vec![F::zero(); quantiles.r_hat.len()];
    weights[0] = compact.weights[0];
    for (pos, &site) in lc.source_sites.iter().enumerate() {
        weights[site] = compact.weights[pos + 1];
    }
    Ok((
        FederatedWeights {
            weights,
            scheme,
            lambda,
        },
        lc,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_components(
        rng: &mut ChaCha8Rng,
        n: usize,
        sources: usize,
        correlated: bool,
    ) -> LossComponents<f64> {
        let target: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let source_cols: Vec<Vec<f64>> = (0..sources)
            .map(|_| {
                target
                    .iter()
                    .map(|&a| {
                        let noise: f64 = rng.sample::<f64, _>(StandardNormal);
                        if correlated {
                            a + 0.1 * noise
                        } else {
                            noise
                        }
                    })
                    .collect()
            })
            .collect();
        let chi_sq: Vec<f64> = (0..sources).map(|_| rng.gen::<f64>() * 0.3).collect();
        LossComponents {
            target,
            source_cols,
            chi_sq,
            source_sites: (1..=sources).collect(),
        }
    }

    fn feasible(w: &[f64], scheme: WeightScheme) -> bool {
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || w.iter().any(|&wk| wk < -1e-12) {
            return false;
        }
        match scheme {
            WeightScheme::Fed3 => {
                let cap = 1.0 / w.len() as f64;
                w[1..].iter().all(|&wk| wk <= cap + 1e-9)
            }
            _ => true,
        }
    }

    #[test]
    fn huge_penalty_concentrates_on_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let lc = random_components(&mut rng, 200, 4, true);
        let w = optimize_weights(&lc, 1e9, WeightScheme::Fed1, WeightObjective::Combination)
            .unwrap();
        assert!((w.weights[0] - 1.0).abs() < 1e-6, "{:?}", w.weights);
        for &wk in &w.weights[1..] {
            assert!(wk.abs() < 1e-6);
        }
    }

    #[test]
    fn fed2_rescale_rule() {
        // Zero source columns make every combination column equal the target
        // column, so the symmetric optimum puts raw weight 1/S on each of the
        // S = 4 sources; the rescale maps that to 1/(S+1) per site.
        let lc = LossComponents {
            target: vec![1.0, -1.0, 0.5, -0.5],
            source_cols: vec![vec![0.0; 4]; 4],
            chi_sq: vec![0.0; 4],
            source_sites: vec![1, 2, 3, 4],
        };
        let w = optimize_weights(&lc, 0.0, WeightScheme::Fed2, WeightObjective::Combination)
            .unwrap();
        for &wk in &w.weights[1..] {
            assert!((wk - 0.2f64).abs() < 1e-6, "{:?}", w.weights);
        }
        assert!((w.weights[0] - 0.2f64).abs() < 1e-6, "{:?}", w.weights);
    }

    #[test]
    fn identical_sources_spread_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let lc = random_components(&mut rng, 400, 3, true);
        let w = optimize_weights(&lc, 0.0, WeightScheme::Fed1, WeightObjective::Combination)
            .unwrap();
        // Correlated sources: the optimum is not a vertex of the simplex.
        let max = w.weights.iter().cloned().fold(0.0, f64::max);
        assert!(max < 0.999, "weights collapsed to a vertex: {:?}", w.weights);
        assert!(feasible(&w.weights, WeightScheme::Fed1));
    }

    /// Exhaustive feasible-grid oracle at step 0.01 for two sources.
    fn grid_search_oracle(
        lc: &LossComponents<f64>,
        lambda: f64,
        scheme: WeightScheme,
        objective: WeightObjective,
    ) -> f64 {
        let cap = match scheme {
            WeightScheme::Fed3 => 1.0 / (lc.num_sources() as f64 + 1.0),
            _ => 1.0,
        };
        let mut best = f64::INFINITY;
        let steps = (cap / 0.01).round() as usize;
        for i in 0..=steps {
            for j in 0..=steps {
                let w = [i as f64 * 0.01, j as f64 * 0.01];
                if w[0] + w[1] > 1.0 + 1e-12 {
                    continue;
                }
                best = best.min(lc.objective(objective, &w, lambda));
            }
        }
        best
    }

    #[test]
    fn pgd_matches_grid_search_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        for trial in 0..20 {
            let lc = random_components(&mut rng, 150, 2, trial % 2 == 0);
            let lambda = [0.0, 1.0, 25.0][trial % 3];
            for scheme in [WeightScheme::Fed1, WeightScheme::Fed2, WeightScheme::Fed3] {
                let fitted =
                    optimize_weights(&lc, lambda, scheme, WeightObjective::Combination).unwrap();
                // Compare on the raw (pre-rescale) source weights.
                let raw: Vec<f64> = match scheme {
                    WeightScheme::Fed2 => fitted.weights[1..]
                        .iter()
                        .map(|&w| w * 3.0 / 2.0)
                        .collect(),
                    _ => fitted.weights[1..].to_vec(),
                };
                let achieved = lc.objective(WeightObjective::Combination, &raw, lambda);
                let oracle =
                    grid_search_oracle(&lc, lambda, scheme, WeightObjective::Combination);
                assert!(
                    achieved <= oracle + 1e-3,
                    "trial {trial} {scheme:?}: pgd {achieved} vs grid {oracle}"
                );
            }
        }
    }

    #[test]
    fn optimum_beats_vertices_and_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(83);
        let lc = random_components(&mut rng, 300, 3, true);
        let lambda = 2.0;
        let fitted =
            optimize_weights(&lc, lambda, WeightScheme::Fed1, WeightObjective::Combination)
                .unwrap();
        let q_opt = lc.objective(WeightObjective::Combination, &fitted.weights[1..], lambda);

        let mut vertices = vec![vec![0.0; 3]];
        for k in 0..3 {
            let mut v = vec![0.0; 3];
            v[k] = 1.0;
            vertices.push(v);
        }
        for v in vertices {
            assert!(q_opt <= lc.objective(WeightObjective::Combination, &v, lambda) + 1e-8);
        }
        for _ in 0..1000 {
            let mut v: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = v.iter().sum();
            if total > 1.0 {
                for vi in v.iter_mut() {
                    *vi /= total;
                }
            }
            assert!(q_opt <= lc.objective(WeightObjective::Combination, &v, lambda) + 1e-8);
        }
    }

    #[test]
    fn penalty_term_monotone_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(89);
        let lc = random_components(&mut rng, 250, 4, true);
        let mut last = f64::INFINITY;
        for lambda in [0.0, 0.5, 2.0, 10.0, 100.0, 1000.0] {
            let w = optimize_weights(&lc, lambda, WeightScheme::Fed1, WeightObjective::Combination)
                .unwrap();
            let weighted_chi: f64 = w.weights[1..]
                .iter()
                .zip(&lc.chi_sq)
                .map(|(&wk, &c)| wk * c)
                .sum();
            assert!(
                weighted_chi <= last + 1e-9,
                "lambda {lambda}: {weighted_chi} > {last}"
            );
            last = weighted_chi;
        }
    }

    #[test]
    fn feasibility_across_schemes() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..20 {
            let correlated = rng.gen::<bool>();
            let lc = random_components(&mut rng, 120, 4, correlated);
            let lambda = rng.gen::<f64>() * 10.0;
            for scheme in [
                WeightScheme::Fed1,
                WeightScheme::Fed2,
                WeightScheme::Fed3,
                WeightScheme::Equal,
            ] {
                let w =
                    optimize_weights(&lc, lambda, scheme, WeightObjective::Combination).unwrap();
                assert!(feasible(&w.weights, scheme), "{scheme:?}: {:?}", w.weights);
            }
        }
    }

    #[test]
    fn equal_weights_are_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let lc = random_components(&mut rng, 50, 4, false);
        let w = optimize_weights(&lc, 3.0, WeightScheme::Equal, WeightObjective::Combination)
            .unwrap();
        assert_eq!(w.weights, vec![0.2; 5]);
    }

    #[test]
    fn cv_singleton_grid_short_circuits() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let lc = random_components(&mut rng, 60, 2, true);
        let lambda = cv_lambda(
            &lc,
            WeightScheme::Fed1,
            WeightObjective::Combination,
            &[0.0],
            5,
            7,
        )
        .unwrap();
        assert_eq!(lambda, 0.0);
    }

    #[test]
    fn cv_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(107);
        let lc = random_components(&mut rng, 200, 3, true);
        let grid = default_lambda_grid::<f64>(lc.num_rows());
        let a = cv_lambda(
            &lc,
            WeightScheme::Fed1,
            WeightObjective::Combination,
            &grid,
            5,
            11,
        )
        .unwrap();
        let b = cv_lambda(
            &lc,
            WeightScheme::Fed1,
            WeightObjective::Combination,
            &grid,
            5,
            11,
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn cv_prefers_small_lambda_for_informative_sources() {
        let mut successes = 0;
        for trial in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + trial);
            let lc = random_components(&mut rng, 150, 3, true);
            let grid = default_lambda_grid::<f64>(lc.num_rows());
            let lambda = cv_lambda(
                &lc,
                WeightScheme::Fed1,
                WeightObjective::Combination,
                &grid,
                5,
                trial,
            )
            .unwrap();
            if lambda <= grid[2] {
                successes += 1;
            }
        }
        assert!(successes >= 35, "small lambda chosen {successes}/50 times");
    }

    #[test]
    fn aggregation_rules() {
        let quantiles = SiteQuantiles {
            r_hat: vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0), Some(5.0)],
            candidates: vec![Some(0); 5],
            chi: vec![Some(1.0), Some(2.0), Some(3.0), Some(4.0)],
            r_pooled: None,
        };
        let point = FederatedWeights {
            weights: vec![1.0, 0.0, 0.0, 0.0, 0.0],
            scheme: WeightScheme::Fed1,
            lambda: 0.0,
        };
        assert_eq!(aggregate(&quantiles, &point), 1.0);
        let equal = FederatedWeights {
            weights: vec![0.2; 5],
            scheme: WeightScheme::Equal,
            lambda: 0.0,
        };
        assert!((aggregate(&quantiles, &equal) - 3.0f64).abs() < 1e-12);
    }

    #[test]
    fn aggregation_is_a_convex_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(109);
        for _ in 0..100 {
            let r: Vec<f64> = (0..5).map(|_| rng.gen::<f64>() * 10.0).collect();
            let quantiles = SiteQuantiles {
                r_hat: r.iter().map(|&v| Some(v)).collect(),
                candidates: vec![Some(0); 5],
                chi: vec![Some(0.0); 4],
                r_pooled: None,
            };
            let mut w: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = w.iter().sum();
            for wk in w.iter_mut() {
                *wk /= total;
            }
            let fed = FederatedWeights {
                weights: w,
                scheme: WeightScheme::Fed1,
                lambda: 0.0,
            };
            let agg = aggregate(&quantiles, &fed);
            let lo = r.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(lo - 1e-12 <= agg && agg <= hi + 1e-12);
        }
    }
}
