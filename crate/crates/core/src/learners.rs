//! Self-contained regression and classification primitives: ridge least
//! squares, penalized logistic regression, pinball-loss quantile regression,
//! isotonic regression, and the polynomial basis expander behind them.
//!
//! Every fit is a deterministic pure function of its inputs.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::{fl, Scalar};
use serde::{Deserialize, Serialize};

/// Ridge strength for least squares.
const RIDGE: f64 = 1e-8;
/// L2 penalty for logistic regression.
const LOGISTIC_PENALTY: f64 = 1e-6;
/// Iteration cap for logistic regression.
const LOGISTIC_MAX_ITER: usize = 100;
/// Convergence threshold on the max coefficient change.
const LOGISTIC_TOL: f64 = 1e-8;
/// Probability clip applied to all logistic predictions.
pub const PROB_CLIP: f64 = 1e-6;
/// Smoothing half-width of the pinball loss.
const PINBALL_SMOOTHING: f64 = 1e-4;
/// Subgradient iterations for quantile regression.
const PINBALL_ITERATIONS: usize = 2000;

/// Polynomial basis `1, x, x^2, ..., x^d` per coordinate, no cross terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisSpec {
    degree: usize,
}

impl BasisSpec {
    /// Degrees above 4 are rejected to keep the expanded design well
    /// conditioned.
    pub fn new(degree: usize) -> Result<Self> {
        if degree == 0 || degree > 4 {
            return Err(Error::Domain(format!(
                "basis degree must be in 1..=4, got {degree}"
            )));
        }
        Ok(Self { degree })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of expanded features for `p` covariates.
    pub fn dim(&self, covariate_dim: usize) -> usize {
        1 + covariate_dim * self.degree
    }

    /// Expands one covariate vector.
    pub fn expand<F: Scalar>(&self, x: &[F]) -> Vec<F> {
        let mut out = Vec::with_capacity(self.dim(x.len()));
        out.push(F::one());
        for &xi in x {
            let mut pow = F::one();
            for _ in 0..self.degree {
                pow = pow * xi;
                out.push(pow);
            }
        }
        out
    }
}

/// Convergence bookkeeping shared by all fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
}

/// Least-squares model over an expanded basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel<F> {
    pub basis: BasisSpec,
    pub coefficients: Vec<F>,
    pub diagnostics: FitDiagnostics,
}

impl<F: Scalar> LinearModel<F> {
    pub fn predict(&self, x: &[F]) -> F {
        dot(&self.coefficients, &self.basis.expand(x))
    }
}

/// Logistic model over an expanded basis; predictions are always clipped to
/// `[PROB_CLIP, 1 - PROB_CLIP]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<F> {
    pub basis: BasisSpec,
    pub coefficients: Vec<F>,
    pub diagnostics: FitDiagnostics,
}

impl<F: Scalar> LogisticModel<F> {
    /// Constant-probability model, for degenerate single-class fits.
    pub fn constant(p: F, basis: BasisSpec, covariate_dim: usize) -> Self {
        let p = clip_prob(p);
        let logit = (p / (F::one() - p)).ln();
        let mut coefficients = vec![F::zero(); basis.dim(covariate_dim)];
        coefficients[0] = logit;
        Self {
            basis,
            coefficients,
            diagnostics: FitDiagnostics {
                iterations: 0,
                converged: true,
            },
        }
    }

    pub fn predict_prob(&self, x: &[F]) -> F {
        let eta = dot(&self.coefficients, &self.basis.expand(x));
        clip_prob(sigmoid(eta))
    }
}

/// Quantile regression model at level `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileModel<F> {
    pub basis: BasisSpec,
    pub coefficients: Vec<F>,
    pub tau: F,
    pub diagnostics: FitDiagnostics,
}

impl<F: Scalar> QuantileModel<F> {
    pub fn predict(&self, x: &[F]) -> F {
        dot(&self.coefficients, &self.basis.expand(x))
    }
}

/// Weighted isotonic regression output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit<F> {
    /// Input values, in original order.
    pub values: Vec<F>,
    /// Non-decreasing L2 projection of `values`.
    pub fitted: Vec<F>,
}

fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

fn sigmoid<F: Scalar>(eta: F) -> F {
    // Split on sign so exp never overflows.
    if eta >= F::zero() {
        F::one() / (F::one() + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (F::one() + e)
    }
}

fn clip_prob<F: Scalar>(p: F) -> F {
    let lo = fl::<F>(PROB_CLIP);
    let hi = F::one() - lo;
    p.max(lo).min(hi)
}

fn expand_rows<F: Scalar>(xs: &[Vec<F>], basis: BasisSpec) -> Vec<Vec<F>> {
    xs.iter().map(|x| basis.expand(x)).collect()
}

/// Ridge-regularized least squares of `ys` on the expanded basis.
pub fn fit_linear<F: Scalar>(xs: &[Vec<F>], ys: &[F], basis: BasisSpec) -> Result<LinearModel<F>> {
    debug_assert_eq!(xs.len(), ys.len());
    let dim = basis.dim(xs.first().map_or(1, Vec::len));
    if xs.len() < dim {
        return Err(Error::InsufficientData(format!(
            "least squares needs at least {dim} rows, got {}",
            xs.len()
        )));
    }
    let rows = expand_rows(xs, basis);
    let mut gram = vec![vec![F::zero(); dim]; dim];
    let mut rhs = vec![F::zero(); dim];
    for (row, &y) in rows.iter().zip(ys) {
        for i in 0..dim {
            rhs[i] = rhs[i] + row[i] * y;
            for j in i..dim {
                gram[i][j] = gram[i][j] + row[i] * row[j];
            }
        }
    }
    for i in 0..dim {
        for j in 0..i {
            gram[i][j] = gram[j][i];
        }
        gram[i][i] = gram[i][i] + fl(RIDGE);
    }
    let coefficients = linalg::solve(&mut gram, &mut rhs)?;
    Ok(LinearModel {
        basis,
        coefficients,
        diagnostics: FitDiagnostics {
            iterations: 1,
            converged: true,
        },
    })
}

/// Penalized maximum-likelihood logistic regression via iteratively
/// reweighted least squares.
///
/// Steps that would decrease the penalized log-likelihood are halved until
/// they do not, so the likelihood trace is non-decreasing; on separable data
/// the fit may stop early with `converged = false` and clipped predictions.
pub fn fit_logistic<F: Scalar>(
    xs: &[Vec<F>],
    labels: &[bool],
    basis: BasisSpec,
) -> Result<LogisticModel<F>> {
    debug_assert_eq!(xs.len(), labels.len());
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(Error::DegenerateClass(format!(
            "logistic regression needs both classes; got {positives} positives out of {}",
            labels.len()
        )));
    }
    let dim = basis.dim(xs.first().map_or(1, Vec::len));
    let rows = expand_rows(xs, basis);
    let penalty = fl::<F>(LOGISTIC_PENALTY);

    let penalized_ll = |beta: &[F]| -> F {
        let mut ll = F::zero();
        for (row, &label) in rows.iter().zip(labels) {
            let eta = dot(beta, row);
            // log(1 + exp(eta)) computed stably.
            let log1pe = if eta > F::zero() {
                eta + (-eta).exp().ln_1p()
            } else {
                eta.exp().ln_1p()
            };
            let y = if label { F::one() } else { F::zero() };
            ll = ll + y * eta - log1pe;
        }
        let sq = beta.iter().fold(F::zero(), |acc, &b| acc + b * b);
        ll - penalty * sq / fl(2.0)
    };

    let mut beta = vec![F::zero(); dim];
    let mut ll = penalized_ll(&beta);
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..LOGISTIC_MAX_ITER {
        iterations = iter + 1;

        // Newton direction from the weighted normal equations.
        let mut gram = vec![vec![F::zero(); dim]; dim];
        let mut grad = vec![F::zero(); dim];
        for (row, &label) in rows.iter().zip(labels) {
            let p = sigmoid(dot(&beta, row));
            let w = (p * (F::one() - p)).max(fl(1e-10));
            let y = if label { F::one() } else { F::zero() };
            for i in 0..dim {
                grad[i] = grad[i] + row[i] * (y - p);
                for j in i..dim {
                    gram[i][j] = gram[i][j] + w * row[i] * row[j];
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                gram[i][j] = gram[j][i];
            }
            gram[i][i] = gram[i][i] + penalty;
            grad[i] = grad[i] - penalty * beta[i];
        }
        let mut direction = match linalg::solve(&mut gram, &mut grad) {
            Ok(d) => d,
            Err(_) => break,
        };

        // Halve the step until the penalized likelihood does not decrease.
        let mut accepted = false;
        for _ in 0..40 {
            let candidate: Vec<F> = beta
                .iter()
                .zip(&direction)
                .map(|(&b, &d)| b + d)
                .collect();
            let candidate_ll = penalized_ll(&candidate);
            if candidate_ll.is_finite() && candidate_ll >= ll {
                let max_change = direction
                    .iter()
                    .fold(F::zero(), |acc, &d| acc.max(d.abs()));
                beta = candidate;
                debug_assert!(candidate_ll >= ll);
                ll = candidate_ll;
                accepted = true;
                if max_change < fl(LOGISTIC_TOL) {
                    converged = true;
                }
                break;
            }
            for d in direction.iter_mut() {
                *d = *d / fl(2.0);
            }
        }
        if !accepted || converged {
            break;
        }
    }

    Ok(LogisticModel {
        basis,
        coefficients: beta,
        diagnostics: FitDiagnostics {
            iterations,
            converged,
        },
    })
}

/// Smoothed pinball loss of a residual `u` at level `tau`.
///
/// Quadratic on `|u| <= w`, matching the pinball values and slopes at the
/// junction, so the loss is differentiable everywhere.
fn smoothed_pinball<F: Scalar>(u: F, tau: F, w: F) -> F {
    if u > w {
        tau * u
    } else if u < -w {
        (tau - F::one()) * u
    } else {
        u * u / (fl::<F>(4.0) * w) + (tau - fl::<F>(0.5)) * u + w / fl(4.0)
    }
}

/// Derivative of [`smoothed_pinball`] with respect to the residual.
fn smoothed_pinball_grad<F: Scalar>(u: F, tau: F, w: F) -> F {
    if u > w {
        tau
    } else if u < -w {
        tau - F::one()
    } else {
        u / (fl::<F>(2.0) * w) + tau - fl(0.5)
    }
}

/// Quantile regression by subgradient descent on the smoothed pinball loss.
///
/// Starts from the least-squares fit, takes a diminishing step proportional
/// to the outcome spread, and returns the best iterate seen.
pub fn fit_quantile<F: Scalar>(
    xs: &[Vec<F>],
    ys: &[F],
    tau: F,
    basis: BasisSpec,
) -> Result<QuantileModel<F>> {
    if tau <= F::zero() || tau >= F::one() {
        return Err(Error::Domain(format!(
            "quantile level must lie in (0, 1), got {tau}"
        )));
    }
    let init = fit_linear(xs, ys, basis)?;
    let rows = expand_rows(xs, basis);
    let n = fl::<F>(rows.len() as f64);
    let w = fl::<F>(PINBALL_SMOOTHING);
    let dim = init.coefficients.len();

    // Start at the least-squares fit shifted so the intercept already sits
    // at the requested residual quantile; the subgradient steps then only
    // have to pick up covariate-dependent corrections.
    let mut residuals: Vec<F> = rows
        .iter()
        .zip(ys)
        .map(|(row, &y)| y - dot(&init.coefficients, row))
        .collect();
    residuals.sort_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    let shift = crate::stats::quantile_sorted(&residuals, tau.to_f64_lossy());

    let objective = |beta: &[F]| -> F {
        let mut total = F::zero();
        for (row, &y) in rows.iter().zip(ys) {
            total = total + smoothed_pinball(y - dot(beta, row), tau, w);
        }
        total / n
    };

    let spread = crate::stats::sample_sd(ys).max(fl(1e-3));
    let mut beta = init.coefficients;
    beta[0] = beta[0] + shift;
    let mut best = beta.clone();
    let mut best_obj = objective(&beta);

    for iter in 0..PINBALL_ITERATIONS {
        let mut grad = vec![F::zero(); dim];
        for (row, &y) in rows.iter().zip(ys) {
            let g = smoothed_pinball_grad(y - dot(&beta, row), tau, w);
            for (gi, &ri) in grad.iter_mut().zip(row) {
                // d/dbeta of loss(y - beta.row) = -loss'(u) * row.
                *gi = *gi - g * ri / n;
            }
        }
        let step = spread / fl::<F>(((iter + 1) as f64).sqrt());
        for (bi, &gi) in beta.iter_mut().zip(&grad) {
            *bi = *bi - step * gi;
        }
        let obj = objective(&beta);
        if obj < best_obj {
            best_obj = obj;
            best = beta.clone();
        }
    }

    Ok(QuantileModel {
        basis,
        coefficients: best,
        tau,
        diagnostics: FitDiagnostics {
            iterations: PINBALL_ITERATIONS,
            converged: true,
        },
    })
}

/// Weighted L2 projection onto non-decreasing sequences
/// (pool-adjacent-violators).
pub fn pav<F: Scalar>(values: &[F], weights: &[F]) -> Result<IsotonicFit<F>> {
    if values.len() != weights.len() {
        return Err(Error::Domain(format!(
            "isotonic regression needs equal lengths, got {} values and {} weights",
            values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| w <= F::zero()) {
        return Err(Error::Domain(
            "isotonic regression weights must be positive".into(),
        ));
    }

    // Blocks of (pooled mean, total weight, member count).
    let mut blocks: Vec<(F, F, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        blocks.push((v, w, 1));
        while blocks.len() >= 2 {
            let (m2, w2, c2) = blocks[blocks.len() - 1];
            let (m1, w1, c1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.pop();
            blocks.pop();
            let w = w1 + w2;
            blocks.push(((m1 * w1 + m2 * w2) / w, w, c1 + c2));
        }
    }

    let mut fitted = Vec::with_capacity(values.len());
    for (m, _, c) in blocks {
        fitted.extend(std::iter::repeat(m).take(c));
    }
    Ok(IsotonicFit {
        values: values.to_vec(),
        fitted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn basis(degree: usize) -> BasisSpec {
        BasisSpec::new(degree).unwrap()
    }

    fn column(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn linear_recovers_exact_line() {
        let xs = column(&[0.0, 1.0, 2.0, 3.0]);
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 + 3.0 * x[0]).collect();
        let model = fit_linear(&xs, &ys, basis(1)).unwrap();
        assert_relative_eq!(model.coefficients[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(model.coefficients[1], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn linear_constant_outcome() {
        let xs = column(&[0.2, 0.4, 0.6, 0.8]);
        let ys = vec![5.0; 4];
        let model = fit_linear(&xs, &ys, basis(1)).unwrap();
        assert_relative_eq!(model.coefficients[0], 5.0, epsilon = 1e-6);
        assert!(model.coefficients[1].abs() < 1e-6);
    }

    #[test]
    fn linear_noisy_quadratic_rms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 500;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>()]).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| 5.0 * x[0] + x[0] * x[0] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let model = fit_linear(&xs, &ys, basis(2)).unwrap();
        let rms = (xs
            .iter()
            .map(|x| {
                let truth = 5.0 * x[0] + x[0] * x[0];
                (model.predict(x) - truth).powi(2)
            })
            .sum::<f64>()
            / n as f64)
            .sqrt();
        assert!(rms < 0.1, "rms {rms}");
    }

    #[test]
    fn linear_rank_error() {
        let xs = column(&[1.0, 2.0]);
        let ys = vec![1.0, 2.0];
        assert!(matches!(
            fit_linear(&xs, &ys, basis(2)),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn logistic_exact_null_when_labels_balanced_per_point() {
        // Each x carries both labels, so the likelihood is maximized at zero.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut xs = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..1000 {
            let x = rng.gen::<f64>();
            xs.push(vec![x]);
            labels.push(true);
            xs.push(vec![x]);
            labels.push(false);
        }
        let model = fit_logistic(&xs, &labels, basis(1)).unwrap();
        for c in &model.coefficients {
            assert!(c.abs() < 0.05, "coefficient {c}");
        }
    }

    #[test]
    fn logistic_recovers_quadratic_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let truth = [-0.1, 0.5, -0.1];
        let n = 5000;
        let mut xs = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x: f64 = rng.sample(StandardNormal);
            let eta = truth[0] + truth[1] * x + truth[2] * x * x;
            let p = 1.0 / (1.0 + (-eta).exp());
            labels.push(rng.gen::<f64>() < p);
            xs.push(vec![x]);
        }
        let model = fit_logistic(&xs, &labels, basis(2)).unwrap();
        for (est, want) in model.coefficients.iter().zip(truth) {
            assert!((est - want).abs() < 0.15, "estimate {est} vs {want}");
        }
    }

    #[test]
    fn logistic_separable_clips_without_overflow() {
        let xs = column(&[-2.0, -1.0, 1.0, 2.0]);
        let labels = vec![false, false, true, true];
        let model = fit_logistic(&xs, &labels, basis(1)).unwrap();
        let p_low = model.predict_prob(&[-10.0]);
        let p_high = model.predict_prob(&[10.0]);
        assert!(p_low >= PROB_CLIP && p_high <= 1.0 - PROB_CLIP);
        assert!(p_low.is_finite() && p_high.is_finite());
    }

    #[test]
    fn logistic_rejects_single_class() {
        let xs = column(&[0.1, 0.2, 0.3]);
        assert!(matches!(
            fit_logistic(&xs, &[true, true, true], basis(1)),
            Err(Error::DegenerateClass(_))
        ));
    }

    #[test]
    fn quantile_median_of_constants_brute_force() {
        let xs = column(&[0.0, 0.0, 0.0, 0.0, 0.0]);
        let ys = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        // Intercept-only: use a degree-1 basis on a constant covariate; the
        // slope cannot move the fit, so the intercept carries the quantile.
        let model = fit_quantile(&xs, &ys, 0.5, basis(1)).unwrap();

        // Brute-force oracle over candidate constants on a 0.01 grid.
        let pinball = |c: f64| -> f64 {
            ys.iter()
                .map(|&y| {
                    let u: f64 = y - c;
                    u * (0.5 - if u < 0.0 { 1.0 } else { 0.0 })
                })
                .sum::<f64>()
                / ys.len() as f64
        };
        let mut best = (f64::INFINITY, 0.0);
        let mut c = 0.0;
        while c <= 6.0 {
            let v = pinball(c);
            if v < best.0 {
                best = (v, c);
            }
            c += 0.01;
        }
        assert!((best.1 - 3.0f64).abs() < 0.011, "oracle {}", best.1);
        assert!(
            (model.predict(&[0.0]) - 3.0).abs() < 0.05,
            "fit {}",
            model.predict(&[0.0])
        );
    }

    #[test]
    fn quantile_median_line_on_symmetric_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 2000;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>() * 2.0]).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x[0] + rng.sample::<f64, _>(StandardNormal) * 0.5)
            .collect();
        let model = fit_quantile(&xs, &ys, 0.5, basis(1)).unwrap();
        assert!(model.coefficients[0].abs() < 0.05, "{:?}", model.coefficients);
        assert!(
            (model.coefficients[1] - 1.0).abs() < 0.05,
            "{:?}",
            model.coefficients
        );
    }

    #[test]
    fn quantile_tails_match_normal_quantiles() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 5000;
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen::<f64>()]).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let lo = fit_quantile(&xs, &ys, 0.05, basis(1)).unwrap();
        let hi = fit_quantile(&xs, &ys, 0.95, basis(1)).unwrap();
        let at = |m: &QuantileModel<f64>, x: f64| m.predict(&[x]);
        for x in [0.25, 0.5, 0.75] {
            assert!((at(&lo, x) + 1.645).abs() < 0.1, "lo {}", at(&lo, x));
            assert!((at(&hi, x) - 1.645).abs() < 0.1, "hi {}", at(&hi, x));
        }
    }

    #[test]
    fn quantile_rejects_bad_level() {
        let xs = column(&[0.0, 1.0]);
        let ys = vec![0.0, 1.0];
        assert!(matches!(
            fit_quantile(&xs, &ys, 1.0, basis(1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn pinball_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let w = 1e-4;
        let h = 1e-6;
        for _ in 0..100 {
            let u: f64 = rng.sample::<f64, _>(StandardNormal) * 0.01;
            let tau = rng.gen_range(0.05..0.95);
            let analytic = smoothed_pinball_grad(u, tau, w);
            let numeric =
                (smoothed_pinball(u + h, tau, w) - smoothed_pinball(u - h, tau, w)) / (2.0 * h);
            let scale = analytic.abs().max(1.0);
            assert!(
                (analytic - numeric).abs() / scale < 1e-5,
                "u={u} tau={tau}: {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn pav_keeps_monotone_input() {
        let fit = pav(&[1.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(fit.fitted, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn pav_pools_violators() {
        let fit = pav(&[3.0, 1.0, 2.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(fit.fitted, vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn pav_weighted_pair() {
        // Pooled mean (5*1 + 1*3) / 4 = 2.
        let fit = pav(&[5.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!(fit.fitted, vec![2.0, 2.0]);
    }

    #[test]
    fn pav_rejects_bad_arguments() {
        assert!(pav(&[1.0, 2.0], &[1.0]).is_err());
        assert!(pav(&[1.0, 2.0], &[1.0, 0.0]).is_err());
    }

    /// Dynamic-programming oracle: minimal weighted SSE over non-decreasing
    /// sequences whose values live on a 0.01 grid spanning the data range.
    fn monotone_grid_oracle(values: &[f64], weights: &[f64]) -> f64 {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let levels: Vec<f64> = {
            let mut v = Vec::new();
            let mut x = lo;
            while x <= hi + 1e-9 {
                v.push(x);
                x += 0.01;
            }
            v
        };
        let mut prev = vec![0.0; levels.len()];
        for (i, (&y, &w)) in values.iter().zip(weights).enumerate() {
            let mut cur: Vec<f64> = levels
                .iter()
                .map(|&v| w * (y - v) * (y - v))
                .collect();
            if i > 0 {
                let mut running = f64::INFINITY;
                for (c, p) in cur.iter_mut().zip(&prev) {
                    running = running.min(*p);
                    *c += running;
                }
            }
            prev = cur;
        }
        prev.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn pav_beats_grid_search_on_short_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.gen_range(2..=6);
            let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
            let weights: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..2.0)).collect();
            let fit = pav(&values, &weights).unwrap();
            let pav_sse: f64 = values
                .iter()
                .zip(&weights)
                .zip(&fit.fitted)
                .map(|((&y, &w), &f)| w * (y - f) * (y - f))
                .sum();
            let oracle = monotone_grid_oracle(&values, &weights);
            assert!(
                pav_sse <= oracle + 1e-9,
                "pav {pav_sse} vs grid oracle {oracle}"
            );
            for pair in fit.fitted.windows(2) {
                assert!(pair[0] <= pair[1] + 1e-12);
            }
        }
    }

    #[test]
    fn fits_are_bitwise_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let xs: Vec<Vec<f64>> = (0..200).map(|_| vec![rng.gen::<f64>()]).collect();
        let ys: Vec<f64> = xs
            .iter()
            .map(|x| x[0] + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let labels: Vec<bool> = ys.iter().map(|&y| y > 0.5).collect();

        let l1 = fit_linear(&xs, &ys, basis(2)).unwrap();
        let l2 = fit_linear(&xs, &ys, basis(2)).unwrap();
        assert_eq!(l1, l2);

        let g1 = fit_logistic(&xs, &labels, basis(2)).unwrap();
        let g2 = fit_logistic(&xs, &labels, basis(2)).unwrap();
        assert_eq!(g1, g2);

        let q1 = fit_quantile(&xs, &ys, 0.3, basis(1)).unwrap();
        let q2 = fit_quantile(&xs, &ys, 0.3, basis(1)).unwrap();
        assert_eq!(q1, q2);
    }
}
