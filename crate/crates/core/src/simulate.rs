//! Synthetic data generation and the Monte Carlo scenario runner: five-site
//! designs with configurable covariate shift, outcome-error shape, and
//! between-site outcome shift, evaluated by exact Gaussian coverage.

use crate::dataset::{Dataset, Observation};
use crate::error::{Error, Result};
use crate::predict::{fit_pipeline, threshold_for, FitOptions, MethodSpec};
use crate::scalar::{fl, Scalar};
use crate::scores::ScoreKind;
use crate::stats::{derive_seed, mean, normal_cdf, sample_sd, Z_095};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Number of sites in the synthetic design (site 0 is the target).
pub const NUM_SITES: usize = 5;
/// Ideal width of a 90% interval under the synthetic outcome model.
pub const ORACLE_WIDTH: f64 = 2.0 * Z_095;
/// Fresh target covariates drawn per replication for evaluation.
pub const NUM_TEST_POINTS: usize = 2000;
/// Local-coverage grid resolution.
pub const LOCAL_GRID_POINTS: usize = 50;
/// Local-coverage kernel bandwidth.
pub const LOCAL_BANDWIDTH: f64 = 0.1;

/// Between-site covariate heterogeneity level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovariateShift {
    Homogeneous,
    Weak,
    Strong,
}

/// Outcome noise shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorType {
    Homoscedastic,
    Heteroscedastic,
}

/// Outcome shift added to every source site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConceptShift {
    None,
    Weak,
    Strong,
}

/// Range of the outcome-observation propensity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropensityRange {
    /// Logistic propensity staying within (0.4, 0.6).
    Narrow,
    /// Steeper stand-in propensity clipped to (0.1, 0.9).
    Wide,
}

/// Score family, resolved against the scenario miscoverage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreKindName {
    Asr,
    LocalAsr,
    Cqr,
}

impl ScoreKindName {
    pub fn resolve<F: Scalar>(self, alpha: F) -> ScoreKind<F> {
        match self {
            ScoreKindName::Asr => ScoreKind::Asr,
            ScoreKindName::LocalAsr => ScoreKind::LocalAsr,
            ScoreKindName::Cqr => ScoreKind::Cqr { alpha },
        }
    }
}

fn default_alpha<F: Scalar>() -> F {
    fl(0.1)
}

fn default_num_test() -> usize {
    NUM_TEST_POINTS
}

fn default_grid_size() -> usize {
    crate::nuisance::DEFAULT_GRID_SIZE
}

/// One Monte Carlo scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "F: Scalar")]
pub struct ScenarioConfig<F> {
    /// Per-site sample size (five sites).
    pub n_per_site: usize,
    pub covariate_shift: CovariateShift,
    pub error_type: ErrorType,
    pub concept_shift: ConceptShift,
    pub score: ScoreKindName,
    #[serde(default = "default_alpha")]
    pub alpha: F,
    pub methods: Vec<MethodSpec<F>>,
    pub replications: usize,
    pub base_seed: u64,
    pub propensity_range: PropensityRange,
    #[serde(default = "default_num_test")]
    pub num_test: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
}

impl<F: Scalar> ScenarioConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_site < 50 {
            return Err(Error::Domain(format!(
                "n_per_site must be at least 50, got {}",
                self.n_per_site
            )));
        }
        if self.replications == 0 {
            return Err(Error::Domain("replications must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Domain("at least one method is required".into()));
        }
        if self.alpha <= F::zero() || self.alpha >= fl(0.5) {
            return Err(Error::Domain(format!(
                "alpha must lie in (0, 0.5), got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            grid_size: self.grid_size,
            ..FitOptions::default()
        }
    }
}

/// Latent covariate distribution for one site: `X = Phi(Z)` with
/// `Z ~ N(mean, sd^2)`.
fn site_latent_params(shift: CovariateShift, site: usize) -> (f64, f64) {
    match shift {
        CovariateShift::Homogeneous => (0.0, 1.0),
        CovariateShift::Weak => match site {
            0 | 1 => (0.0, 1.0),
            2 => (2.0, 1.0),
            3 => (2.0, 2.0),
            _ => (3.0, 1.0),
        },
        CovariateShift::Strong => match site {
            0 => (0.0, 1.0),
            1 => (1.0, 1.0),
            2 => (2.0, 2.0),
            3 => (3.0, 1.0),
            _ => (4.0, 2.0),
        },
    }
}

/// Outcome-observation propensity at covariate `x`.
pub fn propensity(range: PropensityRange, x: f64) -> f64 {
    match range {
        PropensityRange::Narrow => 1.0 / (1.0 + (-0.1 + 0.5 * x - 0.1 * x * x).exp()),
        PropensityRange::Wide => {
            let e = 1.0 / (1.0 + (-8.8 * (x - 0.5)).exp());
            e.clamp(0.1, 0.9)
        }
    }
}

/// Conditional mean of the outcome in the target site.
pub fn target_mean(x: f64) -> f64 {
    5.0 * x + x * x
}

/// Conditional outcome noise scale.
pub fn noise_scale(error_type: ErrorType, x: f64) -> f64 {
    match error_type {
        ErrorType::Homoscedastic => 1.0,
        ErrorType::Heteroscedastic => -x.ln(),
    }
}

fn shift_amount(concept: ConceptShift, site: usize) -> f64 {
    if site == 0 {
        return 0.0;
    }
    match concept {
        ConceptShift::None => 0.0,
        ConceptShift::Weak => 7.0,
        ConceptShift::Strong => 20.0,
    }
}

/// Draws one site's observations. Every row consumes exactly three draws
/// (latent covariate, observation coin, outcome noise) so the stream layout
/// is independent of the realized missingness.
pub fn generate_site_data<F: Scalar>(
    cfg: &ScenarioConfig<F>,
    site: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Observation<F>> {
    let (mean, sd) = site_latent_params(cfg.covariate_shift, site);
    let delta = shift_amount(cfg.concept_shift, site);
    (0..cfg.n_per_site)
        .map(|_| {
            let z: f64 = rng.sample::<f64, _>(StandardNormal) * sd + mean;
            // Keep X strictly inside (0, 1): the probit transform saturates
            // in floating point for strongly shifted sites, and the
            // heteroscedastic noise scale -ln(x) needs the open interval.
            let x = normal_cdf(z).clamp(1e-15, 1.0 - 1e-12);
            let coin: f64 = rng.gen();
            let eps: f64 = rng.sample::<f64, _>(StandardNormal) * noise_scale(cfg.error_type, x);
            let observed = coin < propensity(cfg.propensity_range, x);
            let y = target_mean(x) + delta + eps;
            Observation {
                covariates: vec![fl(x)],
                site,
                outcome: observed.then_some(fl(y)),
            }
        })
        .collect()
}

/// Full five-site draw for one replication seed.
pub fn generate_dataset<F: Scalar>(cfg: &ScenarioConfig<F>, seed: u64) -> Result<Dataset<F>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut observations = Vec::with_capacity(NUM_SITES * cfg.n_per_site);
    for site in 0..NUM_SITES {
        observations.extend(generate_site_data(cfg, site, &mut rng));
    }
    Dataset::new(observations)
}

/// Per-method outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult<F> {
    pub method: String,
    /// Exact marginal coverage over the fresh test draw.
    pub coverage: F,
    /// Mean interval width over the fresh test draw.
    pub width: F,
    pub threshold: F,
    pub lambda: Option<F>,
    /// Per-site weights when the method aggregates.
    pub weights: Option<Vec<F>>,
    /// Squared discrepancies per source site, `None` for dropped sources.
    pub chi_sq: Vec<Option<F>>,
    /// Exact conditional coverage smoothed onto the local grid.
    pub local_coverage: Vec<F>,
}

/// One replication's results across methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationResult<F> {
    pub replication: usize,
    pub seed: u64,
    pub methods: Vec<MethodResult<F>>,
}

/// Aggregated scenario output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary<F> {
    pub method: String,
    pub mean_coverage: F,
    pub sd_coverage: F,
    pub mean_width: F,
    pub sd_width: F,
    pub local_coverage: Vec<F>,
    pub replications: usize,
}

/// Scenario-level aggregate over replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary<F> {
    pub methods: Vec<MethodSummary<F>>,
    pub failed_replications: usize,
    pub failures: Vec<String>,
    pub oracle_width: F,
}

/// Evaluation grid for local coverage: cell midpoints of (0, 1).
pub fn local_grid<F: Scalar>() -> Vec<F> {
    (0..LOCAL_GRID_POINTS)
        .map(|j| fl((j as f64 + 0.5) / LOCAL_GRID_POINTS as f64))
        .collect()
}

/// Gaussian-kernel smoothing of `(x, coverage)` pairs onto a grid.
pub fn local_coverage<F: Scalar>(pairs: &[(F, F)], grid: &[F], bandwidth: F) -> Vec<F> {
    assert!(!pairs.is_empty());
    assert!(bandwidth > F::zero());
    grid.iter()
        .map(|&g| {
            let mut num = F::zero();
            let mut den = F::zero();
            for &(x, c) in pairs {
                let z = (x - g) / bandwidth;
                let k = (-z * z / fl::<F>(2.0)).exp();
                num = num + k * c;
                den = den + k;
            }
            num / den
        })
        .collect()
}

/// Exact coverage of `[lower, upper]` for the target outcome law at `x`.
fn exact_coverage<F: Scalar>(error_type: ErrorType, x: f64, lower: F, upper: F) -> F {
    let mu = target_mean(x);
    let sigma = noise_scale(error_type, x);
    let hi = (upper.to_f64_lossy() - mu) / sigma;
    let lo = (lower.to_f64_lossy() - mu) / sigma;
    (normal_cdf::<F>(fl(hi)) - normal_cdf::<F>(fl(lo))).max(F::zero())
}

/// Runs one replication: draw the data, fit the shared pipeline, resolve
/// each method, and evaluate exact coverage and width on a fresh target
/// covariate draw.
pub fn run_replication<F: Scalar>(
    cfg: &ScenarioConfig<F>,
    replication: usize,
) -> Result<ReplicationResult<F>> {
    cfg.validate()?;
    let seed = derive_seed(cfg.base_seed, replication as u64);
    let data = generate_dataset(cfg, seed)?;

    let need_sources = cfg.methods.iter().any(MethodSpec::needs_sources);
    let need_pooled = cfg.methods.iter().any(MethodSpec::needs_pooled);
    let kind = cfg.score.resolve(cfg.alpha);
    let artifacts = fit_pipeline(
        &data,
        cfg.alpha,
        kind,
        seed,
        need_sources,
        need_pooled,
        cfg.fit_options(),
    )?;

    // Independent evaluation stream; target covariates are uniform on (0,1).
    let mut test_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, u64::MAX));
    let test_xs: Vec<f64> = (0..cfg.num_test).map(|_| test_rng.gen::<f64>()).collect();

    let grid = local_grid::<F>();
    let mut methods = Vec::with_capacity(cfg.methods.len());
    for method in &cfg.methods {
        let (threshold, diagnostics) = threshold_for(&artifacts, method)?;
        let mut coverages = Vec::with_capacity(test_xs.len());
        let mut widths = Vec::with_capacity(test_xs.len());
        let mut pairs = Vec::with_capacity(test_xs.len());
        for &x in &test_xs {
            let xv = [fl::<F>(x)];
            let (cov, width) = match artifacts.score.invert(&xv, threshold) {
                Ok(interval) => (
                    exact_coverage(cfg.error_type, x, interval.lower, interval.upper),
                    interval.width(),
                ),
                // An empty prediction set covers nothing.
                Err(Error::EmptyInterval) => (F::zero(), F::zero()),
                Err(e) => return Err(e),
            };
            coverages.push(cov);
            widths.push(width);
            pairs.push((fl::<F>(x), cov));
        }
        methods.push(MethodResult {
            method: method.label(),
            coverage: mean(&coverages),
            width: mean(&widths),
            threshold,
            lambda: diagnostics.lambda,
            weights: diagnostics.weights,
            chi_sq: diagnostics
                .chi
                .iter()
                .map(|c| c.map(|c| c * c))
                .collect(),
            local_coverage: local_coverage(&pairs, &grid, fl(LOCAL_BANDWIDTH)),
        });
    }
    Ok(ReplicationResult {
        replication,
        seed,
        methods,
    })
}

/// As [`run_scenario`], on a dedicated thread pool of the given size
/// (0 = available cores). Results do not depend on the pool size.
pub fn run_scenario_with_threads<F: Scalar>(
    cfg: &ScenarioConfig<F>,
    threads: usize,
) -> Result<(ScenarioSummary<F>, Vec<ReplicationResult<F>>)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Estimation(format!("thread pool: {e}")))?;
    pool.install(|| run_scenario(cfg))
}

/// Runs every replication (in parallel) and aggregates. Failed replications
/// are recorded and excluded from the summary.
pub fn run_scenario<F: Scalar>(
    cfg: &ScenarioConfig<F>,
) -> Result<(ScenarioSummary<F>, Vec<ReplicationResult<F>>)> {
    cfg.validate()?;
    let outcomes: Vec<(usize, Result<ReplicationResult<F>>)> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| (r, run_replication(cfg, r)))
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (r, outcome) in outcomes {
        match outcome {
            Ok(res) => results.push(res),
            Err(e) => failures.push(format!("replication {r}: {e}")),
        }
    }
    if results.is_empty() {
        return Err(Error::Estimation(format!(
            "every replication failed; first failure: {}",
            failures.first().cloned().unwrap_or_default()
        )));
    }

    let mut methods = Vec::new();
    for (m, method) in cfg.methods.iter().enumerate() {
        let coverages: Vec<F> = results.iter().map(|r| r.methods[m].coverage).collect();
        let widths: Vec<F> = results.iter().map(|r| r.methods[m].width).collect();
        let mut curve = vec![F::zero(); LOCAL_GRID_POINTS];
        for r in &results {
            for (acc, &v) in curve.iter_mut().zip(&r.methods[m].local_coverage) {
                *acc = *acc + v;
            }
        }
        let nf = F::from_usize(results.len()).expect("count fits scalar");
        for v in curve.iter_mut() {
            *v = *v / nf;
        }
        methods.push(MethodSummary {
            method: method.label(),
            mean_coverage: mean(&coverages),
            sd_coverage: sample_sd(&coverages),
            mean_width: mean(&widths),
            sd_width: sample_sd(&widths),
            local_coverage: curve,
            replications: results.len(),
        });
    }
    Ok((
        ScenarioSummary {
            methods,
            failed_replications: failures.len(),
            failures,
            oracle_width: fl(ORACLE_WIDTH),
        },
        results,
    ))
}

/// Writes the four scenario CSVs into `out_dir`:
/// `scenario.csv`, `replications.csv`, `local_coverage.csv`, `weights.csv`.
pub fn write_outputs<F: Scalar>(
    summary: &ScenarioSummary<F>,
    replications: &[ReplicationResult<F>],
    out_dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut scenario = String::from(
        "method,mean_coverage,sd_coverage,mean_width,sd_width,replications,failed,oracle_width\n",
    );
    for m in &summary.methods {
        scenario.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            m.method,
            m.mean_coverage,
            m.sd_coverage,
            m.mean_width,
            m.sd_width,
            m.replications,
            summary.failed_replications,
            summary.oracle_width,
        ));
    }
    write_file(dir.join("scenario.csv"), &scenario)?;

    let mut reps = String::from("replication,seed,method,coverage,width,threshold,lambda\n");
    for r in replications {
        for m in &r.methods {
            reps.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.replication,
                r.seed,
                m.method,
                m.coverage,
                m.width,
                m.threshold,
                m.lambda.map_or(String::new(), |l| l.to_string()),
            ));
        }
    }
    write_file(dir.join("replications.csv"), &reps)?;

    let grid = local_grid::<F>();
    let mut local = String::from("method,x,coverage\n");
    for m in &summary.methods {
        for (&x, &c) in grid.iter().zip(&m.local_coverage) {
            local.push_str(&format!("{},{},{}\n", m.method, x, c));
        }
    }
    write_file(dir.join("local_coverage.csv"), &local)?;

    let mut weights = String::from("replication,method,site,weight,chi_sq\n");
    for r in replications {
        for m in &r.methods {
            let Some(w) = &m.weights else { continue };
            for (site, &wk) in w.iter().enumerate() {
                let chi = if site == 0 {
                    String::new()
                } else {
                    m.chi_sq
                        .get(site - 1)
                        .and_then(|c| c.map(|c| c.to_string()))
                        .unwrap_or_default()
                };
                weights.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.replication, m.method, site, wk, chi
                ));
            }
        }
    }
    write_file(dir.join("weights.csv"), &weights)?;
    Ok(())
}

fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(contents.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predict::{LambdaPolicy, MethodSpec};
    use crate::federate::{WeightObjective, WeightScheme};

    fn base_config() -> ScenarioConfig<f64> {
        ScenarioConfig {
            n_per_site: 120,
            covariate_shift: CovariateShift::Homogeneous,
            error_type: ErrorType::Homoscedastic,
            concept_shift: ConceptShift::None,
            score: ScoreKindName::Asr,
            alpha: 0.1,
            methods: vec![MethodSpec::TargetOnly],
            replications: 2,
            base_seed: 99,
            propensity_range: PropensityRange::Narrow,
            num_test: 400,
            grid_size: 40,
        }
    }

    #[test]
    fn covariates_stay_in_unit_interval() {
        for shift in [
            CovariateShift::Homogeneous,
            CovariateShift::Weak,
            CovariateShift::Strong,
        ] {
            let mut cfg = base_config();
            cfg.covariate_shift = shift;
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for site in 0..NUM_SITES {
                for obs in generate_site_data(&cfg, site, &mut rng) {
                    let x = obs.covariates[0];
                    assert!((0.0..1.0).contains(&x) || x == 0.0 || x < 1.0, "x={x}");
                    assert!(x > 0.0 && x < 1.0, "probit transform range: {x}");
                }
            }
        }
    }

    #[test]
    fn narrow_propensity_reference_values() {
        let e0 = propensity(PropensityRange::Narrow, 0.0);
        let e1 = propensity(PropensityRange::Narrow, 1.0);
        assert!((e0 - 0.525).abs() < 0.001, "e(0) = {e0}");
        assert!((e1 - 0.426).abs() < 0.001, "e(1) = {e1}");
        for i in 0..=100 {
            let e = propensity(PropensityRange::Narrow, i as f64 / 100.0);
            assert!((0.4..0.6).contains(&e), "propensity {e} out of range");
        }
        for i in 0..=100 {
            let e = propensity(PropensityRange::Wide, i as f64 / 100.0);
            assert!((0.1..=0.9).contains(&e), "wide propensity {e}");
        }
    }

    #[test]
    fn noise_scale_integrates_to_one() {
        // E[-ln X] = 1 for X uniform; both error types share mean scale 1.
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 1_000_000;
        for error_type in [ErrorType::Homoscedastic, ErrorType::Heteroscedastic] {
            let mean_sigma: f64 = (0..n)
                .map(|_| noise_scale(error_type, rng.gen::<f64>()))
                .sum::<f64>()
                / n as f64;
            assert!(
                (0.99..=1.01).contains(&mean_sigma),
                "{error_type:?}: mean sigma {mean_sigma}"
            );
        }
        assert!((ORACLE_WIDTH - 3.2897).abs() < 1e-3);
    }

    #[test]
    fn site_moments_match_design() {
        let mut cfg = base_config();
        cfg.covariate_shift = CovariateShift::Strong;
        cfg.n_per_site = 3000;
        // Check latent means via the inverse transform is unnecessary; the
        // observed fractions below a site's design median are enough.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for site in 0..NUM_SITES {
            let (mean, sd) = site_latent_params(CovariateShift::Strong, site);
            let rows = generate_site_data(&cfg, site, &mut rng);
            let median_x = normal_cdf(mean);
            let below = rows
                .iter()
                .filter(|o| o.covariates[0] < median_x)
                .count() as f64
                / rows.len() as f64;
            let se = 3.0 * (0.25f64 / rows.len() as f64).sqrt();
            assert!(
                (below - 0.5).abs() < se,
                "site {site} (sd {sd}): fraction below design median {below}"
            );
        }
    }

    #[test]
    fn oracle_interval_covers_ninety_percent_exactly() {
        for error_type in [ErrorType::Homoscedastic, ErrorType::Heteroscedastic] {
            for x in [0.1, 0.5, 0.9] {
                let mu = target_mean(x);
                let s = noise_scale(error_type, x);
                let cov = exact_coverage(
                    error_type,
                    x,
                    mu - Z_095 * s,
                    mu + Z_095 * s,
                );
                assert!((cov - 0.9f64).abs() < 1e-4, "coverage {cov}");
            }
        }
        // Degenerate interval covers nothing.
        let c = exact_coverage::<f64>(ErrorType::Homoscedastic, 0.3, 2.0, 2.0);
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn gaussian_coverage_matches_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = 0.37;
        let (lower, upper) = (1.0, 3.5);
        let exact = exact_coverage::<f64>(ErrorType::Homoscedastic, x, lower, upper);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| {
                let y = target_mean(x) + rng.sample::<f64, _>(StandardNormal);
                (lower..=upper).contains(&y)
            })
            .count();
        let empirical = hits as f64 / n as f64;
        assert!(
            (exact - empirical).abs() < 0.005,
            "exact {exact} vs empirical {empirical}"
        );
    }

    #[test]
    fn local_coverage_flat_input_gives_flat_curve() {
        let pairs: Vec<(f64, f64)> = (0..500)
            .map(|i| ((i as f64 + 0.5) / 500.0, 0.9))
            .collect();
        let grid = local_grid::<f64>();
        let curve = local_coverage(&pairs, &grid, 0.1);
        for v in curve {
            assert!((v - 0.9f64).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn local_coverage_of_oracle_intervals_is_nominal() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let pairs: Vec<(f64, f64)> = (0..2000)
            .map(|_| {
                let x = rng.gen::<f64>();
                let mu = target_mean(x);
                let cov = exact_coverage::<f64>(
                    ErrorType::Homoscedastic,
                    x,
                    mu - Z_095,
                    mu + Z_095,
                );
                (x, cov)
            })
            .collect();
        let grid = local_grid::<f64>();
        for v in local_coverage(&pairs, &grid, 0.1) {
            assert!((v - 0.9f64).abs() < 0.01, "curve value {v}");
        }
    }

    #[test]
    fn replication_is_deterministic_and_seeded() {
        let cfg = base_config();
        let a = run_replication(&cfg, 0).unwrap();
        let b = run_replication(&cfg, 0).unwrap();
        assert_eq!(a, b);
        let c = run_replication(&cfg, 1).unwrap();
        assert_ne!(a.seed, c.seed);
    }

    #[test]
    fn scenario_summary_m1_equals_single_replication() {
        let mut cfg = base_config();
        cfg.replications = 1;
        let (summary, reps) = run_scenario(&cfg).unwrap();
        assert_eq!(reps.len(), 1);
        let m = &summary.methods[0];
        assert_eq!(m.mean_coverage, reps[0].methods[0].coverage);
        assert_eq!(m.sd_coverage, 0.0);
        assert_eq!(summary.failed_replications, 0);
    }

    #[test]
    fn scenario_runs_federated_methods() {
        let mut cfg = base_config();
        cfg.methods = vec![
            MethodSpec::Federated {
                scheme: WeightScheme::Fed2,
                lambda: LambdaPolicy::Fixed(1.0),
                objective: WeightObjective::Combination,
            },
            MethodSpec::EqualWeights,
            MethodSpec::Pooled,
        ];
        cfg.replications = 1;
        let (summary, reps) = run_scenario(&cfg).unwrap();
        assert_eq!(summary.methods.len(), 3);
        let fed = &reps[0].methods[0];
        let w = fed.weights.as_ref().unwrap();
        assert_eq!(w.len(), NUM_SITES);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let eq = &reps[0].methods[1];
        assert_eq!(eq.weights.as_ref().unwrap(), &vec![0.2; NUM_SITES]);
    }

    #[test]
    fn results_independent_of_thread_count() {
        let cfg = base_config();
        let single = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| run_scenario(&cfg).unwrap());
        let multi = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_scenario(&cfg).unwrap());
        assert_eq!(single, multi);
    }
}
