//! Data model, CSV ingestion, stratified fold splitting, and empirical cell
//! probabilities.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

/// One unit `(X, T, R, RY)`: covariates, site label, and the outcome when it
/// was observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation<F> {
    pub covariates: Vec<F>,
    pub site: usize,
    /// Present exactly when the outcome was observed.
    pub outcome: Option<F>,
}

impl<F> Observation<F> {
    pub fn observed(&self) -> bool {
        self.outcome.is_some()
    }
}

/// Immutable collection of observations across `num_sites` sites, site 0
/// being the target.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    observations: Vec<Observation<F>>,
    num_sites: usize,
    covariate_dim: usize,
}

impl<F: Scalar> Dataset<F> {
    /// Validates the structural invariants:
    /// - all covariate vectors share one length,
    /// - site labels are contiguous `0..K`,
    /// - the target site has at least one missing outcome to predict.
    pub fn new(observations: Vec<Observation<F>>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::Schema("dataset has no observations".into()));
        }
        let covariate_dim = observations[0].covariates.len();
        if covariate_dim == 0 {
            return Err(Error::Schema("observations need at least one covariate".into()));
        }
        for (i, obs) in observations.iter().enumerate() {
            if obs.covariates.len() != covariate_dim {
                return Err(Error::Schema(format!(
                    "observation {i} has {} covariates, expected {covariate_dim}",
                    obs.covariates.len()
                )));
            }
        }
        let max_site = observations.iter().map(|o| o.site).max().unwrap_or(0);
        let num_sites = max_site + 1;
        let mut seen = vec![false; num_sites];
        for obs in &observations {
            seen[obs.site] = true;
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(Error::Schema(format!(
                "site labels are not contiguous: site {missing} has no observations"
            )));
        }
        if !observations
            .iter()
            .any(|o| o.site == 0 && !o.observed())
        {
            return Err(Error::Schema(
                "target site has no missing outcomes, nothing to predict".into(),
            ));
        }
        Ok(Self {
            observations,
            num_sites,
            covariate_dim,
        })
    }

    pub fn observations(&self) -> &[Observation<F>] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn num_sites(&self) -> usize {
        self.num_sites
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    /// Loads the `site,observed,y,x1..xp` schema. The outcome field must be
    /// empty exactly when `observed` is 0.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text)
    }

    /// Parses CSV text in the `site,observed,y,x1..xp` schema.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Schema("empty file".into()))?;
        let fields: Vec<&str> = header.trim_end().split(',').collect();
        if fields.len() < 4 || fields[0] != "site" || fields[1] != "observed" || fields[2] != "y" {
            return Err(Error::Schema(format!(
                "header must start with site,observed,y,x1..; got {header:?}"
            )));
        }
        let covariate_dim = fields.len() - 3;
        for (j, name) in fields[3..].iter().enumerate() {
            let expected = format!("x{}", j + 1);
            if *name != expected {
                return Err(Error::Schema(format!(
                    "covariate column {} must be named {expected}, got {name:?}",
                    j + 4
                )));
            }
        }

        let mut observations = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.trim_end().split(',').collect();
            if parts.len() != fields.len() {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("expected {} fields, got {}", fields.len(), parts.len()),
                });
            }
            let site: usize = parts[0].parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("invalid site label {:?}", parts[0]),
            })?;
            let observed = match parts[1] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("observed must be 0 or 1, got {other:?}"),
                    })
                }
            };
            let outcome = if parts[2].is_empty() {
                None
            } else {
                Some(parse_float::<F>(parts[2], line_no, "y")?)
            };
            if observed != outcome.is_some() {
                return Err(Error::Schema(format!(
                    "line {line_no}: outcome must be present exactly when observed = 1"
                )));
            }
            let mut covariates = Vec::with_capacity(covariate_dim);
            for (j, raw) in parts[3..].iter().enumerate() {
                covariates.push(parse_float::<F>(raw, line_no, &format!("x{}", j + 1))?);
            }
            observations.push(Observation {
                covariates,
                site,
                outcome,
            });
        }
        Self::new(observations)
    }

    /// Writes the dataset in the same schema `load_csv` reads; the
    /// write-read-write cycle is byte-identical.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        out.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }

    /// Renders the dataset as CSV text.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("site,observed,y");
        for j in 1..=self.covariate_dim {
            s.push_str(&format!(",x{j}"));
        }
        s.push('\n');
        for obs in &self.observations {
            s.push_str(&format!(
                "{},{}",
                obs.site,
                if obs.observed() { 1 } else { 0 }
            ));
            match obs.outcome {
                Some(y) => s.push_str(&format!(",{y}")),
                None => s.push(','),
            }
            for x in &obs.covariates {
                s.push_str(&format!(",{x}"));
            }
            s.push('\n');
        }
        s
    }
}

fn parse_float<F: Scalar>(raw: &str, line: usize, field: &str) -> Result<F> {
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number {raw:?} in field {field}"),
    })?;
    Ok(F::from_f64_lossy(v))
}

/// Fold labels of the two-stage split: half the data solves the estimating
/// equations, a quarter fits the score models, a quarter fits the nuisances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fold {
    /// Score-model training fold.
    ScoreFit,
    /// Nuisance-model training fold.
    NuisanceFit,
    /// Estimating-equation fold.
    Estimation,
}

/// Per-observation fold assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub assignment: Vec<Fold>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn indices(&self, fold: Fold) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn fold_size(&self, fold: Fold) -> usize {
        self.assignment.iter().filter(|&&f| f == fold).count()
    }
}

/// Uniformly random split, stratified by `(site, observed)` cell.
///
/// Globally the estimation fold gets exactly `ceil(n/2)` rows and the two
/// training folds split the rest as evenly as possible; within each cell the
/// proportions are kept within one row of 1/2, 1/4, 1/4 so that no nonempty
/// cell of size >= 3 loses a fold.
pub fn split<F: Scalar>(data: &Dataset<F>, seed: u64) -> Result<SplitPlan> {
    let n = data.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!(
            "splitting needs at least 8 observations, got {n}"
        )));
    }

    let mut cells: BTreeMap<(usize, bool), Vec<usize>> = BTreeMap::new();
    for (i, obs) in data.observations().iter().enumerate() {
        cells.entry((obs.site, obs.observed())).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut members: Vec<Vec<usize>> = Vec::with_capacity(cells.len());
    for indices in cells.values() {
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        members.push(shuffled);
    }

    let n_estimation = n.div_ceil(2);
    let counts: Vec<usize> = members.iter().map(Vec::len).collect();
    let estimation_quota = apportion(&counts, n_estimation, 3);

    let train_counts: Vec<usize> = counts
        .iter()
        .zip(&estimation_quota)
        .map(|(&m, &e)| m - e)
        .collect();
    let n_train: usize = train_counts.iter().sum();
    let score_quota = apportion(&train_counts, n_train / 2, 1);

    let mut assignment = vec![Fold::Estimation; n];
    for ((cell, &e), &s) in members.iter().zip(&estimation_quota).zip(&score_quota) {
        for (pos, &idx) in cell.iter().enumerate() {
            assignment[idx] = if pos < e {
                Fold::Estimation
            } else if pos < e + s {
                Fold::ScoreFit
            } else {
                Fold::NuisanceFit
            };
        }
    }
    Ok(SplitPlan { assignment, seed })
}

/// Splits `total` across cells so each cell contributes `floor(m/2)` or
/// `ceil(m/2)` rows, preferring to round up in cells where that cannot
/// starve a later fold (odd counts other than `protect`).
fn apportion(counts: &[usize], total: usize, protect: usize) -> Vec<usize> {
    let mut quota: Vec<usize> = counts.iter().map(|&m| m / 2).collect();
    let mut deficit = total - quota.iter().sum::<usize>();
    // Large odd cells first, then singletons, protected size last.
    let mut candidates: Vec<usize> = (0..counts.len())
        .filter(|&c| counts[c] % 2 == 1)
        .collect();
    candidates.sort_by_key(|&c| {
        if counts[c] == protect {
            2
        } else if counts[c] == 1 {
            1
        } else {
            0
        }
    });
    for c in candidates {
        if deficit == 0 {
            break;
        }
        quota[c] += 1;
        deficit -= 1;
    }
    debug_assert_eq!(deficit, 0, "odd cells cover the rounding deficit");
    quota
}

/// Empirical probabilities of the `(site, observed)` cells within one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct CellProbabilities<F> {
    probs: Vec<[F; 2]>,
    pub fold_size: usize,
}

impl<F: Scalar> CellProbabilities<F> {
    /// Builds cell probabilities directly from values (for tests and mocks).
    pub fn from_probs(probs: Vec<[F; 2]>, fold_size: usize) -> Self {
        Self { probs, fold_size }
    }

    /// `P(T = site, R = observed)` estimated on the fold; zero for absent
    /// cells.
    pub fn prob(&self, site: usize, observed: bool) -> F {
        self.probs
            .get(site)
            .map_or(F::zero(), |pair| pair[usize::from(observed)])
    }

    pub fn num_sites(&self) -> usize {
        self.probs.len()
    }
}

/// Counts `(site, observed)` cells in the fold and normalizes by fold size.
pub fn cell_probs<F: Scalar>(
    data: &Dataset<F>,
    plan: &SplitPlan,
    fold: Fold,
) -> Result<CellProbabilities<F>> {
    let indices = plan.indices(fold);
    if indices.is_empty() {
        return Err(Error::InsufficientData(format!("empty fold {fold:?}")));
    }
    let mut counts = vec![[0usize; 2]; data.num_sites()];
    for &i in &indices {
        let obs = &data.observations()[i];
        counts[obs.site][usize::from(obs.observed())] += 1;
    }
    let denom = F::from_usize(indices.len()).expect("fold size fits scalar");
    let probs = counts
        .into_iter()
        .map(|pair| {
            [
                F::from_usize(pair[0]).expect("count fits scalar") / denom,
                F::from_usize(pair[1]).expect("count fits scalar") / denom,
            ]
        })
        .collect();
    Ok(CellProbabilities {
        probs,
        fold_size: indices.len(),
    })
}
