//! Stability-based selection of the pilot regularization level (StARS).
//!
//! Draws subsamples without replacement, fits the uniform-penalty estimator
//! along a descending penalty path per subsample, and measures per-edge
//! selection instability `xi = 2 f (1 - f)` averaged over all node pairs.
//! The monotonized instability (running supremum from large penalties
//! downward) is compared against the budget `beta`; the smallest penalty
//! whose monotonized instability stays within `beta` is selected. Once the
//! running supremum exceeds `beta`, no smaller penalty can qualify, so the
//! remaining (densest, most expensive) path tail is skipped.

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::edges;
use crate::error::{Error, Result};
use crate::ggm::{
    edge_support, empirical_covariance, lambda_max, weighted_glasso_warm, CovarianceMatrix,
    PenaltyMatrix, DEFAULT_ZERO_TOL,
};
use crate::rngstream::{derive_rng, domain};

pub const DEFAULT_SUBSAMPLES: usize = 20;
pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_PATH_POINTS: usize = 30;
pub const DEFAULT_PATH_RATIO: f64 = 0.01;

/// Descending sequence of penalty levels, log-spaced from `lambda_max` down
/// to `ratio * lambda_max`.
#[derive(Debug, Clone)]
pub struct LambdaPath {
    values: Vec<f64>,
}

impl LambdaPath {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn lambda_path(sigma: &CovarianceMatrix, n_points: usize, ratio: f64) -> Result<LambdaPath> {
    if n_points < 2 {
        return Err(Error::InvalidInput("need at least 2 path points".into()));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidInput("ratio must lie in (0, 1)".into()));
    }
    let lmax = lambda_max(sigma)?;
    if lmax == 0.0 {
        return Err(Error::Degenerate(
            "all off-diagonal covariances are zero; no meaningful path".into(),
        ));
    }
    let values = (0..n_points)
        .map(|i| lmax * ratio.powf(i as f64 / (n_points - 1) as f64))
        .collect();
    Ok(LambdaPath { values })
}

/// Per-edge and mean selection instability across subsample supports.
#[derive(Debug, Clone)]
pub struct Instability {
    pub per_edge: Vec<f64>,
    pub mean: f64,
}

pub fn edge_instability(supports: &[crate::ggm::EdgeSupport]) -> Result<Instability> {
    let n = supports.len();
    if n < 2 {
        return Err(Error::InvalidInput("need at least 2 supports".into()));
    }
    let p = supports[0].p();
    if supports.iter().any(|s| s.p() != p) {
        return Err(Error::InvalidInput("supports have mismatched dimensions".into()));
    }
    let n_pairs = edges::pair_count(p);
    let mut counts = vec![0u32; n_pairs];
    for s in supports {
        for (i, present) in s.pair_flags().into_iter().enumerate() {
            if present {
                counts[i] += 1;
            }
        }
    }
    let per_edge: Vec<f64> = counts
        .iter()
        .map(|&c| {
            let f = c as f64 / n as f64;
            2.0 * f * (1.0 - f)
        })
        .collect();
    let mean = per_edge.iter().sum::<f64>() / n_pairs as f64;
    Ok(Instability { per_edge, mean })
}

#[derive(Debug, Clone)]
pub struct StarsConfig {
    pub n_subsamples: usize,
    pub beta: f64,
    /// Override for the subsample size; default floor(10 sqrt(T)).
    pub subsample_size: Option<usize>,
    pub tol: f64,
    pub max_iter: usize,
    pub zero_tol: f64,
}

impl Default for StarsConfig {
    fn default() -> Self {
        Self {
            n_subsamples: DEFAULT_SUBSAMPLES,
            beta: DEFAULT_BETA,
            subsample_size: None,
            tol: crate::ggm::DEFAULT_TOL,
            max_iter: crate::ggm::DEFAULT_MAX_ITER,
            zero_tol: DEFAULT_ZERO_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StarsResult {
    pub selected_lambda: f64,
    pub selected_index: usize,
    /// Mean instability per evaluated path point (the path tail after the
    /// budget is exceeded is provably non-selectable and is not evaluated).
    pub instability_curve: Vec<f64>,
    pub subsample_count: usize,
    pub subsample_size: usize,
    /// No path point satisfied the budget; the largest penalty was returned.
    pub no_lambda_met_bound: bool,
    /// floor(10 sqrt(T)) was >= T and the size was clamped to floor(0.8 T).
    pub subsample_size_clamped: bool,
}

pub fn stars_select(
    x: &ArrayView2<f64>,
    path: &LambdaPath,
    n_subsamples: usize,
    beta: f64,
    seed: u64,
) -> Result<StarsResult> {
    let cfg = StarsConfig { n_subsamples, beta, ..Default::default() };
    stars_select_with(x, path, &cfg, seed)
}

pub fn stars_select_with(
    x: &ArrayView2<f64>,
    path: &LambdaPath,
    cfg: &StarsConfig,
    seed: u64,
) -> Result<StarsResult> {
    let t = x.nrows();
    let p = x.ncols();
    if cfg.n_subsamples < 2 {
        return Err(Error::InvalidInput("need at least 2 subsamples".into()));
    }
    if !(cfg.beta > 0.0) {
        return Err(Error::InvalidInput("beta must be positive".into()));
    }
    let mut clamped = false;
    let mut b = match cfg.subsample_size {
        Some(b) => b,
        None => (10.0 * (t as f64).sqrt()).floor() as usize,
    };
    if b >= t {
        b = (0.8 * t as f64).floor() as usize;
        clamped = true;
    }
    if b < 2 {
        return Err(Error::Degenerate(format!("subsample size {b} too small")));
    }

    // subsample row sets, each drawn without replacement from its own stream
    let index_sets: Vec<Vec<usize>> = (0..cfg.n_subsamples)
        .map(|s| {
            let mut rng = derive_rng(seed, &[domain::STARS, s as u64]);
            let mut rows: Vec<usize> = (0..t).collect();
            rows.shuffle(&mut rng);
            rows.truncate(b);
            rows.sort_unstable();
            rows
        })
        .collect();

    let covariances: Vec<CovarianceMatrix> = index_sets
        .par_iter()
        .map(|rows| {
            let sub = take_rows(x, rows);
            empirical_covariance(&sub.view())
        })
        .collect::<Result<_>>()?;

    let n_pairs = edges::pair_count(p);
    let mut warm: Vec<Option<Array2<f64>>> = vec![None; cfg.n_subsamples];
    let mut curve = Vec::new();
    let mut running_sup = 0.0f64;
    let mut selected: Option<usize> = None;

    for (pi, &lam) in path.values().iter().enumerate() {
        let penalty = PenaltyMatrix::uniform(lam, p)?;
        let fits: Vec<(Vec<bool>, Array2<f64>)> = covariances
            .par_iter()
            .zip(warm.par_iter())
            .map(|(sigma, w)| {
                let est = weighted_glasso_warm(sigma, &penalty, cfg.tol, cfg.max_iter, w.as_ref())?;
                let flags = edge_support(&est, cfg.zero_tol).pair_flags();
                Ok((flags, est.theta))
            })
            .collect::<Result<_>>()?;
        let mut counts = vec![0u32; n_pairs];
        for ((flags, theta), w) in fits.into_iter().zip(warm.iter_mut()) {
            for (i, f) in flags.into_iter().enumerate() {
                if f {
                    counts[i] += 1;
                }
            }
            *w = Some(theta);
        }
        let mean = counts
            .iter()
            .map(|&c| {
                let f = c as f64 / cfg.n_subsamples as f64;
                2.0 * f * (1.0 - f)
            })
            .sum::<f64>()
            / n_pairs as f64;
        curve.push(mean);
        running_sup = running_sup.max(mean);
        if running_sup <= cfg.beta {
            selected = Some(pi);
        } else {
            break;
        }
    }

    let (selected_index, no_lambda_met_bound) = match selected {
        Some(i) => (i, false),
        None => {
            log::warn!(
                "no penalty on the path met the instability budget {}; returning the largest",
                cfg.beta
            );
            (0, true)
        }
    };
    Ok(StarsResult {
        selected_lambda: path.values()[selected_index],
        selected_index,
        instability_curve: curve,
        subsample_count: cfg.n_subsamples,
        subsample_size: b,
        no_lambda_met_bound,
        subsample_size_clamped: clamped,
    })
}

fn take_rows(x: &ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let p = x.ncols();
    let mut out = Array2::<f64>::zeros((rows.len(), p));
    for (i, &r) in rows.iter().enumerate() {
        for j in 0..p {
            out[[i, j]] = x[[r, j]];
        }
    }
    out
}
