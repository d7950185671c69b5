//! Autoregressive prewhitening of per-region time series.
//!
//! Serial dependence breaks the independence assumption behind the
//! covariance estimator, so each region is whitened with an AR(q) filter
//! before graph estimation. Orders are fit per region by conditional least
//! squares on a common sample and selected by BIC among stationary
//! candidates; the Ljung-Box statistic then checks that residuals are
//! serially uncorrelated.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_MAX_ORDER: usize = 5;
pub const DEFAULT_LJUNG_BOX_LAGS: usize = 10;

/// A fitted autoregressive model for one region.
#[derive(Debug, Clone)]
pub struct ArFit {
    pub order: usize,
    pub coefficients: Vec<f64>,
    pub noise_variance: f64,
    pub aic: f64,
}

/// Whitened observations for all regions of one subject.
#[derive(Debug, Clone)]
pub struct WhitenedSeries {
    /// (T - q_max) x p residual matrix, rows aligned in time across regions.
    pub residuals: Array2<f64>,
    pub fits: Vec<ArFit>,
    /// Ljung-Box p-values of each region's residuals at the default lag count.
    pub ljung_box_pvalues: Vec<f64>,
}

/// Conditional least squares fit of an AR(`order`) model to a centered copy
/// of `series`. Returns the fit and the one-step-ahead residuals
/// (length `n - order`).
pub fn fit_ar(series: &[f64], order: usize) -> Result<(ArFit, Vec<f64>)> {
    let n = series.len();
    if n < 2 * order + 8 {
        return Err(Error::Degenerate(format!(
            "series of length {n} too short for AR({order})"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = series.iter().map(|v| v - mean).collect();
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("constant series".into()));
    }
    let (coefficients, residuals) = ar_cls(&y, order, order)?;
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let n_used = residuals.len() as f64;
    let noise_variance = rss / n_used;
    if !(noise_variance > 0.0) {
        return Err(Error::Degenerate("perfectly predictable series".into()));
    }
    let aic = n_used * noise_variance.ln() + 2.0 * (order as f64 + 1.0);
    Ok((ArFit { order, coefficients, noise_variance, aic }, residuals))
}

/// CLS regression of y_t on its `order` lags, using t = fit_start..n.
/// Returns coefficients and residuals over that range.
fn ar_cls(y: &[f64], order: usize, fit_start: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = y.len();
    debug_assert!(fit_start >= order);
    if order == 0 {
        return Ok((Vec::new(), y[fit_start..].to_vec()));
    }
    let mut xtx = Array2::<f64>::zeros((order, order));
    let mut xty = vec![0.0; order];
    for t in fit_start..n {
        for i in 0..order {
            let xi = y[t - 1 - i];
            xty[i] += xi * y[t];
            for j in i..order {
                xtx[[i, j]] += xi * y[t - 1 - j];
            }
        }
    }
    for i in 0..order {
        for j in 0..i {
            xtx[[i, j]] = xtx[[j, i]];
        }
    }
    let l = linalg::cholesky(&xtx.view())
        .ok_or_else(|| Error::Degenerate("collinear lag design".into()))?;
    let mut tmp = vec![0.0; order];
    let mut phi = vec![0.0; order];
    linalg::solve_lower(&l.view(), &xty, &mut tmp);
    linalg::solve_lower_transpose(&l.view(), &tmp, &mut phi);
    let residuals: Vec<f64> = (fit_start..n)
        .map(|t| {
            let mut pred = 0.0;
            for i in 0..order {
                pred += phi[i] * y[t - 1 - i];
            }
            y[t] - pred
        })
        .collect();
    Ok((phi, residuals))
}

/// Whiten every region of a T x p matrix. Per region, candidate orders
/// 0..=max_order are fit on the common sample t = max_order..T, the
/// stationary candidate with smallest BIC is chosen, and the chosen model is
/// refit on its full sample. All residual series are truncated to the common
/// length T - q_max.
pub fn whiten_ar(x: &ArrayView2<f64>, max_order: usize) -> Result<WhitenedSeries> {
    let (t, p) = (x.nrows(), x.ncols());
    if t <= 10 * max_order {
        return Err(Error::Degenerate(format!(
            "need more than {} observations for max order {max_order}, got {t}",
            10 * max_order
        )));
    }
    let mut fits = Vec::with_capacity(p);
    let mut region_residuals: Vec<Vec<f64>> = Vec::with_capacity(p);
    for j in 0..p {
        let series: Vec<f64> = x.column(j).iter().copied().collect();
        let order = select_order(&series, max_order)?;
        let (fit, residuals) = fit_ar(&series, order)?;
        fits.push(fit);
        region_residuals.push(residuals);
    }
    let q_max = fits.iter().map(|f| f.order).max().unwrap_or(0);
    let keep = t - q_max;
    let mut residuals = Array2::<f64>::zeros((keep, p));
    let mut ljung_box_pvalues = Vec::with_capacity(p);
    for j in 0..p {
        let r = &region_residuals[j];
        let offset = r.len() - keep;
        for i in 0..keep {
            residuals[[i, j]] = r[offset + i];
        }
        let h = DEFAULT_LJUNG_BOX_LAGS.min(r.len() / 2).max(1);
        let (_, pval) = ljung_box(r, h)?;
        ljung_box_pvalues.push(pval);
    }
    Ok(WhitenedSeries { residuals, fits, ljung_box_pvalues })
}

/// Smallest-BIC stationary order on the common sample t = max_order..n.
fn select_order(series: &[f64], max_order: usize) -> Result<usize> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let y: Vec<f64> = series.iter().map(|v| v - mean).collect();
    if y.iter().all(|v| *v == 0.0) {
        return Err(Error::Degenerate("constant series".into()));
    }
    let n_eff = (n - max_order) as f64;
    let mut best: Option<(f64, usize)> = None;
    for q in 0..=max_order {
        let Ok((phi, residuals)) = ar_cls(&y, q, max_order) else { continue };
        if !is_stationary(&phi) {
            continue;
        }
        let rss: f64 = residuals.iter().map(|r| r * r).sum();
        if !(rss > 0.0) {
            continue;
        }
        let bic = n_eff * (rss / n_eff).ln() + n_eff.ln() * (q as f64 + 1.0);
        if best.map_or(true, |(b, _)| bic < b) {
            best = Some((bic, q));
        }
    }
    best.map(|(_, q)| q)
        .ok_or_else(|| Error::Degenerate("no stationary AR candidate".into()))
}

/// All companion roots strictly inside the unit circle.
pub fn is_stationary(coefficients: &[f64]) -> bool {
    spectral_radius(coefficients) < 1.0
}

/// Largest root modulus of z^q - phi_1 z^{q-1} - ... - phi_q.
fn spectral_radius(phi: &[f64]) -> f64 {
    let q = phi.len();
    if q == 0 {
        return 0.0;
    }
    let mut coeff = vec![Complex64::new(1.0, 0.0)];
    coeff.extend(phi.iter().map(|&c| Complex64::new(-c, 0.0)));
    durand_kerner_max_modulus(&coeff)
}

/// Durand-Kerner root finding on a monic polynomial (coefficients highest
/// degree first). Degrees here are tiny (<= max AR order).
fn durand_kerner_max_modulus(coeff: &[Complex64]) -> f64 {
    let q = coeff.len() - 1;
    let eval = |z: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in coeff {
            acc = acc * z + c;
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..q).map(|i| seed.powu(i as u32 + 1)).collect();
    for _ in 0..500 {
        let mut max_move = 0.0f64;
        for i in 0..q {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..q {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() == 0.0 {
                continue;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            max_move = max_move.max(delta.norm());
        }
        if max_move < 1e-12 {
            break;
        }
    }
    roots.iter().map(|r| r.norm()).fold(0.0, f64::max)
}

/// Ljung-Box portmanteau statistic over lags 1..=h and its chi-square
/// p-value with h degrees of freedom.
pub fn ljung_box(x: &[f64], h: usize) -> Result<(f64, f64)> {
    let n = x.len();
    if h < 1 || n <= h {
        return Err(Error::InvalidInput(format!("need n > h >= 1, got n={n}, h={h}")));
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = centered.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::Degenerate("zero-variance series".into()));
    }
    let mut q = 0.0;
    for k in 1..=h {
        let mut num = 0.0;
        for t in k..n {
            num += centered[t] * centered[t - k];
        }
        let rho = num / denom;
        q += rho * rho / (n - k) as f64;
    }
    q *= n as f64 * (n as f64 + 2.0);
    let pvalue = chi_square_tail(q, h as f64);
    Ok((q, pvalue))
}

/// Upper tail of the chi-square distribution via the regularized upper
/// incomplete gamma function.
pub fn chi_square_tail(x: f64, df: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(df / 2.0, x / 2.0).clamp(0.0, 1.0)
}
