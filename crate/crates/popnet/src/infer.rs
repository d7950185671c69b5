//! Two-sample edge tests.
//!
//! The random-effects route fits a beta-binomial model per group by moments
//! (`pi` = mean edge proportion, `rho` = within-subject replicate correlation
//! from the selection procedure) and forms a Wald statistic whose variance
//! carries both between-subject and selection variability. The baseline
//! route is the one-level difference-of-proportions statistic. P-values come
//! from a permutation null with label permutations shared across edges, and
//! multiplicity is handled by Benjamini-Yekutieli or Storey q-values.

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::edges;
use crate::error::{Error, Result};
use crate::resample::{EdgeStatTable, FilteredEdgeSet};
use crate::rngstream::{derive_rng, domain};
use crate::types::Group;

pub const DEFAULT_N_PERM: usize = 1000;
pub const DEFAULT_FDR_LEVEL: f64 = 0.1;
pub const DEFAULT_STOREY_LAMBDA: f64 = 0.5;

/// Moment fit of the beta-binomial model for one group at one edge.
#[derive(Debug, Clone, Copy)]
pub struct BetaBinomialFit {
    pub pi_hat: f64,
    pub rho_hat: f64,
    /// Subjects in the group.
    pub n: usize,
    /// Replicates per subject (the bootstrap count).
    pub m: usize,
}

impl BetaBinomialFit {
    /// Estimated sampling variance of `pi_hat`:
    /// `pi (1-pi) (1 + (m-1) rho) / (m (n-1))`.
    pub fn sampling_variance(&self) -> f64 {
        self.pi_hat * (1.0 - self.pi_hat) * (1.0 + (self.m as f64 - 1.0) * self.rho_hat)
            / (self.m as f64 * (self.n as f64 - 1.0))
    }
}

/// Moment estimators for (pi, rho) from per-subject proportions observed as
/// means of `m` replicates. `rho` is clamped to [0, 1]; degenerate
/// proportions (all zero or all one) take `rho = 0` by convention.
pub fn beta_binomial_fit(z: &[f64], m: usize) -> Result<BetaBinomialFit> {
    let n = z.len();
    if n < 2 {
        return Err(Error::Degenerate(format!("need at least 2 subjects per group, got {n}")));
    }
    if m < 2 {
        return Err(Error::Degenerate(
            "replicate correlation is unidentifiable from a single replicate per subject; \
             use resampling to generate replicates"
                .into(),
        ));
    }
    if z.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidInput("proportions must lie in [0, 1]".into()));
    }
    let nf = n as f64;
    let mf = m as f64;
    let pi_hat = z.iter().sum::<f64>() / nf;
    let rho_hat = if pi_hat == 0.0 || pi_hat == 1.0 {
        0.0
    } else {
        let ss: f64 = z.iter().map(|zi| (pi_hat - zi) * (pi_hat - zi)).sum();
        let raw = mf / (mf - 1.0) * ss / (pi_hat * (1.0 - pi_hat) * (nf - 1.0)) - 1.0 / (mf - 1.0);
        raw.clamp(0.0, 1.0)
    };
    Ok(BetaBinomialFit { pi_hat, rho_hat, n, m })
}

fn zero_denominator_statistic(diff: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

/// Two-sample Wald statistic on beta-binomial fits (same replicate count).
pub fn wald_statistic(fit_a: &BetaBinomialFit, fit_b: &BetaBinomialFit) -> f64 {
    assert_eq!(fit_a.m, fit_b.m, "fits must share the replicate count");
    let diff = fit_a.pi_hat - fit_b.pi_hat;
    let na = fit_a.n as f64;
    let nb = fit_b.n as f64;
    let denom_sq =
        fit_a.sampling_variance() * (na - 1.0) / na + fit_b.sampling_variance() * (nb - 1.0) / nb;
    if denom_sq <= 0.0 {
        return zero_denominator_statistic(diff);
    }
    diff / denom_sq.sqrt()
}

/// One-level difference-of-proportions statistic. With `m = 1` and binary
/// indicators this is the classical two-sample proportion test; with
/// replicate proportions the binomial variance of the pooled `n * m` trials
/// is used.
pub fn binomial_statistic(z_a: &[f64], z_b: &[f64], m: usize) -> f64 {
    assert!(z_a.len() >= 2 && z_b.len() >= 2, "need at least 2 subjects per group");
    assert!(m >= 1);
    let na = z_a.len() as f64;
    let nb = z_b.len() as f64;
    let mf = m as f64;
    let pa = z_a.iter().sum::<f64>() / na;
    let pb = z_b.iter().sum::<f64>() / nb;
    let denom_sq = pa * (1.0 - pa) / (na * mf) + pb * (1.0 - pb) / (nb * mf);
    if denom_sq <= 0.0 {
        return zero_denominator_statistic(pa - pb);
    }
    (pa - pb) / denom_sq.sqrt()
}

/// Which statistic an analysis uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    Wald,
    Binomial,
}

/// Per-edge statistics for the given labeling. `m` is the replicate count
/// behind each proportion (the table's bootstrap count).
pub fn edge_statistics(
    table: &EdgeStatTable,
    edges_set: &FilteredEdgeSet,
    labels: &[Group],
    kind: StatKind,
) -> Result<Vec<f64>> {
    let zsel = select_columns(table, edges_set);
    let split = GroupSplit::new(labels, table.n_subjects())?;
    if kind == StatKind::Wald && table.bootstrap_count() < 2 {
        // trigger the instructive single-replicate error
        beta_binomial_fit(&vec![0.0; split.n_a.max(2)], table.bootstrap_count())?;
    }
    Ok(zsel
        .iter()
        .map(|row| statistic_for(row, &split, labels, kind, table.bootstrap_count()))
        .collect())
}

/// Group fits for every filtered edge (random-effects route).
pub fn edge_fits(
    table: &EdgeStatTable,
    edges_set: &FilteredEdgeSet,
    labels: &[Group],
) -> Result<Vec<(BetaBinomialFit, BetaBinomialFit)>> {
    let zsel = select_columns(table, edges_set);
    GroupSplit::new(labels, table.n_subjects())?;
    zsel.iter()
        .map(|row| {
            let (za, zb) = split_by_group(row, labels);
            Ok((
                beta_binomial_fit(&za, table.bootstrap_count())?,
                beta_binomial_fit(&zb, table.bootstrap_count())?,
            ))
        })
        .collect()
}

struct GroupSplit {
    n_a: usize,
    n_b: usize,
}

impl GroupSplit {
    fn new(labels: &[Group], n_subjects: usize) -> Result<Self> {
        if labels.len() != n_subjects {
            return Err(Error::InvalidInput("label count does not match table".into()));
        }
        let n_a = labels.iter().filter(|g| **g == Group::A).count();
        let n_b = labels.len() - n_a;
        if n_a == 0 || n_b == 0 {
            return Err(Error::Degenerate("both groups must be non-empty".into()));
        }
        Ok(Self { n_a, n_b })
    }
}

fn split_by_group(row: &[f64], labels: &[Group]) -> (Vec<f64>, Vec<f64>) {
    let mut za = Vec::new();
    let mut zb = Vec::new();
    for (v, g) in row.iter().zip(labels) {
        match g {
            Group::A => za.push(*v),
            Group::B => zb.push(*v),
        }
    }
    (za, zb)
}

fn statistic_for(
    row: &[f64],
    split: &GroupSplit,
    labels: &[Group],
    kind: StatKind,
    m: usize,
) -> f64 {
    let _ = split;
    let (za, zb) = split_by_group(row, labels);
    match kind {
        StatKind::Wald => {
            let fa = beta_binomial_fit(&za, m).expect("validated upstream");
            let fb = beta_binomial_fit(&zb, m).expect("validated upstream");
            wald_statistic(&fa, &fb)
        }
        StatKind::Binomial => binomial_statistic(&za, &zb, m),
    }
}

fn select_columns(table: &EdgeStatTable, edges_set: &FilteredEdgeSet) -> Vec<Vec<f64>> {
    let p = table.p();
    let n = table.n_subjects();
    edges_set
        .edges
        .iter()
        .map(|&(k, l)| {
            let col = edges::pair_index(k, l, p);
            (0..n).map(|i| table.z()[[i, col]]).collect()
        })
        .collect()
}

/// Permutation p-values with the add-one estimator. One label permutation is
/// drawn per round and shared across all edges, preserving the joint
/// dependence structure; infinite statistics compare as larger than any
/// finite value and equal to each other.
pub fn permutation_pvalues(
    table: &EdgeStatTable,
    edges_set: &FilteredEdgeSet,
    labels: &[Group],
    kind: StatKind,
    n_perm: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_perm < 1 {
        return Err(Error::InvalidInput("need at least one permutation".into()));
    }
    let split = GroupSplit::new(labels, table.n_subjects())?;
    if kind == StatKind::Wald {
        if table.bootstrap_count() < 2 {
            beta_binomial_fit(&vec![0.0; 2], table.bootstrap_count())?;
        }
        if split.n_a < 2 || split.n_b < 2 {
            return Err(Error::Degenerate(
                "random-effects statistic needs at least 2 subjects per group".into(),
            ));
        }
    }
    let zsel = select_columns(table, edges_set);
    let observed: Vec<f64> = zsel
        .iter()
        .map(|row| statistic_for(row, &split, labels, kind, table.bootstrap_count()).abs())
        .collect();

    // serial permutation list, parallel evaluation
    let mut rng = derive_rng(seed, &[domain::PERMUTATION]);
    let perms: Vec<Vec<Group>> = (0..n_perm)
        .map(|_| {
            let mut l = labels.to_vec();
            l.shuffle(&mut rng);
            l
        })
        .collect();
    let m = table.bootstrap_count();
    let counts = perms
        .par_iter()
        .map(|perm| {
            zsel.iter()
                .zip(&observed)
                .map(|(row, obs)| u32::from(statistic_for(row, &split, perm, kind, m).abs() >= *obs))
                .collect::<Vec<u32>>()
        })
        .reduce(
            || vec![0u32; zsel.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    Ok(counts
        .into_iter()
        .map(|c| (1.0 + c as f64) / (n_perm as f64 + 1.0))
        .collect())
}

/// Benjamini-Yekutieli step-up adjustment, valid under arbitrary dependence.
pub fn by_adjust(pvalues: &[f64]) -> Vec<f64> {
    let m = pvalues.len();
    if m == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let c_m: f64 = (1..=m).map(|i| 1.0 / i as f64).sum();
    let mut adjusted = vec![0.0; m];
    let mut running_min = f64::INFINITY;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        let raw = pvalues[idx] * m as f64 * c_m / rank as f64;
        running_min = running_min.min(raw).min(1.0);
        adjusted[idx] = running_min;
    }
    adjusted
}

/// Storey's direct q-values: estimate the null proportion from the p-value
/// mass above `lambda`, then take running minima of `pi0 * m * p / rank`.
pub fn storey_qvalues(pvalues: &[f64], lambda: f64) -> Result<(f64, Vec<f64>)> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::InvalidInput("lambda must lie in (0, 1)".into()));
    }
    let m = pvalues.len();
    if m == 0 {
        return Ok((1.0, Vec::new()));
    }
    if pvalues.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidInput("p-values must lie in [0, 1]".into()));
    }
    let above = pvalues.iter().filter(|p| **p > lambda).count();
    let pi0 = if above == 0 {
        log::warn!("all p-values fall at or below lambda; flooring pi0 at 1/m");
        1.0 / m as f64
    } else {
        (above as f64 / (m as f64 * (1.0 - lambda))).min(1.0)
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut qvalues = vec![0.0; m];
    let mut running_min = f64::INFINITY;
    for rank in (1..=m).rev() {
        let idx = order[rank - 1];
        let raw = pi0 * m as f64 * pvalues[idx] / rank as f64;
        running_min = running_min.min(raw);
        qvalues[idx] = running_min;
    }
    Ok((pi0, qvalues))
}

/// How a multiplicity correction is chosen in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrMethod {
    By,
    Storey,
}

impl FdrMethod {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "by" => Ok(FdrMethod::By),
            "storey" => Ok(FdrMethod::Storey),
            other => Err(Error::InvalidInput(format!(
                "unknown fdr method {other:?} (expected by or storey)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FdrMethod::By => "by",
            FdrMethod::Storey => "storey",
        }
    }
}

/// Full record for one tested edge.
#[derive(Debug, Clone)]
pub struct EdgeTestResult {
    pub edge: (usize, usize),
    pub statistic: f64,
    pub pvalue: f64,
    pub qvalue_by: f64,
    pub qvalue_storey: f64,
    pub pi_a: f64,
    pub pi_b: f64,
    pub rho_a: f64,
    pub rho_b: f64,
    pub reject: bool,
    pub method: crate::types::Method,
}
