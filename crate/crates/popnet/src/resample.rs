//! Bootstrap resampling with random penalization.
//!
//! For each subject, T-of-T bootstrap resamples are refit with a penalty
//! matrix that is re-drawn per replicate: every unordered pair gets
//! `lambda_i + c * lambda_max_i * W` with `W = +/-1` equiprobably. The
//! per-edge selection frequency across replicates is the subject's edge
//! statistic. Replicate streams are derived from `(seed, subject, replicate)`
//! so tables are identical regardless of scheduling.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use crate::edges;
use crate::error::{Error, Result};
use crate::ggm::{
    edge_support, empirical_covariance, weighted_glasso_warm, PenaltyMatrix, DEFAULT_MAX_ITER,
    DEFAULT_TOL, DEFAULT_ZERO_TOL,
};
use crate::rngstream::{derive_rng, domain};
use crate::types::Group;

pub const DEFAULT_BOOTSTRAP: usize = 100;
pub const DEFAULT_PENALTY_FRACTION: f64 = 0.25;
pub const DEFAULT_TAU: f64 = 0.3;

/// Parameters of the random element-wise penalty for one subject.
#[derive(Debug, Clone, Copy)]
pub struct RandomPenaltySpec {
    pub pilot_lambda: f64,
    pub lambda_max: f64,
    pub c: f64,
}

impl RandomPenaltySpec {
    /// `c` may be zero (degenerates to the uniform pilot penalty) but must
    /// stay below 0.5.
    pub fn new(pilot_lambda: f64, lambda_max: f64, c: f64) -> Result<Self> {
        if !(pilot_lambda.is_finite() && pilot_lambda >= 0.0) {
            return Err(Error::InvalidInput("pilot_lambda must be non-negative".into()));
        }
        if !(lambda_max.is_finite() && lambda_max >= 0.0) {
            return Err(Error::InvalidInput("lambda_max must be non-negative".into()));
        }
        if !(c.is_finite() && (0.0..0.5).contains(&c)) {
            return Err(Error::InvalidInput("c must lie in [0, 0.5)".into()));
        }
        Ok(Self { pilot_lambda, lambda_max, c })
    }
}

/// Draw a symmetric penalty matrix with entries
/// `pilot_lambda +/- c * lambda_max`, one sign per unordered pair, zero
/// diagonal. Entries that would go negative are clamped at zero.
pub fn random_penalty_matrix<R: Rng>(
    spec: &RandomPenaltySpec,
    p: usize,
    rng: &mut R,
) -> PenaltyMatrix {
    let mut values = Array2::<f64>::zeros((p, p));
    let amp = spec.c * spec.lambda_max;
    let mut clamped = 0usize;
    for (k, l) in edges::pairs(p) {
        let w = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let mut v = spec.pilot_lambda + amp * w;
        if v < 0.0 {
            v = 0.0;
            clamped += 1;
        }
        values[[k, l]] = v;
        values[[l, k]] = v;
    }
    if clamped > 0 {
        log::warn!("clamped {clamped} negative random penalties at zero");
    }
    PenaltyMatrix::new(values).expect("construction is valid by design")
}

#[derive(Debug, Clone, Copy, Default)]
pub struct BootstrapOptions<'a> {
    /// Test hook: use the identity resample (rows 0..T) for every replicate.
    pub identity_resample: bool,
    pub warm_start: Option<&'a Array2<f64>>,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub zero_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, zero_tol: DEFAULT_ZERO_TOL }
    }
}

const MAX_REDRAWS: usize = 10;

/// Bootstrap edge-selection proportions for one subject: the mean over B
/// replicates of the fitted edge indicator, per node pair.
pub fn bootstrap_edge_stats(
    x: &ArrayView2<f64>,
    spec: &RandomPenaltySpec,
    b: usize,
    use_random_penalty: bool,
    seed: u64,
    subject_index: usize,
) -> Result<Vec<f64>> {
    bootstrap_edge_stats_with_opts(
        x,
        spec,
        b,
        use_random_penalty,
        seed,
        subject_index,
        &BootstrapOptions::default(),
    )
}

pub fn bootstrap_edge_stats_with_opts(
    x: &ArrayView2<f64>,
    spec: &RandomPenaltySpec,
    b: usize,
    use_random_penalty: bool,
    seed: u64,
    subject_index: usize,
    opts: &BootstrapOptions,
) -> Result<Vec<f64>> {
    if b < 1 {
        return Err(Error::InvalidInput("need at least one bootstrap replicate".into()));
    }
    let t = x.nrows();
    let p = x.ncols();
    let n_pairs = edges::pair_count(p);

    let supports: Vec<Vec<bool>> = (0..b)
        .into_par_iter()
        .map(|rep| -> Result<Vec<bool>> {
            let mut rng = derive_rng(seed, &[domain::BOOTSTRAP, subject_index as u64, rep as u64]);
            let mut sigma = None;
            for attempt in 0..=MAX_REDRAWS {
                let resampled = if opts.identity_resample {
                    x.to_owned()
                } else {
                    let mut m = Array2::<f64>::zeros((t, p));
                    for i in 0..t {
                        let r = rng.random_range(0..t);
                        for j in 0..p {
                            m[[i, j]] = x[[r, j]];
                        }
                    }
                    m
                };
                match empirical_covariance(&resampled.view()) {
                    Ok(s) => {
                        sigma = Some(s);
                        break;
                    }
                    Err(Error::Degenerate(msg)) => {
                        if opts.identity_resample || attempt == MAX_REDRAWS {
                            return Err(Error::Numerical(format!(
                                "degenerate bootstrap covariance after {attempt} redraws: {msg}"
                            )));
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
            let sigma = sigma.ok_or_else(|| {
                Error::Numerical(format!("bootstrap redraws exhausted after {MAX_REDRAWS} attempts"))
            })?;
            let penalty = if use_random_penalty {
                random_penalty_matrix(spec, p, &mut rng)
            } else {
                PenaltyMatrix::uniform(spec.pilot_lambda, p)?
            };
            let est = weighted_glasso_warm(
                &sigma,
                &penalty,
                opts.solver.tol,
                opts.solver.max_iter,
                opts.warm_start,
            )?;
            if !est.converged {
                log::warn!(
                    "bootstrap fit (subject {subject_index}, replicate {rep}) hit the sweep limit"
                );
            }
            Ok(edge_support(&est, opts.solver.zero_tol).pair_flags())
        })
        .collect::<Result<_>>()?;

    // integer reduction in replicate order keeps results exact
    let mut counts = vec![0u32; n_pairs];
    for flags in &supports {
        for (i, f) in flags.iter().enumerate() {
            if *f {
                counts[i] += 1;
            }
        }
    }
    Ok(counts.into_iter().map(|c| c as f64 / b as f64).collect())
}

/// Per-subject, per-edge bootstrap selection proportions for a whole study.
#[derive(Debug, Clone)]
pub struct EdgeStatTable {
    p: usize,
    b: usize,
    subject_ids: Vec<String>,
    groups: Vec<Group>,
    /// n_subjects x pair_count(p), entries are multiples of 1/B in [0, 1].
    z: Array2<f64>,
}

impl EdgeStatTable {
    pub fn new(
        p: usize,
        b: usize,
        subject_ids: Vec<String>,
        groups: Vec<Group>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n = rows.len();
        if n == 0 || subject_ids.len() != n || groups.len() != n {
            return Err(Error::InvalidInput("mismatched edge-stat table inputs".into()));
        }
        let n_pairs = edges::pair_count(p);
        let mut z = Array2::<f64>::zeros((n, n_pairs));
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_pairs {
                return Err(Error::InvalidInput(format!(
                    "subject {} has {} edge statistics, expected {n_pairs}",
                    subject_ids[i],
                    row.len()
                )));
            }
            for (j, v) in row.into_iter().enumerate() {
                z[[i, j]] = v;
            }
        }
        Ok(Self { p, b, subject_ids, groups, z })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn bootstrap_count(&self) -> usize {
        self.b
    }

    pub fn n_subjects(&self) -> usize {
        self.z.nrows()
    }

    pub fn subject_ids(&self) -> &[String] {
        &self.subject_ids
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn z(&self) -> &Array2<f64> {
        &self.z
    }

    pub fn value(&self, subject: usize, k: usize, l: usize) -> f64 {
        self.z[[subject, edges::pair_index(k, l, self.p)]]
    }
}

/// Edges worth testing: those with `Z > tau` for at least one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredEdgeSet {
    pub edges: Vec<(usize, usize)>,
    pub tau: f64,
}

pub fn filter_edges(table: &EdgeStatTable, tau: f64) -> Result<FilteredEdgeSet> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidInput("tau must lie in (0, 1)".into()));
    }
    let kept = edges::pairs(table.p())
        .enumerate()
        .filter(|&(idx, _)| (0..table.n_subjects()).any(|i| table.z[[i, idx]] > tau))
        .map(|(_, e)| e)
        .collect();
    Ok(FilteredEdgeSet { edges: kept, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ggm::{empirical_covariance, lambda_max};
    use crate::linalg;
    use crate::rngstream::derive_rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn penalty_entries_have_two_point_support() {
        let spec = RandomPenaltySpec::new(0.4, 1.0, 0.25).unwrap();
        let mut rng = derive_rng(3, &[60]);
        let pen = random_penalty_matrix(&spec, 6, &mut rng);
        let v = pen.values();
        let mut saw_low = false;
        let mut saw_high = false;
        for (k, l) in edges::pairs(6) {
            let e = v[[k, l]];
            assert!(
                (e - 0.15).abs() < 1e-15 || (e - 0.65).abs() < 1e-15,
                "unexpected entry {e}"
            );
            assert_eq!(e, v[[l, k]]);
            saw_low |= (e - 0.15).abs() < 1e-15;
            saw_high |= (e - 0.65).abs() < 1e-15;
        }
        assert!(saw_low && saw_high);
        for i in 0..6 {
            assert_eq!(v[[i, i]], 0.0);
        }
    }

    #[test]
    fn penalty_clamps_negative_entries() {
        let spec = RandomPenaltySpec::new(0.05, 1.0, 0.25).unwrap();
        let mut rng = derive_rng(4, &[61]);
        let pen = random_penalty_matrix(&spec, 8, &mut rng);
        for (k, l) in edges::pairs(8) {
            let e = pen.values()[[k, l]];
            assert!(e == 0.0 || (e - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn penalty_mean_matches_pilot() {
        let spec = RandomPenaltySpec::new(0.4, 1.0, 0.25).unwrap();
        let mut sum = 0.0;
        let n = 10_000;
        for i in 0..n {
            let mut rng = derive_rng(i, &[62]);
            sum += random_penalty_matrix(&spec, 3, &mut rng).values()[[0, 1]];
        }
        let mean = sum / n as f64;
        let se = 0.25 / (n as f64).sqrt();
        assert!((mean - 0.4).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn spec_validation() {
        assert!(RandomPenaltySpec::new(0.1, 1.0, 0.5).is_err());
        assert!(RandomPenaltySpec::new(-0.1, 1.0, 0.2).is_err());
        assert!(RandomPenaltySpec::new(0.1, 1.0, 0.0).is_ok());
    }

    fn gaussian_sample(p: usize, t: usize, seed: u64) -> Array2<f64> {
        let mut rng = derive_rng(seed, &[63]);
        Array2::from_shape_fn((t, p), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn identity_resample_reduces_to_single_fit() {
        let x = gaussian_sample(5, 60, 9);
        let sigma = empirical_covariance(&x.view()).unwrap();
        let lmax = lambda_max(&sigma).unwrap();
        let spec = RandomPenaltySpec::new(0.3 * lmax, lmax, 0.25).unwrap();
        let opts = BootstrapOptions { identity_resample: true, ..Default::default() };
        let z = bootstrap_edge_stats_with_opts(&x.view(), &spec, 1, false, 1, 0, &opts).unwrap();
        let pen = PenaltyMatrix::uniform(spec.pilot_lambda, 5).unwrap();
        let est = crate::ggm::weighted_glasso(&sigma, &pen, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
        let flags = crate::ggm::edge_support(&est, DEFAULT_ZERO_TOL).pair_flags();
        for (zi, f) in z.iter().zip(flags) {
            assert_eq!(*zi, if f { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn proportions_are_multiples_of_one_over_b() {
        let x = gaussian_sample(4, 50, 10);
        let sigma = empirical_covariance(&x.view()).unwrap();
        let lmax = lambda_max(&sigma).unwrap();
        let spec = RandomPenaltySpec::new(0.2 * lmax, lmax, 0.25).unwrap();
        let b = 7;
        let z = bootstrap_edge_stats(&x.view(), &spec, b, true, 5, 2).unwrap();
        for v in z {
            let scaled = v * b as f64;
            assert!((scaled - scaled.round()).abs() < 1e-12);
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn matches_serial_brute_force_recomputation() {
        let x = gaussian_sample(5, 40, 11);
        let sigma = empirical_covariance(&x.view()).unwrap();
        let lmax = lambda_max(&sigma).unwrap();
        let spec = RandomPenaltySpec::new(0.3 * lmax, lmax, 0.0).unwrap();
        let b = 10;
        let z = bootstrap_edge_stats(&x.view(), &spec, b, false, 77, 4).unwrap();

        // serial recomputation straight from the derived streams
        let t = x.nrows();
        let mut counts = vec![0u32; edges::pair_count(5)];
        for rep in 0..b {
            let mut rng = derive_rng(77, &[domain::BOOTSTRAP, 4, rep as u64]);
            let mut m = Array2::<f64>::zeros((t, 5));
            for i in 0..t {
                let r = rng.random_range(0..t);
                for j in 0..5 {
                    m[[i, j]] = x[[r, j]];
                }
            }
            let s = empirical_covariance(&m.view()).unwrap();
            let pen = PenaltyMatrix::uniform(spec.pilot_lambda, 5).unwrap();
            let est = crate::ggm::weighted_glasso(&s, &pen, DEFAULT_TOL, DEFAULT_MAX_ITER).unwrap();
            for (i, f) in crate::ggm::edge_support(&est, DEFAULT_ZERO_TOL)
                .pair_flags()
                .into_iter()
                .enumerate()
            {
                if f {
                    counts[i] += 1;
                }
            }
        }
        let expect: Vec<f64> = counts.into_iter().map(|c| c as f64 / b as f64).collect();
        assert_eq!(z, expect);
    }

    #[test]
    fn deterministic_across_runs() {
        let x = gaussian_sample(6, 80, 12);
        let sigma = empirical_covariance(&x.view()).unwrap();
        let lmax = lambda_max(&sigma).unwrap();
        let spec = RandomPenaltySpec::new(0.2 * lmax, lmax, 0.25).unwrap();
        let a = bootstrap_edge_stats(&x.view(), &spec, 12, true, 42, 1).unwrap();
        let b = bootstrap_edge_stats(&x.view(), &spec, 12, true, 42, 1).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exhausted_redraws_error() {
        // identical rows: every bootstrap covariance is degenerate
        let x = Array2::from_shape_fn((6, 3), |(_, j)| j as f64);
        let spec = RandomPenaltySpec::new(0.1, 1.0, 0.25).unwrap();
        let err = bootstrap_edge_stats(&x.view(), &spec, 2, false, 1, 0).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)));
    }

    /// Banded truth: strong within-band partial correlations at T = 1000
    /// separate true and false edges in the bootstrap proportions.
    #[test]
    fn banded_graph_bootstrap_separation() {
        let p = 10;
        let t = 1000;
        let mut rng = derive_rng(900, &[64]);
        let mut theta = Array2::<f64>::eye(p);
        for k in 0..p - 1 {
            let magnitude: f64 = rand::Rng::random_range(&mut rng, 1.0..1.25);
            let sign = if rand::Rng::random::<bool>(&mut rng) { 1.0 } else { -1.0 };
            theta[[k, k + 1]] = magnitude * sign;
            theta[[k + 1, k]] = magnitude * sign;
        }
        let ev = linalg::min_eigenvalue(&theta.view());
        if ev < 0.1 {
            for j in 0..p {
                theta[[j, j]] += 0.1 - ev;
            }
        }
        let l = linalg::cholesky(&theta.view()).unwrap();
        let mut x = Array2::<f64>::zeros((t, p));
        let mut z = vec![0.0; p];
        let mut row = vec![0.0; p];
        for i in 0..t {
            for v in z.iter_mut() {
                *v = StandardNormal.sample(&mut rng);
            }
            linalg::solve_lower_transpose(&l.view(), &z, &mut row);
            for j in 0..p {
                x[[i, j]] = row[j];
            }
        }

        let sigma = empirical_covariance(&x.view()).unwrap();
        let lmax = lambda_max(&sigma).unwrap();
        let spec = RandomPenaltySpec::new(0.5 * lmax, lmax, 0.25).unwrap();
        let zrow = bootstrap_edge_stats(&x.view(), &spec, 50, false, 5, 0).unwrap();
        let zrow_rp = bootstrap_edge_stats(&x.view(), &spec, 50, true, 5, 0).unwrap();

        let mut true_sum = 0.0;
        let mut true_n = 0;
        let mut false_sum = 0.0;
        let mut false_n = 0;
        let mut rp_true = 0.0;
        let mut rp_false = 0.0;
        for (i, (k, l)) in edges::pairs(p).enumerate() {
            if l - k == 1 {
                true_sum += zrow[i];
                rp_true += zrow_rp[i];
                true_n += 1;
            } else {
                false_sum += zrow[i];
                rp_false += zrow_rp[i];
                false_n += 1;
            }
        }
        let true_mean = true_sum / true_n as f64;
        let false_mean = false_sum / false_n as f64;
        assert!(true_mean >= 0.8, "true-edge mean {true_mean}");
        assert!(false_mean <= 0.2, "non-edge mean {false_mean}");
        // random penalization trades per-replicate hits for decorrelated
        // selection; the separation must survive even if levels shrink
        let rp_true_mean = rp_true / true_n as f64;
        let rp_false_mean = rp_false / false_n as f64;
        assert!(
            rp_true_mean > rp_false_mean + 0.25,
            "random-penalty separation too weak: {rp_true_mean} vs {rp_false_mean}"
        );
    }

    #[test]
    fn filtering_examples() {
        let p = 6;
        let n_pairs = edges::pair_count(p);
        let zero = vec![0.0; n_pairs];
        let table = EdgeStatTable::new(
            p,
            10,
            vec!["a".into(), "b".into()],
            vec![Group::A, Group::B],
            vec![zero.clone(), zero.clone()],
        )
        .unwrap();
        assert!(filter_edges(&table, 0.3).unwrap().edges.is_empty());

        // one subject exceeding tau at (2,5) by one replicate keeps the edge
        let mut row = zero.clone();
        row[edges::pair_index(2, 5, p)] = 0.3 + 0.1;
        let table = EdgeStatTable::new(
            p,
            10,
            vec!["a".into(), "b".into()],
            vec![Group::A, Group::B],
            vec![row, zero],
        )
        .unwrap();
        let kept = filter_edges(&table, 0.3).unwrap();
        assert_eq!(kept.edges, vec![(2, 5)]);
        assert!(filter_edges(&table, 1.0).is_err());
    }

    #[test]
    fn filtering_ignores_group_labels() {
        let p = 5;
        let n_pairs = edges::pair_count(p);
        let mut rng = derive_rng(7, &[65]);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..n_pairs).map(|_| rand::Rng::random_range(&mut rng, 0.0..1.0)).collect())
            .collect();
        let ids: Vec<String> = (0..4).map(|i| format!("s{i}")).collect();
        let g1 = vec![Group::A, Group::A, Group::B, Group::B];
        let g2 = vec![Group::B, Group::A, Group::B, Group::A];
        let t1 = EdgeStatTable::new(p, 20, ids.clone(), g1, rows.clone()).unwrap();
        let t2 = EdgeStatTable::new(p, 20, ids, g2, rows).unwrap();
        assert_eq!(filter_edges(&t1, 0.4).unwrap().edges, filter_edges(&t2, 0.4).unwrap().edges);
    }
}
