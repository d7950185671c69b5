//! Penalized maximum-likelihood estimation of sparse inverse covariances
//! with element-wise penalty weights.
//!
//! The estimator minimizes
//!
//! ```text
//!   tr(S Theta) - log det(Theta) + sum_{k != l} Lambda[k,l] |Theta[k,l]|
//! ```
//!
//! over symmetric positive-definite matrices, with the diagonal unpenalized.
//! A uniform penalty `Lambda = lambda` off the diagonal recovers the usual
//! graphical lasso. Stationarity is checked element-wise:
//! `S - inv(Theta) + Lambda o sign(Theta) = 0` on the active set and
//! `|S - inv(Theta)| <= Lambda` off it.
//!
//! The solver is a primal block coordinate descent over columns (inner
//! soft-threshold coordinate descent), preceded by an exact connected-
//! component screen on the graph `|S[k,l]| > Lambda[k,l]`: the minimizer is
//! block diagonal across those components, so each block is solved
//! independently. Both the precision matrix and its inverse are maintained,
//! the primal objective is non-increasing across sweeps, and iterates stay
//! positive definite.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;

pub const DEFAULT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Numeric-zero threshold for support extraction.
pub const DEFAULT_ZERO_TOL: f64 = 1e-8;

/// Sample covariance matrix (symmetric, PSD up to round-off).
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    values: Array2<f64>,
}

impl CovarianceMatrix {
    /// Wrap a matrix, checking symmetry, finiteness and a non-negative
    /// diagonal. Positive semi-definiteness is the caller's contract;
    /// matrices produced by [`empirical_covariance`] satisfy it by
    /// construction.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let p = values.nrows();
        if p != values.ncols() {
            return Err(Error::InvalidInput("covariance matrix must be square".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("covariance contains non-finite entries".into()));
        }
        let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut sym = values;
        for i in 0..p {
            if sym[[i, i]] < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "negative variance on diagonal entry {i}"
                )));
            }
            for j in i + 1..p {
                if (sym[[i, j]] - sym[[j, i]]).abs() > 1e-8 * (1.0 + scale) {
                    return Err(Error::InvalidInput("covariance matrix is not symmetric".into()));
                }
                let v = 0.5 * (sym[[i, j]] + sym[[j, i]]);
                sym[[i, j]] = v;
                sym[[j, i]] = v;
            }
        }
        Ok(Self { values: sym })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Symmetric matrix of non-negative penalty weights with a zero diagonal.
#[derive(Debug, Clone)]
pub struct PenaltyMatrix {
    values: Array2<f64>,
}

impl PenaltyMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let p = values.nrows();
        if p != values.ncols() {
            return Err(Error::InvalidInput("penalty matrix must be square".into()));
        }
        for i in 0..p {
            if values[[i, i]] != 0.0 {
                return Err(Error::InvalidInput("penalty diagonal must be exactly zero".into()));
            }
            for j in 0..p {
                let v = values[[i, j]];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidInput(
                        "penalty entries must be finite and non-negative".into(),
                    ));
                }
                if (v - values[[j, i]]).abs() != 0.0 {
                    return Err(Error::InvalidInput("penalty matrix is not symmetric".into()));
                }
            }
        }
        Ok(Self { values })
    }

    /// Uniform off-diagonal penalty `lambda`.
    pub fn uniform(lambda: f64, p: usize) -> Result<Self> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::InvalidInput("lambda must be finite and non-negative".into()));
        }
        let mut values = Array2::from_elem((p, p), lambda);
        for i in 0..p {
            values[[i, i]] = 0.0;
        }
        Ok(Self { values })
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
}

/// Result of a penalized maximum-likelihood solve.
#[derive(Debug, Clone)]
pub struct PrecisionEstimate {
    pub theta: Array2<f64>,
    pub penalty: PenaltyMatrix,
    pub converged: bool,
    pub iterations: usize,
    pub objective: f64,
    /// Objective after initialization and after every solver sweep.
    pub objective_trace: Vec<f64>,
}

impl PrecisionEstimate {
    pub fn p(&self) -> usize {
        self.theta.nrows()
    }
}

/// Binary edge pattern of a precision matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSupport {
    adj: Array2<bool>,
}

impl EdgeSupport {
    pub fn empty(p: usize) -> Self {
        Self { adj: Array2::from_elem((p, p), false) }
    }

    pub fn from_edges<I: IntoIterator<Item = (usize, usize)>>(p: usize, edges: I) -> Self {
        let mut adj = Array2::from_elem((p, p), false);
        for (k, l) in edges {
            assert!(k != l && k < p && l < p);
            adj[[k, l]] = true;
            adj[[l, k]] = true;
        }
        Self { adj }
    }

    pub fn p(&self) -> usize {
        self.adj.nrows()
    }

    pub fn contains(&self, k: usize, l: usize) -> bool {
        self.adj[[k, l]]
    }

    pub fn edge_count(&self) -> usize {
        crate::edges::pairs(self.p()).filter(|&(k, l)| self.adj[[k, l]]).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        crate::edges::pairs(self.p()).filter(|&(k, l)| self.adj[[k, l]]).collect()
    }

    /// Flags in linear pair order (see [`crate::edges`]).
    pub fn pair_flags(&self) -> Vec<bool> {
        crate::edges::pairs(self.p()).map(|(k, l)| self.adj[[k, l]]).collect()
    }
}

/// Sample covariance `(1/T) Xc' Xc` of a T x p observation matrix with
/// column centering.
pub fn empirical_covariance(x: &ArrayView2<f64>) -> Result<CovarianceMatrix> {
    let (t, p) = (x.nrows(), x.ncols());
    if t < 2 {
        return Err(Error::Degenerate(format!("need at least 2 observations, got {t}")));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("observations contain non-finite values".into()));
    }
    let mut centered = x.to_owned();
    for j in 0..p {
        let mut col = centered.column_mut(j);
        let mean = col.sum() / t as f64;
        col.mapv_inplace(|v| v - mean);
        if col.iter().all(|v| *v == 0.0) {
            return Err(Error::Degenerate(format!("column {j} is constant")));
        }
    }
    let mut sigma = Array2::<f64>::zeros((p, p));
    for i in 0..p {
        let ci = centered.column(i);
        for j in i..p {
            let cj = centered.column(j);
            let s = ci.iter().zip(cj.iter()).map(|(a, b)| a * b).sum::<f64>() / t as f64;
            sigma[[i, j]] = s;
            sigma[[j, i]] = s;
        }
    }
    CovarianceMatrix::new(sigma)
}

/// Smallest uniform penalty that yields a fully disconnected graph:
/// the largest absolute off-diagonal covariance.
pub fn lambda_max(sigma: &CovarianceMatrix) -> Result<f64> {
    let p = sigma.p();
    if p < 2 {
        return Err(Error::InvalidInput("need at least 2 nodes".into()));
    }
    let s = sigma.values();
    let mut m = 0.0f64;
    for (k, l) in crate::edges::pairs(p) {
        m = m.max(s[[k, l]].abs());
    }
    Ok(m)
}

pub fn weighted_glasso(
    sigma: &CovarianceMatrix,
    penalty: &PenaltyMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<PrecisionEstimate> {
    weighted_glasso_warm(sigma, penalty, tol, max_iter, None)
}

/// Weighted graphical lasso with an optional warm start. The warm start only
/// affects speed; the minimizer is unique.
pub fn weighted_glasso_warm(
    sigma: &CovarianceMatrix,
    penalty: &PenaltyMatrix,
    tol: f64,
    max_iter: usize,
    warm: Option<&Array2<f64>>,
) -> Result<PrecisionEstimate> {
    let p = sigma.p();
    if penalty.p() != p {
        return Err(Error::InvalidInput(format!(
            "penalty dimension {} does not match covariance dimension {p}",
            penalty.p()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput("tol must be positive".into()));
    }
    let s = sigma.values();
    for j in 0..p {
        if s[[j, j]] <= 0.0 {
            return Err(Error::Degenerate(format!("zero variance at node {j}")));
        }
    }

    let lam = penalty.values();
    let blocks = screen_components(s, lam);

    // Initial objective of every block, so the concatenated per-sweep trace
    // tracks the full objective.
    let mut theta = Array2::<f64>::zeros((p, p));
    let mut block_states: Vec<Option<BlockProblem>> = Vec::with_capacity(blocks.len());
    let mut total_obj = 0.0;
    for nodes in &blocks {
        if nodes.len() == 1 {
            let j = nodes[0];
            theta[[j, j]] = 1.0 / s[[j, j]];
            total_obj += 1.0 + s[[j, j]].ln();
            block_states.push(None);
            continue;
        }
        let prob = BlockProblem::new(nodes, s, lam, warm)?;
        total_obj += prob.objective();
        block_states.push(Some(prob));
    }

    let mut trace = vec![total_obj];
    let mut converged = true;
    let mut iterations = 0usize;
    for (nodes, state) in blocks.iter().zip(block_states.iter_mut()) {
        let Some(prob) = state else { continue };
        let mut prev = prob.objective();
        let mut ok = false;
        let mut sweeps = 0usize;
        while sweeps < max_iter {
            prob.sweep(0.1 * tol);
            sweeps += 1;
            let obj = prob.objective();
            total_obj += obj - prev;
            prev = obj;
            trace.push(total_obj);
            if prob.residual() <= tol {
                // tracked inverse can drift; verify against a fresh inversion
                prob.refresh_inverse()?;
                if prob.residual() <= tol {
                    ok = true;
                    break;
                }
            }
        }
        iterations += sweeps;
        converged &= ok;
        for (bi, &gi) in nodes.iter().enumerate() {
            for (bj, &gj) in nodes.iter().enumerate() {
                theta[[gi, gj]] = prob.theta(bi, bj);
            }
        }
    }

    Ok(PrecisionEstimate {
        theta,
        penalty: penalty.clone(),
        converged,
        iterations,
        objective: total_obj,
        objective_trace: trace,
    })
}

/// Edge pattern of an estimate: `(k,l)` present iff `|theta[k,l]| > zero_tol`.
pub fn edge_support(est: &PrecisionEstimate, zero_tol: f64) -> EdgeSupport {
    assert!(zero_tol > 0.0, "zero_tol must be positive");
    let p = est.p();
    let mut adj = Array2::from_elem((p, p), false);
    for (k, l) in crate::edges::pairs(p) {
        if est.theta[[k, l]].abs() > zero_tol {
            adj[[k, l]] = true;
            adj[[l, k]] = true;
        }
    }
    EdgeSupport { adj }
}

/// First-order stationarity residual of an estimate, maximized over node
/// pairs. Zero at the exact minimizer.
pub fn kkt_check(sigma: &CovarianceMatrix, est: &PrecisionEstimate) -> Result<f64> {
    let p = sigma.p();
    if est.p() != p {
        return Err(Error::InvalidInput("estimate dimension mismatch".into()));
    }
    let w = linalg::inv_pd(&est.theta.view())
        .map_err(|_| Error::Numerical("precision estimate is singular".into()))?;
    let s = sigma.values();
    let lam = est.penalty.values();
    let mut res = 0.0f64;
    for (k, l) in crate::edges::pairs(p) {
        let grad = s[[k, l]] - w[[k, l]];
        let th = est.theta[[k, l]];
        let r = if th != 0.0 {
            (grad + lam[[k, l]] * th.signum()).abs()
        } else {
            (grad.abs() - lam[[k, l]]).max(0.0)
        };
        res = res.max(r);
    }
    Ok(res)
}

/// Connected components of the graph `|s[k,l]| > lam[k,l]`; the minimizer is
/// exactly block diagonal across them. Components are listed with ascending
/// node indices.
fn screen_components(s: &Array2<f64>, lam: &Array2<f64>) -> Vec<Vec<usize>> {
    let p = s.nrows();
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (k, l) in crate::edges::pairs(p) {
        if s[[k, l]].abs() > lam[[k, l]] {
            let a = find(&mut parent, k);
            let b = find(&mut parent, l);
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..p {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

/// One screened block of the problem, in flat row-major storage.
struct BlockProblem {
    k: usize,
    s: Vec<f64>,
    lam: Vec<f64>,
    th: Vec<f64>,
    w: Vec<f64>,
    logdet: f64,
    // column-update scratch
    v: Vec<f64>,
    u: Vec<f64>,
    q: Vec<f64>,
    s12: Vec<f64>,
    lamj: Vec<f64>,
    rest: Vec<usize>,
}

impl BlockProblem {
    fn new(
        nodes: &[usize],
        s_full: &Array2<f64>,
        lam_full: &Array2<f64>,
        warm: Option<&Array2<f64>>,
    ) -> Result<Self> {
        let k = nodes.len();
        let mut s = vec![0.0; k * k];
        let mut lam = vec![0.0; k * k];
        for (bi, &gi) in nodes.iter().enumerate() {
            for (bj, &gj) in nodes.iter().enumerate() {
                s[bi * k + bj] = s_full[[gi, gj]];
                lam[bi * k + bj] = lam_full[[gi, gj]];
            }
        }
        let mut prob = Self {
            k,
            s,
            lam,
            th: vec![0.0; k * k],
            w: vec![0.0; k * k],
            logdet: 0.0,
            v: vec![0.0; (k - 1) * (k - 1)],
            u: vec![0.0; k - 1],
            q: vec![0.0; k - 1],
            s12: vec![0.0; k - 1],
            lamj: vec![0.0; k - 1],
            rest: vec![0; k - 1],
        };
        let mut warmed = false;
        if let Some(w0) = warm {
            let mut th = Array2::<f64>::zeros((k, k));
            for (bi, &gi) in nodes.iter().enumerate() {
                for (bj, &gj) in nodes.iter().enumerate() {
                    th[[bi, bj]] = w0[[gi, gj]];
                }
            }
            // sub-block of a PD matrix is PD, but guard anyway
            if let Some(l) = linalg::cholesky(&th.view()) {
                let ld = 2.0 * (0..k).map(|j| l[[j, j]].ln()).sum::<f64>();
                if let Ok(inv) = linalg::inv_pd(&th.view()) {
                    for i in 0..k {
                        for j in 0..k {
                            prob.th[i * k + j] = th[[i, j]];
                            prob.w[i * k + j] = inv[[i, j]];
                        }
                    }
                    prob.logdet = ld;
                    warmed = true;
                }
            }
        }
        if !warmed {
            for j in 0..k {
                let sjj = prob.s[j * k + j];
                prob.th[j * k + j] = 1.0 / sjj;
                prob.w[j * k + j] = sjj;
                prob.logdet -= sjj.ln();
            }
        }
        Ok(prob)
    }

    fn theta(&self, i: usize, j: usize) -> f64 {
        self.th[i * self.k + j]
    }

    fn objective(&self) -> f64 {
        let k = self.k;
        let mut tr = 0.0;
        let mut pen = 0.0;
        for i in 0..k {
            for j in 0..k {
                tr += self.s[i * k + j] * self.th[i * k + j];
                if i != j {
                    pen += self.lam[i * k + j] * self.th[i * k + j].abs();
                }
            }
        }
        tr - self.logdet + pen
    }

    /// Stationarity residual via the tracked inverse, including the
    /// unpenalized diagonal.
    fn residual(&self) -> f64 {
        let k = self.k;
        let mut res = 0.0f64;
        for i in 0..k {
            res = res.max((self.s[i * k + i] - self.w[i * k + i]).abs());
            for j in i + 1..k {
                let grad = self.s[i * k + j] - self.w[i * k + j];
                let th = self.th[i * k + j];
                let r = if th != 0.0 {
                    (grad + self.lam[i * k + j] * th.signum()).abs()
                } else {
                    (grad.abs() - self.lam[i * k + j]).max(0.0)
                };
                res = res.max(r);
            }
        }
        res
    }

    fn refresh_inverse(&mut self) -> Result<()> {
        let k = self.k;
        let th = Array2::from_shape_fn((k, k), |(i, j)| self.th[i * k + j]);
        let inv = linalg::inv_pd(&th.view())?;
        for i in 0..k {
            for j in 0..k {
                self.w[i * k + j] = inv[[i, j]];
            }
        }
        self.logdet = linalg::logdet_pd(&th.view())
            .ok_or_else(|| Error::Numerical("precision block lost positive definiteness".into()))?;
        Ok(())
    }

    /// One full pass of column updates. Each update exactly minimizes the
    /// objective over one row/column block, so the objective never increases.
    fn sweep(&mut self, inner_tol: f64) {
        let k = self.k;
        for j in 0..k {
            let m = k - 1;
            {
                let mut idx = 0;
                for i in 0..k {
                    if i != j {
                        self.rest[idx] = i;
                        idx += 1;
                    }
                }
            }
            let s22 = self.s[j * k + j];
            let w22 = self.w[j * k + j];
            // V = W11 - w12 w12' / w22  (inverse of Theta11), symmetric
            for a in 0..m {
                let ga = self.rest[a];
                let wa = self.w[ga * k + j];
                for b in a..m {
                    let gb = self.rest[b];
                    let val = self.w[ga * k + gb] - wa * self.w[gb * k + j] / w22;
                    self.v[a * m + b] = val;
                    self.v[b * m + a] = val;
                }
                self.u[a] = self.th[ga * k + j];
                self.s12[a] = self.s[ga * k + j];
                self.lamj[a] = self.lam[ga * k + j];
            }
            // q = V u
            for a in 0..m {
                let row = &self.v[a * m..(a + 1) * m];
                self.q[a] = row.iter().zip(self.u.iter()).map(|(x, y)| x * y).sum();
            }
            let t_old = self.th[j * k + j]
                - self.u.iter().zip(self.q.iter()).map(|(x, y)| x * y).sum::<f64>();

            // soft-threshold coordinate descent on the column problem
            for _ in 0..200 {
                let mut max_move = 0.0f64;
                for a in 0..m {
                    let vaa = self.v[a * m + a];
                    let denom = s22 * vaa;
                    if denom <= 0.0 {
                        continue;
                    }
                    let g = self.s12[a] + s22 * (self.q[a] - vaa * self.u[a]);
                    let lam_a = self.lamj[a];
                    let new_u = if g.abs() <= lam_a {
                        0.0
                    } else {
                        -(g - lam_a * g.signum()) / denom
                    };
                    let d = new_u - self.u[a];
                    if d != 0.0 {
                        let row = &self.v[a * m..(a + 1) * m];
                        for (qb, vb) in self.q.iter_mut().zip(row.iter()) {
                            *qb += d * vb;
                        }
                        self.u[a] = new_u;
                        max_move = max_move.max(d.abs() * denom);
                    }
                }
                if max_move <= inner_tol {
                    break;
                }
            }

            // write theta column; theta_jj makes the Schur complement 1/s22
            let t_new = 1.0 / s22;
            let uq = self.u.iter().zip(self.q.iter()).map(|(x, y)| x * y).sum::<f64>();
            for a in 0..m {
                let ga = self.rest[a];
                self.th[ga * k + j] = self.u[a];
                self.th[j * k + ga] = self.u[a];
            }
            self.th[j * k + j] = t_new + uq;
            self.logdet += t_new.ln() - t_old.ln();

            // rank-one update of the tracked inverse
            for a in 0..m {
                let ga = self.rest[a];
                let wv = -s22 * self.q[a];
                self.w[ga * k + j] = wv;
                self.w[j * k + ga] = wv;
            }
            self.w[j * k + j] = s22;
            for a in 0..m {
                let ga = self.rest[a];
                let qa = self.q[a];
                for b in a..m {
                    let gb = self.rest[b];
                    let val = self.v[a * m + b] + s22 * qa * self.q[b];
                    self.w[ga * k + gb] = val;
                    self.w[gb * k + ga] = val;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rngstream::derive_rng;
    use ndarray::array;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(t: usize, p: usize, seed: u64) -> Array2<f64> {
        let mut rng = derive_rng(seed, &[99]);
        Array2::from_shape_fn((t, p), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn covariance_duplicated_column_symmetry() {
        let mut x = random_matrix(30, 3, 1);
        for t in 0..30 {
            x[[t, 2]] = x[[t, 1]];
        }
        let s = empirical_covariance(&x.view()).unwrap();
        let v = s.values();
        assert_eq!(v[[1, 1]], v[[1, 2]]);
        assert_eq!(v[[1, 1]], v[[2, 2]]);
    }

    #[test]
    fn covariance_stacked_identity() {
        let x = array![[1.0, 0.0], [0.0, 1.0]];
        let s = empirical_covariance(&x.view()).unwrap();
        let v = s.values();
        assert!((v[[0, 0]] - 0.25).abs() < 1e-15);
        assert!((v[[0, 1]] + 0.25).abs() < 1e-15);
        assert!((v[[1, 1]] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn covariance_matches_double_loop_oracle() {
        let x = random_matrix(20, 4, 2);
        let s = empirical_covariance(&x.view()).unwrap();
        // independent brute-force double loop
        let t = 20;
        for j in 0..4 {
            for k in 0..4 {
                let mj = (0..t).map(|r| x[[r, j]]).sum::<f64>() / t as f64;
                let mk = (0..t).map(|r| x[[r, k]]).sum::<f64>() / t as f64;
                let mut acc = 0.0;
                for r in 0..t {
                    acc += (x[[r, j]] - mj) * (x[[r, k]] - mk);
                }
                assert!((s.values()[[j, k]] - acc / t as f64).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn covariance_rejects_bad_input() {
        let x = Array2::<f64>::zeros((1, 3));
        assert!(matches!(empirical_covariance(&x.view()), Err(Error::Degenerate(_))));
        let mut x = random_matrix(10, 2, 3);
        x[[4, 1]] = f64::NAN;
        assert!(matches!(empirical_covariance(&x.view()), Err(Error::InvalidInput(_))));
        let mut x = random_matrix(10, 2, 4);
        for t in 0..10 {
            x[[t, 0]] = 7.5;
        }
        assert!(matches!(empirical_covariance(&x.view()), Err(Error::Degenerate(_))));
    }

    #[test]
    fn lambda_max_examples() {
        let s = CovarianceMatrix::new(array![[2.0, 0.0], [0.0, 3.0]]).unwrap();
        assert_eq!(lambda_max(&s).unwrap(), 0.0);
        let s = CovarianceMatrix::new(array![[1.0, 0.7], [0.7, 1.0]]).unwrap();
        assert_eq!(lambda_max(&s).unwrap(), 0.7);
        let s = CovarianceMatrix::new(array![[1.0]]).unwrap();
        assert!(lambda_max(&s).is_err());
    }

    #[test]
    fn glasso_identity_is_fixed_point() {
        for lambda in [0.0, 0.1, 1.0] {
            let s = CovarianceMatrix::new(Array2::eye(4)).unwrap();
            let pen = PenaltyMatrix::uniform(lambda, 4).unwrap();
            let est = weighted_glasso(&s, &pen, 1e-8, 100).unwrap();
            assert!(est.converged);
            for (i, v) in est.theta.iter().enumerate() {
                let expect = if i % 5 == 0 { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn glasso_unpenalized_is_exact_inverse() {
        let s = CovarianceMatrix::new(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let pen = PenaltyMatrix::uniform(0.0, 2).unwrap();
        let est = weighted_glasso(&s, &pen, 1e-9, 200).unwrap();
        assert!(est.converged);
        assert!((est.theta[[0, 0]] - 4.0 / 3.0).abs() < 1e-6);
        assert!((est.theta[[0, 1]] + 2.0 / 3.0).abs() < 1e-6);
        assert!((est.theta[[1, 1]] - 4.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn glasso_soft_threshold_example() {
        // p=2 closed form: W = [[1, .3], [.3, 1]], Theta = W^{-1}
        let s = CovarianceMatrix::new(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        let pen = PenaltyMatrix::uniform(0.2, 2).unwrap();
        let est = weighted_glasso(&s, &pen, 1e-8, 200).unwrap();
        assert!(est.converged);
        assert!((est.theta[[0, 0]] - 1.0 / 0.91).abs() < 1e-5);
        assert!((est.theta[[0, 1]] + 0.3 / 0.91).abs() < 1e-5);
        assert!(kkt_check(&s, &est).unwrap() <= 1e-8);
        let supp = edge_support(&est, DEFAULT_ZERO_TOL);
        assert!(supp.contains(0, 1));
        assert_eq!(supp.edge_count(), 1);
    }

    #[test]
    fn support_threshold_behaviour() {
        let s = CovarianceMatrix::new(Array2::eye(3)).unwrap();
        let pen = PenaltyMatrix::uniform(0.1, 3).unwrap();
        let mut est = weighted_glasso(&s, &pen, 1e-8, 100).unwrap();
        est.theta[[0, 1]] = 1e-12;
        est.theta[[1, 0]] = 1e-12;
        let supp = edge_support(&est, 1e-8);
        assert!(!supp.contains(0, 1));
        assert_eq!(supp.edge_count(), 0);
    }

    #[test]
    fn fully_sparse_at_lambda_max() {
        let x = random_matrix(80, 6, 5);
        let s = empirical_covariance(&x.view()).unwrap();
        let lmax = lambda_max(&s).unwrap();
        let pen = PenaltyMatrix::uniform(lmax, 6).unwrap();
        let est = weighted_glasso(&s, &pen, 1e-8, 100).unwrap();
        assert!(est.converged);
        assert_eq!(edge_support(&est, DEFAULT_ZERO_TOL).edge_count(), 0);
    }

    #[test]
    fn kkt_zero_at_identity() {
        let s = CovarianceMatrix::new(Array2::eye(3)).unwrap();
        let pen = PenaltyMatrix::uniform(0.4, 3).unwrap();
        let est = PrecisionEstimate {
            theta: Array2::eye(3),
            penalty: pen,
            converged: true,
            iterations: 0,
            objective: 3.0,
            objective_trace: vec![3.0],
        };
        assert_eq!(kkt_check(&s, &est).unwrap(), 0.0);
    }

    #[test]
    fn kkt_detects_perturbation() {
        let x = random_matrix(100, 5, 6);
        let s = empirical_covariance(&x.view()).unwrap();
        let pen = PenaltyMatrix::uniform(0.1 * lambda_max(&s).unwrap(), 5).unwrap();
        let mut est = weighted_glasso(&s, &pen, 1e-7, 200).unwrap();
        assert!(est.converged);
        assert!(kkt_check(&s, &est).unwrap() <= 1e-7);
        est.theta[[0, 1]] += 0.1;
        est.theta[[1, 0]] += 0.1;
        assert!(kkt_check(&s, &est).unwrap() > 1e-6);
    }

    #[test]
    fn random_solves_are_pd_symmetric_and_stationary() {
        for (i, p) in [4usize, 8, 15].into_iter().enumerate() {
            let x = random_matrix(6 * p, p, 10 + i as u64);
            let s = empirical_covariance(&x.view()).unwrap();
            let lmax = lambda_max(&s).unwrap();
            let pen = PenaltyMatrix::uniform(0.3 * lmax, p).unwrap();
            let est = weighted_glasso(&s, &pen, 1e-7, 200).unwrap();
            assert!(est.converged);
            for (k, l) in crate::edges::pairs(p) {
                assert_eq!(est.theta[[k, l]], est.theta[[l, k]]);
            }
            assert!(linalg::min_eigenvalue(&est.theta.view()) > 0.0);
            assert!(kkt_check(&s, &est).unwrap() <= 1e-7);
        }
    }

    #[test]
    fn unpenalized_matches_direct_inverse() {
        let p = 7;
        let x = random_matrix(10 * p, p, 21);
        let s = empirical_covariance(&x.view()).unwrap();
        let pen = PenaltyMatrix::uniform(0.0, p).unwrap();
        let est = weighted_glasso(&s, &pen, 1e-8, 500).unwrap();
        assert!(est.converged);
        let direct = linalg::inv_pd(&s.values().view()).unwrap();
        let dev = est
            .theta
            .iter()
            .zip(direct.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(dev <= 1e-6, "max deviation {dev}");
    }

    #[test]
    fn node_relabeling_equivariance() {
        let p = 6;
        let x = random_matrix(120, p, 30);
        let s = empirical_covariance(&x.view()).unwrap();
        let lmax = lambda_max(&s).unwrap();
        // random weighted penalty to exercise the element-wise path
        let mut rng = derive_rng(31, &[7]);
        let mut lam = Array2::<f64>::zeros((p, p));
        for (k, l) in crate::edges::pairs(p) {
            let v = 0.2 * lmax * rng.random_range(0.5..1.5);
            lam[[k, l]] = v;
            lam[[l, k]] = v;
        }
        let pen = PenaltyMatrix::new(lam.clone()).unwrap();
        let est = weighted_glasso(&s, &pen, 1e-9, 300).unwrap();

        let perm: Vec<usize> = vec![3, 0, 5, 1, 4, 2];
        let sp = Array2::from_shape_fn((p, p), |(i, j)| s.values()[[perm[i], perm[j]]]);
        let lp = Array2::from_shape_fn((p, p), |(i, j)| lam[[perm[i], perm[j]]]);
        let est_p = weighted_glasso(
            &CovarianceMatrix::new(sp).unwrap(),
            &PenaltyMatrix::new(lp).unwrap(),
            1e-9,
            300,
        )
        .unwrap();
        for i in 0..p {
            for j in 0..p {
                let a = est_p.theta[[i, j]];
                let b = est.theta[[perm[i], perm[j]]];
                assert!((a - b).abs() < 1e-6, "({i},{j}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn objective_trace_non_increasing() {
        for seed in 0..5u64 {
            let p = 10;
            let x = random_matrix(50, p, 40 + seed);
            let s = empirical_covariance(&x.view()).unwrap();
            let lmax = lambda_max(&s).unwrap();
            let pen = PenaltyMatrix::uniform(0.15 * lmax, p).unwrap();
            let est = weighted_glasso(&s, &pen, 1e-8, 200).unwrap();
            for w in est.objective_trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-10 * (1.0 + w[0].abs()),
                    "objective increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let s = CovarianceMatrix::new(Array2::eye(3)).unwrap();
        let pen = PenaltyMatrix::uniform(0.1, 4).unwrap();
        assert!(weighted_glasso(&s, &pen, 1e-6, 10).is_err());
    }
}
