//! Synthetic populations of Gaussian graphical models and scoring.
//!
//! A scenario fixes a common graph structure (banded, small-world or hub),
//! plants differential edges for each group (clustered around the existing
//! structure or uniformly at random), and samples per-subject precision
//! matrices and observation matrices. Scoring compares detections against
//! the known differential edge sets.

use std::collections::HashSet;

use ndarray::Array2;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::edges;
use crate::error::{Error, Result};
use crate::ggm::EdgeSupport;
use crate::linalg;
use crate::resample::FilteredEdgeSet;
use crate::rngstream::{derive_rng, domain};
use crate::types::{Group, SubjectData};

/// Common-support family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Structure {
    /// Edges between nodes at distance <= bandwidth.
    Banded { bandwidth: usize },
    /// Ring lattice with `k` neighbors on each side, rewired with the given
    /// probability.
    SmallWorld { k: usize, rewire_prob: f64 },
    /// Nodes split into clusters, each a star on its first node.
    Hub { n_clusters: usize },
}

/// Where differential edges are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffCase {
    Clustered,
    Random,
}

/// Full simulation recipe.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub p: usize,
    pub t: usize,
    pub n_a: usize,
    pub n_b: usize,
    pub structure: Structure,
    /// Total differential edges, split between groups (A gets the ceiling).
    pub n_diff: usize,
    pub case: DiffCase,
    /// Probability that a subject in the target group carries a
    /// group-differential edge.
    pub pi_diff: f64,
    /// Rescale each subject's population covariance to unit diagonal.
    pub correlation_mode: bool,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p < 4 {
            return Err(Error::InvalidInput("need at least 4 nodes".into()));
        }
        if self.t < 2 {
            return Err(Error::InvalidInput("need at least 2 time points".into()));
        }
        if self.n_a == 0 || self.n_b == 0 {
            return Err(Error::InvalidInput("both groups need subjects".into()));
        }
        if !(self.pi_diff > 0.0 && self.pi_diff <= 1.0) {
            return Err(Error::InvalidInput("pi_diff must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// The generating truth behind a sampled population.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub common: EdgeSupport,
    pub diff_a: Vec<(usize, usize)>,
    pub diff_b: Vec<(usize, usize)>,
    pub per_subject_supports: Vec<EdgeSupport>,
}

impl GroundTruth {
    pub fn differential(&self) -> HashSet<(usize, usize)> {
        self.diff_a.iter().chain(self.diff_b.iter()).copied().collect()
    }
}

pub fn generate_structure<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Result<EdgeSupport> {
    spec.validate()?;
    let p = spec.p;
    let support = match spec.structure {
        Structure::Banded { bandwidth } => {
            EdgeSupport::from_edges(p, edges::pairs(p).filter(|&(k, l)| l - k <= bandwidth))
        }
        Structure::SmallWorld { k, rewire_prob } => {
            if !(0.0..=1.0).contains(&rewire_prob) {
                return Err(Error::InvalidInput("rewire_prob must lie in [0, 1]".into()));
            }
            if k == 0 || 2 * k >= p {
                return Err(Error::InvalidInput("need 0 < k < p/2 ring neighbors".into()));
            }
            let mut present: HashSet<(usize, usize)> = HashSet::new();
            for dist in 1..=k {
                for u in 0..p {
                    let v = (u + dist) % p;
                    present.insert(ordered(u, v));
                }
            }
            // Watts-Strogatz rewiring: each lattice edge may move its far
            // endpoint to a uniformly random non-neighbor
            for dist in 1..=k {
                for u in 0..p {
                    let v = (u + dist) % p;
                    let e = ordered(u, v);
                    if rng.random::<f64>() < rewire_prob && present.contains(&e) {
                        let candidates: Vec<usize> = (0..p)
                            .filter(|&w| w != u && !present.contains(&ordered(u, w)))
                            .collect();
                        if let Some(&w) = candidates.as_slice().choose(rng) {
                            present.remove(&e);
                            present.insert(ordered(u, w));
                        }
                    }
                }
            }
            EdgeSupport::from_edges(p, present)
        }
        Structure::Hub { n_clusters } => {
            if n_clusters == 0 || n_clusters > p / 2 {
                return Err(Error::InvalidInput("need 0 < n_clusters <= p/2".into()));
            }
            let base = p / n_clusters;
            let extra = p % n_clusters;
            let mut start = 0;
            let mut list = Vec::new();
            for c in 0..n_clusters {
                let size = base + usize::from(c < extra);
                for member in start + 1..start + size {
                    list.push((start, member));
                }
                start += size;
            }
            EdgeSupport::from_edges(p, list)
        }
    };
    if support.edge_count() == 0 {
        return Err(Error::Degenerate("structure has no edges".into()));
    }
    Ok(support)
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Choose the differential edges among pairs not in the common support and
/// split them between groups (A gets the ceiling).
pub fn place_differential_edges<R: Rng>(
    common: &EdgeSupport,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    let p = common.p();
    let vacant: Vec<(usize, usize)> =
        edges::pairs(p).filter(|&(k, l)| !common.contains(k, l)).collect();
    if spec.n_diff > vacant.len() {
        return Err(Error::InvalidInput(format!(
            "{} differential edges requested but only {} vacant pairs",
            spec.n_diff,
            vacant.len()
        )));
    }
    let placed: Vec<(usize, usize)> = match spec.case {
        DiffCase::Random => {
            let mut pool = vacant;
            pool.shuffle(rng);
            pool.truncate(spec.n_diff);
            pool
        }
        DiffCase::Clustered => {
            // grow greedily from a random endpoint of a random common edge
            let common_edges = common.edges();
            let &(seed_k, seed_l) =
                common_edges.as_slice().choose(rng).expect("common support is non-empty");
            let seed_node = if rng.random::<bool>() { seed_k } else { seed_l };
            let mut frontier: HashSet<usize> = [seed_node].into();
            let mut picked: HashSet<(usize, usize)> = HashSet::new();
            let mut out = Vec::with_capacity(spec.n_diff);
            while out.len() < spec.n_diff {
                let mut candidates: Vec<(usize, usize)> = edges::pairs(p)
                    .filter(|&(k, l)| {
                        !common.contains(k, l)
                            && !picked.contains(&(k, l))
                            && (frontier.contains(&k) || frontier.contains(&l))
                    })
                    .collect();
                if candidates.is_empty() {
                    // cluster saturated: open up every structure endpoint
                    for (k, l) in &common_edges {
                        frontier.insert(*k);
                        frontier.insert(*l);
                    }
                    candidates = edges::pairs(p)
                        .filter(|&(k, l)| {
                            !common.contains(k, l)
                                && !picked.contains(&(k, l))
                                && (frontier.contains(&k) || frontier.contains(&l))
                        })
                        .collect();
                    if candidates.is_empty() {
                        return Err(Error::Degenerate(
                            "no vacant pair touches the structure; cannot cluster".into(),
                        ));
                    }
                }
                let &(k, l) = candidates.as_slice().choose(rng).expect("non-empty");
                picked.insert((k, l));
                frontier.insert(k);
                frontier.insert(l);
                out.push((k, l));
            }
            out
        }
    };
    let n_a = spec.n_diff.div_ceil(2);
    let diff_a = placed[..n_a].to_vec();
    let diff_b = placed[n_a..].to_vec();
    Ok((diff_a, diff_b))
}

/// Precision matrix on a support: off-diagonal weights drawn from
/// +/-[1, 1.25], unit diagonal lifted so the smallest eigenvalue is at least
/// 0.1; optionally rescaled so the implied covariance has unit diagonal.
pub fn build_precision<R: Rng>(
    support: &EdgeSupport,
    spec: &ScenarioSpec,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let p = support.p();
    let mut theta = Array2::<f64>::eye(p);
    for (k, l) in edges::pairs(p) {
        if support.contains(k, l) {
            let magnitude: f64 = rng.random_range(1.0..1.25);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            theta[[k, l]] = magnitude * sign;
            theta[[l, k]] = magnitude * sign;
        }
    }
    let min_ev = linalg::min_eigenvalue(&theta.view());
    let boost = (0.1 - min_ev).max(0.0);
    if boost > 0.0 {
        for j in 0..p {
            theta[[j, j]] += boost;
        }
    }
    if spec.correlation_mode {
        let sigma = linalg::inv_pd(&theta.view())?;
        // Sigma_corr = D^-1 Sigma D^-1  =>  Theta_corr = D Theta D
        for i in 0..p {
            let di = sigma[[i, i]].sqrt();
            for j in 0..p {
                theta[[i, j]] *= di;
                theta[[j, i]] *= di;
            }
        }
    }
    Ok(theta)
}

/// Sample a full two-group population and its generating truth.
pub fn sample_population(spec: &ScenarioSpec) -> Result<(Vec<SubjectData>, GroundTruth)> {
    spec.validate()?;
    let mut struct_rng = derive_rng(spec.seed, &[domain::SIM_STRUCTURE]);
    let common = generate_structure(spec, &mut struct_rng)?;
    let (diff_a, diff_b) = place_differential_edges(&common, spec, &mut struct_rng)?;

    let n = spec.n_a + spec.n_b;
    let mut subjects = Vec::with_capacity(n);
    let mut per_subject_supports = Vec::with_capacity(n);
    for i in 0..n {
        let group = if i < spec.n_a { Group::A } else { Group::B };
        let mut rng = derive_rng(spec.seed, &[domain::SIM_SUBJECT, i as u64]);
        let own_diff = if group == Group::A { &diff_a } else { &diff_b };
        let mut support_edges = common.edges();
        for &(k, l) in own_diff {
            if rng.random::<f64>() < spec.pi_diff {
                support_edges.push((k, l));
            }
        }
        let support = EdgeSupport::from_edges(spec.p, support_edges);
        let theta = build_precision(&support, spec, &mut rng)?;
        let chol = linalg::cholesky(&theta.view())
            .ok_or_else(|| Error::Numerical("subject precision not PD".into()))?;
        let mut data = Array2::<f64>::zeros((spec.t, spec.p));
        let mut z = vec![0.0; spec.p];
        let mut row = vec![0.0; spec.p];
        for t in 0..spec.t {
            for v in z.iter_mut() {
                *v = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
            }
            // Theta = L L^T  =>  x = L^-T z has covariance Theta^-1
            linalg::solve_lower_transpose(&chol.view(), &z, &mut row);
            for j in 0..spec.p {
                data[[t, j]] = row[j];
            }
        }
        subjects.push(SubjectData { id: format!("s{i:03}"), group, data });
        per_subject_supports.push(support);
    }
    Ok((subjects, GroundTruth { common, diff_a, diff_b, per_subject_supports }))
}

/// Operating-characteristic curve from sequentially rejected tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RocCurve {
    /// Cumulative (false positives, true positives) after each rejection,
    /// starting from (0, 0).
    pub points: Vec<(u64, u64)>,
}

impl RocCurve {
    /// Largest TP count attained while FP <= budget.
    pub fn tp_at_fp(&self, fp_budget: u64) -> u64 {
        self.points.iter().filter(|(fp, _)| *fp <= fp_budget).map(|&(_, tp)| tp).max().unwrap_or(0)
    }
}

/// Reject tested edges in order of decreasing |statistic| (infinite values
/// first, ties by edge index) and accumulate counts against the truth.
pub fn roc_points(
    stats: &[((usize, usize), f64)],
    truth: &GroundTruth,
    tested: &FilteredEdgeSet,
) -> Result<RocCurve> {
    let have: HashSet<(usize, usize)> = stats.iter().map(|(e, _)| *e).collect();
    for e in &tested.edges {
        if !have.contains(e) {
            return Err(Error::InvalidInput(format!("missing statistic for tested edge {e:?}")));
        }
    }
    let differential = truth.differential();
    let mut order: Vec<&((usize, usize), f64)> = stats.iter().collect();
    order.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    let mut points = vec![(0u64, 0u64)];
    let (mut fp, mut tp) = (0u64, 0u64);
    for ((k, l), _) in order {
        if differential.contains(&(*k, *l)) {
            tp += 1;
        } else {
            fp += 1;
        }
        points.push((fp, tp));
    }
    Ok(RocCurve { points })
}

/// Category codes for the truth/detection adjacency summary.
pub mod confusion_code {
    pub const NONE: u8 = 0;
    pub const COMMON: u8 = 1;
    pub const DIFFERENTIAL: u8 = 2;
    pub const DETECTED_TRUE: u8 = 3;
    pub const DETECTED_FALSE: u8 = 4;
}

#[derive(Debug, Clone)]
pub struct ConfusionSummary {
    pub tpr: f64,
    pub fdp: f64,
    /// Lower triangle: truth (common/differential); upper triangle:
    /// detections (true/false positives).
    pub matrix: Array2<u8>,
}

pub fn confusion_summary(
    rejected: &[(usize, usize)],
    truth: &GroundTruth,
    tested: &FilteredEdgeSet,
) -> Result<ConfusionSummary> {
    let tested_set: HashSet<(usize, usize)> = tested.edges.iter().copied().collect();
    for e in rejected {
        if !tested_set.contains(e) {
            return Err(Error::InvalidInput(format!("rejected edge {e:?} was never tested")));
        }
    }
    let p = truth.common.p();
    let differential = truth.differential();
    let rejected_set: HashSet<(usize, usize)> = rejected.iter().copied().collect();
    let true_positives = rejected_set.intersection(&differential).count();
    let false_positives = rejected_set.len() - true_positives;
    let tpr = if differential.is_empty() {
        0.0
    } else {
        true_positives as f64 / differential.len() as f64
    };
    let fdp = false_positives as f64 / rejected_set.len().max(1) as f64;

    let mut matrix = Array2::<u8>::zeros((p, p));
    for (k, l) in edges::pairs(p) {
        // truth below the diagonal
        if differential.contains(&(k, l)) {
            matrix[[l, k]] = confusion_code::DIFFERENTIAL;
        } else if truth.common.contains(k, l) {
            matrix[[l, k]] = confusion_code::COMMON;
        }
        // detections above
        if rejected_set.contains(&(k, l)) {
            matrix[[k, l]] = if differential.contains(&(k, l)) {
                confusion_code::DETECTED_TRUE
            } else {
                confusion_code::DETECTED_FALSE
            };
        }
    }
    Ok(ConfusionSummary { tpr, fdp, matrix })
}
