//! Probabilistic request planning: copy counts for repeated requests,
//! storage-strategy thresholds, weight-layer separation, probability-decade
//! request sets, and end-to-end scenario plans with Monte Carlo validation.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::request::{Request, RequestSet};
use crate::spectral::{spectral_cluster, SpectralOrder};

/// Undirected edge with endpoints in canonical (low, high) order.
pub type Edge = (u32, u32);

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum PlanError {
    #[error("request {0} has no declared probability")]
    MissingProbability(usize),
    #[error("cluster-merge threshold needs even n >= 4, got {0}")]
    BadClusterSize(usize),
    #[error("cannot drop all requests (allowed failure {0} covers total mass)")]
    EmptyAfterDrop(f64),
    #[error("request error: {0}")]
    Request(String),
}

impl From<crate::request::RequestError> for PlanError {
    fn from(e: crate::request::RequestError) -> Self {
        PlanError::Request(e.to_string())
    }
}

/// Candidate storage strategies weighed against each other by the planner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Copies of a GHZ state over the involved nodes; one copy per request.
    GhzCopies,
    /// Direct Bell pairs, one stock per edge sized by occurrence counts.
    BellCopies,
    /// Merged multipartite resource (GHZ-ladder) per spectral cluster.
    MergedCluster,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::GhzCopies => "ghz_copies",
            Strategy::BellCopies => "bell_copies",
            Strategy::MergedCluster => "cluster_merge",
        }
    }
}

fn canon(a: u32, b: u32) -> Edge {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Declared probability of every request; errors if any is missing.
fn declared_probabilities(rs: &RequestSet) -> Result<Vec<f64>, PlanError> {
    rs.requests()
        .iter()
        .enumerate()
        .map(|(j, r)| r.probability.ok_or(PlanError::MissingProbability(j)))
        .collect()
}

/// Total request probability attached to each edge: p_e = sum of p_j over
/// requests whose link set contains e.
pub fn edge_probabilities(rs: &RequestSet) -> Result<BTreeMap<Edge, f64>, PlanError> {
    let probs = declared_probabilities(rs)?;
    let mut out: BTreeMap<Edge, f64> = BTreeMap::new();
    for (r, &p) in rs.requests().iter().zip(&probs) {
        for &(a, b) in r.links() {
            *out.entry(canon(a, b)).or_insert(0.0) += p;
        }
    }
    Ok(out)
}

fn ceil_copies(x: f64) -> u64 {
    (x - EPS).ceil().max(1.0) as u64
}

/// Bell copies stored per edge so that k requests drawn from the declared
/// distribution are covered on average: ceil(k * p_e), at least one copy for
/// every edge with positive probability.
pub fn asymptotic_copies(rs: &RequestSet, k: usize) -> Result<BTreeMap<Edge, u64>, PlanError> {
    Ok(edge_probabilities(rs)?
        .into_iter()
        .map(|(e, p)| (e, ceil_copies(k as f64 * p)))
        .collect())
}

/// As `asymptotic_copies` but sized at mean + 2 standard deviations of the
/// binomial occurrence count, for low-failure provisioning.
pub fn asymptotic_copies_with_margin(
    rs: &RequestSet,
    k: usize,
) -> Result<BTreeMap<Edge, u64>, PlanError> {
    Ok(edge_probabilities(rs)?
        .into_iter()
        .map(|(e, p)| {
            let mean = k as f64 * p;
            let sd = (mean * (1.0 - p.min(1.0))).max(0.0).sqrt();
            (e, ceil_copies(mean + 2.0 * sd))
        })
        .collect())
}

/// Expected qubit count of the direct Bell strategy before rounding:
/// 2k * sum_j p_j |E_j|. At most k*n when every request is a matching.
pub fn expected_bell_qubits(rs: &RequestSet, k: usize) -> Result<f64, PlanError> {
    let probs = declared_probabilities(rs)?;
    Ok(2.0
        * k as f64
        * rs.requests()
            .iter()
            .zip(&probs)
            .map(|(r, &p)| p * r.num_links() as f64)
            .sum::<f64>())
}

/// Qubit inventory of the direct Bell approach for uniform single-pair
/// requests: 2k on average once every pair recurs, but never below one copy
/// of each of the n(n-1)/2 pairs.
pub fn single_pair_bell_inventory(n: usize, k: usize) -> u64 {
    (2 * k).max(n * (n - 1) / 2) as u64
}

/// Strategy choice for uniform single-pair requests: k GHZ states (n*k
/// qubits) beat the Bell stock exactly when k <= (n-1)/2; the boundary goes
/// to GHZ.
pub fn single_pair_threshold(n: usize, k: usize) -> Strategy {
    assert!(n >= 2 && k >= 1, "need n >= 2 and k >= 1");
    if 2 * k <= n - 1 {
        Strategy::GhzCopies
    } else {
        Strategy::BellCopies
    }
}

/// One weight interval with the edges falling into it and the induced
/// sub-requests (original requests restricted to the layer's edges).
#[derive(Debug, Clone)]
pub struct WeightLayer {
    /// Exclusive lower weight bound (0 for the first layer).
    pub low: f64,
    /// Inclusive upper weight bound.
    pub high: f64,
    pub edges: Vec<Edge>,
    pub requests: RequestSet,
}

/// Edge weight q/m: the fraction of requests in which the edge appears.
pub fn edge_weights(rs: &RequestSet) -> BTreeMap<Edge, f64> {
    let m = rs.num_requests().max(1) as f64;
    let mut out: BTreeMap<Edge, f64> = BTreeMap::new();
    for r in rs.requests() {
        for &(a, b) in r.links() {
            *out.entry(canon(a, b)).or_insert(0.0) += 1.0 / m;
        }
    }
    out
}

/// Buckets edges by weight into the intervals delimited by `boundaries`
/// (ascending, in (0, 1]); emits one layer per interval, each carrying the
/// requests restricted to its edges. Layers partition the edge set.
/// Sub-request probabilities are dropped (they no longer sum to one).
pub fn weight_layers(rs: &RequestSet, boundaries: &[f64]) -> Vec<WeightLayer> {
    assert!(
        boundaries.windows(2).all(|w| w[0] < w[1])
            && boundaries.iter().all(|&b| b > 0.0 && b <= 1.0),
        "boundaries must be ascending in (0, 1]"
    );
    let weights = edge_weights(rs);
    let bucket = |w: f64| boundaries.iter().take_while(|&&b| b < w - EPS).count();
    let mut layers: Vec<WeightLayer> = (0..=boundaries.len())
        .map(|i| WeightLayer {
            low: if i == 0 { 0.0 } else { boundaries[i - 1] },
            high: boundaries.get(i).copied().unwrap_or(1.0),
            edges: Vec::new(),
            requests: RequestSet::new_relaxed(rs.n(), Vec::new()).unwrap(),
        })
        .collect();
    for (&e, &w) in &weights {
        layers[bucket(w)].edges.push(e);
    }
    for layer in &mut layers {
        let edge_set: BTreeSet<Edge> = layer.edges.iter().copied().collect();
        let subs: Vec<Request> = rs
            .requests()
            .iter()
            .filter_map(|r| {
                let links: Vec<Edge> = r
                    .links()
                    .iter()
                    .map(|&(a, b)| canon(a, b))
                    .filter(|e| edge_set.contains(e))
                    .collect();
                (!links.is_empty()).then(|| Request::new(&links, None).unwrap())
            })
            .collect();
        layer.requests = RequestSet::new_relaxed(rs.n(), subs).unwrap();
    }
    layers
}

/// Merging beats direct Bell stock for a full-connectivity cluster of n
/// nodes when k * p_c <= 8(n-1)/(3n+2).
pub fn cluster_merge_threshold(n: usize) -> Result<f64, PlanError> {
    if n < 4 || n % 2 != 0 {
        return Err(PlanError::BadClusterSize(n));
    }
    Ok(8.0 * (n - 1) as f64 / (3 * n + 2) as f64)
}

/// Qubits of the merged full-connectivity resource (GHZ ladder) for n nodes.
pub fn ghz_ladder_qubits(n: usize) -> usize {
    n * (3 * n + 2) / 8
}

/// Chooses between the merged GHZ-ladder resource (storage ceil(s*k*p_c),
/// s = n(3n+2)/8) and direct Bell pairs for a cluster of n nodes carrying
/// total request probability p_c. Depends only on the product k*p_c; the
/// boundary goes to merging.
pub fn choose_cluster_strategy(n: usize, k: usize, p_c: f64) -> Result<Strategy, PlanError> {
    let threshold = cluster_merge_threshold(n)?;
    Ok(if k as f64 * p_c <= threshold + EPS {
        Strategy::MergedCluster
    } else {
        Strategy::BellCopies
    })
}

/// Probability decade of p in (0, 1]: the m with 10^-m <= p <= 10^-m+1,
/// boundaries p = 10^-m+1 assigned to the larger m.
fn decade(p: f64) -> u32 {
    let x = -p.log10();
    let nearest = x.round();
    let m = if (x - nearest).abs() < EPS {
        nearest + 1.0
    } else {
        x.ceil()
    };
    m.max(1.0) as u32
}

fn bucket_indices(rs: &RequestSet) -> Result<BTreeMap<u32, Vec<usize>>, PlanError> {
    let probs = declared_probabilities(rs)?;
    let mut out: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (j, &p) in probs.iter().enumerate() {
        out.entry(decade(p)).or_default().push(j);
    }
    Ok(out)
}

/// Decade sets S_m: requests bucketed by the order of magnitude of their
/// probability. Each bucket is returned as an independent RequestSet with
/// probabilities renormalized to the bucket (conditional distribution);
/// every request lands in exactly one bucket.
pub fn probability_sets(rs: &RequestSet) -> Result<BTreeMap<u32, RequestSet>, PlanError> {
    let probs = declared_probabilities(rs)?;
    bucket_indices(rs)?
        .into_iter()
        .map(|(m, idxs)| {
            let mass: f64 = idxs.iter().map(|&j| probs[j]).sum();
            let reqs: Vec<Request> = idxs
                .iter()
                .map(|&j| {
                    let r = &rs.requests()[j];
                    Request::new(r.links(), Some((probs[j] / mass).min(1.0)))
                })
                .collect::<Result<_, _>>()?;
            Ok((m, RequestSet::new_relaxed(rs.n(), reqs)?))
        })
        .collect()
}

/// Drops lowest-probability requests greedily while the total ignored mass
/// stays within `epsilon`; remaining probabilities are renormalized (a safe
/// overestimate for copy counts).
pub fn drop_rare_requests(rs: &RequestSet, epsilon: f64) -> Result<RequestSet, PlanError> {
    let probs = declared_probabilities(rs)?;
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]).then(a.cmp(&b)));
    let mut dropped: BTreeSet<usize> = BTreeSet::new();
    let mut mass = 0.0;
    for &j in &order {
        if mass + probs[j] <= epsilon + EPS {
            mass += probs[j];
            dropped.insert(j);
        }
    }
    if dropped.len() == probs.len() {
        return Err(PlanError::EmptyAfterDrop(epsilon));
    }
    let kept_mass = 1.0 - mass;
    let reqs: Vec<Request> = (0..probs.len())
        .filter(|j| !dropped.contains(j))
        .map(|j| {
            let r = &rs.requests()[j];
            Request::new(r.links(), Some((probs[j] / kept_mass).min(1.0)))
        })
        .collect::<Result<_, _>>()?;
    let build = if rs.is_relaxed() {
        RequestSet::new_relaxed
    } else {
        RequestSet::new
    };
    Ok(build(rs.n(), reqs)?)
}

/// Storage plan for k requests drawn from the declared distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioPlan {
    pub k: usize,
    /// Bell copies per edge (the bell_copies inventory).
    pub per_edge_copies: Vec<(Edge, u64)>,
    /// Total qubits stored under each candidate strategy.
    pub per_strategy_storage: Vec<(String, u64)>,
    /// Candidate with minimum storage.
    pub chosen: String,
}

impl ScenarioPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        serde_json::from_str(s).map_err(|e| e.to_string())
    }

    pub fn chosen_storage(&self) -> u64 {
        self.per_strategy_storage
            .iter()
            .find(|(name, _)| *name == self.chosen)
            .map(|&(_, s)| s)
            .expect("chosen strategy is listed")
    }
}

/// Cluster weight p_c: every request contributes p_j scaled by the fraction
/// of a full matching its in-cluster links represent, links / ceil(n_c / 2)
/// (a single link in a 4-node cluster contributes p_j / 2).
fn cluster_weight(
    requests: &[(&Request, f64)],
    cluster_edges: &BTreeSet<Edge>,
    n_c: usize,
) -> f64 {
    let full = (n_c + 1) / 2;
    requests
        .iter()
        .map(|&(r, p)| {
            let inside = r
                .links()
                .iter()
                .filter(|&&(a, b)| cluster_edges.contains(&canon(a, b)))
                .count();
            p * (inside as f64 / full as f64).min(1.0)
        })
        .sum()
}

/// Storage of the composite decade-sets -> weight-layers -> spectral-clusters
/// pipeline, with the per-cluster merge-vs-Bell threshold decision.
fn cluster_merge_storage(rs: &RequestSet, k: usize) -> Result<u64, PlanError> {
    let probs = declared_probabilities(rs)?;
    let mut total: u64 = 0;
    for (_m, idxs) in bucket_indices(rs)? {
        let bucket: Vec<(&Request, f64)> =
            idxs.iter().map(|&j| (&rs.requests()[j], probs[j])).collect();
        let sub = RequestSet::new_relaxed(
            rs.n(),
            bucket
                .iter()
                .map(|&(r, _)| Request::new(r.links(), None).unwrap())
                .collect(),
        )?;
        for layer in weight_layers(&sub, &[0.5]) {
            if layer.edges.is_empty() {
                continue;
            }
            let labels = spectral_cluster(&layer.requests, None, SpectralOrder::Smallest)
                .unwrap_or_else(|_| vec![0; rs.n()]);
            // Bucket-local Bell copies for the layer's edges.
            let mut layer_p: BTreeMap<Edge, f64> = BTreeMap::new();
            for &(r, p) in &bucket {
                for &(a, b) in r.links() {
                    let e = canon(a, b);
                    if layer.edges.contains(&e) {
                        *layer_p.entry(e).or_insert(0.0) += p;
                    }
                }
            }
            let bell_for = |edges: &BTreeSet<Edge>| -> u64 {
                edges
                    .iter()
                    .map(|e| 2 * ceil_copies(k as f64 * layer_p[e]))
                    .sum()
            };
            let num_labels = labels.iter().copied().max().unwrap_or(0) as usize + 1;
            let mut cross: BTreeSet<Edge> = BTreeSet::new();
            let mut per_label: Vec<BTreeSet<Edge>> = vec![BTreeSet::new(); num_labels];
            for &e in &layer.edges {
                let (la, lb) = (labels[e.0 as usize], labels[e.1 as usize]);
                if la == lb {
                    per_label[la as usize].insert(e);
                } else {
                    cross.insert(e);
                }
            }
            total += bell_for(&cross);
            for edges in per_label.iter().filter(|s| !s.is_empty()) {
                let nodes: BTreeSet<u32> =
                    edges.iter().flat_map(|&(a, b)| [a, b]).collect();
                let n_even = (nodes.len() + 1) / 2 * 2;
                let bell = bell_for(edges);
                if n_even < 4 {
                    total += bell;
                    continue;
                }
                let p_c = cluster_weight(&bucket, edges, nodes.len());
                total += match choose_cluster_strategy(n_even, k, p_c)? {
                    // Materialized plans hold at least one full ladder copy.
                    Strategy::MergedCluster => {
                        ghz_ladder_qubits(n_even) as u64 * ceil_copies(k as f64 * p_c)
                    }
                    _ => bell,
                };
            }
        }
    }
    Ok(total)
}

/// Builds the scenario plan: evaluates the candidate strategies and picks the
/// one with minimum storage (ties go to the earlier candidate).
pub fn plan(rs: &RequestSet, k: usize) -> Result<ScenarioPlan, PlanError> {
    let copies = asymptotic_copies(rs, k)?;
    let bell_total: u64 = copies.values().map(|&c| 2 * c).sum();
    let mut candidates: Vec<(String, u64)> =
        vec![("bell_copies".into(), bell_total)];
    if rs.requests().iter().all(|r| r.num_links() == 1) {
        let nodes: BTreeSet<u32> = rs
            .requests()
            .iter()
            .flat_map(|r| r.nodes())
            .collect();
        candidates.push(("ghz_copies".into(), (nodes.len() * k) as u64));
    }
    candidates.push(("cluster_merge".into(), cluster_merge_storage(rs, k)?));
    let chosen = candidates
        .iter()
        .min_by_key(|(_, s)| *s)
        .map(|(name, _)| name.clone())
        .unwrap();
    Ok(ScenarioPlan {
        k,
        per_edge_copies: copies.into_iter().collect(),
        per_strategy_storage: candidates,
        chosen,
    })
}

/// Fraction of Monte Carlo trials in which k requests sampled from the
/// declared distribution exceed the per-edge inventory. Trials run in
/// parallel with per-trial seeds derived from `seed`.
pub fn validate_inventory(
    rs: &RequestSet,
    copies: &BTreeMap<Edge, u64>,
    k: usize,
    trials: usize,
    seed: u64,
) -> f64 {
    let m = rs.num_requests();
    let cumulative: Vec<f64> = (0..m)
        .scan(0.0, |acc, j| {
            *acc += rs.weight(j);
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().unwrap_or(&1.0);
    let failures: usize = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(t));
            let mut demand: BTreeMap<Edge, u64> = BTreeMap::new();
            for _ in 0..k {
                let x: f64 = rng.gen_range(0.0..total);
                let j = cumulative.partition_point(|&c| c <= x).min(m - 1);
                for &(a, b) in rs.requests()[j].links() {
                    *demand.entry(canon(a, b)).or_insert(0) += 1;
                }
            }
            let ok = demand
                .iter()
                .all(|(e, &d)| copies.get(e).copied().unwrap_or(0) >= d);
            usize::from(!ok)
        })
        .sum();
    failures as f64 / trials.max(1) as f64
}

/// CSV sweep of the single-pair decision: threshold formula vs direct
/// storage comparison, for plotting and cross-checking.
pub fn threshold_sweep_csv(n_values: &[usize], k_values: &[usize]) -> String {
    let mut out = String::from("n,k,ghz_qubits,bell_inventory,threshold_choice,direct_choice\n");
    for &n in n_values {
        for &k in k_values {
            let ghz = (n * k) as u64;
            let bell = single_pair_bell_inventory(n, k);
            let by_threshold = single_pair_threshold(n, k);
            let direct = if ghz <= bell {
                Strategy::GhzCopies
            } else {
                Strategy::BellCopies
            };
            out.push_str(&format!(
                "{n},{k},{ghz},{bell},{},{}\n",
                by_threshold.name(),
                direct.name()
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rs_with(n: usize, reqs: &[(&[(u32, u32)], f64)]) -> RequestSet {
        RequestSet::new(
            n,
            reqs.iter()
                .map(|&(links, p)| Request::new(links, Some(p)).unwrap())
                .collect(),
        )
        .unwrap()
    }

    /// All n(n-1)/2 single-pair requests, uniform probabilities.
    fn uniform_single_pairs(n: usize) -> RequestSet {
        let p = 2.0 / (n * (n - 1)) as f64;
        let reqs: Vec<Request> = (0..n as u32)
            .flat_map(|a| (a + 1..n as u32).map(move |b| (a, b)))
            .map(|e| Request::new(&[e], Some(p)).unwrap())
            .collect();
        RequestSet::new(n, reqs).unwrap()
    }

    #[test]
    fn copies_from_total_probability() {
        let rs = rs_with(4, &[(&[(0, 1)], 0.3), (&[(2, 3)], 0.7)]);
        let copies = asymptotic_copies(&rs, 10).unwrap();
        assert_eq!(copies[&(0, 1)], 3);
        assert_eq!(copies[&(2, 3)], 7);
    }

    #[test]
    fn copies_floor_one_per_positive_edge() {
        // Uniform single-pair case with k = n-1: k*p < 1 on every edge.
        let rs = uniform_single_pairs(6);
        let copies = asymptotic_copies(&rs, 5).unwrap();
        assert_eq!(copies.len(), 15);
        assert!(copies.values().all(|&c| c == 1));
    }

    #[test]
    fn expected_qubits_bounded_by_kn() {
        for n in [4, 6, 8] {
            let rs = uniform_single_pairs(n);
            for k in [1, 5, 40] {
                let total = expected_bell_qubits(&rs, k).unwrap();
                assert!(total <= (k * n) as f64 + EPS, "n={n} k={k}: {total}");
            }
        }
    }

    #[test]
    fn missing_probabilities_error() {
        let rs = RequestSet::new(4, vec![Request::new(&[(0, 1)], None).unwrap()]).unwrap();
        assert!(matches!(
            asymptotic_copies(&rs, 3),
            Err(PlanError::MissingProbability(0))
        ));
    }

    #[test]
    fn single_pair_decision() {
        assert_eq!(single_pair_threshold(11, 5), Strategy::GhzCopies);
        assert_eq!(single_pair_threshold(4, 3), Strategy::BellCopies);
        // Boundary k = (n-1)/2 exactly goes to GHZ.
        assert_eq!(single_pair_threshold(9, 4), Strategy::GhzCopies);
        assert_eq!(single_pair_threshold(9, 5), Strategy::BellCopies);
    }

    #[test]
    fn threshold_matches_direct_storage_comparison() {
        for n in 4..=40 {
            for k in 1..=40 {
                let direct = if (n * k) as u64 <= single_pair_bell_inventory(n, k) {
                    Strategy::GhzCopies
                } else {
                    Strategy::BellCopies
                };
                assert_eq!(single_pair_threshold(n, k), direct, "n={n} k={k}");
            }
        }
    }

    #[test]
    fn cluster_threshold_values() {
        assert!((cluster_merge_threshold(4).unwrap() - 24.0 / 14.0).abs() < 1e-9);
        assert!(matches!(
            cluster_merge_threshold(5),
            Err(PlanError::BadClusterSize(5))
        ));
        assert!((cluster_merge_threshold(10_000).unwrap() - 8.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn cluster_decision_scale_consistent() {
        for (k, p) in [(1, 1.5), (2, 0.75), (3, 0.5), (6, 0.25)] {
            assert_eq!(
                choose_cluster_strategy(4, k, p).unwrap(),
                Strategy::MergedCluster,
                "k={k} p={p}"
            );
        }
        for (k, p) in [(1, 1.8), (2, 0.9), (4, 0.45)] {
            assert_eq!(
                choose_cluster_strategy(4, k, p).unwrap(),
                Strategy::BellCopies,
                "k={k} p={p}"
            );
        }
        // Boundary k*p_c = 24/14 goes to merging.
        assert_eq!(
            choose_cluster_strategy(4, 1, 24.0 / 14.0).unwrap(),
            Strategy::MergedCluster
        );
    }

    #[test]
    fn decade_buckets() {
        let rs = rs_with(4, &[(&[(0, 1)], 0.05), (&[(2, 3)], 0.9), (&[(0, 2)], 0.05)]);
        let sets = probability_sets(&rs).unwrap();
        assert_eq!(sets.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
        assert_eq!(sets[&1].num_requests(), 1);
        assert_eq!(sets[&2].num_requests(), 2);
        // Buckets cover all requests exactly once.
        let total: usize = sets.values().map(|s| s.num_requests()).sum();
        assert_eq!(total, 3);
        // Conditional probabilities renormalize to one within each bucket.
        for s in sets.values() {
            let sum: f64 = (0..s.num_requests()).map(|j| s.weight(j)).sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn decade_boundary_goes_to_larger_m() {
        let rs = rs_with(4, &[(&[(0, 1)], 0.1), (&[(2, 3)], 0.9)]);
        let sets = probability_sets(&rs).unwrap();
        assert_eq!(sets[&2].num_requests(), 1);
        assert_eq!(sets[&2].requests()[0].links(), &[(0, 1)]);
        // p = 1 sits in bucket 1.
        let rs1 = rs_with(4, &[(&[(0, 1)], 1.0)]);
        assert_eq!(
            probability_sets(&rs1).unwrap().keys().copied().collect::<Vec<_>>(),
            vec![1]
        );
    }

    #[test]
    fn weight_layers_partition_edges() {
        // Edge (0,1) appears in both requests (weight 1), the rest once (0.5).
        let rs = RequestSet::new(
            6,
            vec![
                Request::new(&[(0, 1), (2, 3)], None).unwrap(),
                Request::new(&[(0, 1), (4, 5)], None).unwrap(),
            ],
        )
        .unwrap();
        let layers = weight_layers(&rs, &[0.5]);
        assert_eq!(layers.len(), 2);
        assert_eq!(layers[0].edges, vec![(2, 3), (4, 5)]);
        assert_eq!(layers[1].edges, vec![(0, 1)]);
        let total: usize = layers.iter().map(|l| l.edges.len()).sum();
        assert_eq!(total, 3);
        // Sub-requests restricted to layer edges.
        assert_eq!(layers[1].requests.num_requests(), 1); // deduped (0,1)
        assert_eq!(layers[0].requests.num_requests(), 2);
    }

    #[test]
    fn weight_layers_uniform_single_layer() {
        let rs = uniform_single_pairs(4);
        let layers = weight_layers(&rs, &[0.5]);
        let nonempty: Vec<_> = layers.iter().filter(|l| !l.edges.is_empty()).collect();
        assert_eq!(nonempty.len(), 1);
        assert_eq!(nonempty[0].edges.len(), 6);
    }

    #[test]
    fn plan_single_matching_stores_its_bell_pairs() {
        let rs = rs_with(6, &[(&[(0, 3), (1, 4), (2, 5)], 1.0)]);
        let p = plan(&rs, 1).unwrap();
        assert_eq!(p.chosen, "bell_copies");
        assert_eq!(p.chosen_storage(), 6);
        assert!(p.per_edge_copies.iter().all(|&(_, c)| c == 1));
    }

    #[test]
    fn plan_uniform_single_pairs_selects_ghz() {
        let n = 8;
        let rs = uniform_single_pairs(n);
        for k in 1..=(n - 1) / 2 {
            let p = plan(&rs, k).unwrap();
            assert_eq!(p.chosen, "ghz_copies", "k={k}");
            assert_eq!(p.chosen_storage(), (n * k) as u64);
        }
        let p = plan(&rs, n).unwrap();
        assert_ne!(p.chosen, "ghz_copies");
    }

    #[test]
    fn plan_chosen_is_minimum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [6, 8, 10] {
            let base = crate::request::gen_uniform(n, 2 * n, &mut rng);
            let m = base.num_requests();
            let rs = RequestSet::new(
                n,
                base.requests()
                    .iter()
                    .map(|r| Request::new(r.links(), Some(1.0 / m as f64)).unwrap())
                    .collect(),
            )
            .unwrap();
            for k in [1, 4, 16] {
                let p = plan(&rs, k).unwrap();
                let min = p.per_strategy_storage.iter().map(|&(_, s)| s).min().unwrap();
                assert_eq!(p.chosen_storage(), min);
            }
        }
    }

    #[test]
    fn half_weight_single_link_contribution() {
        // One full matching (p=0.6) and one single-link request (p=0.4) on a
        // 4-node cluster: p_c = 0.6 + 0.4/2 = 0.8.
        let req_full = Request::new(&[(0, 1), (2, 3)], None).unwrap();
        let req_single = Request::new(&[(0, 2)], None).unwrap();
        let edges: BTreeSet<Edge> = [(0, 1), (2, 3), (0, 2)].into_iter().collect();
        let p_c = cluster_weight(&[(&req_full, 0.6), (&req_single, 0.4)], &edges, 4);
        assert!((p_c - 0.8).abs() < 1e-9);
    }

    #[test]
    fn drop_rare_requests_greedy() {
        let rs = rs_with(
            8,
            &[
                (&[(0, 1)], 0.5),
                (&[(2, 3)], 0.3),
                (&[(4, 5)], 0.15),
                (&[(6, 7)], 0.05),
            ],
        );
        let kept = drop_rare_requests(&rs, 0.2).unwrap();
        assert_eq!(kept.num_requests(), 2);
        let links: Vec<_> = kept.requests().iter().map(|r| r.links()[0]).collect();
        assert_eq!(links, vec![(0, 1), (2, 3)]);
        let sum: f64 = (0..2).map(|j| kept.weight(j)).sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(matches!(
            drop_rare_requests(&rs, 2.0),
            Err(PlanError::EmptyAfterDrop(_))
        ));
    }

    #[test]
    fn monte_carlo_margin_inventory_rarely_fails() {
        let rs = uniform_single_pairs(6);
        let k = 10;
        let copies = asymptotic_copies_with_margin(&rs, k).unwrap();
        let rate = validate_inventory(&rs, &copies, k, 400, 99);
        assert!(rate <= 0.05, "failure rate {rate}");
        // Mean-sized copies fail more often but never crash.
        let mean_copies = asymptotic_copies(&rs, k).unwrap();
        let mean_rate = validate_inventory(&rs, &mean_copies, k, 400, 99);
        assert!(mean_rate >= rate);
    }

    #[test]
    fn sweep_csv_consistent() {
        let csv = threshold_sweep_csv(&[4, 11], &[1, 5]);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n,k,ghz_qubits,bell_inventory,threshold_choice,direct_choice"
        );
        for line in lines {
            let cols: Vec<&str> = line.split(',').collect();
            assert_eq!(cols[4], cols[5], "{line}");
        }
        assert!(csv.contains("11,5,55,55,ghz_copies,ghz_copies"));
    }

    #[test]
    fn plan_json_round_trip() {
        let rs = uniform_single_pairs(6);
        let p = plan(&rs, 2).unwrap();
        let back = ScenarioPlan::from_json(&p.to_json()).unwrap();
        assert_eq!(back.chosen, p.chosen);
        assert_eq!(back.per_edge_copies, p.per_edge_copies);
    }
}
