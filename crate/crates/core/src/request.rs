//! Communication requests, connectivity matrices in node-level and
//! virtual-qubit-level form, and random request-ensemble generators.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RequestError {
    #[error("link connects node {0} to itself")]
    SelfLink(u32),
    #[error("node {0} out of range for n={1}")]
    NodeOutOfRange(u32, usize),
    #[error("node {0} appears in more than one link")]
    DegreeViolation(u32),
    #[error("request has no links")]
    EmptyRequest,
    #[error("probability {0} outside (0, 1]")]
    BadProbability(f64),
    #[error("probabilities sum to {0}, expected 1")]
    ProbabilitySum(f64),
    #[error("probabilities must be present on all requests or none")]
    MixedProbabilities,
    #[error("json: {0}")]
    Json(String),
}

/// One target configuration: a set of parallel Bell links, optionally weighted
/// by the probability with which it is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    links: Vec<(u32, u32)>,
    pub probability: Option<f64>,
}

impl Request {
    /// Canonicalizes to a sorted, deduplicated list of (min, max) pairs.
    pub fn new(links: &[(u32, u32)], probability: Option<f64>) -> Result<Self, RequestError> {
        let mut canon: Vec<(u32, u32)> = links
            .iter()
            .map(|&(a, b)| (a.min(b), a.max(b)))
            .collect();
        canon.sort_unstable();
        canon.dedup();
        if canon.is_empty() {
            return Err(RequestError::EmptyRequest);
        }
        if let Some(&(a, _)) = canon.iter().find(|&&(a, b)| a == b) {
            return Err(RequestError::SelfLink(a));
        }
        if let Some(p) = probability {
            if !(p > 0.0 && p <= 1.0) {
                return Err(RequestError::BadProbability(p));
            }
        }
        Ok(Request {
            links: canon,
            probability,
        })
    }

    pub fn links(&self) -> &[(u32, u32)] {
        &self.links
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    /// Distinct nodes touched by this request, ascending.
    pub fn nodes(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.links.iter().flat_map(|&(a, b)| [a, b]).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn contains_link(&self, a: u32, b: u32) -> bool {
        self.links.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    /// True when every node appears in at most one link.
    pub fn is_matching(&self) -> bool {
        self.nodes().len() == 2 * self.links.len()
    }
}

/// The declared network functionality: all requests over n nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestSet {
    n: usize,
    requests: Vec<Request>,
    relaxed: bool,
}

impl RequestSet {
    /// Strict mode: every request must be a partial matching.
    pub fn new(n: usize, requests: Vec<Request>) -> Result<Self, RequestError> {
        Self::build(n, requests, false)
    }

    /// Relaxed mode: nodes may take part in several links of one request
    /// (needed for induced router-layer requests).
    pub fn new_relaxed(n: usize, requests: Vec<Request>) -> Result<Self, RequestError> {
        Self::build(n, requests, true)
    }

    fn build(n: usize, requests: Vec<Request>, relaxed: bool) -> Result<Self, RequestError> {
        for r in &requests {
            if let Some(&v) = r.nodes().iter().find(|&&v| v as usize >= n) {
                return Err(RequestError::NodeOutOfRange(v, n));
            }
            if !relaxed && !r.is_matching() {
                let nodes = r.nodes();
                let v = *nodes
                    .iter()
                    .find(|&&v| r.links.iter().filter(|&&(a, b)| a == v || b == v).count() > 1)
                    .unwrap();
                return Err(RequestError::DegreeViolation(v));
            }
        }
        // Repeated configurations count once; their probabilities accumulate.
        let mut dedup: Vec<Request> = Vec::with_capacity(requests.len());
        for r in requests {
            match dedup.iter_mut().find(|d| d.links == r.links) {
                Some(d) => {
                    d.probability = match (d.probability, r.probability) {
                        (Some(a), Some(b)) => Some(a + b),
                        (None, None) => None,
                        _ => return Err(RequestError::MixedProbabilities),
                    }
                }
                None => dedup.push(r),
            }
        }
        let with_p = dedup.iter().filter(|r| r.probability.is_some()).count();
        if with_p > 0 {
            if with_p < dedup.len() {
                return Err(RequestError::MixedProbabilities);
            }
            let sum: f64 = dedup.iter().map(|r| r.probability.unwrap()).sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(RequestError::ProbabilitySum(sum));
            }
        }
        Ok(RequestSet {
            n,
            requests: dedup,
            relaxed,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn num_requests(&self) -> usize {
        self.requests.len()
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    /// Request weight: declared probability, or uniform 1/m when absent.
    pub fn weight(&self, idx: usize) -> f64 {
        self.requests[idx]
            .probability
            .unwrap_or(1.0 / self.requests.len() as f64)
    }

    pub fn matrices(&self) -> ConnectivityMatrices {
        ConnectivityMatrices::from_requests(self)
    }

    pub fn to_json(&self) -> String {
        let dto = RequestSetJson {
            n: self.n,
            relaxed: self.relaxed.then_some(true),
            requests: self
                .requests
                .iter()
                .map(|r| RequestJson {
                    links: r.links.clone(),
                    p: r.probability,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dto).unwrap()
    }

    pub fn from_json(s: &str) -> Result<Self, RequestError> {
        let dto: RequestSetJson =
            serde_json::from_str(s).map_err(|e| RequestError::Json(e.to_string()))?;
        let requests = dto
            .requests
            .iter()
            .map(|r| Request::new(&r.links, r.p))
            .collect::<Result<Vec<_>, _>>()?;
        Self::build(dto.n, requests, dto.relaxed.unwrap_or(false))
    }
}

#[derive(Serialize, Deserialize)]
struct RequestSetJson {
    n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    relaxed: Option<bool>,
    requests: Vec<RequestJson>,
}

#[derive(Serialize, Deserialize)]
struct RequestJson {
    links: Vec<(u32, u32)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
}

/// Dense square integer matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<i64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0; n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.n + j] = v;
    }

    /// Sets both (i,j) and (j,i).
    pub fn set_sym(&mut self, i: usize, j: usize, v: i64) {
        self.set(i, j, v);
        self.set(j, i, v);
    }

    pub fn row_sum(&self, i: usize) -> i64 {
        self.data[i * self.n..(i + 1) * self.n].iter().sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }

    /// CSV with index header row and column.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push(',');
        out.push_str(
            &(0..self.n)
                .map(|j| j.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
        for i in 0..self.n {
            out.push_str(&i.to_string());
            for j in 0..self.n {
                out.push(',');
                out.push_str(&self.get(i, j).to_string());
            }
            out.push('\n');
        }
        out
    }
}

/// The node-level matrices A (adjacency), S (simultaneity), C (cumulative)
/// and L = D − C.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectivityMatrices {
    pub a: Matrix,
    pub s: Matrix,
    pub c: Matrix,
    pub l: Matrix,
}

impl ConnectivityMatrices {
    pub fn from_requests(rs: &RequestSet) -> Self {
        let n = rs.n();
        let mut a = Matrix::zeros(n);
        let mut s = Matrix::zeros(n);
        let mut c = Matrix::zeros(n);
        for r in rs.requests() {
            let size = r.num_links() as i64;
            for &(u, v) in r.links() {
                let (i, j) = (u as usize, v as usize);
                a.set_sym(i, j, 1);
                s.set_sym(i, j, s.get(i, j).max(size));
                c.set_sym(i, j, c.get(i, j) + 1);
            }
        }
        let mut l = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    l.set(i, j, c.row_sum(i));
                } else {
                    l.set(i, j, -c.get(i, j));
                }
            }
        }
        ConnectivityMatrices { a, s, c, l }
    }

    pub fn n(&self) -> usize {
        self.a.n()
    }

    /// n²×n² virtual-qubit expansion.
    pub fn virtual_matrices(&self) -> VirtualMatrices {
        VirtualMatrices::from_node_level(self)
    }
}

/// Virtual-qubit-level matrices: node i is split into n local qubits, qubit
/// (i,j) lives at flat index i·n+j and exists iff A_{ij}=1. The only possible
/// virtual edge at (i,j) is to its partner (j,i).
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualMatrices {
    pub n: usize,
    pub exists: Vec<bool>,
    pub a: Matrix,
    pub s: Matrix,
    pub c: Matrix,
    pub l: Matrix,
}

impl VirtualMatrices {
    fn from_node_level(m: &ConnectivityMatrices) -> Self {
        let n = m.n();
        let nn = n * n;
        let mut exists = vec![false; nn];
        let mut a = Matrix::zeros(nn);
        let mut s = Matrix::zeros(nn);
        let mut c = Matrix::zeros(nn);
        for i in 0..n {
            for j in 0..n {
                if m.a.get(i, j) != 0 {
                    exists[i * n + j] = true;
                    a.set(i * n + j, j * n + i, 1);
                    s.set(i * n + j, j * n + i, m.s.get(i, j));
                    c.set(i * n + j, j * n + i, m.c.get(i, j));
                }
            }
        }
        let mut l = Matrix::zeros(nn);
        for i in 0..nn {
            for j in 0..nn {
                if i == j {
                    l.set(i, j, c.row_sum(i));
                } else {
                    l.set(i, j, -c.get(i, j));
                }
            }
        }
        VirtualMatrices { n, exists, a, s, c, l }
    }

    pub fn index(&self, i: u32, j: u32) -> usize {
        i as usize * self.n + j as usize
    }
}

/// One request drawn by the Appendix-D procedure: scan nodes in ascending
/// order; each unmatched node proposes uniformly among remaining candidates,
/// accepted with `accept(i, candidate)`, each rejected candidate dropped.
fn draw_request<R: Rng, F: Fn(u32, u32) -> f64>(n: usize, rng: &mut R, accept: F) -> Request {
    loop {
        let mut matched = vec![false; n];
        let mut links = Vec::new();
        for i in 0..n as u32 {
            if matched[i as usize] {
                continue;
            }
            // propose partners drawn uniformly from the whole network; the
            // node's turn ends once a draw lands on a non-selectable node
            // (itself, an already-matched node, or a rejected proposal)
            let mut rejected = vec![false; n];
            loop {
                let partner = rng.gen_range(0..n as u32);
                if partner == i || matched[partner as usize] || rejected[partner as usize] {
                    break;
                }
                if rng.gen_bool(accept(i, partner)) {
                    matched[i as usize] = true;
                    matched[partner as usize] = true;
                    links.push((i, partner));
                    break;
                }
                rejected[partner as usize] = true;
            }
        }
        if !links.is_empty() {
            return Request::new(&links, None).unwrap();
        }
    }
}

/// m requests with uniform 1/n acceptance per proposed partner.
pub fn gen_uniform<R: Rng>(n: usize, m: usize, rng: &mut R) -> RequestSet {
    let p = 1.0 / n as f64;
    let reqs = (0..m).map(|_| draw_request(n, rng, |_, _| p)).collect();
    RequestSet::new(n, reqs).unwrap()
}

/// As `gen_uniform` but proposals within the same group of `group_size`
/// consecutive nodes are accepted with `bias`-fold probability (capped at 1).
pub fn gen_grouped<R: Rng>(
    n: usize,
    m: usize,
    group_size: usize,
    bias: f64,
    rng: &mut R,
) -> RequestSet {
    let base = 1.0 / n as f64;
    let intra = (bias / n as f64).min(1.0);
    let accept = move |i: u32, j: u32| {
        if i as usize / group_size == j as usize / group_size {
            intra
        } else {
            base
        }
    };
    let reqs = (0..m).map(|_| draw_request(n, rng, accept)).collect();
    RequestSet::new(n, reqs).unwrap()
}

/// All perfect matchings of n nodes (n even): (n−1)!! of them.
pub fn enumerate_perfect_matchings(n: usize) -> Vec<Request> {
    fn rec(free: &mut Vec<u32>, cur: &mut Vec<(u32, u32)>, out: &mut Vec<Request>) {
        if free.is_empty() {
            out.push(Request::new(cur, None).unwrap());
            return;
        }
        let a = free.remove(0);
        for k in 0..free.len() {
            let b = free.remove(k);
            cur.push((a, b));
            rec(free, cur, out);
            cur.pop();
            free.insert(k, b);
        }
        free.insert(0, a);
    }
    assert!(n % 2 == 0, "perfect matchings need even n");
    let mut out = Vec::new();
    rec(&mut (0..n as u32).collect(), &mut Vec::new(), &mut out);
    out
}

/// All non-empty partial matchings of n nodes (9 of them for n=4).
pub fn enumerate_partial_matchings(n: usize) -> Vec<Request> {
    fn rec(next: u32, n: u32, free: &mut Vec<bool>, cur: &mut Vec<(u32, u32)>, out: &mut Vec<Request>) {
        let Some(a) = (next..n).find(|&v| free[v as usize]) else {
            if !cur.is_empty() {
                out.push(Request::new(cur, None).unwrap());
            }
            return;
        };
        // leave a unmatched
        free[a as usize] = false;
        rec(a + 1, n, free, cur, out);
        // or match it with any later free node
        for b in (a + 1)..n {
            if free[b as usize] {
                free[b as usize] = false;
                cur.push((a, b));
                rec(a + 1, n, free, cur, out);
                cur.pop();
                free[b as usize] = true;
            }
        }
        free[a as usize] = true;
    }
    let mut out = Vec::new();
    rec(0, n as u32, &mut vec![true; n], &mut Vec::new(), &mut out);
    out
}

/// Interval-system enumeration for 1D cluster requests.
///
/// A request is a set of disjoint node intervals [a,b] with b ≥ a+1, each
/// extracted by the repeater-path protocol into a Bell link a–b; consecutive
/// intervals need a gap node in between for the separating Z measurement.
/// `nearest_neighbor` restricts to length-2 intervals (links i–(i+1)).
struct IntervalSystems {
    n: usize,
    nearest_neighbor: bool,
    /// count[i] = systems on the suffix starting at node i, incl. the empty one
    count: Vec<u128>,
}

impl IntervalSystems {
    fn new(n: usize, nearest_neighbor: bool) -> Self {
        let mut count = vec![1u128; n + 3];
        for i in (0..n).rev() {
            count[i] = count[i + 1]
                + if nearest_neighbor {
                    if i + 1 < n {
                        count[i + 3]
                    } else {
                        0
                    }
                } else {
                    (i + 1..n).map(|b| count[b + 2]).sum::<u128>()
                };
        }
        IntervalSystems {
            n,
            nearest_neighbor,
            count,
        }
    }

    fn total_nonempty(&self) -> u128 {
        self.count[0] - 1
    }

    /// Rank 0 is the empty system; ranks follow skip-first, then ascending b.
    fn unrank(&self, mut rank: u128) -> Request {
        let mut links = Vec::new();
        let mut i = 0;
        while i < self.n {
            if rank < self.count[i + 1] {
                i += 1;
                continue;
            }
            rank -= self.count[i + 1];
            let ends: Box<dyn Iterator<Item = usize>> = if self.nearest_neighbor {
                Box::new(std::iter::once(i + 1))
            } else {
                Box::new(i + 1..self.n)
            };
            for b in ends {
                if rank < self.count[b + 2] {
                    links.push((i as u32, b as u32));
                    i = b + 2;
                    break;
                }
                rank -= self.count[b + 2];
            }
        }
        Request::new(&links, None).unwrap()
    }
}

/// Requests reachable from a 1D cluster of n nodes by disjoint repeater-path
/// extractions. Enumerates everything when at most `cap` (default 2n) exist,
/// otherwise samples `cap` distinct ones.
pub fn cluster_requests_from_1d<R: Rng>(
    n: usize,
    nearest_neighbor: bool,
    cap: Option<usize>,
    rng: &mut R,
) -> RequestSet {
    let sys = IntervalSystems::new(n, nearest_neighbor);
    let cap = cap.unwrap_or(2 * n) as u128;
    let total = sys.total_nonempty();
    let reqs: Vec<Request> = if total <= cap {
        (1..=total).map(|r| sys.unrank(r)).collect()
    } else {
        let mut picked = HashSet::new();
        while (picked.len() as u128) < cap {
            picked.insert(rng.gen_range(1..=total));
        }
        let mut ranks: Vec<u128> = picked.into_iter().collect();
        ranks.sort_unstable();
        ranks.into_iter().map(|r| sys.unrank(r)).collect()
    };
    RequestSet::new(n, reqs).unwrap()
}

fn grid_neighbors(side: usize, v: usize) -> Vec<usize> {
    let (r, c) = (v / side, v % side);
    let mut out = Vec::with_capacity(4);
    if r > 0 {
        out.push(v - side);
    }
    if r + 1 < side {
        out.push(v + side);
    }
    if c > 0 {
        out.push(v - 1);
    }
    if c + 1 < side {
        out.push(v + 1);
    }
    out
}

/// Requests reachable from a √n×√n cluster by disjoint repeater-path
/// extractions: systems of vertex-disjoint, pairwise non-adjacent grid paths,
/// each path yielding the Bell link between its endpoints.
/// `nearest_neighbor` restricts paths to single grid edges. Small instances
/// are enumerated exhaustively; larger ones are sampled by random
/// non-conflicting path systems until `cap` (default 2n) distinct requests
/// are found.
pub fn cluster_requests_from_2d<R: Rng>(
    n: usize,
    nearest_neighbor: bool,
    cap: Option<usize>,
    rng: &mut R,
) -> RequestSet {
    let side = (n as f64).sqrt().round() as usize;
    assert_eq!(side * side, n, "2D cluster requests need a square node count");
    let cap = cap.unwrap_or(2 * n);
    if n <= 9 || (nearest_neighbor && n <= 25) {
        let mut reqs = enumerate_2d_systems(side, nearest_neighbor);
        if reqs.len() > cap {
            // uniform subsample, deterministic for a fixed seed
            let idx = rand::seq::index::sample(rng, reqs.len(), cap);
            let mut keep: Vec<usize> = idx.into_iter().collect();
            keep.sort_unstable();
            reqs = keep.into_iter().map(|k| reqs[k].clone()).collect();
        }
        return RequestSet::new(n, reqs).unwrap();
    }
    let mut seen: Vec<Request> = Vec::new();
    let mut attempts = 0usize;
    while seen.len() < cap && attempts < 1000 * cap {
        attempts += 1;
        if let Some(r) = sample_2d_system(side, nearest_neighbor, rng) {
            if !seen.contains(&r) {
                seen.push(r);
            }
        }
    }
    RequestSet::new(n, seen).unwrap()
}

/// All systems of non-conflicting paths on a side×side grid.
fn enumerate_2d_systems(side: usize, nearest_neighbor: bool) -> Vec<Request> {
    let n = side * side;
    // every simple path with ≥2 vertices, as (vertex bitmask, endpoints)
    let mut paths: Vec<(u64, u32, u32)> = Vec::new();
    fn extend(
        side: usize,
        start: usize,
        last: usize,
        mask: u64,
        edge_only: bool,
        paths: &mut Vec<(u64, u32, u32)>,
    ) {
        for nb in grid_neighbors(side, last) {
            if mask >> nb & 1 == 0 {
                let m2 = mask | 1 << nb;
                if start < nb {
                    paths.push((m2, start as u32, nb as u32));
                }
                if !edge_only {
                    extend(side, start, nb, m2, edge_only, paths);
                }
            }
        }
    }
    for v in 0..n {
        extend(side, v, v, 1 << v, nearest_neighbor, &mut paths);
    }
    // conflict closure: path plus its grid neighborhood
    let closures: Vec<u64> = paths
        .iter()
        .map(|&(mask, _, _)| {
            let mut c = mask;
            for v in 0..n {
                if mask >> v & 1 == 1 {
                    for nb in grid_neighbors(side, v) {
                        c |= 1 << nb;
                    }
                }
            }
            c
        })
        .collect();
    let mut out = Vec::new();
    fn rec(
        from: usize,
        paths: &[(u64, u32, u32)],
        closures: &[u64],
        blocked: u64,
        cur: &mut Vec<(u32, u32)>,
        out: &mut Vec<Request>,
    ) {
        if !cur.is_empty() {
            out.push(Request::new(cur, None).unwrap());
        }
        for k in from..paths.len() {
            if closures[k] & blocked == 0 {
                cur.push((paths[k].1, paths[k].2));
                rec(k + 1, paths, closures, blocked | paths[k].0, cur, out);
                cur.pop();
            }
        }
    }
    rec(0, &paths, &closures, 0, &mut Vec::new(), &mut out);
    out
}

/// One random system of non-conflicting paths via random walks.
fn sample_2d_system<R: Rng>(side: usize, nearest_neighbor: bool, rng: &mut R) -> Option<Request> {
    let n = side * side;
    let mut blocked = vec![false; n];
    let mut links = Vec::new();
    let num_paths = rng.gen_range(1..=(n / 4).max(1));
    for _ in 0..num_paths {
        let free: Vec<usize> = (0..n).filter(|&v| !blocked[v]).collect();
        if free.is_empty() {
            break;
        }
        let start = free[rng.gen_range(0..free.len())];
        let mut path = vec![start];
        let mut used = vec![false; n];
        used[start] = true;
        loop {
            let cands: Vec<usize> = grid_neighbors(side, *path.last().unwrap())
                .into_iter()
                .filter(|&v| !blocked[v] && !used[v])
                .collect();
            if cands.is_empty()
                || (path.len() >= 2 && (nearest_neighbor || rng.gen_bool(1.0 / 3.0)))
            {
                break;
            }
            let next = cands[rng.gen_range(0..cands.len())];
            used[next] = true;
            path.push(next);
        }
        if path.len() < 2 {
            continue;
        }
        for &v in &path {
            blocked[v] = true;
            for nb in grid_neighbors(side, v) {
                blocked[nb] = true;
            }
        }
        links.push((path[0] as u32, *path.last().unwrap() as u32));
    }
    (!links.is_empty()).then(|| Request::new(&links, None).unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rs(n: usize, reqs: &[&[(u32, u32)]]) -> RequestSet {
        RequestSet::new(
            n,
            reqs.iter().map(|l| Request::new(l, None).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn request_canonicalization_and_errors() {
        let r = Request::new(&[(3, 1), (0, 2)], None).unwrap();
        assert_eq!(r.links(), &[(0, 2), (1, 3)]);
        assert!(r.is_matching());
        assert_eq!(Request::new(&[(1, 1)], None), Err(RequestError::SelfLink(1)));
        assert_eq!(Request::new(&[], None), Err(RequestError::EmptyRequest));
        assert!(matches!(
            Request::new(&[(0, 1)], Some(1.5)),
            Err(RequestError::BadProbability(_))
        ));
    }

    #[test]
    fn request_set_validation() {
        assert_eq!(
            RequestSet::new(3, vec![Request::new(&[(0, 3)], None).unwrap()]),
            Err(RequestError::NodeOutOfRange(3, 3))
        );
        assert_eq!(
            RequestSet::new(4, vec![Request::new(&[(0, 1), (1, 2)], None).unwrap()]),
            Err(RequestError::DegreeViolation(1))
        );
        assert!(RequestSet::new_relaxed(
            4,
            vec![Request::new(&[(0, 1), (1, 2)], None).unwrap()]
        )
        .is_ok());
        // duplicate requests collapse and probabilities add
        let set = RequestSet::new(
            4,
            vec![
                Request::new(&[(0, 1)], Some(0.25)).unwrap(),
                Request::new(&[(1, 0)], Some(0.25)).unwrap(),
                Request::new(&[(2, 3)], Some(0.5)).unwrap(),
            ],
        )
        .unwrap();
        assert_eq!(set.num_requests(), 2);
        assert_eq!(set.requests()[0].probability, Some(0.5));
        assert!(matches!(
            RequestSet::new(
                4,
                vec![
                    Request::new(&[(0, 1)], Some(0.5)).unwrap(),
                    Request::new(&[(2, 3)], Some(0.4)).unwrap(),
                ],
            ),
            Err(RequestError::ProbabilitySum(_))
        ));
    }

    #[test]
    fn adjacency_examples() {
        let set = rs(5, &[&[(1, 2), (3, 4)], &[(1, 3)]]);
        let m = set.matrices();
        for (i, j) in [(1, 2), (3, 4), (1, 3)] {
            assert_eq!(m.a.get(i, j), 1);
            assert_eq!(m.a.get(j, i), 1);
        }
        assert_eq!((0..5).map(|i| m.a.row_sum(i)).sum::<i64>(), 6);
        let empty = RequestSet::new(4, vec![]).unwrap().matrices();
        assert!((0..4).all(|i| empty.a.row_sum(i) == 0));
    }

    #[test]
    fn simultaneous_examples() {
        let set = rs(5, &[&[(1, 2)], &[(1, 2), (3, 4)]]);
        let m = set.matrices();
        assert_eq!(m.s.get(1, 2), 2);
        assert_eq!(m.s.get(3, 4), 2);
        // all single-link requests → S ≡ A
        let set = rs(4, &[&[(0, 1)], &[(2, 3)], &[(0, 2)]]);
        let m = set.matrices();
        assert_eq!(m.s, m.a);
        // 4-node exhaustive m=9 → S = 2 on every pair
        let all = RequestSet::new(4, enumerate_partial_matchings(4)).unwrap();
        assert_eq!(all.num_requests(), 9);
        let m = all.matrices();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.s.get(i, j), if i == j { 0 } else { 2 });
            }
        }
    }

    #[test]
    fn cumulative_and_laplacian() {
        let set = rs(
            6,
            &[
                &[(0, 1)],
                &[(0, 1), (2, 3)],
                &[(0, 1), (4, 5)],
                &[(2, 3)],
                &[(0, 2)],
            ],
        );
        let m = set.matrices();
        assert_eq!(m.c.get(0, 1), 3);
        assert_eq!(m.c.get(2, 3), 2);
        assert!(m.c.is_symmetric() && m.s.is_symmetric() && m.l.is_symmetric());
        for i in 0..6 {
            assert_eq!(m.l.row_sum(i), 0);
        }
        // shared zero pattern, entrywise dominance
        for i in 0..6 {
            for j in 0..6 {
                if i != j {
                    assert_eq!(m.a.get(i, j) != 0, m.c.get(i, j) != 0);
                    assert_eq!(m.a.get(i, j) != 0, m.s.get(i, j) != 0);
                    assert!(m.c.get(i, j) >= m.a.get(i, j));
                    assert!(m.s.get(i, j) >= m.a.get(i, j));
                }
            }
        }
    }

    #[test]
    fn virtual_matrices_examples() {
        let set = rs(3, &[&[(1, 2)]]);
        let v = set.matrices().virtual_matrices();
        assert!(v.exists[v.index(1, 2)] && v.exists[v.index(2, 1)]);
        assert_eq!(v.exists.iter().filter(|&&e| e).count(), 2);
        assert_eq!(v.a.get(v.index(1, 2), v.index(2, 1)), 1);
        // node with 3 partners → 3 virtual qubits there
        let set = rs(5, &[&[(0, 1)], &[(0, 2)], &[(0, 3)]]);
        let m = set.matrices();
        let v = m.virtual_matrices();
        assert_eq!((0..5).filter(|&j| v.exists[v.index(0, j as u32)]).count(), 3);
        for j in [1u32, 2, 3] {
            assert_eq!(
                v.s.get(v.index(0, j), v.index(j, 0)),
                m.s.get(0, j as usize)
            );
        }
        for i in 0..v.l.n() {
            assert_eq!(v.l.row_sum(i), 0);
        }
    }

    #[test]
    fn gen_uniform_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let set = gen_uniform(20, 40, &mut rng);
        assert!(set.num_requests() <= 40);
        for r in set.requests() {
            assert!(r.is_matching());
            assert!(r.num_links() <= 10);
        }
        // reproducibility
        let a = gen_uniform(12, 10, &mut ChaCha8Rng::seed_from_u64(99)).to_json();
        let b = gen_uniform(12, 10, &mut ChaCha8Rng::seed_from_u64(99)).to_json();
        assert_eq!(a, b);
    }

    #[test]
    fn gen_grouped_bias_census() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut intra = 0usize;
        let mut inter = 0usize;
        for _ in 0..10 {
            let set = gen_grouped(16, 100, 4, 10.0, &mut rng);
            for r in set.requests() {
                for &(a, b) in r.links() {
                    if a / 4 == b / 4 {
                        intra += 1;
                    } else {
                        inter += 1;
                    }
                }
            }
        }
        assert!(intra > inter, "intra={intra} inter={inter}");
    }

    #[test]
    fn matching_enumeration_counts() {
        assert_eq!(enumerate_perfect_matchings(4).len(), 3);
        assert_eq!(enumerate_perfect_matchings(6).len(), 15);
        assert_eq!(enumerate_partial_matchings(4).len(), 9);
        let pm = enumerate_perfect_matchings(4);
        assert!(pm.iter().all(|r| r.num_links() == 2));
    }

    #[test]
    fn cluster_1d_nearest_neighbor_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = cluster_requests_from_1d(3, true, None, &mut rng);
        let links: HashSet<_> = set.requests().iter().map(|r| r.links().to_vec()).collect();
        assert_eq!(links, HashSet::from([vec![(0, 1)], vec![(1, 2)]]));
        // induced-matching recurrence f(n) = f(n-1) + f(n-3)
        let count = |n: usize| {
            IntervalSystems::new(n, true).total_nonempty()
        };
        for n in 4..12 {
            assert_eq!(count(n) + 1, (count(n - 1) + 1) + (count(n - 3) + 1));
        }
    }

    #[test]
    fn cluster_1d_contains_max_parallel_request() {
        // size 3k−1 cluster reaches k nearest-neighbor parallel pairs
        for k in 2..5usize {
            let n = 3 * k - 1;
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let set = cluster_requests_from_1d(n, true, Some(1 << 20), &mut rng);
            let want: Vec<(u32, u32)> =
                (0..k).map(|i| (3 * i as u32, 3 * i as u32 + 1)).collect();
            assert!(set.requests().iter().any(|r| r.links() == want));
        }
    }

    #[test]
    fn cluster_1d_full_matches_brute_force() {
        let n = 5;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let set = cluster_requests_from_1d(n, false, Some(1 << 20), &mut rng);
        // brute force: subsets of intervals, pairwise separated by a gap
        let intervals: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
            .collect();
        let mut expect: HashSet<Vec<(u32, u32)>> = HashSet::new();
        for mask in 1u32..1 << intervals.len() {
            let chosen: Vec<(usize, usize)> = (0..intervals.len())
                .filter(|&k| mask >> k & 1 == 1)
                .map(|k| intervals[k])
                .collect();
            let ok = chosen.iter().all(|&(a1, b1)| {
                chosen
                    .iter()
                    .all(|&(a2, b2)| (a1, b1) == (a2, b2) || b1 + 1 < a2 || b2 + 1 < a1)
            });
            if ok {
                let mut links: Vec<(u32, u32)> =
                    chosen.iter().map(|&(a, b)| (a as u32, b as u32)).collect();
                links.sort_unstable();
                expect.insert(links);
            }
        }
        let got: HashSet<Vec<(u32, u32)>> = set
            .requests()
            .iter()
            .map(|r| r.links().to_vec())
            .collect();
        assert_eq!(got, expect);
        assert_eq!(set.num_requests(), expect.len());
    }

    #[test]
    fn cluster_1d_sampling_caps() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let set = cluster_requests_from_1d(30, true, None, &mut rng);
        assert_eq!(set.num_requests(), 60);
        for r in set.requests() {
            assert!(r.is_matching());
            // nearest-neighbor links with gaps
            assert!(r.links().iter().all(|&(a, b)| b == a + 1));
        }
    }

    #[test]
    fn cluster_2d_small_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // 2×2 grid: paths = 4 edges + 8 L-shaped 3-paths... all conflict
        // pairwise, so every system has exactly one path.
        let set = cluster_requests_from_2d(4, false, Some(1 << 20), &mut rng);
        assert!(set.requests().iter().all(|r| r.num_links() == 1));
        // every pair of distinct corners is reachable
        let pairs: HashSet<(u32, u32)> = set
            .requests()
            .iter()
            .map(|r| r.links()[0])
            .collect();
        assert_eq!(pairs.len(), 6);
    }

    #[test]
    fn cluster_2d_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let set = cluster_requests_from_2d(25, false, None, &mut rng);
        assert_eq!(set.num_requests(), 50);
        for r in set.requests() {
            assert!(r.is_matching());
        }
    }

    #[test]
    fn cluster_2d_nearest_neighbor_links_are_grid_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = cluster_requests_from_2d(9, true, Some(1 << 20), &mut rng);
        for r in set.requests() {
            for &(a, b) in r.links() {
                let (ra, ca) = (a / 3, a % 3);
                let (rb, cb) = (b / 3, b % 3);
                assert_eq!(ra.abs_diff(rb) + ca.abs_diff(cb), 1);
            }
        }
        // all 12 grid edges appear as single-link requests
        let singles: HashSet<(u32, u32)> = set
            .requests()
            .iter()
            .filter(|r| r.num_links() == 1)
            .map(|r| r.links()[0])
            .collect();
        assert_eq!(singles.len(), 12);
    }

    #[test]
    fn json_round_trip() {
        let set = RequestSet::new(
            4,
            vec![
                Request::new(&[(0, 1)], Some(0.5)).unwrap(),
                Request::new(&[(2, 3)], Some(0.5)).unwrap(),
            ],
        )
        .unwrap();
        let back = RequestSet::from_json(&set.to_json()).unwrap();
        assert_eq!(back, set);
    }
}
