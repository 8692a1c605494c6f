//! Certifies that a resource state fulfills requests: recipe execution,
//! bounded brute-force search over local measurement patterns, and
//! cut-rank necessary conditions.

use crate::bits::{gf2_rank, Bits};
use crate::graph::{GraphError, GraphState, QubitId};
use crate::merging::ResourceState;
use crate::request::Request;
use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub enum VerifyError {
    /// Recipe missing, or surviving graph differs from the targets; carries
    /// a diagnostic diff.
    RecipeMismatch(String),
    Graph(GraphError),
    /// Search precondition violated (more than 16 qubits).
    TooLarge(usize),
    TrivialBipartition,
}

impl std::fmt::Display for VerifyError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            VerifyError::RecipeMismatch(d) => write!(f, "recipe mismatch: {d}"),
            VerifyError::Graph(e) => write!(f, "graph error: {e:?}"),
            VerifyError::TooLarge(n) => write!(f, "search limited to 16 qubits, got {n}"),
            VerifyError::TrivialBipartition => write!(f, "bipartition must be nonempty and proper"),
        }
    }
}

impl std::error::Error for VerifyError {}

impl From<GraphError> for VerifyError {
    fn from(e: GraphError) -> Self {
        VerifyError::Graph(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerdictStatus {
    RecipeVerified,
    SearchVerified,
    NecessaryConditionFailed,
    SearchExhausted,
}

/// One operation of a search witness, addressed by qubit id in the
/// combined resource graph (states concatenated in order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args")]
pub enum WitnessOp {
    X(u32),
    Y(u32),
    Z(u32),
    Lc(u32),
    Merge(u32, u32),
    BellMerge(u32, u32),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub request_id: usize,
    pub status: VerdictStatus,
    /// Present for RecipeVerified / SearchVerified.
    pub witness: Option<Vec<WitnessOp>>,
    /// Number of measurement patterns examined.
    pub search_space_size: u64,
    /// Violating node bipartition for NecessaryConditionFailed.
    pub bipartition: Option<Vec<u32>>,
}

impl Verdict {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).unwrap()
    }
}

fn surviving_links(g: &GraphState) -> (Vec<(u32, u32)>, usize) {
    let mut links: Vec<(u32, u32)> = g
        .edges()
        .iter()
        .map(|&(a, b)| {
            let (oa, ob) = (g.owner(a).unwrap(), g.owner(b).unwrap());
            (oa.min(ob), oa.max(ob))
        })
        .collect();
    links.sort_unstable();
    (links, g.num_qubits())
}

/// Execute the recorded recipe for `request_id` and demand that the
/// surviving graph is exactly one Bell edge per target owner pair (the
/// recipe's targets equal the request's links except when the resource was
/// built for a coarser layer, where links are translated to representative
/// owners).
pub fn verify_recipe(
    res: &ResourceState,
    request_id: usize,
    _request: &Request,
) -> Result<Verdict, VerifyError> {
    let recipe = res
        .recipes
        .get(request_id)
        .ok_or_else(|| VerifyError::RecipeMismatch(format!("no recipe for request {request_id}")))?;
    let g = res.execute_recipe(recipe)?;
    let (links, survivors) = surviving_links(&g);
    if links != recipe.targets || survivors != 2 * recipe.targets.len() {
        return Err(VerifyError::RecipeMismatch(format!(
            "targets {:?} but surviving links {:?} over {} qubits",
            recipe.targets, links, survivors
        )));
    }
    let witness = recipe
        .actions
        .iter()
        .map(|a| {
            let base: u32 = res.states[..a.state].iter().map(|s| s.num_qubits() as u32).sum();
            match a.op {
                crate::merging::LocalOp::X(q) => WitnessOp::X(base + q),
                crate::merging::LocalOp::Y(q) => WitnessOp::Y(base + q),
                crate::merging::LocalOp::Z(q) => WitnessOp::Z(base + q),
                crate::merging::LocalOp::Lc(q) => WitnessOp::Lc(base + q),
                crate::merging::LocalOp::Merge(a1, a2) => WitnessOp::Merge(base + a1, base + a2),
                crate::merging::LocalOp::BellMerge(a1, a2) => {
                    WitnessOp::BellMerge(base + a1, base + a2)
                }
            }
        })
        .collect();
    Ok(Verdict {
        request_id,
        status: VerdictStatus::RecipeVerified,
        witness: Some(witness),
        search_space_size: 0,
        bipartition: None,
    })
}

/// GF(2) rank of the adjacency block between the qubits owned by `side`
/// and the rest; equals the bipartite entanglement of the graph state in
/// ebits.
pub fn cut_rank(g: &GraphState, side: &[u32]) -> Result<usize, VerifyError> {
    let in_side = |o: u32| side.contains(&o);
    let left: Vec<QubitId> = g.qubits().filter(|&q| in_side(g.owner(q).unwrap())).collect();
    let right: Vec<QubitId> = g.qubits().filter(|&q| !in_side(g.owner(q).unwrap())).collect();
    if left.is_empty() || right.is_empty() {
        return Err(VerifyError::TrivialBipartition);
    }
    let rows: Vec<Bits> = left
        .iter()
        .map(|&a| {
            let mut row = Bits::new(right.len());
            for (j, &b) in right.iter().enumerate() {
                if g.has_edge(a, b) {
                    row.set(j, true);
                }
            }
            row
        })
        .collect();
    Ok(gf2_rank(&rows))
}

fn bipartition_ok(res: &ResourceState, request: &Request, side: &[u32]) -> bool {
    let crossing = request
        .links()
        .iter()
        .filter(|&&(a, b)| side.contains(&a) != side.contains(&b))
        .count();
    if crossing == 0 {
        return true;
    }
    let mut rank = 0usize;
    for s in &res.states {
        // components of a state that straddle the cut contribute their rank
        match cut_rank(s, side) {
            Ok(r) => rank += r,
            Err(_) => {} // state entirely on one side contributes nothing
        }
        if rank >= crossing {
            return true;
        }
    }
    rank >= crossing
}

/// Search for a node bipartition with less resource entanglement across it
/// than the request demands. Exhaustive for up to 12 nodes, sampled (1000
/// random bipartitions) above.
pub fn violating_bipartition(res: &ResourceState, request: &Request) -> Option<Vec<u32>> {
    let n = res.per_node.len();
    if n <= 12 {
        // proper bipartitions with node 0 fixed on the left
        for mask in 0u32..(1 << (n - 1)) {
            let side: Vec<u32> = std::iter::once(0u32)
                .chain((1..n as u32).filter(|&i| mask >> (i - 1) & 1 == 1))
                .collect();
            if side.len() == n {
                continue;
            }
            if !bipartition_ok(res, request, &side) {
                return Some(side);
            }
        }
        None
    } else {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(n as u64);
        for _ in 0..1000 {
            let mut side: Vec<u32> = (0..n as u32)
                .filter(|_| rng.gen_bool(0.5))
                .collect();
            if side.is_empty() {
                side.push(0);
            }
            if side.len() == n {
                side.pop();
            }
            if !bipartition_ok(res, request, &side) {
                return Some(side);
            }
        }
        None
    }
}

/// True iff every node bipartition carries at least as much resource
/// entanglement (summed cut-rank over stored states) as request links
/// crossing it. A necessary condition for fulfillment: the Schmidt measure
/// cannot increase under local operations.
pub fn necessary_condition(res: &ResourceState, request: &Request) -> bool {
    violating_bipartition(res, request).is_none()
}

struct SearchCtx<'a> {
    request: &'a Request,
    budget: u64,
    tried: u64,
}

/// Bounded brute-force fulfillment search: enumerates per-node local merge
/// moves (for nodes owning several qubits, depth capped at qubits−1 per
/// node), a kept endpoint qubit per request node, and `{X,Y,Z}` bases for
/// all other qubits in order of increasing non-Z count. Deterministic:
/// returns the first (lexicographically smallest) witness.
pub fn search_fulfillment(
    res: &ResourceState,
    request_id: usize,
    request: &Request,
    budget: u64,
) -> Result<Verdict, VerifyError> {
    let (g, _) = res.combined();
    if g.num_qubits() > 16 {
        return Err(VerifyError::TooLarge(g.num_qubits()));
    }
    let mut ctx = SearchCtx { request, budget, tried: 0 };
    let mut moves = Vec::new();
    let mut depth: std::collections::HashMap<u32, usize> = std::collections::HashMap::new();
    for q in g.qubits() {
        *depth.entry(g.owner(q).unwrap()).or_insert(0) += 1;
    }
    let depth: std::collections::HashMap<u32, usize> =
        depth.into_iter().map(|(o, c)| (o, c.saturating_sub(1))).collect();
    let result = search_merges(&g, &mut ctx, &mut moves, &depth);
    match result {
        Some(witness) => Ok(Verdict {
            request_id,
            status: VerdictStatus::SearchVerified,
            witness: Some(witness),
            search_space_size: ctx.tried,
            bipartition: None,
        }),
        None => Ok(Verdict {
            request_id,
            status: VerdictStatus::SearchExhausted,
            witness: None,
            search_space_size: ctx.tried,
            bipartition: None,
        }),
    }
}

fn search_merges(
    g: &GraphState,
    ctx: &mut SearchCtx,
    moves: &mut Vec<WitnessOp>,
    budget_left: &std::collections::HashMap<u32, usize>,
) -> Option<Vec<WitnessOp>> {
    if let Some(w) = search_patterns(g, ctx, moves) {
        return Some(w);
    }
    if ctx.tried >= ctx.budget {
        return None;
    }
    // group live qubits by owner, ascending
    let mut by_owner: std::collections::BTreeMap<u32, Vec<QubitId>> = Default::default();
    for q in g.qubits() {
        by_owner.entry(g.owner(q).unwrap()).or_default().push(q);
    }
    for (&owner, qs) in &by_owner {
        if qs.len() < 2 || budget_left.get(&owner).copied().unwrap_or(0) == 0 {
            continue;
        }
        for i in 0..qs.len() {
            for j in i + 1..qs.len() {
                for bell in [false, true] {
                    let mut g2 = g.clone();
                    let op = if bell {
                        if g2.bell_merge(qs[i], qs[j]).is_err() {
                            continue;
                        }
                        WitnessOp::BellMerge(qs[i].0, qs[j].0)
                    } else {
                        if g2.merging_measure(qs[i], qs[j]).is_err() {
                            continue;
                        }
                        WitnessOp::Merge(qs[i].0, qs[j].0)
                    };
                    let mut bl = budget_left.clone();
                    *bl.get_mut(&owner).unwrap() -= 1;
                    moves.push(op);
                    if let Some(w) = search_merges(&g2, ctx, moves, &bl) {
                        return Some(w);
                    }
                    moves.pop();
                    if ctx.tried >= ctx.budget {
                        return None;
                    }
                }
            }
        }
    }
    None
}

fn search_patterns(
    g: &GraphState,
    ctx: &mut SearchCtx,
    moves: &[WitnessOp],
) -> Option<Vec<WitnessOp>> {
    let links = ctx.request.links();
    // one kept qubit per involved node
    let involved: Vec<u32> = ctx.request.nodes();
    let choices: Vec<Vec<QubitId>> = involved
        .iter()
        .map(|&node| g.qubits().filter(|&q| g.owner(q).unwrap() == node).collect())
        .collect();
    if choices.iter().any(Vec::is_empty) {
        return None;
    }
    let mut pick = vec![0usize; involved.len()];
    loop {
        let kept: Vec<QubitId> = pick.iter().zip(&choices).map(|(&i, c)| c[i]).collect();
        let others: Vec<QubitId> = g.qubits().filter(|q| !kept.contains(q)).collect();
        if let Some(w) = try_patterns(g, ctx, moves, &others, links) {
            return Some(w);
        }
        if ctx.tried >= ctx.budget {
            return None;
        }
        // advance the kept-qubit selection
        let mut k = pick.len();
        loop {
            if k == 0 {
                return None;
            }
            k -= 1;
            pick[k] += 1;
            if pick[k] < choices[k].len() {
                break;
            }
            pick[k] = 0;
        }
    }
}

fn try_patterns(
    g: &GraphState,
    ctx: &mut SearchCtx,
    moves: &[WitnessOp],
    others: &[QubitId],
    links: &[(u32, u32)],
) -> Option<Vec<WitnessOp>> {
    // bases per measured qubit, enumerated by increasing non-Z count
    let q = others.len();
    for non_z in 0..=q {
        let mut subset: Vec<usize> = (0..non_z).collect();
        loop {
            // assign Y/X to the subset positions; Y before X so witnesses
            // use as few local complementations as possible (Z=0, Y=1, X=3)
            for xy_mask in 0..(1u32 << non_z) {
                if ctx.tried >= ctx.budget {
                    return None;
                }
                ctx.tried += 1;
                let mut sim = g.clone();
                let mut ops = Vec::with_capacity(q);
                let mut ok = true;
                for (idx, &qu) in others.iter().enumerate() {
                    let pos = subset.iter().position(|&s| s == idx);
                    let op = match pos {
                        None => {
                            if sim.measure_z(qu).is_err() {
                                ok = false;
                                break;
                            }
                            WitnessOp::Z(qu.0)
                        }
                        Some(p) if xy_mask >> p & 1 == 0 => {
                            if sim.measure_y(qu).is_err() {
                                ok = false;
                                break;
                            }
                            WitnessOp::Y(qu.0)
                        }
                        Some(_) => {
                            if sim.measure_x(qu, None).is_err() {
                                ok = false;
                                break;
                            }
                            WitnessOp::X(qu.0)
                        }
                    };
                    ops.push(op);
                }
                if !ok {
                    continue;
                }
                let (got, survivors) = surviving_links(&sim);
                if survivors == 2 * links.len() && got == links {
                    let mut witness = moves.to_vec();
                    witness.extend(ops);
                    return Some(witness);
                }
            }
            if !next_combination(&mut subset, q) {
                break;
            }
        }
    }
    None
}

/// Advance `subset` to the next size-k subset of 0..n in lexicographic
/// order; false when exhausted.
fn next_combination(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if subset[i] < n - k + i {
            subset[i] += 1;
            for j in i + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Verify every request of `rs` against `res`: recipes first, then the
/// cut-rank necessary condition, then bounded search.
pub fn verify_all(
    res: &ResourceState,
    rs: &crate::request::RequestSet,
    budget: u64,
) -> Vec<Verdict> {
    rs.requests()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if res.recipes.get(i).is_some() {
                if let Ok(v) = verify_recipe(res, i, r) {
                    return v;
                }
            }
            if let Some(side) = violating_bipartition(res, r) {
                return Verdict {
                    request_id: i,
                    status: VerdictStatus::NecessaryConditionFailed,
                    witness: None,
                    search_space_size: 0,
                    bipartition: Some(side),
                };
            }
            match search_fulfillment(res, i, r, budget) {
                Ok(v) => v,
                Err(_) => Verdict {
                    request_id: i,
                    status: VerdictStatus::SearchExhausted,
                    witness: None,
                    search_space_size: 0,
                    bipartition: None,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constructions::{build, request_set, ConstructionKind};
    use crate::merging::merge_requests;
    use crate::request::RequestSet;

    /// The six-node example: a 1D cluster over nodes 4,1,5,2,3 and a GHZ
    /// (star) over nodes 3,5,6 — here 0-indexed as 3,0,4,1,2 and 2,4,5.
    /// Qubit ids in the combined graph: cluster 0–4 in path order, GHZ
    /// 5 (center, node 3), 6 (node 5), 7 (node 6); so "5l" is qubit 2 and
    /// "3r" is qubit 5.
    fn six_node_instance() -> (ResourceState, RequestSet) {
        let (cluster, _) = GraphState::linear_cluster(&[3, 0, 4, 1, 2]);
        let (ghz, _) = GraphState::star(&[2, 4, 5]);
        let res = ResourceState::from_parts(6, vec![cluster, ghz], vec![], None);
        let rs = RequestSet::new(
            6,
            vec![
                Request::new(&[(1, 2)], None).unwrap(),
                Request::new(&[(0, 3), (1, 2)], None).unwrap(),
                Request::new(&[(4, 5)], None).unwrap(),
                Request::new(&[(0, 3), (1, 2), (4, 5)], None).unwrap(),
            ],
        )
        .unwrap();
        (res, rs)
    }

    #[test]
    fn six_node_instance_all_requests_verified() {
        let (res, rs) = six_node_instance();
        for (i, r) in rs.requests().iter().enumerate() {
            let v = search_fulfillment(&res, i, r, 1_000_000).unwrap();
            assert_eq!(v.status, VerdictStatus::SearchVerified, "request {i}");
        }
    }

    #[test]
    fn six_node_last_request_uses_z_z_lc() {
        let (res, rs) = six_node_instance();
        let v = search_fulfillment(&res, 3, &rs.requests()[3], 1_000_000).unwrap();
        assert_eq!(v.status, VerdictStatus::SearchVerified);
        // Z on the cluster qubit of node 5 ("5l") and Y = LC + Z on the
        // GHZ qubit of node 3 ("3r")
        let mut w = v.witness.unwrap();
        w.sort_by_key(|op| match *op {
            WitnessOp::X(q) | WitnessOp::Y(q) | WitnessOp::Z(q) | WitnessOp::Lc(q) => q,
            WitnessOp::Merge(a, _) | WitnessOp::BellMerge(a, _) => a,
        });
        assert_eq!(w, vec![WitnessOp::Z(2), WitnessOp::Y(5)]);
    }

    #[test]
    fn bell_pair_trivial_search() {
        let mut g = GraphState::new();
        let a = g.add_qubit(0);
        let b = g.add_qubit(1);
        g.add_edge(a, b).unwrap();
        let res = ResourceState::from_parts(2, vec![g], vec![], None);
        let r = Request::new(&[(0, 1)], None).unwrap();
        let v = search_fulfillment(&res, 0, &r, 1000).unwrap();
        assert_eq!(v.status, VerdictStatus::SearchVerified);
        assert!(v.witness.unwrap().is_empty());
    }

    #[test]
    fn switch_matchings_search_verified() {
        let res = build(ConstructionKind::Switch, 4).unwrap();
        let rs = request_set(ConstructionKind::Switch, 4).unwrap();
        for (i, r) in rs.requests().iter().enumerate() {
            let v = search_fulfillment(&res, i, r, 10_000_000).unwrap();
            assert_eq!(v.status, VerdictStatus::SearchVerified, "matching {i}");
            // non-hub links demand a hub-local merge move
            if r.links().iter().any(|&(a, _)| a != 0) {
                let w = v.witness.unwrap();
                assert!(w
                    .iter()
                    .any(|op| matches!(op, WitnessOp::Merge(..) | WitnessOp::BellMerge(..))));
            }
        }
    }

    #[test]
    fn ghz_ladder_matchings_search_verified() {
        let res = build(ConstructionKind::GhzLadder, 4).unwrap();
        let rs = request_set(ConstructionKind::GhzLadder, 4).unwrap();
        for (i, r) in rs.requests().iter().enumerate() {
            let v = search_fulfillment(&res, i, r, 10_000_000).unwrap();
            assert_eq!(v.status, VerdictStatus::SearchVerified, "matching {i}");
            let w = v.witness.unwrap();
            assert!(w.iter().all(|op| matches!(
                op,
                WitnessOp::X(_) | WitnessOp::Y(_) | WitnessOp::Z(_)
            )));
        }
    }

    #[test]
    fn recipe_verification_subsumed_by_search() {
        let rs = RequestSet::new(
            5,
            vec![
                Request::new(&[(0, 1)], None).unwrap(),
                Request::new(&[(1, 2)], None).unwrap(),
                Request::new(&[(0, 4)], None).unwrap(),
            ],
        )
        .unwrap();
        let res = merge_requests(&rs);
        for (i, r) in rs.requests().iter().enumerate() {
            assert_eq!(
                verify_recipe(&res, i, r).unwrap().status,
                VerdictStatus::RecipeVerified
            );
            let v = search_fulfillment(&res, i, r, 1_000_000).unwrap();
            assert_eq!(v.status, VerdictStatus::SearchVerified);
        }
    }

    #[test]
    fn corrupted_recipe_reports_diff() {
        let rs = RequestSet::new(4, vec![Request::new(&[(0, 1)], None).unwrap()]).unwrap();
        let mut res = merge_requests(&rs);
        res.recipes[0].targets = vec![(0, 2)];
        let err = verify_recipe(&res, 0, &rs.requests()[0]).unwrap_err();
        assert!(matches!(err, VerifyError::RecipeMismatch(_)));
    }

    #[test]
    fn cut_rank_examples_and_invariance() {
        // GHZ across any bipartition is one ebit
        for k in [3usize, 5, 8] {
            let owners: Vec<u32> = (0..k as u32).collect();
            let (g, _) = GraphState::star(&owners);
            assert_eq!(cut_rank(&g, &[0]).unwrap(), 1);
            assert_eq!(cut_rank(&g, &[1, 2]).unwrap(), 1);
        }
        // symmetry and LC invariance on a random-ish grid
        let owners: Vec<u32> = (0..9u32).collect();
        let (mut g, qs) = GraphState::grid_cluster(3, 3, &owners);
        let side = [0u32, 3, 4, 7];
        let comp: Vec<u32> = (0..9u32).filter(|o| !side.contains(o)).collect();
        let r = cut_rank(&g, &side).unwrap();
        assert_eq!(cut_rank(&g, &comp).unwrap(), r);
        for &q in &qs {
            g.local_complement(q).unwrap();
            assert_eq!(cut_rank(&g, &side).unwrap(), r);
        }
    }

    #[test]
    fn cut_rank_rejects_trivial_bipartition() {
        let (g, _) = GraphState::star(&[0, 1, 2]);
        assert!(cut_rank(&g, &[]).is_err());
        assert!(cut_rank(&g, &[0, 1, 2]).is_err());
    }

    #[test]
    fn necessary_condition_bounds_search() {
        // a single Bell pair cannot serve two simultaneous links
        let mut g = GraphState::new();
        let a = g.add_qubit(0);
        let b = g.add_qubit(1);
        g.add_edge(a, b).unwrap();
        let res = ResourceState::from_parts(4, vec![g], vec![], None);
        let r = Request::new(&[(0, 1), (2, 3)], None).unwrap();
        assert!(violating_bipartition(&res, &r).is_some());
        let v = search_fulfillment(&res, 0, &r, 100_000).unwrap();
        assert_eq!(v.status, VerdictStatus::SearchExhausted);
    }

    #[test]
    fn verify_all_emits_json_lines() {
        let rs = RequestSet::new(
            4,
            vec![
                Request::new(&[(0, 1)], None).unwrap(),
                Request::new(&[(2, 3)], None).unwrap(),
            ],
        )
        .unwrap();
        let res = merge_requests(&rs);
        let verdicts = verify_all(&res, &rs, 10_000);
        assert_eq!(verdicts.len(), 2);
        for v in &verdicts {
            assert_eq!(v.status, VerdictStatus::RecipeVerified);
            let line = v.to_json_line();
            assert!(line.contains("RecipeVerified"));
            assert!(!line.contains('\n'));
        }
    }
}
