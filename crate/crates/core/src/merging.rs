//! The qubit-merging algorithm: virtual Bell pairs for every requested link,
//! simultaneity-guarded merging of co-located virtual qubits, and realization
//! of the fixed point as physical graph states with per-request recipes.

use crate::bits::Bits;
use crate::graph::{GraphError, GraphState, QubitId};
use crate::request::{Request, RequestSet};
use crate::spectral::{spectral_cluster, SpectralError, SpectralOrder};
use serde::{Deserialize, Serialize};

/// A (possibly merged) virtual qubit: one storage qubit of the designed
/// resource, holding one endpoint of each link in `links`.
#[derive(Debug, Clone)]
pub struct VQubit {
    pub owner: u32,
    pub links: Vec<usize>,
}

/// Virtual-qubit graph: one vedge per distinct requested link, endpoints
/// moving inward as qubits merge.
#[derive(Debug, Clone)]
pub struct VirtualGraph {
    n: usize,
    links: Vec<(u32, u32)>,
    /// cooccur[l] marks links sharing a request with l; a link's simultaneity
    /// weight exceeds 1 exactly when a cooccurring link is in scope
    cooccur: Vec<Bits>,
    vqubits: Vec<Option<VQubit>>,
    /// per link: current endpoint vqubit ids
    endpoints: Vec<(usize, usize)>,
}

impl VirtualGraph {
    /// One virtual Bell pair per distinct link of the request set.
    pub fn new(rs: &RequestSet) -> Self {
        let mut links: Vec<(u32, u32)> = rs
            .requests()
            .iter()
            .flat_map(|r| r.links().iter().copied())
            .collect();
        links.sort_unstable();
        links.dedup();
        let id_of = |a: u32, b: u32| links.binary_search(&(a, b)).unwrap();
        let mut cooccur = vec![Bits::new(links.len()); links.len()];
        for r in rs.requests() {
            let ids: Vec<usize> = r.links().iter().map(|&(a, b)| id_of(a, b)).collect();
            for &l1 in &ids {
                for &l2 in &ids {
                    if l1 != l2 {
                        cooccur[l1].set(l2, true);
                    }
                }
            }
        }
        let mut vqubits = Vec::with_capacity(2 * links.len());
        let mut endpoints = Vec::with_capacity(links.len());
        for (l, &(a, b)) in links.iter().enumerate() {
            vqubits.push(Some(VQubit {
                owner: a,
                links: vec![l],
            }));
            vqubits.push(Some(VQubit {
                owner: b,
                links: vec![l],
            }));
            endpoints.push((2 * l, 2 * l + 1));
        }
        VirtualGraph {
            n: rs.n(),
            links,
            cooccur,
            vqubits,
            endpoints,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn links(&self) -> &[(u32, u32)] {
        &self.links
    }

    pub fn link_id(&self, a: u32, b: u32) -> Option<usize> {
        self.links.binary_search(&(a.min(b), a.max(b))).ok()
    }

    pub fn endpoints(&self, link: usize) -> (usize, usize) {
        self.endpoints[link]
    }

    pub fn vqubit(&self, v: usize) -> Option<&VQubit> {
        self.vqubits.get(v).and_then(|q| q.as_ref())
    }

    pub fn alive(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.vqubits.len()).filter(|&v| self.vqubits[v].is_some())
    }

    pub fn num_vqubits(&self) -> usize {
        self.vqubits.iter().filter(|q| q.is_some()).count()
    }

    fn other_end(&self, link: usize, v: usize) -> usize {
        let (a, b) = self.endpoints[link];
        if a == v {
            b
        } else {
            a
        }
    }

    fn neighbors(&self, v: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.vqubits[v]
            .as_ref()
            .unwrap()
            .links
            .iter()
            .map(|&l| self.other_end(l, v))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Global simultaneity check: every link held by v1 or v2 must appear
    /// only in single-link requests.
    fn global_condition(&self, v1: usize, v2: usize) -> bool {
        [v1, v2].iter().all(|&v| {
            self.vqubits[v]
                .as_ref()
                .unwrap()
                .links
                .iter()
                .all(|&l| !self.cooccur[l].any())
        })
    }

    /// Neighborhood-restricted check: within {v1,v2} ∪ N ∪ N(N) of the
    /// current virtual graph, no incident link may share a request with
    /// another link lying fully inside the set.
    fn restricted_condition(&self, v1: usize, v2: usize) -> bool {
        let mut set: Vec<usize> = vec![v1, v2];
        set.extend(self.neighbors(v1));
        set.extend(self.neighbors(v2));
        let first: Vec<usize> = set.clone();
        for &u in &first {
            set.extend(self.neighbors(u));
        }
        set.sort_unstable();
        set.dedup();
        let inside = |v: usize| set.binary_search(&v).is_ok();
        let mut in_scope = Bits::new(self.links.len());
        for (l, &(a, b)) in self.endpoints.iter().enumerate() {
            if inside(a) && inside(b) {
                in_scope.set(l, true);
            }
        }
        [v1, v2].iter().all(|&v| {
            self.vqubits[v].as_ref().unwrap().links.iter().all(|&l| {
                let mut overlap = self.cooccur[l].clone();
                overlap.and_with(&in_scope);
                !overlap.any()
            })
        })
    }

    /// Eq. 10 guard: global simultaneity first (cheap early exit), then the
    /// neighborhood-restricted recount.
    pub fn merge_condition(&self, v1: usize, v2: usize) -> bool {
        self.global_condition(v1, v2) || self.restricted_condition(v1, v2)
    }

    fn merge(&mut self, keep: usize, gone: usize) {
        let taken = self.vqubits[gone].take().unwrap();
        for &l in &taken.links {
            let (a, b) = self.endpoints[l];
            self.endpoints[l] = (
                if a == gone { keep } else { a },
                if b == gone { keep } else { b },
            );
        }
        self.vqubits[keep].as_mut().unwrap().links.extend(taken.links);
    }

    /// Connected components of alive vqubits, each sorted ascending.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.vqubits.len()];
        let mut out = Vec::new();
        for start in self.alive() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for u in self.neighbors(v) {
                    if !seen[u] {
                        seen[u] = true;
                        comp.push(u);
                        stack.push(u);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }
}

/// Fixed point of the merging scan: nodes in ascending order, candidate
/// qubit pairs in lexicographic order, restarting a node's scan after each
/// merge, sweeping until nothing merges anywhere.
pub fn merge_pass(rs: &RequestSet) -> VirtualGraph {
    let mut vg = VirtualGraph::new(rs);
    loop {
        let mut merged_any = false;
        for node in 0..vg.n as u32 {
            'node: loop {
                let local: Vec<usize> = vg
                    .alive()
                    .filter(|&v| vg.vqubits[v].as_ref().unwrap().owner == node)
                    .collect();
                for (i, &v1) in local.iter().enumerate() {
                    for &v2 in &local[i + 1..] {
                        if vg.merge_condition(v1, v2) {
                            vg.merge(v1, v2);
                            merged_any = true;
                            continue 'node;
                        }
                    }
                }
                break;
            }
        }
        if !merged_any {
            return vg;
        }
    }
}

/// A single local operation of a recipe, addressed to a qubit of one
/// resource state. A `Merge` result stays addressable under the first
/// operand's id for follow-up actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", content = "args")]
pub enum LocalOp {
    X(u32),
    Y(u32),
    Z(u32),
    Lc(u32),
    BellMerge(u32, u32),
    Merge(u32, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Action {
    pub state: usize,
    #[serde(flatten)]
    pub op: LocalOp,
}

/// How to serve one request: run `actions`, keep everything else; the
/// surviving graph must be exactly one Bell edge per target owner pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recipe {
    pub targets: Vec<(u32, u32)>,
    pub actions: Vec<Action>,
}

/// A designed network resource: stored graph states plus one recipe per
/// request of the originating request set.
#[derive(Debug, Clone)]
pub struct ResourceState {
    pub states: Vec<GraphState>,
    pub storage: usize,
    pub per_node: Vec<usize>,
    pub recipes: Vec<Recipe>,
    pub kind: Option<String>,
}

impl ResourceState {
    pub fn from_parts(
        n: usize,
        states: Vec<GraphState>,
        recipes: Vec<Recipe>,
        kind: Option<String>,
    ) -> Self {
        let storage = states.iter().map(|s| s.num_qubits()).sum();
        let mut per_node = vec![0; n];
        for s in &states {
            for q in s.qubits() {
                per_node[s.owner(q).unwrap() as usize] += 1;
            }
        }
        ResourceState {
            states,
            storage,
            per_node,
            recipes,
            kind,
        }
    }

    /// All states flattened into one (disconnected) graph, with the id map
    /// (state index, old id) → combined id.
    pub fn combined(&self) -> (GraphState, Vec<std::collections::HashMap<u32, QubitId>>) {
        let mut g = GraphState::new();
        let mut maps = Vec::with_capacity(self.states.len());
        for s in &self.states {
            let mut map = std::collections::HashMap::new();
            for q in s.qubits() {
                map.insert(q.0, g.add_qubit(s.owner(q).unwrap()));
            }
            for (a, b) in s.edges() {
                g.add_edge(map[&a.0], map[&b.0]).unwrap();
            }
            maps.push(map);
        }
        (g, maps)
    }

    /// Execute a recipe on the combined graph; returns the surviving graph.
    pub fn execute_recipe(&self, recipe: &Recipe) -> Result<GraphState, GraphError> {
        let (mut g, maps) = self.combined();
        // aliases let later actions address merge outputs by operand id
        let mut alias: std::collections::HashMap<(usize, u32), QubitId> =
            std::collections::HashMap::new();
        let resolve = |alias: &std::collections::HashMap<(usize, u32), QubitId>,
                       maps: &[std::collections::HashMap<u32, QubitId>],
                       state: usize,
                       q: u32|
         -> Result<QubitId, GraphError> {
            alias
                .get(&(state, q))
                .copied()
                .or_else(|| maps.get(state).and_then(|m| m.get(&q)).copied())
                .ok_or(GraphError::UnknownQubit(QubitId(q)))
        };
        for a in &recipe.actions {
            match a.op {
                LocalOp::X(q) => {
                    let q = resolve(&alias, &maps, a.state, q)?;
                    g.measure_x(q, None)?;
                }
                LocalOp::Y(q) => {
                    let q = resolve(&alias, &maps, a.state, q)?;
                    g.measure_y(q)?;
                }
                LocalOp::Z(q) => {
                    let q = resolve(&alias, &maps, a.state, q)?;
                    g.measure_z(q)?;
                }
                LocalOp::Lc(q) => {
                    let q = resolve(&alias, &maps, a.state, q)?;
                    g.local_complement(q)?;
                }
                LocalOp::BellMerge(q1, q2) => {
                    let q1 = resolve(&alias, &maps, a.state, q1)?;
                    let q2 = resolve(&alias, &maps, a.state, q2)?;
                    g.bell_merge(q1, q2)?;
                }
                LocalOp::Merge(q1, q2) => {
                    let r1 = resolve(&alias, &maps, a.state, q1)?;
                    let r2 = resolve(&alias, &maps, a.state, q2)?;
                    let merged = g.merging_measure(r1, r2)?;
                    alias.insert((a.state, q1), merged);
                }
            }
        }
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        let states: Vec<serde_json::Value> = self
            .states
            .iter()
            .map(|s| serde_json::from_str(&s.to_json()).unwrap())
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({
            "kind": self.kind,
            "storage": self.storage,
            "per_node": self.per_node,
            "states": states,
            "recipes": self.recipes,
        }))
        .unwrap()
    }

    pub fn from_json(s: &str) -> Result<Self, String> {
        let v: serde_json::Value = serde_json::from_str(s).map_err(|e| e.to_string())?;
        let states = v["states"]
            .as_array()
            .ok_or("missing states")?
            .iter()
            .map(|sv| GraphState::from_json(&sv.to_string()).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let recipes: Vec<Recipe> =
            serde_json::from_value(v["recipes"].clone()).map_err(|e| e.to_string())?;
        let per_node: Vec<usize> =
            serde_json::from_value(v["per_node"].clone()).map_err(|e| e.to_string())?;
        let kind = v["kind"].as_str().map(str::to_string);
        Ok(ResourceState::from_parts(per_node.len(), states, recipes, kind))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pattern {
    Keep,
    X,
    Y,
    Z,
}

/// One realized component: its graph, vqubit→qubit map, and the local
/// complementations applied while normalizing.
struct RealizedComponent {
    graph: GraphState,
    members: Vec<usize>,
    qubit_of: std::collections::HashMap<usize, QubitId>,
    lc_seq: Vec<(QubitId, Vec<QubitId>)>,
}

fn realize_component(vg: &VirtualGraph, comp: &[usize], owner_map: &[u32]) -> RealizedComponent {
    let mut graph = GraphState::new();
    let mut qubit_of = std::collections::HashMap::new();
    for &v in comp {
        let owner = owner_map[vg.vqubit(v).unwrap().owner as usize];
        qubit_of.insert(v, graph.add_qubit(owner));
    }
    for &(a, b) in vg.endpoints.iter() {
        if comp.binary_search(&a).is_ok() && !graph.has_edge(qubit_of[&a], qubit_of[&b]) {
            graph.add_edge(qubit_of[&a], qubit_of[&b]).unwrap();
        }
    }
    // greedy local complementation while it strictly removes edges
    let mut lc_seq = Vec::new();
    loop {
        let mut improved = false;
        for q in graph.qubits().collect::<Vec<_>>() {
            let nbrs: Vec<QubitId> = graph.neighbors(q).collect();
            let present = nbrs
                .iter()
                .enumerate()
                .flat_map(|(i, &u)| nbrs[i + 1..].iter().map(move |&w| (u, w)))
                .filter(|&(u, w)| graph.has_edge(u, w))
                .count();
            let pairs = nbrs.len() * nbrs.len().saturating_sub(1) / 2;
            if pairs < 2 * present {
                graph.local_complement(q).unwrap();
                lc_seq.push((q, nbrs));
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    RealizedComponent {
        graph,
        members: comp.to_vec(),
        qubit_of,
        lc_seq,
    }
}

/// Measurement pattern for one request on one component: base pattern keeps
/// link endpoints and Z-measures the rest, then conjugates through the
/// component's local complementations (LC swaps Z↔Y on the complemented
/// qubit and X↔Y on its then-neighbors).
fn component_pattern(
    rc: &RealizedComponent,
    kept: &std::collections::HashSet<usize>,
) -> Vec<(QubitId, Pattern)> {
    let mut pattern: std::collections::HashMap<QubitId, Pattern> = rc
        .members
        .iter()
        .map(|v| {
            let q = rc.qubit_of[v];
            (q, if kept.contains(v) { Pattern::Keep } else { Pattern::Z })
        })
        .collect();
    for (v, nbrs) in &rc.lc_seq {
        if let Some(p) = pattern.get_mut(v) {
            *p = match *p {
                Pattern::Z => Pattern::Y,
                Pattern::Y => Pattern::Z,
                other => other,
            };
        }
        for u in nbrs {
            if let Some(p) = pattern.get_mut(u) {
                *p = match *p {
                    Pattern::X => Pattern::Y,
                    Pattern::Y => Pattern::X,
                    other => other,
                };
            }
        }
    }
    let mut out: Vec<(QubitId, Pattern)> = pattern.into_iter().collect();
    out.sort_by_key(|&(q, _)| q.0);
    out
}

/// Emit the measurement actions for one component by simulating their
/// sequential execution. The measurement rules for Y and X leave local
/// Clifford corrections on the remaining qubits (Y at q: √(∓iZ) on each
/// then-neighbor; X at q with special neighbor b0: √(±iY) on b0), so the
/// bases of later measurements must be conjugated accordingly: X↔Y on the
/// neighbors of a Y-measured qubit, X↔Z on the special neighbor of an
/// X-measured qubit.
fn pattern_actions(state: usize, pat: &[(QubitId, Pattern)], graph: &GraphState) -> Vec<Action> {
    let mut basis: std::collections::HashMap<QubitId, Pattern> = pat.iter().copied().collect();
    let mut sim = graph.clone();
    let mut actions = Vec::new();
    for &(q, _) in pat {
        match basis[&q] {
            Pattern::Keep => {}
            Pattern::Z => {
                sim.measure_z(q).unwrap();
                actions.push(Action { state, op: LocalOp::Z(q.0) });
            }
            Pattern::Y => {
                let nbrs: Vec<QubitId> = sim.neighbors(q).collect();
                sim.measure_y(q).unwrap();
                for u in nbrs {
                    if let Some(p) = basis.get_mut(&u) {
                        *p = match *p {
                            Pattern::X => Pattern::Y,
                            Pattern::Y => Pattern::X,
                            other => other,
                        };
                    }
                }
                actions.push(Action { state, op: LocalOp::Y(q.0) });
            }
            Pattern::X => {
                let b0 = sim.neighbors(q).next();
                sim.measure_x(q, None).unwrap();
                if let Some(b0) = b0 {
                    if let Some(p) = basis.get_mut(&b0) {
                        *p = match *p {
                            Pattern::X => Pattern::Z,
                            Pattern::Z => Pattern::X,
                            other => other,
                        };
                    }
                }
                actions.push(Action { state, op: LocalOp::X(q.0) });
            }
        }
    }
    actions
}

/// Turn a merging fixed point into physical states and recipes, mapping
/// vqubit owners through `owner_map` (identity for the plain algorithm).
fn realize_with_owners(vg: &VirtualGraph, rs: &RequestSet, owner_map: &[u32]) -> ResourceState {
    let comps: Vec<RealizedComponent> = vg
        .components()
        .iter()
        .map(|c| realize_component(vg, c, owner_map))
        .collect();
    let mut recipes = Vec::with_capacity(rs.num_requests());
    for r in rs.requests() {
        let mut kept: std::collections::HashSet<usize> = std::collections::HashSet::new();
        let mut targets = Vec::new();
        for &(a, b) in r.links() {
            let l = vg.link_id(a, b).expect("request link missing from virtual graph");
            let (va, vb) = vg.endpoints(l);
            kept.insert(va);
            kept.insert(vb);
            targets.push((owner_map[a as usize], owner_map[b as usize]));
        }
        targets.sort_unstable();
        targets.dedup();
        let mut actions = Vec::new();
        for (s, rc) in comps.iter().enumerate() {
            actions.extend(pattern_actions(s, &component_pattern(rc, &kept), &rc.graph));
        }
        recipes.push(Recipe { targets, actions });
    }
    ResourceState::from_parts(
        owner_map.iter().map(|&o| o as usize + 1).max().unwrap_or(0).max(rs.n()),
        comps.into_iter().map(|c| c.graph).collect(),
        recipes,
        None,
    )
}

/// Physical realization of the merging output for the original network.
pub fn realize(vg: &VirtualGraph, rs: &RequestSet) -> ResourceState {
    let identity: Vec<u32> = (0..rs.n() as u32).collect();
    realize_with_owners(vg, rs, &identity)
}

/// Merging alone: virtual graph fixed point, realized.
pub fn merge_requests(rs: &RequestSet) -> ResourceState {
    realize(&merge_pass(rs), rs)
}

/// Clustering + merging: spectral layers, merging applied per cluster per
/// layer, router-layer links served by states stored at representative
/// nodes. Each recipe's targets are the request's links translated to the
/// owners actually holding them (representatives for inter-cluster links).
pub fn cluster_then_merge(
    rs: &RequestSet,
    rounds: usize,
    order: SpectralOrder,
) -> Result<ResourceState, SpectralError> {
    let m = rs.num_requests();
    let mut states: Vec<GraphState> = Vec::new();
    let mut actions: Vec<Vec<Action>> = vec![Vec::new(); m];
    let mut targets: Vec<Vec<(u32, u32)>> = vec![Vec::new(); m];
    // pending links per original request, in current-layer node ids
    let mut pending: Vec<Vec<(u32, u32)>> = rs
        .requests()
        .iter()
        .map(|r| r.links().to_vec())
        .collect();
    // current-layer node → representative base node
    let mut rep: Vec<u32> = (0..rs.n() as u32).collect();
    let mut layer_n = rs.n();

    let absorb = |states: &mut Vec<GraphState>,
                      actions: &mut Vec<Vec<Action>>,
                      targets: &mut Vec<Vec<(u32, u32)>>,
                      layer_rs: &RequestSet,
                      req_of_slice: &[Vec<usize>],
                      rep: &[u32]| {
        if layer_rs.num_requests() == 0 {
            return;
        }
        let vg = merge_pass(layer_rs);
        let part = realize_with_owners(&vg, layer_rs, rep);
        let offset = states.len();
        let num_states = part.states.len();
        states.extend(part.states);
        for j in 0..m {
            match req_of_slice.iter().position(|owners| owners.contains(&j)) {
                Some(slice) => {
                    let recipe = &part.recipes[slice];
                    targets[j].extend(recipe.targets.iter().copied());
                    actions[j].extend(recipe.actions.iter().map(|a| Action {
                        state: a.state + offset,
                        op: a.op,
                    }));
                }
                None => {
                    // request untouched by this layer slice: clear its states
                    for s in 0..num_states {
                        let g = &states[offset + s];
                        for q in g.qubits() {
                            actions[j].push(Action {
                                state: offset + s,
                                op: LocalOp::Z(q.0),
                            });
                        }
                    }
                }
            }
        }
    };

    for _ in 0..rounds {
        if layer_n < 3 || pending.iter().all(|p| p.is_empty()) {
            break;
        }
        let layer_links: Vec<Request> = pending
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| Request::new(p, None).unwrap())
            .collect();
        if layer_links.is_empty() {
            break;
        }
        let layer_view = RequestSet::new_relaxed(layer_n, layer_links).expect("valid layer view");
        let partition = spectral_cluster(&layer_view, None, order)?;
        let k = partition.iter().copied().max().unwrap_or(0) as usize + 1;
        if k == 1 {
            break;
        }
        // split each request's pending links into per-cluster slices + cross
        for c in 0..k as u32 {
            let mut slices: Vec<Request> = Vec::new();
            let mut req_of_slice: Vec<Vec<usize>> = Vec::new();
            for (j, p) in pending.iter().enumerate() {
                let intra: Vec<(u32, u32)> = p
                    .iter()
                    .copied()
                    .filter(|&(a, b)| {
                        partition[a as usize] == c && partition[b as usize] == c
                    })
                    .collect();
                if intra.is_empty() {
                    continue;
                }
                let req = Request::new(&intra, None).unwrap();
                match slices.iter().position(|s| s.links() == req.links()) {
                    Some(i) => req_of_slice[i].push(j),
                    None => {
                        slices.push(req);
                        req_of_slice.push(vec![j]);
                    }
                }
            }
            let cluster_rs = RequestSet::new_relaxed(layer_n, slices).expect("valid cluster slice");
            absorb(
                &mut states,
                &mut actions,
                &mut targets,
                &cluster_rs,
                &req_of_slice,
                &rep,
            );
        }
        // next layer: cross links between cluster representatives
        let mut next_rep = vec![u32::MAX; k];
        for (node, &c) in partition.iter().enumerate() {
            next_rep[c as usize] = next_rep[c as usize].min(rep[node]);
        }
        for p in pending.iter_mut() {
            let mut cross: Vec<(u32, u32)> = p
                .iter()
                .filter(|&&(a, b)| partition[a as usize] != partition[b as usize])
                .map(|&(a, b)| {
                    let (ca, cb) = (partition[a as usize], partition[b as usize]);
                    (ca.min(cb), ca.max(cb))
                })
                .collect();
            cross.sort_unstable();
            cross.dedup();
            *p = cross;
        }
        rep = next_rep;
        layer_n = k;
    }
    // remainder: merge whatever is still pending at the top layer
    {
        let mut slices: Vec<Request> = Vec::new();
        let mut req_of_slice: Vec<Vec<usize>> = Vec::new();
        for (j, p) in pending.iter().enumerate() {
            if p.is_empty() {
                continue;
            }
            let req = Request::new(p, None).unwrap();
            match slices.iter().position(|s| s.links() == req.links()) {
                Some(i) => req_of_slice[i].push(j),
                None => {
                    slices.push(req);
                    req_of_slice.push(vec![j]);
                }
            }
        }
        let top_rs = RequestSet::new_relaxed(layer_n, slices).expect("valid top layer");
        absorb(
            &mut states,
            &mut actions,
            &mut targets,
            &top_rs,
            &req_of_slice,
            &rep,
        );
    }
    let recipes = targets
        .into_iter()
        .zip(actions)
        .map(|(mut t, a)| {
            t.sort_unstable();
            t.dedup();
            Recipe {
                targets: t,
                actions: a,
            }
        })
        .collect();
    Ok(ResourceState::from_parts(rs.n(), states, recipes, None))
}
