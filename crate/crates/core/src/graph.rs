//! Graph states as labeled graphs with node ownership, together with the
//! measurement and merging rules used to transform them.
//!
//! Vertices carry the network node that physically stores the qubit. All
//! measurements simulate the +1 outcome branch; local Pauli byproducts are not
//! tracked and correctness is asserted up to local Clifford equivalence.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bits::Bits;

/// Stable identifier of a qubit within one [`GraphState`].
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct QubitId(pub u32);

impl std::fmt::Debug for QubitId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "q{}", self.0)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown qubit id {0:?}")]
    UnknownQubit(QubitId),
    #[error("{0:?} is not adjacent to {1:?}")]
    NotAdjacent(QubitId, QubitId),
    #[error("{0:?} and {1:?} are stored at different nodes; merge must be node-local")]
    DistinctOwners(QubitId, QubitId),
    #[error("invalid repeater path: {0}")]
    InvalidPath(String),
    #[error("graph has {0} qubits, limit is {1}")]
    SizeLimit(usize, usize),
}

/// Which measurement order the repeater-path protocol uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PathOrder {
    /// Z-measure the path neighborhood first, then X-measure the path.
    ZFirst,
    /// X-measure the path first, then Z-measure the surviving neighborhood.
    XFirst,
}

#[derive(Clone, Debug)]
struct Slot {
    owner: u32,
    alive: bool,
}

/// A graph state: simple labeled graph over qubits plus node ownership.
///
/// Qubit ids are stable across deletions; deleted slots are tombstoned.
#[derive(Clone, Debug, Default)]
pub struct GraphState {
    slots: Vec<Slot>,
    adj: Vec<Bits>,
}

impl GraphState {
    pub fn new() -> Self {
        GraphState::default()
    }

    pub fn add_qubit(&mut self, owner: u32) -> QubitId {
        let id = self.slots.len();
        self.slots.push(Slot { owner, alive: true });
        for row in &mut self.adj {
            row.grow(id + 1);
        }
        self.adj.push(Bits::new(id + 1));
        QubitId(id as u32)
    }

    fn check(&self, q: QubitId) -> Result<usize, GraphError> {
        let i = q.0 as usize;
        if i < self.slots.len() && self.slots[i].alive {
            Ok(i)
        } else {
            Err(GraphError::UnknownQubit(q))
        }
    }

    pub fn contains(&self, q: QubitId) -> bool {
        self.check(q).is_ok()
    }

    pub fn owner(&self, q: QubitId) -> Result<u32, GraphError> {
        Ok(self.slots[self.check(q)?].owner)
    }

    pub fn num_qubits(&self) -> usize {
        self.slots.iter().filter(|s| s.alive).count()
    }

    pub fn qubits(&self) -> impl Iterator<Item = QubitId> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive)
            .map(|(i, _)| QubitId(i as u32))
    }

    pub fn add_edge(&mut self, a: QubitId, b: QubitId) -> Result<(), GraphError> {
        let (i, j) = (self.check(a)?, self.check(b)?);
        if i == j {
            return Ok(()); // no self-loops
        }
        self.adj[i].set(j, true);
        self.adj[j].set(i, true);
        Ok(())
    }

    pub fn toggle_edge(&mut self, a: QubitId, b: QubitId) -> Result<(), GraphError> {
        let (i, j) = (self.check(a)?, self.check(b)?);
        if i == j {
            return Ok(());
        }
        self.adj[i].flip(j);
        self.adj[j].flip(i);
        Ok(())
    }

    pub fn has_edge(&self, a: QubitId, b: QubitId) -> bool {
        match (self.check(a), self.check(b)) {
            (Ok(i), Ok(j)) => i != j && self.adj[i].get(j),
            _ => false,
        }
    }

    pub fn degree(&self, q: QubitId) -> Result<usize, GraphError> {
        Ok(self.adj[self.check(q)?].count_ones())
    }

    pub fn neighbors(&self, q: QubitId) -> impl Iterator<Item = QubitId> + '_ {
        let i = q.0 as usize;
        self.adj
            .get(i)
            .into_iter()
            .flat_map(|row| row.iter_ones())
            .map(|j| QubitId(j as u32))
    }

    pub fn edges(&self) -> Vec<(QubitId, QubitId)> {
        let mut out = Vec::new();
        for (i, s) in self.slots.iter().enumerate() {
            if !s.alive {
                continue;
            }
            for j in self.adj[i].iter_ones() {
                if j > i {
                    out.push((QubitId(i as u32), QubitId(j as u32)));
                }
            }
        }
        out
    }

    pub fn num_edges(&self) -> usize {
        self.edges().len()
    }

    fn delete(&mut self, i: usize) {
        let row = std::mem::replace(&mut self.adj[i], Bits::new(self.slots.len()));
        for j in row.iter_ones() {
            self.adj[j].set(i, false);
        }
        self.slots[i].alive = false;
    }

    /// Pauli Z measurement: vertex deletion.
    pub fn measure_z(&mut self, q: QubitId) -> Result<(), GraphError> {
        let i = self.check(q)?;
        self.delete(i);
        Ok(())
    }

    /// Invert the subgraph on the neighborhood of `q`.
    pub fn local_complement(&mut self, q: QubitId) -> Result<(), GraphError> {
        let i = self.check(q)?;
        let nbrs = self.adj[i].clone();
        for u in nbrs.iter_ones() {
            self.adj[u].xor_with(&nbrs);
            self.adj[u].set(u, false); // no self-loops
        }
        Ok(())
    }

    /// Pauli Y measurement: local complementation followed by vertex deletion.
    pub fn measure_y(&mut self, q: QubitId) -> Result<(), GraphError> {
        self.local_complement(q)?;
        self.measure_z(q)
    }

    /// Pauli X measurement via the composed rule
    /// `LC(b0); LC(q); delete q; LC(b0)` for a neighbor `b0` of `q`.
    ///
    /// Defaults to the lowest-id neighbor; results for different choices of
    /// `b0` are equivalent up to local complementation. An isolated qubit is
    /// simply deleted.
    pub fn measure_x(
        &mut self,
        q: QubitId,
        special_neighbor: Option<QubitId>,
    ) -> Result<(), GraphError> {
        let i = self.check(q)?;
        let b0 = match special_neighbor {
            Some(b) => {
                self.check(b)?;
                if !self.has_edge(q, b) {
                    return Err(GraphError::NotAdjacent(q, b));
                }
                b
            }
            None => {
                let first = self.adj[i].iter_ones().next();
                match first {
                    Some(j) => QubitId(j as u32),
                    None => {
                        self.delete(i);
                        return Ok(());
                    }
                }
            }
        };
        self.local_complement(b0)?;
        self.local_complement(q)?;
        self.measure_z(q)?;
        self.local_complement(b0)
    }

    /// Merging measurement: `q1` and `q2` (co-located) are replaced by a new
    /// qubit adjacent to the XOR of their former neighborhoods.
    pub fn merging_measure(&mut self, q1: QubitId, q2: QubitId) -> Result<QubitId, GraphError> {
        let (i, j) = (self.check(q1)?, self.check(q2)?);
        if i == j {
            return Err(GraphError::UnknownQubit(q2));
        }
        let owner = self.slots[i].owner;
        if owner != self.slots[j].owner {
            return Err(GraphError::DistinctOwners(q1, q2));
        }
        let mut nbrs = self.adj[i].clone();
        nbrs.xor_with(&self.adj[j]);
        nbrs.set(i, false);
        nbrs.set(j, false);
        self.delete(i);
        self.delete(j);
        let m = self.add_qubit(owner);
        let mi = m.0 as usize;
        for u in nbrs.iter_ones() {
            self.adj[u].set(mi, true);
            self.adj[mi].set(u, true);
        }
        Ok(m)
    }

    /// Bell measurement on two co-located qubits: both are deleted and their
    /// neighborhoods joined. Realized as a merging measurement followed by an
    /// X measurement of the merged qubit, which is the composition exact under
    /// the stabilizer oracle.
    pub fn bell_merge(&mut self, q1: QubitId, q2: QubitId) -> Result<(), GraphError> {
        let m = self.merging_measure(q1, q2)?;
        self.measure_x(m, None)
    }

    /// Repeater-path protocol: isolate a Bell edge between `a` and `b` along
    /// `path` (the interior vertices, in order from `a` to `b`).
    pub fn repeater_path(
        &mut self,
        a: QubitId,
        b: QubitId,
        path: &[QubitId],
        order: PathOrder,
    ) -> Result<(), GraphError> {
        self.check(a)?;
        self.check(b)?;
        // Validate a simple path a - path[0] - ... - path[k-1] - b.
        let mut chain = Vec::with_capacity(path.len() + 2);
        chain.push(a);
        chain.extend_from_slice(path);
        chain.push(b);
        let distinct: HashSet<QubitId> = chain.iter().copied().collect();
        if distinct.len() != chain.len() {
            return Err(GraphError::InvalidPath("repeated vertex".into()));
        }
        for w in chain.windows(2) {
            if !self.has_edge(w[0], w[1]) {
                return Err(GraphError::InvalidPath(format!(
                    "{:?} and {:?} are not adjacent",
                    w[0], w[1]
                )));
            }
        }

        let z_neighborhood = |g: &GraphState, of: &[QubitId], exclude: &HashSet<QubitId>| {
            let mut out: Vec<QubitId> = Vec::new();
            let mut seen = HashSet::new();
            for &v in of {
                for u in g.neighbors(v) {
                    if !exclude.contains(&u) && seen.insert(u) {
                        out.push(u);
                    }
                }
            }
            out
        };

        match order {
            PathOrder::ZFirst => {
                for u in z_neighborhood(self, &chain, &distinct) {
                    self.measure_z(u)?;
                }
                // after each contraction `a` is adjacent to the next path qubit
                for &p in path {
                    self.measure_x(p, Some(a))?;
                }
            }
            PathOrder::XFirst => {
                for &p in path {
                    let special = if self.has_edge(a, p) { Some(a) } else { None };
                    self.measure_x(p, special)?;
                }
                let keep: HashSet<QubitId> = [a, b].into();
                for u in z_neighborhood(self, &[a, b], &keep) {
                    self.measure_z(u)?;
                }
            }
        }

        if !self.has_edge(a, b) || self.degree(a)? != 1 || self.degree(b)? != 1 {
            return Err(GraphError::InvalidPath(
                "path measurements did not isolate the link".into(),
            ));
        }
        Ok(())
    }

    /// 1D cluster state over the given owners, one qubit each, in chain order.
    pub fn linear_cluster(owners: &[u32]) -> (GraphState, Vec<QubitId>) {
        let mut g = GraphState::new();
        let ids: Vec<QubitId> = owners.iter().map(|&o| g.add_qubit(o)).collect();
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1]).unwrap();
        }
        (g, ids)
    }

    /// Star graph (GHZ up to local basis change): first owner is the center.
    pub fn star(owners: &[u32]) -> (GraphState, Vec<QubitId>) {
        let mut g = GraphState::new();
        let ids: Vec<QubitId> = owners.iter().map(|&o| g.add_qubit(o)).collect();
        for &leaf in &ids[1..] {
            g.add_edge(ids[0], leaf).unwrap();
        }
        (g, ids)
    }

    /// 2D cluster state on a rows x cols grid; owners given row-major.
    pub fn grid_cluster(rows: usize, cols: usize, owners: &[u32]) -> (GraphState, Vec<QubitId>) {
        assert_eq!(owners.len(), rows * cols);
        let mut g = GraphState::new();
        let ids: Vec<QubitId> = owners.iter().map(|&o| g.add_qubit(o)).collect();
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    g.add_edge(ids[r * cols + c], ids[r * cols + c + 1]).unwrap();
                }
                if r + 1 < rows {
                    g.add_edge(ids[r * cols + c], ids[(r + 1) * cols + c]).unwrap();
                }
            }
        }
        (g, ids)
    }

    /// Compact adjacency over alive qubits in ascending id order.
    /// Each row is a bitmask over the compact indices; fits n <= 16.
    pub fn compact_adjacency(&self) -> Vec<u16> {
        let ids: Vec<usize> = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.alive)
            .map(|(i, _)| i)
            .collect();
        assert!(ids.len() <= 16, "compact adjacency limited to 16 qubits");
        let index: HashMap<usize, usize> = ids.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        ids.iter()
            .map(|&i| {
                let mut row = 0u16;
                for j in self.adj[i].iter_ones() {
                    row |= 1 << index[&j];
                }
                row
            })
            .collect()
    }
}

/// Local complementation on a compact adjacency matrix.
fn compact_lc(adj: &[u16], v: usize) -> Vec<u16> {
    let nbrs = adj[v];
    let mut out = adj.to_vec();
    let mut m = nbrs;
    while m != 0 {
        let u = m.trailing_zeros() as usize;
        m &= m - 1;
        out[u] ^= nbrs;
        out[u] &= !(1 << u);
    }
    out
}

/// True iff `g2` is reachable from `g1` by local complementations.
///
/// Compares the adjacency structure over alive qubits aligned by ascending id;
/// BFS over the local-complementation orbit with hashing.
pub fn lc_orbit_equal(g1: &GraphState, g2: &GraphState, max_qubits: usize) -> Result<bool, GraphError> {
    let n1 = g1.num_qubits();
    if n1 > max_qubits {
        return Err(GraphError::SizeLimit(n1, max_qubits));
    }
    if n1 != g2.num_qubits() {
        return Ok(false);
    }
    let start = g1.compact_adjacency();
    let target = g2.compact_adjacency();
    if start == target {
        return Ok(true);
    }
    let mut seen: HashSet<Vec<u16>> = HashSet::new();
    let mut queue = VecDeque::new();
    seen.insert(start.clone());
    queue.push_back(start);
    while let Some(cur) = queue.pop_front() {
        for v in 0..n1 {
            if cur[v] == 0 {
                continue;
            }
            let next = compact_lc(&cur, v);
            if next == target {
                return Ok(true);
            }
            if seen.insert(next.clone()) {
                queue.push_back(next);
            }
        }
    }
    Ok(false)
}

/// JSON wire format: `{nodes: [{id, owner}], edges: [[id, id]]}`.
#[derive(Serialize, Deserialize)]
pub struct GraphStateJson {
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<[u32; 2]>,
}

#[derive(Serialize, Deserialize)]
pub struct NodeJson {
    pub id: u32,
    pub owner: u32,
}

impl From<&GraphState> for GraphStateJson {
    fn from(g: &GraphState) -> Self {
        GraphStateJson {
            nodes: g
                .qubits()
                .map(|q| NodeJson {
                    id: q.0,
                    owner: g.owner(q).unwrap(),
                })
                .collect(),
            edges: g.edges().iter().map(|&(a, b)| [a.0, b.0]).collect(),
        }
    }
}

impl TryFrom<GraphStateJson> for GraphState {
    type Error = GraphError;

    fn try_from(j: GraphStateJson) -> Result<Self, GraphError> {
        let mut g = GraphState::new();
        let max_id = j.nodes.iter().map(|n| n.id).max().map_or(0, |m| m + 1);
        // preserve ids: fill gaps with tombstones
        let mut owners: Vec<Option<u32>> = vec![None; max_id as usize];
        for n in &j.nodes {
            owners[n.id as usize] = Some(n.owner);
        }
        for o in &owners {
            let q = g.add_qubit(o.unwrap_or(0));
            if o.is_none() {
                g.measure_z(q).unwrap();
            }
        }
        for e in &j.edges {
            g.add_edge(QubitId(e[0]), QubitId(e[1]))?;
        }
        Ok(g)
    }
}

impl GraphState {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphStateJson::from(self)).unwrap()
    }

    pub fn from_json(s: &str) -> Result<GraphState, String> {
        let j: GraphStateJson = serde_json::from_str(s).map_err(|e| e.to_string())?;
        GraphState::try_from(j).map_err(|e| e.to_string())
    }

    /// Edge-list text format, one "u v" pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b) in self.edges() {
            out.push_str(&format!("{} {}\n", a.0, b.0));
        }
        out
    }
}
