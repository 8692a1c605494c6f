//! Closed-form full-pairwise-connectivity resource states (Bell, switch
//! and GHZ-ladder types) and the unidirectional / butterfly family, each
//! emitted as a [`ResourceState`] with one recipe per supported request.
//!
//! The generalized butterfly is built from independent 6-qubit butterfly
//! units, one per (sender pair, receiver pair) block: a 2×2 cluster over
//! nodes `s1, s2, r2, r1` (cycle `s1–s2–r2–r1–s1`) plus an extra Bell pair
//! between `s1` and `r1`. A unit yields the straight matching
//! `{s1–r1, s2–r2}` by two Z measurements and the crossed matching
//! `{s1–r2, s2–r1}` by three local complementations followed by two
//! node-local merges; single links and idle units follow by additional Z
//! measurements. `n²/16` units of 6 qubits give the `3n²/8` total.

use crate::graph::GraphState;
use crate::merging::{Action, LocalOp, Recipe, ResourceState};
use crate::request::{enumerate_perfect_matchings, Request, RequestSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest request family for which recipes are materialized; bigger
/// networks still build (storage queries), with an empty recipe list.
pub const RECIPE_CAP: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstructionKind {
    BellFull,
    Switch,
    GhzLadder,
    BellUnidirectional,
    GhzUnidirectional,
    Butterfly4,
    ButterflyGeneral,
}

impl ConstructionKind {
    pub const ALL: [ConstructionKind; 7] = [
        ConstructionKind::BellFull,
        ConstructionKind::Switch,
        ConstructionKind::GhzLadder,
        ConstructionKind::BellUnidirectional,
        ConstructionKind::GhzUnidirectional,
        ConstructionKind::Butterfly4,
        ConstructionKind::ButterflyGeneral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ConstructionKind::BellFull => "bell_full",
            ConstructionKind::Switch => "switch",
            ConstructionKind::GhzLadder => "ghz_ladder",
            ConstructionKind::BellUnidirectional => "bell_unidirectional",
            ConstructionKind::GhzUnidirectional => "ghz_unidirectional",
            ConstructionKind::Butterfly4 => "butterfly4",
            ConstructionKind::ButterflyGeneral => "butterfly_general",
        }
    }
}

impl std::str::FromStr for ConstructionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ConstructionKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown construction kind `{s}`"))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConstructionError {
    #[error("{0} requires an even number of nodes ≥ 4, got {1}")]
    NeedsEven(&'static str, usize),
    #[error("butterfly4 is defined for n = 4 only, got {0}")]
    NeedsFour(usize),
    #[error("butterfly_general requires n divisible by 4, got {0}")]
    NeedsMultipleOfFour(usize),
}

fn check_n(kind: ConstructionKind, n: usize) -> Result<(), ConstructionError> {
    match kind {
        ConstructionKind::Butterfly4 if n != 4 => Err(ConstructionError::NeedsFour(n)),
        ConstructionKind::Butterfly4 => Ok(()),
        ConstructionKind::ButterflyGeneral if n % 4 != 0 || n < 4 => {
            Err(ConstructionError::NeedsMultipleOfFour(n))
        }
        ConstructionKind::ButterflyGeneral => Ok(()),
        _ if n < 4 || n % 2 != 0 => Err(ConstructionError::NeedsEven(kind.name(), n)),
        _ => Ok(()),
    }
}

/// Closed-form stored-qubit count; equals `build(kind, n).storage`.
pub fn storage_formula(kind: ConstructionKind, n: usize) -> Result<usize, ConstructionError> {
    check_n(kind, n)?;
    Ok(match kind {
        ConstructionKind::BellFull => n * (n - 1),
        ConstructionKind::Switch => 2 * (n - 1),
        ConstructionKind::GhzLadder => n * (3 * n + 2) / 8,
        ConstructionKind::BellUnidirectional => n * n / 2,
        ConstructionKind::GhzUnidirectional => (n / 2) * (n / 2 + 1),
        ConstructionKind::Butterfly4 => 6,
        ConstructionKind::ButterflyGeneral => 3 * n * n / 8,
    })
}

/// The request family the construction guarantees: every perfect matching
/// for the full-connectivity kinds, every sender→receiver bijection for
/// the unidirectional kinds. Empty above [`RECIPE_CAP`] families.
pub fn request_family(kind: ConstructionKind, n: usize) -> Result<Vec<Request>, ConstructionError> {
    check_n(kind, n)?;
    let unidirectional = matches!(
        kind,
        ConstructionKind::BellUnidirectional
            | ConstructionKind::GhzUnidirectional
            | ConstructionKind::Butterfly4
            | ConstructionKind::ButterflyGeneral
    );
    if unidirectional {
        let h = n / 2;
        let count = (1..=h).try_fold(1usize, |acc, k| {
            acc.checked_mul(k).filter(|&c| c <= RECIPE_CAP)
        });
        let Some(count) = count else {
            return Ok(Vec::new());
        };
        let receivers: Vec<u32> = (h as u32..n as u32).collect();
        let mut out = Vec::with_capacity(count);
        let mut cur = Vec::with_capacity(h);
        permutations(&receivers, &mut cur, &mut |perm| {
            let links: Vec<(u32, u32)> = perm
                .iter()
                .enumerate()
                .map(|(s, &r)| (s as u32, r))
                .collect();
            out.push(Request::new(&links, None).unwrap());
        });
        Ok(out)
    } else {
        let count = (1..n).step_by(2).try_fold(1usize, |acc, k| {
            acc.checked_mul(k).filter(|&c| c <= RECIPE_CAP)
        });
        if count.is_none() {
            return Ok(Vec::new());
        }
        Ok(enumerate_perfect_matchings(n))
    }
}

/// Lexicographic permutations of `pool`, appended to `cur`.
fn permutations(pool: &[u32], cur: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
    if pool.is_empty() {
        f(cur);
        return;
    }
    for (i, &v) in pool.iter().enumerate() {
        let mut rest = pool.to_vec();
        rest.remove(i);
        cur.push(v);
        permutations(&rest, cur, f);
        cur.pop();
    }
}

/// Build the construction for `n` nodes, with one recipe per request of
/// [`request_family`] (in the same order).
pub fn build(kind: ConstructionKind, n: usize) -> Result<ResourceState, ConstructionError> {
    check_n(kind, n)?;
    let requests = request_family(kind, n)?;
    let res = match kind {
        ConstructionKind::BellFull => build_bell_full(n, &requests),
        ConstructionKind::Switch => build_switch(n, &requests),
        ConstructionKind::GhzLadder => build_ghz_ladder(n, &requests),
        ConstructionKind::BellUnidirectional => build_bell_uni(n, &requests),
        ConstructionKind::GhzUnidirectional => build_ghz_uni(n, &requests),
        ConstructionKind::Butterfly4 | ConstructionKind::ButterflyGeneral => {
            build_butterfly(n, &requests)
        }
    };
    debug_assert_eq!(res.storage, storage_formula(kind, n).unwrap());
    Ok(res)
}

/// The request set matching `build`'s recipes, for verification drivers.
pub fn request_set(kind: ConstructionKind, n: usize) -> Result<RequestSet, ConstructionError> {
    Ok(RequestSet::new(n, request_family(kind, n)?).expect("construction families are valid"))
}

fn bell_state(a: u32, b: u32) -> GraphState {
    let mut g = GraphState::new();
    let qa = g.add_qubit(a);
    let qb = g.add_qubit(b);
    g.add_edge(qa, qb).unwrap();
    g
}

fn targets_of(r: &Request) -> Vec<(u32, u32)> {
    r.links().to_vec()
}

/// One Bell pair per node pair; each request keeps its pairs and discards
/// the rest.
fn build_bell_full(n: usize, requests: &[Request]) -> ResourceState {
    let pairs: Vec<(u32, u32)> = (0..n as u32)
        .flat_map(|i| (i + 1..n as u32).map(move |j| (i, j)))
        .collect();
    let states: Vec<GraphState> = pairs.iter().map(|&(a, b)| bell_state(a, b)).collect();
    let recipes = requests
        .iter()
        .map(|r| {
            let actions = pairs
                .iter()
                .enumerate()
                .filter(|(_, p)| !r.contains_link(p.0, p.1))
                .flat_map(|(s, _)| {
                    [
                        Action { state: s, op: LocalOp::Z(0) },
                        Action { state: s, op: LocalOp::Z(1) },
                    ]
                })
                .collect();
            Recipe { targets: targets_of(r), actions }
        })
        .collect();
    ResourceState::from_parts(n, states, recipes, Some("bell_full".into()))
}

/// `n−1` Bell pairs, one qubit of each at hub node 0: qubit `2j` is the
/// hub half and `2j+1` sits at node `j+1`. Hub-local Bell measurements
/// splice any non-hub pair; the first matching's recipe uses `BellMerge`,
/// the others the equivalent `Merge + LC + Z` sequence of the paper's
/// switch analysis.
fn build_switch(n: usize, requests: &[Request]) -> ResourceState {
    let mut g = GraphState::new();
    for j in 1..n as u32 {
        let h = g.add_qubit(0);
        let v = g.add_qubit(j);
        g.add_edge(h, v).unwrap();
    }
    let hub_qubit = |v: u32| 2 * (v - 1);
    let recipes = requests
        .iter()
        .enumerate()
        .map(|(idx, r)| {
            let mut actions = Vec::new();
            for &(a, b) in r.links() {
                if a == 0 {
                    continue; // the hub's own Bell pair survives untouched
                }
                let (ha, hb) = (hub_qubit(a), hub_qubit(b));
                if idx == 0 {
                    actions.push(Action { state: 0, op: LocalOp::BellMerge(ha, hb) });
                } else {
                    actions.push(Action { state: 0, op: LocalOp::Merge(ha, hb) });
                    actions.push(Action { state: 0, op: LocalOp::Lc(ha) });
                    actions.push(Action { state: 0, op: LocalOp::Z(ha) });
                }
            }
            Recipe { targets: targets_of(r), actions }
        })
        .collect();
    ResourceState::from_parts(n, vec![g], recipes, Some("switch".into()))
}

/// `n/2` nested GHZ layers stored as stars: layer `i` spans nodes
/// `i..n−1` with the star centered at node `i`. A matching's pairs are
/// assigned greedily (ascending smaller endpoint, smallest still-free
/// layer that contains both nodes); each layer then serves its pair with
/// Z measurements plus at most one X at the center.
fn build_ghz_ladder(n: usize, requests: &[Request]) -> ResourceState {
    let layers = n / 2;
    let states: Vec<GraphState> = (0..layers)
        .map(|i| {
            let owners: Vec<u32> = (i as u32..n as u32).collect();
            GraphState::star(&owners).0
        })
        .collect();
    let recipes = requests
        .iter()
        .map(|r| {
            // pairs ascend by smaller endpoint because links are canonical-sorted
            let mut used = vec![false; layers];
            let mut assignment: Vec<(usize, (u32, u32))> = Vec::new();
            for &(a, b) in r.links() {
                let top = (a as usize).min(layers - 1);
                let layer = (0..=top)
                    .rev()
                    .find(|&i| !used[i])
                    .expect("a free layer always exists for a matching");
                used[layer] = true;
                assignment.push((layer, (a, b)));
            }
            let mut actions = Vec::new();
            for (layer, state) in states.iter().enumerate() {
                let pair = assignment.iter().find(|&&(l, _)| l == layer).map(|&(_, p)| p);
                // local id of node v in layer `layer`: center 0 = node layer,
                // leaves 1.. for nodes layer+1..
                let id_of = |v: u32| v - layer as u32;
                // Z the unwanted leaves first; when both kept qubits are
                // leaves, an X on the then-degree-2 center splices them
                let mut center_x = false;
                for q in state.qubits() {
                    let owner = state.owner(q).unwrap();
                    let keep = match pair {
                        Some((a, b)) => owner == a || owner == b,
                        None => false,
                    };
                    if keep {
                        continue;
                    }
                    if q.0 == 0 && pair.is_some() {
                        center_x = true;
                    } else {
                        actions.push(Action { state: layer, op: LocalOp::Z(id_of(owner)) });
                    }
                }
                if center_x {
                    actions.push(Action { state: layer, op: LocalOp::X(0) });
                }
            }
            Recipe { targets: targets_of(r), actions }
        })
        .collect();
    ResourceState::from_parts(n, states, recipes, Some("ghz_ladder".into()))
}

/// One Bell pair per (sender, receiver) pair.
fn build_bell_uni(n: usize, requests: &[Request]) -> ResourceState {
    let h = n as u32 / 2;
    let pairs: Vec<(u32, u32)> = (0..h).flat_map(|s| (h..n as u32).map(move |r| (s, r))).collect();
    let states: Vec<GraphState> = pairs.iter().map(|&(a, b)| bell_state(a, b)).collect();
    let recipes = requests
        .iter()
        .map(|r| {
            let actions = pairs
                .iter()
                .enumerate()
                .filter(|(_, p)| !r.contains_link(p.0, p.1))
                .flat_map(|(s, _)| {
                    [
                        Action { state: s, op: LocalOp::Z(0) },
                        Action { state: s, op: LocalOp::Z(1) },
                    ]
                })
                .collect();
            Recipe { targets: targets_of(r), actions }
        })
        .collect();
    ResourceState::from_parts(n, states, recipes, Some("bell_unidirectional".into()))
}

/// One star per sender: center at the sender, a leaf per receiver.
fn build_ghz_uni(n: usize, requests: &[Request]) -> ResourceState {
    let h = n as u32 / 2;
    let states: Vec<GraphState> = (0..h)
        .map(|s| {
            let owners: Vec<u32> = std::iter::once(s).chain(h..n as u32).collect();
            GraphState::star(&owners).0
        })
        .collect();
    let recipes = requests
        .iter()
        .map(|r| {
            let mut actions = Vec::new();
            for (si, _) in states.iter().enumerate() {
                let (_, partner) = r.links()[si]; // link si is (si, partner)
                for leaf in h..n as u32 {
                    if leaf != partner {
                        actions.push(Action {
                            state: si,
                            op: LocalOp::Z(1 + leaf - h),
                        });
                    }
                }
            }
            Recipe { targets: targets_of(r), actions }
        })
        .collect();
    ResourceState::from_parts(n, states, recipes, Some("ghz_unidirectional".into()))
}

/// A butterfly unit's six qubits: 2×2 cluster (cycle `s1–s2–r2–r1`) plus a
/// Bell pair between `s1` and `r1`. Local ids: 0=s1 cluster, 1=s2, 2=r2,
/// 3=r1, 4=s1 bell, 5=r1 bell.
fn butterfly_unit(s1: u32, s2: u32, r1: u32, r2: u32) -> GraphState {
    let mut g = GraphState::new();
    let owners = [s1, s2, r2, r1];
    let q: Vec<_> = owners.iter().map(|&o| g.add_qubit(o)).collect();
    for i in 0..4 {
        g.add_edge(q[i], q[(i + 1) % 4]).unwrap();
    }
    let b1 = g.add_qubit(s1);
    let b2 = g.add_qubit(r1);
    g.add_edge(b1, b2).unwrap();
    g
}

/// Which of a unit's endpoints a request uses.
enum UnitUse {
    Straight,          // {s1–r1, s2–r2}
    Crossed,           // {s1–r2, s2–r1}
    Single(bool, bool), // (sender s2?, receiver r2?) for one link
    Idle,
}

fn unit_actions(state: usize, usage: &UnitUse) -> Vec<Action> {
    let a = |op| Action { state, op };
    match usage {
        UnitUse::Straight => vec![a(LocalOp::Z(0)), a(LocalOp::Z(3))],
        UnitUse::Crossed => vec![
            a(LocalOp::Lc(0)),
            a(LocalOp::Lc(3)),
            a(LocalOp::Lc(0)),
            a(LocalOp::Merge(0, 4)),
            a(LocalOp::Merge(3, 5)),
        ],
        UnitUse::Single(false, false) => {
            // s1–r1: the straight recipe, then drop the s2–r2 link
            vec![a(LocalOp::Z(0)), a(LocalOp::Z(3)), a(LocalOp::Z(1)), a(LocalOp::Z(2))]
        }
        UnitUse::Single(true, true) => {
            // s2–r2: straight, then drop the Bell pair
            vec![a(LocalOp::Z(0)), a(LocalOp::Z(3)), a(LocalOp::Z(4)), a(LocalOp::Z(5))]
        }
        UnitUse::Single(false, true) => {
            // s1–r2: crossed, then drop the s2–r1 link (merge aliases: the
            // s2 endpoint is qubit 1, the r1 endpoint the merge output `3`)
            let mut v = unit_actions(state, &UnitUse::Crossed);
            v.extend([a(LocalOp::Z(1)), a(LocalOp::Z(3))]);
            v
        }
        UnitUse::Single(true, false) => {
            // s2–r1: crossed, then drop the s1–r2 link
            let mut v = unit_actions(state, &UnitUse::Crossed);
            v.extend([a(LocalOp::Z(0)), a(LocalOp::Z(2))]);
            v
        }
        UnitUse::Idle => (0..6).map(|q| a(LocalOp::Z(q))).collect(),
    }
}

fn build_butterfly(n: usize, requests: &[Request]) -> ResourceState {
    let h = n as u32 / 2;
    let blocks = (n / 4) as u32;
    // unit (a, b): senders 2a, 2a+1 with receivers h+2b, h+2b+1
    let mut states = Vec::new();
    for a in 0..blocks {
        for b in 0..blocks {
            states.push(butterfly_unit(2 * a, 2 * a + 1, h + 2 * b, h + 2 * b + 1));
        }
    }
    let recipes = requests
        .iter()
        .map(|r| {
            let mut actions = Vec::new();
            for a in 0..blocks {
                for b in 0..blocks {
                    let state = (a * blocks + b) as usize;
                    let (s1, s2) = (2 * a, 2 * a + 1);
                    let (r1, r2) = (h + 2 * b, h + 2 * b + 1);
                    let in_block = |s: u32, rv: u32| r.contains_link(s, rv);
                    let usage = if in_block(s1, r1) && in_block(s2, r2) {
                        UnitUse::Straight
                    } else if in_block(s1, r2) && in_block(s2, r1) {
                        UnitUse::Crossed
                    } else if in_block(s1, r1) {
                        UnitUse::Single(false, false)
                    } else if in_block(s2, r2) {
                        UnitUse::Single(true, true)
                    } else if in_block(s1, r2) {
                        UnitUse::Single(false, true)
                    } else if in_block(s2, r1) {
                        UnitUse::Single(true, false)
                    } else {
                        UnitUse::Idle
                    };
                    actions.extend(unit_actions(state, &usage));
                }
            }
            Recipe { targets: targets_of(r), actions }
        })
        .collect();
    let kind = if n == 4 { "butterfly4" } else { "butterfly_general" };
    ResourceState::from_parts(n, states, recipes, Some(kind.into()))
}
