//! Stabilizer tableau over GF(2), used as an independent oracle for the
//! graph-state transformation rules.
//!
//! Signs are not tracked: every comparison made through this module is up to
//! local Clifford operations, and local Paulis absorb all sign information.

use crate::bits::Bits;
use crate::graph::{GraphState, QubitId};

/// Measurement basis for a single qubit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Basis {
    X,
    Y,
    Z,
}

/// n commuting independent stabilizer generators on n qubits.
///
/// Row i has X-part `x[i]` and Z-part `z[i]`.
#[derive(Clone, Debug)]
pub struct StabilizerTableau {
    n: usize,
    x: Vec<Bits>,
    z: Vec<Bits>,
    /// External label of each tableau column, for callers tracking identity
    /// across qubit removals.
    labels: Vec<QubitId>,
}

impl StabilizerTableau {
    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn labels(&self) -> &[QubitId] {
        &self.labels
    }

    /// Canonical stabilizer rows of a graph state: row a is X_a times Z on
    /// every neighbor of a. Columns follow ascending qubit id.
    pub fn from_graph(g: &GraphState) -> Self {
        let ids: Vec<QubitId> = g.qubits().collect();
        let n = ids.len();
        let index: std::collections::HashMap<QubitId, usize> =
            ids.iter().enumerate().map(|(k, &q)| (q, k)).collect();
        let mut x = vec![Bits::new(n); n];
        let mut z = vec![Bits::new(n); n];
        for (i, &q) in ids.iter().enumerate() {
            x[i].set(i, true);
            for u in g.neighbors(q) {
                z[i].set(index[&u], true);
            }
        }
        StabilizerTableau { n, x, z, labels: ids }
    }

    fn anticommutes(&self, row: usize, px: &Bits, pz: &Bits) -> bool {
        self.x[row].dot(pz) ^ self.z[row].dot(px)
    }

    fn mul_rows(&mut self, dst: usize, src: usize) {
        let (sx, sz) = (self.x[src].clone(), self.z[src].clone());
        self.x[dst].xor_with(&sx);
        self.z[dst].xor_with(&sz);
    }

    /// Projective measurement of an arbitrary Pauli (sign-free).
    /// Returns true if the outcome was random (state changed), false if the
    /// measured operator was already determined.
    pub fn measure_pauli(&mut self, px: &Bits, pz: &Bits) -> bool {
        let anti: Vec<usize> = (0..self.n)
            .filter(|&r| self.anticommutes(r, px, pz))
            .collect();
        match anti.split_first() {
            Some((&r0, rest)) => {
                for &r in rest {
                    self.mul_rows(r, r0);
                }
                self.x[r0] = px.clone();
                self.z[r0] = pz.clone();
                true
            }
            None => false,
        }
    }

    /// Find a subset of rows whose product equals the target Pauli, and make
    /// one row equal to it. Returns the row index, or None if the target is
    /// not in the group (up to sign).
    fn materialize(&mut self, px: &Bits, pz: &Bits) -> Option<usize> {
        // Solve over GF(2) on the concatenated [x|z] row space.
        let width = 2 * self.n;
        let cat = |x: &Bits, z: &Bits| {
            let mut v = Bits::new(width);
            for i in x.iter_ones() {
                v.set(i, true);
            }
            for i in z.iter_ones() {
                v.set(self.n + i, true);
            }
            v
        };
        let mut rows: Vec<(Bits, Bits)> = (0..self.n)
            .map(|r| {
                let mut mask = Bits::new(self.n);
                mask.set(r, true);
                (cat(&self.x[r], &self.z[r]), mask)
            })
            .collect();
        let mut target = (cat(px, pz), Bits::new(self.n));
        let mut pivot_rows: Vec<usize> = Vec::new();
        let mut used = vec![false; rows.len()];
        for col in 0..width {
            let Some(p) = (0..rows.len()).find(|&r| !used[r] && rows[r].0.get(col)) else {
                continue;
            };
            used[p] = true;
            pivot_rows.push(p);
            let (pv, pm) = (rows[p].0.clone(), rows[p].1.clone());
            for r in 0..rows.len() {
                if r != p && rows[r].0.get(col) {
                    rows[r].0.xor_with(&pv);
                    rows[r].1.xor_with(&pm);
                }
            }
            if target.0.get(col) {
                target.0.xor_with(&pv);
                target.1.xor_with(&pm);
            }
        }
        if target.0.any() {
            return None;
        }
        let members: Vec<usize> = target.1.iter_ones().collect();
        let &first = members.first()?;
        for &m in &members[1..] {
            self.mul_rows(first, m);
        }
        debug_assert_eq!(&self.x[first], px);
        debug_assert_eq!(&self.z[first], pz);
        Some(first)
    }

    fn single_pauli(&self, q: usize, basis: Basis) -> (Bits, Bits) {
        let mut px = Bits::new(self.n);
        let mut pz = Bits::new(self.n);
        match basis {
            Basis::X => px.set(q, true),
            Basis::Y => {
                px.set(q, true);
                pz.set(q, true);
            }
            Basis::Z => pz.set(q, true),
        }
        (px, pz)
    }

    /// Remove column `q` and generator row `carrier` once the group contains a
    /// Pauli supported only on q (qubit disentangled).
    fn drop_qubit(&mut self, q: usize, carrier: usize) {
        // Clear remaining support on q: every other row's q-component commutes
        // with the carrier's single-qubit Pauli, so one multiply suffices.
        for r in 0..self.n {
            if r != carrier && (self.x[r].get(q) || self.z[r].get(q)) {
                self.mul_rows(r, carrier);
            }
        }
        let strip = |rows: &mut Vec<Bits>, n: usize| {
            let mut out = Vec::with_capacity(n - 1);
            for (r, row) in rows.iter().enumerate() {
                if r == carrier {
                    continue;
                }
                let mut nb = Bits::new(n - 1);
                for i in row.iter_ones() {
                    match i.cmp(&q) {
                        std::cmp::Ordering::Less => nb.set(i, true),
                        std::cmp::Ordering::Equal => unreachable!("support on dropped qubit"),
                        std::cmp::Ordering::Greater => nb.set(i - 1, true),
                    }
                }
                out.push(nb);
            }
            *rows = out;
        };
        strip(&mut self.x, self.n);
        strip(&mut self.z, self.n);
        self.labels.remove(q);
        self.n -= 1;
    }

    /// Measure qubit `q` in the given basis (+1 branch) and remove it from the
    /// tableau, matching the vertex deletion of the graph rules.
    pub fn measure_and_remove(&mut self, q: usize, basis: Basis) {
        let (px, pz) = self.single_pauli(q, basis);
        self.measure_pauli(&px, &pz);
        let carrier = self
            .materialize(&px, &pz)
            .expect("measured Pauli must be in the post-measurement group");
        self.drop_qubit(q, carrier);
    }

    /// CNOT with control c, target t (oracle-internal bookkeeping only).
    fn apply_cnot(&mut self, c: usize, t: usize) {
        for r in 0..self.n {
            if self.x[r].get(c) {
                self.x[r].flip(t);
            }
            if self.z[r].get(t) {
                self.z[r].flip(c);
            }
        }
    }

    /// Merging measurement oracle: project qubits q1,q2 onto the Z1Z2 = +1
    /// subspace and identify them; q1's column becomes the merged qubit.
    pub fn merging_measure(&mut self, q1: usize, q2: usize, merged_label: QubitId) {
        let mut pz = Bits::new(self.n);
        pz.set(q1, true);
        pz.set(q2, true);
        let px = Bits::new(self.n);
        self.measure_pauli(&px, &pz);
        self.apply_cnot(q1, q2);
        // q2 is now stabilized by Z alone
        let (zx, zz) = self.single_pauli(q2, Basis::Z);
        let carrier = self.materialize(&zx, &zz).expect("merged qubit not disentangled");
        self.drop_qubit(q2, carrier);
        let q1_after = if q1 > q2 { q1 - 1 } else { q1 };
        self.labels[q1_after] = merged_label;
    }

    /// Bell measurement oracle: measure X1X2 and Z1Z2, remove both qubits.
    pub fn bell_measure(&mut self, q1: usize, q2: usize) {
        let mut pz = Bits::new(self.n);
        pz.set(q1, true);
        pz.set(q2, true);
        self.measure_pauli(&Bits::new(self.n), &pz);
        let mut px = Bits::new(self.n);
        px.set(q1, true);
        px.set(q2, true);
        self.measure_pauli(&px, &Bits::new(self.n));
        self.apply_cnot(q1, q2);
        // now X_q1 and Z_q2 are each in the group
        let (xx, xz) = self.single_pauli(q1, Basis::X);
        let c1 = self.materialize(&xx, &xz).expect("q1 not disentangled");
        self.drop_qubit(q1, c1);
        let q2_after = if q2 > q1 { q2 - 1 } else { q2 };
        let (zx, zz) = self.single_pauli(q2_after, Basis::Z);
        let c2 = self.materialize(&zx, &zz).expect("q2 not disentangled");
        self.drop_qubit(q2_after, c2);
    }

    /// Hadamard on one qubit: swap its X and Z columns.
    fn apply_h(&mut self, q: usize) {
        for r in 0..self.n {
            let xv = self.x[r].get(q);
            let zv = self.z[r].get(q);
            self.x[r].set(q, zv);
            self.z[r].set(q, xv);
        }
    }

    /// Phase gate on one qubit: Z-column ^= X-column.
    fn apply_s(&mut self, q: usize) {
        for r in 0..self.n {
            if self.x[r].get(q) {
                self.z[r].flip(q);
            }
        }
    }

    /// Reduce to graph form by local Cliffords and row operations; returns the
    /// graph state (owners supplied per column label by the caller's map).
    pub fn to_graph_state<F: Fn(QubitId) -> u32>(&self, owner_of: F) -> GraphState {
        let mut t = self.clone();
        let n = t.n;
        // Bring the X block to full rank with Hadamards.
        let mut rank = 0;
        let mut pivots = Vec::new();
        for col in 0..n {
            if let Some(p) = (rank..n).find(|&r| t.x[r].get(col)) {
                t.x.swap(rank, p);
                t.z.swap(rank, p);
                for r in 0..n {
                    if r != rank && t.x[r].get(col) {
                        t.mul_rows(r, rank);
                    }
                }
                pivots.push(col);
                rank += 1;
            }
        }
        if rank < n {
            // Rows rank..n are pure-Z and independent on non-pivot columns.
            for r in rank..n {
                let col = (0..n)
                    .find(|&c| !pivots.contains(&c) && t.z[r].get(c))
                    .expect("independent pure-Z row must hit a free column");
                t.apply_h(col);
                pivots.push(col);
            }
            // Re-eliminate from scratch.
            rank = 0;
            for col in 0..n {
                if let Some(p) = (rank..n).find(|&r| t.x[r].get(col)) {
                    t.x.swap(rank, p);
                    t.z.swap(rank, p);
                    for r in 0..n {
                        if r != rank && t.x[r].get(col) {
                            t.mul_rows(r, rank);
                        }
                    }
                    rank += 1;
                }
            }
        }
        assert_eq!(rank, n, "stabilizer X block must reach full rank");
        // X block is now the identity; clear the Z diagonal with S gates.
        for q in 0..n {
            if t.z[q].get(q) {
                t.apply_s(q);
            }
        }
        // Z block is the adjacency matrix (symmetric by commutation).
        let mut g = GraphState::new();
        let ids: Vec<QubitId> = t.labels.iter().map(|&l| g.add_qubit(owner_of(l))).collect();
        for i in 0..n {
            for j in t.z[i].iter_ones() {
                debug_assert!(t.z[j].get(i), "graph-form Z block must be symmetric");
                if j > i {
                    g.add_edge(ids[i], ids[j]).unwrap();
                }
            }
        }
        g
    }
}
