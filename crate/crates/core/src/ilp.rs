//! Matrix form of the deployment/assignment integer program.
//!
//! The variable vector is `v = [x, y, w]`: service deployment per node, then
//! layer deployment per node, then task assignment per user (cloud last).
//! Constraints split into one equality block `A1 v = g1` (each task assigned
//! once) and four inequality blocks stacked in `A2 v <= g2`:
//!
//! | block      | rows            | row content                                   |
//! |------------|-----------------|-----------------------------------------------|
//! | storage    | `N+1`           | `sum_l K_l y[n,l] <= S_n`                      |
//! | layers     | `(N+1) * I * L` | `H[i,l] x[n,i] - y[n,l] <= 0`                  |
//! | gating     | `U * (N+1)`     | `w[u,n] - x[n,M_u] <= 0` (`w[u,n] <= 0` if unreachable) |
//! | compute    | `N+1`           | `sum_u F_{M_u} w[u,m] <= C_m`                  |

use std::fmt::Write as _;
use std::ops::Range;

use crate::latency::LatencyTable;
use crate::model::{self, Constraint, Scenario, Solution};

/// Position of each decision variable inside `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VariableLayout {
    pub nodes: usize,
    pub services: usize,
    pub layers: usize,
    pub users: usize,
    pub targets: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variable {
    X { node: usize, service: usize },
    Y { node: usize, layer: usize },
    W { user: usize, target: usize },
}

impl VariableLayout {
    pub fn for_scenario(s: &Scenario) -> Self {
        Self {
            nodes: s.num_nodes(),
            services: s.num_services(),
            layers: s.num_layers(),
            users: s.num_users(),
            targets: s.num_targets(),
        }
    }

    pub fn q(&self) -> usize {
        self.nodes * self.services + self.nodes * self.layers + self.users * self.targets
    }

    pub fn x(&self, n: usize, i: usize) -> usize {
        n * self.services + i
    }

    pub fn y(&self, n: usize, l: usize) -> usize {
        self.nodes * self.services + n * self.layers + l
    }

    pub fn w(&self, u: usize, m: usize) -> usize {
        self.nodes * (self.services + self.layers) + u * self.targets + m
    }

    pub fn x_range(&self) -> Range<usize> {
        0..self.nodes * self.services
    }

    pub fn y_range(&self) -> Range<usize> {
        let start = self.nodes * self.services;
        start..start + self.nodes * self.layers
    }

    pub fn w_range(&self) -> Range<usize> {
        let start = self.nodes * (self.services + self.layers);
        start..start + self.users * self.targets
    }

    pub fn decode(&self, idx: usize) -> Variable {
        let xs = self.nodes * self.services;
        let ys = self.nodes * self.layers;
        if idx < xs {
            Variable::X { node: idx / self.services, service: idx % self.services }
        } else if idx < xs + ys {
            let k = idx - xs;
            Variable::Y { node: k / self.layers, layer: k % self.layers }
        } else {
            let k = idx - xs - ys;
            Variable::W { user: k / self.targets, target: k % self.targets }
        }
    }

    /// Packs a binary solution into `v`.
    pub fn encode(&self, sol: &Solution) -> Vec<f64> {
        let mut v = vec![0.0; self.q()];
        let one = |b: bool| if b { 1.0 } else { 0.0 };
        for n in 0..self.nodes {
            for i in 0..self.services {
                v[self.x(n, i)] = one(sol.x[n][i]);
            }
            for l in 0..self.layers {
                v[self.y(n, l)] = one(sol.y[n][l]);
            }
        }
        for u in 0..self.users {
            for m in 0..self.targets {
                v[self.w(u, m)] = one(sol.w[u][m]);
            }
        }
        v
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    fn with_cols(cols: usize) -> Self {
        Self { rows: 0, cols, indptr: vec![0], indices: Vec::new(), values: Vec::new() }
    }

    fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, f64)>) {
        for (c, v) in entries {
            debug_assert!(c < self.cols);
            self.indices.push(c);
            self.values.push(v);
        }
        self.indptr.push(self.indices.len());
        self.rows += 1;
    }

    /// Builds a matrix from dense rows, keeping the non-zero entries.
    pub fn from_dense(rows: &[Vec<f64>], cols: usize) -> Self {
        let mut m = Self::with_cols(cols);
        for row in rows {
            assert_eq!(row.len(), cols, "row length must equal the column count");
            m.push_row(row.iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(c, &a)| (c, a)));
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    /// `out = A v`.
    pub fn mul_vec(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let span = self.indptr[r]..self.indptr[r + 1];
            *o = self.indices[span.clone()]
                .iter()
                .zip(&self.values[span])
                .map(|(&c, &a)| a * v[c])
                .sum();
        }
    }

    /// `out += A^T v`.
    pub fn mul_t_vec_add(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.cols);
        for (r, &vr) in v.iter().enumerate().take(self.rows) {
            if vr == 0.0 {
                continue;
            }
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[self.indices[k]] += self.values[k] * vr;
            }
        }
    }

    /// `out += scale · AᵀA v` in one pass over the rows.
    pub fn gram_mul_add(&self, v: &[f64], scale: f64, out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.cols);
        for r in 0..self.rows {
            let span = self.indptr[r]..self.indptr[r + 1];
            let idx = &self.indices[span.clone()];
            let val = &self.values[span];
            let dot: f64 = idx.iter().zip(val).map(|(&c, &a)| a * v[c]).sum();
            if dot == 0.0 {
                continue;
            }
            let d = scale * dot;
            for (&c, &a) in idx.iter().zip(val) {
                out[c] += a * d;
            }
        }
    }

    /// Splits off the rows with a single stored entry, whose contribution to
    /// `AᵀA` is purely diagonal. Returns that diagonal and the remaining rows.
    pub fn split_single_entry_rows(&self) -> (Vec<f64>, CsrMatrix) {
        let mut diag = vec![0.0; self.cols];
        let mut rest = Self::with_cols(self.cols);
        for r in 0..self.rows {
            let span = self.indptr[r]..self.indptr[r + 1];
            if span.len() == 1 {
                let k = span.start;
                diag[self.indices[k]] += self.values[k] * self.values[k];
            } else {
                rest.push_row(self.indices[span.clone()].iter().copied().zip(self.values[span].iter().copied()));
            }
        }
        (diag, rest)
    }

    /// Squared 2-norm of every column.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.cols];
        for (&c, &a) in self.indices.iter().zip(&self.values) {
            acc[c] += a * a;
        }
        acc
    }

    /// Returns a copy with row `r` multiplied by `scale[r]`.
    pub fn scale_rows(&self, scale: &[f64]) -> Self {
        let mut out = self.clone();
        for (r, &s) in scale.iter().enumerate().take(self.rows) {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.values[k] *= s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.cols]; self.rows];
        for (r, row) in d.iter_mut().enumerate() {
            for (c, a) in self.row(r) {
                row[c] += a;
            }
        }
        d
    }
}

/// Row ranges of the four inequality blocks inside `A2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowBlocks {
    pub storage: Range<usize>,
    pub layers: Range<usize>,
    pub gating: Range<usize>,
    pub compute: Range<usize>,
}

impl RowBlocks {
    fn new(nodes: usize, services: usize, layers: usize, users: usize) -> Self {
        let storage = 0..nodes;
        let layers = storage.end..storage.end + nodes * services * layers;
        let gating = layers.end..layers.end + users * nodes;
        let compute = gating.end..gating.end + nodes;
        Self { storage, layers, gating, compute }
    }

    /// Which model constraint a row of `A2` encodes.
    pub fn constraint_of(&self, row: usize) -> Constraint {
        if self.storage.contains(&row) {
            Constraint::Storage
        } else if self.layers.contains(&row) {
            Constraint::LayerDependency
        } else if self.gating.contains(&row) {
            Constraint::DeploymentGating
        } else {
            Constraint::ComputeCapacity
        }
    }

    /// Sizes of the slack sub-vectors, in block order.
    pub fn slack_dims(&self) -> [usize; 4] {
        [self.storage.len(), self.layers.len(), self.gating.len(), self.compute.len()]
    }
}

#[derive(Debug, Clone)]
pub struct IlpInstance {
    pub layout: VariableLayout,
    /// Latency cost on assignment entries, zero on deployment entries.
    pub f: Vec<f64>,
    pub a1: CsrMatrix,
    pub g1: Vec<f64>,
    pub a2: CsrMatrix,
    pub g2: Vec<f64>,
    pub blocks: RowBlocks,
    /// Assignment entries forced to zero because the target is unreachable.
    pub unreachable: Vec<usize>,
}

impl IlpInstance {
    pub fn q(&self) -> usize {
        self.layout.q()
    }

    pub fn objective(&self, v: &[f64]) -> f64 {
        self.f.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Assembles the sparse matrix form for a scenario and its latency table.
pub fn build_ilp(s: &Scenario, lt: &LatencyTable) -> IlpInstance {
    let layout = VariableLayout::for_scenario(s);
    let q = layout.q();
    let (nodes, services, layers, users, targets) =
        (layout.nodes, layout.services, layout.layers, layout.users, layout.targets);
    let cat = &s.catalog;

    let mut f = vec![0.0; q];
    let mut unreachable = Vec::new();
    for u in 0..users {
        for m in 0..targets {
            match lt.xi(u, m) {
                Some(t) => f[layout.w(u, m)] = t,
                None => unreachable.push(layout.w(u, m)),
            }
        }
    }

    let mut a1 = CsrMatrix::with_cols(q);
    for u in 0..users {
        a1.push_row((0..targets).map(|m| (layout.w(u, m), 1.0)));
    }
    let g1 = vec![1.0; users];

    let blocks = RowBlocks::new(nodes, services, layers, users);
    let mut a2 = CsrMatrix::with_cols(q);
    let mut g2 = Vec::with_capacity(blocks.compute.end);

    for n in 0..nodes {
        a2.push_row((0..layers).map(|l| (layout.y(n, l), cat.layer_sizes[l])));
        g2.push(s.nodes[n].storage_capacity);
    }
    for n in 0..nodes {
        for i in 0..services {
            for l in 0..layers {
                let x_term = cat.membership[i][l].then(|| (layout.x(n, i), 1.0));
                a2.push_row(x_term.into_iter().chain(std::iter::once((layout.y(n, l), -1.0))));
                g2.push(0.0);
            }
        }
    }
    for u in 0..users {
        let service = s.users[u].requested_service;
        for n in 0..nodes {
            let w = (layout.w(u, n), 1.0);
            if lt.xi(u, n).is_some() {
                a2.push_row([(layout.x(n, service), -1.0), w]);
            } else {
                a2.push_row([w]);
            }
            g2.push(0.0);
        }
    }
    for m in 0..nodes {
        a2.push_row((0..users).map(|u| (layout.w(u, m), s.demand_of(u))));
        g2.push(s.nodes[m].compute_capacity);
    }
    debug_assert_eq!(a2.rows(), blocks.compute.end);

    IlpInstance { layout, f, a1, g1, a2, g2, blocks, unreachable }
}

/// Outcome of comparing the matrix form against the direct constraint checks
/// for one binary point.
#[derive(Debug, Clone, PartialEq)]
pub struct Agreement {
    pub matrix_feasible: bool,
    pub model_feasible: bool,
    /// First violated equality row of `A1`.
    pub violated_equality: Option<usize>,
    /// First violated row of `A2`.
    pub violated_inequality: Option<usize>,
}

impl Agreement {
    pub fn agrees(&self) -> bool {
        self.matrix_feasible == self.model_feasible
    }
}

/// Evaluates `A1 v = g1, A2 v <= g2` for a binary solution and compares it
/// with the direct checks of the constraints the matrix form encodes
/// (storage, layer dependency, single assignment, gating, compute) plus the
/// reachability of every assigned target. Access decisions are ignored.
pub fn binary_check_equivalence(s: &Scenario, sol: &Solution, inst: &IlpInstance) -> crate::Result<Agreement> {
    let report = model::check_feasible(s, sol)?;
    let v = inst.layout.encode(sol);
    let tol = 1e-9;

    let mut eq = vec![0.0; inst.a1.rows()];
    inst.a1.mul_vec(&v, &mut eq);
    let violated_equality = eq.iter().zip(&inst.g1).position(|(a, g)| (a - g).abs() > tol);

    let mut ineq = vec![0.0; inst.a2.rows()];
    inst.a2.mul_vec(&v, &mut ineq);
    let violated_inequality = ineq
        .iter()
        .zip(&inst.g2)
        .position(|(a, g)| *a > g + tol * g.abs().max(1.0));

    let encoded = [
        Constraint::Storage,
        Constraint::LayerDependency,
        Constraint::SingleAssignment,
        Constraint::DeploymentGating,
        Constraint::ComputeCapacity,
    ];
    let model_feasible = encoded.iter().all(|&c| report.passes(c))
        && model::unroutable_assignment(s, &sol.w).is_none();
    Ok(Agreement {
        matrix_feasible: violated_equality.is_none() && violated_inequality.is_none(),
        model_feasible,
        violated_equality,
        violated_inequality,
    })
}

fn var_name(layout: &VariableLayout, idx: usize) -> String {
    match layout.decode(idx) {
        Variable::X { node, service } => format!("x_{node}_{service}"),
        Variable::Y { node, layer } => format!("y_{node}_{layer}"),
        Variable::W { user, target } => format!("w_{user}_{target}"),
    }
}

fn write_terms(out: &mut String, layout: &VariableLayout, terms: impl Iterator<Item = (usize, f64)>) {
    let mut count = 0;
    for (c, a) in terms {
        if a == 0.0 {
            continue;
        }
        let sign = if a < 0.0 { "-" } else { "+" };
        if count > 0 && count % 8 == 0 {
            out.push_str("\n   ");
        }
        let _ = write!(out, " {sign} {} {}", a.abs(), var_name(layout, c));
        count += 1;
    }
    if count == 0 {
        let _ = write!(out, " 0 {}", var_name(layout, 0));
    }
}

/// Exports the instance in CPLEX LP text format for external solvers.
pub fn write_lp(inst: &IlpInstance) -> String {
    let layout = &inst.layout;
    let mut out = String::from("\\ layer-aware edge placement ILP\nMinimize\n obj:");
    write_terms(&mut out, layout, inst.f.iter().copied().enumerate());
    out.push_str("\nSubject To\n");
    for r in 0..inst.a1.rows() {
        let _ = write!(out, " assign_{r}:");
        write_terms(&mut out, layout, inst.a1.row(r));
        let _ = writeln!(out, " = {}", inst.g1[r]);
    }
    for r in 0..inst.a2.rows() {
        let tag = match inst.blocks.constraint_of(r) {
            Constraint::Storage => "storage",
            Constraint::LayerDependency => "layer",
            Constraint::DeploymentGating => "gate",
            _ => "compute",
        };
        let _ = write!(out, " {tag}_{r}:");
        write_terms(&mut out, layout, inst.a2.row(r));
        let _ = writeln!(out, " <= {}", inst.g2[r]);
    }
    out.push_str("Binary\n");
    for c in 0..inst.q() {
        let _ = writeln!(out, " {}", var_name(layout, c));
    }
    out.push_str("End\n");
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::scenario::{generate, GenerationConfig};
    use crate::testkit::Hand;

    fn tiny() -> Scenario {
        Hand::new(&[40.0], &[&[0]], &[0.5]).scn(100.0, 1.0).mcn(100.0, 1.0).user(0, 6.0, &[(0, 6.0), (1, 6.0)]).build()
    }

    fn mul(a: &CsrMatrix, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; a.rows()];
        a.mul_vec(v, &mut out);
        out
    }

    #[test]
    fn smallest_instance_dimensions() {
        let s = tiny();
        let inst = build_ilp(&s, &LatencyTable::build(&s));
        assert_eq!(inst.q(), 7);
        assert_eq!((inst.a1.rows(), inst.a1.cols()), (1, 7));
        assert_eq!((inst.a2.rows(), inst.a2.cols()), (8, 7));
        assert_eq!(inst.blocks.slack_dims(), [2, 2, 2, 2]);
        // Cost only on assignment entries.
        assert!(inst.f[..4].iter().all(|&c| c == 0.0));
        assert!(inst.f[4..].iter().all(|&c| c > 0.0));
    }

    #[test]
    fn zero_vector_satisfies_inequalities_only() {
        let s = tiny();
        let inst = build_ilp(&s, &LatencyTable::build(&s));
        let v = vec![0.0; inst.q()];
        assert!(mul(&inst.a2, &v).iter().zip(&inst.g2).all(|(a, g)| a <= g));
        assert_ne!(mul(&inst.a1, &v), inst.g1);
    }

    #[test]
    fn layout_round_trips_indices() {
        let layout = VariableLayout { nodes: 3, services: 2, layers: 5, users: 4, targets: 4 };
        assert_eq!(layout.q(), 6 + 15 + 16);
        let mut seen = vec![false; layout.q()];
        for n in 0..3 {
            for i in 0..2 {
                assert_eq!(layout.decode(layout.x(n, i)), Variable::X { node: n, service: i });
                seen[layout.x(n, i)] = true;
            }
            for l in 0..5 {
                assert_eq!(layout.decode(layout.y(n, l)), Variable::Y { node: n, layer: l });
                seen[layout.y(n, l)] = true;
            }
        }
        for u in 0..4 {
            for m in 0..4 {
                assert_eq!(layout.decode(layout.w(u, m)), Variable::W { user: u, target: m });
                seen[layout.w(u, m)] = true;
            }
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn csr_products_match_dense() {
        let dense = vec![vec![1.0, 0.0, -2.0], vec![0.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![4.0, 5.0, 6.0]];
        let a = CsrMatrix::from_dense(&dense, 3);
        assert_eq!(a.nnz(), 6);
        assert_eq!(a.to_dense(), dense);
        let v = [1.0, 2.0, 3.0];
        assert_eq!(mul(&a, &v), vec![-5.0, 0.0, 6.0, 32.0]);

        let mut t = vec![1.0; 3];
        a.mul_t_vec_add(&[1.0, 1.0, 1.0, 1.0], &mut t);
        assert_eq!(t, vec![6.0, 9.0, 5.0]);

        // AᵀA v with AᵀA = [[17,20,22],[20,34,30],[22,30,40]].
        let mut g = vec![0.0; 3];
        a.gram_mul_add(&v, 0.5, &mut g);
        assert_eq!(g, vec![0.5 * 123.0, 0.5 * 178.0, 0.5 * 202.0]);

        assert_eq!(a.column_sq_norms(), vec![17.0, 34.0, 40.0]);
        let scaled = a.scale_rows(&[2.0, 1.0, 1.0, 0.5]);
        assert_eq!(scaled.to_dense()[0], vec![2.0, 0.0, -4.0]);
        assert_eq!(scaled.to_dense()[3], vec![2.0, 2.5, 3.0]);
    }

    #[test]
    fn single_entry_rows_split_off_as_diagonal() {
        let dense = vec![vec![0.0, -1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.0]];
        let a = CsrMatrix::from_dense(&dense, 3);
        let (diag, rest) = a.split_single_entry_rows();
        assert_eq!(diag, vec![0.0, 5.0, 0.0]);
        // Empty rows stay with the remainder; they contribute nothing.
        assert_eq!(rest.to_dense(), vec![vec![1.0, 1.0, 0.0], vec![0.0; 3]]);
        // The split preserves AᵀA.
        let v = [0.3, -1.2, 2.0];
        let mut full = vec![0.0; 3];
        a.gram_mul_add(&v, 1.0, &mut full);
        let mut split = vec![0.0; 3];
        rest.gram_mul_add(&v, 1.0, &mut split);
        for c in 0..3 {
            split[c] += diag[c] * v[c];
            assert!((split[c] - full[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_map_to_constraints() {
        let s = tiny();
        let inst = build_ilp(&s, &LatencyTable::build(&s));
        let kinds: Vec<_> = (0..8).map(|r| inst.blocks.constraint_of(r)).collect();
        assert_eq!(kinds[0], Constraint::Storage);
        assert_eq!(kinds[2], Constraint::LayerDependency);
        assert_eq!(kinds[4], Constraint::DeploymentGating);
        assert_eq!(kinds[7], Constraint::ComputeCapacity);
    }

    #[test]
    fn unreachable_targets_get_single_entry_gating_rows() {
        // Node 0 covers only user 0, and the SCN-MCN link is cut, so user 1
        // cannot reach node 0.
        let s = Hand::new(&[40.0], &[&[0]], &[0.5])
            .scn(100.0, 1.0)
            .mcn(100.0, 1.0)
            .user(0, 6.0, &[(0, 6.0), (1, 6.0)])
            .user(0, 6.0, &[(1, 6.0)])
            .unlink(0, 1)
            .build();
        let lt = LatencyTable::build(&s);
        let inst = build_ilp(&s, &lt);
        let w10 = inst.layout.w(1, 0);
        assert_eq!(inst.unreachable, vec![w10]);
        let row = inst.blocks.gating.start + 2;
        assert_eq!(inst.a2.row(row).collect::<Vec<_>>(), vec![(w10, 1.0)]);
    }

    #[test]
    fn lp_export_lists_every_row_and_variable() {
        let s = tiny();
        let lp = write_lp(&build_ilp(&s, &LatencyTable::build(&s)));
        assert!(lp.starts_with("\\ "));
        assert!(lp.contains("Minimize") && lp.contains("Subject To") && lp.trim_end().ends_with("End"));
        assert_eq!(lp.matches(" assign_").count(), 1);
        assert_eq!(lp.matches(" storage_").count(), 2);
        assert_eq!(lp.matches(" layer_").count(), 2);
        assert_eq!(lp.matches(" gate_").count(), 2);
        assert_eq!(lp.matches(" compute_").count(), 2);
        assert!(lp.contains("w_0_2") && lp.contains("x_1_0") && lp.contains("y_0_0"));
    }

    fn small_scenario(seed: u64) -> Scenario {
        generate(&GenerationConfig {
            seed,
            num_users: 4,
            num_scns: 2,
            num_services: 2,
            num_layers: 10,
            ..Default::default()
        })
        .unwrap()
    }

    /// Random binary point: all-cloud plus `flips` random bit flips, so that
    /// both feasible and infeasible points are common.
    fn perturbed(s: &Scenario, lt: &LatencyTable, rng: &mut ChaCha8Rng, flips: usize) -> Solution {
        let mut sol = Solution::all_cloud(s, lt).unwrap();
        let layout = VariableLayout::for_scenario(s);
        for _ in 0..flips {
            match layout.decode(rng.random_range(0..layout.q())) {
                Variable::X { node, service } => sol.x[node][service] ^= true,
                Variable::Y { node, layer } => sol.y[node][layer] ^= true,
                Variable::W { user, target } => sol.w[user][target] ^= true,
            }
        }
        sol
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn matrix_form_agrees_with_direct_checks(seed in 0u64..1_000_000) {
            let s = small_scenario(seed);
            let lt = LatencyTable::build(&s);
            let inst = build_ilp(&s, &lt);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for k in 0..60 {
                let sol = perturbed(&s, &lt, &mut rng, k % 6);
                let a = binary_check_equivalence(&s, &sol, &inst).unwrap();
                prop_assert!(a.agrees(), "{:?}", a);
            }
        }

        #[test]
        fn encoded_objective_matches_model(seed in 0u64..1_000_000) {
            let s = small_scenario(seed);
            let lt = LatencyTable::build(&s);
            let inst = build_ilp(&s, &lt);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let targets: Vec<usize> = (0..s.num_users())
                .map(|u| loop {
                    let m = rng.random_range(0..s.num_targets());
                    if lt.xi(u, m).is_some() {
                        break m;
                    }
                })
                .collect();
            let n = s.num_nodes();
            let sol = Solution::assemble(&s, &lt, vec![vec![true; s.num_services()]; n], vec![vec![true; s.num_layers()]; n], &targets).unwrap();
            let v = inst.layout.encode(&sol);
            prop_assert!((inst.objective(&v) - sol.objective).abs() <= 1e-9 * sol.objective.max(1.0));
        }
    }
}
