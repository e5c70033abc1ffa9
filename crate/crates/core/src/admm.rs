//! Sphere-box ADMM for the binary program in matrix form.
//!
//! Binary vectors are exactly the points of the unit box that also lie on
//! the sphere centred at `½·1` with squared radius `q/4`. The solver keeps
//! one auxiliary copy of `v` in each set, a non-negative slack for the
//! inequality block, and four dual vectors. Each iteration runs, in order:
//! box projection, sphere projection, slack update, a conjugate-gradient
//! solve of the positive-definite system for `v`, and dual ascent.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ilp::{CsrMatrix, IlpInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmmParams {
    pub rho1: f64,
    pub rho2: f64,
    pub rho3: f64,
    pub rho4: f64,
    /// Step applied to the equality and inequality duals.
    pub gamma: f64,
    /// Iteration cap; `None` means `q`.
    pub max_iters: Option<usize>,
    pub near_binary_tol: f64,
    /// Stop only once every task's assignment row sums to one within this.
    pub equality_tol: f64,
    pub pcg_tol: f64,
    pub pcg_max_iters: usize,
    /// `rho1`, `rho3` and `rho4` are multiplied by this every
    /// `growth_every` iterations.
    pub rho_growth: f64,
    /// Same for `rho2`; a faster rate tightens the sphere pull over time.
    pub rho2_growth: f64,
    /// Zero disables continuation.
    pub growth_every: usize,
    /// Upper bound on every penalty under continuation.
    pub rho_max: f64,
    /// Disable to solve the plain box relaxation (`rho2` is then ignored).
    pub sphere: bool,
    /// Equilibrate each inequality row to unit max-norm before solving.
    pub scale_rows: bool,
}

impl Default for AdmmParams {
    fn default() -> Self {
        Self {
            rho1: 0.5,
            rho2: 0.5,
            rho3: 0.5,
            rho4: 0.5,
            gamma: 1.0,
            max_iters: None,
            near_binary_tol: 0.02,
            equality_tol: 0.05,
            pcg_tol: 1e-6,
            pcg_max_iters: 2000,
            rho_growth: 1.02,
            rho2_growth: 1.04,
            growth_every: 10,
            rho_max: 1e6,
            sphere: true,
            scale_rows: true,
        }
    }
}

impl AdmmParams {
    /// Box-only relaxation with the same penalties.
    pub fn box_only(&self) -> Self {
        Self { sphere: false, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("rho1", self.rho1),
            ("rho3", self.rho3),
            ("rho4", self.rho4),
            ("pcg_tol", self.pcg_tol),
            ("rho_growth", self.rho_growth),
            ("rho2_growth", self.rho2_growth),
            ("rho_max", self.rho_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.rho_growth >= 1.0 && self.rho2_growth >= 1.0) {
            return Err(Error::InvalidConfig("penalty growth factors must be at least 1".into()));
        }
        if self.sphere && !(self.rho2 > 0.0) {
            return Err(Error::InvalidConfig("rho2 must be positive".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidConfig("gamma must be non-negative".into()));
        }
        if !(self.near_binary_tol > 0.0 && self.near_binary_tol < 0.5) {
            return Err(Error::InvalidConfig("near_binary_tol must lie in (0, 0.5)".into()));
        }
        Ok(())
    }
}

/// The data the iteration works on: the instance, optionally with its
/// inequality rows equilibrated.
#[derive(Debug, Clone)]
pub struct AdmmProblem {
    pub f: Vec<f64>,
    pub a1: CsrMatrix,
    pub g1: Vec<f64>,
    pub a2: CsrMatrix,
    pub g2: Vec<f64>,
    col_sq1: Vec<f64>,
    col_sq2: Vec<f64>,
    /// Diagonal part of `A2ᵀA2` from single-entry rows.
    single_diag2: Vec<f64>,
    /// The rows of `A2` with two or more entries.
    multi_a2: CsrMatrix,
}

impl AdmmProblem {
    pub fn new(inst: &IlpInstance, scale_rows: bool) -> Self {
        let (a2, g2) = if scale_rows {
            let scale: Vec<f64> = (0..inst.a2.rows())
                .map(|r| {
                    let m = inst.a2.row(r).map(|(_, a)| a.abs()).fold(0.0, f64::max);
                    if m > 0.0 {
                        1.0 / m
                    } else {
                        1.0
                    }
                })
                .collect();
            let g2 = inst.g2.iter().zip(&scale).map(|(g, s)| g * s).collect();
            (inst.a2.scale_rows(&scale), g2)
        } else {
            (inst.a2.clone(), inst.g2.clone())
        };
        Self::from_parts(inst.f.clone(), inst.a1.clone(), inst.g1.clone(), a2, g2)
    }

    pub fn from_parts(f: Vec<f64>, a1: CsrMatrix, g1: Vec<f64>, a2: CsrMatrix, g2: Vec<f64>) -> Self {
        let col_sq1 = a1.column_sq_norms();
        let col_sq2 = a2.column_sq_norms();
        let (single_diag2, multi_a2) = a2.split_single_entry_rows();
        Self { f, a1, g1, a2, g2, col_sq1, col_sq2, single_diag2, multi_a2 }
    }

    pub fn q(&self) -> usize {
        self.f.len()
    }
}

/// Current penalty values; they change under continuation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Penalties {
    pub rho1: f64,
    /// Zero when the sphere is disabled.
    pub rho2: f64,
    pub rho3: f64,
    pub rho4: f64,
}

impl Penalties {
    pub fn initial(params: &AdmmParams) -> Self {
        Self {
            rho1: params.rho1,
            rho2: if params.sphere { params.rho2 } else { 0.0 },
            rho3: params.rho3,
            rho4: params.rho4,
        }
    }

    fn grow(&mut self, params: &AdmmParams) {
        let cap = params.rho_max;
        self.rho1 = (self.rho1 * params.rho_growth).min(cap);
        self.rho2 = (self.rho2 * params.rho2_growth).min(cap);
        self.rho3 = (self.rho3 * params.rho_growth).min(cap);
        self.rho4 = (self.rho4 * params.rho_growth).min(cap);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState {
    pub v: Vec<f64>,
    /// Box auxiliary.
    pub e1: Vec<f64>,
    /// Sphere auxiliary.
    pub e2: Vec<f64>,
    /// Inequality slack, one entry per row of `A2`.
    pub h: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub k3: Vec<f64>,
    pub k4: Vec<f64>,
    pub rho: Penalties,
    /// Whether the sphere auxiliary takes part.
    pub sphere: bool,
    pub iter: usize,
}

impl AdmmState {
    /// Starts from `v0` (default `½·1`) with zero duals.
    pub fn new(problem: &AdmmProblem, params: &AdmmParams, v0: Option<Vec<f64>>) -> Self {
        let q = problem.q();
        let v = v0.unwrap_or_else(|| vec![0.5; q]);
        Self {
            e1: v.clone(),
            e2: v.clone(),
            v,
            h: vec![0.0; problem.a2.rows()],
            k1: vec![0.0; q],
            k2: vec![0.0; q],
            k3: vec![0.0; problem.a1.rows()],
            k4: vec![0.0; problem.a2.rows()],
            rho: Penalties::initial(params),
            sphere: params.sphere,
            iter: 0,
        }
    }
}

/// Componentwise clamp onto `[0, 1]`.
pub fn project_box(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&x| x.clamp(0.0, 1.0)).collect()
}

/// Radial projection onto the sphere through every binary vector. The
/// centre itself has no radial direction and maps along the first axis.
pub fn project_sphere(p: &[f64]) -> Vec<f64> {
    let q = p.len();
    let radius = (q as f64).sqrt() / 2.0;
    let norm = p.iter().map(|&x| (x - 0.5) * (x - 0.5)).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut out = vec![0.5; q];
        if let Some(first) = out.first_mut() {
            *first += radius;
        }
        return out;
    }
    let scale = radius / norm;
    p.iter().map(|&x| 0.5 + scale * (x - 0.5)).collect()
}

/// Minimizes the augmented Lagrangian over `h >= 0`:
/// `max(0, g2 - A2 v - k4 / rho4)`.
pub fn update_slack(state: &AdmmState, problem: &AdmmProblem) -> Vec<f64> {
    let mut a2v = vec![0.0; problem.a2.rows()];
    problem.a2.mul_vec(&state.v, &mut a2v);
    slack_from(state, problem, &a2v)
}

fn slack_from(state: &AdmmState, problem: &AdmmProblem, a2v: &[f64]) -> Vec<f64> {
    let rho4 = state.rho.rho4;
    problem
        .g2
        .iter()
        .zip(a2v)
        .zip(&state.k4)
        .map(|((g, a), k)| (g - a - k / rho4).max(0.0))
        .collect()
}

/// The implicit system operator `(ρ1+ρ2) I + ρ3 A1ᵀA1 + ρ4 A2ᵀA2`.
pub struct SystemOperator<'a> {
    problem: &'a AdmmProblem,
    shift: f64,
    rho3: f64,
    rho4: f64,
}

impl<'a> SystemOperator<'a> {
    pub fn new(problem: &'a AdmmProblem, rho_sum: f64, rho3: f64, rho4: f64) -> Self {
        Self {
            problem,
            shift: rho_sum,
            rho3,
            rho4,
        }
    }

    pub fn apply(&mut self, v: &[f64], out: &mut [f64]) {
        let p = self.problem;
        for ((o, &x), &d) in out.iter_mut().zip(v).zip(&p.single_diag2) {
            *o = (self.shift + self.rho4 * d) * x;
        }
        p.a1.gram_mul_add(v, self.rho3, out);
        p.multi_a2.gram_mul_add(v, self.rho4, out);
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let p = self.problem;
        p.col_sq1.iter().zip(&p.col_sq2).map(|(a, b)| self.shift + self.rho3 * a + self.rho4 * b).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// `‖b − M x‖ / ‖b‖` recomputed by an explicit multiply.
    pub residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradient on `op`, warm-started at `x0`.
pub fn pcg(op: &mut SystemOperator<'_>, b: &[f64], x0: &[f64], tol: f64, max_iters: usize) -> Result<PcgOutcome> {
    let n = b.len();
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return Ok(PcgOutcome { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let mut x = x0.to_vec();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    let mut iterations = 0;

    // Restart from the true residual whenever the recursive one has drifted.
    for _restart in 0..4 {
        op.apply(&x, &mut ap);
        for ((ri, bi), ai) in r.iter_mut().zip(b).zip(&ap) {
            *ri = bi - ai;
        }
        let true_res = dot(&r, &r).sqrt() / b_norm;
        if true_res <= tol {
            return Ok(PcgOutcome { x, iterations, residual: true_res });
        }
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iters {
            iterations += 1;
            op.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if dot(&r, &r).sqrt() / b_norm <= tol * 0.5 {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        if iterations >= max_iters {
            break;
        }
    }
    op.apply(&x, &mut ap);
    let res = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai) * (bi - ai)).sum::<f64>().sqrt() / b_norm;
    if res <= tol {
        Ok(PcgOutcome { x, iterations, residual: res })
    } else {
        Err(Error::PcgNotConverged { iterations, residual: res })
    }
}

/// Right-hand side of the `v` system for the current auxiliaries and duals.
pub fn system_rhs(state: &AdmmState, problem: &AdmmProblem) -> Vec<f64> {
    let q = problem.q();
    let rho = state.rho;
    let mut rhs = vec![0.0; q];
    for i in 0..q {
        rhs[i] = rho.rho1 * state.e1[i] - problem.f[i] - state.k1[i];
        if state.sphere {
            rhs[i] += rho.rho2 * state.e2[i] - state.k2[i];
        }
    }
    let t1: Vec<f64> = problem.g1.iter().zip(&state.k3).map(|(g, k)| rho.rho3 * g - k).collect();
    problem.a1.mul_t_vec_add(&t1, &mut rhs);
    let t2: Vec<f64> = problem
        .g2
        .iter()
        .zip(&state.h)
        .zip(&state.k4)
        .map(|((g, h), k)| rho.rho4 * (g - h) - k)
        .collect();
    problem.a2.mul_t_vec_add(&t2, &mut rhs);
    rhs
}

/// Solves the positive-definite system for the next `v`, warm-started at the
/// current one.
pub fn solve_v(state: &AdmmState, problem: &AdmmProblem, params: &AdmmParams) -> Result<PcgOutcome> {
    let rhs = system_rhs(state, problem);
    let rho = state.rho;
    let rho_sum = rho.rho1 + if state.sphere { rho.rho2 } else { 0.0 };
    let mut op = SystemOperator::new(problem, rho_sum, rho.rho3, rho.rho4);
    pcg(&mut op, &rhs, &state.v, params.pcg_tol, params.pcg_max_iters)
}

/// Dual ascent on all four multipliers; `gamma` scales the steps of the
/// equality and inequality duals.
pub fn update_duals(state: &mut AdmmState, problem: &AdmmProblem, gamma: f64) {
    let mut a1v = vec![0.0; problem.a1.rows()];
    problem.a1.mul_vec(&state.v, &mut a1v);
    let mut a2v = vec![0.0; problem.a2.rows()];
    problem.a2.mul_vec(&state.v, &mut a2v);
    duals_from(state, problem, gamma, &a1v, &a2v);
}

fn duals_from(state: &mut AdmmState, problem: &AdmmProblem, gamma: f64, a1v: &[f64], a2v: &[f64]) {
    let rho = state.rho;
    for i in 0..state.v.len() {
        state.k1[i] += rho.rho1 * (state.v[i] - state.e1[i]);
        if state.sphere {
            state.k2[i] += rho.rho2 * (state.v[i] - state.e2[i]);
        }
    }
    for (k, (a, g)) in state.k3.iter_mut().zip(a1v.iter().zip(&problem.g1)) {
        *k += gamma * rho.rho3 * (a - g);
    }
    for (r, k) in state.k4.iter_mut().enumerate() {
        *k += gamma * rho.rho4 * (a2v[r] + state.h[r] - problem.g2[r]);
    }
}

/// Per-iteration diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    /// `‖v − e1‖∞`.
    pub box_residual: f64,
    /// `‖v − e2‖∞` (zero without the sphere).
    pub sphere_residual: f64,
    /// `‖A1 v − g1‖∞`.
    pub equality_residual: f64,
    /// `‖A2 v + h − g2‖∞`.
    pub inequality_residual: f64,
    pub objective: f64,
    pub pcg_iterations: usize,
    pub rho1: f64,
    pub rho2: f64,
}

#[derive(Debug, Clone)]
pub struct AdmmOutcome {
    /// Relaxed solution `v†`.
    pub v: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl AdmmOutcome {
    /// Share of entries within `tol` of 0 or 1.
    pub fn near_binary_fraction(&self, tol: f64) -> f64 {
        near_binary_fraction(&self.v, tol)
    }
}

pub fn near_binary_fraction(v: &[f64], tol: f64) -> f64 {
    if v.is_empty() {
        return 1.0;
    }
    let hits = v.iter().filter(|&&x| x.abs() <= tol || (x - 1.0).abs() <= tol).count();
    hits as f64 / v.len() as f64
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

const DIVERGENCE_WINDOW: usize = 50;
const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_FLOOR: f64 = 1.0;

/// Runs the iteration until the auxiliaries agree with `v` to
/// `near_binary_tol` with the assignment rows satisfied, or the cap is hit.
pub fn run(inst: &IlpInstance, params: &AdmmParams, init: Option<Vec<f64>>) -> Result<AdmmOutcome> {
    params.validate()?;
    let problem = AdmmProblem::new(inst, params.scale_rows);
    let mut state = AdmmState::new(&problem, params, init);
    let max_iters = params.max_iters.unwrap_or_else(|| problem.q());
    let mut trace: Vec<IterationRecord> = Vec::with_capacity(max_iters.min(1 << 16));
    let mut primal_history: Vec<f64> = Vec::with_capacity(max_iters.min(1 << 16));
    let mut a1v = vec![0.0; problem.a1.rows()];
    let mut a2v = vec![0.0; problem.a2.rows()];
    problem.a2.mul_vec(&state.v, &mut a2v);
    let mut converged = false;

    for t in 0..max_iters {
        let rho = state.rho;
        let e1_in: Vec<f64> = state.v.iter().zip(&state.k1).map(|(v, k)| v + k / rho.rho1).collect();
        state.e1 = project_box(&e1_in);
        if state.sphere {
            let e2_in: Vec<f64> = state.v.iter().zip(&state.k2).map(|(v, k)| v + k / rho.rho2).collect();
            state.e2 = project_sphere(&e2_in);
        }
        state.h = slack_from(&state, &problem, &a2v);
        let solved = solve_v(&state, &problem, params)?;
        state.v = solved.x;
        problem.a1.mul_vec(&state.v, &mut a1v);
        problem.a2.mul_vec(&state.v, &mut a2v);
        duals_from(&mut state, &problem, params.gamma, &a1v, &a2v);
        state.iter = t + 1;

        let box_residual = inf_norm_diff(&state.v, &state.e1);
        let sphere_residual = if state.sphere { inf_norm_diff(&state.v, &state.e2) } else { 0.0 };
        let equality_residual = inf_norm_diff(&a1v, &problem.g1);
        let inequality_residual = a2v
            .iter()
            .zip(&state.h)
            .zip(&problem.g2)
            .map(|((a, h), g)| (a + h - g).abs())
            .fold(0.0, f64::max);
        trace.push(IterationRecord {
            iter: t + 1,
            box_residual,
            sphere_residual,
            equality_residual,
            inequality_residual,
            objective: dot(&problem.f, &state.v),
            pcg_iterations: solved.iterations,
            rho1: rho.rho1,
            rho2: rho.rho2,
        });

        let primal = box_residual.max(sphere_residual).max(equality_residual);
        primal_history.push(primal);
        // Compare against the peak of the window one window back, so the
        // bounded oscillation of the sphere phase is not mistaken for growth.
        let previous = if t >= 2 * DIVERGENCE_WINDOW {
            primal_history[t - 2 * DIVERGENCE_WINDOW..=t - DIVERGENCE_WINDOW].iter().copied().fold(0.0, f64::max)
        } else {
            f64::INFINITY
        };
        if !primal.is_finite() || (primal > DIVERGENCE_FACTOR * previous && primal > DIVERGENCE_FLOOR) {
            return Err(Error::Diverged { iteration: t + 1, residual: primal, previous, trace });
        }

        if box_residual.max(sphere_residual) <= params.near_binary_tol
            && equality_residual.max(inequality_residual) <= params.equality_tol
        {
            converged = true;
            break;
        }
        if params.growth_every > 0 && (t + 1) % params.growth_every == 0 {
            state.rho.grow(params);
        }
    }

    Ok(AdmmOutcome { v: state.v, iterations: state.iter, converged, trace })
}

/// Writes the diagnostics trace as CSV.
pub fn write_trace_csv<W: Write>(trace: &[IterationRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    for rec in trace {
        wtr.serialize(rec)?;
    }
    wtr.flush()?;
    Ok(())
}
