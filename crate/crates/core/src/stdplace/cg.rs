//! Jacobi-preconditioned conjugate gradient.

use super::system::CsrMatrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Incremental CG solver for `A x = b`, advanced one iteration at a time so
/// that several right-hand sides can be stepped in lockstep.
#[derive(Debug, Clone)]
pub struct CgState {
    pub x: Vec<f64>,
    r: Vec<f64>,
    z: Vec<f64>,
    p: Vec<f64>,
    ap: Vec<f64>,
    inv_diag: Vec<f64>,
    rz: f64,
    rhs_norm: f64,
    pub iterations: usize,
}

impl CgState {
    pub fn new(a: &CsrMatrix, b: &[f64], x0: Vec<f64>) -> Self {
        let n = b.len();
        let mut ax = vec![0.0; n];
        a.mul_vec(&x0, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let inv_diag: Vec<f64> = a
            .diagonal()
            .into_iter()
            .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
            .collect();
        let z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
        let rz = dot(&r, &z);
        Self {
            x: x0,
            p: z.clone(),
            z,
            r,
            ap: vec![0.0; n],
            inv_diag,
            rz,
            rhs_norm: dot(b, b).sqrt(),
            iterations: 0,
        }
    }

    pub fn residual_norm(&self) -> f64 {
        dot(&self.r, &self.r).sqrt()
    }

    pub fn converged(&self, tol: f64) -> bool {
        self.residual_norm() <= tol * self.rhs_norm
    }

    /// `0.5 x^T A x - b^T x`, using `A x = b - r`.
    pub fn objective(&self, b: &[f64]) -> f64 {
        -0.5 * self.x.iter().zip(b).zip(&self.r).map(|((x, b), r)| x * (b + r)).sum::<f64>()
    }

    /// One CG iteration. Returns false if the iterate became non-finite.
    pub fn step(&mut self, a: &CsrMatrix) -> bool {
        a.mul_vec(&self.p, &mut self.ap);
        let pap = dot(&self.p, &self.ap);
        if pap <= 0.0 || !pap.is_finite() {
            // exact convergence (p = 0) or breakdown
            return self.rz == 0.0;
        }
        let alpha = self.rz / pap;
        for i in 0..self.x.len() {
            self.x[i] += alpha * self.p[i];
            self.r[i] -= alpha * self.ap[i];
            self.z[i] = self.r[i] * self.inv_diag[i];
        }
        let rz_new = dot(&self.r, &self.z);
        let beta = rz_new / self.rz;
        self.rz = rz_new;
        for i in 0..self.p.len() {
            self.p[i] = self.z[i] + beta * self.p[i];
        }
        self.iterations += 1;
        self.x.iter().all(|v| v.is_finite())
    }
}

/// Outcome of a single-axis solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
    /// Objective value at the start and after every iteration.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, thiserror::Error, PartialEq)]
#[error("conjugate gradient diverged after {iterations} iterations")]
pub struct Diverged {
    pub iterations: usize,
}

/// Solve `A x = b` until `||r|| <= tol * ||b||` or `max_iters`.
pub fn conjugate_gradient(
    a: &CsrMatrix,
    b: &[f64],
    x0: Vec<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<SolveReport, Diverged> {
    let mut state = CgState::new(a, b, x0);
    let mut trace = vec![state.objective(b)];
    while !state.converged(tol) && state.iterations < max_iters {
        if !state.step(a) {
            return Err(Diverged { iterations: state.iterations });
        }
        trace.push(state.objective(b));
        if state.rz == 0.0 {
            break;
        }
    }
    Ok(SolveReport {
        converged: state.converged(tol),
        residual_norm: state.residual_norm(),
        iterations: state.iterations,
        x: state.x,
        objective_trace: trace,
    })
}
