//! Local optimizers shared by the reference improvers.
//!
//! * [`minimize_lbfgs`]: limited-memory BFGS with projection onto box bounds
//!   and Armijo backtracking.
//! * [`minimize_sqp`]: a sequential quadratic programming loop for problems
//!   with explicit inequality constraints `c(x) ≤ 0`. Each step solves the
//!   quadratic subproblem in its dual with Hildreth's coordinate ascent and
//!   globalizes with an ℓ1 merit function.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::deadline::Deadline;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    LineSearchFailed,
    DeadlineExpired,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

/// Box bounds; use infinities for free coordinates.
#[derive(Debug, Clone)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unbounded(dim: usize) -> Self {
        Self { lower: vec![f64::NEG_INFINITY; dim], upper: vec![f64::INFINITY; dim] }
    }

    fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iters: usize,
    /// Stop when the projected gradient's max-norm falls below this.
    pub grad_tol: f64,
    /// Stop when the relative decrease of one iteration falls below this.
    pub rel_tol: f64,
    pub max_backtracks: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iters: 1000, grad_tol: 1e-9, rel_tol: 1e-13, max_backtracks: 40 }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

struct History {
    s: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    rho: Vec<f64>,
    cap: usize,
}

impl History {
    fn new(cap: usize) -> Self {
        Self { s: Vec::new(), y: Vec::new(), rho: Vec::new(), cap: cap.max(1) }
    }

    fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
        self.rho.clear();
    }

    fn push(&mut self, s: Vec<f64>, y: Vec<f64>) {
        let sy = dot(&s, &y);
        if !(sy > 1e-12 * libm::sqrt(dot(&s, &s) * dot(&y, &y))) {
            return;
        }
        if self.s.len() == self.cap {
            self.s.remove(0);
            self.y.remove(0);
            self.rho.remove(0);
        }
        self.s.push(s);
        self.y.push(y);
        self.rho.push(1.0 / sy);
    }

    /// Two-loop recursion: returns `H·q`.
    fn apply(&self, q: &mut [f64]) {
        let m = self.s.len();
        let mut alpha = vec![0.0; m];
        for i in (0..m).rev() {
            alpha[i] = self.rho[i] * dot(&self.s[i], q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        if m > 0 {
            let gamma = dot(&self.s[m - 1], &self.y[m - 1]) / dot(&self.y[m - 1], &self.y[m - 1]);
            for v in q.iter_mut() {
                *v *= gamma;
            }
        }
        for i in 0..m {
            let beta = self.rho[i] * dot(&self.y[i], q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
    }
}

/// Minimizes `f` from `x0`. `f(x, grad)` returns the value and writes the
/// gradient.
pub fn minimize_lbfgs<F>(
    mut f: F,
    x0: &[f64],
    bounds: Option<&Bounds>,
    opts: &LbfgsOptions,
    deadline: &Deadline,
) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x0.len();
    let free = Bounds::unbounded(n);
    let bounds = bounds.unwrap_or(&free);
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g);
    let mut evaluations = 1;
    let mut history = History::new(opts.memory);
    let mut status = Status::MaxIterations;
    let mut iterations = 0;

    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum { x, value: fx, iterations, evaluations, status: Status::NonFinite };
    }

    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut active = vec![false; n];

    while iterations < opts.max_iters {
        if deadline.expired() {
            status = Status::DeadlineExpired;
            break;
        }
        // coordinates pinned at a bound with the gradient pushing outward
        let mut pg_norm: f64 = 0.0;
        for i in 0..n {
            let at_lo = x[i] <= bounds.lower[i] && g[i] > 0.0;
            let at_hi = x[i] >= bounds.upper[i] && g[i] < 0.0;
            active[i] = at_lo || at_hi;
            if !active[i] {
                pg_norm = pg_norm.max(g[i].abs());
            }
        }
        if pg_norm < opts.grad_tol {
            status = Status::Converged;
            break;
        }

        let mut accepted = false;
        for attempt in 0..2 {
            // quasi-Newton direction first, steepest descent as the fallback
            for i in 0..n {
                d[i] = if active[i] { 0.0 } else { g[i] };
            }
            if attempt == 0 {
                history.apply(&mut d);
            }
            for i in 0..n {
                d[i] = if active[i] { 0.0 } else { -d[i] };
            }
            if !(dot(&d, &g) < 0.0) {
                history.clear();
                for i in 0..n {
                    d[i] = if active[i] { 0.0 } else { -g[i] };
                }
            }
            let mut step = if history.s.is_empty() { (1.0 / max_abs(&d)).min(1.0) } else { 1.0 };
            for _ in 0..opts.max_backtracks {
                for i in 0..n {
                    x_new[i] = x[i] + step * d[i];
                }
                bounds.project(&mut x_new);
                let f_new = f(&x_new, &mut g_new);
                evaluations += 1;
                let decrease: f64 = g.iter().zip(x_new.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if f_new.is_finite() && f_new <= fx + 1e-4 * decrease {
                    let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
                    let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
                    history.push(s, y);
                    let rel = (fx - f_new) / fx.abs().max(f_new.abs()).max(1.0);
                    core::mem::swap(&mut x, &mut x_new);
                    core::mem::swap(&mut g, &mut g_new);
                    fx = f_new;
                    accepted = true;
                    if rel < opts.rel_tol {
                        status = Status::Converged;
                    }
                    break;
                }
                step *= 0.5;
            }
            if accepted {
                break;
            }
            history.clear();
        }
        iterations += 1;
        if !accepted {
            status = Status::LineSearchFailed;
            break;
        }
        if status == Status::Converged {
            break;
        }
    }
    Minimum { x, value: fx, iterations, evaluations, status }
}

/// One inequality constraint `value ≤ 0` with a sparse gradient. `key`
/// identifies the constraint across iterates.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub key: u64,
    pub value: f64,
    pub grad: Vec<(usize, f64)>,
}

pub trait ConstrainedObjective {
    fn dim(&self) -> usize;
    fn objective(&self, x: &[f64], grad: &mut [f64]) -> f64;
    /// Constraints relevant near `x` (nearly active or violated).
    fn constraints(&self, x: &[f64]) -> Vec<Constraint>;
    /// Total violation `Σ max(0, c_j(x))` over every constraint.
    fn violation(&self, x: &[f64]) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct SqpOptions {
    pub max_iters: usize,
    /// Lower bound on the ℓ1 merit weight.
    pub merit_weight: f64,
    /// Max-norm cap on each step.
    pub max_step: f64,
    pub step_tol: f64,
    pub feas_tol: f64,
    pub qp_sweeps: usize,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self { max_iters: 200, merit_weight: 1.0, max_step: 0.25, step_tol: 1e-10, feas_tol: 1e-10, qp_sweeps: 300 }
    }
}

/// Solves `min ½pᵀBp + gᵀp s.t. c + A p ≤ 0` given `H = B⁻¹`, by coordinate
/// ascent on the dual. Returns `(p, λ)`.
fn hildreth(h: &[f64], n: usize, g: &[f64], cons: &[Constraint], sweeps: usize) -> (Vec<f64>, Vec<f64>) {
    let m = cons.len();
    let hg = mat_vec(h, n, g);
    // H·a_j for each constraint
    let ha: Vec<Vec<f64>> = cons
        .iter()
        .map(|c| {
            let mut out = vec![0.0; n];
            for &(j, v) in &c.grad {
                for i in 0..n {
                    out[i] += h[i * n + j] * v;
                }
            }
            out
        })
        .collect();
    let sparse_dot = |c: &Constraint, v: &[f64]| c.grad.iter().map(|&(j, a)| a * v[j]).sum::<f64>();
    let mut p_mat = vec![0.0; m * m];
    for r in 0..m {
        for s in 0..m {
            p_mat[r * m + s] = sparse_dot(&cons[r], &ha[s]);
        }
    }
    let d: Vec<f64> = cons.iter().map(|c| c.value - sparse_dot(c, &hg)).collect();
    let mut lambda = vec![0.0; m];
    for _ in 0..sweeps {
        let mut change: f64 = 0.0;
        for j in 0..m {
            let pjj = p_mat[j * m + j];
            if pjj <= 1e-14 {
                continue;
            }
            let mut w = d[j];
            for k in 0..m {
                w -= p_mat[j * m + k] * lambda[k];
            }
            let next = (lambda[j] + w / pjj).max(0.0);
            change = change.max((next - lambda[j]).abs());
            lambda[j] = next;
        }
        if change < 1e-13 {
            break;
        }
    }
    let mut p: Vec<f64> = hg.iter().map(|v| -v).collect();
    for (j, l) in lambda.iter().enumerate() {
        if *l != 0.0 {
            for i in 0..n {
                p[i] -= l * ha[j][i];
            }
        }
    }
    (p, lambda)
}

fn mat_vec(h: &[f64], n: usize, v: &[f64]) -> Vec<f64> {
    (0..n).map(|i| dot(&h[i * n..(i + 1) * n], v)).collect()
}

fn lagrangian_grad(g: &[f64], cons: &[Constraint], lambda: &BTreeMap<u64, f64>) -> Vec<f64> {
    let mut out = g.to_vec();
    for c in cons {
        if let Some(l) = lambda.get(&c.key) {
            for &(j, v) in &c.grad {
                out[j] += l * v;
            }
        }
    }
    out
}

/// SQP with a dense inverse-BFGS Hessian approximation of the Lagrangian.
pub fn minimize_sqp<P: ConstrainedObjective>(
    problem: &P,
    x0: &[f64],
    bounds: Option<&Bounds>,
    opts: &SqpOptions,
    deadline: &Deadline,
) -> Minimum {
    let n = problem.dim();
    let free = Bounds::unbounded(n);
    let bounds = bounds.unwrap_or(&free);
    let mut x = x0.to_vec();
    bounds.project(&mut x);
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut g = vec![0.0; n];
    let mut fx = problem.objective(&x, &mut g);
    let mut evaluations = 1;
    let mut mu = opts.merit_weight;
    let mut status = Status::MaxIterations;
    let mut iterations = 0;
    if !fx.is_finite() {
        return Minimum { x, value: fx, iterations, evaluations, status: Status::NonFinite };
    }

    let mut g_new = vec![0.0; n];
    while iterations < opts.max_iters {
        if deadline.expired() {
            status = Status::DeadlineExpired;
            break;
        }
        iterations += 1;
        let cons = problem.constraints(&x);
        let (mut p, lambda) = hildreth(&h, n, &g, &cons, opts.qp_sweeps);
        if p.iter().any(|v| !v.is_finite()) {
            status = Status::NonFinite;
            break;
        }
        let norm = max_abs(&p);
        if norm > opts.max_step {
            for v in p.iter_mut() {
                *v *= opts.max_step / norm;
            }
        }
        let viol = problem.violation(&x);
        if max_abs(&p) < opts.step_tol && viol < opts.feas_tol {
            status = Status::Converged;
            break;
        }
        let lambda_max = lambda.iter().fold(0.0_f64, |a, b| a.max(*b));
        mu = mu.max(1.1 * lambda_max);
        let merit = fx + mu * viol;
        let slope = dot(&g, &p) - mu * viol;

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + step * b).collect();
            bounds.project(&mut trial);
            let f_trial = problem.objective(&trial, &mut g_new);
            evaluations += 1;
            let merit_trial = f_trial + mu * problem.violation(&trial);
            if merit_trial.is_finite() && merit_trial <= merit + 1e-4 * step * slope.min(0.0) {
                accepted = Some((trial, f_trial));
                break;
            }
            step *= 0.5;
        }
        let Some((x_next, f_next)) = accepted else {
            status = Status::LineSearchFailed;
            break;
        };

        // inverse BFGS update on the Lagrangian gradient difference
        let keyed: BTreeMap<u64, f64> = cons.iter().zip(&lambda).map(|(c, l)| (c.key, *l)).collect();
        let cons_next = problem.constraints(&x_next);
        let gl_old = lagrangian_grad(&g, &cons, &keyed);
        let gl_new = lagrangian_grad(&g_new, &cons_next, &keyed);
        let s: Vec<f64> = x_next.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gl_new.iter().zip(&gl_old).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
            let rho = 1.0 / sy;
            let hy = mat_vec(&h, n, &y);
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        let moved = max_abs(&s);
        x = x_next;
        core::mem::swap(&mut g, &mut g_new);
        fx = f_next;
        if moved < opts.step_tol && problem.violation(&x) < opts.feas_tol {
            status = Status::Converged;
            break;
        }
    }
    Minimum { x, value: fx, iterations, evaluations, status }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64], g: &mut [f64]) -> f64 {
        let (a, b) = (x[0], x[1]);
        g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
        g[1] = 200.0 * (b - a * a);
        (1.0 - a) * (1.0 - a) + 100.0 * (b - a * a) * (b - a * a)
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let m = minimize_lbfgs(rosenbrock, &[-1.2, 1.0], None, &LbfgsOptions::default(), &Deadline::never());
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn lbfgs_respects_bounds() {
        let bounds = Bounds { lower: vec![-2.0, -2.0], upper: vec![0.5, 2.0] };
        let m = minimize_lbfgs(rosenbrock, &[-1.2, 1.0], Some(&bounds), &LbfgsOptions::default(), &Deadline::never());
        assert!(m.x[0] <= 0.5 + 1e-15);
        assert!((m.x[0] - 0.5).abs() < 1e-6 && (m.x[1] - 0.25).abs() < 1e-5, "{m:?}");
    }

    struct Disk;

    // minimize x + y subject to x² + y² ≤ 1
    impl ConstrainedObjective for Disk {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, _x: &[f64], g: &mut [f64]) -> f64 {
            g[0] = 1.0;
            g[1] = 1.0;
            _x[0] + _x[1]
        }
        fn constraints(&self, x: &[f64]) -> Vec<Constraint> {
            vec![Constraint { key: 0, value: x[0] * x[0] + x[1] * x[1] - 1.0, grad: vec![(0, 2.0 * x[0]), (1, 2.0 * x[1])] }]
        }
        fn violation(&self, x: &[f64]) -> f64 {
            (x[0] * x[0] + x[1] * x[1] - 1.0).max(0.0)
        }
    }

    #[test]
    fn sqp_finds_constrained_optimum() {
        let opts = SqpOptions { max_step: 1.0, ..SqpOptions::default() };
        let m = minimize_sqp(&Disk, &[0.3, -0.1], None, &opts, &Deadline::never());
        let target = -libm::sqrt(0.5);
        assert!((m.x[0] - target).abs() < 1e-6 && (m.x[1] - target).abs() < 1e-6, "{m:?}");
    }

    #[test]
    fn hildreth_matches_projection() {
        // min ½|p|² + gᵀp with p₀ ≤ 0.5  → p = (0.5, -g₁)
        let h = vec![1.0, 0.0, 0.0, 1.0];
        let cons = [Constraint { key: 0, value: -0.5, grad: vec![(0, 1.0)] }];
        let (p, l) = hildreth(&h, 2, &[-2.0, 1.0], &cons, 100);
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] + 1.0).abs() < 1e-12);
        assert!((l[0] - 1.5).abs() < 1e-12);
    }
}
