//! Two-phase log-barrier method for [`LogConvexProgram`].
//!
//! Phase I minimizes the largest constraint value from the interior start
//! until a strictly feasible point appears. Phase II follows the barrier
//! path of the slack objective with damped Newton steps. Slacks bound to a
//! balance constraint are eliminated: the solver works on the remaining
//! variables and the balance becomes `residual(x) > 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::program::{constraint_derivatives, LogConvexProgram, VarKind};
use crate::linalg::SymMatrix;
use crate::model::Status;
use crate::scalar::Scalar;

pub const DEFAULT_EPS_FEAS: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions<S> {
    /// Feasibility accuracy: objective and violations at or below it count as zero.
    pub eps_feas: S,
    /// Budget of Newton steps over all phases and restarts.
    pub max_iter: usize,
    /// Seed of the restart perturbations.
    pub seed: u64,
    /// Extra perturbed starts tried when a run ends undecided.
    pub restarts: usize,
    /// Initial weight of the objective against the barrier. Large values
    /// keep a nonconvex solve near its start instead of first drifting to
    /// the analytic center, which every start would share.
    pub t_init: S,
}

impl<S: Scalar> Default for SolveOptions<S> {
    fn default() -> Self {
        Self {
            eps_feas: S::lit(DEFAULT_EPS_FEAS),
            max_iter: DEFAULT_MAX_ITER,
            seed: 0,
            restarts: 6,
            t_init: S::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct SolveResult<S> {
    pub status: Status,
    /// Values of all variables, bound slacks included.
    pub point: Vec<S>,
    pub objective: S,
    pub iterations: usize,
    pub max_violation: S,
    /// Certified lower bound on the optimum over the box, when available.
    pub lower_bound: Option<S>,
    /// Objective after every accepted Phase II step of the returned run.
    pub objective_trace: Vec<S>,
    pub detail: String,
}

#[derive(Debug, Clone, Copy)]
enum Con {
    Record(usize),
    Balance(usize),
}

struct Compiled<'a, S> {
    prog: &'a LogConvexProgram<S>,
    active: Vec<usize>,
    map: Vec<Option<usize>>,
    lower: Vec<S>,
    upper: Vec<S>,
    cons: Vec<Con>,
    free_slacks: Vec<usize>,
    convex: bool,
}

/// Sparse gradient plus the data for its Hessian contribution.
enum ConDerivs<S> {
    Record(super::program::Derivatives<S>),
    /// `h = Σ v_j e^{a_j} - K`: gradient `Σ v_j grad a_j`, Hessian `Σ v_j a a^T`.
    Balance {
        grad: Vec<(usize, S)>,
        parts: Vec<(S, Vec<(usize, S)>)>,
    },
}

impl<S: Scalar> ConDerivs<S> {
    fn grad(&self) -> &[(usize, S)] {
        match self {
            ConDerivs::Record(d) => &d.grad,
            ConDerivs::Balance { grad, .. } => grad,
        }
    }

    fn add_hessian(&self, h: &mut SymMatrix<S>, scale: S, map: &[Option<usize>]) {
        match self {
            ConDerivs::Record(d) => d.add_hessian(h, scale, map),
            ConDerivs::Balance { parts, .. } => {
                for (v, a) in parts {
                    let a: Vec<(usize, S)> =
                        a.iter().filter_map(|&(i, c)| map[i].map(|r| (r, c))).collect();
                    h.add_outer(&a, scale * *v);
                }
            }
        }
    }
}

enum PhaseOne<S> {
    Found(Vec<S>),
    Infeasible { lower_bound: S, z: Vec<S> },
    Stalled { best: S, z: Vec<S> },
}

enum NewtonExit {
    Converged,
    /// A step was refused by the caller's acceptance test.
    Vetoed,
    Stalled,
    Stopped,
    Budget,
}

impl<'a, S: Scalar> Compiled<'a, S> {
    fn new(prog: &'a LogConvexProgram<S>) -> Result<Self, String> {
        let n = prog.dim();
        let mut bound = vec![None; n];
        for (k, b) in prog.bindings().iter().enumerate() {
            bound[b.slack] = Some(k);
        }
        let active: Vec<usize> = (0..n).filter(|&i| bound[i].is_none()).collect();
        let mut map = vec![None; n];
        for (r, &i) in active.iter().enumerate() {
            map[i] = Some(r);
        }
        let b = prog.box_bound();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut free_slacks = Vec::new();
        for (r, &i) in active.iter().enumerate() {
            match prog.variables()[i].kind {
                VarKind::Log => {
                    lower.push(-b);
                    upper.push(b);
                }
                VarKind::Slack => {
                    lower.push(S::zero());
                    upper.push(b);
                    free_slacks.push(r);
                }
            }
        }
        let x0 = prog.start();
        let mut cons = Vec::new();
        for (k, c) in prog.constraints().iter().enumerate() {
            if let Some(bi) = prog.bindings().iter().position(|b| b.constraint == k) {
                cons.push(Con::Balance(bi));
                continue;
            }
            if c.variables().is_empty() {
                let g = c.eval(&x0);
                if g > S::lit(1e-12) {
                    return Err(format!("constant constraint {k} ({}) is violated by {g}", c.label));
                }
                continue;
            }
            cons.push(Con::Record(k));
        }
        Ok(Self {
            prog,
            active,
            map,
            lower,
            upper,
            cons,
            free_slacks,
            convex: prog.bindings().is_empty(),
        })
    }

    fn reduce(&self, x: &[S]) -> Vec<S> {
        self.active.iter().map(|&i| x[i]).collect()
    }

    fn full(&self, z: &[S]) -> Vec<S> {
        let mut x = self.prog.start();
        for (r, &i) in self.active.iter().enumerate() {
            x[i] = z[r];
        }
        self.prog.fill_bound_slacks(&mut x);
        x
    }

    fn in_box(&self, z: &[S]) -> bool {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&lo, &hi))| v > lo && v < hi)
    }

    fn con_value(&self, con: Con, x: &[S]) -> S {
        match con {
            Con::Record(k) => self.prog.constraints()[k].eval(x),
            Con::Balance(b) => -self.prog.balance_residual(&self.prog.bindings()[b], x),
        }
    }

    fn values(&self, x: &[S]) -> Vec<S> {
        self.cons.iter().map(|&c| self.con_value(c, x)).collect()
    }

    fn con_derivs(&self, con: Con, x: &[S]) -> Option<ConDerivs<S>> {
        match con {
            Con::Record(k) => constraint_derivatives(&self.prog.constraints()[k], x).map(ConDerivs::Record),
            Con::Balance(b) => {
                let c = &self.prog.constraints()[self.prog.bindings()[b].constraint];
                let terms = c
                    .lhs_lse
                    .iter()
                    .flat_map(|l| &l.terms)
                    .chain(c.rhs_logres.iter().flat_map(|r| &r.terms));
                let mut grad = Vec::new();
                let mut parts = Vec::new();
                for t in terms {
                    let v = t.coef * t.exponent.eval(x).exp();
                    grad.extend(t.exponent.terms.iter().map(|&(i, a)| (i, v * a)));
                    parts.push((v, t.exponent.terms.clone()));
                }
                Some(ConDerivs::Balance { grad, parts })
            }
        }
    }

    fn objective(&self, x: &[S]) -> S {
        self.prog.objective(x)
    }

    fn barrier_terms(&self) -> usize {
        self.cons.len() + 2 * self.active.len()
    }

    fn box_barrier(&self, z: &[S]) -> S {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| -(hi - v).ln() - (v - lo).ln())
            .sum()
    }

    fn add_box_derivs(&self, z: &[S], grad: &mut [S], hess: &mut SymMatrix<S>) {
        for (r, &v) in z.iter().enumerate() {
            let a = S::one() / (self.upper[r] - v);
            let b = S::one() / (v - self.lower[r]);
            grad[r] = grad[r] + a - b;
            hess.add(r, r, a * a + b * b);
        }
    }

    fn scatter(&self, sparse: &[(usize, S)], out: &mut [S], scale: S) {
        for &(i, c) in sparse {
            if let Some(r) = self.map[i] {
                out[r] = out[r] + scale * c;
            }
        }
    }

    /// Phase II barrier `t F - Σ log(-v_c) + box`; `None` when not strictly feasible.
    fn phase2_value(&self, z: &[S], t: S) -> Option<(S, S)> {
        if !self.in_box(z) {
            return None;
        }
        let x = self.full(z);
        let mut phi = S::zero();
        for v in self.values(&x) {
            if !(v < S::zero()) {
                return None;
            }
            phi = phi - (-v).ln();
        }
        let f = self.objective(&x);
        Some((t * f + phi + self.box_barrier(z), f))
    }

    /// Gradient and two Hessians of the Phase II barrier: the full one and one
    /// without the (concave) curvature of bound-slack objective terms.
    fn phase2_derivs(&self, z: &[S], t: S) -> (Vec<S>, SymMatrix<S>, SymMatrix<S>) {
        let x = self.full(z);
        let d = z.len();
        let mut grad = vec![S::zero(); d];
        let mut hess = SymMatrix::zeros(d);
        let mut obj_curv = SymMatrix::zeros(d);
        for &r in &self.free_slacks {
            grad[r] = grad[r] + t;
        }
        for &con in &self.cons {
            let v = self.con_value(con, &x);
            let derivs = self.con_derivs(con, &x).expect("strictly feasible point");
            let inv = S::one() / (-v);
            self.scatter(derivs.grad(), &mut grad, inv);
            derivs.add_hessian(&mut hess, inv, &self.map);
            let mut gs = Vec::new();
            for &(i, c) in derivs.grad() {
                if let Some(r) = self.map[i] {
                    gs.push((r, c));
                }
            }
            hess.add_outer(&gs, inv * inv);
            if let Con::Balance(_) = con {
                // F contains the residual -h for this balance.
                self.scatter(derivs.grad(), &mut grad, -t);
                derivs.add_hessian(&mut obj_curv, -t, &self.map);
            }
        }
        self.add_box_derivs(z, &mut grad, &mut hess);
        let mut full = hess.clone();
        for i in 0..d {
            for j in 0..d {
                let v = obj_curv.get(i, j);
                if v != S::zero() {
                    full.add(i, j, v);
                }
            }
        }
        (grad, full, hess)
    }

    /// Phase I barrier over `w = (z, s)`: `t s - Σ log(s - v_c) + box(z)`.
    fn phase1_value(&self, w: &[S], t: S) -> Option<S> {
        let (z, s) = w.split_at(w.len() - 1);
        let s = s[0];
        if !self.in_box(z) {
            return None;
        }
        let x = self.full(z);
        let mut phi = t * s;
        for v in self.values(&x) {
            if !(v < s) {
                return None;
            }
            phi = phi - (s - v).ln();
        }
        Some(phi + self.box_barrier(z))
    }

    fn phase1_derivs(&self, w: &[S], t: S) -> (Vec<S>, SymMatrix<S>) {
        let d = w.len() - 1;
        let (z, s) = w.split_at(d);
        let s = s[0];
        let x = self.full(z);
        let mut grad = vec![S::zero(); d + 1];
        let mut hess = SymMatrix::zeros(d + 1);
        grad[d] = t;
        for &con in &self.cons {
            let v = self.con_value(con, &x);
            let derivs = self.con_derivs(con, &x).expect("inside domain");
            let inv = S::one() / (s - v);
            self.scatter(derivs.grad(), &mut grad, inv);
            grad[d] = grad[d] - inv;
            derivs.add_hessian(&mut hess, inv, &self.map);
            let mut gs: Vec<(usize, S)> = derivs
                .grad()
                .iter()
                .filter_map(|&(i, c)| self.map[i].map(|r| (r, c)))
                .collect();
            gs.push((d, -S::one()));
            hess.add_outer(&gs, inv * inv);
        }
        let mut zgrad = grad[..d].to_vec();
        let mut zh = SymMatrix::zeros(d);
        self.add_box_derivs(z, &mut zgrad, &mut zh);
        for r in 0..d {
            grad[r] = zgrad[r];
            hess.add(r, r, zh.get(r, r));
        }
        (grad, hess)
    }

    /// Lower bound of `min_z Σ y_c v_c(z) (+ F(z))` over the box, from the
    /// tangent plane at `z`. Valid because every `v_c` is convex (and `F`
    /// is linear when `with_objective` is set).
    fn linearized_bound(&self, z: &[S], weights: &[S], with_objective: bool) -> S {
        let x = self.full(z);
        let d = z.len();
        let mut grad = vec![S::zero(); d];
        let mut value = S::zero();
        if with_objective {
            value = self.objective(&x);
            for &r in &self.free_slacks {
                grad[r] = grad[r] + S::one();
            }
        }
        for (&con, &y) in self.cons.iter().zip(weights) {
            value = value + y * self.con_value(con, &x);
            if let Some(derivs) = self.con_derivs(con, &x) {
                self.scatter(derivs.grad(), &mut grad, y);
            }
        }
        let slope: S = (0..d)
            .map(|r| {
                let down = grad[r] * (self.lower[r] - z[r]);
                let up = grad[r] * (self.upper[r] - z[r]);
                down.min(up)
            })
            .sum();
        value + slope
    }

    fn domain_ok(&self, z: &[S]) -> bool {
        if !self.in_box(z) {
            return false;
        }
        let x = self.full(z);
        self.cons.iter().all(|&c| match c {
            Con::Record(_) => self.con_value(c, &x).is_finite(),
            Con::Balance(_) => self.con_value(c, &x) < S::zero(),
        })
    }
}

fn newton_solve<S: Scalar>(grad: &[S], primary: &SymMatrix<S>, fallback: &SymMatrix<S>) -> Option<Vec<S>> {
    let rhs: Vec<S> = grad.iter().map(|&g| -g).collect();
    let descent = |d: &Vec<S>| grad.iter().zip(d).fold(S::zero(), |a, (&g, &v)| a + g * v) < S::zero();
    if let Some(d) = primary.cholesky_solve(&rhs, S::zero()) {
        if descent(&d) {
            return Some(d);
        }
    }
    let scale = S::one().max(fallback.max_abs_diag());
    let mut shift = S::zero();
    for _ in 0..30 {
        if let Some(d) = fallback.cholesky_solve(&rhs, shift) {
            if descent(&d) {
                return Some(d);
            }
        }
        shift = if shift == S::zero() {
            scale * S::epsilon() * S::lit(100.0)
        } else {
            shift * S::lit(100.0)
        };
    }
    None
}

/// Damped Newton centering. `value` returns `None` off the domain;
/// `accept` can veto a step, which ends the centering; `stop` ends the loop
/// early.
#[allow(clippy::too_many_arguments)]
fn centering<S: Scalar>(
    z: &mut Vec<S>,
    value: impl Fn(&[S]) -> Option<S>,
    derivs: impl Fn(&[S]) -> (Vec<S>, SymMatrix<S>, SymMatrix<S>),
    accept: impl Fn(&[S], &[S]) -> bool,
    stop: impl Fn(&[S]) -> bool,
    mut on_step: impl FnMut(&[S]),
    budget: &mut usize,
    max_steps: usize,
) -> NewtonExit {
    let mut current = match value(z) {
        Some(v) => v,
        None => return NewtonExit::Stalled,
    };
    for _ in 0..max_steps {
        if *budget == 0 {
            return NewtonExit::Budget;
        }
        *budget -= 1;
        let (grad, primary, fallback) = derivs(z);
        let Some(step) = newton_solve(&grad, &primary, &fallback) else {
            return NewtonExit::Stalled;
        };
        let slope = grad.iter().zip(&step).fold(S::zero(), |a, (&g, &d)| a + g * d);
        if -slope / S::lit(2.0) <= S::lit(1e-11) {
            return NewtonExit::Converged;
        }
        let mut alpha = S::one();
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<S> = z.iter().zip(&step).map(|(&v, &d)| v + alpha * d).collect();
            if trial == *z {
                break;
            }
            if let Some(v) = value(&trial) {
                if v <= current + S::lit(0.25) * alpha * slope {
                    if !accept(z, &trial) {
                        return NewtonExit::Vetoed;
                    }
                    *z = trial;
                    current = v;
                    moved = true;
                    break;
                }
            }
            alpha = alpha * S::lit(0.5);
        }
        if !moved {
            return NewtonExit::Stalled;
        }
        on_step(z);
        if stop(z) {
            return NewtonExit::Stopped;
        }
    }
    NewtonExit::Converged
}

const MAX_CENTERING_STEPS: usize = 80;
const T_GROWTH: f64 = 10.0;
const T_MAX: f64 = 1e14;

fn phase_one<S: Scalar>(c: &Compiled<'_, S>, z0: Vec<S>, eps: S, t_init: S, budget: &mut usize) -> PhaseOne<S> {
    let x0 = c.full(&z0);
    let vals = c.values(&x0);
    let worst = vals.iter().copied().fold(S::neg_infinity(), S::max);
    if worst < S::zero() || vals.is_empty() {
        return PhaseOne::Found(z0);
    }
    let d = z0.len();
    let mut w = z0;
    w.push(worst + S::one());
    let feasible = |w: &[S]| {
        let x = c.full(&w[..d]);
        c.values(&x).iter().all(|&v| v < S::zero())
    };
    let mut t = t_init;
    loop {
        let exit = centering(
            &mut w,
            |w| c.phase1_value(w, t),
            |w| {
                let (g, h) = c.phase1_derivs(w, t);
                (g, h.clone(), h)
            },
            |_, _| true,
            feasible,
            |_| {},
            budget,
            MAX_CENTERING_STEPS,
        );
        if let NewtonExit::Stopped = exit {
            w.truncate(d);
            return PhaseOne::Found(w);
        }
        let s = w[d];
        let gap = S::count(c.cons.len()) / t;
        if gap < eps || t > S::lit(T_MAX) || matches!(exit, NewtonExit::Budget) {
            let x = c.full(&w[..d]);
            let raw: Vec<S> = c.values(&x).iter().map(|&v| S::one() / (s - v)).collect();
            let total: S = raw.iter().copied().sum();
            let weights: Vec<S> = raw.iter().map(|&r| r / total).collect();
            let lb = c.linearized_bound(&w[..d], &weights, false);
            w.truncate(d);
            if lb > S::lit(10.0) * eps {
                return PhaseOne::Infeasible { lower_bound: lb, z: w };
            }
            return PhaseOne::Stalled { best: s, z: w };
        }
        t = t * S::lit(T_GROWTH);
    }
}

struct PhaseTwo<S> {
    z: Vec<S>,
    t: S,
    trace: Vec<S>,
}

fn phase_two<S: Scalar>(c: &Compiled<'_, S>, z0: Vec<S>, eps: S, t_init: S, budget: &mut usize) -> PhaseTwo<S> {
    let mut z = z0;
    let mut t = t_init;
    let mut trace = vec![c.objective(&c.full(&z))];
    if c.free_slacks.is_empty() && c.prog.bindings().is_empty() {
        return PhaseTwo { z, t, trace };
    }
    loop {
        let mut steps = Vec::new();
        let exit = centering(
            &mut z,
            |z| c.phase2_value(z, t).map(|(phi, _)| phi),
            |z| c.phase2_derivs(z, t),
            |old, new| {
                let f_old = c.objective(&c.full(old));
                let f_new = c.objective(&c.full(new));
                f_new <= f_old
            },
            |_| false,
            |z| steps.push(c.objective(&c.full(z))),
            budget,
            MAX_CENTERING_STEPS,
        );
        trace.extend(steps);
        let f = *trace.last().expect("trace starts non-empty");
        let done = if c.convex {
            S::count(c.barrier_terms()) / t < eps * S::lit(0.1)
        } else {
            f < eps * S::lit(0.01)
        };
        if done || t > S::lit(T_MAX) || matches!(exit, NewtonExit::Budget) {
            return PhaseTwo { z, t, trace };
        }
        t = t * S::lit(T_GROWTH);
    }
}

fn perturbed_start<S: Scalar>(c: &Compiled<'_, S>, base: &[S], rng: &mut ChaCha8Rng) -> Option<Vec<S>> {
    let mut sigma = 0.7;
    for _ in 0..20 {
        let z: Vec<S> = base
            .iter()
            .enumerate()
            .map(|(r, &v)| {
                if c.free_slacks.contains(&r) {
                    v
                } else {
                    v + S::lit(rng.gen_range(-sigma..sigma))
                }
            })
            .collect();
        if c.domain_ok(&z) {
            return Some(z);
        }
        sigma *= 0.5;
    }
    None
}

/// Solves `p` to accuracy `eps_feas` within `max_iter` Newton steps.
pub fn solve<S: Scalar>(p: &LogConvexProgram<S>, opts: &SolveOptions<S>) -> SolveResult<S> {
    let eps = opts.eps_feas;
    let start = p.start();
    let undecided = |detail: String| SolveResult {
        status: Status::Undecided,
        objective: p.objective(&start),
        point: start.clone(),
        iterations: 0,
        max_violation: S::infinity(),
        lower_bound: None,
        objective_trace: Vec::new(),
        detail,
    };
    if let Err(e) = p.validate() {
        return undecided(e.to_string());
    }
    let compiled = match Compiled::new(p) {
        Ok(c) => c,
        Err(msg) => {
            return SolveResult {
                status: Status::Infeasible,
                lower_bound: None,
                ..undecided(msg)
            }
        }
    };
    let base = compiled.reduce(&start);
    if !compiled.domain_ok(&base) && !compiled.in_box(&base) {
        return undecided("interior start lies outside the box".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut budget = opts.max_iter;
    let mut best: Option<SolveResult<S>> = None;
    let runs = if compiled.convex { 1 } else { opts.restarts + 1 };
    for run in 0..runs {
        let z0 = if run == 0 {
            base.clone()
        } else {
            match perturbed_start(&compiled, &base, &mut rng) {
                Some(z) => z,
                None => continue,
            }
        };
        let mut result = single_run(&compiled, z0, eps, opts.t_init, &mut budget);
        result.iterations = opts.max_iter - budget;
        match result.status {
            Status::Feasible | Status::Infeasible => return result,
            Status::Undecided => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| result.objective < b.objective || b.max_violation > eps);
                if (better && result.max_violation <= eps) || best.is_none() {
                    best = Some(result);
                }
            }
        }
        if budget == 0 {
            break;
        }
    }
    let mut out = best.unwrap_or_else(|| undecided("no usable start".into()));
    out.iterations = opts.max_iter - budget;
    out
}

fn single_run<S: Scalar>(c: &Compiled<'_, S>, z0: Vec<S>, eps: S, t_init: S, budget: &mut usize) -> SolveResult<S> {
    let finish = |z: &[S], status: Status, lb: Option<S>, trace: Vec<S>, detail: String| {
        let x = c.full(z);
        let objective = c.objective(&x);
        let max_violation = max_violation(c.prog, &x);
        SolveResult {
            status,
            point: x,
            objective,
            iterations: 0,
            max_violation,
            lower_bound: lb,
            objective_trace: trace,
            detail,
        }
    };
    let z = match phase_one(c, z0, eps, t_init, budget) {
        PhaseOne::Found(z) => z,
        PhaseOne::Infeasible { lower_bound, z } => {
            return finish(
                &z,
                Status::Infeasible,
                None,
                Vec::new(),
                format!("constraints cannot be met inside the box: max violation >= {lower_bound:.3e}"),
            )
        }
        PhaseOne::Stalled { best, z } => {
            return finish(
                &z,
                Status::Undecided,
                None,
                Vec::new(),
                format!("phase I stalled with max violation {best}"),
            )
        }
    };
    let two = phase_two(c, z, eps, t_init, budget);
    let x = c.full(&two.z);
    let objective = c.objective(&x);
    let lb = if c.convex {
        // The returned point keeps the objective monotone; the bound comes from
        // a copy centered without that restriction, so its dual weights are sharp.
        let mut zc = two.z.clone();
        let t = two.t;
        let mut spare = MAX_CENTERING_STEPS;
        centering(
            &mut zc,
            |z| c.phase2_value(z, t).map(|(phi, _)| phi),
            |z| c.phase2_derivs(z, t),
            |_, _| true,
            |_| false,
            |_| {},
            &mut spare,
            MAX_CENTERING_STEPS,
        );
        let xc = c.full(&zc);
        let weights: Vec<S> = c
            .values(&xc)
            .iter()
            .map(|&v| S::one() / (t * (-v)))
            .collect();
        Some(c.linearized_bound(&zc, &weights, true))
    } else {
        None
    };
    let viol = max_violation(c.prog, &x);
    let tol = S::lit(1e-6) * c.prog.box_bound().max(S::one());
    let at_boundary = two
        .z
        .iter()
        .zip(c.lower.iter().zip(&c.upper))
        .enumerate()
        .any(|(r, (&v, (&lo, &hi)))| {
            hi - v < tol || (!c.free_slacks.contains(&r) && v - lo < tol)
        });
    let (status, detail) = if objective <= eps && viol <= eps && !at_boundary {
        (Status::Feasible, "slack objective reached zero".to_string())
    } else if lb.is_some_and(|b| b > S::lit(10.0) * eps) {
        (
            Status::Infeasible,
            format!("certified lower bound {:.3e} on the slack objective", lb.unwrap_or_default()),
        )
    } else if at_boundary && objective <= eps {
        (Status::Undecided, "solution touches the box bound".to_string())
    } else {
        (Status::Undecided, format!("slack objective stalled at {objective:.3e}"))
    };
    finish(&two.z, status, lb, two.trace, detail)
}

/// Largest constraint violation at a full point (negative slacks included).
pub fn max_violation<S: Scalar>(p: &LogConvexProgram<S>, x: &[S]) -> S {
    let cons = p
        .constraints()
        .iter()
        .map(|c| c.eval(x))
        .fold(S::zero(), S::max);
    p.variables()
        .iter()
        .zip(x)
        .filter(|(v, _)| v.kind == VarKind::Slack)
        .map(|(_, &v)| -v)
        .fold(cons, S::max)
}
