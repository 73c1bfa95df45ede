use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{log_sum_exp, Scalar};

/// `constant + Σ coef * x[var]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct Affine<S> {
    pub constant: S,
    pub terms: Vec<(usize, S)>,
}

impl<S: Scalar> Affine<S> {
    pub fn constant(c: S) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn var(index: usize) -> Self {
        Self::constant(S::zero()).plus(index, S::one())
    }

    /// Adds `coef * x[index]`, merging with an existing term.
    pub fn plus(mut self, index: usize, coef: S) -> Self {
        match self.terms.iter_mut().find(|(i, _)| *i == index) {
            Some((_, c)) => *c = *c + coef,
            None => self.terms.push((index, coef)),
        }
        self.terms.retain(|&(_, c)| c != S::zero());
        self.terms.sort_by_key(|&(i, _)| i);
        self
    }

    pub fn shift(mut self, c: S) -> Self {
        self.constant = self.constant + c;
        self
    }

    pub fn eval(&self, x: &[S]) -> S {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(i, c)| acc + c * x[i])
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    fn minus(&self, other: &Self) -> Self {
        let mut out = self.clone().shift(-other.constant);
        for &(i, c) in &other.terms {
            out = out.plus(i, -c);
        }
        out
    }
}

/// `coef * exp(exponent(x))` with `coef > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ExpTerm<S> {
    pub coef: S,
    pub exponent: Affine<S>,
}

impl<S: Scalar> ExpTerm<S> {
    pub fn new(coef: S, exponent: Affine<S>) -> Self {
        Self { coef, exponent }
    }

    fn value(&self, x: &[S]) -> S {
        self.coef * self.exponent.eval(x).exp()
    }
}

/// `log Σ_j C_j exp(a_j(x))`, convex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LogSumExp<S> {
    pub terms: Vec<ExpTerm<S>>,
}

/// `log(K - Σ_j D_j exp(b_j(x)) - Σ_i c_i x_i)`, concave where the argument
/// is positive. The linear part is only used for slack variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LogResidual<S> {
    pub constant: S,
    pub terms: Vec<ExpTerm<S>>,
    pub linear: Vec<(usize, S)>,
}

impl<S: Scalar> LogResidual<S> {
    fn argument(&self, x: &[S]) -> S {
        let exp: S = self.terms.iter().map(|t| t.value(x)).sum();
        let lin: S = self.linear.iter().map(|&(i, c)| c * x[i]).sum();
        self.constant - exp - lin
    }
}

/// `lhs_affine + lhs_lse <= rhs_affine + rhs_logres`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct ConstraintRecord<S> {
    pub label: String,
    pub lhs_affine: Affine<S>,
    pub lhs_lse: Option<LogSumExp<S>>,
    pub rhs_affine: Affine<S>,
    pub rhs_logres: Option<LogResidual<S>>,
}

impl<S: Scalar> ConstraintRecord<S> {
    pub fn new(label: impl Into<String>) -> Self {
        Self {
            label: label.into(),
            lhs_affine: Affine::default(),
            lhs_lse: None,
            rhs_affine: Affine::default(),
            rhs_logres: None,
        }
    }

    pub fn lhs_affine(mut self, a: Affine<S>) -> Self {
        self.lhs_affine = a;
        self
    }

    pub fn lhs_lse(mut self, terms: Vec<ExpTerm<S>>) -> Self {
        self.lhs_lse = Some(LogSumExp { terms });
        self
    }

    pub fn rhs_affine(mut self, a: Affine<S>) -> Self {
        self.rhs_affine = a;
        self
    }

    pub fn rhs_logres(mut self, constant: S, terms: Vec<ExpTerm<S>>, linear: Vec<(usize, S)>) -> Self {
        self.rhs_logres = Some(LogResidual {
            constant,
            terms,
            linear,
        });
        self
    }

    /// Variables the constraint depends on.
    pub fn variables(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self.net_affine().terms.iter().map(|&(i, _)| i).collect();
        let exp_terms = self
            .lhs_lse
            .iter()
            .flat_map(|l| &l.terms)
            .chain(self.rhs_logres.iter().flat_map(|r| &r.terms));
        for t in exp_terms {
            vars.extend(t.exponent.terms.iter().map(|&(i, _)| i));
        }
        if let Some(r) = &self.rhs_logres {
            vars.extend(r.linear.iter().map(|&(i, _)| i));
        }
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// `lhs_affine - rhs_affine` with like terms merged.
    pub(crate) fn net_affine(&self) -> Affine<S> {
        self.lhs_affine.minus(&self.rhs_affine)
    }

    /// Residual argument of the right-hand log term, if any.
    pub fn residual(&self, x: &[S]) -> Option<S> {
        self.rhs_logres.as_ref().map(|r| r.argument(x))
    }

    fn lse_value(&self, x: &[S]) -> S {
        match &self.lhs_lse {
            Some(l) => log_sum_exp(
                l.terms
                    .iter()
                    .map(|t| t.coef.ln() + t.exponent.eval(x))
                    .collect::<Vec<_>>(),
            ),
            None => S::zero(),
        }
    }

    /// `g(x) = LHS - RHS`, or `+inf` outside the log-residual domain.
    pub fn eval(&self, x: &[S]) -> S {
        let mut g = self.net_affine().eval(x) + self.lse_value(x);
        if let Some(r) = self.residual(x) {
            if !(r > S::zero()) {
                return S::infinity();
            }
            g = g - r.ln();
        }
        g
    }

    /// Sparse gradient (duplicated indices allowed) and the pieces needed for
    /// the Hessian. `None` outside the domain.
    fn derivatives(&self, x: &[S]) -> Option<Derivatives<S>> {
        let mut grad: Vec<(usize, S)> = self.net_affine().terms.clone();
        let mut lse_parts = Vec::new();
        let mut lse_mean: Vec<(usize, S)> = Vec::new();
        if let Some(l) = &self.lhs_lse {
            let logs: Vec<S> = l
                .terms
                .iter()
                .map(|t| t.coef.ln() + t.exponent.eval(x))
                .collect();
            let lse = log_sum_exp(logs.iter().copied());
            for (t, &lv) in l.terms.iter().zip(&logs) {
                let w = (lv - lse).exp();
                lse_parts.push((w, t.exponent.terms.clone()));
                for &(i, c) in &t.exponent.terms {
                    lse_mean.push((i, w * c));
                }
            }
            grad.extend(lse_mean.iter().copied());
        }
        let mut residual = None;
        if let Some(r) = &self.rhs_logres {
            let arg = r.argument(x);
            if !(arg > S::zero()) {
                return None;
            }
            // grad R = -Σ D e^b grad b - linear
            let mut grad_r: Vec<(usize, S)> = Vec::new();
            let mut curv = Vec::new();
            for t in &r.terms {
                let v = t.value(x);
                curv.push((v, t.exponent.terms.clone()));
                for &(i, c) in &t.exponent.terms {
                    grad_r.push((i, -v * c));
                }
            }
            for &(i, c) in &r.linear {
                grad_r.push((i, -c));
            }
            for &(i, c) in &grad_r {
                grad.push((i, -c / arg));
            }
            residual = Some(ResidualParts { arg, grad_r, curv });
        }
        Some(Derivatives {
            grad,
            lse_parts,
            lse_mean,
            residual,
        })
    }

    /// Dense gradient of `g`.
    pub fn gradient(&self, x: &[S]) -> Option<Vec<S>> {
        let d = self.derivatives(x)?;
        let mut out = vec![S::zero(); x.len()];
        for (i, v) in d.grad {
            out[i] = out[i] + v;
        }
        Some(out)
    }
}

pub(crate) struct ResidualParts<S> {
    arg: S,
    grad_r: Vec<(usize, S)>,
    /// `(D_j e^{b_j}, grad b_j)`
    curv: Vec<(S, Vec<(usize, S)>)>,
}

pub(crate) struct Derivatives<S> {
    pub(crate) grad: Vec<(usize, S)>,
    lse_parts: Vec<(S, Vec<(usize, S)>)>,
    lse_mean: Vec<(usize, S)>,
    residual: Option<ResidualParts<S>>,
}

impl<S: Scalar> Derivatives<S> {
    /// `hess += scale * Hessian(g)`, restricted through `map`.
    pub(crate) fn add_hessian(&self, hess: &mut SymMatrix<S>, scale: S, map: &[Option<usize>]) {
        let remap = |v: &[(usize, S)]| -> Vec<(usize, S)> {
            v.iter()
                .filter_map(|&(i, c)| map[i].map(|r| (r, c)))
                .collect()
        };
        for (w, a) in &self.lse_parts {
            hess.add_outer(&remap(a), scale * *w);
        }
        if !self.lse_parts.is_empty() {
            hess.add_outer(&remap(&self.lse_mean), -scale);
        }
        if let Some(r) = &self.residual {
            for (v, b) in &r.curv {
                hess.add_outer(&remap(b), scale * *v / r.arg);
            }
            hess.add_outer(&remap(&r.grad_r), scale / (r.arg * r.arg));
        }
    }
}

pub(crate) fn constraint_derivatives<S: Scalar>(
    c: &ConstraintRecord<S>,
    x: &[S],
) -> Option<Derivatives<S>> {
    c.derivatives(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    /// Logarithm of a positive quantity, confined to `[-B, B]`.
    Log,
    /// Nonnegative slack entering the objective with coefficient one.
    Slack,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
}

/// Ties a slack to the balance constraint it closes: at every point the
/// slack equals the unused part of that constraint's bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlackBinding {
    pub slack: usize,
    pub constraint: usize,
}

/// Minimize the sum of slacks subject to log-domain constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Scalar")]
pub struct LogConvexProgram<S> {
    variables: Vec<Variable>,
    start: Vec<S>,
    constraints: Vec<ConstraintRecord<S>>,
    bindings: Vec<SlackBinding>,
    box_bound: S,
}

pub const DEFAULT_BOX_BOUND: f64 = 30.0;

impl<S: Scalar> Default for LogConvexProgram<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> LogConvexProgram<S> {
    pub fn new() -> Self {
        Self {
            variables: Vec::new(),
            start: Vec::new(),
            constraints: Vec::new(),
            bindings: Vec::new(),
            box_bound: S::lit(DEFAULT_BOX_BOUND),
        }
    }

    pub fn with_box_bound(mut self, bound: S) -> Self {
        self.box_bound = bound;
        self
    }

    /// Adds a log-variable with its interior starting value.
    pub fn add_log_var(&mut self, name: impl Into<String>, start: S) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            kind: VarKind::Log,
        });
        self.start.push(start);
        self.variables.len() - 1
    }

    /// Adds a free nonnegative slack starting at `start`.
    pub fn add_slack(&mut self, name: impl Into<String>, start: S) -> usize {
        self.variables.push(Variable {
            name: name.into(),
            kind: VarKind::Slack,
        });
        self.start.push(start);
        self.variables.len() - 1
    }

    /// Moves the starting value of a variable; bound slacks are recomputed
    /// from their balance anyway.
    pub fn set_start(&mut self, index: usize, value: S) {
        self.start[index] = value;
    }

    pub fn add_constraint(&mut self, c: ConstraintRecord<S>) -> usize {
        self.constraints.push(c);
        self.constraints.len() - 1
    }

    /// Declares `slack` to be the residual of the balance constraint
    /// `log Σ C e^a <= log(K - Σ D e^b - slack)`.
    pub fn bind_slack(&mut self, slack: usize, constraint: usize) {
        self.bindings.push(SlackBinding { slack, constraint });
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn constraints(&self) -> &[ConstraintRecord<S>] {
        &self.constraints
    }

    pub fn bindings(&self) -> &[SlackBinding] {
        &self.bindings
    }

    pub fn box_bound(&self) -> S {
        self.box_bound
    }

    pub fn dim(&self) -> usize {
        self.variables.len()
    }

    /// Interior start with every bound slack set to its balance residual.
    pub fn start(&self) -> Vec<S> {
        let mut x = self.start.clone();
        self.fill_bound_slacks(&mut x);
        x
    }

    /// Sum of the slack variables at `x`.
    pub fn objective(&self, x: &[S]) -> S {
        self.variables
            .iter()
            .zip(x)
            .filter(|(v, _)| v.kind == VarKind::Slack)
            .map(|(_, &x)| x)
            .sum()
    }

    /// Value a bound slack takes when its balance constraint holds with equality.
    pub(crate) fn balance_residual(&self, binding: &SlackBinding, x: &[S]) -> S {
        let c = &self.constraints[binding.constraint];
        let lhs: S = c
            .lhs_lse
            .iter()
            .flat_map(|l| &l.terms)
            .map(|t| t.value(x))
            .sum();
        let r = c.rhs_logres.as_ref().expect("validated binding");
        let exp: S = r.terms.iter().map(|t| t.value(x)).sum();
        r.constant - exp - lhs
    }

    pub(crate) fn fill_bound_slacks(&self, x: &mut [S]) {
        for b in &self.bindings {
            x[b.slack] = self.balance_residual(b, x);
        }
    }

    /// Structural checks: indices in range, positive coefficients, bound
    /// slacks used only in their own balance constraint of the right shape.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let bad = |msg: String| Err(Error::MalformedProgram(msg));
        if !(self.box_bound > S::zero()) {
            return bad("box bound must be positive".into());
        }
        for (k, c) in self.constraints.iter().enumerate() {
            if let Some(&v) = c.variables().iter().find(|&&v| v >= n) {
                return bad(format!("constraint {k} references unknown variable {v}"));
            }
            let exp_terms = c
                .lhs_lse
                .iter()
                .flat_map(|l| &l.terms)
                .chain(c.rhs_logres.iter().flat_map(|r| &r.terms));
            for t in exp_terms {
                if !(t.coef > S::zero()) {
                    return bad(format!("constraint {k} has a non-positive exponential coefficient"));
                }
                if t.exponent.terms.iter().any(|&(i, _)| self.variables[i].kind != VarKind::Log) {
                    return bad(format!("constraint {k} exponentiates a slack"));
                }
            }
            if let Some(l) = &c.lhs_lse {
                if l.terms.is_empty() {
                    return bad(format!("constraint {k} has an empty log-sum-exp"));
                }
            }
            if let Some(r) = &c.rhs_logres {
                if !(r.constant > S::zero()) {
                    return bad(format!("constraint {k} has a non-positive residual constant"));
                }
            }
        }
        let mut bound = vec![false; n];
        for b in &self.bindings {
            if b.slack >= n || self.variables[b.slack].kind != VarKind::Slack {
                return bad(format!("binding refers to non-slack variable {}", b.slack));
            }
            if bound[b.slack] {
                return bad(format!("slack {} bound twice", b.slack));
            }
            bound[b.slack] = true;
            let Some(c) = self.constraints.get(b.constraint) else {
                return bad(format!("binding refers to unknown constraint {}", b.constraint));
            };
            let shape_ok = c.lhs_affine.is_constant()
                && c.lhs_affine.constant == S::zero()
                && c.rhs_affine.is_constant()
                && c.rhs_affine.constant == S::zero()
                && c.lhs_lse.is_some()
                && c
                    .rhs_logres
                    .as_ref()
                    .is_some_and(|r| r.linear == vec![(b.slack, S::one())]);
            if !shape_ok {
                return bad(format!(
                    "constraint {} is not a balance `log Σ C e^a <= log(K - Σ D e^b - slack)`",
                    b.constraint
                ));
            }
        }
        for (k, c) in self.constraints.iter().enumerate() {
            let own = self.bindings.iter().any(|b| b.constraint == k);
            for v in c.variables() {
                if bound[v] && !own {
                    return bad(format!("bound slack {v} appears outside its balance constraint"));
                }
            }
        }
        Ok(())
    }

    /// One constraint per line with terms in variable-index order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# box {}", self.box_bound);
        for (i, v) in self.variables.iter().enumerate() {
            let kind = match v.kind {
                VarKind::Log => "log",
                VarKind::Slack => "slack",
            };
            let _ = writeln!(out, "var {i} {kind} {}", v.name);
        }
        for b in &self.bindings {
            let _ = writeln!(out, "bind {} c{}", b.slack, b.constraint);
        }
        for (k, c) in self.constraints.iter().enumerate() {
            let _ = writeln!(out, "c{k} {}: {}", c.label, c);
        }
        out
    }
}

impl<S: Scalar> fmt::Display for Affine<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constant)?;
        for &(i, c) in &self.terms {
            write!(f, " {:+}*x{}", c.as_f64(), i)?;
        }
        Ok(())
    }
}

impl<S: Scalar> fmt::Display for ConstraintRecord<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let exp_terms = |f: &mut fmt::Formatter<'_>, terms: &[ExpTerm<S>]| -> fmt::Result {
            for (j, t) in terms.iter().enumerate() {
                if j > 0 {
                    write!(f, " + ")?;
                }
                write!(f, "{}*exp({})", t.coef, t.exponent)?;
            }
            Ok(())
        };
        write!(f, "[{}]", self.lhs_affine)?;
        if let Some(l) = &self.lhs_lse {
            write!(f, " + lse(")?;
            exp_terms(f, &l.terms)?;
            write!(f, ")")?;
        }
        write!(f, " <= [{}]", self.rhs_affine)?;
        if let Some(r) = &self.rhs_logres {
            write!(f, " + logres({}", r.constant)?;
            if !r.terms.is_empty() {
                write!(f, " - ")?;
                exp_terms(f, &r.terms)?;
            }
            for &(i, c) in &r.linear {
                write!(f, " - {c}*x{i}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

/// `g(x) = LHS - RHS` of one constraint; `+inf` outside the residual domain.
pub fn eval_constraint<S: Scalar>(c: &ConstraintRecord<S>, x: &[S]) -> S {
    c.eval(x)
}

/// Gradient of `g`; fails with `DomainViolation` when the residual argument
/// is not positive. `index` is only used to label the error.
pub fn gradient<S: Scalar>(c: &ConstraintRecord<S>, x: &[S], index: usize) -> Result<Vec<S>> {
    c.gradient(x).ok_or(Error::DomainViolation(index))
}
