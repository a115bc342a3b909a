//! Control problems with a scalar cost and isoperimetric constraints, or a
//! vector cost, and their Hamiltonians.
//!
//! Variable naming is fixed: `t`, states `x1..xn`, controls `u1..ur`, group
//! parameter `s`, cost multiplier `psi0`, costates `psi1..psin` and
//! multipliers `lambda1..lambdaN`. Problem constants share the namespace.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};

/// Variable names.
pub mod vars {
    pub const TIME: &str = "t";
    pub const GROUP: &str = "s";
    pub const COST_MULTIPLIER: &str = "psi0";

    pub fn state(i: usize) -> String {
        format!("x{}", i + 1)
    }

    pub fn control(j: usize) -> String {
        format!("u{}", j + 1)
    }

    pub fn costate(i: usize) -> String {
        format!("psi{}", i + 1)
    }

    pub fn multiplier(j: usize) -> String {
        format!("lambda{}", j + 1)
    }

    /// True for `t`, `s` and any `x<k>`, `u<k>`, `psi<k>`, `lambda<k>`.
    pub fn is_reserved(name: &str) -> bool {
        if name == TIME || name == GROUP {
            return true;
        }
        ["x", "u", "psi", "lambda"].iter().any(|p| {
            name.strip_prefix(p)
                .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    Equality,
    Inequality,
}

/// Integral constraint `∫ g dt = xi` or `∫ g dt <= xi`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsoConstraint {
    pub g: Expr,
    pub xi: f64,
    pub kind: ConstraintKind,
}

/// Closed interval for one control; a missing side is unbounded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

impl Bound {
    pub fn closed(lo: f64, hi: f64) -> Self {
        Bound {
            lo: Some(lo),
            hi: Some(hi),
        }
    }

    pub fn unbounded() -> Self {
        Bound::default()
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        self.lo.is_none_or(|lo| v >= lo - slack) && self.hi.is_none_or(|hi| v <= hi + slack)
    }

    pub fn clamp(&self, v: f64) -> f64 {
        let v = self.lo.map_or(v, |lo| v.max(lo));
        self.hi.map_or(v, |hi| v.min(hi))
    }
}

/// On-disk problem description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    pub r: usize,
    #[serde(rename = "N")]
    pub cost_count: usize,
    pub a: f64,
    pub b: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<Vec<f64>>,
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    pub phi: Vec<Expr>,
    #[serde(rename = "L")]
    pub costs: Vec<Expr>,
    #[serde(default)]
    pub constraints: Vec<IsoConstraint>,
    pub omega: Vec<Bound>,
}

/// A validated control problem.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlProblem {
    file: ProblemFile,
}

impl ControlProblem {
    pub fn new(file: ProblemFile) -> Result<Self> {
        validate(&file)?;
        Ok(ControlProblem { file })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        ControlProblem::new(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("problem serializes")
    }

    pub fn file(&self) -> &ProblemFile {
        &self.file
    }

    pub fn n(&self) -> usize {
        self.file.n
    }

    pub fn r(&self) -> usize {
        self.file.r
    }

    pub fn cost_count(&self) -> usize {
        self.file.cost_count
    }

    pub fn a(&self) -> f64 {
        self.file.a
    }

    pub fn b(&self) -> f64 {
        self.file.b
    }

    pub fn alpha(&self) -> Option<&[f64]> {
        self.file.alpha.as_deref()
    }

    pub fn beta(&self) -> Option<&[f64]> {
        self.file.beta.as_deref()
    }

    pub fn phi(&self) -> &[Expr] {
        &self.file.phi
    }

    pub fn costs(&self) -> &[Expr] {
        &self.file.costs
    }

    pub fn constraints(&self) -> &[IsoConstraint] {
        &self.file.constraints
    }

    pub fn equality_count(&self) -> usize {
        self.file
            .constraints
            .iter()
            .filter(|c| c.kind == ConstraintKind::Equality)
            .count()
    }

    pub fn omega(&self) -> &[Bound] {
        &self.file.omega
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        &self.file.constants
    }

    /// Environment holding only the problem constants.
    pub fn constants_env(&self) -> Env {
        self.file.constants.iter().map(|(k, v)| (k.clone(), *v)).collect()
    }

    pub fn with_boundary(mut self, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        self.file.alpha = Some(alpha);
        self.file.beta = Some(beta);
        validate(&self.file)?;
        Ok(self)
    }

    pub fn with_horizon(mut self, a: f64, b: f64) -> Result<Self> {
        self.file.a = a;
        self.file.b = b;
        validate(&self.file)?;
        Ok(self)
    }

    /// Names of `t`, the states and the controls, in that order.
    pub fn point_names(&self) -> Vec<String> {
        let mut names = vec![vars::TIME.to_string()];
        names.extend((0..self.n()).map(vars::state));
        names.extend((0..self.r()).map(vars::control));
        names
    }
}

fn validate(f: &ProblemFile) -> Result<()> {
    let bad = |m: String| Err(Error::InvalidProblem(m));
    if f.n == 0 {
        return bad("n must be at least 1".into());
    }
    if f.phi.len() != f.n {
        return bad(format!("phi has {} entries, expected n = {}", f.phi.len(), f.n));
    }
    if f.cost_count == 0 {
        return bad("N must be at least 1".into());
    }
    if f.costs.len() != f.cost_count {
        return bad(format!(
            "L has {} entries, expected N = {}",
            f.costs.len(),
            f.cost_count
        ));
    }
    if f.omega.len() != f.r {
        return bad(format!("omega has {} entries, expected r = {}", f.omega.len(), f.r));
    }
    if !(f.a.is_finite() && f.b.is_finite() && f.a < f.b) {
        return bad(format!("need finite a < b, got a = {}, b = {}", f.a, f.b));
    }
    for (label, v) in [("alpha", &f.alpha), ("beta", &f.beta)] {
        if let Some(v) = v {
            if v.len() != f.n {
                return bad(format!("{label} has length {}, expected {}", v.len(), f.n));
            }
        }
    }
    for (j, b) in f.omega.iter().enumerate() {
        if let (Some(lo), Some(hi)) = (b.lo, b.hi) {
            if lo > hi {
                return bad(format!("omega[{j}] has lo > hi"));
            }
        }
    }
    if let Some(pos) = f
        .constraints
        .windows(2)
        .position(|w| w[0].kind == ConstraintKind::Inequality && w[1].kind == ConstraintKind::Equality)
    {
        return bad(format!(
            "constraint {} is an equality listed after an inequality",
            pos + 2
        ));
    }
    for name in f.constants.keys() {
        if vars::is_reserved(name) {
            return bad(format!("constant `{name}` collides with a reserved variable name"));
        }
    }
    let mut allowed: Vec<String> = vec![vars::TIME.into()];
    allowed.extend((0..f.n).map(vars::state));
    allowed.extend((0..f.r).map(vars::control));
    allowed.extend(f.constants.keys().cloned());
    let exprs = f
        .phi
        .iter()
        .map(|e| ("phi", e))
        .chain(f.costs.iter().map(|e| ("L", e)))
        .chain(f.constraints.iter().map(|c| ("g", &c.g)));
    for (label, e) in exprs {
        if let Some(v) = e.variables().into_iter().find(|v| !allowed.contains(v)) {
            return bad(format!("{label} entry `{e}` references undeclared `{v}`"));
        }
    }
    Ok(())
}

/// Which Hamiltonian a quantity refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProblemForm {
    /// Scalar cost with isoperimetric constraints.
    P1,
    /// Vector-valued cost.
    P,
}

/// Constant multipliers paired with the costate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi0: Option<f64>,
    pub lambda: Vec<f64>,
}

impl Multipliers {
    /// Multipliers for the scalar problem: `psi0 <= 0` and `lambda_j <= 0`
    /// for the inequality constraints (indices past `equality_count`).
    pub fn p1(psi0: f64, lambda: Vec<f64>, equality_count: usize) -> Result<Self> {
        if !(psi0 <= 0.0) {
            return Err(Error::InvalidMultipliers(format!("psi0 = {psi0} must be <= 0")));
        }
        if let Some((j, v)) = lambda
            .iter()
            .enumerate()
            .skip(equality_count)
            .find(|(_, v)| !(**v <= 0.0))
        {
            return Err(Error::InvalidMultipliers(format!(
                "lambda{} = {v} belongs to an inequality constraint and must be <= 0",
                j + 1
            )));
        }
        Ok(Multipliers {
            psi0: Some(psi0),
            lambda,
        })
    }

    /// Multipliers for the vector problem: every `lambda_j <= 0`.
    pub fn p(lambda: Vec<f64>) -> Result<Self> {
        if let Some((j, v)) = lambda.iter().enumerate().find(|(_, v)| !(**v <= 0.0)) {
            return Err(Error::InvalidMultipliers(format!("lambda{} = {v} must be <= 0", j + 1)));
        }
        Ok(Multipliers { psi0: None, lambda })
    }

    pub fn form(&self) -> ProblemForm {
        if self.psi0.is_some() {
            ProblemForm::P1
        } else {
            ProblemForm::P
        }
    }

    pub fn scaled(&self, c: f64) -> Multipliers {
        Multipliers {
            psi0: self.psi0.map(|v| v * c),
            lambda: self.lambda.iter().map(|v| v * c).collect(),
        }
    }

    pub fn bind(&self, env: &mut Env) {
        if let Some(p0) = self.psi0 {
            env.set(vars::COST_MULTIPLIER, p0);
        }
        env.set_indexed("lambda", &self.lambda);
    }
}

/// Hamiltonian of a problem in one of the two forms.
#[derive(Clone, Debug, PartialEq)]
pub struct Hamiltonian {
    expr: Expr,
    form: ProblemForm,
    n: usize,
    r: usize,
    multiplier_count: usize,
    equality_count: usize,
    constants: Env,
}

/// `psi0 L + psi·phi + lambda·g` for a scalar-cost problem.
pub fn build_hamiltonian_p1(p: &ControlProblem) -> Result<Hamiltonian> {
    if p.cost_count() != 1 {
        return Err(Error::InvalidProblem(format!(
            "the P1 Hamiltonian needs a scalar cost, problem has N = {}",
            p.cost_count()
        )));
    }
    let cost = Expr::var(vars::COST_MULTIPLIER) * p.costs()[0].clone();
    let dynamics = p
        .phi()
        .iter()
        .enumerate()
        .map(|(i, f)| Expr::var(vars::costate(i)) * f.clone());
    let constraints = p
        .constraints()
        .iter()
        .enumerate()
        .map(|(j, c)| Expr::var(vars::multiplier(j)) * c.g.clone());
    let expr = Expr::sum(std::iter::once(cost).chain(dynamics).chain(constraints)).simplify();
    Ok(Hamiltonian {
        expr,
        form: ProblemForm::P1,
        n: p.n(),
        r: p.r(),
        multiplier_count: p.constraints().len(),
        equality_count: p.equality_count(),
        constants: p.constants_env(),
    })
}

/// `lambda·L + psi·phi` for a vector-cost problem.
pub fn build_hamiltonian_p(p: &ControlProblem) -> Result<Hamiltonian> {
    if !p.constraints().is_empty() {
        return Err(Error::InvalidProblem(
            "the P Hamiltonian takes no isoperimetric constraints".into(),
        ));
    }
    let costs = p
        .costs()
        .iter()
        .enumerate()
        .map(|(j, l)| Expr::var(vars::multiplier(j)) * l.clone());
    let dynamics = p
        .phi()
        .iter()
        .enumerate()
        .map(|(i, f)| Expr::var(vars::costate(i)) * f.clone());
    let expr = Expr::sum(costs.chain(dynamics)).simplify();
    Ok(Hamiltonian {
        expr,
        form: ProblemForm::P,
        n: p.n(),
        r: p.r(),
        multiplier_count: p.cost_count(),
        equality_count: 0,
        constants: p.constants_env(),
    })
}

/// Builds the Hamiltonian matching `form`.
pub fn build_hamiltonian(p: &ControlProblem, form: ProblemForm) -> Result<Hamiltonian> {
    match form {
        ProblemForm::P1 => build_hamiltonian_p1(p),
        ProblemForm::P => build_hamiltonian_p(p),
    }
}

impl Hamiltonian {
    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn form(&self) -> ProblemForm {
        self.form
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn multiplier_count(&self) -> usize {
        self.multiplier_count
    }

    pub fn constants(&self) -> &Env {
        &self.constants
    }

    /// `-∂H/∂x_i` for each state: the costate right-hand side.
    pub fn adjoint_rhs(&self) -> Vec<Expr> {
        (0..self.n)
            .map(|i| (-self.expr.diff(&vars::state(i))).simplify())
            .collect()
    }

    /// `∂H/∂psi_i` for each costate: the state right-hand side.
    pub fn state_rhs(&self) -> Vec<Expr> {
        (0..self.n).map(|i| self.expr.diff(&vars::costate(i))).collect()
    }

    /// Every variable name H may reference, in slot order: `t`, states,
    /// controls, `psi0` (P1 only), costates, multipliers, then constants.
    pub fn variable_names(&self) -> Vec<String> {
        let mut names = vec![vars::TIME.to_string()];
        names.extend((0..self.n).map(vars::state));
        names.extend((0..self.r).map(vars::control));
        if self.form == ProblemForm::P1 {
            names.push(vars::COST_MULTIPLIER.to_string());
        }
        names.extend((0..self.n).map(vars::costate));
        names.extend((0..self.multiplier_count).map(vars::multiplier));
        names.extend(self.constants.iter().map(|(k, _)| k.to_string()));
        names
    }

    /// Rejects multipliers of the wrong form, count or sign.
    pub fn check_multipliers(&self, m: &Multipliers) -> Result<()> {
        if m.form() != self.form {
            return Err(Error::InvalidMultipliers(format!(
                "{:?} multipliers given for a {:?} Hamiltonian",
                m.form(),
                self.form
            )));
        }
        if m.lambda.len() != self.multiplier_count {
            return Err(Error::InvalidMultipliers(format!(
                "expected {} lambda values, got {}",
                self.multiplier_count,
                m.lambda.len()
            )));
        }
        match self.form {
            ProblemForm::P1 => {
                Multipliers::p1(m.psi0.unwrap_or(0.0), m.lambda.clone(), self.equality_count)?;
            }
            ProblemForm::P => {
                Multipliers::p(m.lambda.clone())?;
            }
        }
        Ok(())
    }

    /// Full environment for evaluating H at a phase point.
    pub fn env(&self, t: f64, x: &[f64], u: &[f64], psi: &[f64], m: &Multipliers) -> Env {
        let mut env = self.constants.clone();
        env.set(vars::TIME, t);
        env.set_indexed("x", x);
        env.set_indexed("u", u);
        env.set_indexed("psi", psi);
        m.bind(&mut env);
        env
    }

    pub fn eval(&self, t: f64, x: &[f64], u: &[f64], psi: &[f64], m: &Multipliers) -> Result<f64> {
        self.expr.eval(&self.env(t, x, u, psi, m))
    }
}
