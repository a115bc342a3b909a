//! One-parameter transformation groups `h^s(t, x, u) = (T, X, U)`, their
//! generators, and numerical verification of the invariance identities.
//!
//! Total time derivatives follow trajectories of the control system: `ẋ` is
//! replaced by `phi(t, x, u)`. A group whose `T` or `X` depends on `u` must
//! declare control rates `uDot`, otherwise the derivative is rejected.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Env, Expr, SlotLayout};
use crate::model::{vars, ControlProblem, ProblemForm};
use crate::sampling::SampleConfig;

const IDENTITY_POINTS: usize = 100;
const IDENTITY_TOL: f64 = 1e-12;
const SMOOTHNESS_POINTS: usize = 20;
const MAX_REPORTED_DOMAIN_ERRORS: usize = 10;

/// On-disk group description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupFile {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub name: String,
    #[serde(rename = "T")]
    pub t_map: Expr,
    #[serde(rename = "X")]
    pub x_map: Vec<Expr>,
    #[serde(rename = "U")]
    pub u_map: Vec<Expr>,
    pub epsilon: f64,
    #[serde(rename = "uDot", default, skip_serializing_if = "Option::is_none")]
    pub u_dot: Option<Vec<Expr>>,
}

/// A one-parameter group of transformations of `(t, x, u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneParamGroup {
    file: GroupFile,
}

impl OneParamGroup {
    pub fn new(file: GroupFile) -> Result<Self> {
        if !(file.epsilon > 0.0 && file.epsilon.is_finite()) {
            return Err(Error::InvalidGroup(format!(
                "epsilon must be positive and finite, got {}",
                file.epsilon
            )));
        }
        if let Some(ud) = &file.u_dot {
            if ud.len() != file.u_map.len() {
                return Err(Error::InvalidGroup(format!(
                    "uDot has {} entries but U has {}",
                    ud.len(),
                    file.u_map.len()
                )));
            }
        }
        Ok(OneParamGroup { file })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        OneParamGroup::new(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.file).expect("group serializes")
    }

    /// Builds a group from expression strings.
    pub fn parse(name: &str, t_map: &str, x_map: &[&str], u_map: &[&str], epsilon: f64) -> Result<Self> {
        let parse_all = |v: &[&str]| v.iter().map(|s| Expr::parse(s)).collect::<Result<Vec<_>>>();
        OneParamGroup::new(GroupFile {
            name: name.to_string(),
            t_map: Expr::parse(t_map)?,
            x_map: parse_all(x_map)?,
            u_map: parse_all(u_map)?,
            epsilon,
            u_dot: None,
        })
    }

    /// `h^s = id` for every `s`.
    pub fn identity(n: usize, r: usize) -> Self {
        OneParamGroup {
            file: GroupFile {
                name: "identity".into(),
                t_map: Expr::var(vars::TIME),
                x_map: (0..n).map(|i| Expr::var(vars::state(i))).collect(),
                u_map: (0..r).map(|j| Expr::var(vars::control(j))).collect(),
                epsilon: 1.0,
                u_dot: None,
            },
        }
    }

    /// `T = t + s`, rest identity.
    pub fn time_translation(n: usize, r: usize) -> Self {
        let mut g = OneParamGroup::identity(n, r);
        g.file.name = "time translation".into();
        g.file.t_map = Expr::var(vars::TIME) + Expr::var(vars::GROUP);
        g
    }

    /// `X_i = x_i + s` for the zero-based state `i`, rest identity.
    pub fn state_translation(n: usize, r: usize, i: usize) -> Self {
        let mut g = OneParamGroup::identity(n, r);
        g.file.name = format!("{} translation", vars::state(i));
        g.file.x_map[i] = Expr::var(vars::state(i)) + Expr::var(vars::GROUP);
        g
    }

    pub fn with_control_rates(mut self, u_dot: Vec<Expr>) -> Result<Self> {
        self.file.u_dot = Some(u_dot);
        OneParamGroup::new(self.file)
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn file(&self) -> &GroupFile {
        &self.file
    }

    pub fn t_map(&self) -> &Expr {
        &self.file.t_map
    }

    pub fn x_map(&self) -> &[Expr] {
        &self.file.x_map
    }

    pub fn u_map(&self) -> &[Expr] {
        &self.file.u_map
    }

    pub fn epsilon(&self) -> f64 {
        self.file.epsilon
    }

    pub fn u_dot(&self) -> Option<&[Expr]> {
        self.file.u_dot.as_deref()
    }

    fn components(&self) -> impl Iterator<Item = (String, &Expr)> {
        std::iter::once(("T".to_string(), &self.file.t_map))
            .chain(
                self.file
                    .x_map
                    .iter()
                    .enumerate()
                    .map(|(i, e)| (format!("X{}", i + 1), e)),
            )
            .chain(
                self.file
                    .u_map
                    .iter()
                    .enumerate()
                    .map(|(j, e)| (format!("U{}", j + 1), e)),
            )
    }

    /// Bindings `t -> T, x_i -> X_i, u_j -> U_j` realising `f ∘ h^s`.
    pub fn composition(&self) -> BTreeMap<String, Expr> {
        let mut map = BTreeMap::new();
        map.insert(vars::TIME.to_string(), self.file.t_map.clone());
        for (i, e) in self.file.x_map.iter().enumerate() {
            map.insert(vars::state(i), e.clone());
        }
        for (j, e) in self.file.u_map.iter().enumerate() {
            map.insert(vars::control(j), e.clone());
        }
        map
    }

    /// Checks dimensions and names against `p`, the identity at `s = 0` on
    /// the configured box, and a finite-difference smoothness sanity check.
    pub fn validate_for(&self, p: &ControlProblem, cfg: &SampleConfig) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGroup(m));
        if self.file.x_map.len() != p.n() {
            return bad(format!(
                "X has {} entries, problem has n = {}",
                self.file.x_map.len(),
                p.n()
            ));
        }
        if self.file.u_map.len() != p.r() {
            return bad(format!(
                "U has {} entries, problem has r = {}",
                self.file.u_map.len(),
                p.r()
            ));
        }
        let mut allowed = p.point_names();
        allowed.push(vars::GROUP.into());
        allowed.extend(p.constants().keys().cloned());
        let rate_exprs = self.file.u_dot.iter().flatten().map(|e| ("uDot".to_string(), e));
        for (label, e) in self.components().chain(rate_exprs) {
            if let Some(v) = e.variables().into_iter().find(|v| !allowed.contains(v)) {
                return bad(format!("{label} = `{e}` references undeclared `{v}`"));
            }
        }
        if let Some(ud) = &self.file.u_dot {
            if let Some(e) = ud.iter().find(|e| e.depends_on(vars::GROUP)) {
                return bad(format!("uDot entry `{e}` must not depend on s"));
            }
        }
        self.check_identity_at_zero(p, cfg)?;
        self.check_smoothness(p, cfg)
    }

    fn check_identity_at_zero(&self, p: &ControlProblem, cfg: &SampleConfig) -> Result<()> {
        let names = p.point_names();
        let base = p.constants_env();
        let points = cfg.points(&names, &BTreeMap::new(), IDENTITY_POINTS, 1);
        let expected: Vec<String> = std::iter::once(vars::TIME.to_string())
            .chain((0..p.n()).map(vars::state))
            .chain((0..p.r()).map(vars::control))
            .collect();
        let mut evaluated = 0;
        for pt in &points {
            let mut env = base.clone();
            for (n, v) in names.iter().zip(pt) {
                env.set(n.clone(), *v);
            }
            env.set(vars::GROUP, 0.0);
            for ((label, e), var) in self.components().zip(&expected) {
                let Ok(got) = e.eval(&env) else { continue };
                evaluated += 1;
                let want = env.get(var)?;
                if (got - want).abs() > IDENTITY_TOL * (1.0 + want.abs()) {
                    return Err(Error::InvalidGroup(format!(
                        "h^0 is not the identity: {label} = {got} but {var} = {want}"
                    )));
                }
            }
        }
        if evaluated == 0 {
            return Err(Error::InvalidGroup(
                "identity at s = 0 could not be evaluated anywhere in the sample box".into(),
            ));
        }
        Ok(())
    }

    fn check_smoothness(&self, p: &ControlProblem, cfg: &SampleConfig) -> Result<()> {
        let s_iv = cfg.s_interval(self.file.epsilon)?;
        let mut names = p.point_names();
        names.push(vars::GROUP.into());
        let mut ov = BTreeMap::new();
        ov.insert(vars::GROUP.to_string(), s_iv);
        let points = cfg.points(&names, &ov, SMOOTHNESS_POINTS, 2);
        let base = p.constants_env();
        let step = 1e-5;
        for (label, e) in self.components() {
            let d1 = e.diff(vars::GROUP);
            let d2 = d1.diff(vars::GROUP);
            for pt in &points {
                let mut env = base.clone();
                for (n, v) in names.iter().zip(pt) {
                    env.set(n.clone(), *v);
                }
                let s0 = env.get(vars::GROUP)?;
                let at = |s: f64| {
                    let mut e2 = env.clone();
                    e2.set(vars::GROUP, s);
                    e.eval(&e2)
                };
                let (Ok(fp), Ok(fm), Ok(g1)) = (at(s0 + step), at(s0 - step), d1.eval(&env)) else {
                    continue;
                };
                let fd = (fp - fm) / (2.0 * step);
                if (fd - g1).abs() > 1e-4 * (1.0 + g1.abs()) {
                    return Err(Error::InvalidGroup(format!(
                        "{label} is not smooth in s: d/ds = {g1}, finite difference {fd}"
                    )));
                }
                if let Err(err) = d2.eval(&env) {
                    return Err(Error::InvalidGroup(format!(
                        "{label} has no second s-derivative at a sample: {err}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Infinitesimal generator `(tau, xi, upsilon)`: the s-derivative of the
/// group at `s = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub tau: Expr,
    pub xi: Vec<Expr>,
    pub upsilon: Vec<Expr>,
}

impl Generator {
    /// `a·self + b·other`, component-wise.
    pub fn combine(&self, a: f64, other: &Generator, b: f64) -> Generator {
        let mix = |x: &Expr, y: &Expr| (a * x.clone() + b * y.clone()).simplify();
        Generator {
            tau: mix(&self.tau, &other.tau),
            xi: self.xi.iter().zip(&other.xi).map(|(x, y)| mix(x, y)).collect(),
            upsilon: self
                .upsilon
                .iter()
                .zip(&other.upsilon)
                .map(|(x, y)| mix(x, y))
                .collect(),
        }
    }
}

/// `∂/∂s` of every component, evaluated at `s = 0` and simplified.
pub fn generator(grp: &OneParamGroup) -> Generator {
    let zero = Expr::Const(0.0);
    let at_zero = |e: &Expr| e.diff(vars::GROUP).substitute_one(vars::GROUP, &zero).simplify();
    Generator {
        tau: at_zero(grp.t_map()),
        xi: grp.x_map().iter().map(at_zero).collect(),
        upsilon: grp.u_map().iter().map(at_zero).collect(),
    }
}

/// `de/dt` along trajectories: `∂e/∂t + Σ ∂e/∂x_i phi_i + Σ ∂e/∂u_j uDot_j`.
pub fn total_time_derivative(e: &Expr, p: &ControlProblem, grp: &OneParamGroup) -> Result<Expr> {
    let mut terms = vec![e.diff(vars::TIME)];
    for (i, f) in p.phi().iter().enumerate() {
        terms.push(e.diff(&vars::state(i)) * f.clone());
    }
    for j in 0..p.r() {
        let d = e.diff(&vars::control(j));
        if d.is_zero() {
            continue;
        }
        let rate = grp
            .u_dot()
            .and_then(|ud| ud.get(j))
            .ok_or_else(|| Error::MissingControlRate(vars::control(j)))?;
        terms.push(d * rate.clone());
    }
    Ok(Expr::sum(terms).simplify())
}

/// Worst case for one identity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub label: String,
    pub worst_residual: f64,
    pub worst_point: Option<BTreeMap<String, f64>>,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainFailure {
    pub point: BTreeMap<String, f64>,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    Finite,
    Infinitesimal,
}

/// Outcome of an invariance check.
///
/// Each identity `lhs = rhs` is scored by `|lhs - rhs| / (1 + |rhs|)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvarianceReport {
    pub kind: CheckKind,
    pub form: ProblemForm,
    pub group: String,
    pub samples: usize,
    pub evaluated: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub conditions: Vec<ConditionResult>,
    pub domain_error_count: usize,
    pub domain_errors: Vec<DomainFailure>,
    pub notes: Vec<String>,
    pub pass: bool,
}

impl InvarianceReport {
    pub fn worst_residual(&self) -> f64 {
        self.conditions.iter().map(|c| c.worst_residual).fold(0.0, f64::max)
    }

    pub fn condition(&self, label: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.label == label)
    }
}

struct Identity {
    label: String,
    lhs: Expr,
    rhs: Expr,
}

/// Finite-s identities for the vector-cost problem:
/// `d/dt X_i = (phi_i ∘ h^s) dT/dt` and `L_j = (L_j ∘ h^s) dT/dt`.
pub fn check_invariance_p(p: &ControlProblem, grp: &OneParamGroup, cfg: &SampleConfig) -> Result<InvarianceReport> {
    if !p.constraints().is_empty() {
        return Err(Error::InvalidProblem(
            "the vector-cost invariance check takes no isoperimetric constraints".into(),
        ));
    }
    let ids = finite_identities(p, grp, false)?;
    run_check(p, grp, cfg, ids, CheckKind::Finite, ProblemForm::P)
}

/// Finite-s identities for the scalar problem with isoperimetric
/// constraints: the `X` and `L` identities plus `g_j = (g_j ∘ h^s) dT/dt`.
pub fn check_invariance_p1(p: &ControlProblem, grp: &OneParamGroup, cfg: &SampleConfig) -> Result<InvarianceReport> {
    if p.cost_count() != 1 {
        return Err(Error::InvalidProblem(format!(
            "the scalar invariance check needs N = 1, problem has N = {}",
            p.cost_count()
        )));
    }
    let ids = finite_identities(p, grp, true)?;
    run_check(p, grp, cfg, ids, CheckKind::Finite, ProblemForm::P1)
}

fn finite_identities(p: &ControlProblem, grp: &OneParamGroup, with_g: bool) -> Result<Vec<Identity>> {
    let comp = grp.composition();
    let dt = total_time_derivative(grp.t_map(), p, grp)?;
    let mut ids = Vec::new();
    for (i, (xm, f)) in grp.x_map().iter().zip(p.phi()).enumerate() {
        ids.push(Identity {
            label: format!("X{}", i + 1),
            lhs: total_time_derivative(xm, p, grp)?,
            rhs: (f.substitute(&comp) * dt.clone()).simplify(),
        });
    }
    let scalar = |label: String, e: &Expr| Identity {
        label,
        lhs: e.clone(),
        rhs: (e.substitute(&comp) * dt.clone()).simplify(),
    };
    for (j, l) in p.costs().iter().enumerate() {
        ids.push(scalar(format!("L{}", j + 1), l));
    }
    if with_g {
        for (j, c) in p.constraints().iter().enumerate() {
            ids.push(scalar(format!("g{}", j + 1), &c.g));
        }
    }
    Ok(ids)
}

/// Linearised (s-differentiated at 0) identities, using only the generator:
/// `d/dt xi_i = ∂phi_i/∂t tau + ∂phi_i/∂x·xi + ∂phi_i/∂u·upsilon + phi_i d/dt tau`
/// and `-F d/dt tau = ∂F/∂t tau + ∂F/∂x·xi + ∂F/∂u·upsilon` for every cost
/// (and, in the scalar form, constraint) rate `F`.
pub fn check_infinitesimal(
    p: &ControlProblem,
    grp: &OneParamGroup,
    cfg: &SampleConfig,
    form: ProblemForm,
) -> Result<InvarianceReport> {
    match form {
        ProblemForm::P if !p.constraints().is_empty() => {
            return Err(Error::InvalidProblem(
                "the vector-cost form takes no isoperimetric constraints".into(),
            ))
        }
        ProblemForm::P1 if p.cost_count() != 1 => {
            return Err(Error::InvalidProblem("the scalar form needs N = 1".into()))
        }
        _ => {}
    }
    let gen = generator(grp);
    let dtau = total_time_derivative(&gen.tau, p, grp)?;
    let variation = |f: &Expr| {
        let mut terms = vec![f.diff(vars::TIME) * gen.tau.clone()];
        for (i, xi) in gen.xi.iter().enumerate() {
            terms.push(f.diff(&vars::state(i)) * xi.clone());
        }
        for (j, up) in gen.upsilon.iter().enumerate() {
            terms.push(f.diff(&vars::control(j)) * up.clone());
        }
        Expr::sum(terms)
    };
    let mut ids = Vec::new();
    for (i, (xi, f)) in gen.xi.iter().zip(p.phi()).enumerate() {
        ids.push(Identity {
            label: format!("X{}", i + 1),
            lhs: total_time_derivative(xi, p, grp)?,
            rhs: (variation(f) + f.clone() * dtau.clone()).simplify(),
        });
    }
    let scalar = |label: String, f: &Expr| Identity {
        label,
        lhs: (-(f.clone() * dtau.clone())).simplify(),
        rhs: variation(f).simplify(),
    };
    for (j, l) in p.costs().iter().enumerate() {
        ids.push(scalar(format!("L{}", j + 1), l));
    }
    if form == ProblemForm::P1 {
        for (j, c) in p.constraints().iter().enumerate() {
            ids.push(scalar(format!("g{}", j + 1), &c.g));
        }
    }
    run_check(p, grp, cfg, ids, CheckKind::Infinitesimal, form)
}

enum SampleOutcome {
    Residuals(Vec<f64>),
    Domain(String),
}

fn run_check(
    p: &ControlProblem,
    grp: &OneParamGroup,
    cfg: &SampleConfig,
    ids: Vec<Identity>,
    kind: CheckKind,
    form: ProblemForm,
) -> Result<InvarianceReport> {
    cfg.validate()?;
    grp.validate_for(p, cfg)?;

    let mut names = p.point_names();
    names.push(vars::GROUP.into());
    let mut layout = SlotLayout::new(names.iter().cloned());
    for k in p.constants().keys() {
        layout.push(k.clone());
    }
    let constants: Vec<f64> = p.constants().values().copied().collect();

    let compiled = ids
        .iter()
        .map(|id| {
            Ok((
                CompiledExpr::new(&id.lhs, &layout)?,
                CompiledExpr::new(&id.rhs, &layout)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut overrides = BTreeMap::new();
    overrides.insert(vars::GROUP.to_string(), cfg.s_interval(grp.epsilon())?);
    let points = cfg.points(&names, &overrides, cfg.samples, 0);

    let outcomes: Vec<SampleOutcome> = points
        .par_iter()
        .map(|pt| {
            let mut slots = pt.clone();
            slots.extend_from_slice(&constants);
            let mut res = Vec::with_capacity(compiled.len());
            for (lhs, rhs) in &compiled {
                let (l, r) = match (lhs.eval(&slots), rhs.eval(&slots)) {
                    (Ok(l), Ok(r)) => (l, r),
                    (Err(e), _) | (_, Err(e)) => return SampleOutcome::Domain(e.to_string()),
                };
                res.push((l - r).abs() / (1.0 + r.abs()));
            }
            SampleOutcome::Residuals(res)
        })
        .collect();

    let point_map = |pt: &[f64]| -> BTreeMap<String, f64> { names.iter().cloned().zip(pt.iter().copied()).collect() };
    let mut worst = vec![(0.0f64, None::<usize>); ids.len()];
    let mut evaluated = 0;
    let mut domain_error_count = 0;
    let mut domain_errors = Vec::new();
    for (k, outcome) in outcomes.iter().enumerate() {
        match outcome {
            SampleOutcome::Residuals(res) => {
                evaluated += 1;
                for (w, r) in worst.iter_mut().zip(res) {
                    // NaN compares false; force it to the top
                    if r.is_nan() || *r > w.0 || w.1.is_none() {
                        *w = (if r.is_nan() { f64::INFINITY } else { *r }, Some(k));
                    }
                }
            }
            SampleOutcome::Domain(msg) => {
                domain_error_count += 1;
                if domain_errors.len() < MAX_REPORTED_DOMAIN_ERRORS {
                    domain_errors.push(DomainFailure {
                        point: point_map(&points[k]),
                        message: msg.clone(),
                    });
                }
            }
        }
    }

    let conditions: Vec<ConditionResult> = ids
        .iter()
        .zip(&worst)
        .map(|(id, (r, k))| ConditionResult {
            label: id.label.clone(),
            worst_residual: *r,
            worst_point: k.map(|k| point_map(&points[k])),
            pass: *r <= cfg.tolerance,
        })
        .collect();
    let mut notes = vec!["transformed controls U are not required to lie in the control set omega".to_string()];
    if domain_error_count > 0 {
        notes.push(format!(
            "{domain_error_count} samples hit evaluation domain errors ({})",
            if cfg.skip_domain_errors {
                "excluded from the verdict"
            } else {
                "counted as failures"
            }
        ));
    }
    let pass =
        evaluated > 0 && conditions.iter().all(|c| c.pass) && (domain_error_count == 0 || cfg.skip_domain_errors);
    Ok(InvarianceReport {
        kind,
        form,
        group: grp.name().to_string(),
        samples: cfg.samples,
        evaluated,
        seed: cfg.seed,
        tolerance: cfg.tolerance,
        conditions,
        domain_error_count,
        domain_errors,
        notes,
        pass,
    })
}

/// Evaluates a generator at a point (`t`, states, controls, constants).
pub fn eval_generator(gen: &Generator, env: &Env) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let tau = gen.tau.eval(env)?;
    let xi = gen.xi.iter().map(|e| e.eval(env)).collect::<Result<_>>()?;
    let up = gen.upsilon.iter().map(|e| e.eval(env)).collect::<Result<_>>()?;
    Ok((tau, xi, up))
}
