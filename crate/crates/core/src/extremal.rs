//! Pontryagin extremals: pointwise maximisation of the Hamiltonian over the
//! control box, fixed-step RK4 on the joint state/costate system, and checks
//! of conservation laws and of `dH/dt = ∂H/∂t` along the result.
//!
//! Extremals are integrated forward from arbitrary `(x(a), psi(a))` and
//! multipliers; [`shoot`] is available when boundary values must be met.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{CompiledExpr, Env, Expr, SlotLayout};
use crate::model::{vars, Bound, ControlProblem, Hamiltonian, Multipliers, ProblemForm};
use crate::noether::ConservationLaw;

const GOLDEN: f64 = 0.618_033_988_749_894_9;
const MAX_GRID_POINTS: usize = 5_000_000;
const OMEGA_SLACK: f64 = 1e-12;

/// Sampled extremal on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub psi: Vec<Vec<f64>>,
    pub multipliers: Multipliers,
    pub form: ProblemForm,
    pub constants: Env,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.t.len() < 2 {
            0.0
        } else {
            self.t[1] - self.t[0]
        }
    }

    /// Everything needed to evaluate a law at node `k`.
    pub fn node_env(&self, k: usize) -> Env {
        let mut env = self.constants.clone();
        env.set(vars::TIME, self.t[k]);
        env.set_indexed("x", &self.x[k]);
        env.set_indexed("u", &self.u[k]);
        env.set_indexed("psi", &self.psi[k]);
        self.multipliers.bind(&mut env);
        env
    }

    /// CSV with header `t,x1..,u1..,psi1..`; 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.x.first().map_or(0, Vec::len);
        let r = self.u.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(vars::state));
        header.extend((0..r).map(vars::control));
        header.extend((0..n).map(vars::costate));
        let mut out = header.join(",");
        out.push('\n');
        for k in 0..self.len() {
            let row: Vec<String> = std::iter::once(self.t[k])
                .chain(self.x[k].iter().copied())
                .chain(self.u[k].iter().copied())
                .chain(self.psi[k].iter().copied())
                .map(fmt_float)
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Derivative-free maximisation over a bounded box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    /// Grid points per control dimension, endpoints included.
    pub resolution: usize,
    /// Golden-section iterations per dimension inside the best cell.
    pub refinements: usize,
}

impl Default for GridSearch {
    fn default() -> Self {
        GridSearch {
            resolution: 64,
            refinements: 20,
        }
    }
}

/// A closed-form maximiser of the Hamiltonian.
pub trait ClosedFormControl: Send + Sync + fmt::Debug {
    /// Maximising control, or `None` where it is not determined (the
    /// caller then falls back to grid search).
    fn argmax(&self, t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<Option<Vec<f64>>>;

    /// Switching function of a bang-bang control, if any.
    fn switching(&self, _t: f64, _x: &[f64], _psi: &[f64], _m: &Multipliers) -> Option<f64> {
        None
    }

    /// Signs that identify the current arc: one entry per discontinuity of
    /// the maximiser. Defaults to the switching function alone.
    fn arc_signs(&self, t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<Vec<f64>> {
        Ok(self.switching(t, x, psi, m).into_iter().collect())
    }

    /// Whether [`ClosedFormControl::argmax_on_arc`] honours its `signs`.
    fn pins_arc(&self) -> bool {
        false
    }

    /// Maximiser on the arc named by `signs`, as returned by
    /// [`ClosedFormControl::arc_signs`]. A zero entry picks the non-positive
    /// branch.
    fn argmax_on_arc(
        &self,
        t: f64,
        x: &[f64],
        psi: &[f64],
        m: &Multipliers,
        _signs: &[f64],
    ) -> Result<Option<Vec<f64>>> {
        self.argmax(t, x, psi, m)
    }
}

/// How the maximality condition is realised.
#[derive(Clone, Debug)]
pub enum ControlLaw {
    GridSearch(GridSearch),
    /// `r` expressions in `t`, `x`, `psi0`, `psi`, `lambda` and constants
    /// giving the maximiser directly, with an optional switching function.
    Expressions {
        controls: Vec<Expr>,
        switching: Option<Expr>,
    },
    ClosedForm(Arc<dyn ClosedFormControl>),
}

impl Default for ControlLaw {
    fn default() -> Self {
        ControlLaw::GridSearch(GridSearch::default())
    }
}

enum PreparedLaw {
    Grid(GridSearch),
    Expressions {
        controls: Vec<CompiledExpr>,
        switching: Option<CompiledExpr>,
    },
    Closed(Arc<dyn ClosedFormControl>),
}

/// Compiled Hamiltonian system with a control law attached.
pub struct ExtremalSystem {
    hamiltonian: Hamiltonian,
    omega: Vec<Bound>,
    a: f64,
    b: f64,
    h: CompiledExpr,
    dh_dt: CompiledExpr,
    state_rhs: Vec<CompiledExpr>,
    adjoint_rhs: Vec<CompiledExpr>,
    law: PreparedLaw,
    fallback: GridSearch,
    base: Vec<f64>,
    off_x: usize,
    off_u: usize,
    off_psi0: Option<usize>,
    off_psi: usize,
    off_lambda: usize,
}

impl fmt::Debug for ExtremalSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExtremalSystem")
            .field("hamiltonian", self.hamiltonian.expr())
            .field("omega", &self.omega)
            .finish_non_exhaustive()
    }
}

impl ExtremalSystem {
    pub fn new(p: &ControlProblem, hamiltonian: Hamiltonian, law: ControlLaw) -> Result<Self> {
        if hamiltonian.n() != p.n() || hamiltonian.r() != p.r() {
            return Err(Error::Dimension("Hamiltonian and problem dimensions differ".into()));
        }
        let names = hamiltonian.variable_names();
        let layout = SlotLayout::new(names.iter().cloned());
        let n = p.n();
        let r = p.r();
        let off_x = 1;
        let off_u = off_x + n;
        let off_psi0 = (hamiltonian.form() == ProblemForm::P1).then_some(off_u + r);
        let off_psi = off_u + r + usize::from(off_psi0.is_some());
        let off_lambda = off_psi + n;
        let mut base = vec![0.0; layout.len()];
        for (k, v) in p.constants() {
            if let Some(i) = layout.slot(k) {
                base[i] = *v;
            }
        }
        let compile = |e: &Expr| CompiledExpr::new(e, &layout);
        let h = compile(hamiltonian.expr())?;
        let dh_dt = compile(&hamiltonian.expr().diff(vars::TIME))?;
        let state_rhs = hamiltonian.state_rhs().iter().map(compile).collect::<Result<_>>()?;
        let adjoint_rhs = hamiltonian.adjoint_rhs().iter().map(compile).collect::<Result<_>>()?;
        let law = match law {
            ControlLaw::GridSearch(g) => PreparedLaw::Grid(g),
            ControlLaw::Expressions { controls, switching } => {
                if controls.len() != r {
                    return Err(Error::ControlLaw(format!(
                        "law gives {} controls, problem has r = {r}",
                        controls.len()
                    )));
                }
                let no_u = |e: &Expr| match e
                    .variables()
                    .into_iter()
                    .find(|v| (0..r).any(|j| *v == vars::control(j)))
                {
                    Some(v) => Err(Error::ControlLaw(format!("law `{e}` must not reference {v}"))),
                    None => Ok(()),
                };
                for e in controls.iter().chain(switching.iter()) {
                    no_u(e)?;
                }
                PreparedLaw::Expressions {
                    controls: controls.iter().map(compile).collect::<Result<_>>()?,
                    switching: switching.as_ref().map(compile).transpose()?,
                }
            }
            ControlLaw::ClosedForm(c) => PreparedLaw::Closed(c),
        };
        Ok(ExtremalSystem {
            hamiltonian,
            omega: p.omega().to_vec(),
            a: p.a(),
            b: p.b(),
            h,
            dh_dt,
            state_rhs,
            adjoint_rhs,
            law,
            fallback: GridSearch::default(),
            base,
            off_x,
            off_u,
            off_psi0,
            off_psi,
            off_lambda,
        })
    }

    pub fn hamiltonian(&self) -> &Hamiltonian {
        &self.hamiltonian
    }

    pub fn n(&self) -> usize {
        self.hamiltonian.n()
    }

    pub fn r(&self) -> usize {
        self.hamiltonian.r()
    }

    pub fn horizon(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    fn slots(&self, t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Vec<f64> {
        let mut s = self.base.clone();
        s[0] = t;
        s[self.off_x..self.off_x + x.len()].copy_from_slice(x);
        if let Some(i) = self.off_psi0 {
            s[i] = m.psi0.unwrap_or(0.0);
        }
        s[self.off_psi..self.off_psi + psi.len()].copy_from_slice(psi);
        s[self.off_lambda..self.off_lambda + m.lambda.len()].copy_from_slice(&m.lambda);
        s
    }

    fn set_u(&self, slots: &mut [f64], u: &[f64]) {
        slots[self.off_u..self.off_u + u.len()].copy_from_slice(u);
    }

    fn check_inputs(&self, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<()> {
        if x.len() != self.n() || psi.len() != self.n() {
            return Err(Error::Dimension(format!("state/costate must have length {}", self.n())));
        }
        self.hamiltonian.check_multipliers(m)
    }

    /// Hamiltonian value at a phase point and control.
    pub fn hamiltonian_value(&self, t: f64, x: &[f64], u: &[f64], psi: &[f64], m: &Multipliers) -> Result<f64> {
        let mut s = self.slots(t, x, psi, m);
        self.set_u(&mut s, u);
        self.h.eval(&s)
    }

    /// Control maximising H over omega at `(t, x, psi)`.
    pub fn maximize(&self, t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<Vec<f64>> {
        let mut slots = self.slots(t, x, psi, m);
        self.maximize_slots(&mut slots, t, x, psi, m, None)
    }

    #[allow(clippy::too_many_arguments)]
    fn maximize_slots(
        &self,
        slots: &mut [f64],
        t: f64,
        x: &[f64],
        psi: &[f64],
        m: &Multipliers,
        pin: Option<&[f64]>,
    ) -> Result<Vec<f64>> {
        let u = match &self.law {
            PreparedLaw::Grid(g) => return self.grid_argmax(slots, g),
            PreparedLaw::Expressions { controls, .. } => {
                controls.iter().map(|c| c.eval(slots)).collect::<Result<Vec<_>>>()?
            }
            PreparedLaw::Closed(c) => {
                let u = match pin {
                    Some(signs) => c.argmax_on_arc(t, x, psi, m, signs)?,
                    None => c.argmax(t, x, psi, m)?,
                };
                match u {
                    Some(u) => u,
                    None => return self.grid_argmax(slots, &self.fallback),
                }
            }
        };
        if u.len() != self.r() {
            return Err(Error::ControlLaw(format!(
                "law returned {} controls, expected {}",
                u.len(),
                self.r()
            )));
        }
        if let Some((j, v)) = u
            .iter()
            .enumerate()
            .find(|(j, v)| !self.omega[*j].contains(**v, OMEGA_SLACK))
        {
            return Err(Error::ControlLaw(format!(
                "law returned u{} = {v} outside omega at t = {t}",
                j + 1
            )));
        }
        Ok(u)
    }

    fn grid_argmax(&self, slots: &mut [f64], g: &GridSearch) -> Result<Vec<f64>> {
        let r = self.r();
        if r == 0 {
            return Ok(vec![]);
        }
        let mut bounds = Vec::with_capacity(r);
        for (j, b) in self.omega.iter().enumerate() {
            match (b.lo, b.hi) {
                (Some(lo), Some(hi)) => bounds.push((lo, hi)),
                _ => {
                    return Err(Error::ControlLaw(format!(
                        "grid search needs a bounded omega, u{} is unbounded",
                        j + 1
                    )))
                }
            }
        }
        let res = g.resolution.max(2);
        let total = (0..r).try_fold(1usize, |acc, _| acc.checked_mul(res));
        if total.is_none_or(|t| t > MAX_GRID_POINTS) {
            return Err(Error::ControlLaw(format!("grid of {res}^{r} points is too large")));
        }
        let total = total.unwrap_or(0);
        let node = |j: usize, i: usize| {
            let (lo, hi) = bounds[j];
            if i + 1 == res {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (res - 1) as f64
            }
        };
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut idx = vec![0usize; r];
        let mut u = vec![0.0; r];
        for _ in 0..total {
            for j in 0..r {
                u[j] = node(j, idx[j]);
            }
            self.set_u(slots, &u);
            if let Ok(v) = self.h.eval(slots) {
                if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                    best = Some((v, idx.clone()));
                }
            }
            // odometer, last control fastest
            for j in (0..r).rev() {
                idx[j] += 1;
                if idx[j] < res {
                    break;
                }
                idx[j] = 0;
            }
        }
        let Some((mut best_val, best_idx)) = best else {
            return Err(Error::ControlLaw(
                "Hamiltonian could not be evaluated anywhere on the control grid".into(),
            ));
        };
        let mut u: Vec<f64> = best_idx.iter().enumerate().map(|(j, &i)| node(j, i)).collect();
        for j in 0..r {
            let (lo, hi) = bounds[j];
            let cell = (hi - lo) / (res - 1) as f64;
            let (mut a, mut b) = ((u[j] - cell).max(lo), (u[j] + cell).min(hi));
            let mut probe = u.clone();
            let value = |v: f64, probe: &mut Vec<f64>, slots: &mut [f64]| {
                probe[j] = v;
                self.set_u(slots, probe);
                self.h.eval(slots).unwrap_or(f64::NEG_INFINITY)
            };
            let mut c = b - GOLDEN * (b - a);
            let mut d = a + GOLDEN * (b - a);
            let mut fc = value(c, &mut probe, slots);
            let mut fd = value(d, &mut probe, slots);
            for _ in 0..g.refinements {
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - GOLDEN * (b - a);
                    fc = value(c, &mut probe, slots);
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + GOLDEN * (b - a);
                    fd = value(d, &mut probe, slots);
                }
            }
            let (cand, fcand) = if fc >= fd { (c, fc) } else { (d, fd) };
            if fcand > best_val {
                best_val = fcand;
                u[j] = cand;
            }
        }
        self.set_u(slots, &u);
        Ok(u)
    }

    /// Switching function of the attached law at a phase point.
    pub fn switching_value(&self, t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<Option<f64>> {
        match &self.law {
            PreparedLaw::Grid(_) => Ok(None),
            PreparedLaw::Expressions { switching, .. } => switching
                .as_ref()
                .map(|s| s.eval(&self.slots(t, x, psi, m)))
                .transpose(),
            PreparedLaw::Closed(c) => Ok(c.switching(t, x, psi, m)),
        }
    }

    /// Gap `max_grid H - H(law)`; positive when the law loses value.
    pub fn audit(&self, t: f64, x: &[f64], psi: &[f64], m: &Multipliers, grid: &GridSearch) -> Result<f64> {
        let mut slots = self.slots(t, x, psi, m);
        let u_law = self.maximize_slots(&mut slots, t, x, psi, m, None)?;
        self.set_u(&mut slots, &u_law);
        let h_law = self.h.eval(&slots)?;
        let u_grid = self.grid_argmax(&mut slots, grid)?;
        self.set_u(&mut slots, &u_grid);
        let h_grid = self.h.eval(&slots)?;
        Ok(h_grid - h_law)
    }

    /// Joint right-hand side `(∂H/∂psi, -∂H/∂x)` with `u` re-maximised.
    fn field(&self, t: f64, y: &[f64], m: &Multipliers, pin: Option<&[f64]>, out: &mut [f64]) -> Result<()> {
        let n = self.n();
        let (x, psi) = y.split_at(n);
        let mut slots = self.slots(t, x, psi, m);
        let u = self.maximize_slots(&mut slots, t, x, psi, m, pin)?;
        self.set_u(&mut slots, &u);
        for i in 0..n {
            out[i] = self.state_rhs[i].eval(&slots)?;
            out[n + i] = self.adjoint_rhs[i].eval(&slots)?;
        }
        if let Some(v) = out.iter().find(|v| !v.is_finite()) {
            return Err(Error::Domain {
                expr: "pseudo-Hamiltonian system".into(),
                message: format!("non-finite derivative {v}"),
            });
        }
        Ok(())
    }

    fn rk4_step(&self, t: f64, y: &[f64], h: f64, m: &Multipliers, pin: Option<&[f64]>) -> Result<Vec<f64>> {
        let d = y.len();
        let mut k1 = vec![0.0; d];
        let mut k2 = vec![0.0; d];
        let mut k3 = vec![0.0; d];
        let mut k4 = vec![0.0; d];
        let mut tmp = vec![0.0; d];
        self.field(t, y, m, pin, &mut k1)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k1[i];
        }
        self.field(t + 0.5 * h, &tmp, m, pin, &mut k2)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k2[i];
        }
        self.field(t + 0.5 * h, &tmp, m, pin, &mut k3)?;
        for i in 0..d {
            tmp[i] = y[i] + h * k3[i];
        }
        self.field(t + h, &tmp, m, pin, &mut k4)?;
        Ok((0..d)
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }

    fn pins_arc(&self) -> bool {
        matches!(&self.law, PreparedLaw::Closed(c) if c.pins_arc())
    }

    fn signs_at(&self, t: f64, y: &[f64], m: &Multipliers) -> Result<Vec<f64>> {
        let (x, psi) = y.split_at(self.n());
        match &self.law {
            PreparedLaw::Closed(c) => c.arc_signs(t, x, psi, m),
            _ => Ok(Vec::new()),
        }
    }

    /// One grid step. When the law pins its arcs, each arc change inside
    /// the step is located by bisection and the step is split there, so
    /// every RK4 stage sees a single smooth branch.
    fn step(&self, t: f64, y: &[f64], h: f64, m: &Multipliers) -> Result<Vec<f64>> {
        if !self.pins_arc() {
            return self.rk4_step(t, y, h, m, None);
        }
        let left = |side: &[f64], now: &[f64]| side.iter().zip(now).any(|(a, b)| *a != 0.0 && *b != 0.0 && a != b);
        let signum = |v: Vec<f64>| {
            v.into_iter()
                .map(|s| if s == 0.0 { 0.0 } else { s.signum() })
                .collect::<Vec<_>>()
        };
        let (mut tc, mut yc, mut rem) = (t, y.to_vec(), h);
        let mut side = signum(self.signs_at(t, y, m)?);
        for _ in 0..MAX_SPLITS {
            let trial = self.rk4_step(tc, &yc, rem, m, Some(&side))?;
            let end = signum(self.signs_at(tc + rem, &trial, m)?);
            if !left(&side, &end) {
                return Ok(trial);
            }
            let (mut lo, mut hi) = (0.0, rem);
            while hi - lo > SWITCH_TIME_TOL * h.abs().max(1.0) {
                let mid = 0.5 * (lo + hi);
                let ym = self.rk4_step(tc, &yc, mid, m, Some(&side))?;
                if left(&side, &signum(self.signs_at(tc + mid, &ym, m)?)) {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            yc = self.rk4_step(tc, &yc, hi, m, Some(&side))?;
            tc += hi;
            rem -= hi;
            let now = signum(self.signs_at(tc, &yc, m)?);
            for (s, n) in side.iter_mut().zip(now) {
                if n != 0.0 {
                    *s = n;
                }
            }
        }
        self.rk4_step(tc, &yc, rem, m, None)
    }

    /// Classical RK4 from `a` to `b` in `steps` equal steps.
    pub fn integrate(&self, x_a: &[f64], psi_a: &[f64], m: &Multipliers, steps: usize) -> Result<Trajectory> {
        if steps < 2 {
            return Err(Error::InvalidConfig("need at least 2 steps".into()));
        }
        self.check_inputs(x_a, psi_a, m)?;
        let n = self.n();
        let h = (self.b - self.a) / steps as f64;
        let mut traj = Trajectory {
            t: Vec::with_capacity(steps + 1),
            x: Vec::with_capacity(steps + 1),
            u: Vec::with_capacity(steps + 1),
            psi: Vec::with_capacity(steps + 1),
            multipliers: m.clone(),
            form: self.hamiltonian.form(),
            constants: self.hamiltonian.constants().clone(),
        };
        let mut y: Vec<f64> = x_a.iter().chain(psi_a).copied().collect();
        for k in 0..=steps {
            let t = if k == steps { self.b } else { self.a + k as f64 * h };
            let (x, psi) = y.split_at(n);
            let u = match self.maximize(t, x, psi, m) {
                Ok(u) => u,
                Err(e) => return Err(integration_error(t, e, traj)),
            };
            traj.t.push(t);
            traj.x.push(x.to_vec());
            traj.u.push(u);
            traj.psi.push(psi.to_vec());
            if k == steps {
                break;
            }
            y = match self.step(t, &y, h, m) {
                Ok(y) => y,
                Err(e) => return Err(integration_error(t, e, traj)),
            };
        }
        Ok(traj)
    }

    /// State and costate reached from node `k` after a single RK4 sub-step
    /// of length `dt`.
    fn advance_from_node(&self, traj: &Trajectory, k: usize, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let y: Vec<f64> = traj.x[k].iter().chain(&traj.psi[k]).copied().collect();
        let y = if dt == 0.0 {
            y
        } else {
            self.rk4_step(traj.t[k], &y, dt, &traj.multipliers, None)?
        };
        let (x, psi) = y.split_at(self.n());
        Ok((x.to_vec(), psi.to_vec()))
    }

    /// `∂H/∂t` at a node of a trajectory.
    pub fn partial_t(&self, traj: &Trajectory, k: usize) -> Result<f64> {
        let mut s = self.slots(traj.t[k], &traj.x[k], &traj.psi[k], &traj.multipliers);
        self.set_u(&mut s, &traj.u[k]);
        self.dh_dt.eval(&s)
    }
}

fn integration_error(t: f64, e: Error, partial: Trajectory) -> Error {
    Error::Integration {
        time: t,
        message: e.to_string(),
        partial: Box::new(partial),
    }
}

/// Maximising control for a one-off phase point.
pub fn maximize_h(
    p: &ControlProblem,
    h: &Hamiltonian,
    t: f64,
    x: &[f64],
    psi: &[f64],
    m: &Multipliers,
    law: ControlLaw,
) -> Result<Vec<f64>> {
    ExtremalSystem::new(p, h.clone(), law)?.maximize(t, x, psi, m)
}

/// Forward extremal from `(x_a, psi_a)`.
pub fn integrate_extremal(
    p: &ControlProblem,
    h: &Hamiltonian,
    x_a: &[f64],
    psi_a: &[f64],
    m: &Multipliers,
    law: ControlLaw,
    steps: usize,
) -> Result<Trajectory> {
    ExtremalSystem::new(p, h.clone(), law)?.integrate(x_a, psi_a, m, steps)
}

/// Drift of a law along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub law: String,
    pub initial_value: f64,
    pub max_drift: f64,
    pub normalized_drift: f64,
    pub worst_time: f64,
    pub nodes: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Evaluates the law at every node; `pass` iff
/// `max |C(t) - C(t0)| / (1 + |C(t0)|) <= tol`.
pub fn check_law(traj: &Trajectory, law: &ConservationLaw, tol: f64) -> Result<ConservationReport> {
    if traj.is_empty() {
        return Err(Error::InvalidConfig("empty trajectory".into()));
    }
    if traj.form != law.form {
        return Err(Error::InvalidConfig(format!(
            "law is for the {:?} form but the trajectory is {:?}",
            law.form, traj.form
        )));
    }
    let c0 = law.eval(&traj.node_env(0))?;
    let mut max_drift = 0.0f64;
    let mut worst_time = traj.t[0];
    for k in 1..traj.len() {
        let d = (law.eval(&traj.node_env(k))? - c0).abs();
        if d > max_drift {
            max_drift = d;
            worst_time = traj.t[k];
        }
    }
    let normalized_drift = max_drift / (1.0 + c0.abs());
    Ok(ConservationReport {
        law: law.expr.to_string(),
        initial_value: c0,
        max_drift,
        normalized_drift,
        worst_time,
        nodes: traj.len(),
        tolerance: tol,
        pass: normalized_drift <= tol,
    })
}

/// Default drift tolerance for a fixed-step run: `max(C h^4, 50 h)` with the
/// second term only when the control switches.
pub fn default_drift_tolerance(h: f64, switched: bool) -> f64 {
    const C: f64 = 1e2;
    let smooth = C * h.powi(4);
    if switched {
        smooth.max(50.0 * h)
    } else {
        smooth
    }
}

/// Result of comparing a central-difference `dH/dt` with `∂H/∂t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianIdentityReport {
    pub worst_residual: f64,
    pub worst_time: f64,
    pub checked_nodes: usize,
    pub excluded_nodes: usize,
    pub tolerance: f64,
    pub pass: bool,
}

/// Nodes whose three-point stencil contains a control jump larger than
/// `jump_threshold` are excluded (defaults to `100 h`).
pub fn check_hamiltonian_identity(
    p: &ControlProblem,
    traj: &Trajectory,
    h: &Hamiltonian,
    tol: f64,
    jump_threshold: Option<f64>,
) -> Result<HamiltonianIdentityReport> {
    if traj.len() < 3 {
        return Err(Error::InvalidConfig("need at least 3 nodes".into()));
    }
    let sys = ExtremalSystem::new(p, h.clone(), ControlLaw::default())?;
    let step = traj.step();
    let threshold = jump_threshold.unwrap_or(100.0 * step);
    let values = (0..traj.len())
        .map(|k| sys.hamiltonian_value(traj.t[k], &traj.x[k], &traj.u[k], &traj.psi[k], &traj.multipliers))
        .collect::<Result<Vec<_>>>()?;
    let jump = |a: usize, b: usize| traj.u[a].iter().zip(&traj.u[b]).any(|(x, y)| (x - y).abs() > threshold);
    let mut worst = 0.0f64;
    let mut worst_time = traj.t[1];
    let mut checked = 0;
    let mut excluded = 0;
    for k in 1..traj.len() - 1 {
        if jump(k - 1, k) || jump(k, k + 1) {
            excluded += 1;
            continue;
        }
        let fd = (values[k + 1] - values[k - 1]) / (traj.t[k + 1] - traj.t[k - 1]);
        let res = (fd - sys.partial_t(traj, k)?).abs();
        checked += 1;
        if res > worst {
            worst = res;
            worst_time = traj.t[k];
        }
    }
    Ok(HamiltonianIdentityReport {
        worst_residual: worst,
        worst_time,
        checked_nodes: checked,
        excluded_nodes: excluded,
        tolerance: tol,
        pass: checked > 0 && worst <= tol,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShootOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub fd_step: f64,
}

impl Default for ShootOptions {
    fn default() -> Self {
        ShootOptions {
            max_iterations: 50,
            tolerance: 1e-10,
            fd_step: 1e-7,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ShootResult {
    pub psi_a: Vec<f64>,
    pub trajectory: Trajectory,
    pub iterations: usize,
    pub residual: f64,
}

/// Damped Newton iteration on `psi(a)` so that `x(b) = beta`, with
/// finite-difference sensitivities. Starts from `alpha`.
pub fn shoot(
    p: &ControlProblem,
    h: &Hamiltonian,
    m: &Multipliers,
    law: ControlLaw,
    steps: usize,
    psi_guess: &[f64],
    opts: &ShootOptions,
) -> Result<ShootResult> {
    let (Some(alpha), Some(beta)) = (p.alpha(), p.beta()) else {
        return Err(Error::InvalidProblem("shooting needs alpha and beta".into()));
    };
    let sys = ExtremalSystem::new(p, h.clone(), law)?;
    let n = p.n();
    if psi_guess.len() != n {
        return Err(Error::Dimension(format!("psi guess must have length {n}")));
    }
    let run = |psi: &[f64]| -> Result<(Trajectory, Vec<f64>)> {
        let traj = sys.integrate(alpha, psi, m, steps)?;
        let end = traj.x.last().expect("non-empty");
        let res = end.iter().zip(beta).map(|(x, b)| x - b).collect();
        Ok((traj, res))
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut psi = psi_guess.to_vec();
    let (mut traj, mut res) = run(&psi)?;
    let mut rnorm = norm(&res);
    for iter in 0..=opts.max_iterations {
        if rnorm <= opts.tolerance {
            return Ok(ShootResult {
                psi_a: psi,
                trajectory: traj,
                iterations: iter,
                residual: rnorm,
            });
        }
        if iter == opts.max_iterations {
            break;
        }
        let mut jac = DMatrix::zeros(n, n);
        for j in 0..n {
            let dh = opts.fd_step * (1.0 + psi[j].abs());
            let mut pp = psi.clone();
            pp[j] += dh;
            let (_, rp) = run(&pp)?;
            for i in 0..n {
                jac[(i, j)] = (rp[i] - res[i]) / dh;
            }
        }
        let rhs = -DVector::from_column_slice(&res);
        let delta = jac
            .svd(true, true)
            .solve(&rhs, 1e-12)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;
        let mut accepted = false;
        let mut damping = 1.0;
        for _ in 0..12 {
            let trial: Vec<f64> = psi.iter().zip(delta.iter()).map(|(p, d)| p + damping * d).collect();
            if let Ok((t2, r2)) = run(&trial) {
                let n2 = norm(&r2);
                if n2 < rnorm {
                    psi = trial;
                    traj = t2;
                    res = r2;
                    rnorm = n2;
                    accepted = true;
                    break;
                }
            }
            damping *= 0.5;
        }
        if !accepted {
            return Err(Error::ShootingDiverged {
                iterations: iter + 1,
                residual: rnorm,
                best_psi: psi,
            });
        }
    }
    Err(Error::ShootingDiverged {
        iterations: opts.max_iterations,
        residual: rnorm,
        best_psi: psi,
    })
}

/// Switch times of a bang-bang control along a trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchScan {
    pub times: Vec<f64>,
    /// Switching function vanishes at every node.
    pub singular: bool,
}

const SINGULAR_TOL: f64 = 1e-12;
const SWITCH_TIME_TOL: f64 = 1e-10;
const MAX_SPLITS: usize = 8;

/// Brackets sign changes of the law's switching function between nodes and
/// refines each by bisection in `t`.
pub fn detect_switches(sys: &ExtremalSystem, traj: &Trajectory) -> Result<SwitchScan> {
    let m = &traj.multipliers;
    let mut sigma = Vec::with_capacity(traj.len());
    for k in 0..traj.len() {
        match sys.switching_value(traj.t[k], &traj.x[k], &traj.psi[k], m)? {
            Some(v) => sigma.push(v),
            None => {
                return Err(Error::ControlLaw(
                    "the control law declares no switching function".into(),
                ))
            }
        }
    }
    if sigma.iter().all(|v| v.abs() <= SINGULAR_TOL) {
        return Ok(SwitchScan {
            times: vec![],
            singular: true,
        });
    }
    let mut times = Vec::new();
    for k in 0..traj.len().saturating_sub(1) {
        let (s0, s1) = (sigma[k], sigma[k + 1]);
        if s0 == 0.0 || s0.signum() == s1.signum() || s1 == 0.0 && k + 2 < traj.len() {
            continue;
        }
        let sigma_at = |dt: f64| -> Result<f64> {
            let (x, psi) = sys.advance_from_node(traj, k, dt)?;
            Ok(sys.switching_value(traj.t[k] + dt, &x, &psi, m)?.unwrap_or(0.0))
        };
        let (mut lo, mut hi) = (0.0, traj.t[k + 1] - traj.t[k]);
        let mut slo = s0;
        while hi - lo > SWITCH_TIME_TOL {
            let mid = 0.5 * (lo + hi);
            let sm = sigma_at(mid)?;
            if sm == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if sm.signum() == slo.signum() {
                lo = mid;
                slo = sm;
            } else {
                hi = mid;
            }
        }
        times.push(traj.t[k] + 0.5 * (lo + hi));
    }
    Ok(SwitchScan { times, singular: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_hamiltonian_p, build_hamiltonian_p1};

    fn problem(json: &str) -> ControlProblem {
        ControlProblem::from_json(json).unwrap()
    }

    #[test]
    fn zero_field_is_exactly_constant() {
        let p = problem(r#"{"n":2,"r":1,"N":1,"a":0,"b":1,"phi":["0","0"],"L":["1"],"omega":[{"lo":-1,"hi":1}]}"#);
        let h = build_hamiltonian_p(&p).unwrap();
        let m = Multipliers::p(vec![-1.0]).unwrap();
        let traj = integrate_extremal(&p, &h, &[1.5, -2.0], &[0.3, 0.4], &m, ControlLaw::default(), 10).unwrap();
        assert_eq!(traj.len(), 11);
        assert_eq!(traj.t[10], 1.0);
        for k in 0..traj.len() {
            assert_eq!(traj.x[k], vec![1.5, -2.0]);
            assert_eq!(traj.psi[k], vec![0.3, 0.4]);
        }
    }

    #[test]
    fn grid_tie_breaks_to_low_corner() {
        let p = problem(
            r#"{"n":1,"r":2,"N":1,"a":0,"b":1,"phi":["x1"],"L":["1"],"omega":[{"lo":-1,"hi":2},{"lo":0.5,"hi":3}]}"#,
        );
        let h = build_hamiltonian_p(&p).unwrap();
        let m = Multipliers::p(vec![-1.0]).unwrap();
        let u = maximize_h(&p, &h, 0.0, &[1.0], &[1.0], &m, ControlLaw::default()).unwrap();
        assert_eq!(u, vec![-1.0, 0.5]);
    }

    #[test]
    fn grid_finds_interior_maximum() {
        // H = lambda1*(u1 - 0.3)^2 with lambda1 < 0: max at u1 = 0.3
        let p =
            problem(r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["0"],"L":["(u1 - 0.3)^2"],"omega":[{"lo":-1,"hi":1}]}"#);
        let h = build_hamiltonian_p(&p).unwrap();
        let m = Multipliers::p(vec![-1.0]).unwrap();
        let u = maximize_h(&p, &h, 0.0, &[0.0], &[0.0], &m, ControlLaw::default()).unwrap();
        assert!((u[0] - 0.3).abs() < 1e-4, "{u:?}");
    }

    #[test]
    fn grid_needs_bounded_omega() {
        let p = problem(r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["u1"],"L":["u1^2"],"omega":[{"lo":0}]}"#);
        let h = build_hamiltonian_p(&p).unwrap();
        let m = Multipliers::p(vec![-1.0]).unwrap();
        assert!(matches!(
            maximize_h(&p, &h, 0.0, &[0.0], &[1.0], &m, ControlLaw::default()),
            Err(Error::ControlLaw(_))
        ));
    }

    #[test]
    fn analytic_law_outside_omega_is_rejected() {
        let p = problem(r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["u1"],"L":["u1^2"],"omega":[{"lo":-1,"hi":1}]}"#);
        let h = build_hamiltonian_p1(&p).unwrap();
        let m = Multipliers::p1(-1.0, vec![], 0).unwrap();
        let law = ControlLaw::Expressions {
            controls: vec![Expr::parse("-psi1/(2*psi0)").unwrap()],
            switching: None,
        };
        assert_eq!(
            maximize_h(&p, &h, 0.0, &[0.0], &[1.0], &m, law.clone()).unwrap(),
            vec![0.5]
        );
        assert!(matches!(
            maximize_h(&p, &h, 0.0, &[0.0], &[4.0], &m, law),
            Err(Error::ControlLaw(_))
        ));
    }

    #[test]
    fn domain_error_returns_partial_trajectory() {
        // x1' = -1 from x1 = 0.5: 1/x1 blows up at t = 0.5
        let p =
            problem(r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["-1 + 0*u1"],"L":["ln(x1)"],"omega":[{"lo":0,"hi":1}]}"#);
        let h = build_hamiltonian_p(&p).unwrap();
        let m = Multipliers::p(vec![-1.0]).unwrap();
        match integrate_extremal(&p, &h, &[0.5], &[0.0], &m, ControlLaw::default(), 100) {
            Err(Error::Integration { time, partial, .. }) => {
                assert!(time > 0.4 && time < 0.5 + 1e-12, "{time}");
                assert!(partial.len() > 10 && partial.len() < 101);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_layout() {
        let p = problem(r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["u1"],"L":["1"],"omega":[{"lo":0,"hi":1}]}"#);
        let h = build_hamiltonian_p(&p).unwrap();
        let m = Multipliers::p(vec![-1.0]).unwrap();
        let traj = integrate_extremal(&p, &h, &[0.0], &[1.0], &m, ControlLaw::default(), 2).unwrap();
        let csv = traj.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1,u1,psi1");
        assert_eq!(lines.len(), 4);
        assert_eq!(
            lines[3],
            "1.0000000000000000e0,1.0000000000000000e0,1.0000000000000000e0,1.0000000000000000e0"
        );
    }

    #[test]
    fn law_form_must_match() {
        let p = problem(r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["u1"],"L":["1"],"omega":[{"lo":0,"hi":1}]}"#);
        let h = build_hamiltonian_p(&p).unwrap();
        let m = Multipliers::p(vec![-1.0]).unwrap();
        let traj = integrate_extremal(&p, &h, &[0.0], &[1.0], &m, ControlLaw::default(), 4).unwrap();
        let law = ConservationLaw::new(Expr::var("psi0"), ProblemForm::P1, "probe");
        assert!(check_law(&traj, &law, 1e-9).is_err());
        let law = ConservationLaw::new(Expr::var("psi0"), ProblemForm::P, "probe");
        assert!(matches!(check_law(&traj, &law, 1e-9), Err(Error::UnboundVariable(_))));
    }

    #[test]
    fn default_tolerance_shape() {
        assert!((default_drift_tolerance(1e-3, false) - 1e-10).abs() < 1e-24);
        assert_eq!(default_drift_tolerance(1e-3, true), 0.05);
    }
}
