//! Built-in pilotless-aircraft example: point mass with thrust `u1` at
//! angle `u2`, burning fuel `x5`, with fuel and flight-time costs.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::extremal::{ClosedFormControl, ControlLaw};
use crate::model::{Bound, ControlProblem, Multipliers, ProblemFile};
use crate::sampling::SampleConfig;
use crate::symmetry::OneParamGroup;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AircraftConfig {
    pub c1: f64,
    pub c2: f64,
    pub u1_max: f64,
    pub u2_lo: f64,
    pub u2_hi: f64,
    pub horizon: f64,
}

impl Default for AircraftConfig {
    fn default() -> Self {
        AircraftConfig {
            c1: 1.0,
            c2: 1.0,
            u1_max: 1.0,
            u2_lo: -1.2,
            u2_hi: 1.2,
            horizon: 1.0,
        }
    }
}

impl AircraftConfig {
    pub fn with_constants(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = c1;
        self.c2 = c2;
        self
    }

    /// Reads the constants, control box and horizon back from a problem
    /// built by [`build_problem`].
    pub fn from_problem(p: &ControlProblem) -> Result<Self> {
        let constant = |k: &str| {
            p.constants()
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidProblem(format!("aircraft problem lacks constant {k}")))
        };
        let bounds = |j: usize| match p.omega().get(j) {
            Some(Bound {
                lo: Some(lo),
                hi: Some(hi),
            }) => Ok((*lo, *hi)),
            _ => Err(Error::InvalidProblem(format!("aircraft u{} needs a closed box", j + 1))),
        };
        if (p.n(), p.r(), p.cost_count()) != (5, 2, 2) || p.a() != 0.0 {
            return Err(Error::InvalidProblem("not an aircraft problem".into()));
        }
        let (u1_lo, u1_max) = bounds(0)?;
        let (u2_lo, u2_hi) = bounds(1)?;
        if u1_lo != 0.0 {
            return Err(Error::InvalidProblem("aircraft throttle box must start at 0".into()));
        }
        let cfg = AircraftConfig {
            c1: constant("c1")?,
            c2: constant("c2")?,
            u1_max,
            u2_lo,
            u2_hi,
            horizon: p.b(),
        };
        cfg.validate()?;
        if problem_file(&cfg).phi != p.phi() || problem_file(&cfg).costs != p.costs() {
            return Err(Error::InvalidProblem(
                "dynamics or costs differ from the aircraft model".into(),
            ));
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.c1 > 0.0
            && self.c2 > 0.0
            && self.u1_max > 0.0
            && self.u1_max.is_finite()
            && -FRAC_PI_2 < self.u2_lo
            && self.u2_lo < self.u2_hi
            && self.u2_hi < FRAC_PI_2
            && self.horizon > 0.0
            && self.horizon.is_finite()
            && self.c1.is_finite()
            && self.c2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidProblem(format!("invalid aircraft config {self:?}")))
        }
    }
}

pub fn problem_file(cfg: &AircraftConfig) -> ProblemFile {
    let e = |s: &str| Expr::parse(s).expect("aircraft expression");
    ProblemFile {
        n: 5,
        r: 2,
        cost_count: 2,
        a: 0.0,
        b: cfg.horizon,
        alpha: None,
        beta: None,
        constants: [("c1".to_string(), cfg.c1), ("c2".to_string(), cfg.c2)].into(),
        phi: vec![
            e("x3"),
            e("x4"),
            e("c1*(u1/x5)*cos(u2)"),
            e("c1*(u1/x5)*sin(u2) - c2"),
            e("-u1"),
        ],
        costs: vec![e("u1"), e("1")],
        constraints: vec![],
        omega: vec![Bound::closed(0.0, cfg.u1_max), Bound::closed(cfg.u2_lo, cfg.u2_hi)],
    }
}

pub fn build_problem(cfg: &AircraftConfig) -> Result<ControlProblem> {
    cfg.validate()?;
    ControlProblem::new(problem_file(cfg))
}

/// Translations along `x1` and `x2`, and the scaling group.
pub fn builtin_groups() -> Vec<OneParamGroup> {
    let translation = |i: usize, name: &str| {
        let mut x = vec!["x1", "x2", "x3", "x4", "x5"];
        let moved = format!("x{} + s", i + 1);
        x[i] = &moved;
        OneParamGroup::parse(name, "t", &x, &["u1", "u2"], 10.0).expect("translation group")
    };
    vec![
        translation(0, "x1-translation"),
        translation(1, "x2-translation"),
        scaling_group(2),
    ]
}

/// The scaling group; `x4_exponent` is 2 for the built-in group.
pub fn scaling_group(x4_exponent: i32) -> OneParamGroup {
    let x4 = format!("exp({x4_exponent}*s)*x4");
    let name = if x4_exponent == 2 {
        "scaling".to_string()
    } else {
        format!("scaling-x4-exponent-{x4_exponent}")
    };
    OneParamGroup::parse(
        &name,
        "t",
        &["exp(s)*x1", "exp(2*s)*x2", "exp(s)*x3", &x4, "x5"],
        &["u1", "atan(exp(s)*tan(u2))"],
        1.0,
    )
    .expect("scaling group")
}

/// Scaling group with `X4 = exp(3 s) x4`.
pub fn corrupted_scaling_group() -> OneParamGroup {
    scaling_group(3)
}

/// Reference form `psi1 x1 + 2 psi2 x2 + psi3 x3 + 2 psi4 x4` of the scaling law.
pub fn reference_scaling_law() -> Expr {
    Expr::parse("psi1*x1 + 2*psi2*x2 + psi3*x3 + 2*psi4*x4").expect("law")
}

/// Sample box used for the invariance checks.
pub fn sample_config(cfg: &AircraftConfig) -> SampleConfig {
    SampleConfig::default()
        .with_interval("t", 0.0, cfg.horizon)
        .with_interval("x5", 0.5, 10.0)
        .with_interval("u1", 0.0, cfg.u1_max)
        .with_interval("u2", cfg.u2_lo, cfg.u2_hi)
        .with_interval("s", -0.5, 0.5)
}

/// Closed-form maximiser of the P-form Hamiltonian.
#[derive(Clone, Debug)]
pub struct AircraftControl {
    c1: f64,
    u1_max: f64,
    u2_lo: f64,
    u2_hi: f64,
}

impl AircraftControl {
    pub fn new(cfg: &AircraftConfig) -> Self {
        AircraftControl {
            c1: cfg.c1,
            u1_max: cfg.u1_max,
            u2_lo: cfg.u2_lo,
            u2_hi: cfg.u2_hi,
        }
    }

    fn gain(psi3: f64, psi4: f64, a: f64) -> f64 {
        psi3 * a.cos() + psi4 * a.sin()
    }

    /// Interior angle when `atan2` lies in the box; otherwise the better
    /// bound, or the one named by `bound_sign` when given.
    fn angle_on(&self, psi3: f64, psi4: f64, bound_sign: Option<f64>) -> f64 {
        let a = psi4.atan2(psi3);
        if a > self.u2_lo && a < self.u2_hi {
            return a;
        }
        let s = bound_sign.unwrap_or_else(|| self.bound_sign(psi3, psi4));
        if s > 0.0 {
            self.u2_hi
        } else {
            self.u2_lo
        }
    }

    fn angle(&self, psi3: f64, psi4: f64) -> f64 {
        self.angle_on(psi3, psi4, None)
    }

    /// `gain(hi) - gain(lo)`; picks the bound when `atan2` leaves the box.
    fn bound_sign(&self, psi3: f64, psi4: f64) -> f64 {
        Self::gain(psi3, psi4, self.u2_hi) - Self::gain(psi3, psi4, self.u2_lo)
    }

    fn sigma(&self, x5: f64, psi: &[f64], lambda1: f64, u2: f64) -> f64 {
        lambda1 + self.c1 / x5 * (psi[2] * u2.cos() + psi[3] * u2.sin()) - psi[4]
    }

    fn check(&self, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<()> {
        if x.len() != 5 || psi.len() != 5 || m.lambda.len() != 2 {
            return Err(Error::Dimension("aircraft law expects n = 5, N = 2".into()));
        }
        if !(x[4] > 0.0) {
            return Err(Error::Domain {
                expr: "x5".into(),
                message: format!("mass must stay positive, got {}", x[4]),
            });
        }
        Ok(())
    }
}

impl ClosedFormControl for AircraftControl {
    fn argmax(&self, _t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<Option<Vec<f64>>> {
        self.check(x, psi, m)?;
        if psi[2] == 0.0 && psi[3] == 0.0 {
            return Ok(None);
        }
        let u2 = self.angle(psi[2], psi[3]);
        let u1 = if self.sigma(x[4], psi, m.lambda[0], u2) > 0.0 {
            self.u1_max
        } else {
            0.0
        };
        Ok(Some(vec![u1, u2]))
    }

    fn pins_arc(&self) -> bool {
        true
    }

    fn argmax_on_arc(
        &self,
        _t: f64,
        x: &[f64],
        psi: &[f64],
        m: &Multipliers,
        signs: &[f64],
    ) -> Result<Option<Vec<f64>>> {
        self.check(x, psi, m)?;
        if psi[2] == 0.0 && psi[3] == 0.0 {
            return Ok(None);
        }
        let u2 = self.angle_on(psi[2], psi[3], Some(signs[1]));
        let u1 = if signs[0] > 0.0 { self.u1_max } else { 0.0 };
        Ok(Some(vec![u1, u2]))
    }

    fn arc_signs(&self, _t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Result<Vec<f64>> {
        self.check(x, psi, m)?;
        let u2 = self.angle(psi[2], psi[3]);
        Ok(vec![
            self.sigma(x[4], psi, m.lambda[0], u2),
            self.bound_sign(psi[2], psi[3]),
        ])
    }

    fn switching(&self, _t: f64, x: &[f64], psi: &[f64], m: &Multipliers) -> Option<f64> {
        self.check(x, psi, m).ok()?;
        let u2 = self.angle(psi[2], psi[3]);
        Some(self.sigma(x[4], psi, m.lambda[0], u2))
    }
}

pub fn analytic_control_law(cfg: &AircraftConfig) -> ControlLaw {
    ControlLaw::ClosedForm(Arc::new(AircraftControl::new(cfg)))
}

/// `(file name, JSON)` for the problem and the three builtin groups.
pub fn export_files(cfg: &AircraftConfig) -> Result<Vec<(String, String)>> {
    let p = build_problem(cfg)?;
    let mut out = vec![("aircraft.json".to_string(), p.to_json())];
    for g in builtin_groups() {
        out.push((format!("{}.json", g.name()), g.to_json()));
    }
    Ok(out)
}
