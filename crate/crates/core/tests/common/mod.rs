#![allow(dead_code)]

use noether_core::aircraft::{self, AircraftConfig};
use noether_core::expr::{BinOp, Env, Expr, Func};
use noether_core::{
    build_hamiltonian_p, generator, law_for_group, ConservationLaw, ControlProblem, ExtremalSystem, Hamiltonian,
    Multipliers, OneParamGroup, ProblemForm, Trajectory,
};
use rand::Rng;

pub const VARS: [&str; 3] = ["x1", "x2", "t"];

/// Random smooth expression over [`VARS`], defined on all of R^3.
pub fn random_expr(rng: &mut impl Rng, depth: usize) -> Expr {
    if depth == 0 || rng.random_bool(0.2) {
        return if rng.random_bool(0.7) {
            Expr::var(VARS[rng.random_range(0..VARS.len())])
        } else {
            Expr::num((rng.random_range(-200..=200) as f64) / 100.0)
        };
    }
    let sub = |rng: &mut _| random_expr(rng, depth - 1);
    match rng.random_range(0..12) {
        0 => Expr::binary(BinOp::Add, sub(rng), sub(rng)),
        1 => Expr::binary(BinOp::Sub, sub(rng), sub(rng)),
        2 | 3 => Expr::binary(BinOp::Mul, sub(rng), sub(rng)),
        4 => Expr::binary(BinOp::Div, sub(rng), Expr::num(2.0) + sub(rng).cos()),
        5 => sub(rng).pow(Expr::num(rng.random_range(2..=3) as f64)),
        6 => sub(rng).sin(),
        7 => sub(rng).cos(),
        8 => sub(rng).atan(),
        9 => sub(rng).sin().exp(),
        10 => (Expr::num(1.0) + sub(rng).pow(Expr::num(2.0))).ln(),
        _ => Expr::unary(Func::Neg, (Expr::num(1.0) + sub(rng).pow(Expr::num(2.0))).sqrt()),
    }
}

pub fn random_env(rng: &mut impl Rng) -> Env {
    VARS.iter()
        .map(|v| (v.to_string(), rng.random_range(-1.0..1.0)))
        .collect()
}

/// Fourth-order central difference of `e` in `var` at `env`.
pub fn central_difference(e: &Expr, env: &Env, var: &str, h: f64) -> Option<f64> {
    let x = env.get(var).ok()?;
    let at = |d: f64| e.eval(&env.clone().with(var, x + d)).ok();
    let (p1, m1, p2, m2) = (at(h)?, at(-h)?, at(2.0 * h)?, at(-2.0 * h)?);
    Some((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h))
}

/// `|a - b| / max(1, |b|)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub struct Aircraft {
    pub cfg: AircraftConfig,
    pub problem: ControlProblem,
    pub hamiltonian: Hamiltonian,
    pub system: ExtremalSystem,
}

impl Aircraft {
    pub fn new(cfg: AircraftConfig) -> Self {
        let problem = aircraft::build_problem(&cfg).unwrap();
        let hamiltonian = build_hamiltonian_p(&problem).unwrap();
        let system = ExtremalSystem::new(&problem, hamiltonian.clone(), aircraft::analytic_control_law(&cfg)).unwrap();
        Aircraft {
            cfg,
            problem,
            hamiltonian,
            system,
        }
    }

    pub fn law(&self, grp: &OneParamGroup) -> ConservationLaw {
        law_for_group(&self.problem, &generator(grp), ProblemForm::P, grp.name()).unwrap()
    }

    pub fn integrate(&self, case: &Case, steps: usize) -> Trajectory {
        self.system.integrate(&case.x0, &case.psi0, &case.m, steps).unwrap()
    }

    /// Sign of sigma when it keeps one sign on a fine reference run.
    pub fn arc_sign(&self, case: &Case) -> Option<bool> {
        let traj = self.system.integrate(&case.x0, &case.psi0, &case.m, 400).ok()?;
        let signs: Vec<bool> = (0..traj.len())
            .map(|k| {
                let s = self
                    .system
                    .switching_value(traj.t[k], &traj.x[k], &traj.psi[k], &case.m);
                s.unwrap().unwrap() > 0.0
            })
            .collect();
        signs.iter().all(|&s| s == signs[0]).then_some(signs[0])
    }

    /// Draws until a smooth arc turns up: full thrust throughout and the
    /// flight path angle strictly inside its bounds.
    pub fn thrust_arc(&self, rng: &mut impl Rng, mass: (f64, f64)) -> Case {
        let margin = 1e-3;
        loop {
            let c = random_case(rng, mass);
            if self.arc_sign(&c) != Some(true) {
                continue;
            }
            let traj = self.integrate(&c, 400);
            if traj
                .u
                .iter()
                .all(|u| u[1] > self.cfg.u2_lo + margin && u[1] < self.cfg.u2_hi - margin)
            {
                return c;
            }
        }
    }

    /// Rate of the scaling law along an extremal:
    /// `c1 u1/x5 (psi3 cos u2 + 2 psi4 sin u2) - 2 psi4 c2`.
    pub fn scaling_law_rate(&self, traj: &Trajectory, k: usize) -> f64 {
        let (x, u, psi) = (&traj.x[k], &traj.u[k], &traj.psi[k]);
        self.cfg.c1 * u[0] / x[4] * (psi[2] * u[1].cos() + 2.0 * psi[3] * u[1].sin()) - 2.0 * psi[3] * self.cfg.c2
    }
}

#[derive(Clone, Debug)]
pub struct Case {
    pub x0: Vec<f64>,
    pub psi0: Vec<f64>,
    pub m: Multipliers,
}

/// Random aircraft start with `x5` drawn from `mass`.
pub fn random_case(rng: &mut impl Rng, mass: (f64, f64)) -> Case {
    let x0 = vec![
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(0.5..2.0),
        rng.random_range(-0.5..0.5),
        rng.random_range(mass.0..mass.1),
    ];
    let psi0 = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let m = Multipliers::p(vec![-rng.random_range(0.0..1.0), -rng.random_range(0.0..1.0)]).unwrap();
    Case { x0, psi0, m }
}

pub fn max_drift(traj: &Trajectory, f: impl Fn(usize) -> f64) -> f64 {
    let c0 = f(0);
    (0..traj.len()).map(|k| (f(k) - c0).abs()).fold(0.0, f64::max)
}
