//! Noether-type conservation laws for multiobjective optimal control.
//!
//! A problem is given by its dynamics, vector cost and control box; a
//! one-parameter group of transformations of `(t, x, u)` is checked for
//! invariance by sampling, turned into the law `psi·xi - H·tau`, and the law
//! is tested along Pontryagin extremals integrated with RK4.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aircraft;
pub mod error;
pub mod expr;
pub mod extremal;
pub mod model;
pub mod noether;
pub mod pareto;
pub mod sampling;
pub mod symmetry;

pub use error::{Error, Result};
pub use expr::{Env, Expr};
pub use extremal::{
    check_hamiltonian_identity, check_law, detect_switches, integrate_extremal, maximize_h, shoot, ClosedFormControl,
    ConservationReport, ControlLaw, ExtremalSystem, GridSearch, ShootOptions, Trajectory,
};
pub use model::{
    build_hamiltonian, build_hamiltonian_p, build_hamiltonian_p1, Bound, ConstraintKind, ControlProblem, Hamiltonian,
    IsoConstraint, Multipliers, ProblemFile, ProblemForm,
};
pub use noether::{law_for_group, law_p, law_p1, ConservationLaw};
pub use pareto::{filter_dominated, scalarize, simplex_grid, sweep, CostatePolicy, OutcomePoint};
pub use sampling::SampleConfig;
pub use symmetry::{
    check_infinitesimal, check_invariance_p, check_invariance_p1, generator, Generator, GroupFile, InvarianceReport,
    OneParamGroup,
};
