//! Benchmark fixtures for `noether-core`.

use noether_core::aircraft::{self, AircraftConfig};
use noether_core::{build_hamiltonian_p, ExtremalSystem, Multipliers};

/// Aircraft system with the closed-form control attached.
pub fn aircraft_system() -> ExtremalSystem {
    let cfg = AircraftConfig::default();
    let p = aircraft::build_problem(&cfg).expect("aircraft problem");
    let h = build_hamiltonian_p(&p).expect("hamiltonian");
    ExtremalSystem::new(&p, h, aircraft::analytic_control_law(&cfg)).expect("system")
}

/// Full-thrust start on `[0, 1]`.
pub fn aircraft_start() -> (Vec<f64>, Vec<f64>, Multipliers) {
    (
        vec![0.0, 0.0, 1.0, 1.0, 5.0],
        vec![0.3, -0.2, 10.0, 0.5, 0.1],
        Multipliers::p(vec![-1.0, -0.5]).expect("multipliers"),
    )
}
