mod common;

use common::{max_drift, random_case, Aircraft};
use noether_core::aircraft::{builtin_groups, corrupted_scaling_group, AircraftConfig};
use noether_core::expr::Expr;
use noether_core::pareto::simpson;
use noether_core::{
    build_hamiltonian_p1, check_hamiltonian_identity, check_law, detect_switches, shoot, ConservationLaw, ControlLaw,
    ControlProblem, Error, ExtremalSystem, GridSearch, Multipliers, ProblemForm, ShootOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lq(beta: f64, omega: &str) -> ControlProblem {
    ControlProblem::from_json(&format!(
        r#"{{"n":1,"r":1,"N":1,"a":0,"b":1,"alpha":[0],"beta":[{beta}],"phi":["u1"],"L":["u1^2"],"omega":[{omega}]}}"#
    ))
    .unwrap()
}

fn lq_law() -> ControlLaw {
    ControlLaw::Expressions {
        controls: vec![Expr::parse("-psi1/(2*psi0)").unwrap()],
        switching: None,
    }
}

fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn lq_shooting_recovers_unit_control() {
    let p = lq(1.0, "{}");
    let h = build_hamiltonian_p1(&p).unwrap();
    let m = Multipliers::p1(-1.0, vec![], 0).unwrap();
    let res = shoot(&p, &h, &m, lq_law(), 100, &[0.3], &ShootOptions::default()).unwrap();
    assert!((res.psi_a[0] - 2.0).abs() < 1e-8);
    for u in &res.trajectory.u {
        assert!((u[0] - 1.0).abs() < 1e-8);
    }
    assert!(res.residual <= 1e-10);
}

#[test]
fn shooting_reports_divergence_with_best_costate() {
    let p = lq(5.0, r#"{"lo":-1,"hi":1}"#);
    let h = build_hamiltonian_p1(&p).unwrap();
    let m = Multipliers::p1(-1.0, vec![], 0).unwrap();
    let law = ControlLaw::GridSearch(GridSearch {
        resolution: 16,
        refinements: 20,
    });
    match shoot(&p, &h, &m, law, 20, &[0.3], &ShootOptions::default()) {
        Err(Error::ShootingDiverged { residual, best_psi, .. }) => {
            assert!(residual >= 4.0 - 1e-9);
            assert_eq!(best_psi.len(), 1);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn abnormal_multiplier_integrates() {
    let p = lq(1.0, r#"{"lo":-1,"hi":1}"#);
    let h = build_hamiltonian_p1(&p).unwrap();
    let m = Multipliers::p1(0.0, vec![], 0).unwrap();
    let sys = ExtremalSystem::new(&p, h, ControlLaw::default()).unwrap();
    let traj = sys.integrate(&[0.0], &[0.5], &m, 20).unwrap();
    assert!(traj.u.iter().all(|u| u[0] == 1.0));
    assert!((traj.x.last().unwrap()[0] - 1.0).abs() < 1e-14);
}

#[test]
fn richardson_ratio_is_fourth_order() {
    let a = Aircraft::new(AircraftConfig::default());
    let mut rng = seeded(11);
    for _ in 0..3 {
        let c = a.thrust_arc(&mut rng, (2.0, 10.0));
        let end = |steps| a.integrate(&c, steps).x.last().unwrap().clone();
        let (x1, x2, x4) = (end(20), end(40), end(80));
        for i in 0..5 {
            let ratio = (x1[i] - x2[i]) / (x2[i] - x4[i]);
            if (x2[i] - x4[i]).abs() > 1e-12 {
                assert!((ratio - 16.0).abs() < 2.0, "component {i}: ratio {ratio}");
            }
        }
    }
}

#[test]
fn hamiltonian_drift_shrinks_with_step() {
    let a = Aircraft::new(AircraftConfig::default());
    let mut rng = seeded(12);
    for _ in 0..3 {
        let c = a.thrust_arc(&mut rng, (2.0, 10.0));
        let drift = |steps| {
            let t = a.integrate(&c, steps);
            max_drift(&t, |k| {
                a.system
                    .hamiltonian_value(t.t[k], &t.x[k], &t.u[k], &t.psi[k], &c.m)
                    .unwrap()
            })
        };
        let (d1, d2) = (drift(10), drift(20));
        assert!(d1 / d2 >= 8.0, "{d1} / {d2}");
    }
}

#[test]
fn translation_laws_and_hamiltonian_are_conserved() {
    let a = Aircraft::new(AircraftConfig::default());
    let groups = builtin_groups();
    let mut rng = seeded(13);
    for _ in 0..5 {
        let c = random_case(&mut rng, (2.0, 10.0));
        let t = a.integrate(&c, 1000);
        for g in &groups[..2] {
            let r = check_law(&t, &a.law(g), 1e-13).unwrap();
            assert!(r.max_drift <= 1e-13, "{}: {}", g.name(), r.max_drift);
        }
        let hd = max_drift(&t, |k| {
            a.system
                .hamiltonian_value(t.t[k], &t.x[k], &t.u[k], &t.psi[k], &c.m)
                .unwrap()
        });
        assert!(hd <= 1e-6, "{hd}");
        let boost = ConservationLaw::new(Expr::parse("psi1*t + psi3").unwrap(), ProblemForm::P, "boost");
        assert!(check_law(&t, &boost, 1e-10).unwrap().pass);
    }
}

#[test]
fn analytic_control_never_loses_to_the_grid() {
    let a = Aircraft::new(AircraftConfig::default());
    let mut rng = seeded(14);
    for _ in 0..200 {
        let c = random_case(&mut rng, (0.5, 10.0));
        let t = rng.random_range(0.0..1.0);
        let loss = a.system.audit(t, &c.x0, &c.psi0, &c.m, &GridSearch::default()).unwrap();
        assert!(loss <= 1e-9, "grid beats the law by {loss}");
    }
}

#[test]
fn negative_controls_drift() {
    let a = Aircraft::new(AircraftConfig::default());
    let mut rng = seeded(15);
    let corrupted = a.law(&corrupted_scaling_group());
    let x3 = ConservationLaw::new(Expr::var("x3"), ProblemForm::P, "probe");
    for _ in 0..3 {
        let c = a.thrust_arc(&mut rng, (2.0, 10.0));
        let t = a.integrate(&c, 1000);
        assert!(check_law(&t, &corrupted, 1e-6).unwrap().max_drift > 1e-2);
        assert!(!check_law(&t, &x3, 1e-6).unwrap().pass);
    }
}

#[test]
fn scaling_law_drift_matches_its_rate_integral() {
    let a = Aircraft::new(AircraftConfig::default());
    let law = a.law(&builtin_groups()[2]);
    let mut rng = seeded(16);
    for _ in 0..3 {
        let c = a.thrust_arc(&mut rng, (2.0, 10.0));
        let t = a.integrate(&c, 1000);
        let rates: Vec<f64> = (0..t.len()).map(|k| a.scaling_law_rate(&t, k)).collect();
        let predicted = simpson(&rates, t.step()).unwrap();
        let actual = law.eval(&t.node_env(t.len() - 1)).unwrap() - law.eval(&t.node_env(0)).unwrap();
        assert!(actual.abs() > 1e-3);
        assert!(
            (predicted - actual).abs() <= 1e-8 * (1.0 + actual.abs()),
            "{predicted} vs {actual}"
        );
    }
}

#[test]
fn hamiltonian_identity_on_time_varying_problem() {
    let p = ControlProblem::from_json(
        r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["u1"],"L":["(1 + t)*u1^2 + x1^2"],"omega":[{}]}"#,
    )
    .unwrap();
    let h = build_hamiltonian_p1(&p).unwrap();
    let m = Multipliers::p1(-1.0, vec![], 0).unwrap();
    let law = ControlLaw::Expressions {
        controls: vec![Expr::parse("psi1/(2*(1 + t))").unwrap()],
        switching: None,
    };
    let sys = ExtremalSystem::new(&p, h.clone(), law).unwrap();
    let t = sys.integrate(&[1.0], &[0.5], &m, 1000).unwrap();
    let r = check_hamiltonian_identity(&p, &t, &h, 1e-4, None).unwrap();
    assert!(r.pass, "{r:?}");
    assert_eq!(r.excluded_nodes, 0);
}

#[test]
fn hamiltonian_identity_on_aircraft_arcs() {
    let a = Aircraft::new(AircraftConfig::default());
    let mut rng = seeded(17);
    for _ in 0..3 {
        let c = a.thrust_arc(&mut rng, (2.0, 10.0));
        let t = a.integrate(&c, 1000);
        let r = check_hamiltonian_identity(&a.problem, &t, &a.hamiltonian, 1e-4, None).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn switch_detection() {
    let a = Aircraft::new(AircraftConfig::default());
    let mut rng = seeded(18);
    let c = a.thrust_arc(&mut rng, (2.0, 10.0));
    let scan = detect_switches(&a.system, &a.integrate(&c, 200)).unwrap();
    assert!(scan.times.is_empty() && !scan.singular);

    let (c, ts) = loop {
        let c = random_case(&mut rng, (2.0, 10.0));
        if a.arc_sign(&c).is_none() {
            let scan = detect_switches(&a.system, &a.integrate(&c, 200)).unwrap();
            if scan.times.len() == 1 {
                break (c, scan.times[0]);
            }
        }
    };
    let fine = a.integrate(&c, 4000);
    let sigma: Vec<f64> = (0..fine.len())
        .map(|k| {
            a.system
                .switching_value(fine.t[k], &fine.x[k], &fine.psi[k], &c.m)
                .unwrap()
                .unwrap()
        })
        .collect();
    let k = sigma.windows(2).position(|w| (w[0] > 0.0) != (w[1] > 0.0)).unwrap();
    let slack = 1e-6;
    assert!(
        fine.t[k] - slack <= ts && ts <= fine.t[k + 1] + slack,
        "{ts} not in [{}, {}]",
        fine.t[k],
        fine.t[k + 1]
    );

    let p = lq(1.0, r#"{"lo":-1,"hi":1}"#);
    let law = ControlLaw::Expressions {
        controls: vec![Expr::num(0.0)],
        switching: Some(Expr::num(0.0)),
    };
    let sys = ExtremalSystem::new(&p, build_hamiltonian_p1(&p).unwrap(), law).unwrap();
    let m = Multipliers::p1(-1.0, vec![], 0).unwrap();
    let scan = detect_switches(&sys, &sys.integrate(&[0.0], &[0.0], &m, 10).unwrap()).unwrap();
    assert!(scan.singular);
}
