//! Vector-to-scalar reduction, multiplier sweeps over the simplex and the
//! dominance filter.
//!
//! Sweep outcomes are extremal outcomes filtered for dominance; they are
//! not claimed to be Pareto optimal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extremal::{shoot, ControlLaw, ExtremalSystem, ShootOptions, Trajectory};
use crate::model::{build_hamiltonian_p, ConstraintKind, ControlProblem, IsoConstraint, Multipliers};

/// Absolute tolerance under which two costs count as equal.
pub const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomePoint {
    pub lambda: Vec<f64>,
    pub costs: Option<Vec<f64>>,
    pub failure: Option<String>,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

impl OutcomePoint {
    pub fn with_costs(lambda: Vec<f64>, costs: Vec<f64>) -> Self {
        OutcomePoint {
            lambda,
            costs: Some(costs),
            failure: None,
            trajectory: None,
        }
    }
}

/// Scalar problem minimising `L_i` (1-based) under `∫ L_j <= reference[j]`
/// for every `j != i`.
pub fn scalarize(p: &ControlProblem, i: usize, reference: &[f64]) -> Result<ControlProblem> {
    let n_costs = p.cost_count();
    if n_costs < 2 {
        return Err(Error::InvalidProblem("scalarization needs N >= 2".into()));
    }
    if !p.constraints().is_empty() {
        return Err(Error::InvalidProblem(
            "scalarization takes a problem without isoperimetric constraints".into(),
        ));
    }
    if i == 0 || i > n_costs {
        return Err(Error::InvalidProblem(format!("cost index {i} not in 1..={n_costs}")));
    }
    if reference.len() != n_costs {
        return Err(Error::Dimension(format!(
            "reference has {} costs, problem has N = {n_costs}",
            reference.len()
        )));
    }
    let mut file = p.file().clone();
    file.cost_count = 1;
    file.costs = vec![p.costs()[i - 1].clone()];
    file.constraints = (0..n_costs)
        .filter(|&j| j != i - 1)
        .map(|j| IsoConstraint {
            g: p.costs()[j].clone(),
            xi: reference[j],
            kind: ConstraintKind::Inequality,
        })
        .collect();
    ControlProblem::new(file)
}

/// `lambda` on `{lambda_j <= 0, Σ|lambda_j| = 1}` with `divisions + 1`
/// points per edge, first component decreasing in magnitude.
pub fn simplex_grid(n: usize, divisions: usize) -> Vec<Vec<f64>> {
    fn rec(left: usize, slots: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if slots == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(left - k, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    if n == 0 || divisions == 0 {
        return if n == 1 { vec![vec![-1.0]] } else { vec![] };
    }
    let mut ks = Vec::new();
    rec(divisions, n, &mut Vec::new(), &mut ks);
    ks.into_iter()
        .map(|k| k.into_iter().map(|v| -(v as f64) / divisions as f64 + 0.0).collect())
        .collect()
}

/// Composite Simpson on a uniform grid with an even number of intervals.
pub fn simpson(values: &[f64], h: f64) -> Result<f64> {
    if values.len() < 3 || values.len() % 2 == 0 {
        return Err(Error::InvalidConfig(format!(
            "Simpson needs an odd node count >= 3, got {}",
            values.len()
        )));
    }
    let last = values.len() - 1;
    let inner: f64 = values[1..last]
        .iter()
        .enumerate()
        .map(|(k, v)| if k % 2 == 0 { 4.0 * v } else { 2.0 * v })
        .sum();
    Ok(h / 3.0 * (values[0] + inner + values[last]))
}

/// Cost integrals `I_j = ∫ L_j dt` along a trajectory.
pub fn cost_integrals(p: &ControlProblem, traj: &Trajectory) -> Result<Vec<f64>> {
    let envs: Vec<_> = (0..traj.len()).map(|k| traj.node_env(k)).collect();
    p.costs()
        .iter()
        .map(|l| {
            let vals = envs.iter().map(|e| l.eval(e)).collect::<Result<Vec<_>>>()?;
            simpson(&vals, traj.step())
        })
        .collect()
}

/// How `psi(a)` is chosen for each sweep point.
#[derive(Clone, Debug)]
pub enum CostatePolicy {
    Fixed(Vec<f64>),
    /// Shoot to `beta` from the given guess.
    Shoot {
        guess: Vec<f64>,
        options: ShootOptions,
    },
}

/// Integrates one extremal per `lambda` and evaluates all costs. Failures
/// are recorded on the point; output order follows `grid`.
pub fn sweep(
    p: &ControlProblem,
    law: &ControlLaw,
    x_a: &[f64],
    policy: &CostatePolicy,
    grid: &[Vec<f64>],
    steps: usize,
    keep_trajectories: bool,
) -> Result<Vec<OutcomePoint>> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty multiplier grid".into()));
    }
    if let Some(l) = grid.iter().find(|l| l.len() != p.cost_count()) {
        return Err(Error::Dimension(format!(
            "grid point has {} multipliers, problem has N = {}",
            l.len(),
            p.cost_count()
        )));
    }
    let steps = steps.max(2).next_multiple_of(2);
    let h = build_hamiltonian_p(p)?;
    let sys = ExtremalSystem::new(p, h.clone(), law.clone())?;
    let run = |lambda: &Vec<f64>| -> Result<Trajectory> {
        let m = Multipliers::p(lambda.clone())?;
        match policy {
            CostatePolicy::Fixed(psi) => sys.integrate(x_a, psi, &m, steps),
            CostatePolicy::Shoot { guess, options } => {
                let fixed = p.clone().with_boundary(
                    x_a.to_vec(),
                    p.beta()
                        .map(<[f64]>::to_vec)
                        .ok_or_else(|| Error::InvalidProblem("shooting sweep needs beta".into()))?,
                )?;
                Ok(shoot(&fixed, &h, &m, law.clone(), steps, guess, options)?.trajectory)
            }
        }
    };
    Ok(grid
        .par_iter()
        .map(|lambda| {
            let outcome = run(lambda).and_then(|traj| Ok((cost_integrals(p, &traj)?, traj)));
            match outcome {
                Ok((costs, traj)) => OutcomePoint {
                    lambda: lambda.clone(),
                    costs: Some(costs),
                    failure: None,
                    trajectory: keep_trajectories.then_some(traj),
                },
                Err(e) => OutcomePoint {
                    lambda: lambda.clone(),
                    costs: None,
                    failure: Some(e.to_string()),
                    trajectory: None,
                },
            }
        })
        .collect())
}

/// `a` strictly dominates `b`: no worse anywhere, better somewhere
/// (minimisation, ties within [`TIE_TOL`]).
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut better = false;
    for (x, y) in a.iter().zip(b) {
        if *x > *y + TIE_TOL {
            return false;
        }
        if *x < *y - TIE_TOL {
            better = true;
        }
    }
    better
}

/// Indices of cost vectors not dominated by any other, in input order.
pub fn nondominated(costs: &[Vec<f64>]) -> Result<Vec<usize>> {
    if let Some(first) = costs.first() {
        if costs.iter().any(|c| c.len() != first.len()) {
            return Err(Error::Dimension("cost vectors of mixed length".into()));
        }
    }
    Ok((0..costs.len())
        .filter(|&i| !costs.iter().any(|c| dominates(c, &costs[i])))
        .collect())
}

/// Keeps the points that no other point dominates. Points without costs
/// (failed runs) are dropped.
pub fn filter_dominated(points: &[OutcomePoint]) -> Result<Vec<OutcomePoint>> {
    let ok: Vec<&OutcomePoint> = points.iter().filter(|p| p.costs.is_some()).collect();
    let costs: Vec<Vec<f64>> = ok.iter().map(|p| p.costs.clone().unwrap_or_default()).collect();
    Ok(nondominated(&costs)?.into_iter().map(|i| ok[i].clone()).collect())
}

/// Per-point kept flag for `points`.
pub fn kept_flags(points: &[OutcomePoint]) -> Result<Vec<bool>> {
    let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].costs.is_some()).collect();
    let costs: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| points[i].costs.clone().unwrap_or_default())
        .collect();
    let mut flags = vec![false; points.len()];
    for k in nondominated(&costs)? {
        flags[idx[k]] = true;
    }
    Ok(flags)
}

/// Drops later points whose costs equal (within [`TIE_TOL`]) an earlier one.
pub fn dedup(points: &[OutcomePoint]) -> Vec<OutcomePoint> {
    let mut out: Vec<OutcomePoint> = Vec::new();
    for p in points {
        let same = |q: &OutcomePoint| match (&p.costs, &q.costs) {
            (Some(a), Some(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= TIE_TOL),
            _ => false,
        };
        if !out.iter().any(same) {
            out.push(p.clone());
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// CSV with columns `lambda1..,I1..,kept,failure`.
pub fn sweep_csv(points: &[OutcomePoint], kept: &[bool]) -> String {
    let n = points.first().map_or(0, |p| p.lambda.len());
    let mut header: Vec<String> = (1..=n).map(|j| format!("lambda{j}")).collect();
    header.extend((1..=n).map(|j| format!("I{j}")));
    header.push("kept".into());
    header.push("failure".into());
    let mut out = header.join(",");
    out.push('\n');
    for (p, k) in points.iter().zip(kept) {
        let mut row: Vec<String> = p.lambda.iter().map(|v| crate::extremal::fmt_float(*v)).collect();
        match &p.costs {
            Some(c) => row.extend(c.iter().map(|v| crate::extremal::fmt_float(*v))),
            None => row.extend((0..n).map(|_| String::new())),
        }
        row.push(if *k { "1" } else { "0" }.into());
        row.push(csv_field(p.failure.as_deref().unwrap_or("")));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aircraft::{analytic_control_law, build_problem, AircraftConfig};
    use crate::model::build_hamiltonian_p1;

    fn pts(costs: &[&[f64]]) -> Vec<OutcomePoint> {
        costs
            .iter()
            .map(|c| OutcomePoint::with_costs(vec![], c.to_vec()))
            .collect()
    }

    fn costs_of(p: &[OutcomePoint]) -> Vec<Vec<f64>> {
        p.iter().map(|p| p.costs.clone().unwrap()).collect()
    }

    #[test]
    fn filter_examples() {
        let kept = filter_dominated(&pts(&[&[1.0, 2.0], &[2.0, 1.0], &[2.0, 2.0]])).unwrap();
        assert_eq!(costs_of(&kept), vec![vec![1.0, 2.0], vec![2.0, 1.0]]);
        let kept = filter_dominated(&pts(&[&[1.0, 1.0], &[1.0, 1.0]])).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(filter_dominated(&pts(&[&[3.0, -1.0]])).unwrap().len(), 1);
        assert!(filter_dominated(&pts(&[&[1.0], &[1.0, 2.0]])).is_err());
    }

    #[test]
    fn ties_within_tolerance() {
        assert!(!dominates(&[1.0, 1.0], &[1.0 + 1e-12, 1.0]));
        assert!(dominates(&[1.0, 1.0], &[1.0 + 1e-6, 1.0]));
    }

    #[test]
    fn dedup_collapses_equal_costs() {
        assert_eq!(dedup(&pts(&[&[1.0, 1.0], &[1.0, 1.0], &[0.0, 2.0]])).len(), 2);
    }

    #[test]
    fn simplex_grid_shapes() {
        let g = simplex_grid(2, 10);
        assert_eq!(g.len(), 11);
        assert_eq!(g[0], vec![-1.0, 0.0]);
        assert_eq!(g[10], vec![0.0, -1.0]);
        assert_eq!(simplex_grid(3, 2).len(), 6);
        for l in simplex_grid(3, 4) {
            assert!((l.iter().sum::<f64>() + 1.0).abs() < 1e-15);
            assert!(l.iter().all(|v| *v <= 0.0));
        }
    }

    #[test]
    fn simpson_exact_on_cubics() {
        let h = 0.25;
        let v: Vec<f64> = (0..=4).map(|k| (k as f64 * h).powi(3)).collect();
        assert!((simpson(&v, h).unwrap() - 0.25).abs() < 1e-15);
        assert!(simpson(&v[..4], h).is_err());
    }

    #[test]
    fn scalarize_aircraft() {
        let p = build_problem(&AircraftConfig::default()).unwrap();
        let s = scalarize(&p, 1, &[0.7, 2.0]).unwrap();
        assert_eq!(s.cost_count(), 1);
        assert_eq!(s.costs()[0].to_string(), "u1");
        assert_eq!(s.constraints().len(), 1);
        assert_eq!(s.constraints()[0].g.to_string(), "1");
        assert_eq!(s.constraints()[0].xi, 2.0);
        assert_eq!(s.constraints()[0].kind, ConstraintKind::Inequality);
        let s2 = scalarize(&p, 2, &[0.7, 2.0]).unwrap();
        assert_eq!(s2.costs()[0].to_string(), "1");
        assert_eq!(s2.constraints()[0].g.to_string(), "u1");
        assert_eq!(s2.constraints()[0].xi, 0.7);
        assert!(scalarize(&p, 3, &[0.7, 2.0]).is_err());
        assert!(scalarize(&p, 0, &[0.7, 2.0]).is_err());
        build_hamiltonian_p1(&s).unwrap();
    }

    #[test]
    fn scalarize_needs_vector_cost() {
        let p = ControlProblem::from_json(
            r#"{"n":1,"r":1,"N":1,"a":0,"b":1,"phi":["u1"],"L":["u1^2"],"omega":[{"lo":-1,"hi":1}]}"#,
        )
        .unwrap();
        assert!(scalarize(&p, 1, &[0.0]).is_err());
    }

    #[test]
    fn aircraft_sweep_flight_time_is_exact() {
        let cfg = AircraftConfig::default();
        let p = build_problem(&cfg).unwrap();
        let grid = simplex_grid(2, 10);
        let pts = sweep(
            &p,
            &analytic_control_law(&cfg),
            &[0.0, 0.0, 1.0, 1.0, 5.0],
            &CostatePolicy::Fixed(vec![0.3, -0.2, 1.0, 0.5, 0.1]),
            &grid,
            101,
            false,
        )
        .unwrap();
        assert_eq!(pts.len(), 11);
        for (pt, l) in pts.iter().zip(&grid) {
            assert_eq!(&pt.lambda, l);
            let c = pt.costs.as_ref().unwrap();
            assert!((c[1] - 1.0).abs() < 1e-14, "{c:?}");
        }
        let csv = sweep_csv(&pts, &kept_flags(&pts).unwrap());
        assert!(csv.starts_with("lambda1,lambda2,I1,I2,kept,failure\n"));
        assert_eq!(csv.lines().count(), 12);
    }

    #[test]
    fn failed_points_are_recorded() {
        let cfg = AircraftConfig::default();
        let p = build_problem(&cfg).unwrap().with_horizon(0.0, 3.0).unwrap();
        // strong thrust burns through x5 = 0.5 before t = 3
        let pts = sweep(
            &p,
            &analytic_control_law(&cfg),
            &[0.0, 0.0, 0.0, 0.0, 0.5],
            &CostatePolicy::Fixed(vec![0.0, 0.0, 10.0, 0.0, 0.0]),
            &[vec![-1.0, 0.0], vec![0.0, -1.0]],
            300,
            false,
        )
        .unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| p.failure.is_some()));
        let flags = kept_flags(&pts).unwrap();
        assert_eq!(flags, vec![false, false]);
    }
}
