//! Conservation laws `psi·xi - H·tau` built from a group generator.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::{Env, Expr};
use crate::model::{build_hamiltonian_p, build_hamiltonian_p1, vars, ControlProblem, Hamiltonian, ProblemForm};
use crate::symmetry::Generator;

/// A function of `(t, x, u, psi0, psi, lambda)` claimed constant along
/// extremals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationLaw {
    pub expr: Expr,
    pub form: ProblemForm,
    pub provenance: String,
}

impl ConservationLaw {
    pub fn new(expr: Expr, form: ProblemForm, provenance: impl Into<String>) -> Self {
        ConservationLaw {
            expr,
            form,
            provenance: provenance.into(),
        }
    }

    pub fn eval(&self, env: &Env) -> Result<f64> {
        self.expr.eval(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("law serializes")
    }

    /// Checks `C(c·(psi0, psi, lambda)) = c·C(psi0, psi, lambda)` at each
    /// environment for the scale `c`; returns the worst relative deviation.
    pub fn linearity_defect(&self, envs: &[Env], n: usize, multiplier_count: usize, c: f64) -> Result<f64> {
        let mut worst = 0.0f64;
        for env in envs {
            let base = self.expr.eval(env)?;
            let mut scaled = env.clone();
            let mut names: Vec<String> = (0..n).map(vars::costate).collect();
            names.extend((0..multiplier_count).map(vars::multiplier));
            if self.form == ProblemForm::P1 {
                names.push(vars::COST_MULTIPLIER.into());
            }
            for name in names {
                if let Ok(v) = env.get(&name) {
                    scaled.set(name, c * v);
                }
            }
            let v = self.expr.eval(&scaled)?;
            worst = worst.max((v - c * base).abs() / (1.0 + (c * base).abs()));
        }
        Ok(worst)
    }
}

/// `Σ psi_i xi_i - H tau`.
pub fn law_from_components(tau: &Expr, xi: &[Expr], h: &Hamiltonian) -> Result<ConservationLaw> {
    if xi.len() != h.n() {
        return Err(Error::Dimension(format!(
            "xi has {} components, the Hamiltonian has n = {}",
            xi.len(),
            h.n()
        )));
    }
    let momentum = Expr::sum(
        xi.iter()
            .enumerate()
            .map(|(i, x)| Expr::var(vars::costate(i)) * x.clone()),
    );
    let expr = (momentum - h.expr().clone() * tau.clone()).simplify();
    Ok(ConservationLaw::new(expr, h.form(), "generator components"))
}

/// Law for the scalar problem with isoperimetric constraints.
pub fn law_p1(p: &ControlProblem, gen: &Generator) -> Result<ConservationLaw> {
    let h = build_hamiltonian_p1(p)?;
    law_from_components(&gen.tau, &gen.xi, &h)
}

/// Unimprovable (Pareto) law for the vector-cost problem.
pub fn law_p(p: &ControlProblem, gen: &Generator) -> Result<ConservationLaw> {
    let h = build_hamiltonian_p(p)?;
    law_from_components(&gen.tau, &gen.xi, &h)
}

/// Builds the law for `form` and records the group name as provenance.
pub fn law_for_group(
    p: &ControlProblem,
    gen: &Generator,
    form: ProblemForm,
    group_name: &str,
) -> Result<ConservationLaw> {
    let mut law = match form {
        ProblemForm::P1 => law_p1(p, gen)?,
        ProblemForm::P => law_p(p, gen)?,
    };
    law.provenance = if group_name.is_empty() {
        "one-parameter group".into()
    } else {
        format!("one-parameter group: {group_name}")
    };
    Ok(law)
}
