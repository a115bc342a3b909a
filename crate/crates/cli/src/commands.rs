use std::fs;
use std::path::{Path, PathBuf};

use noether_core::aircraft::{self, AircraftConfig};
use noether_core::extremal::{default_drift_tolerance, ExtremalSystem};
use noether_core::pareto::{dedup, kept_flags, simplex_grid, sweep_csv};
use noether_core::{
    build_hamiltonian, check_hamiltonian_identity, check_infinitesimal, check_invariance_p, check_invariance_p1,
    check_law, generator, law_for_group, shoot, sweep, ConservationLaw, ControlLaw, ControlProblem, CostatePolicy,
    Error, Expr, GridSearch, Multipliers, OneParamGroup, ProblemForm, SampleConfig, ShootOptions, Trajectory,
};
use serde::Serialize;
use serde_json::json;

use crate::{
    AircraftCommand, CheckArgs, Command, ConserveArgs, DhdtArgs, ExportArgs, ExtremalArgs, ExtremalSetup, Form,
    LawArgs, LawChoice, LawKind, Output, ParetoArgs, ShootArgs,
};

const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const PASS: u8 = 0;
pub const CHECK_FAILED: u8 = 1;
pub const INPUT_ERROR: u8 = 2;
pub const INTEGRATION_ERROR: u8 = 3;
pub const SHOOTING_ERROR: u8 = 4;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Integration { .. } => INTEGRATION_ERROR,
            Error::ShootingDiverged { .. } => SHOOTING_ERROR,
            _ => INPUT_ERROR,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn input_error(message: impl Into<String>) -> Failure {
    Failure {
        code: INPUT_ERROR,
        message: message.into(),
    }
}

type Outcome = Result<u8, Failure>;

pub fn run(command: Command) -> Outcome {
    match command {
        Command::Check(args) => check(&args, false),
        Command::CheckInfinitesimal(args) => check(&args, true),
        Command::Law(args) => law(&args),
        Command::Extremal(args) => extremal(&args),
        Command::Conserve(args) => conserve(&args),
        Command::Dhdt(args) => dhdt(&args),
        Command::Shoot(args) => shoot_cmd(&args),
        Command::Pareto(args) => pareto(&args),
        Command::Aircraft {
            command: AircraftCommand::Export(args),
        } => export(&args),
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_error(format!("{}: {e}", path.display())))
}

fn with_path<T>(path: &Path, r: Result<T, Error>) -> Result<T, Failure> {
    r.map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn load_problem(path: &Path) -> Result<ControlProblem, Failure> {
    with_path(path, ControlProblem::from_json(&read(path)?))
}

fn load_group(path: &Path) -> Result<OneParamGroup, Failure> {
    with_path(path, OneParamGroup::from_json(&read(path)?))
}

fn emit(output: &Output, text: &str) -> Result<(), Failure> {
    match &output.out {
        Some(path) => fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn envelope(command: &str, config: &impl Serialize, key: &str, report: &impl Serialize) -> String {
    let mut v = json!({
        "tool": "noether",
        "version": VERSION,
        "command": command,
        "config": config,
    });
    v[key] = serde_json::to_value(report).expect("report serializes");
    let mut s = serde_json::to_string_pretty(&v).expect("json");
    s.push('\n');
    s
}

fn csv_header(command: &str, config: &impl Serialize) -> String {
    format!(
        "# noether {VERSION} {command} {}\n",
        serde_json::to_string(config).expect("config serializes")
    )
}

fn form_of(form: Option<Form>, p: &ControlProblem) -> ProblemForm {
    match form {
        Some(Form::P) => ProblemForm::P,
        Some(Form::P1) => ProblemForm::P1,
        None if p.cost_count() == 1 => ProblemForm::P1,
        None => ProblemForm::P,
    }
}

fn check(args: &CheckArgs, infinitesimal: bool) -> Outcome {
    let p = load_problem(&args.problem)?;
    let g = load_group(&args.group)?;
    let mut cfg = sample_config(args.config.as_deref())?;
    if let Some(n) = args.samples {
        cfg.samples = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.tolerance {
        cfg.tolerance = t;
    }
    cfg.skip_domain_errors |= args.skip_domain_errors;
    let form = form_of(args.form, &p);
    let report = match (infinitesimal, form) {
        (true, form) => check_infinitesimal(&p, &g, &cfg, form)?,
        (false, ProblemForm::P) => check_invariance_p(&p, &g, &cfg)?,
        (false, ProblemForm::P1) => check_invariance_p1(&p, &g, &cfg)?,
    };
    let name = if infinitesimal { "check-infinitesimal" } else { "check" };
    let config = json!({ "args": args, "sampling": cfg });
    emit(&args.output, &envelope(name, &config, "report", &report))?;
    Ok(if report.pass { PASS } else { CHECK_FAILED })
}

fn sample_config(path: Option<&Path>) -> Result<SampleConfig, Failure> {
    match path {
        Some(path) => serde_json::from_str::<SampleConfig>(&read(path)?)
            .map_err(|e| input_error(format!("{}: {e}", path.display()))),
        None => Ok(SampleConfig::default()),
    }
}

fn build_law(
    p: &ControlProblem,
    g: &OneParamGroup,
    form: ProblemForm,
    config: Option<&Path>,
) -> Result<ConservationLaw, Failure> {
    let cfg = sample_config(config)?.with_control_box(p.omega()).with_samples(100);
    g.validate_for(p, &cfg)?;
    Ok(law_for_group(p, &generator(g), form, g.name())?)
}

fn law(args: &LawArgs) -> Outcome {
    let p = load_problem(&args.problem)?;
    let g = load_group(&args.group)?;
    let law = build_law(&p, &g, form_of(args.form, &p), args.config.as_deref())?;
    let text = if args.json {
        envelope("law", args, "law", &law)
    } else {
        format!("{}\n", law.expr)
    };
    emit(&args.output, &text)?;
    Ok(PASS)
}

struct Prepared {
    problem: ControlProblem,
    system: ExtremalSystem,
    multipliers: Multipliers,
    x0: Vec<f64>,
}

fn control_law(p: &ControlProblem, choice: &LawChoice) -> Result<ControlLaw, Failure> {
    if !choice.controls.is_empty() {
        let controls = choice
            .controls
            .iter()
            .map(|s| Expr::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        let switching = choice.switching.as_deref().map(Expr::parse).transpose()?;
        return Ok(ControlLaw::Expressions { controls, switching });
    }
    Ok(match choice.law {
        LawKind::Grid => ControlLaw::GridSearch(GridSearch {
            resolution: choice.resolution,
            refinements: choice.refinements,
        }),
        LawKind::Aircraft => aircraft::analytic_control_law(&AircraftConfig::from_problem(p)?),
    })
}

fn initial_state(p: &ControlProblem, x0: &Option<Vec<f64>>) -> Result<Vec<f64>, Failure> {
    match (x0, p.alpha()) {
        (Some(x), _) => Ok(x.clone()),
        (None, Some(a)) => Ok(a.to_vec()),
        (None, None) => Err(input_error("no --x0 given and the problem has no alpha")),
    }
}

fn prepare(setup: &ExtremalSetup) -> Result<Prepared, Failure> {
    let problem = load_problem(&setup.problem)?;
    let (form, multipliers) = match setup.cost_multiplier {
        Some(psi0) => (
            ProblemForm::P1,
            Multipliers::p1(psi0, setup.lambda.clone(), problem.equality_count())?,
        ),
        None => (ProblemForm::P, Multipliers::p(setup.lambda.clone())?),
    };
    let h = build_hamiltonian(&problem, form)?;
    let law = control_law(&problem, &setup.law)?;
    let system = ExtremalSystem::new(&problem, h, law)?;
    let x0 = initial_state(&problem, &setup.x0)?;
    Ok(Prepared {
        problem,
        system,
        multipliers,
        x0,
    })
}

/// Integrates; on failure the partial trajectory goes to `partial` if given.
fn integrate(
    prep: &Prepared,
    setup: &ExtremalSetup,
    partial_to: Option<(&str, &Output)>,
) -> Result<Trajectory, Failure> {
    match prep
        .system
        .integrate(&prep.x0, &setup.psi_a, &prep.multipliers, setup.steps)
    {
        Ok(t) => Ok(t),
        Err(Error::Integration { time, message, partial }) => {
            if let Some((header, output)) = partial_to {
                emit(output, &format!("{header}{}", partial.to_csv()))?;
            }
            Err(Failure {
                code: INTEGRATION_ERROR,
                message: format!("integration failed at t = {time}: {message}"),
            })
        }
        Err(e) => Err(e.into()),
    }
}

fn extremal(args: &ExtremalArgs) -> Outcome {
    let prep = prepare(&args.setup)?;
    let header = csv_header("extremal", args);
    let traj = integrate(&prep, &args.setup, Some((&header, &args.output)))?;
    emit(&args.output, &format!("{header}{}", traj.to_csv()))?;
    Ok(PASS)
}

fn switched(traj: &Trajectory) -> bool {
    let jump = 100.0 * traj.step();
    traj.u
        .windows(2)
        .any(|w| w[0].iter().zip(&w[1]).any(|(a, b)| (a - b).abs() > jump))
}

fn conserve(args: &ConserveArgs) -> Outcome {
    let prep = prepare(&args.setup)?;
    let form = prep.multipliers.form();
    let law = match (&args.group, &args.expr) {
        (Some(path), _) => build_law(&prep.problem, &load_group(path)?, form, args.config.as_deref())?,
        (None, Some(e)) => ConservationLaw::new(Expr::parse(e)?, form, "expression"),
        (None, None) => return Err(input_error("give --group or --expr")),
    };
    let traj = integrate(&prep, &args.setup, None)?;
    let tol = args
        .tolerance
        .unwrap_or_else(|| default_drift_tolerance(traj.step(), switched(&traj)));
    let report = check_law(&traj, &law, tol)?;
    emit(&args.output, &envelope("conserve", args, "report", &report))?;
    Ok(if report.pass { PASS } else { CHECK_FAILED })
}

fn dhdt(args: &DhdtArgs) -> Outcome {
    let prep = prepare(&args.setup)?;
    let traj = integrate(&prep, &args.setup, None)?;
    let report = check_hamiltonian_identity(
        &prep.problem,
        &traj,
        prep.system.hamiltonian(),
        args.tolerance,
        args.jump_threshold,
    )?;
    emit(&args.output, &envelope("dhdt", args, "report", &report))?;
    Ok(if report.pass { PASS } else { CHECK_FAILED })
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct ShootReport {
    psi_a: Vec<f64>,
    iterations: usize,
    residual: f64,
}

fn shoot_cmd(args: &ShootArgs) -> Outcome {
    let setup = &args.setup;
    let mut problem = load_problem(&setup.problem)?;
    if let Some(x0) = &setup.x0 {
        let beta = problem
            .beta()
            .map(<[f64]>::to_vec)
            .ok_or_else(|| input_error("shooting needs beta in the problem"))?;
        problem = problem.with_boundary(x0.clone(), beta)?;
    }
    let (form, m) = match setup.cost_multiplier {
        Some(psi0) => (
            ProblemForm::P1,
            Multipliers::p1(psi0, setup.lambda.clone(), problem.equality_count())?,
        ),
        None => (ProblemForm::P, Multipliers::p(setup.lambda.clone())?),
    };
    let h = build_hamiltonian(&problem, form)?;
    let law = control_law(&problem, &setup.law)?;
    let opts = ShootOptions {
        max_iterations: args.max_iterations,
        tolerance: args.tolerance,
        ..ShootOptions::default()
    };
    let result = shoot(&problem, &h, &m, law, setup.steps, &setup.psi_a, &opts)?;
    if let Some(path) = &args.csv {
        let text = format!("{}{}", csv_header("shoot", args), result.trajectory.to_csv());
        fs::write(path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
    }
    let report = ShootReport {
        psi_a: result.psi_a,
        iterations: result.iterations,
        residual: result.residual,
    };
    emit(&args.output, &envelope("shoot", args, "report", &report))?;
    Ok(PASS)
}

fn pareto(args: &ParetoArgs) -> Outcome {
    let p = load_problem(&args.problem)?;
    if args.grid == 0 {
        return Err(input_error("--grid must be at least 1"));
    }
    let grid = simplex_grid(p.cost_count(), args.grid - 1);
    let x0 = initial_state(&p, &args.x0)?;
    let law = control_law(&p, &args.law)?;
    let mut points = sweep(
        &p,
        &law,
        &x0,
        &CostatePolicy::Fixed(args.psi_a.clone()),
        &grid,
        args.steps,
        false,
    )?;
    if args.dedup {
        points = dedup(&points);
    }
    let kept = kept_flags(&points)?;
    let text = format!(
        "{}# extremal outcomes, dominance-filtered\n{}",
        csv_header("pareto", args),
        sweep_csv(&points, &kept)
    );
    emit(&args.output, &text)?;
    Ok(PASS)
}

fn export(args: &ExportArgs) -> Outcome {
    let cfg = AircraftConfig {
        c1: args.c1,
        c2: args.c2,
        u1_max: args.u1_max,
        u2_lo: args.u2_lo,
        u2_hi: args.u2_hi,
        horizon: args.horizon,
    };
    let mut files = aircraft::export_files(&cfg)?;
    let mut sampling = serde_json::to_string_pretty(&aircraft::sample_config(&cfg)).expect("json");
    sampling.push('\n');
    files.push(("sampling.json".into(), sampling));
    fs::create_dir_all(&args.dir).map_err(|e| input_error(format!("{}: {e}", args.dir.display())))?;
    for (name, text) in files {
        let path: PathBuf = args.dir.join(&name);
        let text = if text.ends_with('\n') { text } else { text + "\n" };
        fs::write(&path, text).map_err(|e| input_error(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
    }
    Ok(PASS)
}
