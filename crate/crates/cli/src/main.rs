//! Command-line front end: Riccati solves, Taylor expansions, residual checks,
//! Monte Carlo runs and Taylor plot data.

mod output;
mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use taylor_sdp::expansion::{dp_residual, expand_finite, expand_infinite_with, ExpandOptions};
use taylor_sdp::model::{parse_problem, validate, NonlinearModel, Problem, TimeVaryingModel};
use taylor_sdp::riccati::closed_loop_eigenvalues;
use taylor_sdp::{
    compare_policies, solve_dare, solve_sdare, solve_sdrde, Feedback, MultiPoly, SimConfig, SimResult,
};

use output::{emit, Format, Output};
use plot::Function;

#[derive(Parser)]
#[command(name = "taylor-sdp", version, about = "Riccati solvers and Taylor-series dynamic programming for bilinear-noise control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputArgs {
    /// Output format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SolverArgs {
    /// Relative convergence tolerance.
    #[arg(long, default_value = "1e-10")]
    tol: f64,
    /// Iteration cap of the outer SDARE loop.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
}

#[derive(Args)]
struct SimArgs {
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    x0: Vec<f64>,
    /// Steps per path [default: the model horizon, or 1000 for stationary problems].
    #[arg(long)]
    horizon: Option<usize>,
    /// Number of sample paths.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Paths whose accumulated cost passes this value count as diverged.
    #[arg(long, default_value_t = taylor_sdp::simulate::DEFAULT_COST_CAP)]
    cost_cap: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standard LQR assumptions on the problem data.
    Validate {
        problem: PathBuf,
        #[arg(long, default_value = "1e-10")]
        tol: f64,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Deterministic DARE with the noise terms dropped.
    Dare {
        problem: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Stochastic DARE by iterated DARE solves.
    Sdare {
        problem: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Backward stochastic Riccati recursion over a finite horizon.
    Sdrde {
        problem: PathBuf,
        /// Horizon for a stationary problem file (zero terminal cost).
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Taylor expansion of the stationary optimal cost and feedback.
    Expand {
        problem: PathBuf,
        /// Degree of the feedback expansion; the cost is expanded one degree higher.
        #[arg(long, default_value_t = 3)]
        degree: u32,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Time-varying Taylor expansion over a finite horizon.
    ExpandFinite {
        problem: PathBuf,
        #[arg(long, default_value_t = 3)]
        degree: u32,
        /// Horizon for a stationary problem file (zero terminal cost).
        #[arg(long)]
        horizon: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Dynamic-programming residuals of an expansion on spheres of shrinking radius.
    Residual {
        problem: PathBuf,
        #[arg(long, default_value_t = 3)]
        degree: u32,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025")]
        radii: Vec<f64>,
        /// Sampled states per radius.
        #[arg(long, default_value_t = 64)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo cost of the expanded feedback.
    Simulate {
        problem: PathBuf,
        /// Degree of the feedback polynomial.
        #[arg(long, default_value_t = 1)]
        degree: u32,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Monte Carlo costs of several truncation degrees on shared noise paths.
    Compare {
        problem: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        degrees: Vec<u32>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Plot data for Taylor polynomials of an elementary function about 0.
    TaylorPlot {
        #[arg(long, value_enum, default_value = "sin")]
        function: Function,
        #[arg(long, value_delimiter = ',', default_value = "1,3,5")]
        degrees: Vec<u32>,
        /// Interval a:b; ends may be multiples of pi such as -pi or pi/2.
        #[arg(long, default_value = "-pi:pi", allow_hyphen_values = true)]
        range: String,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Debug)]
pub struct CliError {
    kind: String,
    message: String,
    code: u8,
}

impl CliError {
    fn input(kind: &str, message: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            message: message.into(),
            code: 2,
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::input("IoError", message)
    }
}

impl From<taylor_sdp::Error> for CliError {
    fn from(e: taylor_sdp::Error) -> Self {
        Self {
            kind: e.kind().into(),
            message: e.to_string(),
            code: if e.is_solver_failure() { 1 } else { 2 },
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(&CliError::input("UsageError", e.to_string().trim_end())),
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!("{}", json!({"error": e.kind, "message": e.message}));
    ExitCode::from(e.code)
}

fn run(command: Command) -> Result<(), CliError> {
    let (out, io) = match command {
        Command::Validate { problem, tol, output } => {
            let problem = load(&problem)?;
            let report = validate(problem.base(), tol);
            let text = Output::Document(to_value(&report)).render(output.format)?;
            emit(&text, output.out.as_deref())?;
            if !report.is_ok() {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| c.status == taylor_sdp::model::CheckStatus::Fail)
                    .map(|c| c.name)
                    .collect();
                return Err(CliError::input("ValidationFailed", format!("failed checks: {}", failed.join(", "))));
            }
            return Ok(());
        }
        Command::Dare { problem, solver, output } => {
            let base = load(&problem)?.base().without_noise();
            let s = solve_dare(&base, solver.tol, solver.max_iter)?;
            let mut v = to_value(&s);
            v["closed_loop_eigenvalues"] = eigen_json(closed_loop_eigenvalues(&base, &s.k).iter().map(|z| (z.re, z.im)));
            (Output::Document(v), output)
        }
        Command::Sdare { problem, solver, output } => {
            let problem = load(&problem)?;
            let base = problem.base();
            let s = solve_sdare(base, solver.tol, solver.max_iter)?;
            let mut v = to_value(&s);
            v["closed_loop_eigenvalues"] = eigen_json(s.closed_loop_eigenvalues(base).iter().map(|z| (z.re, z.im)));
            (Output::Document(v), output)
        }
        Command::Sdrde { problem, horizon, output } => {
            let tv = finite_model(load(&problem)?, horizon)?;
            let s = solve_sdrde(&tv, &tv.terminal_kernel())?;
            (Output::Document(to_value(&s)), output)
        }
        Command::Expand {
            problem,
            degree,
            solver,
            output,
        } => {
            let model = stationary_model(load(&problem)?, "expand")?;
            let e = expand_infinite_with(&model, degree, &expand_options(&solver))?;
            (Output::Document(e.to_json()), output)
        }
        Command::ExpandFinite {
            problem,
            degree,
            horizon,
            output,
        } => {
            let tv = finite_model(load(&problem)?, horizon)?;
            let e = expand_finite(&tv, degree)?;
            (Output::Document(e.to_json()), output)
        }
        Command::Residual {
            problem,
            degree,
            radii,
            samples,
            seed,
            solver,
            output,
        } => {
            if radii.is_empty() || radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
                return Err(CliError::input("InvalidArgument", "--radii must be positive numbers"));
            }
            if samples == 0 {
                return Err(CliError::input("InvalidArgument", "--samples must be at least 1"));
            }
            let model = stationary_model(load(&problem)?, "residual")?;
            let e = expand_infinite_with(&model, degree, &expand_options(&solver))?;
            let report = dp_residual(&e, &model, &radii, samples, seed);
            let mut v = to_value(&report);
            v["degree"] = json!(degree);
            v["detection_slope"] = json!(report.detection_slope());
            (Output::Document(v), output)
        }
        Command::Simulate {
            problem,
            degree,
            sim,
            solver,
            output,
        } => {
            let problem = load(&problem)?;
            let results = run_policies(&problem, &[degree], &sim, &solver)?;
            (sim_table(&results, true), output)
        }
        Command::Compare {
            problem,
            degrees,
            sim,
            solver,
            output,
        } => {
            if degrees.is_empty() {
                return Err(CliError::input("InvalidArgument", "--degrees needs at least one degree"));
            }
            let problem = load(&problem)?;
            let results = run_policies(&problem, &degrees, &sim, &solver)?;
            (sim_table(&results, false), output)
        }
        Command::TaylorPlot {
            function,
            degrees,
            range,
            points,
            output,
        } => (taylor_plot(function, &degrees, &range, points)?, output),
    };
    let text = out.render(io.format)?;
    emit(&text, io.out.as_deref())
}

fn load(path: &Path) -> Result<Problem, CliError> {
    Ok(parse_problem(path)?)
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("results serialize")
}

fn eigen_json(eigs: impl IntoIterator<Item = (f64, f64)>) -> Value {
    eigs.into_iter().map(|(re, im)| json!({"re": re, "im": im})).collect()
}

fn expand_options(solver: &SolverArgs) -> ExpandOptions {
    ExpandOptions {
        tol: solver.tol,
        max_iter: solver.max_iter,
        ..ExpandOptions::default()
    }
}

fn stationary_model(problem: Problem, command: &str) -> Result<NonlinearModel, CliError> {
    match problem {
        Problem::Infinite(m) => Ok(m),
        Problem::Finite(_) => Err(CliError::input(
            "InvalidArgument",
            format!("{command} needs a stationary problem; use expand-finite or sdrde for finite-horizon files"),
        )),
    }
}

/// A finite-horizon problem file as is, or a stationary one over `--horizon`
/// steps with zero terminal cost.
fn finite_model(problem: Problem, horizon: Option<usize>) -> Result<TimeVaryingModel, CliError> {
    match (problem, horizon) {
        (Problem::Finite(tv), None) => Ok(tv),
        (Problem::Finite(tv), Some(h)) if h == tv.horizon => Ok(tv),
        (Problem::Finite(tv), Some(h)) => Err(CliError::input(
            "InvalidArgument",
            format!("--horizon {h} disagrees with the problem file's horizon {}", tv.horizon),
        )),
        (Problem::Infinite(m), Some(h)) => {
            let vars = m.vars();
            Ok(TimeVaryingModel::constant(m, h, MultiPoly::zero(vars))?)
        }
        (Problem::Infinite(_), None) => Err(CliError::input(
            "InvalidArgument",
            "a stationary problem file needs --horizon here",
        )),
    }
}

fn run_policies(problem: &Problem, degrees: &[u32], sim: &SimArgs, solver: &SolverArgs) -> Result<Vec<SimResult>, CliError> {
    let top = *degrees.iter().max().expect("at least one degree");
    let config = |feedback: Feedback, horizon: usize| {
        let mut c = SimConfig::new(sim.x0.clone(), horizon, sim.samples, sim.seed, feedback);
        c.cost_cap = sim.cost_cap;
        degrees.iter().map(|&d| c.clone().truncated(d)).collect::<Vec<_>>()
    };
    let results = match problem {
        Problem::Infinite(model) => {
            let e = expand_infinite_with(model, top, &expand_options(solver))?;
            compare_policies(&config(Feedback::Stationary(e), sim.horizon.unwrap_or(1000)), model)?
        }
        Problem::Finite(tv) => {
            let e = expand_finite(tv, top)?;
            compare_policies(&config(Feedback::TimeVarying(e), sim.horizon.unwrap_or(tv.horizon)), tv)?
        }
    };
    Ok(results)
}

fn sim_table(results: &[SimResult], single: bool) -> Output {
    let columns = ["degree", "mean_cost", "std_error", "diverged_fraction", "samples"];
    let rows = results
        .iter()
        .map(|r| {
            vec![
                json!(r.feedback_degree),
                json!(r.mean_cost),
                json!(r.std_error),
                json!(r.diverged_fraction),
                json!(r.samples),
            ]
        })
        .collect();
    Output::Table {
        columns: columns.iter().map(|c| c.to_string()).collect(),
        rows,
        single,
    }
}

fn taylor_plot(function: Function, degrees: &[u32], range: &str, points: usize) -> Result<Output, CliError> {
    let (a, b) = plot::parse_range(range).map_err(|m| CliError::input("InvalidArgument", m))?;
    if points == 0 {
        return Err(CliError::input("InvalidArgument", "--points must be at least 1"));
    }
    let mut columns = vec!["x".to_string(), format!("{}(x)", function.name())];
    columns.extend(degrees.iter().map(|d| format!("degree_{d}")));
    let rows = plot::grid(a, b, points)
        .into_iter()
        .map(|x| {
            let mut row = vec![json!(x), json!(function.eval(x))];
            row.extend(degrees.iter().map(|&d| json!(function.taylor(d, x))));
            row
        })
        .collect();
    Ok(Output::Table {
        columns,
        rows,
        single: false,
    })
}
