//! Command-line front end: run scenarios to artifact directories, execute
//! the correctness oracles, and list the built-in scenario library.
//!
//! Exit codes: 0 on success, 1 when a run or oracle check fails, 2 on usage
//! errors (including a scenario reference that names no built-in and no
//! readable file).

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};

use rhc_estim::error::Error;
use rhc_estim::io::{oracle_report_csv, write_run_artifacts};
use rhc_estim::model::{AffineParamModel, RegressorMode};
use rhc_estim::oracle::{
    direct_ocp, fd_check, field_node_cost, freeze_instance, instance_field, lq_instance,
    lq_riccati_oracle, lq_scalar_model, stationarity_check, sweep_consistency, OracleReport,
};
use rhc_estim::scenario::{builtin, parse_scenario, ModelRegistry, Scenario, BUILTIN_NAMES};
use rhc_estim::sweep::{backward_sweep, terminal_conditions};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "rhc-estim",
    version,
    about = "Online parameter estimation for nonlinear systems via receding-horizon control",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSV, plot script, and manifest to a directory
    Run {
        /// Built-in scenario name (see `scenario list`) or path to a TOML file
        #[arg(long)]
        scenario: String,
        /// Output directory [default: $RHC_ESTIM_OUT or ./out]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the scenario seed (reseeds drive noise too)
        #[arg(long)]
        seed: Option<u64>,
        /// Override the regressor coupling mode
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Override the run length in seconds
        #[arg(long)]
        t_end: Option<f64>,
    },
    /// Run independent correctness oracles against the solver
    Validate {
        #[command(subcommand)]
        check: ValidateCmd,
    },
    /// Inspect the scenario library
    Scenario {
        #[command(subcommand)]
        action: ScenarioCmd,
    },
}

#[derive(Subcommand)]
enum ValidateCmd {
    /// Analytic derivatives vs central finite differences, plus the
    /// closed-form update's stationarity residual
    Gradients {
        /// Random states per check
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Backward sweep vs the closed-form scalar Riccati solution
    Lq,
    /// Off-trajectory consistency of the sweep relation on a frozen
    /// benchmark instance
    Sweep,
    /// The full battery: gradients, stationarity, Riccati, sweep
    /// consistency, and direct-transcription cost cross-check
    Oracle {
        /// Random states per derivative check
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
}

#[derive(Subcommand)]
enum ScenarioCmd {
    /// List built-in scenarios
    List,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    General,
    Observer,
}

impl From<ModeArg> for RegressorMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::General => RegressorMode::General,
            ModeArg::Observer => RegressorMode::Observer,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenario,
            out,
            seed,
            mode,
            t_end,
        } => cmd_run(&scenario, out, seed, mode, t_end),
        Command::Validate { check } => cmd_validate(check),
        Command::Scenario {
            action: ScenarioCmd::List,
        } => cmd_list(),
    }
}

/// Output directory resolution: flag beats the RHC_ESTIM_OUT environment
/// variable beats `./out`.
fn resolve_out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("RHC_ESTIM_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn cmd_run(
    reference: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    mode: Option<ModeArg>,
    t_end: Option<f64>,
) -> ExitCode {
    let out_dir = resolve_out_dir(out);
    let mut scenario = match parse_scenario(reference) {
        Ok(s) => s,
        Err(e @ Error::Io { .. }) => {
            // pointing at a nonexistent file is an invocation mistake
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    if let Some(s) = seed {
        scenario = scenario.with_seed(s);
    }
    if let Some(m) = mode {
        scenario.estimator.mode = m.into();
    }
    if let Some(t) = t_end {
        scenario.t_end = t;
    }

    let registry = ModelRegistry::with_builtins();
    let started = Instant::now();
    let outcome = match scenario.run(&registry) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let elapsed = started.elapsed();

    let mut code = ExitCode::SUCCESS;
    if let Some(failure) = &outcome.failure {
        eprintln!("error: run aborted at t = {:.4}: {failure}", last_t(&outcome.table));
        code = ExitCode::from(EXIT_FAILURE);
    }
    if outcome.table.is_empty() {
        eprintln!("error: no samples recorded; nothing to write");
        return ExitCode::from(EXIT_FAILURE);
    }
    match write_run_artifacts(&scenario, &outcome.table, &out_dir) {
        Ok(artifacts) => {
            let last = outcome.table.rows.last().expect("table is non-empty");
            println!(
                "{}: {} samples over t = [0, {:.2}] in {:.2}s",
                scenario.name,
                outcome.table.len(),
                last.t,
                elapsed.as_secs_f64()
            );
            println!(
                "  final estimate {:?}  (true {:?})",
                last.theta_est.iter().map(|v| round6(*v)).collect::<Vec<_>>(),
                last.theta_true.iter().map(|v| round6(*v)).collect::<Vec<_>>()
            );
            if outcome.failure.is_some() {
                println!("  partial trajectory retained for diagnosis:");
            }
            println!("  wrote {}", artifacts.csv.display());
            println!("  wrote {}", artifacts.plot_script.display());
            println!("  wrote {}", artifacts.manifest.display());
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    code
}

fn last_t(table: &rhc_estim::estimator::TrajectoryTable) -> f64 {
    table.rows.last().map_or(0.0, |r| r.t)
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn cmd_validate(check: ValidateCmd) -> ExitCode {
    let started = Instant::now();
    let reports = match run_checks(&check) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    for report in &reports {
        println!("{report}");
        for (name, value) in &report.breakdown {
            println!("    {name}: {value:.3e}");
        }
    }
    println!("({:.2}s)", started.elapsed().as_secs_f64());

    // machine-readable companion, next to the human-readable text
    let out_dir = resolve_out_dir(None);
    let csv_path = out_dir.join("validation_report.csv");
    if std::fs::create_dir_all(&out_dir).is_ok()
        && std::fs::write(&csv_path, oracle_report_csv(&reports)).is_ok()
    {
        println!("wrote {}", csv_path.display());
    }

    if reports.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn run_checks(check: &ValidateCmd) -> Result<Vec<OracleReport>, Error> {
    let model = AffineParamModel::lorenz();
    let weights = rhc_estim::ocp::Weights::diagonal(&[0.5, 0.5, 0.5], &[0.5, 0.5])?;
    match check {
        ValidateCmd::Gradients { samples } => Ok(vec![
            fd_check(&model, &weights, RegressorMode::General, *samples, 42)?,
            stationarity_check(&model, 10 * samples, 42)?,
        ]),
        ValidateCmd::Lq => Ok(vec![lq_check()?]),
        ValidateCmd::Sweep => Ok(vec![frozen_sweep_check()?]),
        ValidateCmd::Oracle { samples } => {
            let mut general = fd_check(&model, &weights, RegressorMode::General, *samples, 42)?;
            general.name.push_str("-general");
            let mut observer = fd_check(&model, &weights, RegressorMode::Observer, *samples, 43)?;
            observer.name.push_str("-observer");
            Ok(vec![
                general,
                observer,
                stationarity_check(&model, 10 * samples, 42)?,
                lq_check()?,
                frozen_sweep_check()?,
                direct_transcription_check()?,
            ])
        }
    }
}

/// Numeric `S(0)` from the backward sweep on the scalar LQ instance vs the
/// closed-form Riccati solution `2·tanh(1)`.
fn lq_check() -> Result<OracleReport, Error> {
    let (q, r, horizon, y0) = (1.0, 1.0, 1.0, 1.0);
    let (s0_exact, u0_exact) = lq_riccati_oracle(q, r, horizon, y0)?;
    let model = lq_scalar_model();
    let inst = lq_instance(&model, q, r, horizon, y0, 1e-3)?;
    let field = instance_field(&inst, &DVector::zeros(1))?;
    let ctx = inst.ctx();
    let terminal = terminal_conditions(&field, 0.0, &DMatrix::zeros(1, 1));
    let sweep = backward_sweep(&ctx, &field, &terminal)?;
    let s0 = sweep.s0()[(0, 0)];
    println!(
        "scalar Riccati: swept S(0) = {s0:.10}, closed form = {s0_exact:.10} \
         (optimal input u(0) = {u0_exact:.7})"
    );
    Ok(OracleReport::new(
        "riccati-closed-form",
        field.grid().segments() + 1,
        (s0 - s0_exact).abs(),
        1e-6,
    ))
}

type FrozenBenchmark = (
    AffineParamModel,
    rhc_estim::model::ParameterProfile,
    rhc_estim::estimator::EstimatorConfig,
    DVector<f64>,
    DVector<f64>,
);

/// Freeze the constant-parameter benchmark mid-run and check the sweep
/// relation off the optimal trajectory.
fn frozen_benchmark() -> Result<FrozenBenchmark, Error> {
    let scenario = builtin("lorenz-const").expect("built-in exists");
    let registry = ModelRegistry::with_builtins();
    let model = registry.build(&scenario.system)?;
    Ok((
        model,
        scenario.theta_true.clone(),
        scenario.estimator.clone(),
        scenario.x0.clone(),
        scenario.y0.clone(),
    ))
}

fn frozen_sweep_check() -> Result<OracleReport, Error> {
    let (model, profile, config, x0, y0) = frozen_benchmark()?;
    let snapshot = freeze_instance(&model, &profile, config, x0, y0, 10.0, None)?;
    let inst = &snapshot.instance;
    let field = instance_field(inst, &snapshot.lambda0)?;
    let ctx = inst.ctx();
    let terminal = terminal_conditions(&field, snapshot.horizon_growth, &snapshot.stabilizer);
    let sweep = backward_sweep(&ctx, &field, &terminal)?;
    Ok(sweep_consistency(&ctx, &field, &sweep))
}

/// Cost of the continuation solver's horizon field vs an independent
/// gradient-descent transcription of the same frozen problem.
fn direct_transcription_check() -> Result<OracleReport, Error> {
    let (model, profile, config, x0, y0) = frozen_benchmark()?;
    let snapshot = freeze_instance(&model, &profile, config, x0, y0, 10.0, None)?;
    let inst = &snapshot.instance;
    let field = instance_field(inst, &snapshot.lambda0)?;
    let field_cost = field_node_cost(inst, &field);
    let solution = direct_ocp(inst, 5_000);
    if !solution.converged {
        eprintln!(
            "note: direct transcription stopped at gradient norm {:.3e} after {} iterations",
            solution.grad_norm, solution.iterations
        );
    }
    println!(
        "direct transcription: continuation cost = {:.8}, direct cost = {:.8} \
         ({} iterations)",
        field_cost, solution.cost, solution.iterations
    );
    let scale = field_cost.abs().max(1e-12);
    Ok(OracleReport::new(
        "direct-transcription-cost",
        inst.grid.segments(),
        (solution.cost - field_cost).abs() / scale,
        1e-2,
    ))
}

fn cmd_list() -> ExitCode {
    println!("built-in scenarios:");
    for name in BUILTIN_NAMES {
        let s: Scenario = builtin(name).expect("built-in exists");
        let noise = if s.noise.is_some() {
            "noisy drive"
        } else {
            "clean drive"
        };
        let profile = match &s.theta_true {
            rhc_estim::model::ParameterProfile::Constant(_) => "constant parameters",
            rhc_estim::model::ParameterProfile::DecayingSine { .. } => {
                "time-varying first parameter"
            }
            rhc_estim::model::ParameterProfile::Table(_) => "tabulated parameters",
        };
        println!(
            "  {name:<20} {} system, {profile}, {noise}, t_end = {}s",
            s.system, s.t_end
        );
    }
    println!("\nrun one with: rhc-estim run --scenario <name> --out <dir>");
    println!("or pass a path to a scenario TOML file (see README for the format)");
    ExitCode::SUCCESS
}
