//! The solver ships with its own adversaries: independent oracles that
//! cross-check every layer — analytic derivatives against finite
//! differences, the closed-form parameter update against its stationarity
//! condition, the backward sweep against a closed-form Riccati solution,
//! the sweep relation off the optimal trajectory, and the whole horizon
//! solution against a brute-force transcription of the same problem.
//!
//! This is what `rhc-estim validate oracle` runs; here it is as a library.
//!
//! Run with: cargo run --example solver_diagnostics

use nalgebra::{DMatrix, DVector};
use rhc_estim::model::{AffineParamModel, RegressorMode};
use rhc_estim::ocp::Weights;
use rhc_estim::oracle::{
    direct_ocp, fd_check, field_node_cost, freeze_instance, instance_field, lq_instance,
    lq_riccati_oracle, lq_scalar_model, stationarity_check, sweep_consistency,
};
use rhc_estim::scenario::builtin;
use rhc_estim::sweep::{backward_sweep, terminal_conditions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let lorenz = AffineParamModel::lorenz();
    let weights = Weights::diagonal(&[0.5, 0.5, 0.5], &[0.5, 0.5])?;

    // 1. every analytic derivative vs central finite differences
    for mode in [RegressorMode::General, RegressorMode::Observer] {
        let report = fd_check(&lorenz, &weights, mode, 100, 42)?;
        println!("{report}");
        for (name, worst) in &report.breakdown {
            println!("    {name}: {worst:.2e}");
        }
    }

    // 2. the closed-form update satisfies its own optimality condition
    println!("{}", stationarity_check(&lorenz, 1000, 42)?);

    // 3. backward sweep vs the scalar LQ problem solved with pen and paper
    let (s0_exact, u0_exact) = lq_riccati_oracle(1.0, 1.0, 1.0, 1.0)?;
    let lq_model = lq_scalar_model();
    let inst = lq_instance(&lq_model, 1.0, 1.0, 1.0, 1.0, 1e-3)?;
    let field = instance_field(&inst, &DVector::zeros(1))?;
    let ctx = inst.ctx();
    let terminal = terminal_conditions(&field, 0.0, &DMatrix::zeros(1, 1));
    let sweep = backward_sweep(&ctx, &field, &terminal)?;
    let s0 = sweep.s0()[(0, 0)];
    println!(
        "riccati closed form: swept S(0) = {s0:.12} vs 2·tanh(1) = {s0_exact:.12} (u(0) = {u0_exact:.7})"
    );

    // 4/5. freeze the running benchmark mid-flight and interrogate it
    let scenario = builtin("lorenz-const").expect("bundled scenario");
    let snapshot = freeze_instance(
        &lorenz,
        &scenario.theta_true,
        scenario.estimator,
        scenario.x0,
        scenario.y0,
        10.0,
        None,
    )?;
    let inst = &snapshot.instance;
    let field = instance_field(inst, &snapshot.lambda0)?;
    let ctx = inst.ctx();
    let terminal = terminal_conditions(&field, snapshot.horizon_growth, &snapshot.stabilizer);
    let sweep = backward_sweep(&ctx, &field, &terminal)?;
    println!("{}", sweep_consistency(&ctx, &field, &sweep));

    let field_cost = field_node_cost(inst, &field);
    let direct = direct_ocp(inst, 5_000);
    println!(
        "direct transcription: gradient descent reached cost {:.8} in {} iterations; \
         the continuation field's quadrature cost is {:.8} (gap {:+.2e})",
        direct.cost,
        direct.iterations,
        field_cost,
        direct.cost - field_cost
    );
    Ok(())
}
