//! Bring your own system: estimate the damping coefficient of a Van der Pol
//! oscillator. Any dynamics of the form
//!
//!     ẋ = A·x + f(x) + D(x)·θ
//!
//! plugs into the estimator — here A is the harmonic part, f ≡ 0, and the
//! single unknown θ = μ multiplies the regressor column (1 − x₁²)·x₂.
//! Analytic derivatives are optional: `with_fd_derivatives` fills in the
//! Jacobians by finite differences, which is plenty for prototyping.
//!
//! Run with: cargo run --example custom_system

use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rhc_estim::estimator::EstimatorConfig;
use rhc_estim::model::{AffineParamModel, ParameterProfile, RegressorMode};
use rhc_estim::ocp::{HorizonSchedule, PriorSpec, Weights};
use rhc_estim::scenario::{ModelRegistry, Scenario};

fn van_der_pol() -> AffineParamModel {
    AffineParamModel::with_fd_derivatives(
        dmatrix![0.0, 1.0; -1.0, 0.0],
        |_x| DVector::zeros(2),
        |x| dmatrix![0.0; (1.0 - x[0] * x[0]) * x[1]],
    )
    .expect("well-formed model")
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // register the new system next to the bundled ones
    let mut registry = ModelRegistry::with_builtins();
    registry.register("van-der-pol", van_der_pol);

    let scenario = Scenario {
        name: "vdp-damping".into(),
        system: "van-der-pol".into(),
        x0: dvector![2.0, 0.0],
        y0: dvector![0.5, -0.5],
        theta_true: ParameterProfile::Constant(dvector![2.0]),
        noise: None,
        estimator: EstimatorConfig {
            weights: Weights::diagonal(&[0.5, 0.5], &[0.5])?,
            schedule: HorizonSchedule::new(0.5, 0.1)?,
            stabilizer: DMatrix::identity(2, 2) * 100.0,
            dt: 0.01,
            dtau_target: 0.005,
            mode: RegressorMode::Observer,
            prior: PriorSpec::tracking(DVector::zeros(1)),
        },
        t_end: 30.0,
        seed: 42,
    };

    println!("estimating the Van der Pol damping coefficient (true μ = 2) ...\n");
    let table = scenario.run(&registry)?.into_result()?;

    println!("{:>6}  {:>10}  {:>10}", "t", "μ̂", "|μ̂ − μ|");
    for &t in &[0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 30.0] {
        let row = table
            .rows
            .iter()
            .min_by(|a, b| {
                (a.t - t).abs().partial_cmp(&(b.t - t).abs()).expect("finite times")
            })
            .expect("non-empty run");
        println!(
            "{:>6.1}  {:>10.6}  {:>10.2e}",
            row.t,
            row.theta_est[0],
            (row.theta_est[0] - 2.0).abs()
        );
    }

    let last = table.rows.last().expect("non-empty run");
    println!("\nfinal estimate: μ̂ = {:.8}", last.theta_est[0]);
    println!(
        "synchronization error ‖e‖ = {:.2e}, continuation residual ‖F‖ = {:.2e}",
        last.e_norm, last.f_norm
    );
    // Under observer coupling the error obeys ė = A·e + D(x)·(θ̂ − θ), and
    // A here is a pure rotation: once the estimate converges the initial
    // state offset keeps circulating undamped. The estimate is driven by
    // the horizon's optimality system, not by the error shrinking to zero.
    println!("(the residual offset rotates undamped through ė = A·e; it no longer carries parameter information)");
    Ok(())
}
