//! Independent cross-checks of the solver pipeline.
//!
//! Four oracles, each attacking a different layer with a method that shares
//! no code with the thing it checks:
//!
//! - [`fd_check`]: analytic derivative callbacks vs central finite
//!   differences of the raw Hamiltonian / dynamics.
//! - [`lq_riccati_oracle`]: closed-form `tanh` solution of the scalar LQ
//!   Riccati equation, the exactly solvable special case of the sweep.
//! - [`direct_ocp`]: brute-force single-shooting gradient descent on a
//!   frozen horizon problem, cross-validating the continuation solution's
//!   cost without touching costates or sweeps.
//! - [`sweep_consistency`]: forward integration of the linearized
//!   optimality system, verifying the swept affine relation
//!   `δλ = S·δy + c` at every node.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};
use crate::estimator::{Estimator, EstimatorConfig};
use crate::model::{AffineParamModel, DriveSimulator, ParameterProfile, RegressorMode};
use crate::numerics::{CostateVec, DenseMat, ParamVec, StateVec, TauGrid};
use crate::ocp::{stage_cost, OcpContext, Weights};
use crate::sweep::{forward_horizon, HorizonField, ReferencePredictor, SweepResult};

/// Outcome of one oracle check. `passed` is `measured ≤ tolerance` by
/// construction.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub name: String,
    /// Number of random samples / instances the measurement covered.
    pub samples: usize,
    /// The measured error in the check's own metric (relative unless the
    /// check says otherwise).
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Per-family breakdown `(label, measured)` where the check aggregates
    /// several quantities.
    pub breakdown: Vec<(String, f64)>,
}

impl OracleReport {
    pub fn new(name: impl Into<String>, samples: usize, measured: f64, tolerance: f64) -> Self {
        OracleReport {
            name: name.into(),
            samples,
            measured,
            tolerance,
            passed: measured <= tolerance,
            breakdown: Vec::new(),
        }
    }

    fn with_breakdown(mut self, breakdown: Vec<(String, f64)>) -> Self {
        self.breakdown = breakdown;
        self
    }
}

impl std::fmt::Display for OracleReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} (measured {:.3e}, tolerance {:.3e}, {} samples)",
            self.name,
            if self.passed { "pass" } else { "FAIL" },
            self.measured,
            self.tolerance,
            self.samples
        )
    }
}

/// Uniform draw in `[lo, hi)` from the 53 high bits of one `u64`.
fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let unit = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
    lo + unit * (hi - lo)
}

/// `‖a − b‖∞ / max(‖a‖∞, ‖b‖∞, 1)` — relative for large quantities,
/// absolute near zero.
fn rel_err_mat(a: &DenseMat, b: &DenseMat) -> f64 {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() / scale
}

fn rel_err_vec(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(1.0);
    (a - b).amax() / scale
}

/// Compare the model's analytic derivative callbacks against central finite
/// differences of the scalar Hamiltonian and the raw dynamics, at
/// `sample_count` random states.
///
/// Checked quantities: the dynamics Jacobian, the Hamiltonian state
/// gradient, the mixed parameter/state second derivative, and the state
/// Hessian contraction. First derivatives are differenced at step
/// `1e-3·scale`, second derivatives at `1e-2·scale`: the test systems have
/// polynomial right-hand sides of low degree, so truncation is negligible
/// and the coarser steps keep the roundoff floor (ε·|H|/h²) far below the
/// tolerance.
pub fn fd_check(
    model: &AffineParamModel,
    weights: &Weights,
    mode: RegressorMode,
    sample_count: usize,
    seed: u64,
) -> Result<OracleReport> {
    if sample_count == 0 {
        return Err(Error::InvalidConfig(
            "fd_check needs at least one sample".into(),
        ));
    }
    let n = model.state_dim();
    let p = model.param_dim();
    if weights.state_dim() != n || weights.param_dim() != p {
        return Err(Error::InvalidConfig(format!(
            "weights are {}x{}, model is {}x{}",
            weights.state_dim(),
            weights.param_dim(),
            n,
            p
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_jac: f64 = 0.0;
    let mut max_grad: f64 = 0.0;
    let mut max_cross: f64 = 0.0;
    let mut max_hess: f64 = 0.0;

    for _ in 0..sample_count {
        let y = DVector::from_fn(n, |_, _| uniform(&mut rng, -10.0, 10.0));
        let x = DVector::from_fn(n, |_, _| uniform(&mut rng, -10.0, 10.0));
        let lambda = DVector::from_fn(n, |_, _| uniform(&mut rng, -2.0, 2.0));
        let prior = DVector::from_fn(p, |_, _| uniform(&mut rng, -5.0, 5.0));
        let dev = DVector::from_fn(p, |_, _| uniform(&mut rng, -3.0, 3.0));
        let ctx = OcpContext {
            model,
            weights,
            prior: &prior,
            mode,
        };
        let theta = ctx.applied_theta(&dev);

        let h1 = 1e-3 * y.amax().max(1.0);
        let h2 = 1e-2 * y.amax().max(1.0);

        // dynamics Jacobian vs differenced right-hand side
        let jac = model.dynamics_jacobian(&y, &x, &theta, mode);
        let jac_fd = fd_jac_step(|v| model.response_rhs(v, &x, &theta, mode), &y, n, h1);
        max_jac = max_jac.max(rel_err_mat(&jac, &jac_fd));

        // Hamiltonian state gradient vs differenced Hamiltonian
        let grad = ctx.hamiltonian_state_grad(&y, &lambda, &dev, &x);
        let grad_fd = fd_grad_step(|v| ctx.hamiltonian(v, &lambda, &dev, &x), &y, h1);
        max_grad = max_grad.max(rel_err_vec(&grad, &grad_fd));

        // mixed ∂²H/∂θ̄∂y vs a mixed central difference of H
        let cross = ctx.theta_state_cross(&y, &lambda);
        let mut cross_fd = DMatrix::zeros(p, n);
        for j in 0..p {
            for k in 0..n {
                cross_fd[(j, k)] = mixed_second(
                    |dv, yv| ctx.hamiltonian(yv, &lambda, dv, &x),
                    &dev,
                    &y,
                    j,
                    k,
                    h2,
                );
            }
        }
        max_cross = max_cross.max(rel_err_mat(&cross, &cross_fd));

        // state Hessian of H at fixed deviation: 2Q (+ curvature of the
        // dynamics contracted with λ in general mode)
        let mut hess = weights.q() * 2.0;
        if mode == RegressorMode::General {
            hess += model.eval_hess_contract(&y, &lambda, &theta);
        }
        let mut hess_fd = DMatrix::zeros(n, n);
        for j in 0..n {
            for k in 0..n {
                hess_fd[(j, k)] =
                    second_in_state(|v| ctx.hamiltonian(v, &lambda, &dev, &x), &y, j, k, h2);
            }
        }
        max_hess = max_hess.max(rel_err_mat(&hess, &hess_fd));
    }

    let measured = max_jac.max(max_grad).max(max_cross).max(max_hess);
    Ok(
        OracleReport::new("derivative-consistency", sample_count, measured, 1e-6).with_breakdown(
            vec![
                ("dynamics-jacobian".into(), max_jac),
                ("hamiltonian-gradient".into(), max_grad),
                ("parameter-state-cross".into(), max_cross),
                ("state-hessian".into(), max_hess),
            ],
        ),
    )
}

/// First-order optimality of the closed-form parameter update: at the
/// analytic minimizer the deviation gradient `2R·Θ̄* + Dᵀλ` vanishes to
/// solver roundoff, for random states, costates, priors, AND deviation
/// weights R (re-drawn SPD each sample), in both coupling modes.
pub fn stationarity_check(
    model: &AffineParamModel,
    sample_count: usize,
    seed: u64,
) -> Result<OracleReport> {
    if sample_count == 0 {
        return Err(Error::InvalidConfig(
            "stationarity_check needs at least one sample".into(),
        ));
    }
    let n = model.state_dim();
    let p = model.param_dim();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..sample_count {
        let y = DVector::from_fn(n, |_, _| uniform(&mut rng, -10.0, 10.0));
        let x = DVector::from_fn(n, |_, _| uniform(&mut rng, -10.0, 10.0));
        let lambda = DVector::from_fn(n, |_, _| uniform(&mut rng, -2.0, 2.0));
        let prior = DVector::from_fn(p, |_, _| uniform(&mut rng, -5.0, 5.0));
        // random SPD deviation weight: MᵀM keeps it symmetric nonnegative,
        // the ridge keeps the smallest eigenvalue off zero
        let m = DMatrix::from_fn(p, p, |_, _| uniform(&mut rng, -1.0, 1.0));
        let r = m.transpose() * &m + DMatrix::identity(p, p) * 0.1;
        let weights = Weights::new(DMatrix::identity(n, n), r)?;
        let two_r = weights.r() * 2.0;
        for mode in [RegressorMode::General, RegressorMode::Observer] {
            let ctx = OcpContext {
                model,
                weights: &weights,
                prior: &prior,
                mode,
            };
            let dev = ctx.stationary_theta_dev(&y, &x, &lambda);
            let point = model.regressor_point(&y, &x, mode);
            let residual = &two_r * &dev + model.eval_d(point).transpose() * &lambda;
            worst = worst.max(residual.amax());
        }
    }
    Ok(OracleReport::new(
        "update-stationarity",
        sample_count,
        worst,
        1e-12,
    ))
}

/// Central second difference `∂²f/∂y_j∂y_k` of a scalar map of one vector:
/// three-point formula on the diagonal, four-point mixed off it.
fn second_in_state(
    mut f: impl FnMut(&DVector<f64>) -> f64,
    y: &DVector<f64>,
    j: usize,
    k: usize,
    h: f64,
) -> f64 {
    let mut probe = y.clone();
    if j == k {
        let mid = f(&probe);
        probe[j] = y[j] + h;
        let hi = f(&probe);
        probe[j] = y[j] - h;
        let lo = f(&probe);
        (hi - 2.0 * mid + lo) / (h * h)
    } else {
        let mut eval = |dj: f64, dk: f64, probe: &mut DVector<f64>| {
            probe[j] = y[j] + dj;
            probe[k] = y[k] + dk;
            let v = f(probe);
            probe[j] = y[j];
            probe[k] = y[k];
            v
        };
        let pp = eval(h, h, &mut probe);
        let pm = eval(h, -h, &mut probe);
        let mp = eval(-h, h, &mut probe);
        let mm = eval(-h, -h, &mut probe);
        (pp - pm - mp + mm) / (4.0 * h * h)
    }
}

fn fd_jac_step(
    mut f: impl FnMut(&DVector<f64>) -> DVector<f64>,
    y: &DVector<f64>,
    out_dim: usize,
    h: f64,
) -> DenseMat {
    let mut jac = DMatrix::zeros(out_dim, y.len());
    let mut probe = y.clone();
    for j in 0..y.len() {
        probe[j] = y[j] + h;
        let hi = f(&probe);
        probe[j] = y[j] - h;
        let lo = f(&probe);
        probe[j] = y[j];
        jac.set_column(j, &((hi - lo) / (2.0 * h)));
    }
    jac
}

fn fd_grad_step(mut f: impl FnMut(&DVector<f64>) -> f64, y: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut grad = DVector::zeros(y.len());
    let mut probe = y.clone();
    for j in 0..y.len() {
        probe[j] = y[j] + h;
        let hi = f(&probe);
        probe[j] = y[j] - h;
        let lo = f(&probe);
        probe[j] = y[j];
        grad[j] = (hi - lo) / (2.0 * h);
    }
    grad
}

/// Four-point mixed central difference `∂²f/∂a_j∂b_k` at `(a, b)`.
fn mixed_second(
    mut f: impl FnMut(&DVector<f64>, &DVector<f64>) -> f64,
    a: &DVector<f64>,
    b: &DVector<f64>,
    j: usize,
    k: usize,
    h: f64,
) -> f64 {
    let mut ap = a.clone();
    let mut bp = b.clone();
    let mut eval = |da: f64, db: f64, ap: &mut DVector<f64>, bp: &mut DVector<f64>| {
        ap[j] = a[j] + da;
        bp[k] = b[k] + db;
        let v = f(ap, bp);
        ap[j] = a[j];
        bp[k] = b[k];
        v
    };
    let pp = eval(h, h, &mut ap, &mut bp);
    let pm = eval(h, -h, &mut ap, &mut bp);
    let mp = eval(-h, h, &mut ap, &mut bp);
    let mm = eval(-h, -h, &mut ap, &mut bp);
    (pp - pm - mp + mm) / (4.0 * h * h)
}

/// Closed-form solution of the scalar LQ sweep instance
/// (`ẏ = u`, cost `∫ q·y² + r·u²`, free endpoint at `T`):
///
/// ```text
/// S(τ) = 2√(qr) · tanh(√(q/r) · (T − τ)),   u(0) = −S(0)·y0 / (2r)
/// ```
///
/// Returns `(S(0), u(0))`. `T = 0` degenerates to `(0, 0)`.
pub fn lq_riccati_oracle(q: f64, r: f64, t_horizon: f64, y0: f64) -> Result<(f64, f64)> {
    if !(q > 0.0) || !(r > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "LQ weights must be positive, got q={q}, r={r}"
        )));
    }
    if !(t_horizon >= 0.0) || !t_horizon.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "LQ horizon must be nonnegative, got {t_horizon}"
        )));
    }
    let s0 = 2.0 * (q * r).sqrt() * ((q / r).sqrt() * t_horizon).tanh();
    let u0 = -s0 * y0 / (2.0 * r);
    Ok((s0, u0))
}

/// The closed-form `S(τ)` behind [`lq_riccati_oracle`], exposed so tests can
/// verify it satisfies the Riccati equation on a fine grid.
pub fn lq_closed_form_s(q: f64, r: f64, t_horizon: f64, tau: f64) -> f64 {
    2.0 * (q * r).sqrt() * ((q / r).sqrt() * (t_horizon - tau)).tanh()
}

/// One horizon problem frozen in time: everything [`direct_ocp`] needs to
/// re-solve it from scratch, with the reference trajectory stored as data so
/// no simulator state leaks in.
#[derive(Debug, Clone)]
pub struct FrozenInstance<'m> {
    pub model: &'m AffineParamModel,
    pub weights: Weights,
    /// Resolved prior at the freeze time (what the R-term pulls toward).
    pub prior: ParamVec,
    pub mode: RegressorMode,
    pub y0: StateVec,
    pub grid: TauGrid,
    /// Reference trajectory on the half grid (2N+1 samples); nodes sit at
    /// the even indices.
    pub x_half: Vec<StateVec>,
}

impl<'m> FrozenInstance<'m> {
    pub fn new(
        model: &'m AffineParamModel,
        weights: Weights,
        prior: ParamVec,
        mode: RegressorMode,
        y0: StateVec,
        grid: TauGrid,
        x_half: Vec<StateVec>,
    ) -> Result<Self> {
        let want = 2 * grid.segments() + 1;
        if x_half.len() != want {
            return Err(Error::InvalidConfig(format!(
                "frozen instance needs {} half-grid reference samples, got {}",
                want,
                x_half.len()
            )));
        }
        if y0.len() != model.state_dim() || prior.len() != model.param_dim() {
            return Err(Error::InvalidConfig(
                "frozen instance dimensions disagree with the model".into(),
            ));
        }
        Ok(FrozenInstance {
            model,
            weights,
            prior,
            mode,
            y0,
            grid,
            x_half,
        })
    }

    pub fn ctx(&self) -> OcpContext<'_> {
        OcpContext {
            model: self.model,
            weights: &self.weights,
            prior: &self.prior,
            mode: self.mode,
        }
    }

    /// Replay predictor over the stored reference samples.
    pub fn predictor(&self) -> ReferencePredictor<'_> {
        ReferencePredictor::Frozen(&self.x_half)
    }
}

/// A frozen instance captured out of a live estimation run, together with
/// the solver state needed to reproduce that step's horizon field.
#[derive(Debug, Clone)]
pub struct FrozenSnapshot<'m> {
    pub instance: FrozenInstance<'m>,
    /// Real-time costate at the freeze step (the field's λ(0)).
    pub lambda0: CostateVec,
    /// dT/dt at the freeze step, for terminal conditions.
    pub horizon_growth: f64,
    pub stabilizer: DenseMat,
}

/// Run the estimator against a noise-free drive up to `t_freeze` and
/// capture the horizon problem it faces there. `dtau_override` refines the
/// frozen grid below the estimator's own resolution when the oracle wants a
/// sharper discretization.
pub fn freeze_instance<'m>(
    model: &'m AffineParamModel,
    profile: &ParameterProfile,
    config: EstimatorConfig,
    x0: StateVec,
    y0: StateVec,
    t_freeze: f64,
    dtau_override: Option<f64>,
) -> Result<FrozenSnapshot<'m>> {
    if !(t_freeze > 0.0) || !t_freeze.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "freeze time must be positive, got {t_freeze}"
        )));
    }
    let dt = config.dt;
    let dtau = dtau_override.unwrap_or(config.dtau_target);
    let stabilizer = config.stabilizer.clone();
    let mut sim = DriveSimulator::new(model, profile, None, dt, x0)?;
    let mut est = Estimator::new(model, config, y0)?;

    let steps = (t_freeze / dt + 0.5).round() as u64;
    for _ in 0..steps {
        let predictor = ReferencePredictor::ExactLookahead(&sim);
        est.solve(&sim.state().clone(), &predictor)?;
        est.advance(&predictor)?;
        sim.advance()?;
    }

    let t = est.state().t;
    let (t_horizon, growth) = est.config().schedule.at(t);
    let grid = TauGrid::new(t_horizon, dtau)?;
    let offsets: Vec<f64> = (0..=2 * grid.segments()).map(|k| grid.half_tau(k)).collect();
    let x_half = sim.lookahead(&offsets)?;
    let prior = est.config().prior.resolve(&est.state().theta_applied);

    let instance = FrozenInstance::new(
        model,
        est.config().weights.clone(),
        prior,
        est.config().mode,
        est.state().y.clone(),
        grid,
        x_half,
    )?;
    Ok(FrozenSnapshot {
        instance,
        lambda0: est.state().lambda.clone(),
        horizon_growth: growth,
        stabilizer,
    })
}

/// Integrate the response under piecewise-constant parameter deviations
/// (`dev[i]` held over segment `i`) and return the node states.
fn simulate_piecewise(inst: &FrozenInstance, dev: &[ParamVec]) -> Vec<StateVec> {
    let ctx = inst.ctx();
    let n_seg = inst.grid.segments();
    let h = inst.grid.step();
    let mut nodes = Vec::with_capacity(n_seg + 1);
    let mut y = inst.y0.clone();
    nodes.push(y.clone());
    for (i, dev_i) in dev.iter().enumerate().take(n_seg) {
        let theta = ctx.applied_theta(dev_i);
        let (xl, xm, xr) = (
            &inst.x_half[2 * i],
            &inst.x_half[2 * i + 1],
            &inst.x_half[2 * i + 2],
        );
        let k1 = inst.model.response_rhs(&y, xl, &theta, inst.mode);
        let k2 = inst
            .model
            .response_rhs(&(&y + &k1 * (h / 2.0)), xm, &theta, inst.mode);
        let k3 = inst
            .model
            .response_rhs(&(&y + &k2 * (h / 2.0)), xm, &theta, inst.mode);
        let k4 = inst.model.response_rhs(&(&y + &k3 * h), xr, &theta, inst.mode);
        y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        nodes.push(y.clone());
    }
    nodes
}

/// Trapezoid cost of a piecewise-constant-deviation trajectory: on segment
/// `i` both endpoint stage costs use `dev[i]`.
fn piecewise_cost(inst: &FrozenInstance, dev: &[ParamVec], nodes: &[StateVec]) -> f64 {
    let h = inst.grid.step();
    let mut cost = 0.0;
    for i in 0..inst.grid.segments() {
        let el = &nodes[i] - &inst.x_half[2 * i];
        let er = &nodes[i + 1] - &inst.x_half[2 * (i + 1)];
        cost += 0.5
            * h
            * (stage_cost(&el, &dev[i], &inst.weights) + stage_cost(&er, &dev[i], &inst.weights));
    }
    cost
}

/// Trapezoid cost along a continuation horizon field, on the node grid, so
/// the comparison against [`direct_ocp`] shares its quadrature.
pub fn field_node_cost(inst: &FrozenInstance, field: &HorizonField) -> f64 {
    let h = inst.grid.step();
    let n_seg = inst.grid.segments();
    let node_cost = |i: usize| {
        let e = field.y_node(i) - field.x_ref_node(i);
        stage_cost(&e, field.theta_dev_node(i), &inst.weights)
    };
    let mut cost = 0.5 * (node_cost(0) + node_cost(n_seg));
    for i in 1..n_seg {
        cost += node_cost(i);
    }
    cost * h
}

/// Solve the frozen horizon problem by brute force and report what it found.
#[derive(Debug, Clone)]
pub struct DirectSolution {
    /// Optimal piecewise-constant deviation per segment; the applied
    /// parameter on segment `i` is `prior + dev_segments[i]`.
    pub dev_segments: Vec<ParamVec>,
    pub cost: f64,
    /// Gradient norm at exit: ≤ the tolerance when `converged`.
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DirectSolution {
    /// The transcription's estimate of the deviation at τ = 0: linear
    /// extrapolation from the first two segment midpoints back to the left
    /// edge (a piecewise-constant segment value represents its midpoint).
    pub fn dev_at_zero(&self) -> ParamVec {
        match self.dev_segments.len() {
            0 => unreachable!("grids have at least one segment"),
            1 => self.dev_segments[0].clone(),
            _ => &self.dev_segments[0] * 1.5 - &self.dev_segments[1] * 0.5,
        }
    }
}

const DIRECT_GRAD_TOL: f64 = 1e-8;

/// Single-shooting gradient descent over piecewise-constant parameter
/// deviations, minimizing the trapezoid-quadrature cost of the frozen
/// instance. The gradient is measured by central finite differences — the
/// point of this oracle is to share nothing with the costate machinery —
/// and the line search is plain backtracking. Terminates at gradient norm
/// ≤ 1e-8 or after `max_iterations`; non-convergence is reported in the
/// result, not an error.
pub fn direct_ocp(inst: &FrozenInstance, max_iterations: usize) -> DirectSolution {
    let n_seg = inst.grid.segments();
    let p = inst.model.param_dim();
    let mut dev = vec![ParamVec::zeros(p); n_seg];

    let cost_of = |dev: &[ParamVec]| {
        let nodes = simulate_piecewise(inst, dev);
        piecewise_cost(inst, dev, &nodes)
    };

    let mut cost = cost_of(&dev);
    let mut grad_norm = f64::INFINITY;
    let mut step = 1.0;
    let mut iterations = 0;

    for _ in 0..max_iterations {
        // central-difference gradient over all segment components
        let mut grad = vec![ParamVec::zeros(p); n_seg];
        let mut sq_sum = 0.0;
        for i in 0..n_seg {
            for j in 0..p {
                let h = 1e-5 * dev[i][j].abs().max(1.0);
                let keep = dev[i][j];
                dev[i][j] = keep + h;
                let hi = cost_of(&dev);
                dev[i][j] = keep - h;
                let lo = cost_of(&dev);
                dev[i][j] = keep;
                let g = (hi - lo) / (2.0 * h);
                grad[i][j] = g;
                sq_sum += g * g;
            }
        }
        grad_norm = sq_sum.sqrt();
        if grad_norm <= DIRECT_GRAD_TOL {
            break;
        }
        iterations += 1;

        // backtracking line search along −grad with Armijo decrease
        step *= 4.0; // let the step grow back after previous shrinkage
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<ParamVec> = dev
                .iter()
                .zip(&grad)
                .map(|(d, g)| d - g * step)
                .collect();
            let trial_cost = cost_of(&trial);
            if trial_cost <= cost - 1e-4 * step * sq_sum {
                dev = trial;
                cost = trial_cost;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // line search exhausted: gradient is noise-level
        }
    }

    DirectSolution {
        dev_segments: dev,
        cost,
        grad_norm,
        iterations,
        converged: grad_norm <= DIRECT_GRAD_TOL,
    }
}

/// Verify the swept affine relation `δλ(τ) = S(τ)·δy(τ) + c(τ)` by
/// integrating the linearized optimality system forward from
/// `δy(0) = 0, δλ(0) = c(0)` with the same stage layout the sweep used, and
/// measuring the worst node violation relative to the running magnitudes.
pub fn sweep_consistency(
    ctx: &OcpContext,
    field: &HorizonField,
    sweep: &SweepResult,
) -> OracleReport {
    let grid = field.grid();
    let n_seg = grid.segments();
    let h = grid.step();
    let blocks: Vec<_> = (0..field.half_count())
        .map(|k| {
            ctx.sweep_blocks(
                field.y_half(k),
                field.lambda_half(k),
                field.theta_dev_half(k),
                field.x_ref_half(k),
            )
        })
        .collect();

    let n = ctx.model.state_dim();
    let mut w = StateVec::zeros(n);
    let mut v = sweep.c[0].clone();
    let mut worst: f64 = 0.0;

    let rhs = |b: &crate::ocp::SweepBlocks, w: &StateVec, v: &CostateVec| {
        (&b.g * w - &b.l * v, -(&b.k * w) - b.g.transpose() * v)
    };

    for i in 0..=n_seg {
        let predicted = &sweep.s[i] * &w + &sweep.c[i];
        let scale = v.norm().max(predicted.norm()).max(1.0);
        worst = worst.max((&v - predicted).norm() / scale);
        if i == n_seg {
            break;
        }
        let (bl, bm, br) = (&blocks[2 * i], &blocks[2 * i + 1], &blocks[2 * i + 2]);
        let (k1w, k1v) = rhs(bl, &w, &v);
        let (k2w, k2v) = rhs(bm, &(&w + &k1w * (h / 2.0)), &(&v + &k1v * (h / 2.0)));
        let (k3w, k3v) = rhs(bm, &(&w + &k2w * (h / 2.0)), &(&v + &k2v * (h / 2.0)));
        let (k4w, k4v) = rhs(br, &(&w + &k3w * h), &(&v + &k3v * h));
        w += (k1w + k2w * 2.0 + k3w * 2.0 + k4w) * (h / 6.0);
        v += (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (h / 6.0);
    }

    OracleReport::new("sweep-consistency", n_seg + 1, worst, 1e-6)
}

/// The scalar integrator model behind the LQ oracle instances:
/// `ẏ = u` written as `A = 0, f ≡ 0, D = 1`.
pub fn lq_scalar_model() -> AffineParamModel {
    AffineParamModel::new(
        DMatrix::zeros(1, 1),
        |_x: &StateVec| DVector::zeros(1),
        |_x: &StateVec| DMatrix::zeros(1, 1),
        |_x: &StateVec| DMatrix::identity(1, 1),
        |_x: &StateVec, _th: &ParamVec| DMatrix::zeros(1, 1),
        |_x: &StateVec, _l: &CostateVec, _th: &ParamVec| DMatrix::zeros(1, 1),
    )
    .expect("scalar integrator model is well-formed")
}

/// Frozen instance of the scalar LQ problem (`x ≡ 0`, prior 0), for
/// cross-checking [`direct_ocp`] against [`lq_riccati_oracle`].
pub fn lq_instance<'m>(
    model: &'m AffineParamModel,
    q: f64,
    r: f64,
    t_horizon: f64,
    y0: f64,
    dtau: f64,
) -> Result<FrozenInstance<'m>> {
    let weights = Weights::diagonal(&[q], &[r])?;
    let grid = TauGrid::new(t_horizon, dtau)?;
    let x_half = vec![StateVec::zeros(1); 2 * grid.segments() + 1];
    FrozenInstance::new(
        model,
        weights,
        ParamVec::zeros(1),
        RegressorMode::General,
        DVector::from_element(1, y0),
        grid,
        x_half,
    )
}

/// Build the horizon field the continuation solver would produce on a
/// frozen instance (forward pass only; no sweep applied).
pub fn instance_field(inst: &FrozenInstance, lambda0: &CostateVec) -> Result<HorizonField> {
    forward_horizon(
        &inst.ctx(),
        &inst.grid,
        &inst.y0,
        lambda0,
        &inst.predictor(),
    )
}
