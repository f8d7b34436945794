//! Parameter-affine system models, true-parameter profiles, drive noise, and
//! the drive-side simulator.
//!
//! Both the drive (truth) and response (estimator copy) share one structural
//! decomposition: `ẋ = A·x + f(x) + D(x)·θ`, with the unknown parameters θ
//! entering linearly through the regressor matrix `D`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::numerics::{
    fd_jacobian, fd_jacobian_with_step, vec_finite, CostateVec, DenseMat, ParamVec, StateVec,
};

pub type VecFn = Arc<dyn Fn(&StateVec) -> StateVec + Send + Sync>;
pub type MatFn = Arc<dyn Fn(&StateVec) -> DenseMat + Send + Sync>;
pub type ContractFn = Arc<dyn Fn(&StateVec, &ParamVec) -> DenseMat + Send + Sync>;
pub type HessFn = Arc<dyn Fn(&StateVec, &CostateVec, &ParamVec) -> DenseMat + Send + Sync>;

/// Where the response dynamics and regressor are evaluated.
///
/// `Observer` feeds the measured drive state into the response right-hand
/// side (the response is a driven integrator; its own state enters only the
/// tracking cost). `General` runs a full model copy at the response state.
/// Observer is the default used for reproducing the reference experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorMode {
    General,
    #[default]
    Observer,
}

/// A system of the form `ẋ = A·x + f(x) + D(x)·θ` together with the
/// derivative callbacks the solver needs.
///
/// - `f_jac`: Jacobian of `f`.
/// - `d_jac_contract(y, θ)`: Jacobian of `y ↦ D(y)·θ` for fixed θ.
/// - `hess_contract(y, λ, θ)`: `Σ_i λ_i · ∂²[f(y) + D(y)θ]_i / ∂y²`.
#[derive(Clone)]
pub struct AffineParamModel {
    n: usize,
    p: usize,
    a: DenseMat,
    f: VecFn,
    f_jac: MatFn,
    d: MatFn,
    d_jac_contract: ContractFn,
    hess_contract: HessFn,
    fd_derivatives: bool,
}

impl fmt::Debug for AffineParamModel {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        fm.debug_struct("AffineParamModel")
            .field("n", &self.n)
            .field("p", &self.p)
            .field("fd_derivatives", &self.fd_derivatives)
            .finish()
    }
}

impl AffineParamModel {
    /// Build a model from analytic callbacks. Dimensions are inferred from
    /// `a` (n×n) and `d` (n×p) and every callback is probed once at the
    /// origin to catch wiring mistakes early.
    pub fn new(
        a: DenseMat,
        f: impl Fn(&StateVec) -> StateVec + Send + Sync + 'static,
        f_jac: impl Fn(&StateVec) -> DenseMat + Send + Sync + 'static,
        d: impl Fn(&StateVec) -> DenseMat + Send + Sync + 'static,
        d_jac_contract: impl Fn(&StateVec, &ParamVec) -> DenseMat + Send + Sync + 'static,
        hess_contract: impl Fn(&StateVec, &CostateVec, &ParamVec) -> DenseMat + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::from_arcs(
            a,
            Arc::new(f),
            Arc::new(f_jac),
            Arc::new(d),
            Arc::new(d_jac_contract),
            Arc::new(hess_contract),
            false,
        )
    }

    /// Build a model from `A`, `f`, and `D` alone, filling the derivative
    /// callbacks with central differences. Convenient for experimentation;
    /// the derived callbacks are accurate to roughly 1e-6 and the model is
    /// flagged via [`uses_fd_derivatives`](Self::uses_fd_derivatives).
    pub fn with_fd_derivatives(
        a: DenseMat,
        f: impl Fn(&StateVec) -> StateVec + Send + Sync + 'static,
        d: impl Fn(&StateVec) -> DenseMat + Send + Sync + 'static,
    ) -> Result<Self> {
        let n = a.nrows();
        let f: VecFn = Arc::new(f);
        let d: MatFn = Arc::new(d);

        let f_for_jac = Arc::clone(&f);
        let f_jac: MatFn = Arc::new(move |y| fd_jacobian(|v| f_for_jac(v), y, n));

        let d_for_contract = Arc::clone(&d);
        let d_jac_contract: ContractFn =
            Arc::new(move |y, theta| fd_jacobian(|v| d_for_contract(v) * theta, y, n));

        // Second derivatives difference the (already differenced) gradient of
        // λᵀ[f(y) + D(y)θ]; a coarser outer step keeps the noise in check.
        let f_for_hess = Arc::clone(&f);
        let d_for_hess = Arc::clone(&d);
        let hess_contract: HessFn = Arc::new(move |y, lambda, theta| {
            let f_in = Arc::clone(&f_for_hess);
            let d_in = Arc::clone(&d_for_hess);
            let lam = lambda.clone();
            let grad = move |v: &StateVec| {
                fd_jacobian(|w| f_in(w) + d_in(w) * theta, v, n).transpose() * &lam
            };
            let h = 1e-4 * y.norm().max(1.0);
            let hess = fd_jacobian_with_step(grad, y, n, h);
            // exact contracted Hessians are symmetric; average out FD noise
            (&hess + hess.transpose()) * 0.5
        });

        Self::from_arcs(a, f, f_jac, d, d_jac_contract, hess_contract, true)
    }

    #[allow(clippy::too_many_arguments)]
    fn from_arcs(
        a: DenseMat,
        f: VecFn,
        f_jac: MatFn,
        d: MatFn,
        d_jac_contract: ContractFn,
        hess_contract: HessFn,
        fd_derivatives: bool,
    ) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidConfig(format!(
                "linear part must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let n = a.nrows();
        let origin = DVector::zeros(n);
        let f0 = f(&origin);
        if f0.len() != n {
            return Err(Error::DimensionMismatch {
                what: "f(x) output",
                expected: n,
                got: f0.len(),
            });
        }
        let d0 = d(&origin);
        if d0.nrows() != n {
            return Err(Error::DimensionMismatch {
                what: "D(x) row count",
                expected: n,
                got: d0.nrows(),
            });
        }
        let p = d0.ncols();
        let fj = f_jac(&origin);
        if fj.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "f Jacobian",
                expected: n,
                got: fj.nrows().max(fj.ncols()),
            });
        }
        let zero_theta = DVector::zeros(p);
        let dj = d_jac_contract(&origin, &zero_theta);
        if dj.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "D·θ Jacobian",
                expected: n,
                got: dj.nrows().max(dj.ncols()),
            });
        }
        let hc = hess_contract(&origin, &origin, &zero_theta);
        if hc.shape() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "contracted Hessian",
                expected: n,
                got: hc.nrows().max(hc.ncols()),
            });
        }
        Ok(AffineParamModel {
            n,
            p,
            a,
            f,
            f_jac,
            d,
            d_jac_contract,
            hess_contract,
            fd_derivatives,
        })
    }

    /// The Lorenz system with the convection rate and the vertical
    /// dissipation rate treated as the unknown parameters:
    ///
    /// ```text
    /// ẋ1 = θ1 (x2 − x1)
    /// ẋ2 = 28 x1 − x1 x3 − x2
    /// ẋ3 = x1 x2 − θ2 x3
    /// ```
    ///
    /// True values θ = (10, 8/3) put the system on the classic chaotic
    /// attractor.
    pub fn lorenz() -> Self {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 0.0, 0.0, 28.0, -1.0, 0.0, 0.0, 0.0, 0.0]);
        Self::new(
            a,
            |x| DVector::from_vec(vec![0.0, -x[0] * x[2], x[0] * x[1]]),
            |x| {
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[0.0, 0.0, 0.0, -x[2], 0.0, -x[0], x[1], x[0], 0.0],
                )
            },
            |x| {
                DMatrix::from_row_slice(3, 2, &[x[1] - x[0], 0.0, 0.0, 0.0, 0.0, -x[2]])
            },
            |_, theta| {
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[-theta[0], theta[0], 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -theta[1]],
                )
            },
            |_, lambda, _| {
                DMatrix::from_row_slice(
                    3,
                    3,
                    &[
                        0.0, lambda[2], -lambda[1], lambda[2], 0.0, 0.0, -lambda[1], 0.0, 0.0,
                    ],
                )
            },
        )
        .expect("lorenz model wiring")
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn param_dim(&self) -> usize {
        self.p
    }

    /// Whether derivative callbacks were auto-filled by finite differences.
    pub fn uses_fd_derivatives(&self) -> bool {
        self.fd_derivatives
    }

    /// The constant linear part `A`.
    pub fn linear(&self) -> &DenseMat {
        &self.a
    }

    pub fn eval_f(&self, x: &StateVec) -> StateVec {
        (self.f)(x)
    }

    pub fn eval_f_jac(&self, x: &StateVec) -> DenseMat {
        (self.f_jac)(x)
    }

    pub fn eval_d(&self, x: &StateVec) -> DenseMat {
        (self.d)(x)
    }

    pub fn eval_d_jac_contract(&self, x: &StateVec, theta: &ParamVec) -> DenseMat {
        (self.d_jac_contract)(x, theta)
    }

    pub fn eval_hess_contract(
        &self,
        x: &StateVec,
        lambda: &CostateVec,
        theta: &ParamVec,
    ) -> DenseMat {
        (self.hess_contract)(x, lambda, theta)
    }

    /// Right-hand side of the drive (truth) system, with an additive
    /// disturbance `eta` entering every state equation.
    pub fn drive_rhs(&self, x: &StateVec, theta_true: &ParamVec, eta: f64) -> StateVec {
        let mut rhs = &self.a * x + (self.f)(x) + (self.d)(x) * theta_true;
        if eta != 0.0 {
            rhs.add_scalar_mut(eta);
        }
        rhs
    }

    /// Right-hand side of the response system under the applied parameters.
    /// In observer mode every term is evaluated at the measured drive state
    /// `x`; in general mode at the response state `y`.
    pub fn response_rhs(
        &self,
        y: &StateVec,
        x: &StateVec,
        theta: &ParamVec,
        mode: RegressorMode,
    ) -> StateVec {
        let s = match mode {
            RegressorMode::General => y,
            RegressorMode::Observer => x,
        };
        &self.a * s + (self.f)(s) + (self.d)(s) * theta
    }

    /// Jacobian of the response right-hand side with respect to `y`. Zero in
    /// observer mode, where the right-hand side does not see `y` at all.
    pub fn dynamics_jacobian(
        &self,
        y: &StateVec,
        _x: &StateVec,
        theta: &ParamVec,
        mode: RegressorMode,
    ) -> DenseMat {
        match mode {
            RegressorMode::General => {
                &self.a + (self.f_jac)(y) + (self.d_jac_contract)(y, theta)
            }
            RegressorMode::Observer => DMatrix::zeros(self.n, self.n),
        }
    }

    /// The state the regressor is evaluated at under `mode`.
    pub fn regressor_point<'s>(
        &self,
        y: &'s StateVec,
        x: &'s StateVec,
        mode: RegressorMode,
    ) -> &'s StateVec {
        match mode {
            RegressorMode::General => y,
            RegressorMode::Observer => x,
        }
    }
}

/// True-parameter trajectory driving the truth system.
#[derive(Debug, Clone, PartialEq)]
pub enum ParameterProfile {
    /// θ(t) ≡ value.
    Constant(ParamVec),
    /// First component `amplitude · sin(t) / (t + 1)`, remaining components
    /// fixed. This is the stock time-varying excitation used by the built-in
    /// scenarios.
    DecayingSine { amplitude: f64, fixed: ParamVec },
    /// Piecewise-linear interpolation of tabulated breakpoints.
    Table(ProfileTable),
}

impl ParameterProfile {
    pub fn dim(&self) -> usize {
        match self {
            ParameterProfile::Constant(v) => v.len(),
            ParameterProfile::DecayingSine { fixed, .. } => fixed.len() + 1,
            ParameterProfile::Table(t) => t.dim(),
        }
    }

    /// θ(t). Table profiles clamp to their endpoints outside the tabulated
    /// range; use [`clamps_at`](Self::clamps_at) to detect that.
    pub fn value_at(&self, t: f64) -> ParamVec {
        match self {
            ParameterProfile::Constant(v) => v.clone(),
            ParameterProfile::DecayingSine { amplitude, fixed } => {
                let mut out = DVector::zeros(fixed.len() + 1);
                out[0] = amplitude * t.sin() / (t + 1.0);
                for (i, v) in fixed.iter().enumerate() {
                    out[i + 1] = *v;
                }
                out
            }
            ParameterProfile::Table(tab) => tab.value_at(t),
        }
    }

    /// True when evaluating at `t` falls outside a table profile's range and
    /// the value is clamped to an endpoint.
    pub fn clamps_at(&self, t: f64) -> bool {
        match self {
            ParameterProfile::Table(tab) => t < tab.times[0] || t > *tab.times.last().unwrap(),
            _ => false,
        }
    }
}

/// Strictly increasing breakpoints with one parameter vector per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    times: Vec<f64>,
    values: Vec<ParamVec>,
}

impl ProfileTable {
    pub fn new(times: Vec<f64>, values: Vec<ParamVec>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::Scenario(format!(
                "profile table needs matching non-empty breakpoints, got {} times / {} rows",
                times.len(),
                values.len()
            )));
        }
        if !times.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Scenario(
                "profile table breakpoints must be strictly increasing".into(),
            ));
        }
        let dim = values[0].len();
        if dim == 0 || values.iter().any(|v| v.len() != dim) {
            return Err(Error::Scenario(
                "profile table rows must share one nonzero parameter dimension".into(),
            ));
        }
        if times.iter().any(|t| !t.is_finite())
            || values.iter().any(|v| !vec_finite(v))
        {
            return Err(Error::Scenario("profile table entries must be finite".into()));
        }
        Ok(ProfileTable { times, values })
    }

    /// Parse `t,theta_1,...,theta_p` CSV text (header required).
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Scenario("empty parameter table".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 2 || cols[0] != "t" {
            return Err(Error::Scenario(format!(
                "parameter table header must be t,theta_1,...,theta_p, got {header:?}"
            )));
        }
        for (i, c) in cols[1..].iter().enumerate() {
            let want = format!("theta_{}", i + 1);
            if *c != want {
                return Err(Error::Scenario(format!(
                    "parameter table header column {} must be {want}, got {c:?}",
                    i + 2
                )));
            }
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Scenario(format!(
                    "parameter table line {}: expected {} fields, got {}",
                    lineno + 1,
                    dim + 1,
                    fields.len()
                )));
            }
            let parse = |s: &str, field: usize| {
                s.parse::<f64>().map_err(|e| {
                    Error::Scenario(format!(
                        "parameter table line {} field {}: {e}",
                        lineno + 1,
                        field + 1
                    ))
                })
            };
            times.push(parse(fields[0], 0)?);
            let mut row = DVector::zeros(dim);
            for (j, s) in fields[1..].iter().enumerate() {
                row[j] = parse(s, j + 1)?;
            }
            values.push(row);
        }
        ProfileTable::new(times, values)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn rows(&self) -> &[ParamVec] {
        &self.values
    }

    /// Linear interpolation, clamped to the endpoints outside the range.
    pub fn value_at(&self, t: f64) -> ParamVec {
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        let last = self.times.len() - 1;
        if t >= self.times[last] {
            return self.values[last].clone();
        }
        // first index with time > t; the segment [hi-1, hi] brackets t
        let hi = self.times.partition_point(|&b| b <= t);
        let (t0, t1) = (self.times[hi - 1], self.times[hi]);
        let w = (t - t0) / (t1 - t0);
        &self.values[hi - 1] * (1.0 - w) + &self.values[hi] * w
    }
}

/// Band-limited white noise: a zero-order-held Gaussian sequence with
/// variance `power / sample_interval`, fully determined by `seed`. Sample k
/// covers `t ∈ [k·Δ, (k+1)·Δ)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseSpec {
    pub power: f64,
    pub sample_interval: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.power >= 0.0) || !self.power.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise power must be finite and >= 0, got {}",
                self.power
            )));
        }
        if !(self.sample_interval > 0.0) || !self.sample_interval.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise sample_interval must be positive, got {}",
                self.sample_interval
            )));
        }
        Ok(())
    }

    /// Standard deviation of the held samples.
    pub fn std_dev(&self) -> f64 {
        (self.power / self.sample_interval).sqrt()
    }

    /// The k-th held value. Random access: each index derives its own
    /// counter position in the stream, so lookahead can query arbitrary
    /// future samples without replaying the sequence.
    pub fn sample(&self, k: u64) -> f64 {
        if self.power == 0.0 {
            return 0.0;
        }
        use rand_core::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        // 2 words per u64 draw, 2 draws per sample
        rng.set_word_pos(4u128 * k as u128);
        let to_unit = |bits: u64| ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        let u1 = to_unit(rng.next_u64());
        let u2 = to_unit(rng.next_u64());
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        self.std_dev() * z
    }

    /// Index of the hold interval containing `t` (guarded against the
    /// floating-point boundary sitting an ulp below an integer).
    pub fn interval_index(&self, t: f64) -> u64 {
        ((t / self.sample_interval) + 1e-9).floor().max(0.0) as u64
    }

    /// The held value at time `t`.
    pub fn value_at(&self, t: f64) -> f64 {
        self.sample(self.interval_index(t))
    }
}

/// Fixed-step simulator for the drive (truth) system. Owns the current state
/// and exposes exact lookahead sampling so the estimator can be fed the same
/// trajectory the drive will actually realize.
#[derive(Debug, Clone)]
pub struct DriveSimulator<'a> {
    model: &'a AffineParamModel,
    profile: &'a ParameterProfile,
    noise: Option<NoiseSpec>,
    dt: f64,
    state: StateVec,
    step_index: u64,
}

impl<'a> DriveSimulator<'a> {
    pub fn new(
        model: &'a AffineParamModel,
        profile: &'a ParameterProfile,
        noise: Option<NoiseSpec>,
        dt: f64,
        x0: StateVec,
    ) -> Result<Self> {
        if profile.dim() != model.param_dim() {
            return Err(Error::DimensionMismatch {
                what: "parameter profile",
                expected: model.param_dim(),
                got: profile.dim(),
            });
        }
        if x0.len() != model.state_dim() {
            return Err(Error::DimensionMismatch {
                what: "drive initial state",
                expected: model.state_dim(),
                got: x0.len(),
            });
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "drive step must be positive, got {dt}"
            )));
        }
        if let Some(spec) = &noise {
            spec.validate()?;
        }
        Ok(DriveSimulator {
            model,
            profile,
            noise,
            dt,
            state: x0,
            step_index: 0,
        })
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.dt
    }

    pub fn state(&self) -> &StateVec {
        &self.state
    }

    pub fn model(&self) -> &AffineParamModel {
        self.model
    }

    /// Disturbance value held over the step starting now (0 without noise).
    pub fn current_eta(&self) -> f64 {
        self.noise.as_ref().map_or(0.0, |s| s.value_at(self.time()))
    }

    /// Integrate one RK4 substep of the drive from `(t, x)` over `dh`, with
    /// the disturbance frozen at the value in force at `t`.
    fn substep(&self, t: f64, x: &StateVec, dh: f64) -> Result<StateVec> {
        let eta = self.noise.as_ref().map_or(0.0, |s| s.value_at(t));
        let th0 = self.profile.value_at(t);
        let th_mid = self.profile.value_at(t + dh / 2.0);
        let th1 = self.profile.value_at(t + dh);
        let k1 = self.model.drive_rhs(x, &th0, eta);
        let k2 = self.model.drive_rhs(&(x + &k1 * (dh / 2.0)), &th_mid, eta);
        let k3 = self.model.drive_rhs(&(x + &k2 * (dh / 2.0)), &th_mid, eta);
        let k4 = self.model.drive_rhs(&(x + &k3 * dh), &th1, eta);
        let next = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dh / 6.0);
        if !vec_finite(&next) {
            return Err(Error::NonFiniteDerivative);
        }
        Ok(next)
    }

    /// Advance the drive by one full step `dt`.
    pub fn advance(&mut self) -> Result<()> {
        self.state = self.substep(self.time(), &self.state.clone(), self.dt)?;
        self.step_index += 1;
        Ok(())
    }

    /// Sample the future drive trajectory at the given offsets from now
    /// (nondecreasing, starting at 0). Integrates a private copy; the
    /// simulator itself does not move. The disturbance sample path matches
    /// what [`advance`](Self::advance) will realize.
    pub fn lookahead(&self, offsets: &[f64]) -> Result<Vec<StateVec>> {
        debug_assert!(!offsets.is_empty() && offsets[0] == 0.0);
        let t0 = self.time();
        let mut out = Vec::with_capacity(offsets.len());
        let mut x = self.state.clone();
        out.push(x.clone());
        for w in offsets.windows(2) {
            let (a, b) = (w[0], w[1]);
            debug_assert!(b >= a);
            if b > a {
                x = self.substep(t0 + a, &x, b - a)?;
            }
            out.push(x.clone());
        }
        Ok(out)
    }
}
