//! The moving-horizon tracking problem: quadratic weights, the growing
//! horizon schedule, the Hamiltonian and its derivatives, and the linearized
//! blocks consumed by the backward sweep.
//!
//! Over the horizon the response `y` tracks the measured drive `x` under a
//! running cost `eᵀQe + θ̄ᵀRθ̄`, where `e = y − x` and `θ̄` is the deviation
//! of the applied parameters from a reference prior. The Hamiltonian is
//!
//! ```text
//! H = eᵀQe + θ̄ᵀRθ̄ + λᵀ[A·s + f(s) + D(s)(prior + θ̄)]
//! ```
//!
//! with `s = y` in general mode and `s = x` in observer mode. Stationarity in
//! θ̄ gives the closed-form estimate `θ̄* = −(2R)⁻¹ Dᵀλ`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::model::{AffineParamModel, RegressorMode};
use crate::numerics::{is_symmetric, mat_finite, CostateVec, DenseMat, ParamVec, StateVec};

/// Validated SPD tracking and deviation weights.
#[derive(Debug, Clone)]
pub struct Weights {
    q: DenseMat,
    r: DenseMat,
    // cached factorization of 2R, used by every stationarity solve
    two_r_chol: Cholesky<f64, Dyn>,
}

impl PartialEq for Weights {
    fn eq(&self, other: &Self) -> bool {
        self.q == other.q && self.r == other.r
    }
}

impl Weights {
    /// Requires both matrices symmetric positive definite.
    pub fn new(q: DenseMat, r: DenseMat) -> Result<Self> {
        for (name, m) in [("weights.Q", &q), ("weights.R", &r)] {
            if !mat_finite(m) || !is_symmetric(m, 1e-12) {
                return Err(Error::NotPositiveDefinite { name: name.into() });
            }
            if m.clone().cholesky().is_none() {
                return Err(Error::NotPositiveDefinite { name: name.into() });
            }
        }
        let two_r_chol = (&r * 2.0).cholesky().expect("2R inherits PD from R");
        Ok(Weights { q, r, two_r_chol })
    }

    /// Diagonal shorthand.
    pub fn diagonal(q_diag: &[f64], r_diag: &[f64]) -> Result<Self> {
        Self::new(
            DMatrix::from_diagonal(&DVector::from_row_slice(q_diag)),
            DMatrix::from_diagonal(&DVector::from_row_slice(r_diag)),
        )
    }

    pub fn q(&self) -> &DenseMat {
        &self.q
    }

    pub fn r(&self) -> &DenseMat {
        &self.r
    }

    pub fn state_dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn param_dim(&self) -> usize {
        self.r.nrows()
    }

    /// Solve `(2R) x = b`.
    pub fn solve_two_r(&self, b: &DVector<f64>) -> DVector<f64> {
        self.two_r_chol.solve(b)
    }

    /// Solve `(2R) X = B` columnwise.
    pub fn solve_two_r_mat(&self, b: &DenseMat) -> DenseMat {
        self.two_r_chol.solve(b)
    }
}

/// Smoothly growing horizon `T(t) = T_f · (1 − e^{−αt})`, which starts at
/// zero (making the startup residual vanish identically) and saturates at
/// `T_f` with slope `dT/dt = α (T_f − T)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonSchedule {
    pub terminal: f64,
    pub rate: f64,
}

impl HorizonSchedule {
    pub fn new(terminal: f64, rate: f64) -> Result<Self> {
        if !(terminal > 0.0) || !terminal.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "terminal horizon must be positive, got {terminal}"
            )));
        }
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "horizon growth rate must be positive, got {rate}"
            )));
        }
        Ok(HorizonSchedule { terminal, rate })
    }

    /// `(T(t), dT/dt)` at wall-clock time `t ≥ 0`.
    pub fn at(&self, t: f64) -> (f64, f64) {
        let decay = (-self.rate * t).exp();
        (self.terminal * (1.0 - decay), self.terminal * self.rate * decay)
    }
}

/// Reference the R-term penalizes deviations from.
///
/// With `track_estimate` the prior follows the previously applied estimate,
/// so the deviation penalty vanishes at a converged estimate instead of
/// biasing it toward a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorSpec {
    pub theta_prior: ParamVec,
    /// Follow the running estimate instead of staying at `theta_prior`.
    pub track_estimate: bool,
}

impl PriorSpec {
    pub fn fixed(theta_prior: ParamVec) -> Self {
        PriorSpec {
            theta_prior,
            track_estimate: false,
        }
    }

    pub fn tracking(initial: ParamVec) -> Self {
        PriorSpec {
            theta_prior: initial,
            track_estimate: true,
        }
    }

    pub fn zero(p: usize) -> Self {
        Self::fixed(DVector::zeros(p))
    }

    /// The prior in force for a step whose previous applied estimate was
    /// `last_applied`.
    pub fn resolve(&self, last_applied: &ParamVec) -> ParamVec {
        if self.track_estimate {
            last_applied.clone()
        } else {
            self.theta_prior.clone()
        }
    }
}

/// Everything the horizon solver needs to evaluate the optimality system.
#[derive(Clone, Copy)]
pub struct OcpContext<'a> {
    pub model: &'a AffineParamModel,
    pub weights: &'a Weights,
    /// Resolved prior value for the current step.
    pub prior: &'a ParamVec,
    pub mode: RegressorMode,
}

/// Linearized optimality-system blocks at one horizon point:
///
/// ```text
/// d/dτ [δy; δλ] = [ G  −L ] [δy]
///                 [−K  −Gᵀ] [δλ]
/// ```
#[derive(Debug, Clone)]
pub struct SweepBlocks {
    pub g: DenseMat,
    pub l: DenseMat,
    pub k: DenseMat,
}

/// Running cost `eᵀQe + devᵀR dev`.
pub fn stage_cost(e: &StateVec, dev: &ParamVec, w: &Weights) -> f64 {
    (e.transpose() * w.q() * e)[(0, 0)] + (dev.transpose() * w.r() * dev)[(0, 0)]
}

impl<'a> OcpContext<'a> {
    /// Applied parameter vector for a deviation `dev`.
    pub fn applied_theta(&self, dev: &ParamVec) -> ParamVec {
        self.prior + dev
    }

    /// The Hamiltonian at one horizon point.
    pub fn hamiltonian(&self, y: &StateVec, lambda: &CostateVec, dev: &ParamVec, x: &StateVec) -> f64 {
        let theta = self.applied_theta(dev);
        let rhs = self.model.response_rhs(y, x, &theta, self.mode);
        stage_cost(&(y - x), dev, self.weights) + lambda.dot(&rhs)
    }

    /// Closed-form stationary deviation `θ̄* = −(2R)⁻¹ D(s)ᵀ λ`, with the
    /// regressor evaluated at `y` or `x` according to the mode.
    pub fn stationary_theta_dev(&self, y: &StateVec, x: &StateVec, lambda: &CostateVec) -> ParamVec {
        let point = self.model.regressor_point(y, x, self.mode);
        let rhs = self.model.eval_d(point).transpose() * lambda;
        -self.weights.solve_two_r(&rhs)
    }

    /// Gradient of the Hamiltonian with respect to the response state:
    /// `2Q(y−x) + (∂rhs/∂y)ᵀ λ`.
    pub fn hamiltonian_state_grad(
        &self,
        y: &StateVec,
        lambda: &CostateVec,
        dev: &ParamVec,
        x: &StateVec,
    ) -> CostateVec {
        let theta = self.applied_theta(dev);
        let mut grad = self.weights.q() * (y - x) * 2.0;
        if self.mode == RegressorMode::General {
            grad += self
                .model
                .dynamics_jacobian(y, x, &theta, self.mode)
                .transpose()
                * lambda;
        }
        grad
    }

    /// Mixed second derivative `∂(Dᵀλ)/∂y` (p×n), assembled columnwise from
    /// the contracted regressor Jacobian. Zero in observer mode.
    pub fn theta_state_cross(&self, y: &StateVec, lambda: &CostateVec) -> DenseMat {
        let (n, p) = (self.model.state_dim(), self.model.param_dim());
        let mut cross = DMatrix::zeros(p, n);
        if self.mode == RegressorMode::Observer {
            return cross;
        }
        let mut unit = DVector::zeros(p);
        for j in 0..p {
            unit[j] = 1.0;
            // ∂(D(y)·e_j)/∂y, contracted with λ from the left
            let col_jac = self.model.eval_d_jac_contract(y, &unit);
            unit[j] = 0.0;
            let row = col_jac.transpose() * lambda;
            for k in 0..n {
                cross[(j, k)] = row[k];
            }
        }
        cross
    }

    /// Assemble the sweep blocks G, L, K at one horizon point.
    ///
    /// In observer mode the response dynamics do not depend on `y`, so
    /// `G = 0`, `K = 2Q`, and `L = D(x)(2R)⁻¹D(x)ᵀ`.
    pub fn sweep_blocks(
        &self,
        y: &StateVec,
        lambda: &CostateVec,
        dev: &ParamVec,
        x: &StateVec,
    ) -> SweepBlocks {
        let n = self.model.state_dim();
        let point = self.model.regressor_point(y, x, self.mode);
        let d = self.model.eval_d(point);
        let l_raw = &d * self.weights.solve_two_r_mat(&d.transpose());
        let l = (&l_raw + l_raw.transpose()) * 0.5;
        match self.mode {
            RegressorMode::Observer => SweepBlocks {
                g: DMatrix::zeros(n, n),
                l,
                k: self.weights.q() * 2.0,
            },
            RegressorMode::General => {
                let theta = self.applied_theta(dev);
                let fy = self.model.dynamics_jacobian(y, x, &theta, self.mode);
                let cross = self.theta_state_cross(y, lambda);
                let solved_cross = self.weights.solve_two_r_mat(&cross);
                let g = fy - &d * &solved_cross;
                let k_raw = self.weights.q() * 2.0
                    + self.model.eval_hess_contract(y, lambda, &theta)
                    - cross.transpose() * solved_cross;
                let k = (&k_raw + k_raw.transpose()) * 0.5;
                SweepBlocks { g, l, k }
            }
        }
    }

    /// Right-hand side of the response dynamics under the stationary
    /// deviation at `(y, λ)`; the building block of the horizon field.
    pub fn optimal_response_rhs(&self, y: &StateVec, lambda: &CostateVec, x: &StateVec) -> StateVec {
        let dev = self.stationary_theta_dev(y, x, lambda);
        let theta = self.applied_theta(&dev);
        self.model.response_rhs(y, x, &theta, self.mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{fd_gradient, fd_jacobian};
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    fn benchmark_weights() -> Weights {
        Weights::diagonal(&[0.5, 0.5, 0.5], &[0.5, 0.5]).unwrap()
    }

    fn ctx<'a>(
        model: &'a AffineParamModel,
        w: &'a Weights,
        prior: &'a ParamVec,
        mode: RegressorMode,
    ) -> OcpContext<'a> {
        OcpContext {
            model,
            weights: w,
            prior,
            mode,
        }
    }

    #[test]
    fn weights_reject_asymmetric_and_indefinite() {
        let asym = dmatrix![1.0, 0.5; 0.0, 1.0];
        assert!(matches!(
            Weights::new(asym, DMatrix::identity(2, 2)),
            Err(Error::NotPositiveDefinite { .. })
        ));
        let indef = dmatrix![1.0, 2.0; 2.0, 1.0];
        assert!(matches!(
            Weights::new(DMatrix::identity(2, 2), indef),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(Weights::diagonal(&[0.5, 0.5], &[0.0]).is_err(), "zero diagonal is not PD");
    }

    #[test]
    fn stage_cost_hand_value() {
        let w = benchmark_weights();
        let c = stage_cost(&dvector![1.0, 1.0, 1.0], &dvector![0.0, 0.0], &w);
        assert!((c - 1.5).abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_reduces_to_costate_dot_rhs_at_zero_cost() {
        let model = AffineParamModel::lorenz();
        let w = benchmark_weights();
        let prior = dvector![0.0, 0.0];
        let c = ctx(&model, &w, &prior, RegressorMode::Observer);
        let x = dvector![-3.0, -3.0, 15.0];
        let h = c.hamiltonian(&x, &dvector![1.0, 1.0, 1.0], &dvector![0.0, 0.0], &x);
        assert!((h - -27.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_deviation_hand_value() {
        let model = AffineParamModel::lorenz();
        let w = benchmark_weights();
        let prior = dvector![0.0, 0.0];
        let c = ctx(&model, &w, &prior, RegressorMode::Observer);
        let x = dvector![-3.0, -3.0, 15.0];
        let dev = c.stationary_theta_dev(&dvector![0.0, 0.0, 0.0], &x, &dvector![1.0, 1.0, 1.0]);
        assert!((dev - dvector![0.0, 15.0]).norm() < 1e-14);
    }

    #[test]
    fn state_grad_matches_finite_differences_both_modes() {
        let model = AffineParamModel::lorenz();
        let w = benchmark_weights();
        let prior = dvector![1.0, 0.5];
        let x = dvector![-2.0, 3.0, 18.0];
        let lambda = dvector![0.4, -0.2, 1.1];
        let dev = dvector![2.0, -0.3];
        for mode in [RegressorMode::Observer, RegressorMode::General] {
            let c = ctx(&model, &w, &prior, mode);
            let y = dvector![-1.0, 2.5, 16.0];
            let analytic = c.hamiltonian_state_grad(&y, &lambda, &dev, &x);
            let fd = fd_gradient(|v| c.hamiltonian(v, &lambda, &dev, &x), &y);
            assert!(
                (&analytic - &fd).norm() < 1e-6 * analytic.norm().max(1.0),
                "{mode:?}: grad mismatch {analytic:?} vs {fd:?}"
            );
        }
    }

    #[test]
    fn theta_state_cross_matches_finite_differences() {
        let model = AffineParamModel::lorenz();
        let w = benchmark_weights();
        let prior = dvector![0.0, 0.0];
        let c = ctx(&model, &w, &prior, RegressorMode::General);
        let y = dvector![1.3, -0.8, 9.0];
        let lambda = dvector![0.7, -1.2, 0.5];
        let analytic = c.theta_state_cross(&y, &lambda);
        let fd = fd_jacobian(|v| model.eval_d(v).transpose() * &lambda, &y, 2);
        assert!((&analytic - &fd).norm() < 1e-7);

        let obs = ctx(&model, &w, &prior, RegressorMode::Observer);
        assert_eq!(obs.theta_state_cross(&y, &lambda), DMatrix::zeros(2, 3));
    }

    #[test]
    fn observer_blocks_hand_values() {
        let model = AffineParamModel::lorenz();
        let w = benchmark_weights();
        let prior = dvector![0.0, 0.0];
        let c = ctx(&model, &w, &prior, RegressorMode::Observer);
        let x = dvector![-3.0, -3.0, 15.0];
        let b = c.sweep_blocks(&dvector![0.0, 0.0, 0.0], &dvector![1.0, 1.0, 1.0], &dvector![0.0, 0.0], &x);
        assert_eq!(b.g, DMatrix::zeros(3, 3));
        let l_expect = DMatrix::from_diagonal(&dvector![0.0, 0.0, 225.0]);
        assert!((&b.l - &l_expect).norm() < 1e-12);
        assert!((&b.k - DMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn general_blocks_are_symmetric_where_required() {
        let model = AffineParamModel::lorenz();
        let w = benchmark_weights();
        let prior = dvector![3.0, 1.0];
        let c = ctx(&model, &w, &prior, RegressorMode::General);
        let y = dvector![2.0, -5.0, 22.0];
        let x = dvector![1.8, -4.6, 21.0];
        let lambda = dvector![0.3, 0.9, -0.6];
        let dev = c.stationary_theta_dev(&y, &x, &lambda);
        let b = c.sweep_blocks(&y, &lambda, &dev, &x);
        assert!(is_symmetric(&b.l, 1e-12));
        assert!(is_symmetric(&b.k, 1e-12));
        // L is PSD: x'Lx >= 0 on a few probes
        for probe in [dvector![1.0, 0.0, 0.0], dvector![-0.3, 0.7, 0.2]] {
            let v = (probe.transpose() * &b.l * &probe)[(0, 0)];
            assert!(v >= -1e-12, "L must be positive semidefinite, got {v}");
        }
    }

    #[test]
    fn horizon_schedule_benchmark_values() {
        let s = HorizonSchedule::new(0.5, 0.1).unwrap();
        let (t0, dt0) = s.at(0.0);
        assert_eq!(t0, 0.0);
        assert!((dt0 - 0.05).abs() < 1e-15);
        let (t10, dt10) = s.at(10.0);
        assert!((t10 - 0.31606027941427883).abs() < 1e-15);
        assert!((dt10 - 0.018393972058572117).abs() < 1e-15);
        assert!(HorizonSchedule::new(0.0, 0.1).is_err());
        assert!(HorizonSchedule::new(0.5, -1.0).is_err());
    }

    #[test]
    fn prior_resolution() {
        let fixed = PriorSpec::fixed(dvector![1.0, 2.0]);
        assert_eq!(fixed.resolve(&dvector![9.0, 9.0]), dvector![1.0, 2.0]);
        let tracking = PriorSpec::tracking(dvector![0.0, 0.0]);
        assert_eq!(tracking.resolve(&dvector![9.0, 9.0]), dvector![9.0, 9.0]);
    }

    proptest! {
        #[test]
        fn stationarity_residual_vanishes(
            lx in -20.0_f64..20.0, ly in -20.0_f64..20.0, lz in -20.0_f64..20.0,
            x2 in -20.0_f64..20.0, x3 in 1.0_f64..45.0,
            rq in 0.05_f64..5.0, rr in 0.05_f64..5.0,
        ) {
            let model = AffineParamModel::lorenz();
            let w = Weights::diagonal(&[rq, rq, rq], &[rr, 2.0 * rr]).unwrap();
            let prior = dvector![0.0, 0.0];
            let c = ctx(&model, &w, &prior, RegressorMode::Observer);
            let x = dvector![0.5, x2, x3];
            let lambda = dvector![lx, ly, lz];
            let dev = c.stationary_theta_dev(&dvector![0.0, 0.0, 0.0], &x, &lambda);
            // first-order condition: 2R·dev + Dᵀλ = 0
            let resid = w.r() * &dev * 2.0 + model.eval_d(&x).transpose() * &lambda;
            let scale = lambda.norm().max(1.0);
            prop_assert!(resid.norm() <= 1e-12 * scale, "residual {}", resid.norm());
        }

        #[test]
        fn horizon_is_monotone_and_saturates(t1 in 0.0_f64..100.0, dt in 0.001_f64..5.0) {
            let s = HorizonSchedule::new(0.5, 0.1).unwrap();
            let (a, slope_a) = s.at(t1);
            let (b, _) = s.at(t1 + dt);
            prop_assert!(b >= a);
            prop_assert!(a >= 0.0 && b <= 0.5);
            prop_assert!(slope_a >= 0.0);
        }

        #[test]
        fn stage_cost_is_positive_definite_quadratic(
            e1 in -5.0_f64..5.0, e2 in -5.0_f64..5.0, e3 in -5.0_f64..5.0,
            d1 in -5.0_f64..5.0, d2 in -5.0_f64..5.0,
        ) {
            let w = benchmark_weights();
            let e = dvector![e1, e2, e3];
            let dev = dvector![d1, d2];
            let c = stage_cost(&e, &dev, &w);
            prop_assert!(c >= 0.0);
            let scaled = stage_cost(&(&e * 2.0), &(&dev * 2.0), &w);
            prop_assert!((scaled - 4.0 * c).abs() <= 1e-9 * c.abs().max(1.0));
            if e.norm() + dev.norm() > 1e-6 {
                prop_assert!(c > 0.0);
            }
        }
    }
}
