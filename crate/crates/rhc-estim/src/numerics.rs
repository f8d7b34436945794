//! Dense vector/matrix aliases, the horizon grid, and the small numeric
//! kernels (classical RK4, SPD solves, central differences) everything else
//! is built on.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// State of the drive or response system (length n).
pub type StateVec = DVector<f64>;
/// Parameter vector (length p).
pub type ParamVec = DVector<f64>;
/// Costate vector (length n).
pub type CostateVec = DVector<f64>;
/// Dense real matrix.
pub type DenseMat = DMatrix<f64>;

/// True when every entry is finite.
pub fn vec_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// True when every entry is finite.
pub fn mat_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// True when `m` is square and symmetric to a relative tolerance.
pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

/// Uniform grid over the moving horizon `[0, T]`.
///
/// The segment count is `N = max(1, round(T / dtau_target))` with step
/// `h = T / N`, so `h` never exceeds twice the target resolution. Solver
/// internals also sample the half grid (`T·k/2N`) so RK4 stage reference
/// data is available exactly, without interpolating the drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauGrid {
    horizon: f64,
    segments: usize,
    step: f64,
}

impl TauGrid {
    /// Build a grid over `[0, horizon]`. Requires `horizon > 0` and a
    /// positive target step; a zero-length horizon has no grid (callers
    /// special-case it).
    pub fn new(horizon: f64, dtau_target: f64) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "horizon must be positive and finite, got {horizon}"
            )));
        }
        if !(dtau_target > 0.0) || !dtau_target.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "dtau_target must be positive and finite, got {dtau_target}"
            )));
        }
        let segments = ((horizon / dtau_target).round() as usize).max(1);
        Ok(TauGrid {
            horizon,
            segments,
            step: horizon / segments as f64,
        })
    }

    /// Horizon length T.
    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of segments N (the grid has N+1 nodes).
    pub fn segments(&self) -> usize {
        self.segments
    }

    /// Number of nodes, N+1.
    pub fn node_count(&self) -> usize {
        self.segments + 1
    }

    /// Step h = T/N.
    pub fn step(&self) -> f64 {
        self.step
    }

    /// Node position `τ_i = T·(i/N)`; `node(N)` is exactly `T`.
    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.segments);
        self.horizon * (i as f64 / self.segments as f64)
    }

    /// Half-grid sample position `T·(k/2N)` for `k = 0..=2N`.
    pub fn half_tau(&self, k: usize) -> f64 {
        debug_assert!(k <= 2 * self.segments);
        self.horizon * (k as f64 / (2 * self.segments) as f64)
    }

}

/// One classical RK4 step of an autonomous field. `h = 0` returns the state
/// unchanged; `h < 0` integrates in reverse (used by the backward sweep).
pub fn rk4_step<F>(mut field: F, state: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let k1 = field(state);
    let k2 = field(&(state + &k1 * (h / 2.0)));
    let k3 = field(&(state + &k2 * (h / 2.0)));
    let k4 = field(&(state + &k3 * h));
    if !(vec_finite(&k1) && vec_finite(&k2) && vec_finite(&k3) && vec_finite(&k4)) {
        return Err(Error::NonFiniteDerivative);
    }
    let next = state + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    if !vec_finite(&next) {
        return Err(Error::NonFiniteDerivative);
    }
    Ok(next)
}

/// Solve `M x = b` for symmetric positive definite `M` via Cholesky.
pub fn solve_spd(m: &DenseMat, b: &DVector<f64>) -> Result<DVector<f64>> {
    if m.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "solve_spd right-hand side",
            expected: m.nrows(),
            got: b.len(),
        });
    }
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite {
            name: "linear system matrix".into(),
        })?;
    Ok(chol.solve(b))
}

/// Step size for central differences around `y`: `1e-6 · max(1, ‖y‖)`.
pub fn fd_step(y: &DVector<f64>) -> f64 {
    1e-6 * y.norm().max(1.0)
}

/// Central-difference Jacobian of a vector map at `y` (rows follow the
/// output, columns the perturbed input coordinate).
pub fn fd_jacobian<F>(f: F, y: &DVector<f64>, out_dim: usize) -> DenseMat
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    fd_jacobian_with_step(f, y, out_dim, fd_step(y))
}

/// `fd_jacobian` with an explicit step, for callers that difference an
/// already-approximate map and need a coarser step to beat the noise.
pub fn fd_jacobian_with_step<F>(mut f: F, y: &DVector<f64>, out_dim: usize, h: f64) -> DenseMat
where
    F: FnMut(&DVector<f64>) -> DVector<f64>,
{
    let mut jac = DMatrix::zeros(out_dim, y.len());
    let mut probe = y.clone();
    for j in 0..y.len() {
        probe[j] = y[j] + h;
        let hi = f(&probe);
        probe[j] = y[j] - h;
        let lo = f(&probe);
        probe[j] = y[j];
        let col = (hi - lo) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

/// Central-difference gradient of a scalar map at `y`.
pub fn fd_gradient<F>(mut f: F, y: &DVector<f64>) -> DVector<f64>
where
    F: FnMut(&DVector<f64>) -> f64,
{
    let h = fd_step(y);
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

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{dmatrix, dvector};
    use proptest::prelude::*;

    #[test]
    fn rk4_matches_exponential_series() {
        // One step of y' = -y from y = 1 with h = 0.1 reproduces the
        // 4th-order Taylor value 0.9048375.
        let next = rk4_step(|y| -y.clone(), &dvector![1.0], 0.1).unwrap();
        assert!(
            (next[0] - 0.9048375).abs() < 1e-15,
            "rk4 step gave {}, expected 0.9048375",
            next[0]
        );
    }

    #[test]
    fn rk4_zero_step_is_identity() {
        let s = dvector![1.5, -2.0];
        let next = rk4_step(|y| y * 3.0, &s, 0.0).unwrap();
        assert_eq!(next, s);
    }

    #[test]
    fn rk4_negative_step_reverses() {
        // forward/backward round trip agrees to the O(h^5) local error
        let s = dvector![1.0, 0.5];
        let fwd = rk4_step(|y| dvector![y[1], -y[0]], &s, 0.05).unwrap();
        let back = rk4_step(|y| dvector![y[1], -y[0]], &fwd, -0.05).unwrap();
        assert!((back - &s).norm() < 1e-8);
    }

    #[test]
    fn rk4_rejects_non_finite_field() {
        let err = rk4_step(|_| dvector![f64::NAN], &dvector![1.0], 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFiniteDerivative));
    }

    #[test]
    fn rk4_is_fourth_order() {
        // Halving the step on y' = -y over [0, 1] must cut the global error
        // by roughly 2^4.
        let run = |steps: usize| {
            let h = 1.0 / steps as f64;
            let mut y = dvector![1.0];
            for _ in 0..steps {
                y = rk4_step(|v| -v.clone(), &y, h).unwrap();
            }
            (y[0] - (-1.0_f64).exp()).abs()
        };
        let ratio = run(50) / run(100);
        assert!(
            (12.0..24.0).contains(&ratio),
            "error ratio {ratio} not consistent with 4th order"
        );
    }

    #[test]
    fn solve_spd_identity_returns_rhs() {
        let x = solve_spd(&DenseMat::identity(3, 3), &dvector![1.0, -2.0, 3.0]).unwrap();
        assert_eq!(x, dvector![1.0, -2.0, 3.0]);
    }

    #[test]
    fn solve_spd_two_by_two() {
        let m = dmatrix![4.0, 1.0; 1.0, 3.0];
        let x = solve_spd(&m, &dvector![1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn solve_spd_rejects_negative_definite() {
        let m = dmatrix![-1.0, 0.0; 0.0, -2.0];
        let err = solve_spd(&m, &dvector![1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn tau_grid_benchmark_resolution() {
        let g = TauGrid::new(0.5, 0.005).unwrap();
        assert_eq!(g.segments(), 100);
        assert!((g.step() - 0.005).abs() < 1e-15);
        assert_eq!(g.node(0), 0.0);
        assert_eq!(g.node(100), 0.5);
    }

    #[test]
    fn tau_grid_short_horizon_keeps_one_segment() {
        let g = TauGrid::new(0.0049, 0.005).unwrap();
        assert_eq!(g.segments(), 1);
        assert!((g.step() - 0.0049).abs() < 1e-18);
    }

    #[test]
    fn tau_grid_rejects_degenerate_inputs() {
        assert!(TauGrid::new(0.0, 0.005).is_err());
        assert!(TauGrid::new(-1.0, 0.005).is_err());
        assert!(TauGrid::new(1.0, 0.0).is_err());
        assert!(TauGrid::new(f64::NAN, 0.005).is_err());
    }

    #[test]
    fn fd_jacobian_matches_analytic() {
        let f = |y: &DVector<f64>| dvector![y[0] * y[1], y[0].sin()];
        let y = dvector![1.2, -0.7];
        let jac = fd_jacobian(f, &y, 2);
        let exact = dmatrix![y[1], y[0]; y[0].cos(), 0.0];
        assert!((jac - exact).norm() < 1e-8);
    }

    proptest! {
        #[test]
        fn tau_grid_step_bounded_by_twice_target(
            horizon in 1e-6_f64..10.0,
            dtau in 1e-4_f64..0.1,
        ) {
            let g = TauGrid::new(horizon, dtau).unwrap();
            prop_assert!(g.step() <= 2.0 * dtau + 1e-15);
            prop_assert!(g.segments() >= 1);
            prop_assert!((g.step() * g.segments() as f64 - horizon).abs() <= 1e-12 * horizon.max(1.0));
            // nodes are monotone and end exactly at T
            prop_assert_eq!(g.node(g.segments()), horizon);
        }

        #[test]
        fn solve_spd_residual_small(seed in 0u64..1000) {
            use rand_core::{RngCore, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut unit = || (rng.next_u64() as f64 / u64::MAX as f64) * 2.0 - 1.0;
            let a = DenseMat::from_fn(4, 4, |_, _| unit());
            let m = &a * a.transpose() + DenseMat::identity(4, 4) * 1e-3;
            let b = DVector::from_fn(4, |_, _| unit());
            let x = solve_spd(&m, &b).unwrap();
            prop_assert!((m * x - &b).norm() <= 1e-10 * b.norm().max(1.0));
        }
    }
}
