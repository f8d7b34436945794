//! Online parameter estimation for nonlinear (and chaotic) systems by
//! real-time receding-horizon optimal control.
//!
//! A measured "drive" system runs with unknown parameters θ. A simulated
//! "response" copy runs alongside it with adjustable parameters, and the
//! estimator treats the parameter deviation as the control input of a
//! finite-horizon optimal control problem that penalizes synchronization
//! error against the drive. Solving that problem every sample would be far
//! too slow with iterative methods, so the solver tracks its optimality
//! system continuously instead: a stabilized continuation law keeps the
//! costate boundary residual `F = λ(T, t)` decaying while the horizon
//! slides, and each update costs one backward Riccati-style sweep plus one
//! forward integration — no iteration, no line search. The parameter
//! estimate itself drops out of the Hamiltonian's stationarity condition
//! in closed form.
//!
//! # Where to start
//!
//! The `examples/` directory is the front door; each one is a complete,
//! runnable program:
//!
//! - `estimate_constant_params` — recover a chaotic Lorenz drive's two
//!   coefficients online (the bundled `lorenz-const` benchmark).
//! - `track_time_varying_params` — follow a drifting coefficient with no
//!   structural change to the method.
//! - `estimate_under_noise` — disturbance on the drive: jittery instant
//!   estimates, clean time averages.
//! - `custom_system` — plug in your own dynamics `ẋ = A·x + f(x) + D(x)·θ`
//!   with finite-difference derivatives, and register it by name.
//! - `solver_diagnostics` — the independent oracle battery, as a library.
//! - `scenario_files` — experiments as reproducible TOML records with CSV,
//!   plot-script, and manifest artifacts.
//!
//! There is also a thin CLI over the same machinery (`rhc-estim run`,
//! `rhc-estim validate`, `rhc-estim scenario list`).
//!
//! # Module map
//!
//! - [`model`] — parameter-affine dynamics, the drive simulator, parameter
//!   profiles, drive disturbance.
//! - [`ocp`] — the finite-horizon problem: weights, Hamiltonian algebra,
//!   the closed-form update, horizon scheduling.
//! - [`sweep`] — the per-sample solver core: forward horizon field,
//!   backward sweep, continuation terminal data.
//! - [`estimator`] — the sliding-horizon loop coupling drive and response,
//!   telemetry tables.
//! - [`oracle`] — independent cross-checks (finite differences, closed-form
//!   Riccati, direct transcription, sweep consistency).
//! - [`scenario`] — named experiment definitions, TOML (de)serialization,
//!   the system registry, bundled benchmarks.
//! - [`io`] — trajectory CSV, gnuplot scripts, run manifests.
//! - [`numerics`], [`error`] — shared grid/integrator/linear-algebra
//!   helpers and the error type.

// `!(x > 0.0)` guards are deliberate throughout: unlike `x <= 0.0`, they also
// reject NaN, which is exactly what configuration validation wants.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimator;
pub mod io;
pub mod model;
pub mod numerics;
pub mod ocp;
pub mod oracle;
pub mod scenario;
pub mod sweep;
