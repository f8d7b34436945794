//! Named experiment definitions: the built-in scenario library, a TOML file
//! format for user-defined scenarios, and the registry that maps system
//! names to model constructors.
//!
//! A scenario pins everything a run needs — system, initial states, true
//! parameter profile, optional drive noise, estimator configuration, run
//! length, and seed — so results are reproducible from one small text file.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{run_estimation, EstimatorConfig, RunOutcome};
use crate::model::{
    AffineParamModel, NoiseSpec, ParameterProfile, ProfileTable, RegressorMode,
};
use crate::numerics::{DenseMat, StateVec};
use crate::ocp::{HorizonSchedule, PriorSpec, Weights};

/// Maps system names appearing in scenario files to model constructors.
/// `lorenz` is always registered; library users add their own systems with
/// [`register`](Self::register).
#[derive(Clone)]
pub struct ModelRegistry {
    builders: BTreeMap<String, Arc<dyn Fn() -> AffineParamModel + Send + Sync>>,
}

impl ModelRegistry {
    pub fn with_builtins() -> Self {
        let mut reg = ModelRegistry {
            builders: BTreeMap::new(),
        };
        reg.register("lorenz", AffineParamModel::lorenz);
        reg
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        builder: impl Fn() -> AffineParamModel + Send + Sync + 'static,
    ) {
        self.builders.insert(name.into(), Arc::new(builder));
    }

    pub fn build(&self, name: &str) -> Result<AffineParamModel> {
        self.builders
            .get(name)
            .map(|b| b())
            .ok_or_else(|| {
                Error::Scenario(format!(
                    "unknown system '{name}' (registered: {})",
                    self.names().join(", ")
                ))
            })
    }

    pub fn names(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }
}

impl Default for ModelRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl std::fmt::Debug for ModelRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRegistry")
            .field("systems", &self.names())
            .finish()
    }
}

/// One fully specified experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// System name, resolved through a [`ModelRegistry`].
    pub system: String,
    pub x0: StateVec,
    pub y0: StateVec,
    pub theta_true: ParameterProfile,
    pub noise: Option<NoiseSpec>,
    pub estimator: EstimatorConfig,
    pub t_end: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn mode(&self) -> RegressorMode {
        self.estimator.mode
    }

    /// Reseed the run: sets the scenario seed and, when noise is present,
    /// the noise stream's seed with it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        if let Some(noise) = &mut self.noise {
            noise.seed = seed;
        }
        self
    }

    /// Internal consistency: dimensions line up, steps are positive, noise
    /// is well-formed, and the estimator configuration is valid for the
    /// scenario's system.
    pub fn validate(&self, registry: &ModelRegistry) -> Result<()> {
        let model = registry.build(&self.system)?;
        self.validate_against(&model)
    }

    fn validate_against(&self, model: &AffineParamModel) -> Result<()> {
        let n = model.state_dim();
        let p = model.param_dim();
        if self.x0.len() != n {
            return Err(Error::DimensionMismatch {
                what: "scenario x0",
                expected: n,
                got: self.x0.len(),
            });
        }
        if self.y0.len() != n {
            return Err(Error::DimensionMismatch {
                what: "scenario y0",
                expected: n,
                got: self.y0.len(),
            });
        }
        if self.theta_true.dim() != p {
            return Err(Error::DimensionMismatch {
                what: "parameter profile",
                expected: p,
                got: self.theta_true.dim(),
            });
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Scenario(format!(
                "t-end must be nonnegative, got {}",
                self.t_end
            )));
        }
        if let Some(noise) = &self.noise {
            noise.validate()?;
        }
        self.estimator.validate(model)
    }

    /// Build the model and run the scenario end to end.
    pub fn run(&self, registry: &ModelRegistry) -> Result<RunOutcome> {
        let model = registry.build(&self.system)?;
        self.validate_against(&model)?;
        run_estimation(
            &model,
            &self.theta_true,
            self.noise,
            self.estimator.clone(),
            self.x0.clone(),
            self.y0.clone(),
            self.t_end,
        )
    }
}

/// Names of the shipped scenarios, in presentation order.
pub const BUILTIN_NAMES: [&str; 4] = [
    "lorenz-const",
    "lorenz-tv",
    "lorenz-const-noise",
    "lorenz-tv-noise",
];

const DEFAULT_SEED: u64 = 42;

/// The estimator configuration shared by every built-in scenario.
///
/// Gains: Q = 0.5·I₃, R = 0.5·I₂, horizon T_f = 0.5 ramped at α = 0.1,
/// dt = 0.01, Δτ = 0.005, observer coupling, prior tracking the running
/// estimate. The stabilizer is A_s = 100·I — the largest gain the explicit
/// Euler continuation update tolerates at dt = 0.01 (the per-step factor is
/// 1 − dt·A_s; beyond 1/dt the update overshoots and chaotic bursts ratchet
/// it into divergence).
fn builtin_estimator() -> EstimatorConfig {
    EstimatorConfig {
        weights: Weights::diagonal(&[0.5, 0.5, 0.5], &[0.5, 0.5])
            .expect("built-in weights are SPD"),
        schedule: HorizonSchedule::new(0.5, 0.1).expect("built-in schedule is valid"),
        stabilizer: DMatrix::identity(3, 3) * 100.0,
        dt: 0.01,
        dtau_target: 0.005,
        mode: RegressorMode::Observer,
        prior: PriorSpec::tracking(DVector::zeros(2)),
    }
}

fn builtin_noise() -> NoiseSpec {
    NoiseSpec {
        power: 4e-4,
        sample_interval: 0.01,
        seed: DEFAULT_SEED,
    }
}

/// Look up a built-in scenario by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    let theta_const = ParameterProfile::Constant(DVector::from_row_slice(&[10.0, 8.0 / 3.0]));
    let theta_tv = ParameterProfile::DecayingSine {
        amplitude: 10.0,
        fixed: DVector::from_row_slice(&[8.0 / 3.0]),
    };
    let x0 = DVector::from_row_slice(&[-3.0, -3.0, 15.0]);
    let y0_const = DVector::from_row_slice(&[-10.0, -10.0, 22.0]);
    let y0_tv = DVector::from_row_slice(&[-6.0, -6.0, 22.0]);

    let (theta_true, y0, noise) = match name {
        "lorenz-const" => (theta_const, y0_const, None),
        "lorenz-tv" => (theta_tv, y0_tv, None),
        "lorenz-const-noise" => (theta_const, y0_const, Some(builtin_noise())),
        "lorenz-tv-noise" => (theta_tv, y0_tv, Some(builtin_noise())),
        _ => return None,
    };
    Some(Scenario {
        name: name.to_string(),
        system: "lorenz".to_string(),
        x0,
        y0,
        theta_true,
        noise,
        estimator: builtin_estimator(),
        t_end: 50.0,
        seed: DEFAULT_SEED,
    })
}

/// Resolve a scenario reference: a built-in name first, otherwise a path to
/// a TOML file.
pub fn parse_scenario(reference: &str) -> Result<Scenario> {
    if let Some(s) = builtin(reference) {
        return Ok(s);
    }
    let path = Path::new(reference);
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: reference.to_string(),
        source,
    })?;
    parse_scenario_str(&text)
}

/// Parse a scenario from TOML text.
pub fn parse_scenario_str(text: &str) -> Result<Scenario> {
    let file: ScenarioFile =
        toml::from_str(text).map_err(|e| Error::Scenario(format!("parse error: {e}")))?;
    file.assemble()
}

/// Serialize a scenario to TOML that [`parse_scenario_str`] reads back.
pub fn serialize_scenario(scenario: &Scenario) -> String {
    let file = ScenarioFile::from_scenario(scenario);
    toml::to_string_pretty(&file).expect("scenario serialization is infallible")
}

/// Matrix shorthand: a scalar means `s·I`, a vector a diagonal, nested
/// arrays full rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl MatrixSpec {
    /// Realize the matrix at dimension `dim`.
    pub fn to_matrix(&self, dim: usize, what: &str) -> Result<DenseMat> {
        match self {
            MatrixSpec::Scalar(s) => Ok(DMatrix::identity(dim, dim) * *s),
            MatrixSpec::Diagonal(d) => {
                if d.len() != dim {
                    return Err(Error::Scenario(format!(
                        "{what}: diagonal has {} entries, system needs {dim}",
                        d.len()
                    )));
                }
                Ok(DMatrix::from_diagonal(&DVector::from_row_slice(d)))
            }
            MatrixSpec::Full(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Scenario(format!(
                        "{what}: expected a {dim}x{dim} matrix"
                    )));
                }
                Ok(DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }

    fn from_matrix(m: &DenseMat) -> Self {
        MatrixSpec::Full(
            (0..m.nrows())
                .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
                .collect(),
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct ScenarioFile {
    name: String,
    system: String,
    #[serde(default)]
    mode: RegressorMode,
    x0: Vec<f64>,
    y0: Vec<f64>,
    t_end: f64,
    #[serde(default = "default_seed", with = "seed_format")]
    seed: u64,
    profile: ProfileFile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    noise: Option<NoiseFile>,
    estimator: EstimatorFile,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// TOML integers stop at `i64::MAX`, so seeds in the upper half of the u64
/// range are written as decimal strings; both forms parse.
mod seed_format {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
        match i64::try_from(*seed) {
            Ok(v) => s.serialize_i64(v),
            Err(_) => s.serialize_str(&seed.to_string()),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Big(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => u64::try_from(v).map_err(|_| {
                serde::de::Error::custom(format!("seed must be nonnegative, got {v}"))
            }),
            Raw::Big(text) => text
                .parse::<u64>()
                .map_err(|e| serde::de::Error::custom(format!("seed \"{text}\": {e}"))),
        }
    }

    pub mod optional {
        use serde::{Deserializer, Serializer};

        pub fn serialize<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
            match seed {
                Some(v) => super::serialize(v, s),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
            // absence is covered by #[serde(default)]; a present key must
            // hold a valid seed
            super::deserialize(d).map(Some)
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", deny_unknown_fields)]
enum ProfileFile {
    /// θ(t) ≡ values.
    Constant { values: Vec<f64> },
    /// θ₁ = amplitude·sin(t)/(t+1), the rest fixed.
    DecayingSine { amplitude: f64, fixed: Vec<f64> },
    /// Piecewise-linear breakpoints.
    Table {
        times: Vec<f64>,
        values: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct NoiseFile {
    power: f64,
    sample_interval: f64,
    /// Defaults to the scenario seed.
    #[serde(
        default,
        skip_serializing_if = "Option::is_none",
        with = "seed_format::optional"
    )]
    seed: Option<u64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct EstimatorFile {
    weights: WeightsFile,
    horizon: HorizonSchedule,
    stabilizer: MatrixSpec,
    dt: f64,
    dtau_target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    prior: Option<PriorFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct WeightsFile {
    q: MatrixSpec,
    r: MatrixSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct PriorFile {
    /// Reference parameter vector; zeros when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<Vec<f64>>,
    #[serde(default)]
    track_estimate: bool,
}

impl ScenarioFile {
    fn assemble(self) -> Result<Scenario> {
        let n = self.x0.len();
        if n == 0 {
            return Err(Error::Scenario("x0 must not be empty".into()));
        }
        if self.y0.len() != n {
            return Err(Error::Scenario(format!(
                "y0 has {} entries, x0 has {n}",
                self.y0.len()
            )));
        }
        let theta_true = match self.profile {
            ProfileFile::Constant { values } => {
                if values.is_empty() {
                    return Err(Error::Scenario("profile.values must not be empty".into()));
                }
                ParameterProfile::Constant(DVector::from_row_slice(&values))
            }
            ProfileFile::DecayingSine { amplitude, fixed } => ParameterProfile::DecayingSine {
                amplitude,
                fixed: DVector::from_row_slice(&fixed),
            },
            ProfileFile::Table { times, values } => {
                let rows = values
                    .iter()
                    .map(|r| DVector::from_row_slice(r))
                    .collect::<Vec<_>>();
                ParameterProfile::Table(ProfileTable::new(times, rows)?)
            }
        };
        let p = theta_true.dim();

        let weights = Weights::new(
            self.estimator.weights.q.to_matrix(n, "weights.Q")?,
            self.estimator.weights.r.to_matrix(p, "weights.R")?,
        )?;
        let stabilizer = self.estimator.stabilizer.to_matrix(n, "stabilizer")?;
        let schedule = HorizonSchedule::new(self.estimator.horizon.terminal, self.estimator.horizon.rate)?;
        let prior = match self.estimator.prior {
            None => PriorSpec::zero(p),
            Some(pf) => {
                let theta = match pf.theta {
                    None => DVector::zeros(p),
                    Some(v) => {
                        if v.len() != p {
                            return Err(Error::Scenario(format!(
                                "prior.theta has {} entries, profile has {p}",
                                v.len()
                            )));
                        }
                        DVector::from_row_slice(&v)
                    }
                };
                PriorSpec {
                    theta_prior: theta,
                    track_estimate: pf.track_estimate,
                }
            }
        };
        let estimator = EstimatorConfig {
            weights,
            schedule,
            stabilizer,
            dt: self.estimator.dt,
            dtau_target: self.estimator.dtau_target,
            mode: self.mode,
            prior,
        };
        let noise = self.noise.map(|nf| NoiseSpec {
            power: nf.power,
            sample_interval: nf.sample_interval,
            seed: nf.seed.unwrap_or(self.seed),
        });
        if let Some(ns) = &noise {
            ns.validate()?;
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return Err(Error::Scenario(format!(
                "t-end must be nonnegative, got {}",
                self.t_end
            )));
        }
        for (name, v) in [("dt", estimator.dt), ("dtau-target", estimator.dtau_target)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Scenario(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Scenario {
            name: self.name,
            system: self.system,
            x0: DVector::from_row_slice(&self.x0),
            y0: DVector::from_row_slice(&self.y0),
            theta_true,
            noise,
            estimator,
            t_end: self.t_end,
            seed: self.seed,
        })
    }

    fn from_scenario(s: &Scenario) -> Self {
        let profile = match &s.theta_true {
            ParameterProfile::Constant(v) => ProfileFile::Constant {
                values: v.iter().copied().collect(),
            },
            ParameterProfile::DecayingSine { amplitude, fixed } => ProfileFile::DecayingSine {
                amplitude: *amplitude,
                fixed: fixed.iter().copied().collect(),
            },
            ParameterProfile::Table(t) => ProfileFile::Table {
                times: t.times().to_vec(),
                values: t.rows().iter().map(|r| r.iter().copied().collect()).collect(),
            },
        };
        ScenarioFile {
            name: s.name.clone(),
            system: s.system.clone(),
            mode: s.estimator.mode,
            x0: s.x0.iter().copied().collect(),
            y0: s.y0.iter().copied().collect(),
            t_end: s.t_end,
            seed: s.seed,
            profile,
            noise: s.noise.as_ref().map(|n| NoiseFile {
                power: n.power,
                sample_interval: n.sample_interval,
                seed: Some(n.seed),
            }),
            estimator: EstimatorFile {
                weights: WeightsFile {
                    q: MatrixSpec::from_matrix(s.estimator.weights.q()),
                    r: MatrixSpec::from_matrix(s.estimator.weights.r()),
                },
                horizon: s.estimator.schedule,
                stabilizer: MatrixSpec::from_matrix(&s.estimator.stabilizer),
                dt: s.estimator.dt,
                dtau_target: s.estimator.dtau_target,
                prior: Some(PriorFile {
                    theta: Some(s.estimator.prior.theta_prior.iter().copied().collect()),
                    track_estimate: s.estimator.prior.track_estimate,
                }),
            },
        }
    }
}
