//! True system / sim model pair and disturbance-norm sampling.
//!
//! A [`World`] owns a true system (dynamics plus `M_x`, `M_u`), a disturbance
//! field, and a random stream. One model step holds the model input for `K`
//! inner steps of length `dt / K`, then compares the projected end state with
//! the single-integrator prediction:
//!
//! ```text
//! O(x, u)  = M_x(x_K)
//! delta_j  = | O(x_Kj, u) - (M_x(x_Kj) + u dt) |
//! ```

mod field;
mod plant;
mod rng;

pub use field::DisturbanceField;
pub use plant::{
    KinematicPlant, PlantConfig, SingleIntegrator, TrueDynamics, VelocityTrackingPlant,
};
pub use rng::{rng_stream, SimRng};

use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};
use crate::geometry::BoxSet;
use crate::scalar::{euclidean, Scalar};

pub const WORLD_SCHEMA_VERSION: u32 = 1;

/// One disturbance-norm sample and the model state it is indexed by.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Scalar"))]
pub struct DisturbanceRecord<T: Scalar> {
    pub model_state: Vec<T>,
    pub norm_sample: T,
    pub model_time_index: usize,
}

impl<T: Scalar> DisturbanceRecord<T> {
    pub fn new(model_state: Vec<T>, norm_sample: T, model_time_index: usize) -> Result<Self> {
        if !(norm_sample.is_finite() && norm_sample >= T::zero()) {
            return Err(Error::InvalidInput(format!(
                "disturbance norm must be finite and non-negative, got {norm_sample}"
            )));
        }
        if model_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite model state {model_state:?}"
            )));
        }
        Ok(Self {
            model_state,
            norm_sample,
            model_time_index,
        })
    }
}

fn default_inflation() -> f64 {
    0.5
}

/// Serializable description of a world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub schema_version: u32,
    pub plant: PlantConfig,
    /// Model step `dt` in seconds.
    pub model_dt: f64,
    /// Inner steps per model step, `K`.
    pub time_dilation: usize,
    pub state_box: BoxSet<f64>,
    pub input_box: BoxSet<f64>,
    #[serde(default)]
    pub field: DisturbanceField,
    /// Safety envelope is the state box with half-widths scaled by `1 + this`.
    #[serde(default = "default_inflation")]
    pub envelope_inflation: f64,
}

impl Default for WorldConfig {
    /// Quadrotor-like world: velocity-tracking point mass at 1 kHz under a 50 Hz
    /// single-integrator model on `[-2,2]^2 x [1.2,2]`, inputs in
    /// `[-0.8,0.8]^2 x [-0.5,0.5]`, no disturbances.
    fn default() -> Self {
        Self {
            schema_version: WORLD_SCHEMA_VERSION,
            plant: PlantConfig::VelocityTracking {
                time_constant: 0.05,
                max_accel: None,
            },
            model_dt: 0.02,
            time_dilation: 20,
            state_box: BoxSet {
                lower: vec![-2.0, -2.0, 1.2],
                upper: vec![2.0, 2.0, 2.0],
            },
            input_box: BoxSet {
                lower: vec![-0.8, -0.8, -0.5],
                upper: vec![0.8, 0.8, 0.5],
            },
            field: DisturbanceField::None,
            envelope_inflation: default_inflation(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != WORLD_SCHEMA_VERSION {
            return Err(Error::SchemaVersion {
                expected: WORLD_SCHEMA_VERSION,
                found: self.schema_version,
            });
        }
        if !(self.model_dt.is_finite() && self.model_dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "model step must be positive, got {}",
                self.model_dt
            )));
        }
        if self.time_dilation == 0 {
            return Err(Error::InvalidParameter(
                "time dilation K must be >= 1".into(),
            ));
        }
        if !(self.envelope_inflation.is_finite() && self.envelope_inflation >= 0.0) {
            return Err(Error::InvalidParameter(
                "envelope inflation must be >= 0".into(),
            ));
        }
        self.state_box.validate()?;
        self.input_box.validate()?;
        check_dims(self.state_box.dim(), self.input_box.dim())?;
        self.field.validate(self.state_box.dim())
    }

    pub fn model_dim(&self) -> usize {
        self.state_box.dim()
    }

    pub fn inner_dt(&self) -> f64 {
        self.model_dt / self.time_dilation as f64
    }
}

/// True system, maps, disturbance field and random stream.
pub struct World {
    config: WorldConfig,
    plant: Box<dyn TrueDynamics>,
    model: SingleIntegrator<f64>,
    envelope: BoxSet<f64>,
    rng: SimRng,
    state: Vec<f64>,
    clock: usize,
}

impl std::fmt::Debug for World {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("World")
            .field("config", &self.config)
            .field("state", &self.state)
            .field("clock", &self.clock)
            .finish_non_exhaustive()
    }
}

impl World {
    /// Builds a world at rest at the center of the state box.
    pub fn new(config: WorldConfig, seed: u64, stream_id: u64) -> Result<Self> {
        config.validate()?;
        let dim = config.model_dim();
        let plant = config.plant.build(dim)?;
        let model = SingleIntegrator::new(config.model_dt)?;
        let envelope = config.state_box.inflate(config.envelope_inflation);
        let state = plant.lift(&config.state_box.center());
        Ok(Self {
            config,
            plant,
            model,
            envelope,
            rng: rng_stream(seed, stream_id),
            state,
            clock: 0,
        })
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn model(&self) -> &SingleIntegrator<f64> {
        &self.model
    }

    pub fn plant(&self) -> &dyn TrueDynamics {
        self.plant.as_ref()
    }

    pub fn true_state(&self) -> &[f64] {
        &self.state
    }

    pub fn model_state(&self) -> Vec<f64> {
        self.plant.project(&self.state)
    }

    /// Model steps taken since the last reset.
    pub fn clock(&self) -> usize {
        self.clock
    }

    /// Places the true system at rest at `model_state` and zeroes the clock.
    pub fn reset_at(&mut self, model_state: &[f64]) -> Result<()> {
        check_dims(self.config.model_dim(), model_state.len())?;
        self.state = self.plant.lift(model_state);
        self.clock = 0;
        Ok(())
    }

    pub fn set_true_state(&mut self, state: Vec<f64>) -> Result<()> {
        check_dims(self.plant.state_dim(), state.len())?;
        self.state = state;
        Ok(())
    }

    /// Restarts the random stream.
    pub fn reseed(&mut self, seed: u64, stream_id: u64) {
        self.rng = rng_stream(seed, stream_id);
    }

    fn check_input(&self, u_hat: &[f64]) -> Result<()> {
        check_dims(self.config.model_dim(), u_hat.len())?;
        let tol = 1e-12;
        let inside = u_hat
            .iter()
            .zip(
                self.config
                    .input_box
                    .lower
                    .iter()
                    .zip(&self.config.input_box.upper),
            )
            .all(|(u, (l, h))| *u >= l - tol && *u <= h + tol);
        if inside {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "model input {u_hat:?} outside the input box"
            )))
        }
    }

    /// Runs `K` inner steps from `x0` with `u_hat` held, returning the final true state.
    pub fn advance(&mut self, x0: &[f64], u_hat: &[f64]) -> Result<Vec<f64>> {
        self.check_input(u_hat)?;
        check_dims(self.plant.state_dim(), x0.len())?;
        let h = self.config.inner_dt();
        let mut x = x0.to_vec();
        for _ in 0..self.config.time_dilation {
            let u = self.plant.extend(u_hat, &x);
            self.plant.step(&mut x, &u, h);
            let position = self.plant.project(&x);
            let xi = self.config.field.displacement(&position, h, &mut self.rng);
            self.plant.displace(&mut x, &xi);
            let projected = self.plant.project(&x);
            if !self.envelope.contains(&projected) || projected.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence {
                    step: self.clock,
                    state: projected,
                });
            }
        }
        Ok(x)
    }

    /// Observation function `O(x0, u_hat) = M_x(x_K)`.
    pub fn observe(&mut self, x0: &[f64], u_hat: &[f64]) -> Result<Vec<f64>> {
        let x = self.advance(x0, u_hat)?;
        Ok(self.plant.project(&x))
    }

    /// One disturbance-norm sample from true state `x_kj` under `u_hat`, plus the
    /// true state reached. Indexed by the world clock; does not advance it.
    pub fn disturbance_norm_sample(
        &mut self,
        x_kj: &[f64],
        u_hat: &[f64],
    ) -> Result<(DisturbanceRecord<f64>, Vec<f64>)> {
        let model_state = self.plant.project(x_kj);
        let next = self.advance(x_kj, u_hat)?;
        let observed = self.plant.project(&next);
        let predicted = self.model.step(&model_state, u_hat);
        let norm = euclidean(&observed, &predicted);
        let record = DisturbanceRecord::new(model_state, norm, self.clock)?;
        Ok((record, next))
    }

    /// Advances the world by one model step from its current state.
    pub fn step(&mut self, u_hat: &[f64]) -> Result<DisturbanceRecord<f64>> {
        let state = std::mem::take(&mut self.state);
        match self.disturbance_norm_sample(&state, u_hat) {
            Ok((record, next)) => {
                self.state = next;
                self.clock += 1;
                Ok(record)
            }
            Err(e) => {
                self.state = state;
                Err(e)
            }
        }
    }
}

/// Velocity-tracking quadrotor stand-in. Rejects configs whose plant is not
/// [`PlantConfig::VelocityTracking`].
pub fn build_quadrotor_like_world(config: WorldConfig, seed: u64) -> Result<World> {
    if !matches!(config.plant, PlantConfig::VelocityTracking { .. }) {
        return Err(Error::InvalidParameter(
            "quadrotor-like world needs a velocity-tracking plant".into(),
        ));
    }
    World::new(config, seed, 0)
}

/// Reads a world config from JSON.
pub fn load_world_config(path: &std::path::Path) -> Result<WorldConfig> {
    let config: WorldConfig =
        serde_json::from_reader(std::io::BufReader::new(std::fs::File::open(path)?))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kinematic(field: DisturbanceField) -> WorldConfig {
        WorldConfig {
            plant: PlantConfig::Kinematic,
            field,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn noise_free_integrator_observation() {
        let mut world = World::new(kinematic(DisturbanceField::None), 0, 0).unwrap();
        assert!((world.config().inner_dt() - 0.001).abs() < 1e-15);
        let x0 = [0.0, 0.0, 1.5];
        let y = world.observe(&x0, &[0.5, 0.0, 0.0]).unwrap();
        assert!((y[0] - 0.01).abs() < 1e-12);
        assert!(y[1].abs() < 1e-15 && (y[2] - 1.5).abs() < 1e-15);
        assert_eq!(world.observe(&x0, &[0.0; 3]).unwrap(), x0.to_vec());
    }

    #[test]
    fn wind_adds_accumulated_drift() {
        let w = 0.3;
        let field = DisturbanceField::ConstantWind {
            velocity: vec![w, 0.0, 0.0],
            gust_stddev: 0.0,
        };
        let mut world = World::new(kinematic(field), 0, 0).unwrap();
        let x0 = [0.2, -0.1, 1.5];
        let u = [0.5, 0.1, 0.0];
        let y = world.observe(&x0, &u).unwrap();
        // 20 steps of (u + w) * 0.001
        let expected = [0.2 + (0.5 + w) * 0.02, -0.1 + 0.1 * 0.02, 1.5];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        let (rec, _) = world.disturbance_norm_sample(&x0, &u).unwrap();
        assert!((rec.norm_sample - w * 0.02).abs() < 1e-12);
    }

    #[test]
    fn matched_world_has_zero_disturbance() {
        let mut world = World::new(kinematic(DisturbanceField::None), 0, 0).unwrap();
        world.reset_at(&[0.5, 0.5, 1.6]).unwrap();
        for _ in 0..10 {
            let rec = world.step(&[0.3, -0.2, 0.1]).unwrap();
            assert!(rec.norm_sample < 1e-14);
        }
        assert_eq!(world.clock(), 10);
    }

    #[test]
    fn k_one_identity_matches_model_exactly() {
        let cfg = WorldConfig {
            time_dilation: 1,
            ..kinematic(DisturbanceField::None)
        };
        let mut world = World::new(cfg, 0, 0).unwrap();
        let x = [0.3, -0.4, 1.7];
        let u = [0.1, 0.2, -0.3];
        let y = world.observe(&x, &u).unwrap();
        assert_eq!(y, world.model().step(&x, &u));
    }

    #[test]
    fn input_outside_box_is_rejected() {
        let mut world = World::new(WorldConfig::default(), 0, 0).unwrap();
        let x0 = world.true_state().to_vec();
        assert!(matches!(
            world.observe(&x0, &[0.9, 0.0, 0.0]),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn leaving_envelope_diverges() {
        let field = DisturbanceField::ConstantWind {
            velocity: vec![500.0, 0.0, 0.0],
            gust_stddev: 0.0,
        };
        let mut world = World::new(kinematic(field), 0, 0).unwrap();
        let err = world.step(&[0.0; 3]).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }));
        assert!(err.is_numerical());
        assert_eq!(world.clock(), 0);
    }

    #[test]
    fn quadrotor_world_requires_velocity_plant() {
        assert!(build_quadrotor_like_world(kinematic(DisturbanceField::None), 1).is_err());
        let world = build_quadrotor_like_world(WorldConfig::default(), 1).unwrap();
        assert_eq!(world.true_state().len(), 6);
        assert_eq!(world.model_state(), vec![0.0, 0.0, 1.6]);
    }

    #[test]
    fn config_validation() {
        let no_steps = WorldConfig {
            time_dilation: 0,
            ..WorldConfig::default()
        };
        assert!(no_steps.validate().is_err());
        let planar_input = WorldConfig {
            input_box: BoxSet::symmetric(&[1.0, 1.0]).unwrap(),
            ..WorldConfig::default()
        };
        assert!(planar_input.validate().is_err());
        let future = WorldConfig {
            schema_version: 7,
            ..WorldConfig::default()
        };
        assert!(matches!(
            future.validate(),
            Err(Error::SchemaVersion { .. })
        ));
    }

    #[test]
    fn negative_norm_record_rejected() {
        assert!(DisturbanceRecord::new(vec![0.0], -1.0, 0).is_err());
        assert!(DisturbanceRecord::new(vec![f64::NAN], 1.0, 0).is_err());
    }
}
