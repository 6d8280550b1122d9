//! True-system dynamics with their projection/extension maps, and the
//! single-integrator sim model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Deterministic part `f` of the true system, bundled with `M_x` and `M_u`.
///
/// Process noise is added by the world as a position-level displacement after
/// each call to [`TrueDynamics::step`].
pub trait TrueDynamics: Send + Sync {
    fn state_dim(&self) -> usize;

    fn model_dim(&self) -> usize;

    /// `M_x`: true state to model state.
    fn project(&self, x: &[f64]) -> Vec<f64>;

    /// `M_u`: model input and current true state to true input.
    fn extend(&self, u_hat: &[f64], x: &[f64]) -> Vec<f64>;

    /// `x <- f(x, u)` over an inner step of length `h`.
    fn step(&self, x: &mut [f64], u: &[f64], h: f64);

    /// Adds a model-space displacement to the positional part of `x`.
    fn displace(&self, x: &mut [f64], displacement: &[f64]) {
        x.iter_mut().zip(displacement).for_each(|(xi, d)| *xi += d);
    }

    /// A true state at rest whose projection is `model_state`.
    fn lift(&self, model_state: &[f64]) -> Vec<f64>;
}

/// Perfect velocity tracking: the true state is the position and `M_u` is the
/// identity, so `x <- x + u h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicPlant {
    pub dim: usize,
}

impl TrueDynamics for KinematicPlant {
    fn state_dim(&self) -> usize {
        self.dim
    }

    fn model_dim(&self) -> usize {
        self.dim
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }

    fn extend(&self, u_hat: &[f64], _x: &[f64]) -> Vec<f64> {
        u_hat.to_vec()
    }

    fn step(&self, x: &mut [f64], u: &[f64], h: f64) {
        x.iter_mut().zip(u).for_each(|(xi, ui)| *xi += ui * h);
    }

    fn lift(&self, model_state: &[f64]) -> Vec<f64> {
        model_state.to_vec()
    }
}

/// Point mass `[p; v]` whose inner loop is a proportional velocity controller:
/// `M_u(u_hat, x) = clamp((u_hat - v) / tau, +-max_accel)`, integrated with
/// semi-implicit Euler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityTrackingPlant {
    pub dim: usize,
    pub time_constant: f64,
    pub max_accel: Option<f64>,
}

impl VelocityTrackingPlant {
    pub fn new(dim: usize, time_constant: f64, max_accel: Option<f64>) -> Result<Self> {
        if !(time_constant.is_finite() && time_constant > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tracking time constant must be positive, got {time_constant}"
            )));
        }
        if let Some(a) = max_accel {
            if !(a.is_finite() && a > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "acceleration limit must be positive, got {a}"
                )));
            }
        }
        Ok(Self {
            dim,
            time_constant,
            max_accel,
        })
    }

    pub fn velocity<'a>(&self, x: &'a [f64]) -> &'a [f64] {
        &x[self.dim..]
    }
}

impl TrueDynamics for VelocityTrackingPlant {
    fn state_dim(&self) -> usize {
        2 * self.dim
    }

    fn model_dim(&self) -> usize {
        self.dim
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        x[..self.dim].to_vec()
    }

    fn extend(&self, u_hat: &[f64], x: &[f64]) -> Vec<f64> {
        u_hat
            .iter()
            .zip(self.velocity(x))
            .map(|(u, v)| {
                let a = (u - v) / self.time_constant;
                match self.max_accel {
                    Some(limit) => a.clamp(-limit, limit),
                    None => a,
                }
            })
            .collect()
    }

    fn step(&self, x: &mut [f64], u: &[f64], h: f64) {
        let (p, v) = x.split_at_mut(self.dim);
        for i in 0..self.dim {
            v[i] += u[i] * h;
            p[i] += v[i] * h;
        }
    }

    fn lift(&self, model_state: &[f64]) -> Vec<f64> {
        let mut x = model_state.to_vec();
        x.extend(std::iter::repeat_n(0.0, self.dim));
        x
    }
}

/// Which true-system dynamics a world is built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PlantConfig {
    Kinematic,
    VelocityTracking {
        time_constant: f64,
        #[serde(default)]
        max_accel: Option<f64>,
    },
}

impl PlantConfig {
    pub fn build(&self, dim: usize) -> Result<Box<dyn TrueDynamics>> {
        Ok(match *self {
            Self::Kinematic => Box::new(KinematicPlant { dim }),
            Self::VelocityTracking {
                time_constant,
                max_accel,
            } => Box::new(VelocityTrackingPlant::new(dim, time_constant, max_accel)?),
        })
    }
}

/// Sim model `x_{j+1} = x_j + u_j dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleIntegrator<T> {
    pub dt: T,
}

impl<T: Scalar> SingleIntegrator<T> {
    pub fn new(dt: T) -> Result<Self> {
        if !(dt.is_finite() && dt > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "model step must be positive, got {dt}"
            )));
        }
        Ok(Self { dt })
    }

    pub fn step(&self, x: &[T], u: &[T]) -> Vec<T> {
        x.iter()
            .zip(u)
            .map(|(&xi, &ui)| xi + ui * self.dt)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn velocity_loop_matches_discrete_first_order_response() {
        let plant = VelocityTrackingPlant::new(1, 0.05, None).unwrap();
        let h = 0.001;
        let mut x = plant.lift(&[0.0]);
        let target = [0.6];
        let steps = 300;
        for _ in 0..steps {
            let u = plant.extend(&target, &x);
            plant.step(&mut x, &u, h);
        }
        // v_k = u (1 - (1 - h/tau)^k)
        let expected = 0.6 * (1.0 - (1.0 - h / 0.05f64).powi(steps));
        assert!((x[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn acceleration_limit_clamps() {
        let plant = VelocityTrackingPlant::new(2, 0.01, Some(3.0)).unwrap();
        let u = plant.extend(&[10.0, -10.0], &plant.lift(&[0.0, 0.0]));
        assert_eq!(u, vec![3.0, -3.0]);
        assert!(VelocityTrackingPlant::new(1, 0.0, None).is_err());
        assert!(VelocityTrackingPlant::new(1, 0.1, Some(-1.0)).is_err());
    }

    #[test]
    fn single_integrator_step() {
        let m = SingleIntegrator::new(0.02).unwrap();
        assert_eq!(m.step(&[1.0, 2.0], &[0.5, -1.0]), vec![1.01, 1.98]);
        assert!(SingleIntegrator::new(0.0).is_err());
    }
}
