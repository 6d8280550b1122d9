//! Simulated disturbance fields.
//!
//! Every field is a position-space drift velocity, optionally with gusts. Over one
//! inner step of length `h` it displaces the true position by `drift(p) * h` plus,
//! for wind fields, `gust_stddev * h * n` with `n ~ N(0, I)`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::rng::SimRng;
use crate::error::{check_dims, Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DisturbanceField {
    /// No disturbance.
    #[default]
    None,
    /// Uniform drift `velocity` with i.i.d. gaussian gust velocity per inner step.
    ConstantWind {
        velocity: Vec<f64>,
        gust_stddev: f64,
    },
    /// Upward push `gain * exp(-height / decay_height)` along the last axis.
    GroundEffect { gain: f64, decay_height: f64 },
    /// Pull `stiffness * (anchor - p)` towards a tether anchor.
    Tether { anchor: Vec<f64>, stiffness: f64 },
    /// Sum of the member fields.
    Composite { members: Vec<DisturbanceField> },
}

impl DisturbanceField {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        match self {
            Self::None => Ok(()),
            Self::ConstantWind {
                velocity,
                gust_stddev,
            } => {
                check_dims(dim, velocity.len())?;
                if !finite(velocity) || !(gust_stddev.is_finite() && *gust_stddev >= 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "invalid wind field {self:?}"
                    )));
                }
                Ok(())
            }
            Self::GroundEffect { gain, decay_height } => {
                if dim == 0
                    || !gain.is_finite()
                    || !(decay_height.is_finite() && *decay_height > 0.0)
                {
                    return Err(Error::InvalidParameter(format!(
                        "invalid ground-effect field {self:?}"
                    )));
                }
                Ok(())
            }
            Self::Tether { anchor, stiffness } => {
                check_dims(dim, anchor.len())?;
                if !finite(anchor) || !stiffness.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "invalid tether field {self:?}"
                    )));
                }
                Ok(())
            }
            Self::Composite { members } => members.iter().try_for_each(|m| m.validate(dim)),
        }
    }

    /// Deterministic drift velocity at `position`.
    pub fn drift(&self, position: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; position.len()];
        self.add_drift(position, &mut out);
        out
    }

    fn add_drift(&self, position: &[f64], out: &mut [f64]) {
        match self {
            Self::None => {}
            Self::ConstantWind { velocity, .. } => {
                out.iter_mut().zip(velocity).for_each(|(o, v)| *o += v);
            }
            Self::GroundEffect { gain, decay_height } => {
                if let (Some(o), Some(&height)) = (out.last_mut(), position.last()) {
                    *o += gain * (-height / decay_height).exp();
                }
            }
            Self::Tether { anchor, stiffness } => {
                out.iter_mut()
                    .zip(anchor.iter().zip(position))
                    .for_each(|(o, (a, p))| *o += stiffness * (a - p));
            }
            Self::Composite { members } => members.iter().for_each(|m| m.add_drift(position, out)),
        }
    }

    /// Total gust standard deviation (m/s per axis) of all wind members combined.
    pub fn gust_stddev(&self) -> f64 {
        self.gust_variance().sqrt()
    }

    fn gust_variance(&self) -> f64 {
        match self {
            Self::ConstantWind { gust_stddev, .. } => gust_stddev * gust_stddev,
            Self::Composite { members } => members.iter().map(Self::gust_variance).sum(),
            _ => 0.0,
        }
    }

    /// Noise-free displacement over an inner step of length `h`.
    pub fn mean_displacement(&self, position: &[f64], h: f64) -> Vec<f64> {
        self.drift(position).into_iter().map(|v| v * h).collect()
    }

    /// Displacement over an inner step, drawing gusts from `rng`. Fields without
    /// gusts consume no draws.
    pub fn displacement(&self, position: &[f64], h: f64, rng: &mut SimRng) -> Vec<f64> {
        let mut d = self.mean_displacement(position, h);
        let gust = self.gust_stddev();
        if gust > 0.0 {
            for di in &mut d {
                let n: f64 = StandardNormal.sample(rng);
                *di += gust * h * n;
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sysmodel::rng_stream;

    #[test]
    fn composite_is_vector_sum() {
        let wind = DisturbanceField::ConstantWind {
            velocity: vec![0.3, -0.1, 0.0],
            gust_stddev: 0.0,
        };
        let ground = DisturbanceField::GroundEffect {
            gain: 0.4,
            decay_height: 0.25,
        };
        let tether = DisturbanceField::Tether {
            anchor: vec![0.0, 0.0, 0.0],
            stiffness: 0.2,
        };
        let composite = DisturbanceField::Composite {
            members: vec![wind.clone(), ground.clone(), tether.clone()],
        };
        let p = [0.7, -1.1, 0.4];
        let h = 0.001;
        let sum: Vec<f64> = (0..3)
            .map(|i| {
                wind.mean_displacement(&p, h)[i]
                    + ground.mean_displacement(&p, h)[i]
                    + tether.mean_displacement(&p, h)[i]
            })
            .collect();
        let got = composite.mean_displacement(&p, h);
        for (a, b) in got.iter().zip(&sum) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ground_effect_decays_with_height() {
        let g = DisturbanceField::GroundEffect {
            gain: 1.0,
            decay_height: 0.5,
        };
        assert!((g.drift(&[0.0, 0.0, 0.5])[2] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(g.drift(&[0.0, 0.0, 1.0])[2] < g.drift(&[0.0, 0.0, 0.2])[2]);
    }

    #[test]
    fn validation() {
        let bad = DisturbanceField::ConstantWind {
            velocity: vec![1.0],
            gust_stddev: 0.0,
        };
        assert!(bad.validate(3).is_err());
        let neg = DisturbanceField::ConstantWind {
            velocity: vec![1.0],
            gust_stddev: -1.0,
        };
        assert!(neg.validate(1).is_err());
        let g = DisturbanceField::GroundEffect {
            gain: 1.0,
            decay_height: 0.0,
        };
        assert!(g.validate(3).is_err());
    }

    #[test]
    fn gustless_fields_draw_nothing() {
        use rand::Rng;
        let mut a = rng_stream(1, 0);
        let mut b = rng_stream(1, 0);
        let tether = DisturbanceField::Tether {
            anchor: vec![0.0],
            stiffness: 1.0,
        };
        tether.displacement(&[1.0], 0.01, &mut a);
        assert_eq!(a.random::<u64>(), b.random::<u64>());
    }
}
