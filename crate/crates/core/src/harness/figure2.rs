//! Sample paths of a Wiener and a binomial process with their exact SaR curves.

use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::riskcore::{
    analytic_var, empirical_sar, AnalyticDistribution, IndexedSamples, RiskLevel,
};
use crate::sysmodel::rng_stream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Figure2Options {
    pub paths: usize,
    pub seed: u64,
    pub eps_levels: Vec<f64>,
    /// Wiener process sampled at `k / wiener_steps`, `k = 0..=wiener_steps`, on `[0, 1]`.
    pub wiener_steps: usize,
    /// Binomial process `B_t = sum of t Bernoulli(p)` for `t = 0..=binomial_steps`.
    pub binomial_steps: usize,
    pub binomial_p: f64,
}

impl Default for Figure2Options {
    fn default() -> Self {
        Self {
            paths: 10_000,
            seed: 0,
            eps_levels: vec![0.1, 0.05, 0.01],
            wiener_steps: 10,
            binomial_steps: 20,
            binomial_p: 0.5,
        }
    }
}

/// Exact SaR of one process at one risk level, as `(t, value)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarCurve {
    pub eps: f64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessFixture {
    pub name: &'static str,
    /// Indexed by `[t]`; sample `p` at every index belongs to path `p`.
    pub samples: IndexedSamples<f64>,
    pub analytic: Vec<SarCurve>,
}

impl ProcessFixture {
    pub fn times(&self) -> Vec<f64> {
        self.samples
            .entries()
            .iter()
            .map(|(idx, _)| idx[0])
            .collect()
    }

    /// Empirical SaR over the paths as `(t, value)` pairs.
    pub fn empirical(&self, eps: f64) -> Result<Vec<(f64, f64)>> {
        Ok(empirical_sar(&self.samples, RiskLevel::new(eps)?)?
            .into_iter()
            .map(|(idx, v)| (idx[0], v))
            .collect())
    }

    /// Path `p` as `(t, value)` pairs.
    pub fn path(&self, p: usize) -> Vec<(f64, f64)> {
        self.samples
            .entries()
            .iter()
            .map(|(idx, set)| (idx[0], set.values()[p]))
            .collect()
    }

    pub fn path_count(&self) -> usize {
        self.samples.entries().first().map_or(0, |(_, s)| s.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Figure2Fixture {
    pub eps_levels: Vec<f64>,
    pub wiener: ProcessFixture,
    pub binomial: ProcessFixture,
}

/// Default fixture: 10^4 paths, seed 0, `eps` in {0.1, 0.05, 0.01}.
pub fn figure2_fixture() -> Figure2Fixture {
    figure2_fixture_with(&Figure2Options::default()).expect("default options are valid")
}

pub fn figure2_fixture_with(opts: &Figure2Options) -> Result<Figure2Fixture> {
    if opts.paths == 0 || opts.wiener_steps == 0 {
        return Err(Error::InvalidParameter(
            "fixture needs paths and steps".into(),
        ));
    }
    let levels = opts
        .eps_levels
        .iter()
        .map(|&e| RiskLevel::new(e))
        .collect::<Result<Vec<_>>>()?;

    let dt = 1.0 / opts.wiener_steps as f64;
    let times: Vec<f64> = (0..=opts.wiener_steps).map(|k| k as f64 * dt).collect();
    let mut wiener = IndexedSamples::new();
    let mut rng = rng_stream(opts.seed, 0);
    for _ in 0..opts.paths {
        let mut w = 0.0;
        for (k, &t) in times.iter().enumerate() {
            if k > 0 {
                let n: f64 = StandardNormal.sample(&mut rng);
                w += dt.sqrt() * n;
            }
            wiener.push(&[t], w)?;
        }
    }
    let wiener_curves = levels
        .iter()
        .map(|&eps| {
            let points = times
                .iter()
                .map(|&t| {
                    Ok((
                        t,
                        analytic_var(&AnalyticDistribution::WienerMarginal { t, scale: 1.0 }, eps)?,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SarCurve {
                eps: eps.epsilon(),
                points,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let coin = Bernoulli::new(opts.binomial_p)
        .map_err(|e| Error::InvalidParameter(format!("binomial p: {e}")))?;
    let mut binomial = IndexedSamples::new();
    let mut rng = rng_stream(opts.seed, 1);
    for _ in 0..opts.paths {
        let mut b = 0.0;
        for t in 0..=opts.binomial_steps {
            if t > 0 && coin.sample(&mut rng) {
                b += 1.0;
            }
            binomial.push(&[t as f64], b)?;
        }
    }
    let binomial_curves = levels
        .iter()
        .map(|&eps| {
            let points = (0..=opts.binomial_steps as u64)
                .map(|n| {
                    let dist = AnalyticDistribution::Binomial {
                        n,
                        p: opts.binomial_p,
                    };
                    Ok((n as f64, analytic_var(&dist, eps)?))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(SarCurve {
                eps: eps.epsilon(),
                points,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Figure2Fixture {
        eps_levels: opts.eps_levels.clone(),
        wiener: ProcessFixture {
            name: "wiener",
            samples: wiener,
            analytic: wiener_curves,
        },
        binomial: ProcessFixture {
            name: "binomial",
            samples: binomial,
            analytic: binomial_curves,
        },
    })
}
