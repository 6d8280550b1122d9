//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs as its own test target without the libtest harness:
//! `cargo test -p sar-core --test acceptance`.

mod common;

use std::time::{Duration, Instant};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use sar_core::gpr::{GpPosterior, SquaredExponential};
use sar_core::harness::{figure2_fixture_with, run_experiment, Figure2Options, GridSpec, Scenario};
use sar_core::riskcore::{
    analytic_var, empirical_sar, empirical_var, AnalyticDistribution, IndexedSamples, RiskLevel,
    SampleSet,
};
use sar_core::sarfit::{
    batch_target, coverage_report, fit_online, verify_assumption, Batch, DiscrepancyParams,
    FitConfig, TargetState,
};
use sar_core::sysmodel::DisturbanceRecord;

use common::*;

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

fn main() {
    let criteria = [
        Criterion {
            name: "gp-oracle-equivalence",
            budget: Duration::from_secs(10),
            run: gp_oracle,
        },
        Criterion {
            name: "quantile-correctness",
            budget: Duration::from_secs(5),
            run: quantiles,
        },
        Criterion {
            name: "batch-exceedance-frequency",
            budget: Duration::from_secs(30),
            run: exceedance,
        },
        Criterion {
            name: "surface-coverage",
            budget: Duration::from_secs(120),
            run: coverage,
        },
        Criterion {
            name: "assumption-parity",
            budget: Duration::from_secs(5),
            run: parity,
        },
        Criterion {
            name: "end-to-end-protocol",
            budget: Duration::from_secs(180),
            run: protocol,
        },
        Criterion {
            name: "determinism",
            budget: Duration::from_secs(60),
            run: determinism,
        },
        Criterion {
            name: "wiener-fixture",
            budget: Duration::from_secs(30),
            run: wiener,
        },
    ];
    let mut failed = 0;
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let over = elapsed > c.budget;
        let (status, detail) = match (&outcome, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => (
                "FAIL",
                format!("{d}; took {elapsed:.2?}, budget {:?}", c.budget),
            ),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "[{}] {:<28} {status} ({elapsed:.2?}) {detail}",
            i + 1,
            c.name
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn gp_oracle() -> Outcome {
    let mut rng = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let n = rng.random_range(1..=100);
        let dim = rng.random_range(1..=3);
        let ell = rng.random_range(0.3..2.0);
        let sv = rng.random_range(0.5..2.0);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kernel = SquaredExponential::new(ell, sv).map_err(|e| e.to_string())?;
        let gp =
            GpPosterior::fit(points.clone(), targets.clone(), kernel).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-2.5..2.5)).collect();
            let (mu, var) = dense_posterior(&points, &targets, ell, sv, &x);
            let got_mu = gp.mean(&x).map_err(|e| e.to_string())?;
            let got_sigma = gp.sigma(&x).map_err(|e| e.to_string())?;
            worst = worst.max((got_mu - mu).abs()).max((got_sigma - var).abs());
        }
    }
    check(
        worst <= 1e-8,
        format!("max abs deviation {worst:.2e} over 50 datasets x 10 queries"),
    )
}

fn quantiles() -> Outcome {
    let mut rng = rng(202);
    let draws: Vec<f64> = (0..1_000_000)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let samples = SampleSet::new(draws).map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for eps in [0.1, 0.05, 0.01] {
        let level = RiskLevel::new(eps).unwrap();
        let oracle = normal_quantile(1.0 - eps);
        let analytic = analytic_var(
            &AnalyticDistribution::Gaussian {
                mean: 0.0,
                stddev: 1.0,
            },
            level,
        )
        .map_err(|e| e.to_string())?;
        let empirical = empirical_var(&samples, level).map_err(|e| e.to_string())?;
        ok &= (analytic - oracle).abs() < 1e-6 && (empirical - analytic).abs() <= 0.01;
        parts.push(format!(
            "eps={eps}: oracle {oracle:.4}, analytic {analytic:.4}, empirical {empirical:.4}"
        ));
    }
    check(ok, parts.join("; "))
}

fn exceedance() -> Outcome {
    let (eps, n, trials) = (0.05, 60, 10_000);
    let p = 1.0 - (1.0f64 - eps).powi(n as i32);
    let threshold = p - 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    // disturbance norm |Z|, whose VaR_eps is the (1 - eps/2) normal quantile
    let var = normal_quantile(1.0 - eps / 2.0);
    let params = DiscrepancyParams::new(1.0, 0.0).unwrap();
    let mut rng = rng(303);
    let mut hits = 0;
    for t in 0..trials {
        let records: Vec<_> = (0..n)
            .map(|j| {
                let z: f64 = StandardNormal.sample(&mut rng);
                DisturbanceRecord::new(vec![0.0, 0.0], z.abs(), t * n + j).unwrap()
            })
            .collect();
        let batch = Batch::new(records, t).map_err(|e| e.to_string())?;
        let (_, target) = batch_target(&batch, &params, TargetState::Last);
        if target >= var {
            hits += 1;
        }
    }
    let freq = hits as f64 / trials as f64;
    check(
        freq >= threshold,
        format!("frequency {freq:.4} vs 1-(1-eps)^N = {p:.5}, threshold {threshold:.4}"),
    )
}

/// Half-normal disturbance norm with a smooth state-dependent scale.
fn synthetic_scale(x: &[f64]) -> f64 {
    0.05 + 0.05 * (1.0 + (1.3 * x[0]).sin() * (0.9 * x[1]).cos())
}

fn coverage() -> Outcome {
    let (n, iota) = (60, 20);
    let mut rng = rng(404);
    let records: Vec<_> = (0..n * iota)
        .map(|j| {
            let s = j as f64;
            let x = vec![
                1.9 * (std::f64::consts::TAU * s / 400.0).sin(),
                1.9 * (std::f64::consts::TAU * s / 290.0).sin(),
            ];
            let z: f64 = StandardNormal.sample(&mut rng);
            DisturbanceRecord::new(x.clone(), synthetic_scale(&x) * z.abs(), j).unwrap()
        })
        .collect();

    let grid = GridSpec {
        resolution: 20,
        height: 0.0,
        samples: 500,
    };
    let state_box = sar_core::geometry::BoxSet::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
    let eps = RiskLevel::new(0.05).unwrap();
    let mut indexed = IndexedSamples::new();
    for p in grid.points(&state_box).map_err(|e| e.to_string())? {
        for _ in 0..grid.samples {
            let z: f64 = StandardNormal.sample(&mut rng);
            indexed
                .push(&p, synthetic_scale(&p) * z.abs())
                .map_err(|e| e.to_string())?;
        }
    }
    let truth = empirical_sar(&indexed, eps).map_err(|e| e.to_string())?;

    let mut parts = Vec::new();
    let mut any = false;
    for b in [1.0, 2.0, 5.0] {
        let config = FitConfig {
            n_per_batch: n,
            rkhs_bound: b,
            discrepancy: DiscrepancyParams::new(3.0, 0.05).unwrap(),
            ..FitConfig::standard()
        };
        let model = fit_online(records.clone(), config).map_err(|e| e.to_string())?;
        if model.iterations() != iota {
            return Err(format!(
                "expected {iota} batches, fitted {}",
                model.iterations()
            ));
        }
        let report = coverage_report(&model, &truth).map_err(|e| e.to_string())?;
        any |= report.coverage >= 0.90;
        parts.push(format!(
            "B={b}: coverage {:.3}, mean slack {:.4}",
            report.coverage, report.mean_slack
        ));
    }
    check(any, parts.join("; "))
}

fn parity() -> Outcome {
    let mut rng = rng(505);
    let params = DiscrepancyParams::new(2.0, 0.5).unwrap();
    let mut mismatches = 0;
    for t in 0..1000 {
        let len = rng.random_range(1..=80);
        let dim = rng.random_range(1..=3);
        let records = random_batch(&mut rng, len, dim, 0);
        let (alpha, beta) = brute_force_spreads(&records);
        let d = verify_assumption(&Batch::new(records, t).map_err(|e| e.to_string())?, &params);
        let same = d.alpha_d == alpha
            && d.beta_d == beta
            && d.alpha_ok == (alpha <= params.alpha)
            && d.beta_ok == (beta <= params.beta);
        if !same {
            mismatches += 1;
        }
    }
    check(
        mismatches == 0,
        format!("{mismatches} mismatches over 1000 batches"),
    )
}

fn load(name: &str) -> Result<Scenario, String> {
    Scenario::load(&scenario_path(name)).map_err(|e| format!("{name}: {e}"))
}

fn protocol() -> Outcome {
    let moderate = load("c_like.json")?;
    let strong = load("d_like.json")?;
    if moderate.repeats != 50 {
        return Err(format!(
            "moderate scenario has {} repeats, need 50",
            moderate.repeats
        ));
    }
    let m = run_experiment(&moderate, moderate.seed).map_err(|e| e.to_string())?;
    let s = run_experiment(&strong, strong.seed).map_err(|e| e.to_string())?;
    let faster = m
        .phase2
        .iter()
        .filter(|p| p.augmented.traversal_time < p.baseline.traversal_time)
        .count();
    let strong_ok = s
        .phase2
        .iter()
        .all(|p| !p.baseline.timeouts.is_empty() && p.augmented.completed);
    let mut failures = m.check(&moderate.expectations);
    failures.extend(s.check(&strong.expectations));
    check(
        faster * 10 >= 9 * m.phase2.len() && strong_ok && failures.is_empty(),
        format!(
            "moderate: augmented faster in {faster}/{} (speedup {:.3}); strong: baseline timeouts {}/{}, augmented completed {}/{}{}",
            m.phase2.len(),
            m.speedup,
            s.baseline_timeout_episodes,
            s.phase2.len(),
            s.augmented_completed_episodes,
            s.phase2.len(),
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

fn determinism() -> Outcome {
    let scenario = load("c_like.json")?;
    let a = run_experiment(&scenario, 7)
        .and_then(|r| r.to_json())
        .map_err(|e| e.to_string())?;
    let b = run_experiment(&scenario, 7)
        .and_then(|r| r.to_json())
        .map_err(|e| e.to_string())?;
    check(a == b, format!("{} bytes, identical: {}", a.len(), a == b))
}

fn wiener() -> Outcome {
    let fixture = figure2_fixture_with(&Figure2Options {
        paths: 100_000,
        seed: 808,
        ..Figure2Options::default()
    })
    .map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    let mut layers = Vec::new();
    for &eps in &fixture.eps_levels {
        let empirical = fixture.wiener.empirical(eps).map_err(|e| e.to_string())?;
        let &(t, v) = empirical.last().unwrap();
        let oracle = t.sqrt() * normal_quantile(1.0 - eps);
        let rel = (v - oracle).abs() / oracle;
        ok &= t == 1.0 && rel <= 0.02;
        parts.push(format!(
            "eps={eps}: {v:.4} vs {oracle:.4} ({:.2}%)",
            100.0 * rel
        ));
        layers.push((eps, empirical));
    }
    layers.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let ordered = layers
        .windows(2)
        .all(|w| w[0].1.iter().zip(&w[1].1).all(|(lo, hi)| hi.1 >= lo.1));
    ok &= ordered;
    parts.push(format!("layers ordered: {ordered}"));
    check(ok, parts.join("; "))
}
