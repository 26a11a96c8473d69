//! Monte Carlo checks of the synthetic crowd's effect directions, averaged
//! over 20 seeds with bootstrap intervals across seeds.

use judgment_sieve::synthetic::{generate_dataset, iterate_sieve, CrowdConfig, EffectModel, IterateOptions, Spread};
use judgment_sieve::{bootstrap_ci, score_table, BootstrapConfig, BASELINE, CONTEXT, DELIBERATION};

const SEEDS: u64 = 20;

fn seed_boot() -> BootstrapConfig {
    BootstrapConfig {
        replicates: 4000,
        level: 0.95,
        seed: 99,
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn condition_means(cfg: &CrowdConfig, fx: &EffectModel, condition: &str) -> (f64, f64) {
    let d = generate_dataset(cfg, fx).unwrap();
    score_table(&d, condition).unwrap().means().unwrap()
}

#[test]
fn context_width_factor_halves_ambiguity() {
    let fx = EffectModel {
        context_width_factor: 0.5,
        ..EffectModel::default()
    };
    let ratios: Vec<f64> = (0..SEEDS)
        .map(|seed| {
            let cfg = CrowdConfig { seed, ..CrowdConfig::default() };
            condition_means(&cfg, &fx, CONTEXT).0 / condition_means(&cfg, &fx, BASELINE).0
        })
        .collect();
    let (lo, hi) = bootstrap_ci(&ratios, &seed_boot()).unwrap();
    let m = mean(&ratios);
    assert!((m - 0.5).abs() < 0.03, "ratio {m} ({lo}, {hi})");
}

#[test]
fn identity_effects_leave_conditions_alike() {
    let fx = EffectModel::identity();
    let diffs: Vec<(f64, f64)> = (0..SEEDS)
        .map(|seed| {
            let cfg = CrowdConfig { seed, ..CrowdConfig::default() };
            let (ba, bd) = condition_means(&cfg, &fx, BASELINE);
            let (da, dd) = condition_means(&cfg, &fx, DELIBERATION);
            (da - ba, dd - bd)
        })
        .collect();
    let amb: Vec<f64> = diffs.iter().map(|d| d.0).collect();
    let dis: Vec<f64> = diffs.iter().map(|d| d.1).collect();
    let (alo, ahi) = bootstrap_ci(&amb, &seed_boot()).unwrap();
    assert!(alo <= 0.0 && 0.0 <= ahi, "ambiguity diff CI ({alo}, {ahi})");
    // pool resampling makes disagreement noisy; check it is small
    assert!(mean(&dis).abs() < 0.5, "disagreement diff {}", mean(&dis));
}

fn paired_difference(low: &CrowdConfig, high: &CrowdConfig, pick: fn((f64, f64)) -> f64) -> (f64, (f64, f64)) {
    let fx = EffectModel::default();
    let diffs: Vec<f64> = (0..SEEDS)
        .map(|seed| {
            let a = pick(condition_means(&CrowdConfig { seed, ..low.clone() }, &fx, BASELINE));
            let b = pick(condition_means(&CrowdConfig { seed, ..high.clone() }, &fx, BASELINE));
            b - a
        })
        .collect();
    (mean(&diffs), bootstrap_ci(&diffs, &seed_boot()).unwrap())
}

#[test]
fn wider_latent_widths_raise_ambiguity() {
    let low = CrowdConfig {
        width: Spread::Uniform { low: 0.05, high: 0.25 },
        ..CrowdConfig::default()
    };
    let high = CrowdConfig {
        width: Spread::Uniform { low: 0.15, high: 0.35 },
        ..CrowdConfig::default()
    };
    let (m, (lo, _)) = paired_difference(&low, &high, |m| m.0);
    assert!(lo > 0.0, "ambiguity increase {m}, CI lo {lo}");
}

#[test]
fn larger_dispersion_raises_disagreement() {
    let low = CrowdConfig {
        dispersion: Spread::Uniform { low: 0.02, high: 0.1 },
        ..CrowdConfig::default()
    };
    let high = CrowdConfig {
        dispersion: Spread::Uniform { low: 0.1, high: 0.2 },
        ..CrowdConfig::default()
    };
    let (m, (lo, _)) = paired_difference(&low, &high, |m| m.1);
    assert!(lo > 0.0, "disagreement increase {m}, CI lo {lo}");
}

#[test]
fn iterated_sieving_shrinks_ambiguity() {
    let fx = EffectModel {
        context_width_factor: 0.5,
        deliberation_dispersion_factor: 0.5,
        ..EffectModel::default()
    };
    let rounds = 6;
    let mut per_round = vec![Vec::new(); rounds];
    for seed in 0..SEEDS {
        let cfg = CrowdConfig { seed, ..CrowdConfig::default() };
        let opts = IterateOptions {
            fraction: 0.25,
            rounds,
            stop_below: None,
            bootstrap: BootstrapConfig { replicates: 100, ..BootstrapConfig::with_seed(seed) },
        };
        let steps = iterate_sieve(&cfg, &fx, &opts).unwrap();
        assert_eq!(steps.len(), rounds);
        for (r, s) in steps.iter().enumerate() {
            per_round[r].push(s.summary.mean_ambiguity);
        }
    }
    let means: Vec<f64> = per_round.iter().map(|v| mean(v)).collect();
    assert!(means.windows(2).all(|w| w[1] < w[0]), "{means:?}");
}
