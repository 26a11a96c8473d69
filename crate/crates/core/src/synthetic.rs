//! Seeded generative crowd model.
//!
//! Each instance has a latent true value `t`, an ambiguity width `w` and a
//! dispersion `sigma`. Each condition recruits a fresh pool of annotators
//! with perspective offsets `b ~ N(0, bias_spread)`. Annotator `i` reports
//! the range of width `w * (1 + eta)` centred on `t + sigma * b_i + eps`,
//! with the centre pulled in so the range fits the unit scale, then clipped
//! to `[0, 1]`.
//!
//! Interventions act multiplicatively: context scales widths by
//! `context_width_factor` and dispersion by `context_dispersion_factor`;
//! deliberation scales dispersion by `deliberation_dispersion_factor` and
//! widths by `deliberation_width_factor`.
//!
//! Randomness is split into substreams keyed by `(seed, kind, instance,
//! condition)` so generation order does not matter.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{score_table, ScoreTable};
use crate::model::{
    ConditionSet, Dataset, Instance, InstanceId, RangeAnnotation, RatingScale, BASELINE, CONTEXT,
    DELIBERATION,
};
use crate::numeric::substream;
use crate::sieve::{assign_interventions, Decision, SieveCutoffs};
use crate::simulation::RoundSummary;
use crate::stats::BootstrapConfig;

const STREAM_LATENT: u64 = 1;
const STREAM_POOL: u64 = 2;
const STREAM_ANNOTATION: u64 = 3;
const ITERATION_OFFSET: u64 = 1_000;

/// Distribution of a per-instance latent quantity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spread {
    Constant { value: f64 },
    Uniform { low: f64, high: f64 },
    /// Beta(alpha, beta) rescaled onto `[low, high]`.
    Beta { alpha: f64, beta: f64, low: f64, high: f64 },
}

impl Spread {
    fn support(&self) -> (f64, f64) {
        match *self {
            Spread::Constant { value } => (value, value),
            Spread::Uniform { low, high } | Spread::Beta { low, high, .. } => (low, high),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Spread::Constant { value } => value,
            Spread::Uniform { low, high } => 0.5 * (low + high),
            Spread::Beta { alpha, beta, low, high } => low + (high - low) * alpha / (alpha + beta),
        }
    }

    fn check(&self, name: &str, min: f64, max: f64) -> Result<()> {
        let (lo, hi) = self.support();
        if !(lo.is_finite() && hi.is_finite() && min <= lo && lo <= hi && hi <= max) {
            return Err(Error::invalid(format!(
                "{name} support [{lo}, {hi}] must lie within [{min}, {max}]"
            )));
        }
        if let Spread::Beta { alpha, beta, .. } = *self {
            if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
                return Err(Error::invalid(format!("{name} beta parameters must be positive")));
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Spread::Constant { value } => value,
            Spread::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            Spread::Beta { alpha, beta, low, high } => {
                let b = Beta::new(alpha, beta).expect("checked parameters");
                low + (high - low) * b.sample(rng)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CrowdConfig {
    pub n_instances: usize,
    pub n_annotators: usize,
    /// Per-instance range width `w`.
    pub width: Spread,
    /// Relative standard deviation of an annotator's width around `w`.
    pub width_jitter: f64,
    /// Per-instance dispersion `sigma` scaling the annotator offsets.
    pub dispersion: Spread,
    /// Standard deviation of annotator perspective offsets.
    pub bias_spread: f64,
    /// Standard deviation of per-annotation centre noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for CrowdConfig {
    fn default() -> Self {
        Self {
            n_instances: 50,
            n_annotators: 25,
            width: Spread::Uniform { low: 0.05, high: 0.45 },
            width_jitter: 0.2,
            dispersion: Spread::Uniform { low: 0.02, high: 0.2 },
            bias_spread: 1.0,
            noise: 0.01,
            seed: 0,
        }
    }
}

impl CrowdConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_instances < 1 {
            return Err(Error::invalid("n_instances must be at least 1"));
        }
        if self.n_annotators < 2 {
            return Err(Error::invalid("n_annotators must be at least 2"));
        }
        self.width.check("width", 0.0, 1.0)?;
        self.dispersion.check("dispersion", 0.0, f64::MAX)?;
        for (name, v) in [
            ("width_jitter", self.width_jitter),
            ("bias_spread", self.bias_spread),
            ("noise", self.noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EffectModel {
    pub context_width_factor: f64,
    pub context_dispersion_factor: f64,
    pub deliberation_dispersion_factor: f64,
    pub deliberation_width_factor: f64,
}

impl Default for EffectModel {
    fn default() -> Self {
        Self {
            context_width_factor: 0.75,
            context_dispersion_factor: 1.05,
            deliberation_dispersion_factor: 0.8,
            deliberation_width_factor: 1.05,
        }
    }
}

impl EffectModel {
    pub fn identity() -> Self {
        Self {
            context_width_factor: 1.0,
            context_dispersion_factor: 1.0,
            deliberation_dispersion_factor: 1.0,
            deliberation_width_factor: 1.0,
        }
    }

    pub fn check(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v <= 1.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must lie in (0, 1], got {v}")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive, got {v}")))
            }
        };
        unit("context_width_factor", self.context_width_factor)?;
        unit("deliberation_dispersion_factor", self.deliberation_dispersion_factor)?;
        positive("context_dispersion_factor", self.context_dispersion_factor)?;
        positive("deliberation_width_factor", self.deliberation_width_factor)
    }

    /// `(width multiplier, dispersion multiplier)` applied by one decision.
    pub fn factors(&self, decision: Decision) -> (f64, f64) {
        match decision {
            Decision::Context => (self.context_width_factor, self.context_dispersion_factor),
            Decision::Deliberation => (self.deliberation_width_factor, self.deliberation_dispersion_factor),
            Decision::None => (1.0, 1.0),
        }
    }
}

/// Crowd and effect parameters as read from a config file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub crowd: CrowdConfig,
    pub effects: EffectModel,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Latent {
    truth: f64,
    width: f64,
    dispersion: f64,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn instance_ids(n: usize) -> Vec<InstanceId> {
    let digits = (n.saturating_sub(1)).to_string().len().max(3);
    (0..n).map(|i| InstanceId(format!("x{i:0digits$}"))).collect()
}

fn latents(cfg: &CrowdConfig) -> Vec<Latent> {
    (0..cfg.n_instances)
        .map(|x| {
            let mut rng = substream(cfg.seed, &[STREAM_LATENT, x as u64]);
            Latent {
                truth: rng.random::<f64>(),
                width: cfg.width.sample(&mut rng),
                dispersion: cfg.dispersion.sample(&mut rng),
            }
        })
        .collect()
}

fn pool(cfg: &CrowdConfig, pool_index: u64) -> Vec<f64> {
    let mut rng = substream(cfg.seed, &[STREAM_POOL, pool_index]);
    (0..cfg.n_annotators)
        .map(|_| cfg.bias_spread * normal(&mut rng))
        .collect()
}

/// One instance's annotations from one annotator pool.
#[allow(clippy::too_many_arguments)]
fn annotate(
    cfg: &CrowdConfig,
    id: &InstanceId,
    latent: Latent,
    biases: &[f64],
    pool_label: &str,
    width_mult: f64,
    dispersion_mult: f64,
    mut rng: ChaCha8Rng,
) -> Vec<RangeAnnotation> {
    biases
        .iter()
        .enumerate()
        .map(|(i, &bias)| {
            let jitter = cfg.width_jitter * normal(&mut rng);
            let noise = cfg.noise * normal(&mut rng);
            let width = (latent.width * width_mult * (1.0 + jitter)).clamp(0.0, 1.0);
            let half = width / 2.0;
            let center = (latent.truth + latent.dispersion * dispersion_mult * bias + noise).clamp(half, 1.0 - half);
            RangeAnnotation::new(
                id.clone(),
                format!("{pool_label}-{i:03}"),
                (center - half).clamp(0.0, 1.0),
                (center + half).clamp(0.0, 1.0),
            )
        })
        .collect()
}

fn instances(ids: &[InstanceId]) -> Vec<Instance> {
    ids.iter()
        .enumerate()
        .map(|(i, id)| Instance {
            id: id.clone(),
            content: format!("synthetic item {i}"),
            context: None,
            group: Some(format!("g{}", i / 10)),
        })
        .collect()
}

/// Baseline, context and deliberation conditions for the configured crowd.
pub fn generate_dataset(cfg: &CrowdConfig, fx: &EffectModel) -> Result<Dataset> {
    cfg.check()?;
    fx.check()?;
    let ids = instance_ids(cfg.n_instances);
    let latent = latents(cfg);
    let conditions = [
        (BASELINE, 1.0, 1.0),
        (CONTEXT, fx.context_width_factor, fx.context_dispersion_factor),
        (DELIBERATION, fx.deliberation_width_factor, fx.deliberation_dispersion_factor),
    ]
    .iter()
    .enumerate()
    .map(|(c, &(name, wm, dm))| {
        let biases = pool(cfg, c as u64);
        let annotations = ids
            .iter()
            .zip(&latent)
            .enumerate()
            .flat_map(|(x, (id, &l))| {
                let rng = substream(cfg.seed, &[STREAM_ANNOTATION, x as u64, c as u64]);
                annotate(cfg, id, l, &biases, name, wm, dm, rng)
            })
            .collect();
        ConditionSet::new(name, annotations)
    })
    .collect();
    Ok(Dataset::new(
        RatingScale::unit().with_label("synthetic unit scale"),
        instances(&ids),
        conditions,
    ))
}

/// Replaces (or adds) condition `target` with the annotations of `source`,
/// each range's width scaled by `factor` about its own centre.
pub fn with_scaled_condition(d: &Dataset, source: &str, target: &str, factor: f64) -> Result<Dataset> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::invalid(format!("width factor must lie in (0, 1], got {factor}")));
    }
    let scaled: Vec<RangeAnnotation> = d
        .condition(source)?
        .annotations
        .iter()
        .map(|a| {
            let center = 0.5 * (a.lower + a.upper);
            let half = 0.5 * factor * a.width();
            RangeAnnotation {
                lower: center - half,
                upper: center + half,
                ..a.clone()
            }
        })
        .collect();
    let mut out = d.clone();
    out.conditions.retain(|c| c.condition != target);
    out.conditions.push(ConditionSet::new(target, scaled));
    out.canonicalize();
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationStep {
    /// 1-based; round 1 is the baseline.
    pub round: usize,
    pub summary: RoundSummary,
    pub context_count: usize,
    pub deliberation_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateOptions {
    pub fraction: f64,
    pub rounds: usize,
    /// Stop once both mean ambiguity and mean disagreement are below this.
    pub stop_below: Option<f64>,
    pub bootstrap: BootstrapConfig,
}

/// Repeated sieving on synthetic data.
///
/// Each round after the first assigns interventions from the current scores,
/// re-annotates only the assigned instances with a fresh pool and the
/// instance's accumulated effect multipliers, and rescores.
pub fn iterate_sieve(cfg: &CrowdConfig, fx: &EffectModel, opts: &IterateOptions) -> Result<Vec<IterationStep>> {
    cfg.check()?;
    fx.check()?;
    if opts.rounds < 1 {
        return Err(Error::invalid("rounds must be at least 1"));
    }
    if !(0.0..=1.0).contains(&opts.fraction) {
        return Err(Error::invalid(format!("fraction must lie in [0, 1], got {}", opts.fraction)));
    }
    let ids = instance_ids(cfg.n_instances);
    let latent = latents(cfg);
    let base_pool = pool(cfg, 0);
    let mut multipliers = vec![(1.0_f64, 1.0_f64); cfg.n_instances];
    let mut current: Vec<Vec<RangeAnnotation>> = ids
        .iter()
        .zip(&latent)
        .enumerate()
        .map(|(x, (id, &l))| {
            let rng = substream(cfg.seed, &[STREAM_ANNOTATION, x as u64, 0]);
            annotate(cfg, id, l, &base_pool, BASELINE, 1.0, 1.0, rng)
        })
        .collect();

    let rescore = |current: &[Vec<RangeAnnotation>]| -> ScoreTable {
        let d = Dataset::new(
            RatingScale::unit(),
            instances(&ids),
            vec![ConditionSet::new(BASELINE, current.concat())],
        );
        score_table(&d, BASELINE).expect("baseline present")
    };
    let converged = |s: &RoundSummary| {
        opts.stop_below
            .is_some_and(|tol| s.mean_ambiguity < tol && s.mean_disagreement < tol)
    };

    let mut table = rescore(&current);
    let first = RoundSummary::from_table(&table, 0, &opts.bootstrap)?;
    let mut steps = vec![IterationStep {
        round: 1,
        summary: first,
        context_count: 0,
        deliberation_count: 0,
    }];
    for round in 2..=opts.rounds {
        if converged(&steps.last().expect("nonempty").summary) {
            break;
        }
        let cutoffs = SieveCutoffs::from_table(&table, opts.fraction)?;
        let assignments = assign_interventions(&table, &cutoffs);
        let pool_index = ITERATION_OFFSET + round as u64;
        let biases = pool(cfg, pool_index);
        let label = format!("r{round:02}");
        let (mut context_count, mut deliberation_count) = (0, 0);
        for a in assignments.iter().filter(|a| a.decision.is_intervention()) {
            let x = ids.binary_search(&a.instance_id).expect("generated id");
            match a.decision {
                Decision::Context => context_count += 1,
                Decision::Deliberation => deliberation_count += 1,
                Decision::None => unreachable!(),
            }
            let (wf, df) = fx.factors(a.decision);
            multipliers[x].0 *= wf;
            multipliers[x].1 *= df;
            let rng = substream(cfg.seed, &[STREAM_ANNOTATION, x as u64, pool_index]);
            current[x] = annotate(cfg, &ids[x], latent[x], &biases, &label, multipliers[x].0, multipliers[x].1, rng);
        }
        table = rescore(&current);
        let summary = RoundSummary::from_table(&table, context_count + deliberation_count, &opts.bootstrap)?;
        steps.push(IterationStep {
            round,
            summary,
            context_count,
            deliberation_count,
        });
    }
    Ok(steps)
}

pub const ITERATION_HEADER: &str = "round,mean_ambiguity,ambiguity_ci_lo,ambiguity_ci_hi,mean_disagreement,disagreement_ci_lo,disagreement_ci_hi,affected_count,context_count,deliberation_count";

pub fn trajectory_to_csv(steps: &[IterationStep]) -> String {
    let mut out = format!("{ITERATION_HEADER}\n");
    for s in steps {
        let m = &s.summary;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            s.round,
            m.mean_ambiguity,
            m.ci_ambiguity.0,
            m.ci_ambiguity.1,
            m.mean_disagreement,
            m.ci_disagreement.0,
            m.ci_disagreement.1,
            m.affected_count,
            s.context_count,
            s.deliberation_count
        ));
    }
    out
}
