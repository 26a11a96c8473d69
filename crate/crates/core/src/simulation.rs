//! Counterfactual annotation rounds.
//!
//! A composed round takes each instance's annotations verbatim from the
//! condition matching its assigned intervention. Rounds are summarized by
//! mean ambiguity and disagreement with percentile-bootstrap intervals over
//! instances.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{score_table, ScoreTable};
use crate::model::{
    Dataset, InstanceId, RangeAnnotation, Span, BASELINE, CONTEXT, DELIBERATION, MIN_ANNOTATORS,
};
use crate::numeric::{mean, top_count};
use crate::sieve::{assign_interventions, quantile_cutoff, InterventionAssignment, SieveCutoffs};
use crate::stats::{bootstrap_ci, permutation_test, BootstrapConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ComposedRound {
    /// Source condition per instance.
    pub sources: BTreeMap<InstanceId, String>,
    /// Annotations of every instance, copied from its source condition.
    pub annotations: Vec<RangeAnnotation>,
}

impl ComposedRound {
    pub fn instance_count(&self) -> usize {
        self.sources.len()
    }

    /// Instances drawing from a condition other than baseline.
    pub fn affected_count(&self) -> usize {
        self.sources.values().filter(|c| c.as_str() != BASELINE).count()
    }

    pub fn annotations_for<'a>(&'a self, id: &'a InstanceId) -> impl Iterator<Item = &'a RangeAnnotation> + 'a {
        self.annotations.iter().filter(move |a| &a.instance_id == id)
    }

    pub fn score_table(&self) -> ScoreTable {
        let mut groups: BTreeMap<&InstanceId, Vec<Span>> =
            self.sources.keys().map(|id| (id, Vec::new())).collect();
        for a in &self.annotations {
            if let Some(g) = groups.get_mut(&a.instance_id) {
                g.push(a.span());
            }
        }
        ScoreTable::from_groups(
            "composed",
            groups.into_iter().map(|(id, s)| (id.clone(), s)).collect(),
        )
    }
}

/// Builds a round from `(instance, source condition)` pairs.
fn compose(d: &Dataset, plan: &[(InstanceId, &str)]) -> Result<ComposedRound> {
    let mut by_condition: BTreeMap<&str, BTreeMap<&InstanceId, Vec<&RangeAnnotation>>> = BTreeMap::new();
    let mut sources = BTreeMap::new();
    let mut annotations = Vec::new();
    for (id, condition) in plan {
        if !by_condition.contains_key(condition) {
            by_condition.insert(condition, d.condition(condition)?.by_instance());
        }
        let found = by_condition[condition].get(id).map(Vec::as_slice).unwrap_or_default();
        if found.len() < MIN_ANNOTATORS {
            return Err(Error::MissingAnnotations {
                instance: id.to_string(),
                condition: condition.to_string(),
                found: found.len(),
            });
        }
        annotations.extend(found.iter().map(|&a| a.clone()));
        sources.insert(id.clone(), condition.to_string());
    }
    annotations.sort_by(|a, b| (&a.instance_id, &a.annotator_id).cmp(&(&b.instance_id, &b.annotator_id)));
    Ok(ComposedRound {
        sources,
        annotations,
    })
}

/// Context instances draw from `context`, deliberation instances from
/// `deliberation`, the rest from `baseline`.
pub fn compose_counterfactual(d: &Dataset, assignments: &[InterventionAssignment]) -> Result<ComposedRound> {
    let plan: Vec<_> = assignments
        .iter()
        .map(|a| (a.instance_id.clone(), a.decision.source_condition()))
        .collect();
    compose(d, &plan)
}

/// Every instance scored under `condition` draws from it.
pub fn compose_uniform(d: &Dataset, condition: &str) -> Result<ComposedRound> {
    let table = score_table(d, condition)?;
    let plan: Vec<_> = table
        .rows
        .into_iter()
        .map(|r| (r.instance_id, condition))
        .collect();
    compose(d, &plan)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub mean_ambiguity: f64,
    pub mean_disagreement: f64,
    pub ci_ambiguity: (f64, f64),
    pub ci_disagreement: (f64, f64),
    pub instance_count: usize,
    pub affected_count: usize,
}

impl RoundSummary {
    pub fn from_table(table: &ScoreTable, affected_count: usize, boot: &BootstrapConfig) -> Result<Self> {
        let amb = table.ambiguities();
        let dis = table.disagreements();
        let mean_ambiguity = mean(&amb).ok_or(Error::Empty("round has no scored instances"))?;
        let mean_disagreement = mean(&dis).expect("same length");
        Ok(Self {
            mean_ambiguity,
            mean_disagreement,
            ci_ambiguity: bootstrap_ci(&amb, boot)?,
            ci_disagreement: bootstrap_ci(&dis, boot)?,
            instance_count: table.len(),
            affected_count,
        })
    }
}

pub fn evaluate_round(round: &ComposedRound, boot: &BootstrapConfig) -> Result<RoundSummary> {
    RoundSummary::from_table(&round.score_table(), round.affected_count(), boot)
}

/// Summary of the unmodified baseline condition.
pub fn baseline_summary(d: &Dataset, boot: &BootstrapConfig) -> Result<RoundSummary> {
    RoundSummary::from_table(&score_table(d, BASELINE)?, 0, boot)
}

/// Every instance receives the same treatment.
pub fn uniform_round(d: &Dataset, condition: &str, boot: &BootstrapConfig) -> Result<RoundSummary> {
    evaluate_round(&compose_uniform(d, condition)?, boot)
}

/// Sieves the baseline at `fraction` and evaluates the composed round.
pub fn sieved_round(
    d: &Dataset,
    fraction: f64,
    boot: &BootstrapConfig,
) -> Result<(Vec<InterventionAssignment>, ComposedRound, RoundSummary)> {
    let baseline = score_table(d, BASELINE)?;
    let cutoffs = SieveCutoffs::from_table(&baseline, fraction)?;
    let assignments = assign_interventions(&baseline, &cutoffs);
    let round = compose_counterfactual(d, &assignments)?;
    let summary = evaluate_round(&round, boot)?;
    Ok((assignments, round, summary))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub summary: RoundSummary,
}

/// Sieves the baseline at each fraction and evaluates the composed round.
/// Cutoffs always come from the baseline table.
pub fn threshold_sweep(d: &Dataset, fractions: &[f64], boot: &BootstrapConfig) -> Result<Vec<SweepRow>> {
    let baseline = score_table(d, BASELINE)?;
    fractions
        .iter()
        .map(|&fraction| {
            let cutoffs = SieveCutoffs::from_table(&baseline, fraction)?;
            let assignments = assign_interventions(&baseline, &cutoffs);
            let round = compose_counterfactual(d, &assignments)?;
            Ok(SweepRow {
                fraction,
                summary: evaluate_round(&round, boot)?,
            })
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "fraction,mean_ambiguity,ambiguity_ci_lo,ambiguity_ci_hi,mean_disagreement,disagreement_ci_lo,disagreement_ci_hi,affected_count";

#[derive(Serialize, Deserialize)]
struct SweepCsvRow {
    fraction: f64,
    mean_ambiguity: f64,
    ambiguity_ci_lo: f64,
    ambiguity_ci_hi: f64,
    mean_disagreement: f64,
    disagreement_ci_lo: f64,
    disagreement_ci_hi: f64,
    affected_count: usize,
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        let s = &r.summary;
        w.serialize(SweepCsvRow {
            fraction: r.fraction,
            mean_ambiguity: s.mean_ambiguity,
            ambiguity_ci_lo: s.ci_ambiguity.0,
            ambiguity_ci_hi: s.ci_ambiguity.1,
            mean_disagreement: s.mean_disagreement,
            disagreement_ci_lo: s.ci_disagreement.0,
            disagreement_ci_hi: s.ci_disagreement.1,
            affected_count: s.affected_count,
        })
        .expect("in-memory csv write");
    }
    if rows.is_empty() {
        return format!("{SWEEP_HEADER}\n");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Parses sweep CSV. Instance counts are not part of the layout and come
/// back as 0.
pub fn sweep_from_csv(bytes: &[u8]) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_reader(bytes);
    reader
        .deserialize::<SweepCsvRow>()
        .map(|row| {
            let r = row.map_err(|e| Error::Parse {
                position: e
                    .position()
                    .map(|p| format!("sweep line {}", p.line()))
                    .unwrap_or_else(|| "sweep".to_owned()),
                message: e.to_string(),
            })?;
            Ok(SweepRow {
                fraction: r.fraction,
                summary: RoundSummary {
                    mean_ambiguity: r.mean_ambiguity,
                    mean_disagreement: r.mean_disagreement,
                    ci_ambiguity: (r.ambiguity_ci_lo, r.ambiguity_ci_hi),
                    ci_disagreement: (r.disagreement_ci_lo, r.disagreement_ci_hi),
                    instance_count: 0,
                    affected_count: r.affected_count,
                },
            })
        })
        .collect()
}

/// Permutation p-values for the per-instance ambiguity and disagreement of a
/// round against the baseline table.
pub fn compare_to_baseline(
    round: &ScoreTable,
    baseline: &ScoreTable,
    replicates: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    Ok((
        permutation_test(&round.ambiguities(), &baseline.ambiguities(), replicates, seed)?,
        permutation_test(&round.disagreements(), &baseline.disagreements(), replicates, seed)?,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceKind {
    MostAmbiguous,
    MostDisagreement,
}

impl SliceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SliceKind::MostAmbiguous => "most_ambiguous",
            SliceKind::MostDisagreement => "most_disagreement",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionSlice {
    pub condition: String,
    pub mean_ambiguity: f64,
    pub mean_disagreement: f64,
    /// `100 * (baseline - condition) / |baseline|`; `None` when the baseline
    /// mean is 0. Positive values are reductions.
    pub ambiguity_change_pct: Option<f64>,
    pub disagreement_change_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceReport {
    pub slice: SliceKind,
    pub members: Vec<InstanceId>,
    pub conditions: Vec<ConditionSlice>,
}

impl SliceReport {
    pub fn condition(&self, name: &str) -> Option<&ConditionSlice> {
        self.conditions.iter().find(|c| c.condition == name)
    }
}

/// Percent reduction relative to `base`.
pub fn percent_reduction(base: f64, value: f64) -> Option<f64> {
    if base == 0.0 {
        None
    } else {
        Some(100.0 * (base - value) / base.abs())
    }
}

/// Slice reports from precomputed tables. `tables` lists every condition to
/// report (baseline included); members come from `baseline` only.
pub fn slice_report_from_tables(
    baseline: &ScoreTable,
    tables: &[&ScoreTable],
    slice_fraction: f64,
) -> Result<(SliceReport, SliceReport)> {
    if baseline.is_empty() {
        return Err(Error::Empty("baseline score table"));
    }
    let k = top_count(slice_fraction, baseline.len());
    if k == 0 {
        return Err(Error::invalid(format!(
            "slice fraction {slice_fraction} selects no instances out of {}",
            baseline.len()
        )));
    }
    let build = |slice: SliceKind| -> Result<SliceReport> {
        let metric = |t: &ScoreTable| match slice {
            SliceKind::MostAmbiguous => t.ambiguities(),
            SliceKind::MostDisagreement => t.disagreements(),
        };
        let scores = metric(baseline);
        let cutoff = quantile_cutoff(&scores, slice_fraction)?;
        let members: Vec<InstanceId> = baseline
            .rows
            .iter()
            .zip(&scores)
            .filter(|&(_, &s)| cutoff.admits(s))
            .map(|(r, _)| r.instance_id.clone())
            .collect();

        let slice_means = |t: &ScoreTable| -> Result<(f64, f64)> {
            let mut amb = Vec::with_capacity(members.len());
            let mut dis = Vec::with_capacity(members.len());
            for id in &members {
                let row = t.row(id).ok_or_else(|| Error::MissingScores {
                    instance: id.to_string(),
                    condition: t.condition.clone(),
                })?;
                amb.push(row.ambiguity);
                dis.push(row.disagreement);
            }
            Ok((mean(&amb).expect("nonempty"), mean(&dis).expect("nonempty")))
        };
        let (base_amb, base_dis) = slice_means(baseline)?;
        let conditions = tables
            .iter()
            .map(|t| {
                let (a, d) = slice_means(t)?;
                Ok(ConditionSlice {
                    condition: t.condition.clone(),
                    mean_ambiguity: a,
                    mean_disagreement: d,
                    ambiguity_change_pct: percent_reduction(base_amb, a),
                    disagreement_change_pct: percent_reduction(base_dis, d),
                })
            })
            .collect::<Result<_>>()?;
        Ok(SliceReport {
            slice,
            members,
            conditions,
        })
    };
    Ok((build(SliceKind::MostAmbiguous)?, build(SliceKind::MostDisagreement)?))
}

/// "Most ambiguous" and "most disagreement" slices selected on baseline
/// scores and tracked across the baseline, context and deliberation
/// conditions.
pub fn slice_report(d: &Dataset, slice_fraction: f64) -> Result<(SliceReport, SliceReport)> {
    let baseline = score_table(d, BASELINE)?;
    let context = score_table(d, CONTEXT)?;
    let deliberation = score_table(d, DELIBERATION)?;
    slice_report_from_tables(&baseline, &[&baseline, &context, &deliberation], slice_fraction)
}

pub const SLICE_HEADER: &str = "slice,metric,condition,members,mean,percent_change";

/// Long-format slice table: one row per slice x metric x condition.
pub fn slices_to_csv(reports: &[&SliceReport]) -> String {
    let mut out = format!("{SLICE_HEADER}\n");
    let fmt_pct = |p: Option<f64>| p.map_or_else(|| "NA".to_owned(), |v| v.to_string());
    for r in reports {
        for (metric, pick) in [
            ("ambiguity", (|c: &ConditionSlice| (c.mean_ambiguity, c.ambiguity_change_pct)) as fn(&ConditionSlice) -> (f64, Option<f64>)),
            ("disagreement", |c: &ConditionSlice| (c.mean_disagreement, c.disagreement_change_pct)),
        ] {
            for c in &r.conditions {
                let (m, pct) = pick(c);
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.slice.as_str(),
                    metric,
                    c.condition,
                    r.members.len(),
                    m,
                    fmt_pct(pct)
                ));
            }
        }
    }
    out
}
