//! Quantile-threshold intervention assignment.
//!
//! Instances whose baseline ambiguity reaches the top-fraction cutoff get
//! context; of the rest, those whose disagreement reaches its cutoff get
//! deliberation; everything else is left alone. Ambiguity is always checked
//! first.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ScoreTable;
use crate::model::{InstanceId, BASELINE, CONTEXT, DELIBERATION};
use crate::numeric::top_count;

/// Score threshold at or above which an instance qualifies. `Unreachable`
/// admits nothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    At(f64),
    Unreachable,
}

impl Cutoff {
    pub fn admits(&self, score: f64) -> bool {
        match *self {
            Cutoff::At(c) => score >= c,
            Cutoff::Unreachable => false,
        }
    }

    pub fn value(&self) -> f64 {
        match *self {
            Cutoff::At(c) => c,
            Cutoff::Unreachable => f64::INFINITY,
        }
    }
}

impl fmt::Display for Cutoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cutoff::At(c) => write!(f, "{c}"),
            Cutoff::Unreachable => f.write_str("inf"),
        }
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("fraction must lie in [0, 1], got {fraction}")));
    }
    Ok(())
}

/// The `ceil(fraction * n)`-th largest score, or `Unreachable` when that
/// count is zero. Ties at the cutoff all qualify.
pub fn quantile_cutoff(scores: &[f64], fraction: f64) -> Result<Cutoff> {
    check_fraction(fraction)?;
    if scores.is_empty() {
        return Err(Error::Empty("scores for quantile cutoff"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("NaN score"));
    }
    let k = top_count(fraction, scores.len());
    if k == 0 {
        return Ok(Cutoff::Unreachable);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    Ok(Cutoff::At(sorted[k - 1]))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SieveCutoffs {
    pub ambiguity_fraction: f64,
    pub disagreement_fraction: f64,
    pub ambiguity_cutoff: Cutoff,
    pub disagreement_cutoff: Cutoff,
}

impl SieveCutoffs {
    /// Cutoffs for one shared fraction.
    pub fn from_table(table: &ScoreTable, fraction: f64) -> Result<Self> {
        Self::from_table_split(table, fraction, fraction)
    }

    /// Cutoffs with separate fractions per metric. Both are computed over all
    /// instances of the table.
    pub fn from_table_split(
        table: &ScoreTable,
        ambiguity_fraction: f64,
        disagreement_fraction: f64,
    ) -> Result<Self> {
        Ok(Self {
            ambiguity_fraction,
            disagreement_fraction,
            ambiguity_cutoff: quantile_cutoff(&table.ambiguities(), ambiguity_fraction)?,
            disagreement_cutoff: quantile_cutoff(&table.disagreements(), disagreement_fraction)?,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Context,
    Deliberation,
    None,
}

impl Decision {
    /// Condition whose annotations an instance with this decision draws from.
    pub fn source_condition(self) -> &'static str {
        match self {
            Decision::Context => CONTEXT,
            Decision::Deliberation => DELIBERATION,
            Decision::None => BASELINE,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Context => "context",
            Decision::Deliberation => "deliberation",
            Decision::None => "none",
        }
    }

    pub fn is_intervention(self) -> bool {
        self != Decision::None
    }
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterventionAssignment {
    pub instance_id: InstanceId,
    pub decision: Decision,
    pub ambiguity: f64,
    pub disagreement: f64,
}

pub fn assign_interventions(table: &ScoreTable, cutoffs: &SieveCutoffs) -> Vec<InterventionAssignment> {
    table
        .rows
        .iter()
        .map(|row| {
            let decision = if cutoffs.ambiguity_cutoff.admits(row.ambiguity) {
                Decision::Context
            } else if cutoffs.disagreement_cutoff.admits(row.disagreement) {
                Decision::Deliberation
            } else {
                Decision::None
            };
            InterventionAssignment {
                instance_id: row.instance_id.clone(),
                decision,
                ambiguity: row.ambiguity,
                disagreement: row.disagreement,
            }
        })
        .collect()
}

/// Cutoffs from `table` at `fraction`, then assignments.
pub fn sieve(table: &ScoreTable, fraction: f64) -> Result<(SieveCutoffs, Vec<InterventionAssignment>)> {
    let cutoffs = SieveCutoffs::from_table(table, fraction)?;
    let assignments = assign_interventions(table, &cutoffs);
    Ok((cutoffs, assignments))
}

pub fn assignments_to_csv(assignments: &[InterventionAssignment]) -> String {
    let mut out = String::from("instance,decision,ambiguity,disagreement\n");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    for a in assignments {
        w.write_record([
            a.instance_id.as_str(),
            a.decision.as_str(),
            &a.ambiguity.to_string(),
            &a.disagreement.to_string(),
        ])
        .expect("in-memory csv write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"));
    out
}

#[derive(Serialize)]
struct AssignmentDoc<'a> {
    cutoffs: &'a SieveCutoffs,
    assignments: &'a [InterventionAssignment],
}

pub fn assignments_to_json(cutoffs: &SieveCutoffs, assignments: &[InterventionAssignment]) -> String {
    let mut s = serde_json::to_string_pretty(&AssignmentDoc { cutoffs, assignments })
        .expect("assignments serialize");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::InstanceScores;

    fn table(scores: &[(f64, f64)]) -> ScoreTable {
        ScoreTable {
            condition: BASELINE.into(),
            rows: scores
                .iter()
                .enumerate()
                .map(|(i, &(a, d))| InstanceScores {
                    instance_id: format!("x{i:03}").into(),
                    ambiguity: a,
                    disagreement: d,
                    annotator_count: 5,
                })
                .collect(),
            warnings: vec![],
        }
    }

    #[test]
    fn fifth_largest_of_fifty() {
        let scores: Vec<f64> = (0..50).map(|i| i as f64).collect();
        assert_eq!(quantile_cutoff(&scores, 0.1).unwrap(), Cutoff::At(45.0));
    }

    #[test]
    fn zero_fraction_is_unreachable() {
        assert_eq!(quantile_cutoff(&[3.0, 1.0], 0.0).unwrap(), Cutoff::Unreachable);
        assert!(!Cutoff::Unreachable.admits(f64::MAX));
    }

    #[test]
    fn ties_all_qualify() {
        let c = quantile_cutoff(&[0.4; 30], 0.1).unwrap();
        assert!([0.4; 30].iter().all(|&s| c.admits(s)));
    }

    #[test]
    fn cutoff_errors() {
        assert!(matches!(quantile_cutoff(&[], 0.1), Err(Error::Empty(_))));
        assert!(quantile_cutoff(&[1.0], 1.5).is_err());
        assert!(quantile_cutoff(&[1.0], -0.1).is_err());
        assert!(quantile_cutoff(&[1.0], f64::NAN).is_err());
    }

    #[test]
    fn ambiguity_takes_priority() {
        let t = table(&[(0.9, 5.0), (0.1, 4.0), (0.2, -3.0), (0.3, -2.0)]);
        let fixed = SieveCutoffs {
            ambiguity_fraction: 0.25,
            disagreement_fraction: 0.5,
            ambiguity_cutoff: Cutoff::At(0.9),
            disagreement_cutoff: Cutoff::At(4.0),
        };
        let d: Vec<_> = assign_interventions(&t, &fixed).iter().map(|a| a.decision).collect();
        assert_eq!(
            d,
            [Decision::Context, Decision::Deliberation, Decision::None, Decision::None]
        );
    }

    #[test]
    fn cutoffs_use_all_instances() {
        // the top disagreement instance is taken by context; deliberation's
        // cutoff is still the overall top-quarter value
        let t = table(&[(0.9, 5.0), (0.1, 4.0), (0.2, -3.0), (0.3, -2.0)]);
        let (cutoffs, a) = sieve(&t, 0.25).unwrap();
        assert_eq!(cutoffs.disagreement_cutoff, Cutoff::At(5.0));
        assert_eq!(a[0].decision, Decision::Context);
        assert!(a[1..].iter().all(|x| x.decision == Decision::None));
    }

    #[test]
    fn csv_layout() {
        let t = table(&[(0.9, 5.0), (0.1, 4.0)]);
        let (_, a) = sieve(&t, 0.5).unwrap();
        let csv = assignments_to_csv(&a);
        assert_eq!(
            csv,
            "instance,decision,ambiguity,disagreement\nx000,context,0.9,5\nx001,none,0.1,4\n"
        );
    }
}
