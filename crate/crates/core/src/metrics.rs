//! Per-instance uncertainty decomposition.
//!
//! Ambiguity is the mean width of the annotators' ranges. Disagreement is the
//! negated mean of each annotator's overlap-corrected agreement with every
//! peer, where agreement with one peer is the share of the annotator's own
//! range covered by the peer's range minus the peer's width (the overlap ratio
//! expected if the peer's range were placed at random). Agreement is summed,
//! not averaged, over peers, so disagreement lies in `[-(N-1), N-1]`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnnotatorId, Dataset, InstanceId, RangeAnnotation, Span, MIN_ANNOTATORS};
use crate::numeric::{compensated_sum, mean};

/// Fraction of `own` covered by `peer`.
///
/// A zero-width `own` range scores 1 when its point lies inside `peer`, else 0.
pub fn overlap_ratio(own: Span, peer: Span) -> f64 {
    let width = own.width();
    if width <= 0.0 {
        return if peer.contains(own.lower) { 1.0 } else { 0.0 };
    }
    let shared = (own.upper.min(peer.upper) - own.lower.max(peer.lower)).max(0.0);
    shared / width
}

/// Mean range width. `None` for an empty slice.
pub fn ambiguity(spans: &[Span]) -> Option<f64> {
    let widths: Vec<f64> = spans.iter().map(Span::width).collect();
    mean(&widths)
}

/// Overlap-corrected agreement of annotator `i` with every other annotator.
pub fn agreement(i: usize, spans: &[Span]) -> f64 {
    let own = spans[i];
    compensated_sum(
        spans
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, &peer)| overlap_ratio(own, peer) - peer.width()),
    )
}

/// Negated mean agreement. `None` with fewer than two spans.
pub fn disagreement(spans: &[Span]) -> Option<f64> {
    if spans.len() < MIN_ANNOTATORS {
        return None;
    }
    let agreements: Vec<f64> = (0..spans.len()).map(|i| agreement(i, spans)).collect();
    mean(&agreements).map(|m| -m)
}

fn single_instance(annotations: &[RangeAnnotation]) -> Result<Vec<Span>> {
    let first = annotations
        .first()
        .ok_or(Error::Empty("no annotations for instance"))?;
    if let Some(other) = annotations.iter().find(|a| a.instance_id != first.instance_id) {
        return Err(Error::invalid(format!(
            "annotations mix instances `{}` and `{}`",
            first.instance_id, other.instance_id
        )));
    }
    Ok(annotations.iter().map(RangeAnnotation::span).collect())
}

pub fn instance_ambiguity(annotations: &[RangeAnnotation]) -> Result<f64> {
    let spans = single_instance(annotations)?;
    Ok(ambiguity(&spans).expect("nonempty"))
}

/// Agreement of `annotator` with the other annotators of the same instance.
/// Not symmetric between a pair of annotators.
pub fn annotator_agreement(annotator: &AnnotatorId, annotations: &[RangeAnnotation]) -> Result<f64> {
    let spans = single_instance(annotations)?;
    let i = annotations
        .iter()
        .position(|a| &a.annotator_id == annotator)
        .ok_or_else(|| Error::invalid(format!("annotator `{annotator}` has no annotation here")))?;
    if spans.len() < MIN_ANNOTATORS {
        return Err(Error::invalid(format!("annotator `{annotator}` has no peers")));
    }
    Ok(agreement(i, &spans))
}

pub fn instance_disagreement(annotations: &[RangeAnnotation]) -> Result<f64> {
    let spans = single_instance(annotations)?;
    disagreement(&spans).ok_or_else(|| {
        Error::invalid(format!(
            "disagreement needs at least {MIN_ANNOTATORS} annotators, got {}",
            spans.len()
        ))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceScores {
    pub instance_id: InstanceId,
    pub ambiguity: f64,
    pub disagreement: f64,
    pub annotator_count: usize,
}

impl InstanceScores {
    /// Scores one instance's spans; `None` with fewer than two spans.
    pub fn from_spans(instance_id: InstanceId, spans: &[Span]) -> Option<Self> {
        Some(Self {
            instance_id,
            ambiguity: ambiguity(spans)?,
            disagreement: disagreement(spans)?,
            annotator_count: spans.len(),
        })
    }
}

/// Per-instance scores for one condition (or one composed round), sorted by
/// instance id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub condition: String,
    pub rows: Vec<InstanceScores>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CsvScoreRow {
    instance: String,
    ambiguity: f64,
    disagreement: f64,
    annotators: usize,
}

impl ScoreTable {
    /// Scores grouped spans. Groups with fewer than two spans are skipped with
    /// a warning.
    pub fn from_groups(condition: impl Into<String>, groups: Vec<(InstanceId, Vec<Span>)>) -> Self {
        let condition = condition.into();
        let scored: Vec<(InstanceId, usize, Option<InstanceScores>)> = groups
            .into_par_iter()
            .map(|(id, spans)| {
                let n = spans.len();
                let scores = InstanceScores::from_spans(id.clone(), &spans);
                (id, n, scores)
            })
            .collect();
        let mut rows = Vec::with_capacity(scored.len());
        let mut warnings = Vec::new();
        for (id, n, scores) in scored {
            match scores {
                Some(s) => rows.push(s),
                None => warnings.push(format!(
                    "instance `{id}` excluded from `{condition}`: {n} annotation(s), need at least {MIN_ANNOTATORS}"
                )),
            }
        }
        rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        Self {
            condition,
            rows,
            warnings,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn ambiguities(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ambiguity).collect()
    }

    pub fn disagreements(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.disagreement).collect()
    }

    /// `(mean ambiguity, mean disagreement)`, `None` when empty.
    pub fn means(&self) -> Option<(f64, f64)> {
        Some((mean(&self.ambiguities())?, mean(&self.disagreements())?))
    }

    pub fn row(&self, id: &InstanceId) -> Option<&InstanceScores> {
        self.rows
            .binary_search_by(|r| r.instance_id.cmp(id))
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("instance,ambiguity,disagreement,annotators\n");
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(CsvScoreRow {
                instance: r.instance_id.0.clone(),
                ambiguity: r.ambiguity,
                disagreement: r.disagreement,
                annotators: r.annotator_count,
            })
            .expect("in-memory csv write");
        }
        let body = w.into_inner().expect("flush");
        let _ = write!(out, "{}", String::from_utf8(body).expect("utf-8"));
        out
    }

    pub fn from_csv(condition: impl Into<String>, bytes: &[u8]) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(bytes);
        let mut rows = Vec::new();
        for row in reader.deserialize::<CsvScoreRow>() {
            let row = row.map_err(|e| Error::Parse {
                position: e
                    .position()
                    .map(|p| format!("score table line {}", p.line()))
                    .unwrap_or_else(|| "score table".to_owned()),
                message: e.to_string(),
            })?;
            rows.push(InstanceScores {
                instance_id: row.instance.into(),
                ambiguity: row.ambiguity,
                disagreement: row.disagreement,
                annotator_count: row.annotators,
            });
        }
        rows.sort_by(|a, b| a.instance_id.cmp(&b.instance_id));
        Ok(Self {
            condition: condition.into(),
            rows,
            warnings: Vec::new(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("score table serializes");
        s.push('\n');
        s
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        serde_json::from_slice(bytes).map_err(|e| Error::Parse {
            position: format!("score table line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

/// Scores every instance of `d` under `condition`.
///
/// Instances with fewer than two annotations in the condition are left out
/// and listed in the table's warnings.
pub fn score_table(d: &Dataset, condition: &str) -> Result<ScoreTable> {
    let cond = d.condition(condition)?;
    let mut groups: BTreeMap<&InstanceId, Vec<Span>> = cond
        .by_instance()
        .into_iter()
        .map(|(id, anns)| (id, anns.iter().map(|a| a.span()).collect()))
        .collect();
    let mut input = Vec::with_capacity(d.instances.len());
    for inst in &d.instances {
        let spans = groups.remove(&inst.id).unwrap_or_default();
        input.push((inst.id.clone(), spans));
    }
    let mut table = ScoreTable::from_groups(condition, input);
    for orphan in groups.keys() {
        table
            .warnings
            .push(format!("annotations for unknown instance `{orphan}` ignored in `{condition}`"));
    }
    for w in &table.warnings {
        log::warn!("{w}");
    }
    Ok(table)
}
