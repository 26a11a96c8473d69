//! Annotation data model: rating scales, range annotations, instances,
//! per-condition annotation sets and dataset validation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical condition names.
pub const BASELINE: &str = "baseline";
pub const CONTEXT: &str = "context";
pub const DELIBERATION: &str = "deliberation";

/// Fewest annotations an instance needs in a condition to be scored.
pub const MIN_ANNOTATORS: usize = 2;

macro_rules! id_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

id_newtype!(
    /// Identifier of an item being judged.
    InstanceId
);
id_newtype!(
    /// Identifier of an annotator within one condition's pool.
    AnnotatorId
);

/// Raw rating scale endpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: f64,
    pub max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl RatingScale {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        let scale = Self { min, max, label: None };
        scale.check()?;
        Ok(scale)
    }

    pub fn unit() -> Self {
        Self { min: 0.0, max: 1.0, label: None }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn check(&self) -> Result<()> {
        // written so that NaN endpoints also fail
        if !self.min.is_finite() || !self.max.is_finite() || self.max <= self.min {
            return Err(Error::DegenerateScale { min: self.min, max: self.max });
        }
        Ok(())
    }

    /// Maps a unit-scale value back to raw scale units.
    pub fn denormalize(&self, unit: f64) -> f64 {
        if unit == 0.0 {
            self.min
        } else if unit == 1.0 {
            self.max
        } else {
            self.min + unit * (self.max - self.min)
        }
    }
}

/// Maps a raw rating onto `[0, 1]`: `(value - min) / (max - min)`, clamped.
///
/// Out-of-range values are clamped and logged rather than rejected.
pub fn normalize_rating(value: f64, scale: &RatingScale) -> Result<f64> {
    scale.check()?;
    if value.is_nan() {
        return Err(Error::invalid("rating is NaN"));
    }
    if value == scale.min {
        return Ok(0.0);
    }
    if value == scale.max {
        return Ok(1.0);
    }
    let unit = (value - scale.min) / (scale.max - scale.min);
    if !(0.0..=1.0).contains(&unit) {
        log::warn!(
            "rating {value} outside scale [{}, {}]; clamping",
            scale.min,
            scale.max
        );
    }
    Ok(unit.clamp(0.0, 1.0))
}

/// A closed interval on the unit rating scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Span {
    pub lower: f64,
    pub upper: f64,
}

impl Span {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn is_valid(&self) -> bool {
        0.0 <= self.lower && self.lower <= self.upper && self.upper <= 1.0
    }
}

/// One annotator's acceptable rating interval for one instance, unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RangeAnnotation {
    pub instance_id: InstanceId,
    pub annotator_id: AnnotatorId,
    pub lower: f64,
    pub upper: f64,
}

impl RangeAnnotation {
    pub fn new(
        instance_id: impl Into<InstanceId>,
        annotator_id: impl Into<AnnotatorId>,
        lower: f64,
        upper: f64,
    ) -> Self {
        Self {
            instance_id: instance_id.into(),
            annotator_id: annotator_id.into(),
            lower,
            upper,
        }
    }

    pub fn span(&self) -> Span {
        Span::new(self.lower, self.upper)
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: InstanceId,
    pub content: String,
    #[serde(default)]
    pub context: Option<String>,
    #[serde(default)]
    pub group: Option<String>,
}

impl Instance {
    pub fn new(id: impl Into<InstanceId>, content: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            content: content.into(),
            context: None,
            group: None,
        }
    }
}

/// All annotations collected under one treatment.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionSet {
    pub condition: String,
    pub annotations: Vec<RangeAnnotation>,
}

impl ConditionSet {
    pub fn new(condition: impl Into<String>, annotations: Vec<RangeAnnotation>) -> Self {
        Self {
            condition: condition.into(),
            annotations,
        }
    }

    /// Annotations grouped per instance, in instance-id order.
    pub fn by_instance(&self) -> BTreeMap<&InstanceId, Vec<&RangeAnnotation>> {
        let mut groups: BTreeMap<&InstanceId, Vec<&RangeAnnotation>> = BTreeMap::new();
        for a in &self.annotations {
            groups.entry(&a.instance_id).or_default().push(a);
        }
        groups
    }

    /// Annotations for one instance.
    pub fn annotations_for<'a>(
        &'a self,
        instance: &'a InstanceId,
    ) -> impl Iterator<Item = &'a RangeAnnotation> + 'a {
        self.annotations
            .iter()
            .filter(move |a| &a.instance_id == instance)
    }

    fn canonicalize(&mut self) {
        self.annotations.sort_by(|a, b| {
            (&a.instance_id, &a.annotator_id).cmp(&(&b.instance_id, &b.annotator_id))
        });
    }
}

/// Instances plus per-condition range annotations under a shared scale.
///
/// Annotation values are stored on the unit scale; `scale` records the raw
/// endpoints the data was collected on.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub scale: RatingScale,
    pub instances: Vec<Instance>,
    pub conditions: Vec<ConditionSet>,
}

impl Dataset {
    /// Builds a dataset in canonical order. No validation is performed; see
    /// [`validate_dataset`].
    pub fn new(scale: RatingScale, instances: Vec<Instance>, conditions: Vec<ConditionSet>) -> Self {
        let mut d = Self {
            scale,
            instances,
            conditions,
        };
        d.canonicalize();
        d
    }

    /// Sorts instances by id, conditions by name, and annotations by
    /// `(instance_id, annotator_id)`. Stable, so duplicates keep input order.
    pub fn canonicalize(&mut self) {
        self.instances.sort_by(|a, b| a.id.cmp(&b.id));
        self.conditions.sort_by(|a, b| a.condition.cmp(&b.condition));
        for c in &mut self.conditions {
            c.canonicalize();
        }
    }

    pub fn condition(&self, name: &str) -> Result<&ConditionSet> {
        self.conditions
            .iter()
            .find(|c| c.condition == name)
            .ok_or_else(|| Error::UnknownCondition(name.to_owned()))
    }

    pub fn has_condition(&self, name: &str) -> bool {
        self.conditions.iter().any(|c| c.condition == name)
    }

    pub fn instance(&self, id: &InstanceId) -> Option<&Instance> {
        self.instances.iter().find(|i| &i.id == id)
    }

    pub fn annotation_count(&self) -> usize {
        self.conditions.iter().map(|c| c.annotations.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    DegenerateScale { min: f64, max: f64 },
    DuplicateInstance { instance: InstanceId },
    DuplicateCondition { condition: String },
    InvalidRange {
        record: String,
        lower: f64,
        upper: f64,
    },
    DuplicateAnnotation {
        condition: String,
        instance: InstanceId,
        annotator: AnnotatorId,
    },
    DanglingInstance {
        record: String,
        instance: InstanceId,
    },
    InsufficientAnnotators {
        condition: String,
        instance: InstanceId,
        count: usize,
    },
}

impl Violation {
    /// Structural violations make a dataset unusable. Insufficient annotators
    /// only cause the instance to be left out of score tables.
    pub fn is_structural(&self) -> bool {
        !matches!(self, Violation::InsufficientAnnotators { .. })
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DegenerateScale { min, max } => {
                write!(f, "degenerate scale: max ({max}) must exceed min ({min})")
            }
            Violation::DuplicateInstance { instance } => {
                write!(f, "duplicate instance id `{instance}`")
            }
            Violation::DuplicateCondition { condition } => {
                write!(f, "duplicate condition `{condition}`")
            }
            Violation::InvalidRange { record, lower, upper } => write!(
                f,
                "invalid range at {record}: lower={lower}, upper={upper} (need lower <= upper within the scale)"
            ),
            Violation::DuplicateAnnotation {
                condition,
                instance,
                annotator,
            } => write!(
                f,
                "duplicate annotation in condition `{condition}`: instance `{instance}`, annotator `{annotator}`"
            ),
            Violation::DanglingInstance { record, instance } => {
                write!(f, "unknown instance id `{instance}` at {record}")
            }
            Violation::InsufficientAnnotators {
                condition,
                instance,
                count,
            } => write!(
                f,
                "insufficient annotators: instance `{instance}` has {count} annotation(s) in condition `{condition}` (need at least {MIN_ANNOTATORS})"
            ),
        }
    }
}

/// Every invariant violation found in a dataset; empty when valid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_structural(&self) -> bool {
        self.violations.iter().any(Violation::is_structural)
    }

    pub fn push(&mut self, v: Violation) {
        self.violations.push(v);
    }

    pub fn extend(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

pub fn validate_dataset(d: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    if d.scale.check().is_err() {
        report.push(Violation::DegenerateScale {
            min: d.scale.min,
            max: d.scale.max,
        });
    }

    let mut ids = BTreeSet::new();
    for inst in &d.instances {
        if !ids.insert(&inst.id) {
            report.push(Violation::DuplicateInstance {
                instance: inst.id.clone(),
            });
        }
    }

    let mut names = BTreeSet::new();
    for cond in &d.conditions {
        if !names.insert(cond.condition.as_str()) {
            report.push(Violation::DuplicateCondition {
                condition: cond.condition.clone(),
            });
        }

        let mut seen = BTreeSet::new();
        let mut counts: BTreeMap<&InstanceId, usize> = BTreeMap::new();
        for a in &cond.annotations {
            let record = || {
                format!(
                    "condition `{}` (instance `{}`, annotator `{}`)",
                    cond.condition, a.instance_id, a.annotator_id
                )
            };
            if !a.span().is_valid() {
                report.push(Violation::InvalidRange {
                    record: record(),
                    lower: a.lower,
                    upper: a.upper,
                });
            }
            if !ids.contains(&a.instance_id) {
                report.push(Violation::DanglingInstance {
                    record: record(),
                    instance: a.instance_id.clone(),
                });
            }
            if !seen.insert((&a.instance_id, &a.annotator_id)) {
                report.push(Violation::DuplicateAnnotation {
                    condition: cond.condition.clone(),
                    instance: a.instance_id.clone(),
                    annotator: a.annotator_id.clone(),
                });
            }
            *counts.entry(&a.instance_id).or_default() += 1;
        }
        for (instance, count) in counts {
            if count < MIN_ANNOTATORS {
                report.push(Violation::InsufficientAnnotators {
                    condition: cond.condition.clone(),
                    instance: instance.clone(),
                    count,
                });
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        Dataset::new(
            RatingScale::unit(),
            vec![Instance::new("a", "cup / mug"), Instance::new("b", "cat / car")],
            vec![ConditionSet::new(
                BASELINE,
                vec![
                    RangeAnnotation::new("b", "w2", 0.1, 0.2),
                    RangeAnnotation::new("a", "w1", 0.3, 0.5),
                    RangeAnnotation::new("a", "w2", 0.4, 0.6),
                    RangeAnnotation::new("b", "w1", 0.0, 0.3),
                ],
            )],
        )
    }

    #[test]
    fn normalize_examples() {
        let ten = RatingScale::new(0.0, 10.0).unwrap();
        let seven = RatingScale::new(1.0, 7.0).unwrap();
        assert_eq!(normalize_rating(5.0, &ten).unwrap(), 0.5);
        assert_eq!(normalize_rating(0.0, &ten).unwrap(), 0.0);
        assert_eq!(normalize_rating(10.0, &ten).unwrap(), 1.0);
        assert_eq!(normalize_rating(4.0, &seven).unwrap(), 0.5);
        assert_eq!(normalize_rating(12.0, &ten).unwrap(), 1.0);
        assert_eq!(normalize_rating(-0.5, &ten).unwrap(), 0.0);
    }

    #[test]
    fn degenerate_scale_rejected() {
        assert!(matches!(
            RatingScale::new(3.0, 3.0),
            Err(Error::DegenerateScale { .. })
        ));
        let bad = RatingScale { min: 5.0, max: 1.0, label: None };
        assert!(normalize_rating(2.0, &bad).is_err());
        let nan = RatingScale { min: f64::NAN, max: 1.0, label: None };
        assert!(nan.check().is_err());
    }

    #[test]
    fn canonical_order() {
        let d = toy();
        let keys: Vec<_> = d.conditions[0]
            .annotations
            .iter()
            .map(|a| (a.instance_id.as_str(), a.annotator_id.as_str()))
            .collect();
        assert_eq!(keys, [("a", "w1"), ("a", "w2"), ("b", "w1"), ("b", "w2")]);
    }

    #[test]
    fn valid_dataset_has_empty_report() {
        assert!(validate_dataset(&toy()).is_empty());
    }

    #[test]
    fn single_annotator_flagged() {
        let mut d = toy();
        d.conditions[0].annotations.pop();
        let report = validate_dataset(&d);
        assert_eq!(report.violations.len(), 1);
        assert!(report.violations[0].to_string().contains("insufficient annotators"));
        assert!(!report.has_structural());
    }

    #[test]
    fn duplicate_condition_flagged() {
        let mut d = toy();
        let copy = d.conditions[0].clone();
        d.conditions.push(copy);
        let report = validate_dataset(&d);
        assert!(report
            .violations
            .iter()
            .any(|v| v.to_string().contains("duplicate condition")));
    }

    #[test]
    fn every_violation_enumerated() {
        let mut d = toy();
        d.instances.push(Instance::new("a", "again"));
        let anns = &mut d.conditions[0].annotations;
        anns.push(RangeAnnotation::new("a", "w1", 0.2, 0.3));
        anns.push(RangeAnnotation::new("zz", "w1", 0.2, 0.3));
        anns.push(RangeAnnotation::new("b", "w3", 0.8, 0.3));
        let report = validate_dataset(&d);
        let kinds: Vec<_> = report
            .violations
            .iter()
            .map(std::mem::discriminant)
            .collect();
        assert!(kinds.contains(&std::mem::discriminant(&Violation::DuplicateInstance {
            instance: "a".into()
        })));
        assert_eq!(report.violations.len(), 5, "{report}");
    }
}
