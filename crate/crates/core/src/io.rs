//! Dataset file formats.
//!
//! JSON: a single document holding the scale, instances and every condition's
//! annotations. CSV: an annotations table with header
//! `condition,instance,annotator,lower,upper` plus a sidecar JSON document
//! holding the scale, the instances and optionally the declared condition
//! names. Rating values in files are in raw scale units; they are normalized
//! to `[0, 1]` on ingestion and mapped back on output.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    normalize_rating, validate_dataset, ConditionSet, Dataset, Instance, RangeAnnotation,
    RatingScale, ValidationReport, Violation,
};

/// Input bytes in one of the two supported layouts.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Json(&'a [u8]),
    Csv { annotations: &'a [u8], sidecar: &'a [u8] },
}

#[derive(Serialize, Deserialize)]
struct JsonDataset {
    scale: RatingScale,
    instances: Vec<Instance>,
    conditions: Vec<JsonCondition>,
}

#[derive(Serialize, Deserialize)]
struct JsonCondition {
    name: String,
    annotations: Vec<RawAnnotation>,
}

#[derive(Serialize, Deserialize)]
struct RawAnnotation {
    instance: String,
    annotator: String,
    lower: f64,
    upper: f64,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    scale: RatingScale,
    instances: Vec<Instance>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    conditions: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    condition: String,
    instance: String,
    annotator: String,
    lower: f64,
    upper: f64,
}

fn json_error(e: serde_json::Error, what: &str) -> Error {
    Error::Parse {
        position: format!("{what} line {}, column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    let position = e
        .position()
        .map(|p| format!("annotations line {}, record {}", p.line(), p.record()))
        .unwrap_or_else(|| "annotations".to_owned());
    Error::Parse {
        position,
        message: e.to_string(),
    }
}

/// Normalizes one raw record; inverted ranges become violations and are left
/// out of the dataset.
fn push_record(
    scale: &RatingScale,
    raw: RawAnnotation,
    record: String,
    out: &mut Vec<RangeAnnotation>,
    report: &mut ValidationReport,
) -> Result<()> {
    if raw.lower.is_nan() || raw.upper.is_nan() || raw.upper < raw.lower {
        report.push(Violation::InvalidRange {
            record: format!("{record} (instance `{}`, annotator `{}`)", raw.instance, raw.annotator),
            lower: raw.lower,
            upper: raw.upper,
        });
        return Ok(());
    }
    let lower = normalize_rating(raw.lower, scale)?;
    let upper = normalize_rating(raw.upper, scale)?;
    out.push(RangeAnnotation::new(raw.instance, raw.annotator, lower, upper));
    Ok(())
}

/// Parses a source into a canonical dataset together with every invariant
/// violation found. Only syntax errors and a degenerate scale fail outright.
pub fn load_dataset(source: Source<'_>) -> Result<(Dataset, ValidationReport)> {
    let mut report = ValidationReport::default();
    let dataset = match source {
        Source::Json(bytes) => {
            let doc: JsonDataset =
                serde_json::from_slice(bytes).map_err(|e| json_error(e, "dataset"))?;
            doc.scale.check()?;
            let mut conditions = Vec::with_capacity(doc.conditions.len());
            for cond in doc.conditions {
                let mut annotations = Vec::with_capacity(cond.annotations.len());
                for (idx, raw) in cond.annotations.into_iter().enumerate() {
                    let record = format!("condition `{}` annotation #{}", cond.name, idx + 1);
                    push_record(&doc.scale, raw, record, &mut annotations, &mut report)?;
                }
                conditions.push(ConditionSet::new(cond.name, annotations));
            }
            Dataset::new(doc.scale, doc.instances, conditions)
        }
        Source::Csv { annotations, sidecar } => {
            let meta: Sidecar =
                serde_json::from_slice(sidecar).map_err(|e| json_error(e, "sidecar"))?;
            meta.scale.check()?;
            let mut by_condition: BTreeMap<String, Vec<RangeAnnotation>> = meta
                .conditions
                .iter()
                .map(|c| (c.clone(), Vec::new()))
                .collect();
            let mut declared = meta.conditions.clone();
            declared.sort();
            declared.dedup();
            if declared.len() != meta.conditions.len() {
                for (i, name) in meta.conditions.iter().enumerate() {
                    if meta.conditions[..i].contains(name) {
                        report.push(Violation::DuplicateCondition {
                            condition: name.clone(),
                        });
                    }
                }
            }
            let mut reader = csv::ReaderBuilder::new()
                .trim(csv::Trim::All)
                .from_reader(annotations);
            let headers = reader.headers().map_err(csv_error)?.clone();
            for required in ["condition", "instance", "annotator", "lower", "upper"] {
                if !headers.iter().any(|h| h == required) {
                    return Err(Error::Parse {
                        position: "annotations line 1".to_owned(),
                        message: format!("missing column `{required}`"),
                    });
                }
            }
            for record in reader.records() {
                let record = record.map_err(csv_error)?;
                let line = record.position().map(|p| p.line()).unwrap_or_default();
                let row: CsvRow = record.deserialize(Some(&headers)).map_err(csv_error)?;
                let raw = RawAnnotation {
                    instance: row.instance,
                    annotator: row.annotator,
                    lower: row.lower,
                    upper: row.upper,
                };
                let out = by_condition.entry(row.condition).or_default();
                push_record(&meta.scale, raw, format!("annotations line {line}"), out, &mut report)?;
            }
            let conditions = by_condition
                .into_iter()
                .map(|(name, anns)| ConditionSet::new(name, anns))
                .collect();
            Dataset::new(meta.scale, meta.instances, conditions)
        }
    };
    report.extend(validate_dataset(&dataset));
    Ok((dataset, report))
}

/// Parses and validates a dataset. Structural violations fail with
/// [`Error::Validation`]; instances with too few annotations in a condition
/// are logged and later left out of that condition's score table.
pub fn ingest_dataset(source: Source<'_>) -> Result<Dataset> {
    let (dataset, report) = load_dataset(source)?;
    if report.has_structural() {
        return Err(Error::Validation(report));
    }
    for v in &report.violations {
        log::warn!("{v}");
    }
    Ok(dataset)
}

fn raw_annotation(scale: &RatingScale, a: &RangeAnnotation) -> RawAnnotation {
    RawAnnotation {
        instance: a.instance_id.0.clone(),
        annotator: a.annotator_id.0.clone(),
        lower: scale.denormalize(a.lower),
        upper: scale.denormalize(a.upper),
    }
}

/// Serializes to the JSON layout, values in raw scale units.
pub fn dataset_to_json(d: &Dataset) -> String {
    let doc = JsonDataset {
        scale: d.scale.clone(),
        instances: d.instances.clone(),
        conditions: d
            .conditions
            .iter()
            .map(|c| JsonCondition {
                name: c.condition.clone(),
                annotations: c.annotations.iter().map(|a| raw_annotation(&d.scale, a)).collect(),
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("dataset serializes");
    s.push('\n');
    s
}

/// Serializes to the CSV layout, returning `(annotations_csv, sidecar_json)`.
pub fn dataset_to_csv(d: &Dataset) -> (String, String) {
    let mut w = csv::Writer::from_writer(Vec::new());
    for c in &d.conditions {
        for a in &c.annotations {
            let raw = raw_annotation(&d.scale, a);
            w.serialize(CsvRow {
                condition: c.condition.clone(),
                instance: raw.instance,
                annotator: raw.annotator,
                lower: raw.lower,
                upper: raw.upper,
            })
            .expect("in-memory csv write");
        }
    }
    if d.annotation_count() == 0 {
        w.write_record(["condition", "instance", "annotator", "lower", "upper"])
            .expect("in-memory csv write");
    }
    let table = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    let sidecar = Sidecar {
        scale: d.scale.clone(),
        instances: d.instances.clone(),
        conditions: d.conditions.iter().map(|c| c.condition.clone()).collect(),
    };
    let mut meta = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    meta.push('\n');
    (table, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{
      "scale": {"min": 0, "max": 10},
      "instances": [
        {"id": "x2", "content": "tiger / cat", "context": null, "group": "g1"},
        {"id": "x1", "content": "cup / mug"}
      ],
      "conditions": [
        {"name": "baseline", "annotations": [
          {"instance": "x1", "annotator": "a", "lower": 2, "upper": 6},
          {"instance": "x1", "annotator": "b", "lower": 5, "upper": 5},
          {"instance": "x2", "annotator": "b", "lower": 0, "upper": 10},
          {"instance": "x2", "annotator": "a", "lower": 7, "upper": 9}
        ]}
      ]
    }"#;

    #[test]
    fn json_ingest_normalizes_and_sorts() {
        let d = ingest_dataset(Source::Json(DOC.as_bytes())).unwrap();
        assert_eq!(d.instances[0].id.as_str(), "x1");
        let anns = &d.conditions[0].annotations;
        assert_eq!(anns.len(), 4);
        assert_eq!((anns[0].lower, anns[0].upper), (0.2, 0.6));
        assert_eq!(anns[2].annotator_id.as_str(), "a");
        assert_eq!(anns[3].upper, 1.0);
    }

    #[test]
    fn inverted_range_names_record() {
        let doc = DOC.replace(r#""lower": 7, "upper": 9"#, r#""lower": 8, "upper": 3"#);
        let err = ingest_dataset(Source::Json(doc.as_bytes())).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("annotation #4"), "{msg}");
        assert!(msg.contains("instance `x2`, annotator `a`"), "{msg}");
    }

    #[test]
    fn dangling_and_duplicate_rejected() {
        let dangling = DOC.replace(r#""instance": "x2", "annotator": "a""#, r#""instance": "nope", "annotator": "a""#);
        match ingest_dataset(Source::Json(dangling.as_bytes())) {
            Err(Error::Validation(r)) => assert!(r
                .violations
                .iter()
                .any(|v| matches!(v, Violation::DanglingInstance { .. }))),
            other => panic!("expected validation error, got {other:?}"),
        }
        let dup = DOC.replace(r#""instance": "x1", "annotator": "b""#, r#""instance": "x1", "annotator": "a""#);
        match ingest_dataset(Source::Json(dup.as_bytes())) {
            Err(Error::Validation(r)) => assert!(r
                .violations
                .iter()
                .any(|v| matches!(v, Violation::DuplicateAnnotation { .. }))),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_error_has_position() {
        let broken = &DOC[..120];
        match ingest_dataset(Source::Json(broken.as_bytes())) {
            Err(Error::Parse { position, .. }) => assert!(position.contains("line")),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn csv_matches_json() {
        let d = ingest_dataset(Source::Json(DOC.as_bytes())).unwrap();
        let (table, sidecar) = dataset_to_csv(&d);
        assert!(table.starts_with("condition,instance,annotator,lower,upper\n"));
        let back = ingest_dataset(Source::Csv {
            annotations: table.as_bytes(),
            sidecar: sidecar.as_bytes(),
        })
        .unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_errors_report_line() {
        let sidecar = r#"{"scale": {"min": 1, "max": 7}, "instances": [{"id": "x", "content": ""}]}"#;
        let table = "condition,instance,annotator,lower,upper\nbaseline,x,a,2,3\nbaseline,x,b,6,2\n";
        let err = ingest_dataset(Source::Csv {
            annotations: table.as_bytes(),
            sidecar: sidecar.as_bytes(),
        })
        .unwrap_err();
        assert!(err.to_string().contains("annotations line 3"), "{err}");

        let garbled = "condition,instance,annotator,lower,upper\nbaseline,x,a,2,zzz\n";
        match ingest_dataset(Source::Csv {
            annotations: garbled.as_bytes(),
            sidecar: sidecar.as_bytes(),
        }) {
            Err(Error::Parse { position, .. }) => assert!(position.contains("line 2"), "{position}"),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn declared_empty_condition_survives() {
        let sidecar = r#"{"scale": {"min": 0, "max": 1}, "instances": [{"id": "x", "content": ""}], "conditions": ["baseline", "context"]}"#;
        let table = "condition,instance,annotator,lower,upper\nbaseline,x,a,0.2,0.3\nbaseline,x,b,0.1,0.3\n";
        let d = ingest_dataset(Source::Csv {
            annotations: table.as_bytes(),
            sidecar: sidecar.as_bytes(),
        })
        .unwrap();
        assert!(d.condition("context").unwrap().annotations.is_empty());
    }
}
