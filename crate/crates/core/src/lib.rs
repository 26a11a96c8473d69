//! Uncertainty decomposition and targeted-intervention simulation for
//! range-based rating annotations.
//!
//! Each annotator gives the interval of ratings they find acceptable for an
//! item. Per item, [`metrics`] separates *ambiguity* (how wide individual
//! ranges are) from *disagreement* (how poorly annotators' ranges overlap,
//! beyond what chance would give). [`sieve`] turns baseline scores into
//! per-item interventions: gather context for the most ambiguous items,
//! deliberate on the items with the most disagreement. [`simulation`]
//! composes counterfactual rounds from re-annotated conditions and
//! summarizes them with bootstrap intervals from [`stats`]; [`synthetic`]
//! generates crowds with known intervention effects.

pub mod error;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod sieve;
pub mod simulation;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use io::{dataset_to_csv, dataset_to_json, ingest_dataset, load_dataset, Source};
pub use metrics::{
    annotator_agreement, instance_ambiguity, instance_disagreement, overlap_ratio, score_table,
    InstanceScores, ScoreTable,
};
pub use model::{
    normalize_rating, validate_dataset, AnnotatorId, ConditionSet, Dataset, Instance, InstanceId,
    RangeAnnotation, RatingScale, Span, ValidationReport, Violation, BASELINE, CONTEXT, DELIBERATION,
};
pub use sieve::{
    assign_interventions, quantile_cutoff, Cutoff, Decision, InterventionAssignment, SieveCutoffs,
};
pub use simulation::{
    baseline_summary, compose_counterfactual, compose_uniform, evaluate_round, slice_report,
    threshold_sweep, uniform_round, ComposedRound, RoundSummary, SliceKind, SliceReport, SweepRow,
};
pub use stats::{bootstrap_ci, permutation_test, BootstrapConfig};
pub use synthetic::{generate_dataset, iterate_sieve, CrowdConfig, EffectModel, IterateOptions, Spread};
