use std::collections::BTreeSet;

use judgment_sieve::metrics::{agreement, ambiguity, disagreement, overlap_ratio};
use judgment_sieve::sieve::sieve;
use judgment_sieve::simulation::{compose_counterfactual, evaluate_round, threshold_sweep};
use judgment_sieve::{
    bootstrap_ci, dataset_to_json, ingest_dataset, normalize_rating, permutation_test,
    score_table, BootstrapConfig, ConditionSet, Dataset, Decision, Instance, InstanceScores,
    RangeAnnotation, RatingScale, ScoreTable, Source, Span, BASELINE, CONTEXT, DELIBERATION,
};
use proptest::prelude::*;

fn span() -> impl Strategy<Value = Span> {
    (0.0..=1.0f64, 0.0..=1.0f64).prop_map(|(a, b)| Span::new(a.min(b), a.max(b)))
}

fn spans(min: usize, max: usize) -> impl Strategy<Value = Vec<Span>> {
    prop::collection::vec(span(), min..=max)
}

fn table_of(scores: &[(f64, f64)]) -> ScoreTable {
    ScoreTable {
        condition: BASELINE.into(),
        rows: scores
            .iter()
            .enumerate()
            .map(|(i, &(a, d))| InstanceScores {
                instance_id: format!("x{i:04}").into(),
                ambiguity: a,
                disagreement: d,
                annotator_count: 3,
            })
            .collect(),
        warnings: vec![],
    }
}

fn three_condition_dataset(ranges: &[Vec<(Span, Span, Span)>]) -> Dataset {
    let instances = (0..ranges.len()).map(|i| Instance::new(format!("i{i:03}"), "")).collect();
    let mut conds = [Vec::new(), Vec::new(), Vec::new()];
    for (i, per) in ranges.iter().enumerate() {
        for (a, (b, c, d)) in per.iter().enumerate() {
            for (k, s) in [b, c, d].into_iter().enumerate() {
                conds[k].push(RangeAnnotation::new(format!("i{i:03}"), format!("p{k}-{a}"), s.lower, s.upper));
            }
        }
    }
    let [b, c, d] = conds;
    Dataset::new(
        RatingScale::unit(),
        instances,
        vec![
            ConditionSet::new(BASELINE, b),
            ConditionSet::new(CONTEXT, c),
            ConditionSet::new(DELIBERATION, d),
        ],
    )
}

fn dataset_strategy() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(prop::collection::vec((span(), span(), span()), 2..6), 4..20)
        .prop_map(|r| three_condition_dataset(&r))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn translation_invariance(s in spans(2, 8), delta in -0.5..0.5f64) {
        let moved: Vec<Span> = s.iter().map(|x| Span::new(x.lower + delta, x.upper + delta)).collect();
        prop_assume!(moved.iter().all(Span::is_valid));
        prop_assert!((ambiguity(&s).unwrap() - ambiguity(&moved).unwrap()).abs() < 1e-9);
        prop_assert!((disagreement(&s).unwrap() - disagreement(&moved).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn permutation_invariance(s in spans(2, 8), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = s.clone();
        shuffled.shuffle(&mut judgment_sieve::numeric::substream(seed, &[]));
        prop_assert!((ambiguity(&s).unwrap() - ambiguity(&shuffled).unwrap()).abs() < 1e-12);
        prop_assert!((disagreement(&s).unwrap() - disagreement(&shuffled).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn score_bounds(s in spans(2, 10)) {
        let n = s.len() as f64;
        let a = ambiguity(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(disagreement(&s).unwrap().abs() <= n - 1.0);
        for (i, own) in s.iter().enumerate() {
            for (j, peer) in s.iter().enumerate() {
                if i != j {
                    let term = overlap_ratio(*own, *peer) - peer.width();
                    prop_assert!((-1.0..=1.0).contains(&term));
                }
            }
            prop_assert!(agreement(i, &s).abs() <= n - 1.0);
        }
    }

    #[test]
    fn widening_never_lowers_ambiguity(s in spans(1, 8), idx in any::<prop::sample::Index>(), grow in 0.0..1.0f64) {
        let i = idx.index(s.len());
        let mut wider = s.clone();
        wider[i] = Span::new(wider[i].lower * (1.0 - grow), wider[i].upper + (1.0 - wider[i].upper) * grow);
        prop_assert!(ambiguity(&wider).unwrap() >= ambiguity(&s).unwrap());
    }

    #[test]
    fn normalize_monotone(a in -20.0..20.0f64, b in -20.0..20.0f64, min in -5.0..5.0f64, span in 0.1..10.0f64) {
        let scale = RatingScale::new(min, min + span).unwrap();
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(normalize_rating(lo, &scale).unwrap() <= normalize_rating(hi, &scale).unwrap());
        prop_assert_eq!(normalize_rating(min, &scale).unwrap(), 0.0);
        prop_assert_eq!(normalize_rating(min + span, &scale).unwrap(), 1.0);
    }

    #[test]
    fn ingest_is_order_independent(d in dataset_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let json = dataset_to_json(&d);
        let mut doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        let mut rng = judgment_sieve::numeric::substream(seed, &[]);
        doc["instances"].as_array_mut().unwrap().shuffle(&mut rng);
        for c in doc["conditions"].as_array_mut().unwrap() {
            c["annotations"].as_array_mut().unwrap().shuffle(&mut rng);
        }
        doc["conditions"].as_array_mut().unwrap().shuffle(&mut rng);
        let shuffled = serde_json::to_vec(&doc).unwrap();
        let a = ingest_dataset(Source::Json(json.as_bytes())).unwrap();
        let b = ingest_dataset(Source::Json(&shuffled)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a, d);
    }

    #[test]
    fn raw_scale_round_trip(d in dataset_strategy()) {
        let mut raw = d.clone();
        raw.scale = RatingScale::new(1.0, 7.0).unwrap();
        let once = ingest_dataset(Source::Json(dataset_to_json(&raw).as_bytes())).unwrap();
        let twice = ingest_dataset(Source::Json(dataset_to_json(&once).as_bytes())).unwrap();
        prop_assert_eq!(once.instances.len(), raw.instances.len());
        for (x, y) in [(&raw, &once), (&once, &twice)] {
            for (cx, cy) in x.conditions.iter().zip(&y.conditions) {
                prop_assert_eq!(&cx.condition, &cy.condition);
                prop_assert_eq!(cx.annotations.len(), cy.annotations.len());
                for (ax, ay) in cx.annotations.iter().zip(&cy.annotations) {
                    prop_assert_eq!(&ax.instance_id, &ay.instance_id);
                    prop_assert_eq!(&ax.annotator_id, &ay.annotator_id);
                    prop_assert!((ax.lower - ay.lower).abs() < 1e-12);
                    prop_assert!((ax.upper - ay.upper).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn sieve_partition_coverage_monotonicity(
        scores in prop::collection::vec((0.0..1.0f64, -5.0..5.0f64), 1..80),
        scale in 0.1..10.0f64,
    ) {
        let t = table_of(&scores);
        let n = scores.len();
        let mut previous: BTreeSet<String> = BTreeSet::new();
        for f in [0.0, 0.05, 0.1, 0.25, 0.5, 1.0] {
            let (_, a) = sieve(&t, f).unwrap();
            prop_assert_eq!(a.len(), n);
            let ctx = a.iter().filter(|x| x.decision == Decision::Context).count();
            let treated: BTreeSet<String> = a
                .iter()
                .filter(|x| x.decision.is_intervention())
                .map(|x| x.instance_id.to_string())
                .collect();
            if f > 0.0 {
                prop_assert!(ctx as f64 >= (f * n as f64 - 1e-9).ceil());
            }
            prop_assert!(previous.is_subset(&treated));
            previous = treated;
            // deterministic
            prop_assert_eq!(&a, &sieve(&t, f).unwrap().1);
            // scaling ambiguity keeps the context set
            let scaled: Vec<(f64, f64)> = scores.iter().map(|&(x, d)| (x * scale, d)).collect();
            let (_, b) = sieve(&table_of(&scaled), f).unwrap();
            let ctx_a: Vec<_> = a.iter().filter(|x| x.decision == Decision::Context).map(|x| &x.instance_id).collect();
            let ctx_b: Vec<_> = b.iter().filter(|x| x.decision == Decision::Context).map(|x| &x.instance_id).collect();
            prop_assert_eq!(ctx_a, ctx_b);
        }
    }

    #[test]
    fn bootstrap_endpoints_bracket(values in prop::collection::vec(-10.0..10.0f64, 1..40), seed in any::<u64>()) {
        let cfg = BootstrapConfig { replicates: 400, level: 0.95, seed };
        let (lo, hi) = bootstrap_ci(&values, &cfg).unwrap();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min <= lo && lo <= hi && hi <= max);
        prop_assert_eq!((lo, hi), bootstrap_ci(&values, &cfg).unwrap());
    }

    #[test]
    fn permutation_p_in_unit_interval(
        a in prop::collection::vec(-5.0..5.0f64, 1..12),
        b in prop::collection::vec(-5.0..5.0f64, 1..12),
        seed in any::<u64>(),
    ) {
        let p = permutation_test(&a, &b, 300, seed).unwrap();
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert_eq!(p, permutation_test(&b, &a, 300, seed).unwrap());
    }

    #[test]
    fn round_summary_contains_mean(d in dataset_strategy(), f in 0.0..0.5f64) {
        let boot = BootstrapConfig { replicates: 500, level: 0.95, seed: 3 };
        let base = score_table(&d, BASELINE).unwrap();
        let (_, a) = sieve(&base, f).unwrap();
        let s = evaluate_round(&compose_counterfactual(&d, &a).unwrap(), &boot).unwrap();
        prop_assert!(s.ci_ambiguity.0 <= s.mean_ambiguity && s.mean_ambiguity <= s.ci_ambiguity.1);
        prop_assert!(s.ci_disagreement.0 <= s.mean_disagreement && s.mean_disagreement <= s.ci_disagreement.1);
    }

    #[test]
    fn composition_locality(d in dataset_strategy(), idx in any::<prop::sample::Index>()) {
        let base = score_table(&d, BASELINE).unwrap();
        let (_, assignments) = sieve(&base, 0.0).unwrap();
        let i = idx.index(assignments.len());
        let mut changed = assignments.clone();
        changed[i].decision = Decision::Context;
        let t0 = compose_counterfactual(&d, &assignments).unwrap().score_table();
        let t1 = compose_counterfactual(&d, &changed).unwrap().score_table();
        let ctx = score_table(&d, CONTEXT).unwrap();
        for (k, (r0, r1)) in t0.rows.iter().zip(&t1.rows).enumerate() {
            if k == i {
                prop_assert_eq!(r1, ctx.row(&r1.instance_id).unwrap());
            } else {
                prop_assert_eq!(r0, r1);
            }
        }
    }

    #[test]
    fn sweep_matches_assignments(d in dataset_strategy()) {
        let boot = BootstrapConfig { replicates: 50, level: 0.95, seed: 1 };
        let fractions = [0.0, 0.1, 0.3, 0.6];
        let rows = threshold_sweep(&d, &fractions, &boot).unwrap();
        let base = score_table(&d, BASELINE).unwrap();
        for (row, &f) in rows.iter().zip(&fractions) {
            let (_, a) = sieve(&base, f).unwrap();
            let round = compose_counterfactual(&d, &a).unwrap();
            let moved: BTreeSet<_> = round.sources.iter().filter(|(_, c)| c.as_str() != BASELINE).map(|(id, _)| id.clone()).collect();
            let treated: BTreeSet<_> = a.iter().filter(|x| x.decision.is_intervention()).map(|x| x.instance_id.clone()).collect();
            prop_assert_eq!(&moved, &treated);
            prop_assert_eq!(row.summary.affected_count, treated.len());
        }
        prop_assert!(rows.windows(2).all(|w| w[0].summary.affected_count <= w[1].summary.affected_count));
    }
}
