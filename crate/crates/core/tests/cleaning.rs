use std::collections::BTreeSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use proptest::prelude::*;
use qualkg::cleaning::*;
use qualkg::corpus::{generate, sample_fixture, CorpusConfig};
use qualkg::domain::{canonical_manufacturer, PlmComponent, QualStatus, QualificationCard, RuleTable};
use qualkg::llm::{LlmBackend, LlmError, LlmGateway, LlmRequest, MockBackend};

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

struct Fixed(&'static str);

impl LlmBackend for Fixed {
    fn name(&self) -> &str {
        "fixed"
    }
    fn send(&self, _: &LlmRequest) -> Result<String, LlmError> {
        Ok(self.0.to_string())
    }
}

/// Mock that starts failing with a transport error after `limit` calls.
struct Flaky {
    calls: AtomicUsize,
    limit: usize,
}

impl LlmBackend for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }
    fn send(&self, request: &LlmRequest) -> Result<String, LlmError> {
        if self.calls.fetch_add(1, Ordering::SeqCst) >= self.limit {
            return Err(LlmError::Transport("connection reset".into()));
        }
        MockBackend.send(request)
    }
}

#[test]
fn unique_names_of_sample() {
    let c = sample_fixture();
    let names = extract_unique_manufacturers(&c.plm, &c.qc);
    assert_eq!(names, set(&["ABC", "XYZ", "ABC Corp", "XYZ Inc.", "ABC Inter."]));
    let doubled: Vec<PlmComponent> = c.plm.iter().chain(&c.plm).cloned().collect();
    assert_eq!(extract_unique_manufacturers(&doubled, &c.qc), names);
}

#[test]
fn mock_proposes_one_rule_for_abc() {
    let names = set(&["ABC", "ABC Corp", "ABC Inc.", "ABC International"]);
    let p = propose_rules(&names, &LlmGateway::mock()).unwrap();
    assert_eq!(p.rules.len(), 1);
    assert_eq!(p.rules[0].canonical, "ABC");
    assert_eq!(p.rules[0].state, RuleState::Proposed);
    assert!(validate_rules(&p.rules, &names).is_empty());
}

#[test]
fn unusable_reply_gives_no_rules() {
    let gw = LlmGateway::new(Arc::new(Fixed("")));
    let p = propose_rules(&set(&["ABC", "ABC Corp"]), &gw).unwrap();
    assert!(p.rules.is_empty());
    assert!(!p.diagnostics.is_empty());
}

#[test]
fn validation_findings() {
    let names = set(&["ABC", "ABC Corp", "XYZ"]);
    let ghost = NormalizationRule::proposed(1, "ABC", ["ABC", "ABC Corp", "GHOST Ltd"]);
    let r = validate_rules(&[ghost], &names);
    assert_eq!(r.hallucinated, set(&["GHOST Ltd"]));
    assert_eq!(r.missing, set(&["XYZ"]));
    assert!(r.overlaps.is_empty());

    let a = NormalizationRule::proposed(1, "ABC", ["ABC", "ABC Corp"]);
    let b = NormalizationRule::proposed(2, "ABC", ["ABC"]);
    let r = validate_rules(&[a, b], &names);
    assert_eq!(r.overlaps, vec![(1, 2, "ABC".to_string())]);
}

#[test]
fn mock_rules_validate_on_generated_names() {
    for seed in [1, 2, 3] {
        let corpus = generate(&CorpusConfig::profile(600, seed)).unwrap();
        let names = extract_unique_manufacturers(&corpus.plm, &corpus.qc);
        let p = propose_rules(&names, &LlmGateway::mock()).unwrap();
        let report = validate_rules(&p.rules, &names);
        assert!(report.hallucinated.is_empty() && report.overlaps.is_empty(), "{report:?}");
        let table = rule_table(&auto_accept(&p.rules, &report)).unwrap();
        // No two distinct true manufacturers collapse into one.
        for a in &names {
            for b in &names {
                let truth_same = canonical_manufacturer(a, &corpus.truth.rules) == canonical_manufacturer(b, &corpus.truth.rules);
                let mined_same = canonical_manufacturer(a, &table) == canonical_manufacturer(b, &table);
                if mined_same {
                    assert!(truth_same, "{a} and {b} merged");
                }
            }
        }
    }
}

#[test]
fn accepting_the_abc_rule() {
    let rule = NormalizationRule::proposed(1, "ABC", ["ABC Corp", "ABC Inc.", "ABC International", "ABC"]);
    let (rules, table) = apply_decisions(&[rule.clone()], &[RuleDecision::new(1, RuleAction::Accept)]).unwrap();
    assert_eq!(rules[0].state, RuleState::Accepted);
    let rows: Vec<(&str, &str)> = table.rows().collect();
    assert_eq!(
        rows,
        vec![("ABC", "ABC"), ("ABC Corp", "ABC"), ("ABC Inc.", "ABC"), ("ABC International", "ABC")]
    );

    let (_, table) = apply_decisions(&[rule], &[RuleDecision::new(1, RuleAction::Reject)]).unwrap();
    assert!(table.is_empty());
    assert_eq!(canonical_manufacturer("ABC Corp", &table), "ABC Corp");
}

#[test]
fn splitting_branches_stays_disjoint() {
    let rule = NormalizationRule::proposed(7, "ABC", ["ABC", "ABC Corp", "ABC France", "ABC France SA"]);
    let split = RuleAction::Split {
        parts: vec![
            ("ABC".into(), set(&["ABC", "ABC Corp"])),
            ("ABC France".into(), set(&["ABC France", "ABC France SA"])),
        ],
    };
    let (rules, table) = apply_decisions(&[rule], &[RuleDecision::new(7, split)]).unwrap();
    assert_eq!(rules.len(), 2);
    assert_eq!(rules[1].id, 8);
    assert!(rules.iter().all(|r| r.state == RuleState::Edited));
    assert_eq!(canonical_manufacturer("ABC France SA", &table), "ABC France");
    assert_eq!(canonical_manufacturer("ABC Corp", &table), "ABC");
    let names = set(&["ABC", "ABC Corp", "ABC France", "ABC France SA"]);
    assert!(validate_rules(&rules, &names).is_empty());
}

#[test]
fn overlapping_edit_is_refused() {
    let a = NormalizationRule::proposed(1, "ABC", ["ABC", "ABC Corp"]);
    let b = NormalizationRule::proposed(2, "XYZ", ["XYZ"]);
    let edit = RuleAction::Edit {
        canonical: "XYZ".into(),
        variants: set(&["XYZ", "ABC Corp"]),
    };
    let err = apply_decisions(
        &[a, b],
        &[RuleDecision::new(1, RuleAction::Accept), RuleDecision::new(2, edit)],
    )
    .unwrap_err();
    match err {
        CleaningError::Overlap { first, second, name } => {
            assert_eq!((first, second, name.as_str()), (1, 2, "ABC Corp"));
        }
        other => panic!("unexpected {other}"),
    }
    assert!(matches!(
        apply_decisions(&[], &[RuleDecision::new(9, RuleAction::Accept)]),
        Err(CleaningError::UnknownRule(9))
    ));
}

#[test]
fn pipeline_on_sample() {
    let mut c = sample_fixture();
    c.qc.push(QualificationCard::new("qc4", "R1", "a3", "ABC", QualStatus::Closed, "hand soldered, stand-off 0.1 mm"));
    c.qc.push(QualificationCard::new("qc5", "C9", "a3", "ABC", QualStatus::Closed, "pn P3333333 on C9"));
    c.qc.push(QualificationCard::new("qc6", "R1", "a3", "ABC", QualStatus::Closed, "pn Q0000000"));
    let out = run_pn_pipeline(&c.qc, &c.plm, &c.truth.rules, &LlmGateway::mock(), &PnPipelineConfig::default()).unwrap();
    assert_eq!(out.cards[2].part_number.as_deref(), Some("P3333333"));
    assert_eq!(out.cards[0].part_number.as_deref(), Some("P1111111"));
    let reasons: Vec<(&str, ReviewReason, Option<&str>)> = out
        .review
        .iter()
        .map(|r| (r.qual_number.as_str(), r.reason, r.candidate_pn.as_deref()))
        .collect();
    assert_eq!(
        reasons,
        vec![
            ("qc4", ReviewReason::NotExtracted, None),
            ("qc5", ReviewReason::AttributeMismatch, Some("P3333333")),
            ("qc6", ReviewReason::NotInPlm, Some("Q0000000")),
        ]
    );
    assert!((out.flagged_fraction() - 0.5).abs() < 1e-12);

    // Without the rules, the variant spelling breaks the cross-check.
    let raw = run_pn_pipeline(&c.qc, &c.plm, &RuleTable::new(), &LlmGateway::mock(), &PnPipelineConfig::default()).unwrap();
    assert!(raw.review.iter().any(|r| r.qual_number == "qc3" && r.reason == ReviewReason::AttributeMismatch));
}

#[test]
fn resolving_review_items() {
    let mut c = sample_fixture();
    c.qc.push(QualificationCard::new("qc4", "R1", "a3", "ABC Corp", QualStatus::Closed, "no part number here"));
    let out = run_pn_pipeline(&c.qc, &c.plm, &c.truth.rules, &LlmGateway::mock(), &PnPipelineConfig::default()).unwrap();
    let (mut queue, mut cards) = (out.review, out.cards);
    assert_eq!(queue.len(), 1);

    let r = resolve_review(&mut queue, &mut cards, "qc4", "P1111111", &c.plm, &c.truth.rules).unwrap();
    assert_eq!(r, Resolution::StillPending(ReviewReason::AttributeMismatch));
    assert!(queue[0].is_pending());
    assert_eq!(queue[0].reason, ReviewReason::AttributeMismatch);
    assert_eq!(cards[3].part_number, None);

    let first = resolve_review(&mut queue, &mut cards, "qc4", "P3333333", &c.plm, &c.truth.rules).unwrap();
    let again = resolve_review(&mut queue, &mut cards, "qc4", "P3333333", &c.plm, &c.truth.rules).unwrap();
    assert_eq!(first, again);
    assert_eq!(cards[3].part_number.as_deref(), Some("P3333333"));
    assert_eq!(queue[0].resolved_pn.as_deref(), Some("P3333333"));

    assert!(matches!(
        resolve_review(&mut queue, &mut cards, "qc99", "P3333333", &c.plm, &c.truth.rules),
        Err(CleaningError::UnknownQualification(_))
    ));
}

#[test]
fn generated_corpus_matches_ground_truth() {
    let mut cfg = CorpusConfig::profile(2000, 9);
    cfg.n_qualifications = 400;
    let corpus = generate(&cfg).unwrap();
    let run = run_cleaning(&corpus.plm, &corpus.qc, &LlmGateway::mock(), &CleaningConfig::default()).unwrap();
    assert!(run.validation.hallucinated.is_empty());
    let mut flagged = 0;
    for card in &run.pn.cards {
        let truth = corpus.truth.pn_by_qual[&card.number].as_deref();
        match &card.part_number {
            Some(pn) => assert_eq!(Some(pn.as_str()), truth, "{}", card.number),
            None => flagged += 1,
        }
    }
    let pending: BTreeSet<&str> = run.pn.review.iter().map(|r| r.qual_number.as_str()).collect();
    assert_eq!(pending.len(), run.pn.review.len(), "one item per card");
    assert_eq!(flagged, pending.len());
    let expected = (cfg.pn_missing_rate * cfg.n_qualifications as f64).round() as usize;
    assert_eq!(flagged, expected);
}

#[test]
fn concurrency_does_not_change_output() {
    let mut cfg = CorpusConfig::profile(300, 4);
    cfg.n_qualifications = 150;
    let corpus = generate(&cfg).unwrap();
    let one = PnPipelineConfig {
        concurrency: 1,
        ..PnPipelineConfig::default()
    };
    let many = PnPipelineConfig {
        concurrency: 8,
        checkpoint_every: 7,
        ..PnPipelineConfig::default()
    };
    let gw = LlmGateway::mock();
    let a = run_pn_pipeline(&corpus.qc, &corpus.plm, &corpus.truth.rules, &gw, &one).unwrap();
    let b = run_pn_pipeline(&corpus.qc, &corpus.plm, &corpus.truth.rules, &gw, &many).unwrap();
    assert_eq!(a, b);
}

#[test]
fn interrupted_run_resumes_from_checkpoint() {
    let mut cfg = CorpusConfig::profile(300, 5);
    cfg.n_qualifications = 250;
    let corpus = generate(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let pipeline = PnPipelineConfig {
        concurrency: 1,
        checkpoint: Some(dir.path().join("pn.checkpoint.json")),
        checkpoint_every: 100,
    };
    let flaky = LlmGateway::new(Arc::new(Flaky {
        calls: AtomicUsize::new(0),
        limit: 130,
    }));
    let rules = &corpus.truth.rules;
    match run_pn_pipeline(&corpus.qc, &corpus.plm, rules, &flaky, &pipeline) {
        Err(CleaningError::Interrupted { done, .. }) => assert_eq!(done, 130),
        other => panic!("expected interruption, got {other:?}"),
    }
    let saved = Checkpoint::load(pipeline.checkpoint.as_ref().unwrap()).unwrap();
    assert_eq!(saved.extractions.len(), 130);

    let counting = Arc::new(Flaky {
        calls: AtomicUsize::new(0),
        limit: usize::MAX,
    });
    let resumed = run_pn_pipeline(&corpus.qc, &corpus.plm, rules, &LlmGateway::new(counting.clone()), &pipeline).unwrap();
    assert_eq!(counting.calls.load(Ordering::SeqCst), 120);
    let fresh = run_pn_pipeline(&corpus.qc, &corpus.plm, rules, &LlmGateway::mock(), &PnPipelineConfig::default()).unwrap();
    assert_eq!(resumed, fresh);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn no_card_receives_an_unverified_pn(
        seed in 0u64..1000,
        swaps in proptest::collection::vec((0usize..60, 0usize..80), 0..20),
    ) {
        let mut cfg = CorpusConfig::profile(80, seed);
        cfg.n_qualifications = 60;
        let mut corpus = generate(&cfg).unwrap();
        // Rewrite some notes to cite arbitrary part numbers.
        for (q, p) in swaps {
            let pn = corpus.plm[p % corpus.plm.len()].part_number.clone();
            let n = corpus.qc.len();
            let card = &mut corpus.qc[q % n];
            card.notes = format!("rework (pn {pn}) on pad");
        }
        let out = run_pn_pipeline(&corpus.qc, &corpus.plm, &corpus.truth.rules, &LlmGateway::mock(), &PnPipelineConfig::default()).unwrap();
        let lookup = PlmLookup::new(&corpus.plm, &corpus.truth.rules);
        for card in &out.cards {
            if let Some(pn) = &card.part_number {
                prop_assert!(lookup.cross_check(card, pn).is_ok());
            }
        }
        let augmented = out.cards.iter().filter(|c| c.part_number.is_some()).count();
        prop_assert_eq!(augmented + out.review.len(), out.cards.len());
    }
}
