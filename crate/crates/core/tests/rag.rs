use std::collections::BTreeSet;
use std::sync::Arc;

use qualkg::corpus::{generate, sample_fixture, CorpusConfig};
use qualkg::llm::{LlmBackend, LlmError, LlmGateway, LlmRequest};
use qualkg::metrics::set_metrics;
use qualkg::rag::{build_card_index, build_context, classify, evaluate_rag, run_rag, select_subset, RagConfig};
use qualkg::vector::LocalEmbedder;

fn noise_free(seed: u64) -> qualkg::corpus::Corpus {
    let mut cfg = CorpusConfig::profile(60, seed);
    cfg.n_qualifications = 40;
    cfg.pn_missing_rate = 0.0;
    generate(&cfg).unwrap()
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

#[test]
fn mock_is_exact_when_everything_fits_in_context() {
    let corpus = noise_free(3);
    let cfg = RagConfig {
        k: corpus.qc.len(),
        ..RagConfig::default()
    };
    let report = run_rag(&corpus.plm, &corpus.qc, &corpus.truth, &cfg, &LocalEmbedder, &LlmGateway::mock()).unwrap();
    assert_eq!(report.components, corpus.plm.len());
    assert_eq!(report.non_compliant, 0);
    assert_eq!(report.dropped_ids, 0);
    for row in &report.rows {
        assert_eq!(row.micro.precision, 1.0, "{}", row.name);
        assert_eq!(row.micro.recall, 1.0, "{}", row.name);
    }
    assert!(report.coverage.iter().all(|c| c.fraction == 1.0));
}

#[test]
fn recall_never_exceeds_context_coverage() {
    let corpus = noise_free(11);
    let cfg = RagConfig {
        k: 5,
        subset: Some(30),
        coverage_points: vec![5, 10, 20],
        concurrency: 3,
    };
    let report = run_rag(&corpus.plm, &corpus.qc, &corpus.truth, &cfg, &LocalEmbedder, &LlmGateway::mock()).unwrap();
    assert_eq!(report.components, 30);
    let index = build_card_index(&LocalEmbedder, &corpus.qc).unwrap();
    for p in &report.predictions {
        let c = corpus.plm.iter().find(|c| c.part_number == p.component_id).unwrap();
        let context: BTreeSet<String> = build_context(c, &LocalEmbedder, &index, 5)
            .unwrap()
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        assert!(p.all().is_subset(&context));
        let t = &corpus.truth.matches[&p.component_id];
        let truth: BTreeSet<String> = t.direct.iter().chain(&t.similarity).chain(&t.alternative).cloned().collect();
        let reachable = truth.intersection(&context).count();
        let m = set_metrics(&p.all(), &truth);
        if !truth.is_empty() {
            assert!(m.recall <= reachable as f64 / truth.len() as f64 + 1e-12);
        }
    }
    let fractions: Vec<f64> = report.coverage.iter().map(|c| c.fraction).collect();
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(report.row("direct").unwrap().micro.precision, 1.0);
}

#[test]
fn out_of_context_ids_are_dropped() {
    let corpus = sample_fixture();
    let gw = LlmGateway::new(Arc::new(Fixed(r#"{"direct":["qc1","qc99"],"similarity":[],"alternative":["qc3"]}"#)));
    let context: Vec<_> = corpus.qc.iter().filter(|q| q.number != "qc3").collect();
    let p = classify(&corpus.plm[0], &context, &gw).unwrap();
    assert!(p.compliant);
    assert_eq!(p.direct, BTreeSet::from(["qc1".to_string()]));
    assert!(p.alternative.is_empty());
    assert_eq!(p.dropped, vec!["qc99".to_string(), "qc3".to_string()]);
}

#[test]
fn non_compliant_output_scores_as_empty() {
    let corpus = sample_fixture();
    let gw = LlmGateway::new(Arc::new(Fixed("I think qc1 matches.")));
    let context: Vec<_> = corpus.qc.iter().collect();
    let p = classify(&corpus.plm[0], &context, &gw).unwrap();
    assert!(!p.compliant);
    assert!(p.all().is_empty());
    assert_eq!(p.raw_llm_output, "I think qc1 matches.");
    let rows = evaluate_rag(&[p], &corpus.truth);
    assert_eq!(rows.iter().find(|r| r.name == "direct").unwrap().micro.recall, 0.0);
}

#[test]
fn subset_is_spread_and_deterministic() {
    let corpus = noise_free(5);
    let a: Vec<_> = select_subset(&corpus.plm, Some(10)).iter().map(|c| c.part_number.clone()).collect();
    let b: Vec<_> = select_subset(&corpus.plm, Some(10)).iter().map(|c| c.part_number.clone()).collect();
    assert_eq!(a, b);
    assert_eq!(a.len(), 10);
    assert_eq!(a.iter().collect::<BTreeSet<_>>().len(), 10);
    assert_eq!(select_subset(&corpus.plm, None).len(), corpus.plm.len());
}

#[test]
fn zero_k_is_rejected() {
    let corpus = sample_fixture();
    let cfg = RagConfig {
        k: 0,
        ..RagConfig::default()
    };
    assert!(run_rag(&corpus.plm, &corpus.qc, &corpus.truth, &cfg, &LocalEmbedder, &LlmGateway::mock()).is_err());
}
