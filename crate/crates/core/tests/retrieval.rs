use std::collections::BTreeSet;
use std::str::FromStr;
use std::sync::Arc;

use qualkg::corpus::{generate, sample_fixture, Corpus, CorpusConfig};
use qualkg::criteria::{normalize_text, AlternativeRule};
use qualkg::dataset::Dataset;
use qualkg::domain::{canonical_manufacturer, CascadeStage, PlmComponent, QualStatus, QualificationCard, RuleTable};
use qualkg::retrieval::{alternative_query, Catalog, RetrievalError, Retriever};
use qualkg::vector::canonical::{card_json, component_json};
use qualkg::vector::{Embedder, LocalEmbedder};
use qualkg::vkg::{parse_query, QueryTemplate, ALTERNATIVE_FP_QUERY, ALTERNATIVE_GENERIC_QUERY};
use rust_decimal::Decimal;

fn dec(s: &str) -> Decimal {
    Decimal::from_str(s).unwrap()
}

/// Cards carry their true PN except every `drop`-th one, which stays
/// unresolved.
fn cleaned(corpus: &Corpus, drop: usize) -> Dataset {
    let qc = corpus
        .qc
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let mut q = q.clone();
            if drop == 0 || i % drop != 0 {
                q.part_number = corpus.truth.pn_by_qual[&q.number].clone();
            }
            q
        })
        .collect();
    Dataset::new(corpus.plm.clone(), qc, corpus.truth.rules.clone())
}

fn catalog(data: Dataset) -> Catalog {
    Catalog::new(data, Arc::new(LocalEmbedder)).unwrap()
}

struct Expected {
    direct: BTreeSet<String>,
    similarity: BTreeSet<String>,
    alternative: Vec<(String, f64)>,
}

/// Straight-line cascade over the raw records: no graph queries, no index.
fn brute_force(data: &Dataset, pn: &str, k: usize) -> Expected {
    let rules = &data.rules;
    let canon = |s: &str| canonical_manufacturer(s, rules);
    let mut rows: Vec<&PlmComponent> = data.plm.iter().filter(|c| c.part_number == pn).collect();
    rows.sort_by(|a, b| a.key().cmp(&b.key()));
    let mut e = Expected {
        direct: BTreeSet::new(),
        similarity: BTreeSet::new(),
        alternative: Vec::new(),
    };
    for c in &rows {
        for q in &data.qc {
            let Some(q_pn) = &q.part_number else { continue };
            if q.package_code == c.package_code
                && q.subpackage_code == c.subpackage_code
                && canon(&q.manufacturer_name) == canon(&c.manufacturer_name)
            {
                if q_pn == pn {
                    e.direct.insert(q.number.clone());
                } else {
                    e.similarity.insert(q.number.clone());
                }
            }
        }
    }
    if !e.direct.is_empty() || !e.similarity.is_empty() {
        return e;
    }
    let c = rows[0];
    let fp = c.family == "FP";
    if fp && (c.pitch.is_none() || c.pin_dimension.is_none() || c.assembly_type.is_none()) {
        return e;
    }
    let query = LocalEmbedder.embed(&component_json(c, rules)).unwrap();
    for q in &data.qc {
        let ok = if fp {
            q.package_code == c.package_code
                && q.pitch.is_some()
                && q.pitch == c.pitch
                && matches!((q.pin_dimension, c.pin_dimension), (Some(a), Some(b)) if (a - b).abs() <= Decimal::from(5))
                && q.assembly_type.as_deref().map(normalize_text) == c.assembly_type.as_deref().map(normalize_text)
        } else {
            q.package_code == c.package_code && canon(&q.manufacturer_name) == canon(&c.manufacturer_name)
        };
        if ok {
            let v = LocalEmbedder.embed(&card_json(q, rules)).unwrap();
            let score: f64 = query.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
            e.alternative.push((q.number.clone(), score));
        }
    }
    e.alternative
        .sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    e.alternative.truncate(k);
    e
}

fn check_against_oracle(data: Dataset, pns: &[String], k: usize) {
    let cat = catalog(data.clone());
    let r = Retriever::default();
    for pn in pns {
        let report = r.retrieve(&cat, pn, k).unwrap();
        report.check_invariants().unwrap();
        let want = brute_force(&data, pn, k);
        let direct: BTreeSet<String> = report.direct.iter().map(|m| m.number().to_string()).collect();
        let similarity: BTreeSet<String> = report.similarity.iter().map(|m| m.number().to_string()).collect();
        assert_eq!(direct, want.direct, "direct for {pn}");
        assert_eq!(similarity, want.similarity, "similarity for {pn}");
        assert!(direct.is_disjoint(&similarity));
        let got: Vec<&str> = report.alternative.iter().map(|m| m.number()).collect();
        let exp: Vec<&str> = want.alternative.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(got, exp, "alternative for {pn}");
        for (m, (_, s)) in report.alternative.iter().zip(&want.alternative) {
            assert!((m.score.unwrap() - s).abs() < 1e-12);
        }
    }
}

#[test]
fn direct_on_sample() {
    let mut c = sample_fixture();
    for q in &mut c.qc {
        q.part_number = c.truth.pn_by_qual[&q.number].clone();
    }
    let cat = catalog(Dataset::new(c.plm.clone(), c.qc.clone(), c.truth.rules.clone()));
    let r = Retriever::default();
    let report = r.retrieve(&cat, "P1111111", 200).unwrap();
    assert_eq!(report.cascade_stage, CascadeStage::DirectFound);
    assert_eq!(report.direct.len(), 1);
    assert_eq!(report.direct[0].number(), "qc1");
    assert!(report.alternative.is_empty());
    assert!(matches!(r.retrieve(&cat, "NOPE", 200), Err(RetrievalError::PnNotFound(_))));
    assert!(matches!(r.find_direct(&cat, "NOPE"), Err(RetrievalError::PnNotFound(_))));
}

#[test]
fn similarity_on_shared_triple() {
    let mut c = sample_fixture();
    for q in &mut c.qc {
        q.part_number = c.truth.pn_by_qual[&q.number].clone();
    }
    let mut p9 = PlmComponent::new("P9", "FP1", "a1", "ABC", "Hybrid");
    p9.pitch = Some(dec("1.27"));
    c.plm.push(p9);
    c.plm.push(PlmComponent::new("P10", "Z9", "z9", "QRS", "Resistor"));
    let cat = catalog(Dataset::new(c.plm, c.qc, c.truth.rules.clone()));
    let r = Retriever::default();
    let report = r.retrieve(&cat, "P9", 200).unwrap();
    assert_eq!(report.cascade_stage, CascadeStage::SimilarityFound);
    assert_eq!(report.similarity.iter().map(|m| m.number()).collect::<Vec<_>>(), ["qc1"]);
    assert!(report.direct.is_empty());
    let none = r.retrieve(&cat, "P10", 200).unwrap();
    assert_eq!(none.cascade_stage, CascadeStage::NoneFound);
    assert!(r.find_by_similarity(&cat, "P10").unwrap().is_empty());
}

#[test]
fn cards_without_pn_are_not_similar() {
    let c = sample_fixture();
    let mut p9 = PlmComponent::new("P9", "FP1", "a1", "ABC", "Hybrid");
    p9.pitch = Some(dec("1.27"));
    let mut plm = c.plm.clone();
    plm.push(p9);
    let cat = catalog(Dataset::new(plm, c.qc.clone(), c.truth.rules.clone()));
    let r = Retriever::default();
    assert!(r.find_by_similarity(&cat, "P9").unwrap().is_empty());
    // Still eligible as an alternative under the generic rule.
    let report = r.retrieve(&cat, "P9", 200).unwrap();
    assert_eq!(report.cascade_stage, CascadeStage::AlternativeProposed);
    assert_eq!(report.alternative[0].number(), "qc1");
    assert!(report.alternative[0].suggestion);
}

fn fp_fixture(card_pins: &[&str]) -> Dataset {
    let mut c = PlmComponent::new("P1", "FP1", "a1", "ABC", "FP");
    c.pitch = Some(dec("1.27"));
    c.pin_dimension = Some(dec("100"));
    c.assembly_type = Some("SMD reflow".into());
    let qc = card_pins
        .iter()
        .enumerate()
        .map(|(i, pin)| {
            let mut q = QualificationCard::new(format!("qc{}", i + 1), "FP1", "b2", "Other", QualStatus::Closed, "reflow on FP1");
            q.pitch = Some(dec("1.270"));
            q.pin_dimension = Some(dec(pin));
            q.assembly_type = Some("smd  Reflow".into());
            q
        })
        .collect();
    Dataset::new(vec![c], qc, RuleTable::new())
}

#[test]
fn pin_dimension_boundary() {
    let data = fp_fixture(&["104", "106", "105", "95", "105.000001", "94.999999"]);
    let cat = catalog(data);
    let r = Retriever::default();
    let report = r.retrieve(&cat, "P1", 200).unwrap();
    assert_eq!(report.cascade_stage, CascadeStage::AlternativeProposed);
    let got: BTreeSet<&str> = report.alternative.iter().map(|m| m.number()).collect();
    assert_eq!(got, BTreeSet::from(["qc1", "qc3", "qc4"]));
    report.check_invariants().unwrap();
    let top1 = r.retrieve(&cat, "P1", 1).unwrap();
    assert_eq!(top1.alternative.len(), 1);
}

#[test]
fn missing_attributes_are_reported() {
    let mut data = fp_fixture(&["100"]);
    data.plm[0].pin_dimension = None;
    let cat = catalog(data);
    let report = Retriever::default().retrieve(&cat, "P1", 200).unwrap();
    assert_eq!(report.cascade_stage, CascadeStage::NoneFound);
    assert!(report.diagnostics.iter().any(|d| d.contains("pin_dimension")), "{:?}", report.diagnostics);
}

#[test]
fn generated_rule_queries_match_bundled_files() {
    let mut c = PlmComponent::new("P1", "FP\"1", "a1", "ABC Corp", "FP");
    c.pitch = Some(dec("1.27"));
    let rules = RuleTable::from_rows([("ABC Corp", "ABC")]).unwrap();
    let fp = parse_query(&alternative_query(&AlternativeRule::flat_package(), &c, &rules)).unwrap();
    let bundled = QueryTemplate::new(ALTERNATIVE_FP_QUERY).instantiate(&[("package", "FP\"1")]).unwrap();
    assert_eq!(fp, bundled);
    let generic = parse_query(&alternative_query(&AlternativeRule::generic(), &c, &rules)).unwrap();
    let bundled = QueryTemplate::new(ALTERNATIVE_GENERIC_QUERY)
        .instantiate(&[("package", "FP\"1"), ("manufacturer", "ABC")])
        .unwrap();
    assert_eq!(generic, bundled);
}

#[test]
fn matches_brute_force_on_random_corpora() {
    for seed in 0..8u64 {
        let mut cfg = CorpusConfig::profile(300, 100 + seed);
        cfg.n_qualifications = 120;
        cfg.n_manufacturers = 8;
        cfg.n_raw_variants = 30;
        let corpus = generate(&cfg).unwrap();
        let pns: Vec<String> = corpus.plm.iter().step_by(5).map(|c| c.part_number.clone()).collect();
        check_against_oracle(cleaned(&corpus, 7), &pns, 25);
    }
}

#[test]
fn variant_substitution_leaves_results_unchanged() {
    let mut cfg = CorpusConfig::profile(200, 77);
    cfg.n_qualifications = 90;
    cfg.n_manufacturers = 6;
    cfg.n_raw_variants = 30;
    let corpus = generate(&cfg).unwrap();
    let data = cleaned(&corpus, 0);
    let mut swapped = data.clone();
    for (i, q) in swapped.qc.iter_mut().enumerate() {
        let canonical = canonical_manufacturer(&q.manufacturer_name, &data.rules);
        let variants: Vec<&str> = data.rules.rows().filter(|(_, c)| *c == canonical).map(|(r, _)| r).collect();
        q.manufacturer_name = variants[i % variants.len()].to_string();
    }
    let (a, b) = (catalog(data.clone()), catalog(swapped));
    let r = Retriever::default();
    for c in corpus.plm.iter().step_by(3) {
        let x = r.retrieve(&a, &c.part_number, 200).unwrap();
        let y = r.retrieve(&b, &c.part_number, 200).unwrap();
        let ids = |v: &[qualkg::domain::QualMatch]| v.iter().map(|m| m.number().to_string()).collect::<Vec<_>>();
        assert_eq!(ids(&x.direct), ids(&y.direct));
        assert_eq!(ids(&x.similarity), ids(&y.similarity));
        assert_eq!(ids(&x.alternative), ids(&y.alternative));
    }
}

#[test]
fn rule_change_rebuilds_index_lazily() {
    let c = sample_fixture();
    let cat = catalog(Dataset::new(c.plm.clone(), c.qc.clone(), RuleTable::new()));
    cat.index().unwrap();
    assert!(cat.index_is_built());
    let next = cat.with_rules(c.truth.rules.clone()).unwrap();
    assert!(!next.index_is_built());
    let mut p9 = PlmComponent::new("P9", "C2", "zz", "XYZ", "Capacitor");
    p9.pitch = Some(dec("2.2"));
    let with_p9 = Catalog::new(
        Dataset::new(
            c.plm.iter().cloned().chain([p9]).collect(),
            c.qc.clone(),
            RuleTable::new(),
        ),
        Arc::new(LocalEmbedder),
    )
    .unwrap();
    let r = Retriever::default();
    // "XYZ Inc." only joins XYZ once the rules say so.
    assert!(r.retrieve(&with_p9, "P9", 200).unwrap().alternative.is_empty());
    let ruled = with_p9.with_rules(c.truth.rules.clone()).unwrap();
    assert_eq!(r.retrieve(&ruled, "P9", 200).unwrap().alternative[0].number(), "qc2");
}

#[test]
fn profile_marginals() {
    let corpus = generate(&CorpusConfig::profile(675, 42)).unwrap();
    let cat = catalog(cleaned(&corpus, 0));
    let r = Retriever::default();
    let (mut n, mut direct, mut similarity) = (0usize, 0usize, 0usize);
    for (pn, truth) in corpus.truth.qualified_components() {
        let report = r.retrieve(&cat, pn, 200).unwrap();
        n += 1;
        direct += report.direct.len();
        similarity += report.similarity.len();
        assert_eq!(report.direct.len(), truth.direct.len());
        let sim: BTreeSet<String> = report.similarity.iter().map(|m| m.number().to_string()).collect();
        assert_eq!(&sim, &truth.similarity);
    }
    let (d, s) = (direct as f64 / n as f64, similarity as f64 / n as f64);
    assert!((d - 0.63).abs() <= 0.63 * 0.2, "mean direct {d}");
    assert!((s - 7.98).abs() <= 7.98 * 0.2, "mean similarity {s}");
}
