use std::collections::{BTreeMap, BTreeSet};

use qualkg::corpus::{emit, generate, CorpusConfig, TruthMatches};
use qualkg::domain::{PlmComponent, QualificationCard};
use rust_decimal::Decimal;
use sha2::{Digest, Sha256};

fn canon<'a>(rules: &'a BTreeMap<String, String>, raw: &'a str) -> &'a str {
    rules.get(raw.trim()).map(String::as_str).unwrap_or(raw)
}

/// Straight-line labelling written against the textual rules, sharing no
/// code with the generator.
fn brute_force_labels(
    plm: &[PlmComponent],
    qc: &[QualificationCard],
    rules: &BTreeMap<String, String>,
    pn_by_qual: &BTreeMap<String, Option<String>>,
) -> BTreeMap<String, TruthMatches> {
    let mut out = BTreeMap::new();
    for c in plm {
        let mut m = TruthMatches::default();
        for q in qc {
            let same_triple = q.package_code == c.package_code
                && q.subpackage_code == c.subpackage_code
                && canon(rules, &q.manufacturer_name) == canon(rules, &c.manufacturer_name);
            if let (true, Some(pn)) = (same_triple, &pn_by_qual[&q.number]) {
                if *pn == c.part_number {
                    m.direct.insert(q.number.clone());
                } else {
                    m.similarity.insert(q.number.clone());
                }
            }
        }
        if m.direct.is_empty() && m.similarity.is_empty() {
            for q in qc {
                if q.package_code != c.package_code {
                    continue;
                }
                let ok = if c.family == "FP" {
                    let norm = |s: &Option<String>| s.as_ref().map(|s| s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase());
                    q.pitch.is_some()
                        && q.pitch == c.pitch
                        && match (q.pin_dimension, c.pin_dimension) {
                            (Some(a), Some(b)) => (a - b).abs() <= Decimal::from(5),
                            _ => false,
                        }
                        && norm(&q.assembly_type).is_some()
                        && norm(&q.assembly_type) == norm(&c.assembly_type)
                } else {
                    canon(rules, &q.manufacturer_name) == canon(rules, &c.manufacturer_name)
                };
                if ok {
                    m.alternative.insert(q.number.clone());
                }
            }
        }
        out.insert(c.part_number.clone(), m);
    }
    out
}

#[test]
fn labels_are_sound_under_brute_force() {
    for seed in [1, 2, 3] {
        let corpus = generate(&CorpusConfig::profile(600, seed)).unwrap();
        let rules: BTreeMap<String, String> =
            corpus.truth.rules.rows().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        let expected = brute_force_labels(&corpus.plm, &corpus.qc, &rules, &corpus.truth.pn_by_qual);
        assert_eq!(expected, corpus.truth.matches, "seed {seed}");
        for m in corpus.truth.matches.values() {
            assert!(m.direct.is_disjoint(&m.similarity));
        }
    }
}

#[test]
fn referenced_ids_exist() {
    let corpus = generate(&CorpusConfig::profile(800, 5)).unwrap();
    let quals: BTreeSet<_> = corpus.qc.iter().map(|q| q.number.clone()).collect();
    let pns: BTreeSet<_> = corpus.plm.iter().map(|c| c.part_number.clone()).collect();
    for (pn, m) in &corpus.truth.matches {
        assert!(pns.contains(pn));
        for q in m.direct.iter().chain(&m.similarity).chain(&m.alternative) {
            assert!(quals.contains(q));
        }
    }
    for pn in corpus.truth.pn_by_qual.values().flatten() {
        assert!(pns.contains(pn));
    }
}

#[test]
fn marginals_track_configuration() {
    for n in [675, 2000] {
        let cfg = CorpusConfig::profile(n, 42);
        let corpus = generate(&cfg).unwrap();
        let total = corpus.truth.matches.len() as f64;
        let qualified: Vec<_> = corpus.truth.qualified_components().map(|(_, m)| m).collect();
        let never = 1.0 - qualified.len() as f64 / total;
        assert!((never - 0.1748).abs() <= 0.03, "never {never}");
        let nq = qualified.len() as f64;
        let mean = |f: fn(&TruthMatches) -> usize| qualified.iter().map(|m| f(m)).sum::<usize>() as f64 / nq;
        let direct = mean(|m| m.direct.len());
        let sim = mean(|m| m.similarity.len());
        let alt = mean(|m| m.alternative.len());
        for (got, want, name) in [(direct, 0.63, "direct"), (sim, 7.98, "similarity"), (alt, 2.23, "alternative")] {
            assert!((got - want).abs() <= 0.1 * want, "n={n} {name}: {got} vs {want}");
        }
    }
}

#[test]
fn status_weights() {
    let corpus = generate(&CorpusConfig {
        n_components: 3000,
        n_qualifications: 4000,
        ..CorpusConfig::default()
    })
    .unwrap();
    let closed = corpus.qc.iter().filter(|q| q.status.as_str() == "Closed").count() as f64 / 4000.0;
    assert!((closed - 0.6).abs() < 0.03, "{closed}");
}

#[test]
fn variant_names_appear_in_qc() {
    let corpus = generate(&CorpusConfig::profile(2000, 11)).unwrap();
    let canonical: BTreeSet<_> = corpus.plm.iter().map(|c| c.manufacturer_name.as_str()).collect();
    let raw_in_qc = corpus.qc.iter().filter(|q| !canonical.contains(q.manufacturer_name.as_str())).count();
    let rate = raw_in_qc as f64 / corpus.qc.len() as f64;
    assert!((rate - 0.5).abs() < 0.05, "{rate}");
}

fn hash_dir(dir: &std::path::Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for name in ["plm.csv", "qc.csv", "truth.json", "truth_rules.csv"] {
        let bytes = std::fs::read(dir.join(name)).unwrap();
        out.push((name.to_string(), hex::encode(Sha256::digest(&bytes))));
    }
    out
}

#[test]
fn emit_is_byte_deterministic() {
    let cfg = CorpusConfig::profile(300, 7);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    emit(&generate(&cfg).unwrap(), a.path()).unwrap();
    emit(&generate(&cfg).unwrap(), b.path()).unwrap();
    assert_eq!(hash_dir(a.path()), hash_dir(b.path()));
    let header = std::fs::read_to_string(a.path().join("plm.csv")).unwrap();
    assert!(header.starts_with("part_number,package,subpackage_code,manufacturer_name,family,pitch,"));
}

#[test]
fn large_plm_line_count() {
    let corpus = generate(&CorpusConfig::profile(20_000, 42)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit(&corpus, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("plm.csv")).unwrap();
    assert_eq!(text.lines().count(), 20_001);
}

#[test]
fn emit_reports_unwritable_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, b"x").unwrap();
    let err = emit(&generate(&CorpusConfig::profile(50, 1)).unwrap(), &blocker.join("sub")).unwrap_err();
    assert!(err.to_string().contains("file"), "{err}");
}
