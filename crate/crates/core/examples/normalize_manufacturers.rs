//! Mines manufacturer normalization rules with the offline gateway, accepts
//! them, then augments qualification cards with part numbers.

use qualkg::cleaning::{
    apply_decisions, extract_unique_manufacturers, propose_rules, run_pn_pipeline, validate_rules, PnPipelineConfig, RuleAction,
    RuleDecision,
};
use qualkg::corpus::sample_fixture;
use qualkg::domain::{canonical_manufacturer, QualStatus, QualificationCard};
use qualkg::llm::LlmGateway;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut corpus = sample_fixture();
    corpus.qc.push(QualificationCard::new("qc4", "C9", "a3", "ABC", QualStatus::Ongoing, "pn P3333333 on C9"));
    let gateway = LlmGateway::mock();

    let names = extract_unique_manufacturers(&corpus.plm, &corpus.qc);
    println!("names: {names:?}");
    let proposal = propose_rules(&names, &gateway)?;
    let report = validate_rules(&proposal.rules, &names);
    println!("validation: {} invented, {} uncovered, {} overlaps", report.hallucinated.len(), report.missing.len(), report.overlaps.len());

    let decisions: Vec<RuleDecision> = proposal.rules.iter().map(|r| RuleDecision::new(r.id, RuleAction::Accept)).collect();
    let (rules, table) = apply_decisions(&proposal.rules, &decisions)?;
    for rule in &rules {
        println!("rule {} [{:?}] {} <- {:?}", rule.id, rule.state, rule.canonical, rule.variants);
    }
    for raw in ["ABC Corp", "ABC Inter.", "XYZ Inc."] {
        println!("{raw:>12} => {}", canonical_manufacturer(raw, &table));
    }

    let outcome = run_pn_pipeline(&corpus.qc, &corpus.plm, &table, &gateway, &PnPipelineConfig::default())?;
    for card in &outcome.cards {
        println!("{} -> {}", card.number, card.part_number.as_deref().unwrap_or("-"));
    }
    for item in &outcome.review {
        println!("review {}: {} ({:?})", item.qual_number, item.reason.code(), item.candidate_pn);
    }
    Ok(())
}
