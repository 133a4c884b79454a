//! Unfolds the direct-match graph query into a relational plan over the
//! virtual tables and checks the answer against a materialized graph.

use qualkg::corpus::sample_fixture;
use qualkg::dataset::Dataset;
use qualkg::vkg::{evaluate, materialize_triples, naive_match, qualification_mappings, unfold_optimized, QueryTemplate, Store, DIRECT_QUERY};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = sample_fixture();
    let mut qc = corpus.qc.clone();
    for card in &mut qc {
        card.part_number = corpus.truth.pn_by_qual[&card.number].clone();
    }
    let store = Store::from_dataset(&Dataset::new(corpus.plm.clone(), qc, corpus.truth.rules.clone()))?;
    let mappings = qualification_mappings();

    let pn = std::env::args().nth(1).unwrap_or_else(|| "P1111111".into());
    let query = QueryTemplate::new(DIRECT_QUERY).instantiate(&[("selected_value", &pn)])?;
    let unfolded = unfold_optimized(&query, &mappings, &store);
    println!("{}", unfolded.plan);

    let answer = evaluate(&unfolded.plan, &store)?;
    println!("{}", serde_json::to_string_pretty(&answer.to_json())?);

    let graph = materialize_triples(&mappings, &store)?;
    let agree = naive_match(&query, &graph) == answer;
    println!("{} triples materialized; answers agree: {agree}", graph.len());
    Ok(())
}
