//! Embeds qualification cards and ranks them against one component.

use std::collections::HashSet;

use qualkg::corpus::{generate, CorpusConfig};
use qualkg::vector::canonical::{card_json, component_json};
use qualkg::vector::{Embedder, LocalEmbedder, VectorIndex};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&CorpusConfig::profile(300, 7))?;
    let rules = &corpus.truth.rules;
    let embedder = LocalEmbedder;
    let index = VectorIndex::build(&embedder, corpus.qc.iter().map(|q| (q.number.clone(), card_json(q, rules))))?;
    println!("{} cards, dim {}, tag {}", index.len(), index.dim(), index.embedder_tag());

    let component = &corpus.plm[0];
    let query = embedder.embed(&component_json(component, rules))?;
    println!("query: {}", component_json(component, rules));
    for (id, score) in index.top_k(&query, &embedder.tag(), 5, None)? {
        println!("  {id:<8} {score:.4}");
    }

    // Restricting the ranking to cards that share the package code.
    let same_package: HashSet<String> = corpus
        .qc
        .iter()
        .filter(|q| q.package_code == component.package_code)
        .map(|q| q.number.clone())
        .collect();
    let filtered = index.top_k(&query, &embedder.tag(), 5, Some(&same_package))?;
    println!("within package {}: {:?}", component.package_code, filtered);
    Ok(())
}
