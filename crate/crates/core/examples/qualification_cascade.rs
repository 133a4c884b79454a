//! Runs direct, similarity and alternative retrieval for a handful of
//! components and prints which stage answered.

use std::sync::Arc;

use qualkg::corpus::{generate, CorpusConfig};
use qualkg::dataset::Dataset;
use qualkg::retrieval::{Catalog, Retriever};
use qualkg::vector::LocalEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&CorpusConfig::profile(500, 3))?;
    let mut qc = corpus.qc.clone();
    for card in &mut qc {
        card.part_number = corpus.truth.pn_by_qual[&card.number].clone();
    }
    let catalog = Catalog::new(Dataset::new(corpus.plm.clone(), qc, corpus.truth.rules.clone()), Arc::new(LocalEmbedder))?;
    let retriever = Retriever::default();

    for component in corpus.plm.iter().step_by(61) {
        let report = retriever.retrieve(&catalog, &component.part_number, 5)?;
        let numbers = |m: &[qualkg::domain::QualMatch]| m.iter().map(|m| m.number().to_string()).collect::<Vec<_>>().join(" ");
        println!("{} ({}, {}): {:?}", component.part_number, component.family, component.package_code, report.cascade_stage);
        if !report.direct.is_empty() {
            println!("  direct      {}", numbers(&report.direct));
        }
        if !report.similarity.is_empty() {
            println!("  similarity  {}", numbers(&report.similarity));
        }
        for m in &report.alternative {
            println!("  alternative {} score {:.3}", m.number(), m.score.unwrap_or_default());
        }
        for d in &report.diagnostics {
            println!("  note: {d}");
        }
    }
    Ok(())
}
