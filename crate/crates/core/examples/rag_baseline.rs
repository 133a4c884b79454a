//! Scores the retrieval-augmented baseline on raw data with the offline
//! classifier.

use qualkg::corpus::{generate, CorpusConfig};
use qualkg::llm::LlmGateway;
use qualkg::rag::{run_rag, RagConfig};
use qualkg::vector::LocalEmbedder;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = generate(&CorpusConfig::profile(1500, 11))?;
    let cfg = RagConfig {
        k: 50,
        subset: Some(120),
        ..RagConfig::default()
    };
    let report = run_rag(&corpus.plm, &corpus.qc, &corpus.truth, &cfg, &LocalEmbedder, &LlmGateway::mock())?;
    println!("{} components, k = {}", report.components, report.k);
    print!("{}", report.table());
    for point in &report.coverage {
        println!("top {:>3}: {}/{} ground-truth cards in context ({:.1}%)", point.top, point.found, point.total, point.fraction * 100.0);
    }
    Ok(())
}
