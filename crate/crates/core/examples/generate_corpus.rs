//! Generates a synthetic component database and qualification catalog.
//!
//! ```text
//! cargo run -p qualkg --example generate_corpus -- [components] [out-dir]
//! ```

use qualkg::corpus::{emit, generate, CorpusConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map(|s| s.parse()).transpose()?.unwrap_or(675);
    let cfg = CorpusConfig::profile(n, 42);
    let corpus = generate(&cfg)?;

    let qualified: Vec<_> = corpus.truth.qualified_components().collect();
    let mean = |f: fn(&qualkg::corpus::TruthMatches) -> usize| {
        qualified.iter().map(|(_, t)| f(t)).sum::<usize>() as f64 / qualified.len().max(1) as f64
    };
    println!("{} components, {} cards, {} normalization rows", corpus.plm.len(), corpus.qc.len(), corpus.truth.rules.len());
    println!(
        "per qualified component: direct {:.2}, similarity {:.2}",
        mean(|t| t.direct.len()),
        mean(|t| t.similarity.len())
    );

    if let Some(dir) = args.next() {
        for path in emit(&corpus, dir.as_ref())? {
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}
