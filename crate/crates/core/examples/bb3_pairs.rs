//! Generates bacterium/habitat candidate pairs from annotated BB3 documents
//! for increasing sentence windows.

use std::path::Path;

use relstm::data::{generate_bb3_pairs, read_bb3_documents};

fn main() -> relstm::Result<()> {
    let docs = read_bb3_documents(&Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/bb3_docs.jsonl"))?;
    for window in 1..=3 {
        let (pairs, stats) = generate_bb3_pairs(&docs, window)?;
        println!("window {window}: {stats:?}");
        for p in &pairs {
            let words: Vec<&str> = p.tokens.iter().map(|t| t.surface.as_str()).collect();
            println!(
                "  {:<9} {} -> {}",
                p.label,
                words[p.spans.former.start..=p.spans.former.end].join(" "),
                words[p.spans.latter.start..=p.spans.latter.end].join(" ")
            );
        }
    }
    Ok(())
}
