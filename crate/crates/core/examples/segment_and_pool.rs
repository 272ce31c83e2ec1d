//! Splits a sentence into before/former/middle/latter/after and pools each part.

use relstm::head::{pool, segment, EntitySpans, Part, Span};
use relstm::tensor::Vector;

fn main() -> relstm::Result<()> {
    let words: Vec<&str> = "In this comprehensive guide , over 850 roses are described , illustrated , and arranged by group ."
        .split(' ')
        .collect();
    let spans = EntitySpans::new(Span::new(3, 3), Span::new(7, 7));
    let seg = segment(words.len(), &spans)?;
    for part in Part::ALL {
        println!("{:<8} [{}]", format!("{part:?}"), words[seg.get(part)].join(" "));
    }

    // Stand-in 2-d token vectors: position and a sign pattern.
    let reps: Vec<Vector> = (0..words.len())
        .map(|i| Vector::new(vec![i as f64 / 10.0, if i % 2 == 0 { 1.0 } else { -1.0 }]))
        .collect();
    for part in Part::ALL {
        let pooled = pool(&reps[seg.get(part)], 2);
        println!("{:<8} max/min/avg/rss {:?}", format!("{part:?}"), pooled);
    }
    let empty = pool(&[], 2);
    println!("empty part pools to {:?}", empty);
    Ok(())
}
