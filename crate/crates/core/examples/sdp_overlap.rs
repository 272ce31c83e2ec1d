//! Shortest dependency path between two entities and its overlap with the
//! words between them.

use relstm::sdp::{self, MatchMode, PairSpans};

fn main() -> relstm::Result<()> {
    let (sent, spans) = sdp::child_cradle_example();
    let path = sdp::shortest_dep_path(&sent, spans.former.end, spans.latter.end)?;
    let words: Vec<&str> = path.iter().map(|&i| sent.forms[i].as_str()).collect();
    println!("sentence: {}", sent.forms.join(" "));
    println!("path:     {}", words.join(" -> "));

    let st = sdp::sentence_overlap(&sent, &spans, MatchMode::Position)?;
    println!(
        "middle words {}, path words {}, shared {} ({:.0}% of the path)",
        st.middle_count,
        st.sdp_count,
        st.both_count,
        100.0 * st.proportion()
    );

    let pair = PairSpans { sentence: sent.id.clone(), former: spans.former, latter: spans.latter, latter_sentence: None };
    let total = sdp::overlap_stats(&[sent], &[pair], MatchMode::Surface)?;
    println!("surface matching: {total:?}");
    Ok(())
}
