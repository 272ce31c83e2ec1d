//! Reads the official SemEval-2010 Task 8 file format and scores predictions
//! with the directional macro-F1 over the nine relation families.

use std::path::Path;

use relstm::data::read_semeval;
use relstm::eval::semeval_macro_f1;

fn main() -> relstm::Result<()> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/semeval_sample.txt");
    let instances = read_semeval(&path)?;
    for inst in &instances {
        let words: Vec<&str> = inst.tokens.iter().map(|t| t.surface.as_str()).collect();
        println!(
            "{:<4} {:<26} e1={:?} e2={:?}",
            inst.id,
            inst.label,
            &words[inst.spans.former.start..=inst.spans.former.end],
            &words[inst.spans.latter.start..=inst.spans.latter.end]
        );
    }

    let gold: Vec<&str> = instances.iter().map(|i| i.label.as_str()).collect();
    // A system that gets every direction backwards.
    let flipped: Vec<String> = gold
        .iter()
        .map(|l| l.replace("(e1,e2)", "(tmp)").replace("(e2,e1)", "(e1,e2)").replace("(tmp)", "(e2,e1)"))
        .collect();
    println!("perfect   {:.4}", semeval_macro_f1(&gold, &gold)?.aggregate);
    print!("{}", semeval_macro_f1(&gold, &flipped)?.render_table());
    Ok(())
}
