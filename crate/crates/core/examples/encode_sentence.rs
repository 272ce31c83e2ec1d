//! Runs a built model's Bi-LSTM encoder over one sentence and shows the
//! pooled five-part representation that feeds the classifier.

use std::path::Path;

use relstm::data::{read_instances, LabelSchema};
use relstm::features::load_embeddings;
use relstm::model::{Model, ModelConfig};
use relstm::tape::Tape;

fn main() -> relstm::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = read_instances(&fixtures.join("toy_train.jsonl"))?;
    let vectors = load_embeddings(&fixtures.join("toy_vectors.txt"), 8)?;
    let mut config = ModelConfig::toy(6);
    config.dims.pre = 8;
    let mut rng = relstm::training::TrainConfig::default().init_rng();
    let model = Model::build(config, LabelSchema::semeval(), &corpus, Some(vectors), &mut rng)?;

    let inst = &corpus[0];
    let mut tape = Tape::new(&model.store);
    let xs = inst
        .tokens
        .iter()
        .map(|t| model.features.embed_token(&mut tape, t))
        .collect::<relstm::Result<Vec<_>>>()?;
    let hs = model.encoder.encode(&mut tape, &xs)?;
    for (tok, h) in inst.tokens.iter().zip(&hs) {
        let v = tape.value(*h)?;
        println!("{:<12} {}", tok.surface, v.iter().map(|x| format!("{x:+.4}")).collect::<Vec<_>>().join(" "));
    }

    let x = model.penultimate(&mut tape, inst)?;
    println!("penultimate width {} (expected {})", tape.dim(x)?, config.penultimate_dim());
    let p = model.predict(inst)?;
    println!("untrained prediction {} (p = {:.4})", p.label, p.probabilities[p.index]);
    Ok(())
}
