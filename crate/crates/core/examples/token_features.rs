//! Builds the five token feature channels over a corpus and embeds one sentence.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use relstm::data::read_instances;
use relstm::features::{load_embeddings, Channel, Channels, FeatureDims, FeatureSpec, Features};
use relstm::params::ParamStore;
use relstm::tape::Tape;

fn main() -> relstm::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let corpus = read_instances(&fixtures.join("toy_train.jsonl"))?;
    let vectors = load_embeddings(&fixtures.join("toy_vectors.txt"), 8)?;

    let spec = FeatureSpec {
        dims: FeatureDims { pre: 8, ran: 6, chars: 4, char_embed: 4, pos: 3, wnh: 3 },
        channels: Channels::default(),
        char_case_sensitive: true,
    };
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let features = Features::build(corpus.iter().flat_map(|i| &i.tokens), Some(vectors), &spec, &mut store, &mut rng, 0.01)?;

    for ch in Channel::ALL {
        let rows = features.table(ch).map(|t| store.value(t.param).rows());
        println!("{:<4} dim {:>2}  table rows {:?}", ch.name(), spec.dims.of(ch), rows);
    }
    println!("token input width {}", features.input_dim());

    let mut tape = Tape::new(&store);
    for tok in &corpus[0].tokens {
        let x = features.embed_token(&mut tape, tok)?;
        let v = tape.value(x)?;
        println!("{:<12} {:+.4} {:+.4} ...", tok.surface, v[0], v[1]);
    }
    Ok(())
}
