//! Finite-difference check of every parameter block, then the same check with
//! a deliberately wrong tanh derivative to show it is caught.

use std::path::Path;

use relstm::config::RunConfig;
use relstm::data::{read_instances, LabelSchema};
use relstm::features::load_embeddings;
use relstm::model::Model;
use relstm::tape::Fault;
use relstm::training::{gradcheck, GradcheckConfig};

fn main() -> relstm::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let cfg = RunConfig::load(&fixtures.join("gradcheck.toml"))?;
    let corpus = read_instances(cfg.paths.train.as_ref().expect("train path"))?;
    let vectors = load_embeddings(cfg.paths.embeddings.as_ref().expect("embeddings path"), cfg.model.dims.pre)?;
    let model = Model::build(cfg.model, LabelSchema::semeval(), &corpus, Some(vectors), &mut cfg.train.init_rng())?;

    let report = gradcheck(&model, &corpus[..2], &GradcheckConfig::default())?;
    print!("{}", report.render());

    let faulty = GradcheckConfig { fault: Some(Fault::TanhDerivative), ..GradcheckConfig::default() };
    let broken = gradcheck(&model, &corpus[..2], &faulty)?;
    println!("with a broken tanh derivative: max rel error {:.3e}, passed {}", broken.max_error(), broken.passed());
    Ok(())
}
