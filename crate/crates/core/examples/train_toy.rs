//! Trains on the toy corpus from a TOML config, saves a checkpoint, reloads it
//! and scores the training data.

use std::path::Path;

use relstm::checkpoint;
use relstm::config::RunConfig;
use relstm::data::{read_instances, LabelSchema};
use relstm::eval::evaluate;
use relstm::features::load_embeddings;
use relstm::training;

fn main() -> relstm::Result<()> {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let mut cfg = RunConfig::load(&fixtures.join("toy.toml"))?;
    cfg.train.max_epochs = 60;
    cfg.validate()?;
    let corpus = read_instances(cfg.paths.train.as_ref().expect("toy.toml sets a train path"))?;
    let vectors = load_embeddings(cfg.paths.embeddings.as_ref().expect("toy.toml sets embeddings"), cfg.model.dims.pre)?;

    let out = training::train(&corpus, None, cfg.model, LabelSchema::for_task(cfg.task), Some(vectors), &cfg.train)?;
    for e in out.log.epochs.iter().step_by(10) {
        println!("epoch {:>3}  loss {:.4}  metric {:.4}", e.epoch, e.train_loss, e.dev_metric);
    }

    let dir = std::env::temp_dir().join("relstm-train-toy");
    std::fs::create_dir_all(&dir).map_err(|e| relstm::Error::io(&dir, e))?;
    let path = dir.join("toy.ckpt");
    checkpoint::save(&path, &out.model, Some(&cfg.train))?;
    let model = checkpoint::load(&path)?.model;

    let pred: Vec<String> = model.predict_all(&corpus)?.into_iter().map(|p| p.label).collect();
    let gold: Vec<&str> = corpus.iter().map(|i| i.label.as_str()).collect();
    print!("{}", evaluate(cfg.task, &gold, &pred)?.render_table());
    println!("checkpoint written to {}", path.display());
    Ok(())
}
