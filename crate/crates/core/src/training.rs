//! Cross-entropy training with per-example AdaGrad, early stopping on a
//! development set, and a finite-difference gradient check.

use std::io::Write;

use log::{debug, info};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{LabelSchema, RelationInstance};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::features::PretrainedEmbeddings;
use crate::model::{Model, ModelConfig};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Fault, GradBlock, Gradients, Tape};
use crate::tensor::Matrix;

/// Optimizer and schedule settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// AdaGrad step size α.
    pub learning_rate: f64,
    /// L2 coefficient β, applied as `β·θ` on every update.
    pub l2: f64,
    /// AdaGrad stability constant ε.
    pub epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement tolerated before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            l2: 1e-8,
            epsilon: 1e-6,
            max_epochs: 50,
            patience: 5,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config(format!("l2 must be >= 0, got {}", self.l2)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        Ok(())
    }

    /// Generator for parameter initialization.
    pub fn init_rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    /// Generator for epoch shuffling: same seed, separate stream.
    pub fn shuffle_rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(1);
        rng
    }
}

/// `-log p(gold)` for one instance.
pub fn loss(model: &Model, inst: &RelationInstance) -> Result<f64> {
    let gold = model.labels.index_of(inst)?;
    let mut tape = Tape::new(&model.store);
    let z = model.forward(&mut tape, inst)?;
    let l = tape.neg_log_softmax(z, gold)?;
    finite_loss(tape.value(l)?[0], &inst.id)
}

/// Loss and parameter gradients for one instance.
pub fn loss_and_gradients(model: &Model, inst: &RelationInstance, fault: Option<Fault>) -> Result<(f64, Gradients)> {
    let gold = model.labels.index_of(inst)?;
    let mut tape = match fault {
        Some(f) => Tape::with_fault(&model.store, f),
        None => Tape::new(&model.store),
    };
    let z = model.forward(&mut tape, inst)?;
    let l = tape.neg_log_softmax(z, gold)?;
    let value = finite_loss(tape.value(l)?[0], &inst.id)?;
    Ok((value, tape.backward(l)?))
}

fn finite_loss(v: f64, id: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numeric("loss", format!("non-finite loss for instance {id}")))
    }
}

/// Squared-gradient accumulators, one per tuned tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaGradState {
    pub learning_rate: f64,
    pub l2: f64,
    pub epsilon: f64,
    accumulators: Vec<Option<Matrix>>,
}

impl AdaGradState {
    pub fn new(store: &ParamStore, learning_rate: f64, l2: f64, epsilon: f64) -> Self {
        let accumulators = store
            .iter()
            .map(|(_, p)| (!p.frozen).then(|| Matrix::zeros(p.value.rows(), p.value.cols())))
            .collect();
        AdaGradState {
            learning_rate,
            l2,
            epsilon,
            accumulators,
        }
    }

    pub fn from_config(store: &ParamStore, cfg: &TrainConfig) -> Self {
        Self::new(store, cfg.learning_rate, cfg.l2, cfg.epsilon)
    }

    /// `None` for frozen tensors.
    pub fn accumulator(&self, id: ParamId) -> Option<&Matrix> {
        self.accumulators.get(id.index()).and_then(Option::as_ref)
    }
}

/// One update on every tuned tensor:
/// `g = grad + β·θ; acc += g²; θ -= α·g / (√acc + ε)`.
pub fn adagrad_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdaGradState) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::numeric("gradient", "non-finite gradient"));
    }
    let ids: Vec<ParamId> = store.ids().collect();
    if state.accumulators.len() != ids.len() {
        return Err(Error::InvalidArgument("optimizer state does not match the parameter store".into()));
    }
    let (alpha, beta, eps) = (state.learning_rate, state.l2, state.epsilon);
    for id in ids {
        let Some(acc) = state.accumulators[id.index()].as_mut() else {
            continue;
        };
        let theta = store.value_mut(id);
        let cols = theta.cols();
        let block = grads.block(id);
        let n = theta.as_slice().len();
        let th = theta.as_mut_slice();
        let ac = acc.as_mut_slice();
        let mut update = |k: usize, grad: f64| {
            let g = grad + beta * th[k];
            ac[k] += g * g;
            th[k] -= alpha * g / (ac[k].sqrt() + eps);
        };
        match block {
            GradBlock::Zero => (0..n).for_each(|k| update(k, 0.0)),
            GradBlock::Dense(d) => {
                for (k, &g) in d.iter().enumerate() {
                    update(k, g);
                }
            }
            GradBlock::Rows(rows) => {
                for r in 0..n / cols.max(1) {
                    match rows.get(&r) {
                        Some(g) => (0..cols).for_each(|c| update(r * cols + c, g[c])),
                        None => (0..cols).for_each(|c| update(r * cols + c, 0.0)),
                    }
                }
            }
        }
    }
    if !store.all_finite() {
        return Err(Error::numeric("update", "parameters became non-finite"));
    }
    Ok(())
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_metric: f64,
    pub dev_loss: f64,
    pub improved: bool,
}

/// Summary written after the last epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinalRecord {
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub best_dev_metric: f64,
    pub train_accuracy: f64,
    pub train_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub summary: Option<FinalRecord>,
}

impl TrainLog {
    /// JSON lines: one per epoch, then the summary tagged `"final": true`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let io = |e| Error::io("<log>", e);
        for rec in &self.epochs {
            let line = serde_json::to_string(rec).map_err(|e| Error::Data(e.to_string()))?;
            writeln!(w, "{line}").map_err(io)?;
        }
        if let Some(s) = &self.summary {
            let mut v = serde_json::to_value(s).map_err(|e| Error::Data(e.to_string()))?;
            v["final"] = serde_json::Value::Bool(true);
            writeln!(w, "{v}").map_err(io)?;
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    pub model: Model,
    pub log: TrainLog,
}

/// Mean loss and the task metric of `model` on `instances`.
pub fn score_dataset(model: &Model, instances: &[RelationInstance]) -> Result<(f64, f64, f64)> {
    if instances.is_empty() {
        return Err(Error::Data("cannot score an empty dataset".into()));
    }
    let mut total = 0.0;
    let mut pred = Vec::with_capacity(instances.len());
    for inst in instances {
        let gold = model.labels.index_of(inst)?;
        let p = model.predict(inst)?;
        let l = -p.probabilities[gold].ln();
        total += finite_loss(l, &inst.id)?;
        pred.push(p.label);
    }
    let gold: Vec<&str> = instances.iter().map(|i| i.label.as_str()).collect();
    let report = evaluate(model.labels.task, &gold, &pred)?;
    Ok((total / instances.len() as f64, report.aggregate, report.accuracy))
}

/// Builds a model from `train` and fits it. Without a dev set the training
/// set itself drives early stopping.
pub fn train(
    train: &[RelationInstance],
    dev: Option<&[RelationInstance]>,
    model_config: ModelConfig,
    labels: LabelSchema,
    pretrained: Option<PretrainedEmbeddings>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    config.validate()?;
    let model = Model::build(model_config, labels, train, pretrained, &mut config.init_rng())?;
    fit(model, train, dev, config)
}

/// Trains an already initialized model and returns the best one seen.
pub fn fit(
    mut model: Model,
    train: &[RelationInstance],
    dev: Option<&[RelationInstance]>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(Error::Data("training corpus is empty".into()));
    }
    config.validate()?;
    model.labels.check(train)?;
    let dev = dev.filter(|d| !d.is_empty()).unwrap_or(train);
    model.labels.check(dev)?;

    let mut state = AdaGradState::from_config(&model.store, config);
    let mut rng = config.shuffle_rng();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, f64, usize, ParamStore)> = None;
    let mut since_best = 0;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for &i in &order {
            let (l, grads) = loss_and_gradients(&model, &train[i], None)?;
            total += l;
            adagrad_step(&mut model.store, &grads, &mut state)?;
        }
        let train_loss = total / train.len() as f64;
        let (dev_loss, dev_metric, _) = score_dataset(&model, dev)?;
        let improved = match &best {
            None => true,
            Some((m, l, _, _)) => dev_metric > *m || (dev_metric == *m && dev_loss < *l),
        };
        if improved {
            best = Some((dev_metric, dev_loss, epoch, model.store.clone()));
            since_best = 0;
        } else {
            since_best += 1;
        }
        info!("epoch {epoch}: train loss {train_loss:.6}, dev metric {dev_metric:.4}, dev loss {dev_loss:.6}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            dev_metric,
            dev_loss,
            improved,
        });
        if !improved && since_best >= config.patience {
            debug!("stopping after {since_best} epochs without improvement");
            break;
        }
    }

    let (best_metric, _, best_epoch, store) = best.expect("at least one epoch runs");
    model.store = store;
    let (train_loss, _, train_accuracy) = score_dataset(&model, train)?;
    log.summary = Some(FinalRecord {
        best_epoch,
        epochs_run: log.epochs.len(),
        best_dev_metric: best_metric,
        train_accuracy,
        train_loss,
    });
    Ok(TrainOutcome { model, log })
}

/// Settings for [`gradcheck`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub step: f64,
    pub samples_per_block: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub fault: Option<Fault>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            step: 1e-4,
            samples_per_block: 20,
            tolerance: 1e-4,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub skipped: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockCheck>,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.blocks.iter().all(|b| b.skipped || b.max_rel_error <= self.tolerance)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for b in &self.blocks {
            if b.skipped {
                out.push_str(&format!("{:<16} skipped (frozen)\n", b.name));
            } else {
                let mark = if b.max_rel_error <= self.tolerance { "ok" } else { "FAIL" };
                out.push_str(&format!(
                    "{:<16} {:>3} coords  max rel err {:.3e}  {mark}\n",
                    b.name, b.checked, b.max_rel_error
                ));
            }
        }
        out
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn total_loss(model: &Model, instances: &[RelationInstance]) -> Result<f64> {
    instances.iter().map(|i| loss(model, i)).sum()
}

/// Compares analytic gradients of the summed loss over `instances` with
/// central differences on randomly sampled coordinates of every tensor.
/// Table coordinates are drawn from rows the instances actually touch.
pub fn gradcheck(model: &Model, instances: &[RelationInstance], cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("gradcheck needs at least one instance".into()));
    }
    let mut grads = Gradients::zeros(&model.store);
    for inst in instances {
        let (_, g) = loss_and_gradients(model, inst, cfg.fault)?;
        grads.accumulate(&g);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut probe = model.clone();
    let mut blocks = Vec::new();
    for (id, p) in model.store.iter() {
        if p.frozen {
            blocks.push(BlockCheck {
                name: p.name.clone(),
                checked: 0,
                max_rel_error: 0.0,
                skipped: true,
            });
            continue;
        }
        let cols = p.value.cols();
        let candidates: Vec<usize> = match grads.block(id) {
            GradBlock::Rows(_) => grads
                .touched_rows(id)
                .into_iter()
                .flat_map(|r| r * cols..(r + 1) * cols)
                .collect(),
            _ => (0..p.value.as_slice().len()).collect(),
        };
        let take = cfg.samples_per_block.min(candidates.len());
        let picks = index::sample(&mut rng, candidates.len(), take);
        let mut worst: f64 = 0.0;
        for k in picks.iter().map(|i| candidates[i]) {
            let orig = model.store.value(id).as_slice()[k];
            probe.store.value_mut(id).as_mut_slice()[k] = orig + cfg.step;
            let up = total_loss(&probe, instances)?;
            probe.store.value_mut(id).as_mut_slice()[k] = orig - cfg.step;
            let down = total_loss(&probe, instances)?;
            probe.store.value_mut(id).as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * cfg.step);
            worst = worst.max(relative_error(grads.at(id, k), numeric));
        }
        blocks.push(BlockCheck {
            name: p.name.clone(),
            checked: take,
            max_rel_error: worst,
            skipped: false,
        });
    }
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        blocks,
    })
}
