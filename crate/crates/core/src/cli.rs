//! The `relstm` command line.
//!
//! Failures print one line, `error: <kind>: <message>`, on stderr and exit
//! with 1 (usage or configuration), 2 (data) or 3 (numeric). Log verbosity
//! comes from `RUST_LOG`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use crate::checkpoint;
use crate::config::RunConfig;
use crate::data::{self, LabelSchema, RelationInstance, Task};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::features::{load_embeddings, Channel, Channels};
use crate::head::ContextParts;
use crate::model::Model;
use crate::sdp::{self, MatchMode};
use crate::tape::Fault;
use crate::training::{self, GradcheckConfig};

#[derive(Debug, Parser)]
#[command(name = "relstm", version, about = "Bi-LSTM relation classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus a per-epoch log.
    Train(TrainArgs),
    /// Score a checkpoint on a labelled JSONL dataset.
    Eval(EvalArgs),
    /// Write label and class probabilities for every input record.
    Predict(PredictArgs),
    /// Compare analytic gradients with finite differences.
    Gradcheck(GradcheckArgs),
    /// Count middle-context and shortest-dependency-path word overlap.
    AnalyzeSdp(SdpArgs),
    /// Convert the official SemEval text format to JSONL.
    ConvertSemeval(ConvertArgs),
    /// Generate bacteria/habitat candidate pairs as JSONL.
    GenBb3Pairs(Bb3Args),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ChannelArg {
    Pre,
    Ran,
    Char,
    Pos,
    Wnh,
}

impl From<ChannelArg> for Channel {
    fn from(c: ChannelArg) -> Self {
        match c {
            ChannelArg::Pre => Channel::Pre,
            ChannelArg::Ran => Channel::Ran,
            ChannelArg::Char => Channel::Char,
            ChannelArg::Pos => Channel::Pos,
            ChannelArg::Wnh => Channel::Wnh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ContextArg {
    Before,
    Middle,
    After,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Semeval,
    Bb3,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Semeval => Task::Semeval,
            TaskArg::Bb3 => Task::Bb3,
        }
    }
}

/// Options shared by commands that build a model from a config.
#[derive(Debug, Default, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
    /// Training data (JSONL).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Pre-trained word vectors (word2vec text format).
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Exact set of enabled feature channels.
    #[arg(long, value_enum, value_delimiter = ',')]
    pub channels: Option<Vec<ChannelArg>>,
    /// Exact set of enabled context parts (`none` for entities only).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub contexts: Option<Vec<ContextArg>>,
}

impl ConfigArgs {
    /// Config file (or defaults) with these flags applied on top.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(t) = self.task {
            cfg.task = t.into();
        }
        if let Some(p) = &self.train {
            cfg.paths.train = Some(p.clone());
        }
        if let Some(p) = &self.embeddings {
            cfg.paths.embeddings = Some(p.clone());
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(list) = &self.channels {
            let mut c = Channels::none();
            for &ch in list {
                c.set(ch.into(), true);
            }
            cfg.model.channels = c;
        }
        if let Some(list) = &self.contexts {
            let mut c = ContextParts::entities_only();
            for ctx in list {
                match ctx {
                    ContextArg::Before => c.before = true,
                    ContextArg::Middle => c.middle = true,
                    ContextArg::After => c.after = true,
                    ContextArg::None => {}
                }
            }
            cfg.model.contexts = c;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Development data (JSONL); otherwise `data.dev_size` or the training set.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Where to write the model.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Where to write the per-epoch JSONL log (default: `<checkpoint>.log.jsonl`).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    /// Largest sentence window kept from the training data.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub dev_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Labelled JSONL dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Also write the report as JSON here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Fail unless the checkpoint was trained for this task.
    #[arg(long, value_enum)]
    pub task: Option<TaskArg>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// JSONL input; `label` may be omitted.
    #[arg(long)]
    pub input: PathBuf,
    /// JSONL output (default: stdout).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: ConfigArgs,
    /// Number of leading instances in the loss.
    #[arg(long, default_value_t = 2)]
    pub instances: usize,
    /// Coordinates sampled per tensor.
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Corrupt the tanh derivative (the check should then fail).
    #[arg(long)]
    pub inject_fault: bool,
    /// Print the report as JSON.
    #[arg(long)]
    pub json: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MatchArg {
    Position,
    Surface,
}

#[derive(Debug, Args)]
pub struct SdpArgs {
    /// Dependency parses (CoNLL-U).
    #[arg(long)]
    pub conllu: PathBuf,
    /// Entity spans per sentence (JSONL sidecar).
    #[arg(long)]
    pub spans: PathBuf,
    #[arg(long, value_enum, default_value = "position")]
    pub r#match: MatchArg,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Bb3Args {
    /// Documents as JSONL.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub window: usize,
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
        Command::AnalyzeSdp(a) => cmd_analyze_sdp(&a),
        Command::ConvertSemeval(a) => cmd_convert_semeval(&a),
        Command::GenBb3Pairs(a) => cmd_gen_bb3_pairs(&a),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn flush(mut w: impl Write, path: Option<&Path>) -> Result<()> {
    w.flush()
        .map_err(|e| Error::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn load_training_inputs(cfg: &RunConfig) -> Result<(Vec<RelationInstance>, Option<crate::features::PretrainedEmbeddings>)> {
    let path = cfg
        .paths
        .train
        .as_ref()
        .ok_or_else(|| Error::Config("no training data (set paths.train or --train)".into()))?;
    let instances = data::read_instances(path)?;
    LabelSchema::for_task(cfg.task).check(&instances)?;
    let emb = if cfg.model.channels.pre {
        let p = cfg
            .paths
            .embeddings
            .as_ref()
            .ok_or_else(|| Error::Config("the pre channel needs --embeddings or paths.embeddings".into()))?;
        Some(load_embeddings(p, cfg.model.dims.pre)?)
    } else {
        None
    };
    Ok((instances, emb))
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut cfg = a.common.resolve()?;
    if let Some(p) = &a.dev {
        cfg.paths.dev = Some(p.clone());
    }
    if let Some(p) = &a.checkpoint {
        cfg.paths.checkpoint = Some(p.clone());
    }
    if let Some(p) = &a.log {
        cfg.paths.log = Some(p.clone());
    }
    if let Some(v) = a.max_epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.train.patience = v;
    }
    if let Some(v) = a.learning_rate {
        cfg.train.learning_rate = v;
    }
    if let Some(v) = a.l2 {
        cfg.train.l2 = v;
    }
    if let Some(v) = a.window {
        cfg.window = v;
    }
    if a.dev_size.is_some() {
        cfg.data.dev_size = a.dev_size;
    }
    cfg.validate()?;
    let ckpt = cfg
        .paths
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Config("no checkpoint path (set paths.checkpoint or --checkpoint)".into()))?;
    let log_path = cfg.paths.log.clone().unwrap_or_else(|| {
        let mut s = ckpt.clone().into_os_string();
        s.push(".log.jsonl");
        PathBuf::from(s)
    });

    let (mut train, emb) = load_training_inputs(&cfg)?;
    let before = train.len();
    train.retain(|i| i.window <= cfg.window);
    if train.len() < before {
        info!("dropped {} instances wider than window {}", before - train.len(), cfg.window);
    }
    let dev = match (&cfg.paths.dev, cfg.data.dev_size) {
        (Some(p), _) => {
            let d = data::read_instances(p)?;
            LabelSchema::for_task(cfg.task).check(&d)?;
            Some(d)
        }
        (None, Some(n)) => {
            let (t, d) = data::split_dev(train, n, cfg.data.split_seed)?;
            train = t;
            Some(d)
        }
        (None, None) => None,
    };
    info!("training on {} instances, dev {}", train.len(), dev.as_ref().map_or(0, Vec::len));
    let out = training::train(
        &train,
        dev.as_deref(),
        cfg.model,
        LabelSchema::for_task(cfg.task),
        emb,
        &cfg.train,
    )?;
    checkpoint::save(&ckpt, &out.model, Some(&cfg.train))?;
    let mut w = create(&log_path)?;
    out.log.write_jsonl(&mut w)?;
    flush(w, Some(&log_path))?;
    let s = out.log.summary.as_ref().expect("train writes a summary");
    println!(
        "best epoch {} of {}: dev metric {:.4}, train accuracy {:.4}, train loss {:.6}",
        s.best_epoch, s.epochs_run, s.best_dev_metric, s.train_accuracy, s.train_loss
    );
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let model = checkpoint::load(&a.checkpoint)?.model;
    if let Some(t) = a.task {
        let t: Task = t.into();
        if t != model.labels.task {
            return Err(Error::Data(format!("checkpoint was trained for {} but --task is {t}", model.labels.task)));
        }
    }
    let instances = data::read_instances(&a.data)?;
    if instances.is_empty() {
        return Err(Error::Data(format!("{} contains no instances", a.data.display())));
    }
    model.labels.check(&instances)?;
    let pred: Vec<String> = model.predict_all(&instances)?.into_iter().map(|p| p.label).collect();
    let gold: Vec<&str> = instances.iter().map(|i| i.label.as_str()).collect();
    let report = evaluate(model.labels.task, &gold, &pred)?;
    print!("{}", report.render_table());
    if let Some(p) = &a.report {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(w).map_err(|e| Error::io(p, e))?;
        flush(w, Some(p))?;
    }
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let model = checkpoint::load(&a.checkpoint)?.model;
    let instances = data::read_instances(&a.input)?;
    let mut w = output(a.output.as_deref())?;
    for inst in &instances {
        let p = model.predict(inst)?;
        let rec = serde_json::json!({
            "id": inst.id,
            "label": p.label,
            "probabilities": p.probabilities.to_vec(),
        });
        writeln!(w, "{rec}").map_err(|e| Error::io(a.output.as_deref().unwrap_or(Path::new("<stdout>")), e))?;
    }
    flush(w, a.output.as_deref())
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<()> {
    let cfg = a.common.resolve()?;
    cfg.validate()?;
    let (instances, emb) = load_training_inputs(&cfg)?;
    if instances.is_empty() {
        return Err(Error::Data("no instances to check".into()));
    }
    let d = &cfg.model.dims;
    let widest = [d.pre, d.ran, d.chars, d.char_embed, d.pos, d.wnh, cfg.model.lstm, cfg.model.hidden]
        .into_iter()
        .max()
        .unwrap_or(0);
    if widest > 8 {
        warn!("gradcheck is meant for toy models; widest dimension is {widest}");
    }
    let take = a.instances.clamp(1, instances.len());
    let model = Model::build(
        cfg.model,
        LabelSchema::for_task(cfg.task),
        &instances,
        emb,
        &mut cfg.train.init_rng(),
    )?;
    let gc = GradcheckConfig {
        samples_per_block: a.samples,
        seed: cfg.train.seed,
        fault: a.inject_fault.then_some(Fault::TanhDerivative),
        ..GradcheckConfig::default()
    };
    let report = training::gradcheck(&model, &instances[..take], &gc)?;
    if a.json {
        println!("{}", serde_json::to_string(&report).map_err(|e| Error::Data(e.to_string()))?);
    } else {
        print!("{}", report.render());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Error::numeric(
            "gradcheck",
            format!("max relative error {:.3e} exceeds {:.0e}", report.max_error(), report.tolerance),
        ))
    }
}

pub fn cmd_analyze_sdp(a: &SdpArgs) -> Result<()> {
    let sentences = sdp::read_conllu(&a.conllu)?;
    let pairs = sdp::read_pair_spans(&a.spans)?;
    let mode = match a.r#match {
        MatchArg::Position => MatchMode::Position,
        MatchArg::Surface => MatchMode::Surface,
    };
    let st = sdp::overlap_stats(&sentences, &pairs, mode)?;
    if a.json {
        let mut v = serde_json::to_value(&st).map_err(|e| Error::Data(e.to_string()))?;
        v["proportion"] = st.proportion().into();
        println!("{v}");
    } else {
        println!("pairs       {}", st.pairs);
        println!("skipped     {} (cross-sentence)", st.skipped_cross_sentence);
        println!("middle      {}", st.middle_count);
        println!("sdp         {}", st.sdp_count);
        println!("both        {}", st.both_count);
        println!("proportion  {:.4}", st.proportion());
    }
    Ok(())
}

pub fn cmd_convert_semeval(a: &ConvertArgs) -> Result<()> {
    let instances = data::read_semeval(&a.input)?;
    let mut w = output(a.output.as_deref())?;
    data::write_instances(&mut w, &instances)?;
    flush(w, a.output.as_deref())?;
    eprintln!("converted {} instances", instances.len());
    Ok(())
}

pub fn cmd_gen_bb3_pairs(a: &Bb3Args) -> Result<()> {
    let docs = data::read_bb3_documents(&a.input)?;
    let (instances, stats) = data::generate_bb3_pairs(&docs, a.window)?;
    let mut w = output(a.output.as_deref())?;
    data::write_instances(&mut w, &instances)?;
    flush(w, a.output.as_deref())?;
    eprintln!("{}", serde_json::to_string(&stats).map_err(|e| Error::Data(e.to_string()))?);
    Ok(())
}
