//! Declarative run configuration, read from TOML.
//!
//! Every key is optional; omitted keys take the defaults shown here.
//!
//! ```toml
//! task = "semeval"          # or "bb3"
//! window = 1                # largest sentence window used for training
//!
//! [paths]                   # relative paths resolve against this file
//! train = "train.jsonl"
//! dev = "dev.jsonl"
//! test = "test.jsonl"
//! embeddings = "vectors.txt"
//! checkpoint = "model.ckpt"
//! log = "train.log.jsonl"
//!
//! [data]
//! dev_size = 800            # held out from train when no dev path is given
//! split_seed = 13
//!
//! [model]
//! lstm = 200
//! hidden = 200
//! init_range = 0.01
//! char_case_sensitive = true
//! dims = { pre = 200, ran = 50, char = 50, char_embed = 50, pos = 50, wnh = 50 }
//! channels = { pre = true, ran = true, char = true, pos = true, wnh = true }
//! contexts = { before = true, middle = true, after = true }
//!
//! [train]
//! learning_rate = 0.01
//! l2 = 1e-8
//! epsilon = 1e-6
//! max_epochs = 50
//! patience = 5
//! seed = 1
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for p in [
            &mut self.train,
            &mut self.dev,
            &mut self.test,
            &mut self.embeddings,
            &mut self.checkpoint,
            &mut self.log,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub dev_size: Option<usize>,
    pub split_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dev_size: None,
            split_seed: 13,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    pub window: usize,
    pub paths: Paths,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            task: Task::Semeval,
            window: 1,
            paths: Paths::default(),
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parses TOML text; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string().replace('\n', " ")))?;
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Checks value ranges and that every input path exists.
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        self.model.validate()?;
        self.train.validate()?;
        let dims = &self.model.dims;
        for (on, dim, name) in [
            (self.model.channels.pre, dims.pre, "pre"),
            (self.model.channels.ran, dims.ran, "ran"),
            (self.model.channels.chars, dims.chars, "char"),
            (self.model.channels.chars, dims.char_embed, "char_embed"),
            (self.model.channels.pos, dims.pos, "pos"),
            (self.model.channels.wnh, dims.wnh, "wnh"),
        ] {
            if on && dim == 0 {
                return Err(Error::Config(format!("{name} dimension must be positive")));
            }
        }
        let p = &self.paths;
        for path in [&p.train, &p.dev, &p.test, &p.embeddings].into_iter().flatten() {
            if !path.exists() {
                return Err(Error::MissingPath(path.clone()));
            }
        }
        if self.model.channels.pre && p.embeddings.is_none() && p.train.is_some() {
            return Err(Error::Config(
                "the pre channel is enabled but paths.embeddings is not set".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml("", Path::new("/x")).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.train.l2, 1e-8);
        assert_eq!(c.model.dims.pre, 200);
        assert_eq!(c.model.lstm, 200);
    }

    #[test]
    fn partial_override_and_path_resolution() {
        let text = "task = \"bb3\"\nwindow = 2\n[paths]\ntrain = \"t.jsonl\"\n[model]\nhidden = 8\ndims = { pos = 4 }\n[train]\nseed = 42\n";
        let c = RunConfig::from_toml(text, Path::new("/base")).unwrap();
        assert_eq!(c.task, Task::Bb3);
        assert_eq!(c.window, 2);
        assert_eq!(c.paths.train.as_deref(), Some(Path::new("/base/t.jsonl")));
        assert_eq!(c.model.hidden, 8);
        assert_eq!(c.model.dims.pos, 4);
        assert_eq!(c.model.dims.ran, 50);
        assert_eq!(c.train.seed, 42);
    }

    #[test]
    fn unknown_keys_and_missing_paths_rejected() {
        assert!(matches!(RunConfig::from_toml("lr = 1", Path::new(".")), Err(Error::Config(_))));
        let mut c = RunConfig::default();
        c.paths.embeddings = Some("/definitely/not/here.txt".into());
        let e = c.validate().unwrap_err();
        assert!(matches!(&e, Error::MissingPath(p) if p.ends_with("here.txt")));
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::default();
        c.paths.log = Some("/tmp/l".into());
        c.data.dev_size = Some(3);
        let back = RunConfig::from_toml(&c.to_toml().unwrap(), Path::new("/")).unwrap();
        assert_eq!(back, c);
    }
}
