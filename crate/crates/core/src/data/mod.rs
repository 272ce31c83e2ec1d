//! Relation instances, label schemas and the readers/writers for every
//! on-disk format the crate consumes.

mod bb3;
mod jsonl;
mod semeval;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use bb3::{generate_bb3_pairs, read_bb3_documents, Bb3Document, Bb3Entity, Bb3Link, Bb3Stats, EntityType};
pub use jsonl::{parse_corpus_jsonl, read_instances, write_instances, InstanceRecord};
pub use semeval::{parse_semeval, read_semeval, tokenize_tagged, SEMEVAL_FAMILIES};

use crate::error::{Error, Result};
use crate::features::Token;
use crate::head::EntitySpans;

/// A token sequence with two positional entity mentions and a label.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationInstance {
    pub id: String,
    pub tokens: Vec<Token>,
    pub spans: EntitySpans,
    pub label: String,
    /// Number of sentences the token sequence covers.
    pub window: usize,
}

impl RelationInstance {
    pub fn validate(&self) -> Result<()> {
        if self.tokens.is_empty() {
            return Err(record_err(&self.id, "no tokens"));
        }
        if let Some(t) = self.tokens.iter().find(|t| t.surface.is_empty()) {
            return Err(record_err(&self.id, format!("empty token surface (pos {})", t.pos)));
        }
        if self.window == 0 {
            return Err(record_err(&self.id, "window must be at least 1"));
        }
        self.spans
            .validate(self.tokens.len())
            .map_err(|e| record_err(&self.id, e.to_string()))
    }
}

pub(crate) fn record_err(id: &str, message: impl Into<String>) -> Error {
    Error::Record {
        id: id.to_string(),
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Semeval,
    Bb3,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Semeval => "semeval",
            Task::Bb3 => "bb3",
        })
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semeval" => Ok(Task::Semeval),
            "bb3" => Ok(Task::Bb3),
            other => Err(Error::Config(format!("unknown task {other:?} (expected semeval or bb3)"))),
        }
    }
}

pub const OTHER: &str = "Other";
pub const LIVES_IN: &str = "Lives_In";
pub const NONE_LABEL: &str = "None";

/// Ordered output classes of a task.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub task: Task,
    pub labels: Vec<String>,
}

impl LabelSchema {
    /// 9 relation families × 2 directions, then `Other`.
    pub fn semeval() -> Self {
        let mut labels = Vec::with_capacity(19);
        for fam in SEMEVAL_FAMILIES {
            labels.push(format!("{fam}(e1,e2)"));
            labels.push(format!("{fam}(e2,e1)"));
        }
        labels.push(OTHER.to_string());
        LabelSchema {
            task: Task::Semeval,
            labels,
        }
    }

    pub fn bb3() -> Self {
        LabelSchema {
            task: Task::Bb3,
            labels: vec![LIVES_IN.to_string(), NONE_LABEL.to_string()],
        }
    }

    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Semeval => Self::semeval(),
            Task::Bb3 => Self::bb3(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn index_of(&self, inst: &RelationInstance) -> Result<usize> {
        self.index(&inst.label).ok_or_else(|| {
            record_err(
                &inst.id,
                format!("label {:?} is not in the {} label set", inst.label, self.task),
            )
        })
    }

    /// Checks that every instance label belongs to this schema.
    pub fn check(&self, instances: &[RelationInstance]) -> Result<()> {
        for inst in instances {
            self.index_of(inst)?;
        }
        Ok(())
    }
}

/// Draws `size` instances (seeded) as a development split; returns
/// `(train, dev)`, each in original relative order.
pub fn split_dev(
    instances: Vec<RelationInstance>,
    size: usize,
    seed: u64,
) -> Result<(Vec<RelationInstance>, Vec<RelationInstance>)> {
    if size >= instances.len() {
        return Err(Error::Config(format!(
            "dev split of {size} leaves no training data out of {}",
            instances.len()
        )));
    }
    let mut idx: Vec<usize> = (0..instances.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_dev = vec![false; instances.len()];
    for &i in &idx[..size] {
        is_dev[i] = true;
    }
    let (dev, train): (Vec<_>, Vec<_>) = instances
        .into_iter()
        .zip(is_dev)
        .partition(|(_, d)| *d);
    Ok((
        train.into_iter().map(|(i, _)| i).collect(),
        dev.into_iter().map(|(i, _)| i).collect(),
    ))
}
