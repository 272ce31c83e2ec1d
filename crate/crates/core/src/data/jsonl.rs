//! Internal relation-instance JSONL format, one record per line:
//!
//! ```text
//! {"id": "17", "tokens": [{"surface": "The", "pos": "DT", "wnh": "_"}, ...],
//!  "former": [1, 1], "latter": [6, 7], "label": "Cause-Effect(e2,e1)", "window": 1}
//! ```
//!
//! `pos` and `wnh` default to `"_"`, `window` defaults to 1 and `label` to
//! the empty string (only meaningful for prediction input). Spans are
//! inclusive 0-based token indices with `former` textually first.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{record_err, RelationInstance};
use crate::error::{Error, Result};
use crate::features::Token;
use crate::head::{EntitySpans, Span};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceRecord {
    pub id: String,
    pub tokens: Vec<Token>,
    pub former: Span,
    pub latter: Span,
    /// May be omitted on prediction input.
    #[serde(default)]
    pub label: String,
    #[serde(default = "one")]
    pub window: usize,
}

fn one() -> usize {
    1
}

impl From<&RelationInstance> for InstanceRecord {
    fn from(i: &RelationInstance) -> Self {
        InstanceRecord {
            id: i.id.clone(),
            tokens: i.tokens.clone(),
            former: i.spans.former,
            latter: i.spans.latter,
            label: i.label.clone(),
            window: i.window,
        }
    }
}

impl TryFrom<InstanceRecord> for RelationInstance {
    type Error = Error;
    fn try_from(r: InstanceRecord) -> Result<Self> {
        let inst = RelationInstance {
            id: r.id,
            tokens: r.tokens,
            spans: EntitySpans::new(r.former, r.latter),
            label: r.label,
            window: r.window,
        };
        inst.validate()?;
        Ok(inst)
    }
}

/// Parses JSONL from a reader. Errors carry the record id when it can be
/// recovered, otherwise the line number.
pub fn parse_corpus_jsonl<R: BufRead>(reader: R, source: &str) -> Result<Vec<RelationInstance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: InstanceRecord = serde_json::from_str(&line).map_err(|e| {
            let id = serde_json::from_str::<serde_json::Value>(&line)
                .ok()
                .and_then(|v| v.get("id").and_then(|id| id.as_str()).map(String::from));
            match id {
                Some(id) => record_err(&id, format!("schema violation: {e}")),
                None => Error::Parse {
                    path: source.to_string(),
                    line: i + 1,
                    message: format!("schema violation: {e}"),
                },
            }
        })?;
        out.push(RelationInstance::try_from(rec)?);
    }
    Ok(out)
}

pub fn read_instances(path: &Path) -> Result<Vec<RelationInstance>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_corpus_jsonl(BufReader::new(file), &path.display().to_string())
}

pub fn write_instances<W: Write>(mut w: W, instances: &[RelationInstance]) -> Result<()> {
    for inst in instances {
        let line = serde_json::to_string(&InstanceRecord::from(inst))
            .map_err(|e| Error::Data(format!("serializing {}: {e}", inst.id)))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<output>", e))?;
    }
    Ok(())
}
