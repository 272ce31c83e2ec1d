//! Candidate pair generation for bacteria/habitat relations, including
//! pairs whose mentions sit in different sentences.
//!
//! Input is one JSON document per line, produced upstream from the standoff
//! annotations:
//!
//! ```text
//! {"id": "BB-train-1",
//!  "sentences": [[{"surface": "Vibrio", "pos": "NNP", "wnh": "_"}, ...], ...],
//!  "entities": [{"id": "T1", "type": "bacteria", "sentence": 0, "span": [0, 1]}, ...],
//!  "links": [{"bacteria": "T1", "habitat": "T4"}]}
//! ```
//!
//! `span` indexes tokens within its sentence (inclusive).

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{record_err, RelationInstance, LIVES_IN, NONE_LABEL};
use crate::error::{Error, Result};
use crate::features::Token;
use crate::head::{EntitySpans, Span};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntityType {
    Bacteria,
    Habitat,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bb3Entity {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: EntityType,
    pub sentence: usize,
    pub span: Span,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bb3Link {
    pub bacteria: String,
    pub habitat: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bb3Document {
    pub id: String,
    pub sentences: Vec<Vec<Token>>,
    pub entities: Vec<Bb3Entity>,
    #[serde(default)]
    pub links: Vec<Bb3Link>,
}

/// Counts reported by [`generate_bb3_pairs`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bb3Stats {
    pub instances: usize,
    pub positive: usize,
    pub negative: usize,
    /// Per sentence-window size: `[positive, negative]`.
    pub by_window: BTreeMap<usize, [usize; 2]>,
    /// Pairs skipped because the two mentions overlap.
    pub overlapping: usize,
    /// Gold links whose mentions are further apart than the window.
    pub links_outside_window: usize,
}

impl Bb3Stats {
    pub fn positive_fraction(&self) -> f64 {
        if self.instances == 0 {
            0.0
        } else {
            self.positive as f64 / self.instances as f64
        }
    }
}

pub fn read_bb3_documents(path: &Path) -> Result<Vec<Bb3Document>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    let mut docs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        docs.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(docs)
}

/// Every bacteria/habitat pair whose mentions lie within `window`
/// consecutive sentences becomes an instance over the covered sentences.
pub fn generate_bb3_pairs(docs: &[Bb3Document], window: usize) -> Result<(Vec<RelationInstance>, Bb3Stats)> {
    if window == 0 {
        return Err(Error::Config("sentence window must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut stats = Bb3Stats::default();
    for doc in docs {
        let mut by_id: HashMap<&str, &Bb3Entity> = HashMap::new();
        for e in &doc.entities {
            let sent = doc
                .sentences
                .get(e.sentence)
                .ok_or_else(|| record_err(&doc.id, format!("entity {} points at missing sentence {}", e.id, e.sentence)))?;
            if e.span.start > e.span.end || e.span.end >= sent.len() {
                return Err(record_err(&doc.id, format!("entity {} has span {} outside its sentence", e.id, e.span)));
            }
            if by_id.insert(&e.id, e).is_some() {
                return Err(record_err(&doc.id, format!("duplicate entity id {}", e.id)));
            }
        }
        let mut gold = HashSet::new();
        for l in &doc.links {
            let b = by_id.get(l.bacteria.as_str());
            let h = by_id.get(l.habitat.as_str());
            match (b, h) {
                (Some(b), Some(h)) if b.kind == EntityType::Bacteria && h.kind == EntityType::Habitat => {
                    if b.sentence.abs_diff(h.sentence) + 1 > window {
                        stats.links_outside_window += 1;
                    }
                    gold.insert((l.bacteria.as_str(), l.habitat.as_str()));
                }
                (Some(_), Some(_)) => {
                    return Err(record_err(
                        &doc.id,
                        format!("link {} -> {} does not join bacteria to habitat", l.bacteria, l.habitat),
                    ))
                }
                _ => {
                    return Err(record_err(
                        &doc.id,
                        format!("dangling link {} -> {}", l.bacteria, l.habitat),
                    ))
                }
            }
        }

        let offsets: Vec<usize> = doc
            .sentences
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s.len();
                Some(o)
            })
            .collect();
        let bacteria = doc.entities.iter().filter(|e| e.kind == EntityType::Bacteria);
        for b in bacteria {
            for h in doc.entities.iter().filter(|e| e.kind == EntityType::Habitat) {
                let spanned = b.sentence.abs_diff(h.sentence) + 1;
                if spanned > window {
                    continue;
                }
                let first = b.sentence.min(h.sentence);
                let last = b.sentence.max(h.sentence);
                let base = offsets[first];
                let shift = |e: &Bb3Entity| Span::new(offsets[e.sentence] - base + e.span.start, offsets[e.sentence] - base + e.span.end);
                let (sb, sh) = (shift(b), shift(h));
                let (former, latter) = if sb.start <= sh.start { (sb, sh) } else { (sh, sb) };
                if former.end >= latter.start {
                    stats.overlapping += 1;
                    continue;
                }
                let tokens: Vec<Token> = doc.sentences[first..=last].iter().flatten().cloned().collect();
                let positive = gold.contains(&(b.id.as_str(), h.id.as_str()));
                let label = if positive { LIVES_IN } else { NONE_LABEL };
                let inst = RelationInstance {
                    id: format!("{}:{}:{}", doc.id, b.id, h.id),
                    tokens,
                    spans: EntitySpans::new(former, latter),
                    label: label.to_string(),
                    window: spanned,
                };
                inst.validate()?;
                stats.instances += 1;
                let w = stats.by_window.entry(spanned).or_default();
                if positive {
                    stats.positive += 1;
                    w[0] += 1;
                } else {
                    stats.negative += 1;
                    w[1] += 1;
                }
                out.push(inst);
            }
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sent(words: &[&str]) -> Vec<Token> {
        words.iter().map(|w| Token::plain(*w)).collect()
    }

    fn ent(id: &str, kind: EntityType, sentence: usize, s: usize, e: usize) -> Bb3Entity {
        Bb3Entity {
            id: id.into(),
            kind,
            sentence,
            span: Span::new(s, e),
        }
    }

    fn doc() -> Bb3Document {
        Bb3Document {
            id: "d".into(),
            sentences: vec![
                sent(&["Vibrio", "salmonicida", "was", "detected", "in", "sediment", "."]),
                sent(&["It", "lives", "in", "fish", "."]),
                sent(&["Nothing", "here", "."]),
                sent(&["Farm", "water", "."]),
            ],
            entities: vec![
                ent("T1", EntityType::Bacteria, 0, 0, 1),
                ent("T2", EntityType::Habitat, 0, 5, 5),
                ent("T3", EntityType::Habitat, 1, 3, 3),
                ent("T4", EntityType::Habitat, 3, 0, 1),
            ],
            links: vec![
                Bb3Link {
                    bacteria: "T1".into(),
                    habitat: "T2".into(),
                },
                Bb3Link {
                    bacteria: "T1".into(),
                    habitat: "T3".into(),
                },
            ],
        }
    }

    #[test]
    fn same_sentence_pair() {
        let (v, stats) = generate_bb3_pairs(&[doc()], 1).unwrap();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].label, LIVES_IN);
        assert_eq!(v[0].window, 1);
        assert_eq!(v[0].tokens.len(), 7);
        assert_eq!(stats.links_outside_window, 1);
    }

    #[test]
    fn two_sentence_window() {
        let (v, stats) = generate_bb3_pairs(&[doc()], 2).unwrap();
        assert_eq!(v.len(), 2);
        let cross = v.iter().find(|i| i.window == 2).unwrap();
        assert_eq!(cross.tokens.len(), 12);
        assert_eq!(cross.spans, EntitySpans::new(Span::new(0, 1), Span::new(10, 10)));
        assert_eq!(cross.label, LIVES_IN);
        // T4 is three sentences away from T1.
        assert!(!v.iter().any(|i| i.id.ends_with(":T4")));
        assert_eq!(stats.by_window[&2], [1, 0]);
    }

    #[test]
    fn habitat_before_bacteria_is_former() {
        let mut d = doc();
        d.entities[1] = ent("T2", EntityType::Habitat, 0, 0, 0);
        d.entities[0] = ent("T1", EntityType::Bacteria, 0, 3, 3);
        let (v, _) = generate_bb3_pairs(&[d], 1).unwrap();
        assert_eq!(v[0].spans.former, Span::new(0, 0));
    }

    #[test]
    fn dangling_link_rejected() {
        let mut d = doc();
        d.links.push(Bb3Link {
            bacteria: "T1".into(),
            habitat: "T9".into(),
        });
        let e = generate_bb3_pairs(&[d], 1).unwrap_err();
        assert!(e.to_string().contains("dangling"), "{e}");
    }

    #[test]
    fn overlapping_mentions_skipped() {
        let mut d = doc();
        d.entities[1] = ent("T2", EntityType::Habitat, 0, 1, 2);
        let (v, stats) = generate_bb3_pairs(&[d], 1).unwrap();
        assert!(v.is_empty());
        assert_eq!(stats.overlapping, 1);
    }
}
