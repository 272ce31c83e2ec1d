//! Token feature channels and the composite input embedding
//! `x = r_pre ⊕ r_ran ⊕ r_char ⊕ r_pos ⊕ r_wnh`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::{uniform_matrix, LstmParams};
use crate::error::{Error, Result};
use crate::params::{ParamId, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::{Matrix, Vector};

/// Placeholder for a missing POS or hypernym annotation.
pub const NO_TAG: &str = "_";
pub const UNK: &str = "<unk>";

/// One token with its pre-computed annotations.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    #[serde(default = "no_tag")]
    pub pos: String,
    #[serde(default = "no_tag")]
    pub wnh: String,
}

fn no_tag() -> String {
    NO_TAG.to_string()
}

impl Token {
    pub fn new(surface: impl Into<String>, pos: impl Into<String>, wnh: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            pos: pos.into(),
            wnh: wnh.into(),
        }
    }

    /// A token with no POS or hypernym annotation.
    pub fn plain(surface: impl Into<String>) -> Self {
        Token::new(surface, NO_TAG, NO_TAG)
    }

    pub fn chars(&self) -> impl Iterator<Item = char> + '_ {
        self.surface.chars()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Pre,
    Ran,
    Char,
    Pos,
    Wnh,
}

impl Channel {
    pub const ALL: [Channel; 5] = [Channel::Pre, Channel::Ran, Channel::Char, Channel::Pos, Channel::Wnh];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Pre => "pre",
            Channel::Ran => "ran",
            Channel::Char => "char",
            Channel::Pos => "pos",
            Channel::Wnh => "wnh",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-channel switches for feature ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Channels {
    pub pre: bool,
    pub ran: bool,
    #[serde(rename = "char")]
    pub chars: bool,
    pub pos: bool,
    pub wnh: bool,
}

impl Default for Channels {
    fn default() -> Self {
        Channels {
            pre: true,
            ran: true,
            chars: true,
            pos: true,
            wnh: true,
        }
    }
}

impl Channels {
    pub fn none() -> Self {
        Channels {
            pre: false,
            ran: false,
            chars: false,
            pos: false,
            wnh: false,
        }
    }

    pub fn only(channel: Channel) -> Self {
        let mut c = Channels::none();
        c.set(channel, true);
        c
    }

    pub fn enabled(&self, channel: Channel) -> bool {
        match channel {
            Channel::Pre => self.pre,
            Channel::Ran => self.ran,
            Channel::Char => self.chars,
            Channel::Pos => self.pos,
            Channel::Wnh => self.wnh,
        }
    }

    pub fn set(&mut self, channel: Channel, on: bool) {
        match channel {
            Channel::Pre => self.pre = on,
            Channel::Ran => self.ran = on,
            Channel::Char => self.chars = on,
            Channel::Pos => self.pos = on,
            Channel::Wnh => self.wnh = on,
        }
    }

    pub fn any(&self) -> bool {
        Channel::ALL.iter().any(|&c| self.enabled(c))
    }
}

/// Embedding widths. `char_embed` is the width of one character vector
/// fed to the character Bi-LSTM; `chars` is the composed output width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureDims {
    pub pre: usize,
    pub ran: usize,
    #[serde(rename = "char")]
    pub chars: usize,
    pub char_embed: usize,
    pub pos: usize,
    pub wnh: usize,
}

impl Default for FeatureDims {
    fn default() -> Self {
        FeatureDims {
            pre: 200,
            ran: 50,
            chars: 50,
            char_embed: 50,
            pos: 50,
            wnh: 50,
        }
    }
}

impl FeatureDims {
    pub fn of(&self, channel: Channel) -> usize {
        match channel {
            Channel::Pre => self.pre,
            Channel::Ran => self.ran,
            Channel::Char => self.chars,
            Channel::Pos => self.pos,
            Channel::Wnh => self.wnh,
        }
    }

    /// Width of `x` for the enabled channels.
    pub fn input_dim(&self, channels: &Channels) -> usize {
        Channel::ALL
            .iter()
            .filter(|&&c| channels.enabled(c))
            .map(|&c| self.of(c))
            .sum()
    }
}

/// Ordered string vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocab {
    items: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds from items in the given order; later duplicates are ignored.
    pub fn from_items<I, S>(items: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab::default();
        for it in items {
            v.insert(it.into());
        }
        v
    }

    /// `UNK` at row 0, then the distinct keys in sorted order.
    pub fn with_unk<I, S>(keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = keys.into_iter().map(Into::into).filter(|k| k != UNK).collect();
        Vocab::from_items(std::iter::once(UNK.to_string()).chain(set))
    }

    fn insert(&mut self, item: String) -> bool {
        if self.index.contains_key(&item) {
            return false;
        }
        self.index.insert(item.clone(), self.items.len());
        self.items.push(item);
        true
    }

    pub fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }
}

/// A vocabulary bound to a parameter matrix of `|vocab| × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct LookupTable {
    pub channel: Channel,
    pub vocab: Vocab,
    pub param: ParamId,
    pub dim: usize,
    pub frozen: bool,
    /// Lowercase keys before lookup (used for the pre-trained table).
    pub lowercase: bool,
}

impl LookupTable {
    fn key<'k>(&self, key: &'k str) -> std::borrow::Cow<'k, str> {
        if self.lowercase {
            std::borrow::Cow::Owned(key.to_lowercase())
        } else {
            std::borrow::Cow::Borrowed(key)
        }
    }

    /// Row index for `key`; tuned tables fall back to `UNK`, frozen tables
    /// return `None` for unknown keys.
    pub fn row_index(&self, key: &str) -> Option<usize> {
        let k = self.key(key);
        match self.vocab.get(&k) {
            Some(i) => Some(i),
            None if self.frozen => None,
            None => self.vocab.get(UNK),
        }
    }

    /// Row value without a tape. Unknown keys in a frozen table give zeros.
    pub fn lookup_value(&self, store: &ParamStore, key: &str) -> Vector {
        match self.row_index(key) {
            Some(i) => Vector::new(store.value(self.param).row(i).to_vec()),
            None => Vector::zeros(self.dim),
        }
    }

    /// Records the lookup. Frozen rows enter as constants; tuned rows are
    /// tracked so their gradient reaches the table.
    pub fn lookup(&self, tape: &mut Tape<'_>, key: &str) -> Result<Var> {
        if self.frozen {
            let v = self.lookup_value(tape.store(), key);
            return Ok(tape.constant(v.into_inner()));
        }
        let row = self
            .row_index(key)
            .ok_or_else(|| Error::Data(format!("{} table has no UNK row", self.channel)))?;
        tape.row(self.param, row)
    }
}

/// Result of reading a word2vec-style text file.
#[derive(Clone, Debug, PartialEq)]
pub struct PretrainedEmbeddings {
    pub vocab: Vocab,
    pub matrix: Matrix,
    pub malformed_lines: usize,
    pub duplicate_words: usize,
}

/// Reads `[count dim]` header (optional) then `word v1 … vd` lines.
pub fn load_embeddings(path: &Path, expected_dim: usize) -> Result<PretrainedEmbeddings> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_embeddings(BufReader::new(file), expected_dim, &path.display().to_string())
}

pub fn parse_embeddings<R: BufRead>(reader: R, expected_dim: usize, source: &str) -> Result<PretrainedEmbeddings> {
    let mut words: Vec<String> = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut values: Vec<f64> = Vec::new();
    let mut malformed = 0;
    let mut duplicates = 0;
    let mut dim: Option<usize> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let fields: Vec<&str> = line.split(' ').filter(|f| !f.is_empty()).collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 0 && fields.len() == 2 {
            if let (Ok(_), Ok(d)) = (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
                if d != expected_dim {
                    return Err(Error::Data(format!(
                        "{source}: embedding file declares dim {d} but configuration expects {expected_dim}"
                    )));
                }
                dim = Some(d);
                continue;
            }
        }
        let parsed: std::result::Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let Ok(row) = parsed else {
            malformed += 1;
            continue;
        };
        if !row.iter().all(|v| v.is_finite()) {
            malformed += 1;
            continue;
        }
        match dim {
            None => {
                if row.len() != expected_dim {
                    return Err(Error::Data(format!(
                        "{source}: embedding file has dim {} but configuration expects {expected_dim}",
                        row.len()
                    )));
                }
                dim = Some(row.len());
            }
            Some(d) if d != row.len() => {
                malformed += 1;
                continue;
            }
            Some(_) => {}
        }
        let word = fields[0].to_string();
        if seen.insert(word.clone(), ()).is_some() {
            duplicates += 1;
            continue;
        }
        words.push(word);
        values.extend(row);
    }
    if malformed > 0 {
        warn!("{source}: skipped {malformed} malformed embedding lines");
    }
    if duplicates > 0 {
        warn!("{source}: ignored {duplicates} duplicate embedding words (first occurrence kept)");
    }
    let rows = words.len();
    Ok(PretrainedEmbeddings {
        vocab: Vocab::from_items(words),
        matrix: Matrix::from_vec(rows, expected_dim, values)?,
        malformed_lines: malformed,
        duplicate_words: duplicates,
    })
}

/// Character Bi-LSTM: `r_char = l2r ⊕ r2l`, each direction `n_char / 2` wide.
#[derive(Clone, Debug, PartialEq)]
pub struct CharComposer {
    pub table: LookupTable,
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub case_sensitive: bool,
}

impl CharComposer {
    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    fn char_keys(&self, surface: &str) -> Vec<String> {
        if self.case_sensitive {
            surface.chars().map(String::from).collect()
        } else {
            surface.to_lowercase().chars().map(String::from).collect()
        }
    }

    /// Last left-to-right output concatenated with the last right-to-left output.
    pub fn compose(&self, tape: &mut Tape<'_>, surface: &str) -> Result<Var> {
        let keys = self.char_keys(surface);
        if keys.is_empty() {
            return Err(Error::InvalidArgument("cannot compose an empty character sequence".into()));
        }
        let xs = keys
            .iter()
            .map(|k| self.table.lookup(tape, k))
            .collect::<Result<Vec<_>>>()?;
        let fwd = self.forward.bind(tape);
        let bwd = self.backward.bind(tape);
        let l2r = fwd.run(tape, &xs, false)?;
        let r2l = bwd.run(tape, &xs, true)?;
        // r2l finishes on the first character.
        tape.concat(&[l2r[xs.len() - 1], r2l[0]])
    }
}

/// All enabled channels for building `x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    pub pre: Option<LookupTable>,
    pub ran: Option<LookupTable>,
    pub chars: Option<CharComposer>,
    pub pos: Option<LookupTable>,
    pub wnh: Option<LookupTable>,
}

/// Saved vocabulary items of each enabled table.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureVocabs {
    pub pre: Option<Vec<String>>,
    pub ran: Option<Vec<String>>,
    #[serde(rename = "char")]
    pub chars: Option<Vec<String>>,
    pub pos: Option<Vec<String>>,
    pub wnh: Option<Vec<String>>,
}

/// Settings that shape the feature tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub dims: FeatureDims,
    pub channels: Channels,
    pub char_case_sensitive: bool,
}

impl Features {
    /// Builds vocabularies from `tokens` and registers every enabled table
    /// in `store`, tuned tables initialized uniform in `(-range, range)`.
    ///
    /// Registration order is fixed: pre, ran, char (table, l2r, r2l), pos, wnh.
    pub fn build<'t, I, R>(
        tokens: I,
        pretrained: Option<PretrainedEmbeddings>,
        spec: &FeatureSpec,
        store: &mut ParamStore,
        rng: &mut R,
        range: f64,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = &'t Token>,
        R: Rng,
    {
        let FeatureSpec {
            dims,
            channels,
            char_case_sensitive,
        } = *spec;
        if !channels.any() {
            return Err(Error::Config("at least one feature channel must be enabled".into()));
        }
        let mut words = BTreeSet::new();
        let mut pos = BTreeSet::new();
        let mut wnh = BTreeSet::new();
        let mut chars = BTreeSet::new();
        let mut any = false;
        for t in tokens {
            any = true;
            words.insert(t.surface.clone());
            pos.insert(t.pos.clone());
            wnh.insert(t.wnh.clone());
            let s = if char_case_sensitive {
                t.surface.clone()
            } else {
                t.surface.to_lowercase()
            };
            chars.extend(s.chars().map(String::from));
        }
        if !any {
            return Err(Error::Data("cannot build vocabularies from an empty corpus".into()));
        }

        let pre = if channels.pre {
            let emb = pretrained.ok_or_else(|| {
                Error::Config("pre-trained channel enabled but no embeddings supplied".into())
            })?;
            if emb.matrix.cols() != dims.pre {
                return Err(Error::Data(format!(
                    "embedding dim {} but configuration expects {}",
                    emb.matrix.cols(),
                    dims.pre
                )));
            }
            let param = store.add("E_pre", emb.matrix, true)?;
            Some(LookupTable {
                channel: Channel::Pre,
                vocab: emb.vocab,
                param,
                dim: dims.pre,
                frozen: true,
                lowercase: true,
            })
        } else {
            None
        };

        let tuned = |store: &mut ParamStore, rng: &mut R, channel: Channel, keys: BTreeSet<String>, dim: usize| {
            if dim == 0 {
                return Err(Error::Config(format!("{channel} dimension must be positive")));
            }
            let vocab = Vocab::with_unk(keys);
            let param = store.add(
                format!("E_{channel}"),
                uniform_matrix(rng, vocab.len(), dim, range),
                false,
            )?;
            Ok(LookupTable {
                channel,
                vocab,
                param,
                dim,
                frozen: false,
                lowercase: false,
            })
        };

        let ran = if channels.ran {
            Some(tuned(store, rng, Channel::Ran, words, dims.ran)?)
        } else {
            None
        };
        let chars = if channels.chars {
            if dims.chars == 0 || dims.chars % 2 != 0 {
                return Err(Error::Config(format!(
                    "char dimension must be positive and even, got {}",
                    dims.chars
                )));
            }
            let table = tuned(store, rng, Channel::Char, chars, dims.char_embed)?;
            let half = dims.chars / 2;
            let forward = LstmParams::register(store, "char_l2r", dims.char_embed, half, rng, range)?;
            let backward = LstmParams::register(store, "char_r2l", dims.char_embed, half, rng, range)?;
            Some(CharComposer {
                table,
                forward,
                backward,
                case_sensitive: char_case_sensitive,
            })
        } else {
            None
        };
        let pos = if channels.pos {
            Some(tuned(store, rng, Channel::Pos, pos, dims.pos)?)
        } else {
            None
        };
        let wnh = if channels.wnh {
            Some(tuned(store, rng, Channel::Wnh, wnh, dims.wnh)?)
        } else {
            None
        };
        Ok(Features {
            pre,
            ran,
            chars,
            pos,
            wnh,
        })
    }

    /// Vocabulary items per enabled channel, in row order.
    pub fn vocabs(&self) -> FeatureVocabs {
        let items = |t: &Option<LookupTable>| t.as_ref().map(|t| t.vocab.items().to_vec());
        FeatureVocabs {
            pre: items(&self.pre),
            ran: items(&self.ran),
            chars: self.chars.as_ref().map(|c| c.table.vocab.items().to_vec()),
            pos: items(&self.pos),
            wnh: items(&self.wnh),
        }
    }

    /// Reattaches saved vocabularies to tensors already present in `store`.
    pub fn rebind(spec: &FeatureSpec, vocabs: &FeatureVocabs, store: &ParamStore) -> Result<Self> {
        let table = |channel: Channel, items: &Option<Vec<String>>| -> Result<Option<LookupTable>> {
            let on = spec.channels.enabled(channel);
            match (on, items) {
                (false, None) => Ok(None),
                (true, Some(items)) => {
                    let name = format!("E_{channel}");
                    let param = store
                        .id(&name)
                        .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
                    let vocab = Vocab::from_items(items.iter().cloned());
                    let (rows, dim) = (store.value(param).rows(), store.value(param).cols());
                    if rows != vocab.len() {
                        return Err(Error::Checkpoint(format!(
                            "{name} has {rows} rows but the vocabulary has {}",
                            vocab.len()
                        )));
                    }
                    let frozen = channel == Channel::Pre;
                    Ok(Some(LookupTable {
                        channel,
                        vocab,
                        param,
                        dim,
                        frozen,
                        lowercase: frozen,
                    }))
                }
                _ => Err(Error::Checkpoint(format!("{channel} vocabulary does not match channel settings"))),
            }
        };
        let pre = table(Channel::Pre, &vocabs.pre)?;
        let ran = table(Channel::Ran, &vocabs.ran)?;
        let chars = match table(Channel::Char, &vocabs.chars)? {
            Some(table) => Some(CharComposer {
                table,
                forward: LstmParams::lookup(store, "char_l2r")?,
                backward: LstmParams::lookup(store, "char_r2l")?,
                case_sensitive: spec.char_case_sensitive,
            }),
            None => None,
        };
        let pos = table(Channel::Pos, &vocabs.pos)?;
        let wnh = table(Channel::Wnh, &vocabs.wnh)?;
        Ok(Features {
            pre,
            ran,
            chars,
            pos,
            wnh,
        })
    }

    pub fn input_dim(&self) -> usize {
        [&self.pre, &self.ran, &self.pos, &self.wnh]
            .iter()
            .filter_map(|t| t.as_ref().map(|t| t.dim))
            .sum::<usize>()
            + self.chars.as_ref().map_or(0, |c| c.output_dim())
    }

    pub fn table(&self, channel: Channel) -> Option<&LookupTable> {
        match channel {
            Channel::Pre => self.pre.as_ref(),
            Channel::Ran => self.ran.as_ref(),
            Channel::Char => self.chars.as_ref().map(|c| &c.table),
            Channel::Pos => self.pos.as_ref(),
            Channel::Wnh => self.wnh.as_ref(),
        }
    }

    /// `x` for one token, channels in fixed order, disabled ones omitted.
    pub fn embed_token(&self, tape: &mut Tape<'_>, tok: &Token) -> Result<Var> {
        let mut parts = Vec::with_capacity(5);
        if let Some(t) = &self.pre {
            parts.push(t.lookup(tape, &tok.surface)?);
        }
        if let Some(t) = &self.ran {
            parts.push(t.lookup(tape, &tok.surface)?);
        }
        if let Some(c) = &self.chars {
            parts.push(c.compose(tape, &tok.surface)?);
        }
        if let Some(t) = &self.pos {
            parts.push(t.lookup(tape, &tok.pos)?);
        }
        if let Some(t) = &self.wnh {
            parts.push(t.lookup(tape, &tok.wnh)?);
        }
        if parts.is_empty() {
            return Err(Error::Config("no feature channel enabled".into()));
        }
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        tape.concat(&parts)
    }
}
