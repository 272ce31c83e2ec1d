//! Five-part segmentation around the two entities, part pooling, and the
//! softmax output layer.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamId;
use crate::tape::{Tape, Var};
use crate::tensor::{self, Matrix, Vector};

/// Inclusive token range `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// The textually earlier (`former`) and later (`latter`) entity mentions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EntitySpans {
    pub former: Span,
    pub latter: Span,
}

impl EntitySpans {
    pub fn new(former: Span, latter: Span) -> Self {
        EntitySpans { former, latter }
    }

    /// Checks `0 ≤ former.start ≤ former.end < latter.start ≤ latter.end < n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        let (f, l) = (self.former, self.latter);
        let ok = f.start <= f.end && f.end < l.start && l.start <= l.end && l.end < n;
        if ok {
            Ok(())
        } else {
            Err(Error::Data(format!(
                "invalid entity spans former {f} latter {l} for {n} tokens"
            )))
        }
    }
}

/// The five parts as half-open token ranges. Together they partition `0..n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    pub before: Range<usize>,
    pub former: Range<usize>,
    pub middle: Range<usize>,
    pub latter: Range<usize>,
    pub after: Range<usize>,
}

impl Segments {
    pub fn get(&self, part: Part) -> Range<usize> {
        match part {
            Part::Before => self.before.clone(),
            Part::Former => self.former.clone(),
            Part::Middle => self.middle.clone(),
            Part::Latter => self.latter.clone(),
            Part::After => self.after.clone(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Part {
    Before,
    Former,
    Middle,
    Latter,
    After,
}

impl Part {
    pub const ALL: [Part; 5] = [Part::Before, Part::Former, Part::Middle, Part::Latter, Part::After];
}

pub fn segment(n: usize, spans: &EntitySpans) -> Result<Segments> {
    spans.validate(n)?;
    let (f, l) = (spans.former, spans.latter);
    Ok(Segments {
        before: 0..f.start,
        former: f.start..f.end + 1,
        middle: f.end + 1..l.start,
        latter: l.start..l.end + 1,
        after: l.end + 1..n,
    })
}

/// Which context parts feed the penultimate layer. Entities are always used.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContextParts {
    pub before: bool,
    pub middle: bool,
    pub after: bool,
}

impl Default for ContextParts {
    fn default() -> Self {
        ContextParts {
            before: true,
            middle: true,
            after: true,
        }
    }
}

impl ContextParts {
    pub fn entities_only() -> Self {
        ContextParts {
            before: false,
            middle: false,
            after: false,
        }
    }

    /// Enabled parts in penultimate order.
    pub fn parts(&self) -> Vec<Part> {
        Part::ALL
            .into_iter()
            .filter(|p| match p {
                Part::Before => self.before,
                Part::Middle => self.middle,
                Part::After => self.after,
                Part::Former | Part::Latter => true,
            })
            .collect()
    }

    pub fn penultimate_dim(&self, hidden: usize) -> usize {
        4 * hidden * self.parts().len()
    }
}

/// `max ⊕ min ⊕ avg ⊕ rss` of a set of `dim`-vectors; zero vector when empty.
///
/// The fourth block is named "std" in the model description but is computed
/// as printed there: `sqrt(Σ_k h_kj²)`, with no mean subtraction and no 1/K.
pub fn pool_values(part: &[&[f64]], dim: usize) -> Vector {
    let mut out = vec![0.0; 4 * dim];
    if part.is_empty() {
        return Vector::new(out);
    }
    let k = part.len() as f64;
    for j in 0..dim {
        let mut max = part[0][j];
        let mut min = part[0][j];
        let mut sum = 0.0;
        let mut sq = 0.0;
        for h in part {
            let v = h[j];
            if v > max {
                max = v;
            }
            if v < min {
                min = v;
            }
            sum += v;
            sq += v * v;
        }
        out[j] = max;
        out[dim + j] = min;
        out[2 * dim + j] = sum / k;
        out[3 * dim + j] = sq.sqrt();
    }
    Vector::new(out)
}

/// Value-level pooling of a part.
pub fn pool(part: &[Vector], dim: usize) -> Vector {
    let rows: Vec<&[f64]> = part.iter().map(|v| &v[..]).collect();
    pool_values(&rows, dim)
}

/// Pools each enabled part of `reps` and concatenates in part order.
pub fn penultimate(
    tape: &mut Tape<'_>,
    reps: &[Var],
    spans: &EntitySpans,
    contexts: &ContextParts,
    hidden: usize,
) -> Result<Var> {
    let segments = segment(reps.len(), spans)?;
    let parts = contexts.parts();
    if parts.is_empty() {
        return Err(Error::Config("no parts enabled for the penultimate layer".into()));
    }
    let mut pooled = Vec::with_capacity(parts.len());
    for part in parts {
        let range = segments.get(part);
        let v = if range.is_empty() {
            tape.constant(vec![0.0; 4 * hidden])
        } else {
            tape.pool(&reps[range])?
        };
        pooled.push(v);
    }
    tape.concat(&pooled)
}

/// Output logits `W_2 · x` (no bias).
pub fn logits(tape: &mut Tape<'_>, w2: ParamId, x_penul: Var) -> Result<Var> {
    tape.affine(w2, x_penul, None)
}

/// Class probabilities `softmax(W_2 · x)`.
pub fn score(x_penul: &[f64], w2: &Matrix) -> Result<Vector> {
    let z = w2.matvec(x_penul)?;
    Ok(tensor::softmax(&z))
}
