//! Shortest dependency paths between entity pairs and how many of their
//! words also occur in the middle context.
//!
//! Parses come in as CoNLL-U (only the ID, FORM and HEAD columns are read).
//! Entity spans come from a JSONL sidecar keyed by sentence id:
//!
//! ```text
//! {"sentence": "s1", "former": [1, 1], "latter": [7, 7]}
//! {"sentence": "s2", "former": [0, 0], "latter": [3, 4], "latter_sentence": "s3"}
//! ```
//!
//! Spans are 0-based inclusive token indices. A record whose
//! `latter_sentence` differs from `sentence` is a cross-sentence pair and is
//! skipped (and counted).

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::head::{EntitySpans, Span};

/// A dependency-parsed sentence. `heads[i]` is the 1-based head of token
/// `i` (0 for the root), as in CoNLL-U.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepSentence {
    pub id: String,
    pub forms: Vec<String>,
    pub heads: Vec<usize>,
}

impl DepSentence {
    pub fn new(id: impl Into<String>, forms: Vec<String>, heads: Vec<usize>) -> Result<Self> {
        let s = DepSentence {
            id: id.into(),
            forms,
            heads,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.forms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forms.is_empty()
    }

    /// Every token must reach the root without revisiting a token.
    pub fn validate(&self) -> Result<()> {
        let n = self.forms.len();
        if self.heads.len() != n {
            return Err(Error::Data(format!("sentence {}: {} forms but {} heads", self.id, n, self.heads.len())));
        }
        if let Some(h) = self.heads.iter().find(|&&h| h > n) {
            return Err(Error::Data(format!("sentence {}: head {h} out of range", self.id)));
        }
        // 0 unknown, 1 on current chain, 2 reaches root
        let mut state = vec![0u8; n];
        for start in 0..n {
            let mut chain = Vec::new();
            let mut cur = start;
            loop {
                match state[cur] {
                    2 => break,
                    1 => return Err(Error::Data(format!("sentence {}: cyclic head structure", self.id))),
                    _ => {}
                }
                state[cur] = 1;
                chain.push(cur);
                let h = self.heads[cur];
                if h == 0 {
                    break;
                }
                cur = h - 1;
            }
            for c in chain {
                state[c] = 2;
            }
        }
        Ok(())
    }

    fn parent(&self, i: usize) -> Option<usize> {
        match self.heads[i] {
            0 => None,
            h => Some(h - 1),
        }
    }

    /// `i`, its head, its head's head, … up to the root token.
    fn ancestors(&self, i: usize) -> Vec<usize> {
        let mut out = vec![i];
        let mut cur = i;
        while let Some(p) = self.parent(cur) {
            out.push(p);
            cur = p;
        }
        out
    }
}

/// The unique tree path from `a` to `b`, both included (0-based indices).
pub fn shortest_dep_path(sent: &DepSentence, a: usize, b: usize) -> Result<Vec<usize>> {
    let n = sent.len();
    if a >= n || b >= n {
        return Err(Error::InvalidArgument(format!("path endpoints {a},{b} outside {n} tokens")));
    }
    if a == b {
        return Err(Error::InvalidArgument("path endpoints must differ".into()));
    }
    sent.validate()?;
    let up_a = sent.ancestors(a);
    let up_b = sent.ancestors(b);
    let on_b: HashMap<usize, usize> = up_b.iter().enumerate().map(|(k, &t)| (t, k)).collect();
    let (ka, kb) = up_a
        .iter()
        .enumerate()
        .find_map(|(k, t)| on_b.get(t).map(|&kb| (k, kb)))
        .ok_or_else(|| {
            Error::Data(format!(
                "sentence {}: tokens {a} and {b} are in disconnected subtrees",
                sent.id
            ))
        })?;
    let mut path = up_a[..=ka].to_vec();
    path.extend(up_b[..kb].iter().rev());
    Ok(path)
}

/// Corpus-wide word counts.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub pairs: usize,
    pub skipped_cross_sentence: usize,
    pub middle_count: usize,
    pub sdp_count: usize,
    pub both_count: usize,
}

impl OverlapStats {
    /// Share of SDP words that also occur in the middle context.
    pub fn proportion(&self) -> f64 {
        if self.sdp_count == 0 {
            0.0
        } else {
            self.both_count as f64 / self.sdp_count as f64
        }
    }

    fn add(&mut self, other: &OverlapStats) {
        self.pairs += other.pairs;
        self.skipped_cross_sentence += other.skipped_cross_sentence;
        self.middle_count += other.middle_count;
        self.sdp_count += other.sdp_count;
        self.both_count += other.both_count;
    }
}

/// How "occurring in both" is decided.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Same token position.
    #[default]
    Position,
    /// Lowercased surface multiset intersection.
    Surface,
}

/// Counts for one sentence. SDP words exclude the two endpoint tokens
/// (the last token of each entity); middle words are the tokens strictly
/// between the spans.
pub fn sentence_overlap(sent: &DepSentence, spans: &EntitySpans, mode: MatchMode) -> Result<OverlapStats> {
    spans.validate(sent.len())?;
    let path = shortest_dep_path(sent, spans.former.end, spans.latter.end)?;
    let interior = &path[1..path.len() - 1];
    let middle: Vec<usize> = (spans.former.end + 1..spans.latter.start).collect();
    let both = match mode {
        MatchMode::Position => {
            let m: HashSet<usize> = middle.iter().copied().collect();
            interior.iter().filter(|t| m.contains(t)).count()
        }
        MatchMode::Surface => {
            let mut counts: HashMap<String, usize> = HashMap::new();
            for &t in &middle {
                *counts.entry(sent.forms[t].to_lowercase()).or_default() += 1;
            }
            let mut hits = 0;
            for &t in interior {
                if let Some(c) = counts.get_mut(&sent.forms[t].to_lowercase()) {
                    if *c > 0 {
                        *c -= 1;
                        hits += 1;
                    }
                }
            }
            hits
        }
    };
    Ok(OverlapStats {
        pairs: 1,
        skipped_cross_sentence: 0,
        middle_count: middle.len(),
        sdp_count: interior.len(),
        both_count: both,
    })
}

/// One sidecar record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpans {
    pub sentence: String,
    pub former: Span,
    pub latter: Span,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latter_sentence: Option<String>,
}

/// Accumulates [`sentence_overlap`] over every sidecar record.
pub fn overlap_stats(sentences: &[DepSentence], pairs: &[PairSpans], mode: MatchMode) -> Result<OverlapStats> {
    let by_id: HashMap<&str, &DepSentence> = sentences.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut total = OverlapStats::default();
    for p in pairs {
        if p.latter_sentence.as_ref().is_some_and(|l| *l != p.sentence) {
            total.skipped_cross_sentence += 1;
            continue;
        }
        let sent = by_id
            .get(p.sentence.as_str())
            .ok_or_else(|| Error::Data(format!("spans reference unknown sentence {}", p.sentence)))?;
        let spans = EntitySpans::new(p.former, p.latter);
        let s = sentence_overlap(sent, &spans, mode)
            .map_err(|e| Error::Data(format!("sentence {}: {e}", p.sentence)))?;
        total.add(&s);
    }
    Ok(total)
}

/// Reads CoNLL-U. Sentence ids come from `# sent_id = …` comments, else the
/// 1-based sentence ordinal. Multiword-token and empty-node lines are skipped.
pub fn parse_conllu<R: BufRead>(reader: R, source: &str) -> Result<Vec<DepSentence>> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut out = Vec::new();
    let mut id: Option<String> = None;
    let mut forms = Vec::new();
    let mut heads = Vec::new();
    let mut first_line = 0;
    let finish = |id: &mut Option<String>, forms: &mut Vec<String>, heads: &mut Vec<usize>, line: usize, out: &mut Vec<DepSentence>| -> Result<()> {
        if forms.is_empty() {
            *id = None;
            return Ok(());
        }
        let sid = id.take().unwrap_or_else(|| (out.len() + 1).to_string());
        let s = DepSentence::new(sid, std::mem::take(forms), std::mem::take(heads))
            .map_err(|e| err(line, e.to_string()))?;
        out.push(s);
        Ok(())
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut id, &mut forms, &mut heads, first_line, &mut out)?;
            continue;
        }
        if forms.is_empty() {
            first_line = lineno;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("sent_id") {
                let v = v.trim_start().trim_start_matches('=').trim();
                id = Some(v.to_string());
            }
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 7 {
            return Err(err(lineno, format!("expected at least 7 tab-separated columns, got {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let tid: usize = cols[0].parse().map_err(|_| err(lineno, format!("bad token id {:?}", cols[0])))?;
        if tid != forms.len() + 1 {
            return Err(err(lineno, format!("token id {tid} out of sequence")));
        }
        let head: usize = cols[6].parse().map_err(|_| err(lineno, format!("bad head {:?}", cols[6])))?;
        forms.push(cols[1].to_string());
        heads.push(head);
    }
    finish(&mut id, &mut forms, &mut heads, first_line, &mut out)?;
    Ok(out)
}

pub fn read_conllu(path: &Path) -> Result<Vec<DepSentence>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_conllu(BufReader::new(file), &path.display().to_string())
}

pub fn parse_pair_spans<R: BufRead>(reader: R, source: &str) -> Result<Vec<PairSpans>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn read_pair_spans(path: &Path) -> Result<Vec<PairSpans>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_pair_spans(BufReader::new(file), &path.display().to_string())
}

/// The example sentence "The child was carefully wrapped into the cradle"
/// with its parse; entities are `child` (1) and `cradle` (7).
pub fn child_cradle_example() -> (DepSentence, EntitySpans) {
    let forms = ["The", "child", "was", "carefully", "wrapped", "into", "the", "cradle"];
    let heads = vec![2, 5, 5, 5, 0, 5, 8, 6];
    let sent = DepSentence::new("child-cradle", forms.iter().map(|s| s.to_string()).collect(), heads)
        .expect("valid tree");
    (sent, EntitySpans::new(Span::new(1, 1), Span::new(7, 7)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::VecDeque;

    #[test]
    fn child_cradle_path_and_counts() {
        let (s, spans) = child_cradle_example();
        let p = shortest_dep_path(&s, 1, 7).unwrap();
        let words: Vec<&str> = p.iter().map(|&i| s.forms[i].as_str()).collect();
        assert_eq!(words, ["child", "wrapped", "into", "cradle"]);
        let st = sentence_overlap(&s, &spans, MatchMode::Position).unwrap();
        assert_eq!((st.middle_count, st.sdp_count, st.both_count), (5, 2, 2));
        assert_eq!(st.proportion(), 1.0);
        let su = sentence_overlap(&s, &spans, MatchMode::Surface).unwrap();
        assert_eq!(su.both_count, 2);
    }

    #[test]
    fn ancestor_and_sibling_paths() {
        let (s, _) = child_cradle_example();
        // cradle(7) -> into(5) -> wrapped(4): ancestor chain
        assert_eq!(shortest_dep_path(&s, 7, 4).unwrap(), vec![7, 5, 4]);
        // was(2), carefully(3) are siblings under wrapped(4)
        assert_eq!(shortest_dep_path(&s, 2, 3).unwrap(), vec![2, 4, 3]);
        assert!(shortest_dep_path(&s, 2, 2).is_err());
    }

    #[test]
    fn bad_trees() {
        assert!(DepSentence::new("c", vec!["a".into(), "b".into()], vec![2, 1]).is_err());
        assert!(DepSentence::new("r", vec!["a".into()], vec![3]).is_err());
        let forest = DepSentence::new("f", vec!["a".into(), "b".into()], vec![0, 0]).unwrap();
        assert!(shortest_dep_path(&forest, 0, 1).is_err());
    }

    const CONLLU: &str = "# sent_id = s1\n# text = The child was carefully wrapped into the cradle\n1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_\n2\tchild\tchild\tNOUN\tNN\t_\t5\tnsubjpass\t_\t_\n3\twas\tbe\tAUX\tVBD\t_\t5\tauxpass\t_\t_\n4\tcarefully\tcarefully\tADV\tRB\t_\t5\tadvmod\t_\t_\n5\twrapped\twrap\tVERB\tVBN\t_\t0\troot\t_\t_\n6\tinto\tinto\tADP\tIN\t_\t5\tprep\t_\t_\n7\tthe\tthe\tDET\tDT\t_\t8\tdet\t_\t_\n8\tcradle\tcradle\tNOUN\tNN\t_\t6\tpobj\t_\t_\n\n1\tHi\thi\tX\tX\t_\t0\troot\t_\t_\n1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n2\tyou\tyou\tX\tX\t_\t1\tdep\t_\t_\n";

    #[test]
    fn conllu_reader() {
        let v = parse_conllu(CONLLU.as_bytes(), "c").unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v[0].id, "s1");
        assert_eq!(v[0], child_cradle_example().0.clone_with_id("s1"));
        assert_eq!(v[1].id, "2");
        assert_eq!(v[1].forms, ["Hi", "you"]);
        let bad = "1\ta\t_\t_\t_\t_\t5\n";
        assert!(parse_conllu(bad.as_bytes(), "c").is_err());
        let gap = "1\ta\t_\t_\t_\t_\t0\n3\tb\t_\t_\t_\t_\t1\n";
        assert!(matches!(parse_conllu(gap.as_bytes(), "c"), Err(Error::Parse { line: 2, .. })));
    }

    impl DepSentence {
        fn clone_with_id(&self, id: &str) -> DepSentence {
            DepSentence {
                id: id.into(),
                ..self.clone()
            }
        }
    }

    #[test]
    fn corpus_accumulation_skips_cross_sentence() {
        let (s, spans) = child_cradle_example();
        let pairs = vec![
            PairSpans {
                sentence: s.id.clone(),
                former: spans.former,
                latter: spans.latter,
                latter_sentence: None,
            },
            PairSpans {
                sentence: s.id.clone(),
                former: Span::new(0, 0),
                latter: Span::new(4, 4),
                latter_sentence: Some("elsewhere".into()),
            },
        ];
        let st = overlap_stats(&[s], &pairs, MatchMode::Position).unwrap();
        assert_eq!(st.pairs, 1);
        assert_eq!(st.skipped_cross_sentence, 1);
        assert_eq!((st.middle_count, st.sdp_count, st.both_count), (5, 2, 2));
    }

    fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> DepSentence {
        let mut order: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            order.swap(i, rng.gen_range(0..=i));
        }
        let mut heads = vec![0; n];
        for k in 1..n {
            let parent = order[rng.gen_range(0..k)];
            heads[order[k]] = parent + 1;
        }
        DepSentence::new("r", (0..n).map(|i| format!("w{i}")).collect(), heads).unwrap()
    }

    fn bfs_path(s: &DepSentence, a: usize, b: usize) -> Vec<usize> {
        let n = s.len();
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            if s.heads[i] > 0 {
                adj[i].push(s.heads[i] - 1);
                adj[s.heads[i] - 1].push(i);
            }
        }
        let mut prev = vec![usize::MAX; n];
        let mut q = VecDeque::from([a]);
        prev[a] = a;
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if prev[v] == usize::MAX {
                    prev[v] = u;
                    q.push_back(v);
                }
            }
        }
        let mut path = vec![b];
        while *path.last().unwrap() != a {
            path.push(prev[*path.last().unwrap()]);
        }
        path.reverse();
        path
    }

    #[test]
    fn matches_bfs_on_random_trees() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..200 {
            let n = rng.gen_range(2..=12);
            let s = random_tree(&mut rng, n);
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            let p = shortest_dep_path(&s, a, b).unwrap();
            assert_eq!(p, bfs_path(&s, a, b));
            let mut rev = shortest_dep_path(&s, b, a).unwrap();
            rev.reverse();
            assert_eq!(rev, p);
            let uniq: HashSet<usize> = p.iter().copied().collect();
            assert_eq!(uniq.len(), p.len());
        }
    }
}
