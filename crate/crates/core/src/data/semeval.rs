//! Reader for the SemEval-2010 Task 8 distribution files.
//!
//! A record is:
//!
//! ```text
//! 8001<TAB>"The most common <e1>audits</e1> were about <e2>waste</e2> and recycling."
//! Message-Topic(e1,e2)
//! Comment: optional
//! <blank>
//! ```
//!
//! # Tokenization
//!
//! The rules are fixed and covered by golden tests:
//!
//! 1. The entity tags `<e1>`, `</e1>`, `<e2>`, `</e2>` are removed and always
//!    end the current token.
//! 2. Whitespace separates tokens.
//! 3. Runs of letters and digits form words. The connectors `-`, `.`, `,`
//!    and `'` stay inside a word when both neighbours are letters or digits
//!    (`e-mail`, `3.5`, `1,000`, `don't`).
//! 4. A word-final possessive `'s` is split off as its own token (`child's`
//!    becomes `child`, `'s`).
//! 5. Every other character is a single-character token.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::{RelationInstance, OTHER};
use crate::error::{Error, Result};
use crate::features::Token;
use crate::head::{EntitySpans, Span};

pub const SEMEVAL_FAMILIES: [&str; 9] = [
    "Cause-Effect",
    "Component-Whole",
    "Content-Container",
    "Entity-Destination",
    "Entity-Origin",
    "Instrument-Agency",
    "Member-Collection",
    "Message-Topic",
    "Product-Producer",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Outside,
    E1,
    E2,
}

fn is_connector(c: char) -> bool {
    matches!(c, '-' | '.' | ',' | '\'')
}

/// Splits a tag-free chunk into tokens following rules 2–5.
fn tokenize_chunk(text: &str, out: &mut Vec<String>) {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if !c.is_alphanumeric() {
            out.push(c.to_string());
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < chars.len() {
            if chars[i].is_alphanumeric() {
                i += 1;
            } else if is_connector(chars[i]) && i + 1 < chars.len() && chars[i + 1].is_alphanumeric() {
                // Possessive: `'s` at the end of the word.
                if chars[i] == '\''
                    && matches!(chars[i + 1], 's' | 'S')
                    && chars.get(i + 2).is_none_or(|n| !n.is_alphanumeric())
                {
                    break;
                }
                i += 2;
            } else {
                break;
            }
        }
        out.push(chars[start..i].iter().collect());
        if i + 1 < chars.len() && chars[i] == '\'' && matches!(chars[i + 1], 's' | 'S')
            && chars.get(i + 2).is_none_or(|n| !n.is_alphanumeric())
        {
            out.push(chars[i..i + 2].iter().collect());
            i += 2;
        }
    }
}

/// Tokenizes a tagged sentence. Returns the tokens plus the inclusive spans
/// of `e1` and `e2` (in tag order, not positional order).
pub fn tokenize_tagged(sentence: &str) -> std::result::Result<(Vec<String>, Span, Span), String> {
    let mut tokens = Vec::new();
    let mut region = Region::Outside;
    let mut e1: Option<(usize, usize)> = None;
    let mut e2: Option<(usize, usize)> = None;
    let mut rest = sentence;
    loop {
        let next = rest.find('<').and_then(|p| {
            ["<e1>", "</e1>", "<e2>", "</e2>"]
                .iter()
                .find(|t| rest[p..].starts_with(**t))
                .map(|t| (p, *t))
        });
        let (chunk, tag) = match next {
            Some((p, t)) => (&rest[..p], Some(t)),
            None => {
                // A '<' that is not a tag is ordinary text.
                if let Some(p) = rest.find('<') {
                    let (a, b) = rest.split_at(p + 1);
                    tokenize_chunk(a, &mut tokens);
                    rest = b;
                    continue;
                }
                (rest, None)
            }
        };
        tokenize_chunk(chunk, &mut tokens);
        let Some(tag) = tag else { break };
        let n = tokens.len();
        match (tag, region) {
            ("<e1>", Region::Outside) if e1.is_none() => {
                region = Region::E1;
                e1 = Some((n, n));
            }
            ("<e2>", Region::Outside) if e2.is_none() => {
                region = Region::E2;
                e2 = Some((n, n));
            }
            ("</e1>", Region::E1) => {
                region = Region::Outside;
                e1 = e1.map(|(s, _)| (s, n));
            }
            ("</e2>", Region::E2) => {
                region = Region::Outside;
                e2 = e2.map(|(s, _)| (s, n));
            }
            _ => return Err(format!("unexpected {tag}")),
        }
        rest = &rest[chunk.len() + tag.len()..];
    }
    if region != Region::Outside {
        return Err("unclosed entity tag".into());
    }
    let to_span = |e: Option<(usize, usize)>, name: &str| match e {
        None => Err(format!("missing <{name}> tag")),
        Some((s, end)) if end <= s => Err(format!("empty <{name}> entity")),
        Some((s, end)) => Ok(Span::new(s, end - 1)),
    };
    let s1 = to_span(e1, "e1")?;
    let s2 = to_span(e2, "e2")?;
    Ok((tokens, s1, s2))
}

fn valid_relation(label: &str) -> bool {
    if label == OTHER {
        return true;
    }
    let Some(open) = label.find('(') else { return false };
    let (fam, dir) = label.split_at(open);
    SEMEVAL_FAMILIES.contains(&fam) && (dir == "(e1,e2)" || dir == "(e2,e1)")
}

/// Parses the distribution layout. Errors carry `source:line`.
pub fn parse_semeval<R: BufRead>(reader: R, source: &str) -> Result<Vec<RelationInstance>> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let lines: Vec<String> = reader
        .lines()
        .collect::<std::io::Result<_>>()
        .map_err(|e| Error::io(source, e))?;
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut i = 0;
    while i < lines.len() {
        let line = lines[i].trim_end_matches('\r');
        if line.trim().is_empty() {
            i += 1;
            continue;
        }
        let lineno = i + 1;
        let (id, quoted) = line
            .trim()
            .split_once(|c: char| c.is_whitespace())
            .ok_or_else(|| err(lineno, "expected `<id><TAB>\"sentence\"`".into()))?;
        if id.is_empty() || !id.chars().all(|c| c.is_ascii_digit()) {
            return Err(err(lineno, format!("bad record id {id:?}")));
        }
        let quoted = quoted.trim();
        if quoted.len() < 2 || !quoted.starts_with('"') || !quoted.ends_with('"') {
            return Err(err(lineno, "sentence must be double-quoted".into()));
        }
        let sentence = &quoted[1..quoted.len() - 1];
        if !ids.insert(id.to_string()) {
            return Err(err(lineno, format!("duplicate id {id}")));
        }
        let (words, e1, e2) = tokenize_tagged(sentence).map_err(|m| err(lineno, m))?;

        let rel_lineno = i + 2;
        let label = lines
            .get(i + 1)
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .ok_or_else(|| err(rel_lineno, "missing relation line".into()))?;
        if !valid_relation(label) {
            return Err(err(rel_lineno, format!("malformed relation line {label:?}")));
        }
        i += 2;
        while i < lines.len() && lines[i].trim_start().starts_with("Comment") {
            i += 1;
        }

        let spans = if e1.start < e2.start {
            EntitySpans::new(e1, e2)
        } else {
            EntitySpans::new(e2, e1)
        };
        spans
            .validate(words.len())
            .map_err(|e| err(lineno, e.to_string()))?;
        out.push(RelationInstance {
            id: id.to_string(),
            tokens: words.into_iter().map(Token::plain).collect(),
            spans,
            label: label.to_string(),
            window: 1,
        });
    }
    Ok(out)
}

pub fn read_semeval(path: &Path) -> Result<Vec<RelationInstance>> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingPath(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_semeval(BufReader::new(file), &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        let mut v = Vec::new();
        tokenize_chunk(s, &mut v);
        v
    }

    #[test]
    fn golden_tokenization() {
        assert_eq!(toks("The burst has been caused by water hammer pressure."), [
            "The", "burst", "has", "been", "caused", "by", "water", "hammer", "pressure", "."
        ]);
        assert_eq!(toks("e-mail costs 3.5 or 1,000 (approx.)"), [
            "e-mail", "costs", "3.5", "or", "1,000", "(", "approx", ".", ")"
        ]);
        assert_eq!(toks("the child's toy, don't"), ["the", "child", "'s", "toy", ",", "don't"]);
        assert_eq!(toks("\"quoted\"--dash"), ["\"", "quoted", "\"", "-", "-", "dash"]);
        assert_eq!(toks("U.S. a-"), ["U.S", ".", "a", "-"]);
    }

    #[test]
    fn tags_delimit_tokens() {
        let (t, e1, e2) = tokenize_tagged("The <e1>burst</e1> has been caused by water hammer <e2>pressure</e2>.").unwrap();
        assert_eq!(t.len(), 10);
        assert_eq!(e1, Span::new(1, 1));
        assert_eq!(e2, Span::new(8, 8));
        let (t, e1, _) = tokenize_tagged("<e1>Vibrio salmonicida</e1> was in <e2>mud</e2>").unwrap();
        assert_eq!(&t[..2], ["Vibrio", "salmonicida"]);
        assert_eq!(e1, Span::new(0, 1));
    }

    #[test]
    fn tag_errors() {
        assert!(tokenize_tagged("no tags here").unwrap_err().contains("missing <e1>"));
        assert!(tokenize_tagged("<e1>a</e1> b").unwrap_err().contains("e2"));
        assert!(tokenize_tagged("<e1>a <e2>b</e2></e1>").is_err());
        assert!(tokenize_tagged("<e1></e1> <e2>b</e2>").unwrap_err().contains("empty"));
        assert!(tokenize_tagged("<e1>a</e1> <e2>b").unwrap_err().contains("unclosed"));
        let (t, _, _) = tokenize_tagged("a < b <e1>c</e1> <e2>d</e2>").unwrap();
        assert_eq!(t, ["a", "<", "b", "c", "d"]);
    }

    const FILE: &str = "1\t\"The <e1>burst</e1> has been caused by water hammer <e2>pressure</e2>.\"\nCause-Effect(e2,e1)\nComment:\n\n2\t\"A <e1>child</e1> met a <e2>dog</e2>.\"\nOther\nComment: nothing\n\n3\t\"The <e2>box</e2> held the <e1>coins</e1>.\"\nContent-Container(e1,e2)\n\n";

    #[test]
    fn parses_records() {
        let v = parse_semeval(FILE.as_bytes(), "f").unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0].label, "Cause-Effect(e2,e1)");
        assert_eq!(v[0].spans, EntitySpans::new(Span::new(1, 1), Span::new(8, 8)));
        assert_eq!(v[1].label, "Other");
        // e2 first in text: former is e2's span, label kept as written.
        assert_eq!(v[2].tokens[v[2].spans.former.start].surface, "box");
        assert_eq!(v[2].tokens[v[2].spans.latter.start].surface, "coins");
        assert_eq!(v[2].label, "Content-Container(e1,e2)");
    }

    #[test]
    fn error_line_numbers() {
        let dup = "1\t\"<e1>a</e1> <e2>b</e2>\"\nOther\n\n1\t\"<e1>a</e1> <e2>b</e2>\"\nOther\n";
        let e = parse_semeval(dup.as_bytes(), "f").unwrap_err();
        assert!(matches!(&e, Error::Parse { line: 4, message, .. } if message.contains("duplicate")), "{e}");
        let bad_rel = "1\t\"<e1>a</e1> <e2>b</e2>\"\nCause-Effect(e1,e3)\n";
        let e = parse_semeval(bad_rel.as_bytes(), "f").unwrap_err();
        assert!(matches!(&e, Error::Parse { line: 2, .. }), "{e}");
        let bad_fam = "1\t\"<e1>a</e1> <e2>b</e2>\"\nFoo-Bar(e1,e2)\n";
        assert!(parse_semeval(bad_fam.as_bytes(), "f").is_err());
        let missing = "\n\n7\t\"a <e2>b</e2>\"\nOther\n";
        let e = parse_semeval(missing.as_bytes(), "f").unwrap_err();
        assert!(matches!(&e, Error::Parse { line: 3, .. }), "{e}");
    }
}
