//! Children's Book Test reader and window memories.
//!
//! A block is 20 numbered story sentences followed by
//! `21 query<TAB>answer<TAB><TAB>c1|c2|...|c10`, where the query contains
//! the blank `XXXXX`. Blocks are separated by blank lines.
//!
//! The story becomes one window of `b` tokens per candidate occurrence,
//! centered on the occurrence and padded with the null token at the edges.

use super::QASample;
use crate::encoding::NULL_TOKEN;
use crate::error::{Error, Result};

pub const BLANK: &str = "XXXXX";
pub const WINDOW: usize = 5;
pub const CANDIDATES: usize = 10;
pub const STORY_SENTENCES: usize = 20;
pub const CBT_TASK_ID: usize = 100;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CbtExample {
    pub story: Vec<Vec<String>>,
    pub query: Vec<String>,
    pub answer: String,
    pub candidates: Vec<String>,
}

fn tokens(text: &str) -> Vec<String> {
    text.split_whitespace().map(str::to_string).collect()
}

pub fn parse_cbt(text: &str) -> Result<Vec<CbtExample>> {
    let mut out = Vec::new();
    let mut story: Vec<Vec<String>> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::MalformedLine { line: line_no, reason: reason.into() };
        let (id, rest) = raw.trim_start().split_once(' ').ok_or_else(|| bad("missing line id"))?;
        let id: usize = id.parse().map_err(|_| bad("line id is not a number"))?;
        if id != story.len() + 1 {
            return Err(bad("unexpected line id"));
        }
        if id <= STORY_SENTENCES {
            story.push(tokens(rest));
            continue;
        }
        let fields: Vec<&str> = rest.split('\t').collect();
        let (query, answer, cands) = match fields.as_slice() {
            [q, a, _, c] => (*q, *a, *c),
            [q, a, c] => (*q, *a, *c),
            _ => return Err(bad("query line needs query, answer and candidates")),
        };
        out.push(CbtExample {
            story: std::mem::take(&mut story),
            query: tokens(query),
            answer: answer.trim().to_string(),
            candidates: cands.split('|').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect(),
        });
    }
    if !story.is_empty() {
        return Err(Error::MalformedLine { line: text.lines().count(), reason: "story without a query line".into() });
    }
    Ok(out)
}

/// The `b` tokens centered on position `i` of `tokens`, padded with nulls.
pub fn window(tokens: &[String], i: usize, b: usize) -> Vec<String> {
    let half = (b / 2) as isize;
    (-half..=half)
        .map(|off| {
            let j = i as isize + off;
            if j < 0 || j as usize >= tokens.len() {
                NULL_TOKEN.to_string()
            } else {
                tokens[j as usize].clone()
            }
        })
        .collect()
}

/// Windows over the flattened story, one per candidate occurrence in reading
/// order; the query is the window around the blank.
pub fn build_cbt_sample(
    story: &[Vec<String>],
    query: &[String],
    answer: &str,
    candidates: &[String],
) -> Result<QASample> {
    if candidates.len() != CANDIDATES {
        return Err(Error::BadCandidateCount(candidates.len()));
    }
    let blank = query.iter().position(|t| t == BLANK).ok_or(Error::NoBlank)?;
    let flat: Vec<String> = story.iter().flatten().cloned().collect();
    let context = flat
        .iter()
        .enumerate()
        .filter(|(_, t)| candidates.contains(t))
        .map(|(i, _)| window(&flat, i, WINDOW))
        .collect();
    Ok(QASample {
        context,
        query: window(query, blank, WINDOW),
        answer: answer.to_string(),
        candidates: Some(candidates.to_vec()),
        task_id: CBT_TASK_ID,
    })
}

pub fn example_sample(ex: &CbtExample) -> Result<QASample> {
    build_cbt_sample(&ex.story, &ex.query, &ex.answer, &ex.candidates)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        tokens(s)
    }

    fn cands() -> Vec<String> {
        t("ann bob cat dog eel fox gnu hen ibis jay")
    }

    #[test]
    fn windows_follow_the_formula() {
        let story = vec![t("ann saw the big cat at home"), t("then bob left")];
        let s = build_cbt_sample(&story, &t("the XXXXX ran off fast"), "cat", &cands()).unwrap();
        let n = NULL_TOKEN;
        assert_eq!(
            s.context,
            vec![
                vec![n.to_string(), n.to_string(), "ann".into(), "saw".into(), "the".into()],
                t("the big cat at home"),
                vec!["home".into(), "then".into(), "bob".into(), "left".into(), n.to_string()],
            ]
        );
        assert_eq!(s.query, vec![n.to_string(), "the".into(), BLANK.into(), "ran".into(), "off".into()]);
        assert!(s.context.iter().all(|w| w.len() == WINDOW));
        assert_eq!(s.candidates.unwrap().len(), 10);
    }

    #[test]
    fn unused_candidates_contribute_no_windows() {
        let s = build_cbt_sample(&[t("nothing here")], &t("XXXXX"), "ann", &cands()).unwrap();
        assert!(s.context.is_empty());
        assert_eq!(s.candidates.unwrap().len(), 10);
    }

    #[test]
    fn errors() {
        assert!(matches!(build_cbt_sample(&[], &t("no blank"), "ann", &cands()), Err(Error::NoBlank)));
        assert!(matches!(build_cbt_sample(&[], &t("XXXXX"), "ann", &t("a b")), Err(Error::BadCandidateCount(2))));
    }

    #[test]
    fn parses_release_format() {
        let mut text = String::new();
        for i in 1..=20 {
            text.push_str(&format!("{i} sentence {i} mentions ann .\n"));
        }
        text.push_str("21 where did XXXXX go ?\tann\t\tann|bob|cat|dog|eel|fox|gnu|hen|ibis|jay\n\n");
        let twice = text.repeat(2);
        let ex = parse_cbt(&twice).unwrap();
        assert_eq!(ex.len(), 2);
        assert_eq!(ex[0].story.len(), 20);
        assert_eq!(ex[0].answer, "ann");
        assert_eq!(ex[0].candidates, cands());
        let s = example_sample(&ex[1]).unwrap();
        assert_eq!(s.context.len(), 20);
        assert!(matches!(parse_cbt("1 a\n3 b\n"), Err(Error::MalformedLine { line: 2, .. })));
        assert!(parse_cbt("1 a\n").is_err());
    }
}
