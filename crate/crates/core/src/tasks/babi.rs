//! Reader for the bAbI v1.2 text format.
//!
//! ```text
//! 1 Mary moved to the bathroom.
//! 2 John went to the hallway.
//! 3 Where is Mary? \tbathroom\t1
//! ```
//!
//! A line id of 1 starts a new story. Tokens are lowercased, periods dropped
//! and question marks split off.

use std::fs;
use std::path::{Path, PathBuf};

use super::QASample;
use crate::error::{Error, Result};

pub const DEFAULT_CONTEXT_CAP: usize = 70;
pub const TASK3_CONTEXT_CAP: usize = 130;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BabiLine {
    Statement { id: usize, tokens: Vec<String> },
    Question { id: usize, tokens: Vec<String>, answer: String, support: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BabiStory {
    pub lines: Vec<BabiLine>,
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in text.split_whitespace() {
        let lower = raw.to_lowercase();
        let mut word = lower.as_str();
        let mut trailing = Vec::new();
        while let Some(stripped) = word.strip_suffix(['.', '?']) {
            if word.ends_with('?') {
                trailing.push("?");
            }
            word = stripped;
        }
        if !word.is_empty() {
            out.push(word.to_string());
        }
        out.extend(trailing.into_iter().rev().map(str::to_string));
    }
    out
}

pub fn parse_babi(text: &str) -> Result<Vec<BabiStory>> {
    let mut stories: Vec<BabiStory> = Vec::new();
    let mut last_id = 0;
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let bad = |reason: &str| Error::MalformedLine { line: line_no, reason: reason.into() };
        let (id, rest) = raw.trim_start().split_once(' ').ok_or_else(|| bad("missing line id"))?;
        let id: usize = id.parse().map_err(|_| bad("line id is not a number"))?;
        if id == 0 {
            return Err(bad("line ids start at 1"));
        }
        if id == 1 {
            stories.push(BabiStory::default());
        } else if id != last_id + 1 || stories.is_empty() {
            return Err(bad("line ids must increase by one within a story"));
        }
        last_id = id;
        let story = stories.last_mut().expect("story started above");
        let fields: Vec<&str> = rest.split('\t').collect();
        let line = match fields.as_slice() {
            [sentence] => BabiLine::Statement { id, tokens: tokenize(sentence) },
            [question, answer, support @ ..] => {
                let answer = answer.trim();
                if answer.is_empty() {
                    return Err(bad("empty answer"));
                }
                let support = support
                    .iter()
                    .flat_map(|s| s.split_whitespace())
                    .map(|s| s.parse().map_err(|_| bad("bad supporting fact id")))
                    .collect::<Result<Vec<usize>>>()?;
                BabiLine::Question { id, tokens: tokenize(question), answer: answer.to_lowercase(), support }
            }
            [] => return Err(bad("empty line")),
        };
        story.lines.push(line);
    }
    Ok(stories)
}

/// Writes stories back in the same layout (already tokenized text).
pub fn serialize_babi(stories: &[BabiStory]) -> String {
    let mut out = String::new();
    for story in stories {
        for line in &story.lines {
            match line {
                BabiLine::Statement { id, tokens } => out.push_str(&format!("{id} {}\n", tokens.join(" "))),
                BabiLine::Question { id, tokens, answer, support } => {
                    let support: Vec<String> = support.iter().map(usize::to_string).collect();
                    out.push_str(&format!("{id} {}\t{answer}\t{}\n", tokens.join(" "), support.join(" ")));
                }
            }
        }
    }
    out
}

/// Most recent sentences kept before a question.
pub fn context_cap(task_id: usize) -> usize {
    if task_id == 3 {
        TASK3_CONTEXT_CAP
    } else {
        DEFAULT_CONTEXT_CAP
    }
}

pub fn truncate_context(sentences: &[Vec<String>], task_id: usize) -> Vec<Vec<String>> {
    let cap = context_cap(task_id);
    sentences[sentences.len().saturating_sub(cap)..].to_vec()
}

/// One sample per question; the context is every earlier statement of the
/// story (questions excluded), truncated to the task's cap.
pub fn story_samples(stories: &[BabiStory], task_id: usize) -> Vec<QASample> {
    let mut out = Vec::new();
    for story in stories {
        let mut context: Vec<Vec<String>> = Vec::new();
        for line in &story.lines {
            match line {
                BabiLine::Statement { tokens, .. } => context.push(tokens.clone()),
                BabiLine::Question { tokens, answer, .. } => out.push(QASample {
                    context: truncate_context(&context, task_id),
                    query: tokens.clone(),
                    answer: answer.clone(),
                    candidates: None,
                    task_id,
                }),
            }
        }
    }
    out
}

/// Samples of one task split: train, validation and test.
#[derive(Debug, Clone, PartialEq)]
pub struct BabiSplits {
    pub train: Vec<QASample>,
    pub valid: Vec<QASample>,
    pub test: Vec<QASample>,
}

fn find_task_file(dir: &Path, task_id: usize, split: &str) -> Option<PathBuf> {
    let prefix = format!("qa{task_id}_");
    let suffix = format!("_{split}.txt");
    let mut hits: Vec<PathBuf> = fs::read_dir(dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with(&prefix) && n.ends_with(&suffix))
        })
        .collect();
    hits.sort();
    hits.into_iter().next()
}

/// Loads `qa{task}_*_{train,valid,test}.txt` from `dir`. Without a validation
/// file, the last 10% of training stories are held out.
pub fn load_task(dir: &Path, task_id: usize) -> Result<BabiSplits> {
    let read = |split: &str| -> Result<Option<Vec<BabiStory>>> {
        match find_task_file(dir, task_id, split) {
            Some(p) => Ok(Some(parse_babi(&fs::read_to_string(p)?)?)),
            None => Ok(None),
        }
    };
    let missing = |split: &str| {
        Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("no qa{task_id}_*_{split}.txt in {}", dir.display()),
        ))
    };
    let mut train = read("train")?.ok_or_else(|| missing("train"))?;
    let test = read("test")?.ok_or_else(|| missing("test"))?;
    let valid = match read("valid")? {
        Some(v) => v,
        None => {
            let hold = train.len() / 10;
            train.split_off(train.len() - hold)
        }
    };
    Ok(BabiSplits {
        train: story_samples(&train, task_id),
        valid: story_samples(&valid, task_id),
        test: story_samples(&test, task_id),
    })
}
