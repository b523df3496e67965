//! Loading the three dataset families into train/valid/test samples.

use std::fs;
use std::path::{Path, PathBuf};

use entnet::encoding::Vocabulary;
use entnet::tasks::babi::load_task;
use entnet::tasks::cbt::{example_sample, parse_cbt};
use entnet::tasks::world::{parse_dataset, world_oracle, WorldConfig};
use entnet::tasks::{extend_vocabulary, QASample};
use entnet::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    World,
    Babi,
    Cbt,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "world" => Ok(Task::World),
            "babi" => Ok(Task::Babi),
            "cbt" => Ok(Task::Cbt),
            _ => Err(Error::Config(format!("unknown task {s:?} (world, babi, cbt)"))),
        }
    }
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::World => "world",
            Task::Babi => "babi",
            Task::Cbt => "cbt",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Splits {
    pub train: Vec<QASample>,
    pub valid: Vec<QASample>,
    pub test: Vec<QASample>,
}

impl Splits {
    /// Vocabulary over all three splits, starting from `base`.
    pub fn vocabulary(&self, mut base: Vocabulary) -> Vocabulary {
        for s in [&self.train, &self.valid, &self.test] {
            extend_vocabulary(&mut base, s);
        }
        base
    }
}

fn missing(path: &Path) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{} not found", path.display())))
}

/// Samples of one world dataset file. Stored answers are checked against
/// the oracle.
pub fn load_world_file(path: &Path) -> Result<Vec<QASample>> {
    if !path.is_file() {
        return Err(missing(path));
    }
    let stories = parse_dataset(&fs::read_to_string(path)?)?;
    let config = WorldConfig::fixed(10);
    let mut out = Vec::new();
    for (i, story) in stories.iter().enumerate() {
        if world_oracle(&story.statements, &config)? != story.answers {
            return Err(Error::MalformedLine { line: 0, reason: format!("story {} answers disagree with replay", i + 1) });
        }
        out.extend(story.samples());
    }
    Ok(out)
}

fn find_cbt_file(dir: &Path, kind: &str, split: &str) -> Result<PathBuf> {
    let tag = format!("_{kind}_{split}");
    let mut hits: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.contains(&tag)))
        .collect();
    hits.sort();
    hits.into_iter().next().ok_or_else(|| missing(&dir.join(format!("*{tag}*"))))
}

fn load_cbt_file(path: &Path) -> Result<Vec<QASample>> {
    parse_cbt(&fs::read_to_string(path)?)?.iter().map(example_sample).collect()
}

/// `train.txt`, `valid.txt` and `test.txt` for the world task; the standard
/// file layouts for bAbI and CBT.
pub fn load(task: Task, dir: &Path, task_id: usize, cbt_kind: &str) -> Result<Splits> {
    if !dir.is_dir() {
        return Err(missing(dir));
    }
    match task {
        Task::World => Ok(Splits {
            train: load_world_file(&dir.join("train.txt"))?,
            valid: load_world_file(&dir.join("valid.txt"))?,
            test: load_world_file(&dir.join("test.txt"))?,
        }),
        Task::Babi => {
            let s = load_task(dir, task_id)?;
            Ok(Splits { train: s.train, valid: s.valid, test: s.test })
        }
        Task::Cbt => Ok(Splits {
            train: load_cbt_file(&find_cbt_file(dir, cbt_kind, "train")?)?,
            valid: load_cbt_file(&find_cbt_file(dir, cbt_kind, "valid")?)?,
            test: load_cbt_file(&find_cbt_file(dir, cbt_kind, "test")?)?,
        }),
    }
}

/// Base vocabulary: the full world grammar, or just the null token.
pub fn base_vocabulary(task: Task) -> Vocabulary {
    match task {
        Task::World => WorldConfig::fixed(10).vocabulary(),
        _ => Vocabulary::default(),
    }
}
