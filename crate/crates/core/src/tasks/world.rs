//! Two agents on a grid: the synthetic world-model task.
//!
//! Stories are line-oriented:
//!
//! ```text
//! agent1 is at (2,8)
//! agent1 faces-N
//! agent2 is at (9,7)
//! agent2 faces-N
//! agent2 moves-2
//! ...
//! Q: where is agent1 ?
//! A: (2,9)
//! ```
//!
//! North is `+y`, east is `+x`. A story of `T` lines has two placement lines,
//! each followed by that agent's initial facing, then `T - 4` actions.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::QASample;
use crate::encoding::Vocabulary;
use crate::error::{Error, Result};

pub const WORLD_TASK_ID: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    N,
    S,
    E,
    W,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::N, Direction::S, Direction::E, Direction::W];

    pub fn delta(self) -> (i64, i64) {
        match self {
            Direction::N => (0, 1),
            Direction::S => (0, -1),
            Direction::E => (1, 0),
            Direction::W => (-1, 0),
        }
    }

    fn letter(self) -> char {
        match self {
            Direction::N => 'N',
            Direction::S => 'S',
            Direction::E => 'E',
            Direction::W => 'W',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Face(Direction),
    Move(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Statement {
    Place { agent: usize, x: i64, y: i64 },
    Act { agent: usize, action: Action },
}

pub fn coord_token(x: i64, y: i64) -> String {
    format!("({x},{y})")
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Statement::Place { agent, x, y } => write!(f, "agent{agent} is at {}", coord_token(x, y)),
            Statement::Act { agent, action: Action::Face(d) } => write!(f, "agent{agent} faces-{}", d.letter()),
            Statement::Act { agent, action: Action::Move(k) } => write!(f, "agent{agent} moves-{k}"),
        }
    }
}

fn parse_agent(tok: &str) -> Option<usize> {
    tok.strip_prefix("agent")?.parse().ok().filter(|&a| a >= 1)
}

fn parse_coord(tok: &str) -> Option<(i64, i64)> {
    let inner = tok.strip_prefix('(')?.strip_suffix(')')?;
    let (x, y) = inner.split_once(',')?;
    Some((x.parse().ok()?, y.parse().ok()?))
}

impl Statement {
    pub fn parse(line: &str, line_no: usize) -> Result<Self> {
        let bad = || Error::MalformedLine { line: line_no, reason: format!("not a world statement: {line:?}") };
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [a, "is", "at", c] => {
                let agent = parse_agent(a).ok_or_else(bad)?;
                let (x, y) = parse_coord(c).ok_or_else(bad)?;
                Ok(Statement::Place { agent, x, y })
            }
            [a, act] => {
                let agent = parse_agent(a).ok_or_else(bad)?;
                let action = if let Some(d) = act.strip_prefix("faces-") {
                    Action::Face(match d {
                        "N" => Direction::N,
                        "S" => Direction::S,
                        "E" => Direction::E,
                        "W" => Direction::W,
                        _ => return Err(bad()),
                    })
                } else if let Some(k) = act.strip_prefix("moves-") {
                    Action::Move(k.parse().map_err(|_| bad())?)
                } else {
                    return Err(bad());
                };
                Ok(Statement::Act { agent, action })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub width: i64,
    pub height: i64,
    pub agents: usize,
    /// Story length in statement lines, drawn uniformly from `min_lines..=max_lines`
    /// and clamped to the minimal story.
    pub min_lines: usize,
    pub max_lines: usize,
    pub max_move: u32,
}

impl WorldConfig {
    pub fn fixed(lines: usize) -> Self {
        Self { width: 10, height: 10, agents: 2, min_lines: lines, max_lines: lines, max_move: 5 }
    }

    pub fn variable(min_lines: usize, max_lines: usize) -> Self {
        Self { min_lines, max_lines, ..Self::fixed(max_lines) }
    }

    /// Placement plus initial facing for every agent.
    pub fn minimal_lines(&self) -> usize {
        2 * self.agents
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 1 || self.height < 1 || self.agents == 0 || self.max_move == 0 {
            return Err(Error::Config("world needs a non-empty grid, agents and moves".into()));
        }
        if self.min_lines > self.max_lines || self.max_lines < self.minimal_lines() {
            return Err(Error::Config(format!(
                "story length {}..={} must reach the minimal {} lines",
                self.min_lines,
                self.max_lines,
                self.minimal_lines()
            )));
        }
        Ok(())
    }

    fn on_grid(&self, x: i64, y: i64) -> bool {
        (1..=self.width).contains(&x) && (1..=self.height).contains(&y)
    }

    /// Every token the task can produce, in a fixed order.
    pub fn vocabulary(&self) -> Vocabulary {
        let mut v = Vocabulary::default();
        for a in 1..=self.agents {
            v.insert(&format!("agent{a}"));
        }
        for t in ["is", "at", "where", "?"] {
            v.insert(t);
        }
        for d in Direction::ALL {
            v.insert(&format!("faces-{}", d.letter()));
        }
        for k in 1..=self.max_move {
            v.insert(&format!("moves-{k}"));
        }
        for x in 1..=self.width {
            for y in 1..=self.height {
                v.insert(&coord_token(x, y));
            }
        }
        v
    }
}

/// Final `(x, y)` of every agent after replaying `statements` in order.
///
/// Fails with [`Error::OffGrid`] as soon as any agent leaves the grid, and
/// with [`Error::MalformedLine`] for moves before placement or facing.
pub fn world_oracle(statements: &[Statement], config: &WorldConfig) -> Result<Vec<(i64, i64)>> {
    let mut pos: Vec<Option<(i64, i64)>> = vec![None; config.agents];
    let mut facing: Vec<Option<Direction>> = vec![None; config.agents];
    for (n, st) in statements.iter().enumerate() {
        let bad = |reason: &str| Error::MalformedLine { line: n + 1, reason: reason.into() };
        let agent = match *st {
            Statement::Place { agent, .. } | Statement::Act { agent, .. } => agent,
        };
        if agent == 0 || agent > config.agents {
            return Err(bad("unknown agent"));
        }
        let a = agent - 1;
        match *st {
            Statement::Place { x, y, .. } => {
                if !config.on_grid(x, y) {
                    return Err(Error::OffGrid { agent, x, y });
                }
                pos[a] = Some((x, y));
            }
            Statement::Act { action: Action::Face(d), .. } => facing[a] = Some(d),
            Statement::Act { action: Action::Move(k), .. } => {
                let (mut x, mut y) = pos[a].ok_or_else(|| bad("move before placement"))?;
                let (dx, dy) = facing[a].ok_or_else(|| bad("move before facing"))?.delta();
                for _ in 0..k {
                    x += dx;
                    y += dy;
                    if !config.on_grid(x, y) {
                        return Err(Error::OffGrid { agent, x, y });
                    }
                }
                pos[a] = Some((x, y));
            }
        }
    }
    pos.into_iter()
        .enumerate()
        .map(|(a, p)| p.ok_or_else(|| Error::MalformedLine { line: 0, reason: format!("agent{} never placed", a + 1) }))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldStory {
    pub statements: Vec<Statement>,
    /// Final position per agent, as tracked by the generator.
    pub answers: Vec<(i64, i64)>,
}

impl WorldStory {
    pub fn lines(&self) -> Vec<String> {
        self.statements.iter().map(Statement::to_string).collect()
    }

    /// One sample per agent question.
    pub fn samples(&self) -> Vec<QASample> {
        let context: Vec<Vec<String>> =
            self.lines().iter().map(|l| l.split_whitespace().map(str::to_string).collect()).collect();
        self.answers
            .iter()
            .enumerate()
            .map(|(a, &(x, y))| QASample {
                context: context.clone(),
                query: question_tokens(a + 1),
                answer: coord_token(x, y),
                candidates: None,
                task_id: WORLD_TASK_ID,
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for l in self.lines() {
            out.push_str(&l);
            out.push('\n');
        }
        for (a, &(x, y)) in self.answers.iter().enumerate() {
            out.push_str(&format!("Q: {}\nA: {}\n", question_tokens(a + 1).join(" "), coord_token(x, y)));
        }
        out
    }
}

fn question_tokens(agent: usize) -> Vec<String> {
    vec!["where".into(), "is".into(), format!("agent{agent}"), "?".into()]
}

fn propose<R: Rng + ?Sized>(config: &WorldConfig, rng: &mut R) -> Action {
    if rng.random_bool(0.5) {
        Action::Face(Direction::ALL[rng.random_range(0..4)])
    } else {
        Action::Move(rng.random_range(1..=config.max_move))
    }
}

/// Samples a story. Each action line picks an agent uniformly, then redraws
/// face/move proposals for that agent until one keeps it on the grid.
pub fn generate_world_story<R: Rng + ?Sized>(config: &WorldConfig, rng: &mut R) -> Result<WorldStory> {
    config.validate()?;
    let lines = rng.random_range(config.min_lines..=config.max_lines).max(config.minimal_lines());
    let mut statements = Vec::with_capacity(lines);
    let mut pos = Vec::with_capacity(config.agents);
    let mut facing = Vec::with_capacity(config.agents);
    for agent in 1..=config.agents {
        let (x, y) = (rng.random_range(1..=config.width), rng.random_range(1..=config.height));
        let d = Direction::ALL[rng.random_range(0..4)];
        statements.push(Statement::Place { agent, x, y });
        statements.push(Statement::Act { agent, action: Action::Face(d) });
        pos.push((x, y));
        facing.push(d);
    }
    while statements.len() < lines {
        let a = rng.random_range(0..config.agents);
        let action = loop {
            let action = propose(config, rng);
            match action {
                Action::Face(_) => break action,
                Action::Move(k) => {
                    let (dx, dy) = facing[a].delta();
                    let k = i64::from(k);
                    if config.on_grid(pos[a].0 + k * dx, pos[a].1 + k * dy) {
                        break action;
                    }
                }
            }
        };
        match action {
            Action::Face(d) => facing[a] = d,
            Action::Move(k) => {
                let (dx, dy) = facing[a].delta();
                pos[a] = (pos[a].0 + i64::from(k) * dx, pos[a].1 + i64::from(k) * dy);
            }
        }
        statements.push(Statement::Act { agent: a + 1, action });
    }
    Ok(WorldStory { statements, answers: pos })
}

/// Writes stories separated by blank lines after `#` header lines.
pub fn write_dataset(header: &[String], stories: &[WorldStory]) -> String {
    let mut out = String::new();
    for h in header {
        out.push_str("# ");
        out.push_str(h);
        out.push('\n');
    }
    for (i, s) in stories.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&s.to_text());
    }
    out
}

/// Parses a dataset file. Stored answers are kept as written; use
/// [`world_oracle`] to check them.
pub fn parse_dataset(text: &str) -> Result<Vec<WorldStory>> {
    let mut stories = Vec::new();
    let mut statements = Vec::new();
    let mut answers = Vec::new();
    let mut pending_q: Option<usize> = None;
    let flush = |statements: &mut Vec<Statement>, answers: &mut Vec<(i64, i64)>, stories: &mut Vec<WorldStory>| {
        if !statements.is_empty() || !answers.is_empty() {
            stories.push(WorldStory { statements: std::mem::take(statements), answers: std::mem::take(answers) });
        }
    };
    for (n, raw) in text.lines().enumerate() {
        let line_no = n + 1;
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            flush(&mut statements, &mut answers, &mut stories);
            continue;
        }
        let bad = |reason: &str| Error::MalformedLine { line: line_no, reason: reason.into() };
        if let Some(q) = line.strip_prefix("Q:") {
            let toks: Vec<&str> = q.split_whitespace().collect();
            match toks.as_slice() {
                ["where", "is", a, "?"] => {
                    let agent = parse_agent(a).ok_or_else(|| bad("bad agent"))?;
                    if agent != answers.len() + 1 {
                        return Err(bad("questions must follow agent order"));
                    }
                    pending_q = Some(agent);
                }
                _ => return Err(bad("bad question")),
            }
        } else if let Some(a) = line.strip_prefix("A:") {
            pending_q.take().ok_or_else(|| bad("answer without question"))?;
            answers.push(parse_coord(a.trim()).ok_or_else(|| bad("bad coordinate"))?);
        } else {
            if !answers.is_empty() || pending_q.is_some() {
                return Err(bad("statement after questions"));
            }
            statements.push(Statement::parse(line, line_no)?);
        }
    }
    flush(&mut statements, &mut answers, &mut stories);
    Ok(stories)
}
