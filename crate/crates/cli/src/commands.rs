//! The five subcommands. Each resolves a [`Settings`] map, runs, and writes
//! its artifacts under the run directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use entnet::checkpoint::Checkpoint;
use entnet::gradcheck::{check_model, random_case, FD_STEP, REL_FLOOR, TOLERANCE};
use entnet::inspect::slot_nearest_words;
use entnet::memory::{Activation, MemoryConfig, Variant};
use entnet::model::{EncodedSample, Encoder, EntNet, KeyMode, ModelConfig, Readout};
use entnet::seeds::{self, substream};
use entnet::tasks::world::{generate_world_story, write_dataset, WorldConfig};
use entnet::tasks::{encode_samples, max_lengths, QASample};
use entnet::training::{
    evaluate_error, train_seeds, Evaluation, OptimizerKind, Protocol, Schedule, TrainConfig, FAIL_THRESHOLD,
};
use entnet::{Error, Result};
use serde_json::json;

use crate::config::Settings;
use crate::data::{self, Task};

/// Environment variable naming the root under which run directories are
/// created when `--out` is not given.
pub const OUT_ENV: &str = "ENTNET_OUT";
pub const DEFAULT_OUT_ROOT: &str = "runs";

/// `explicit`, or `$ENTNET_OUT/<name>` (`runs/<name>` when unset).
pub fn run_dir(explicit: Option<&Path>, name: &str) -> PathBuf {
    match explicit {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(std::env::var(OUT_ENV).unwrap_or_else(|_| DEFAULT_OUT_ROOT.into())).join(name),
    }
}

/// Defaults, then the config file, then flags.
pub fn resolve(defaults: Settings, file: Option<&Path>, flags: &Settings, allowed: &[&str]) -> Result<Settings> {
    let mut s = defaults;
    if let Some(path) = file {
        let f = Settings::load(path)?;
        f.check_keys(allowed)?;
        s.overlay(&f);
    }
    s.overlay(flags);
    s.check_keys(allowed)?;
    Ok(s)
}

fn write_config(dir: &Path, settings: &Settings) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.txt"), settings.to_text())?;
    Ok(())
}

fn parse_enum<T>(settings: &Settings, key: &str, options: &[(&str, T)]) -> Result<T>
where
    T: Copy,
{
    let v = settings.str(key)?;
    options.iter().find(|(name, _)| *name == v).map(|(_, t)| *t).ok_or_else(|| {
        let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
        Error::Config(format!("bad value {v:?} for {key} ({})", names.join(", ")))
    })
}

// ---------------------------------------------------------------- generate

pub const GENERATE_KEYS: &[&str] = &["task", "T", "t_min", "t_max", "n", "seed"];

pub fn generate_defaults() -> Settings {
    let mut s = Settings::default();
    s.set("task", "world");
    s.set("T", 10);
    s.set("t_min", "none");
    s.set("t_max", "none");
    s.set("n", 12_000);
    s.set("seed", 1);
    s
}

/// Stories per split for `n` total, in the ratio 10:1:1.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let valid = n / 12;
    let test = n / 12;
    (n - valid - test, valid, test)
}

pub fn generate(settings: &Settings, dir: &Path) -> Result<String> {
    if settings.get::<Task>("task")? != Task::World {
        return Err(Error::Config("only the world task can be generated; bAbI and CBT are read from files".into()));
    }
    let t: usize = settings.get("T")?;
    let config = match (settings.optional::<usize>("t_min")?, settings.optional::<usize>("t_max")?) {
        (None, None) => WorldConfig::fixed(t),
        (Some(lo), Some(hi)) => WorldConfig::variable(lo, hi),
        _ => return Err(Error::Config("t_min and t_max go together".into())),
    };
    config.validate()?;
    let n: usize = settings.get("n")?;
    if n < 12 {
        return Err(Error::Config("n must be at least 12 for a 10:1:1 split".into()));
    }
    let seed: u64 = settings.get("seed")?;
    let mut rng = substream(seed, seeds::GENERATOR);
    let stories = (0..n).map(|_| generate_world_story(&config, &mut rng)).collect::<Result<Vec<_>>>()?;
    write_config(dir, settings)?;
    let (n_train, n_valid, _) = split_sizes(n);
    let parts = [
        ("train", &stories[..n_train]),
        ("valid", &stories[n_train..n_train + n_valid]),
        ("test", &stories[n_train + n_valid..]),
    ];
    let mut report = String::new();
    for (split, chunk) in parts {
        let header = vec![
            "entnet world-model dataset".to_string(),
            format!("split = {split}"),
            format!("stories = {}", chunk.len()),
            format!("seed = {seed}"),
            format!("lines = {}..={}", config.min_lines, config.max_lines),
            format!("grid = {}x{}", config.width, config.height),
            format!("agents = {}", config.agents),
            format!("max_move = {}", config.max_move),
        ];
        let path = dir.join(format!("{split}.txt"));
        fs::write(&path, write_dataset(&header, chunk))?;
        let _ = writeln!(report, "wrote {} stories to {}", chunk.len(), path.display());
    }
    Ok(report)
}

// ------------------------------------------------------------------- train

pub const TRAIN_KEYS: &[&str] = &[
    "task",
    "data",
    "task_id",
    "cbt_kind",
    "protocol",
    "d",
    "m",
    "variant",
    "memory_phi",
    "output_phi",
    "normalize",
    "keys",
    "key_tokens",
    "encoder",
    "dual_encoding",
    "seeds",
    "stop_at_perfect",
    "optimizer",
    "lr",
    "schedule",
    "batch_size",
    "clip",
    "epochs",
    "patience",
    "dropout",
];

fn schedule_text(s: Schedule) -> String {
    match s {
        Schedule::HalveEpochs(n) => format!("halve_epochs:{n}"),
        Schedule::HalveUpdates(n) => format!("halve_updates:{n}"),
        Schedule::Constant => "constant".into(),
    }
}

fn parse_schedule(v: &str) -> Result<Schedule> {
    let bad = || Error::Config(format!("bad schedule {v:?} (halve_epochs:N, halve_updates:N, constant)"));
    if v == "constant" {
        return Ok(Schedule::Constant);
    }
    let (kind, n) = v.split_once(':').ok_or_else(bad)?;
    let n: usize = n.parse().map_err(|_| bad())?;
    match kind {
        "halve_epochs" => Ok(Schedule::HalveEpochs(n)),
        "halve_updates" => Ok(Schedule::HalveUpdates(n)),
        _ => Err(bad()),
    }
}

fn protocol_config(name: &str) -> Result<TrainConfig> {
    match name {
        "babi" | "babi10k" | "babi1k" => Ok(TrainConfig::babi()),
        "world" => Ok(TrainConfig::world(0.01)),
        "cbt" => Ok(TrainConfig::cbt()),
        "custom" => Ok(TrainConfig { protocol: Protocol::Custom, ..TrainConfig::babi() }),
        _ => Err(Error::Config(format!("unknown protocol {name:?} (babi10k, babi1k, world, cbt, custom)"))),
    }
}

/// Defaults for a training run. `task` and `protocol` are read from the
/// already merged file and flag settings, since they select the rest.
pub fn train_defaults(chosen: &Settings) -> Result<Settings> {
    let task: Task = chosen.raw("task").unwrap_or("world").parse()?;
    let protocol = chosen.raw("protocol").map(str::to_string).unwrap_or_else(|| match task {
        Task::World => "world".into(),
        Task::Babi => "babi10k".into(),
        Task::Cbt => "cbt".into(),
    });
    let tc = protocol_config(&protocol)?;
    let mut s = Settings::default();
    s.set("task", task.name());
    s.set("data", "");
    s.set("task_id", 1);
    s.set("cbt_kind", "NE");
    s.set("protocol", &protocol);
    s.set("optimizer", match tc.optimizer {
        OptimizerKind::Adam => "adam",
        OptimizerKind::Sgd => "sgd",
    });
    s.set("lr", tc.lr);
    s.set("schedule", schedule_text(tc.schedule));
    s.set("batch_size", tc.batch_size);
    s.set("clip", tc.clip);
    s.set("epochs", tc.max_epochs);
    s.set("patience", tc.patience.map_or("none".into(), |p| p.to_string()));
    s.set("dropout", tc.dropout);
    s.set("key_tokens", "");
    s.set("stop_at_perfect", false);
    s.set("output_phi", "prelu");
    match task {
        Task::World | Task::Babi => {
            let (d, m, seeds) = if task == Task::World { (20, 5, "1,2,3,4,5") } else { (100, 20, "1,2,3") };
            s.set("d", d);
            s.set("m", m);
            s.set("seeds", seeds);
            s.set("variant", "general");
            s.set("memory_phi", "prelu");
            s.set("normalize", true);
            s.set("keys", "free");
            s.set("encoder", "mask");
            s.set("dual_encoding", false);
        }
        Task::Cbt => {
            s.set("d", 100);
            s.set("m", entnet::tasks::cbt::CANDIDATES);
            s.set("seeds", "1");
            s.set("variant", "simplified");
            s.set("memory_phi", "identity");
            s.set("normalize", false);
            s.set("keys", "candidates");
            s.set("encoder", "mask");
            s.set("dual_encoding", true);
        }
    }
    Ok(s)
}

pub fn train_config(s: &Settings) -> Result<TrainConfig> {
    let base = protocol_config(s.str("protocol")?)?;
    let tc = TrainConfig {
        protocol: base.protocol,
        optimizer: parse_enum(s, "optimizer", &[("adam", OptimizerKind::Adam), ("sgd", OptimizerKind::Sgd)])?,
        lr: s.get("lr")?,
        schedule: parse_schedule(s.str("schedule")?)?,
        batch_size: s.get("batch_size")?,
        clip: s.get("clip")?,
        max_epochs: s.get("epochs")?,
        patience: s.optional("patience")?,
        dropout: s.get("dropout")?,
    };
    tc.validate()?;
    Ok(tc)
}

/// Model configuration for a vocabulary and padded lengths.
pub fn model_config(s: &Settings, vocab: &entnet::encoding::Vocabulary, k: usize, kq: usize) -> Result<ModelConfig> {
    let variant = parse_enum(s, "variant", &[("general", Variant::General), ("simplified", Variant::Simplified)])?;
    let phi = [("prelu", Activation::Prelu), ("identity", Activation::Identity)];
    let keys = match s.str("keys")? {
        "free" => KeyMode::Free,
        "candidates" => KeyMode::Candidates,
        "tied" => {
            let tokens: Vec<String> = s.list("key_tokens")?;
            if tokens.is_empty() {
                return Err(Error::Config("keys = tied needs key_tokens".into()));
            }
            KeyMode::Tied(vocab.indices(&tokens)?)
        }
        v => return Err(Error::Config(format!("bad value {v:?} for keys (free, tied, candidates)"))),
    };
    let readout = if keys == KeyMode::Candidates { Readout::Candidates } else { Readout::Decoder };
    let config = ModelConfig {
        vocab_size: vocab.len(),
        memory: MemoryConfig {
            slots: s.get("m")?,
            dim: s.get("d")?,
            variant,
            activation: parse_enum(s, "memory_phi", &phi)?,
            normalize: s.get("normalize")?,
            keys_tied: keys != KeyMode::Free,
        },
        sentence_len: k,
        query_len: kq,
        keys,
        readout,
        dual_encoding: s.get("dual_encoding")?,
        output_activation: parse_enum(s, "output_phi", &phi)?,
        encoder: parse_enum(s, "encoder", &[("mask", Encoder::Mask), ("bow", Encoder::Bow)])?,
    };
    config.validate()?;
    Ok(config)
}

fn data_dir(s: &Settings) -> Result<PathBuf> {
    match s.str("data")? {
        "" => Err(Error::Config("no data directory given".into())),
        d => Ok(PathBuf::from(d)),
    }
}

fn load_data(s: &Settings) -> Result<(Task, data::Splits)> {
    let task: Task = s.get("task")?;
    let splits = data::load(task, &data_dir(s)?, s.get("task_id")?, s.str("cbt_kind")?)?;
    if splits.train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok((task, splits))
}

fn settings_json(s: &Settings) -> serde_json::Value {
    serde_json::Value::Object(s.entries().map(|(k, v)| (k.to_string(), json!(v))).collect())
}

pub fn train(settings: &Settings, dir: &Path, log: &mut dyn FnMut(&str)) -> Result<String> {
    let tc = train_config(settings)?;
    let seed_list: Vec<u64> = settings.list("seeds")?;
    if seed_list.is_empty() {
        return Err(Error::Config("seeds must list at least one seed".into()));
    }
    let (task, splits) = load_data(settings)?;
    let vocab = splits.vocabulary(data::base_vocabulary(task));
    let (k, kq) = max_lengths(&[&splits.train, &splits.valid, &splits.test]);
    let config = model_config(settings, &vocab, k, kq)?;
    let encode = |x: &[QASample]| encode_samples(x, &vocab, k, kq, config.readout);
    let (train_set, valid_set, test_set) = (encode(&splits.train)?, encode(&splits.valid)?, encode(&splits.test)?);
    write_config(dir, settings)?;

    let (model, mut runs) =
        train_seeds(&config, &train_set, &valid_set, &tc, &seed_list, settings.get("stop_at_perfect")?, |seed, m| {
            log(&format!(
                "seed {seed} epoch {} lr {:.3e} train_loss {:.4} train_err {:.4} valid_loss {:.4} valid_err {:.4}",
                m.epoch, m.lr, m.train_loss, m.train_error, m.valid_loss, m.valid_error
            ))
        })?;
    let best_seed = entnet::training::select_best_seed(&runs)?.seed;
    let test = if test_set.is_empty() { None } else { Some(evaluate_error(&model, &test_set)?) };
    for run in &mut runs {
        if run.seed == best_seed {
            run.test = test;
        }
        fs::write(dir.join(format!("metrics_seed{}.csv", run.seed)), run.to_csv())?;
    }
    let best = runs.iter().find(|r| r.seed == best_seed).expect("best run is among the runs");
    let summary = json!({
        "task": task.name(),
        "task_id": settings.get::<usize>("task_id")?,
        "best_seed": best_seed,
        "best_epoch": best.best_epoch,
        "best_valid_error": best.best_valid_error,
        "test_error": test.map(|t| t.error),
        "failed": test.map(|t| t.failed()),
        "parameters": model.params.scalar_count(),
        "runs": runs.iter().map(|r| json!({
            "seed": r.seed,
            "epochs": r.epochs.len(),
            "best_epoch": r.best_epoch,
            "best_valid_error": r.best_valid_error,
            "updates": r.updates,
            "wall_clock_secs": r.wall_clock_secs,
        })).collect::<Vec<_>>(),
    });
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    let ck = Checkpoint {
        model,
        vocab,
        meta: json!({ "config": settings_json(settings), "seed": best_seed, "best_valid_error": best.best_valid_error }),
    };
    ck.save(&dir.join("model.ckpt"))?;

    let mut report = format!("best seed {best_seed}: valid error {:.4}", best.best_valid_error);
    if let Some(t) = test {
        let _ = write!(report, ", test error {:.4}{}", t.error, if t.failed() { " (failed)" } else { "" });
    }
    let _ = write!(report, "\nartifacts in {}", dir.display());
    Ok(report)
}

// -------------------------------------------------------------------- eval

/// Settings a checkpoint was trained with, as recorded in its metadata.
fn checkpoint_settings(ck: &Checkpoint) -> Settings {
    let mut s = Settings::default();
    if let Some(map) = ck.meta.get("config").and_then(|c| c.as_object()) {
        for (k, v) in map {
            if let Some(v) = v.as_str() {
                s.set(k, v);
            }
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EvalRow {
    pub label: String,
    pub samples: usize,
    pub error: f64,
    pub loss: f64,
    pub failed: bool,
}

const FAILED_LABEL: &str = "Failed Tasks (err. > 5%)";

/// Table with one row per task, then the mean error and the number of
/// failed tasks.
pub fn format_table(rows: &[EvalRow]) -> String {
    let w = rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(FAILED_LABEL.len());
    let mut out = format!("{:<w$}  {:>9}  {:>7}\n", "Task", "Error (%)", "Samples");
    for r in rows {
        let mark = if r.failed { " *" } else { "" };
        let _ = writeln!(out, "{:<w$}  {:>9.1}  {:>7}{mark}", r.label, 100.0 * r.error, r.samples);
    }
    let mean = rows.iter().map(|r| r.error).sum::<f64>() / rows.len().max(1) as f64;
    let _ = writeln!(out, "{:<w$}  {:>9.1}", "Mean Error (%)", 100.0 * mean);
    let _ = writeln!(out, "{:<w$}  {:>9}", FAILED_LABEL, rows.iter().filter(|r| r.failed).count());
    out
}

pub fn encoded_split(
    ck: &Checkpoint,
    settings: &Settings,
    split: &str,
) -> Result<(Vec<QASample>, Vec<EncodedSample>)> {
    let (_, splits) = load_data(settings)?;
    let samples = match split {
        "train" => splits.train,
        "valid" => splits.valid,
        "test" => splits.test,
        _ => return Err(Error::Config(format!("bad split {split:?} (train, valid, test)"))),
    };
    let c = &ck.model.config;
    let encoded = encode_samples(&samples, &ck.vocab, c.sentence_len, c.query_len, c.readout)?;
    Ok((samples, encoded))
}

/// Evaluates each checkpoint on `split` of its data. `overrides` replaces
/// recorded settings such as `data` or `task_id`.
pub fn eval(models: &[PathBuf], overrides: &Settings, split: &str) -> Result<Vec<EvalRow>> {
    if models.is_empty() {
        return Err(Error::Config("no model given".into()));
    }
    models
        .iter()
        .map(|path| {
            let ck = Checkpoint::load(path)?;
            let mut s = checkpoint_settings(&ck);
            s.overlay(overrides);
            let (_, encoded) = encoded_split(&ck, &s, split)?;
            let e: Evaluation = evaluate_error(&ck.model, &encoded)?;
            let label = match s.get::<Task>("task")? {
                Task::Babi => format!("{}: task {}", s.str("task")?, s.str("task_id")?),
                t => {
                    let data = data_dir(&s)?;
                    let name = data.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                    format!("{}: {name}", t.name())
                }
            };
            Ok(EvalRow { label, samples: e.total, error: e.error, loss: e.loss, failed: e.error > FAIL_THRESHOLD })
        })
        .collect()
}

// ----------------------------------------------------------------- inspect

/// Affinity report for sample `index` of `split`, with the sample's story,
/// question and answer as a preamble.
pub fn inspect(
    model: &Path,
    overrides: &Settings,
    split: &str,
    index: usize,
    k: usize,
) -> Result<(entnet::inspect::AffinityReport, String)> {
    let ck = Checkpoint::load(model)?;
    let mut s = checkpoint_settings(&ck);
    s.overlay(overrides);
    let (samples, encoded) = encoded_split(&ck, &s, split)?;
    let sample = encoded
        .get(index)
        .ok_or_else(|| Error::Config(format!("index {index} out of range for {} samples", encoded.len())))?;
    let weights = ck.model.output_weights().ok_or_else(|| Error::Config("inspect needs a decoder readout".into()))?;
    let (state, _) = ck.model.read_story(sample)?;
    let keys = match &ck.model.config.keys {
        KeyMode::Tied(idx) => Some(idx.as_slice()),
        _ => None,
    };
    let report = slot_nearest_words(&state, &weights, k, &ck.vocab, keys)?;
    let raw = &samples[index];
    let mut preamble = String::new();
    for sentence in &raw.context {
        let _ = writeln!(preamble, "  {}", sentence.join(" "));
    }
    let predicted = ck.model.predict(sample)?.answer;
    let _ = writeln!(
        preamble,
        "question: {}\nanswer: {}  predicted: {}",
        raw.query.join(" "),
        raw.answer,
        ck.vocab.token(predicted)
    );
    Ok((report, preamble))
}

// --------------------------------------------------------------- gradcheck

pub const GRADCHECK_KEYS: &[&str] = &["d", "m", "T", "seed", "variant", "memory_phi", "output_phi"];

pub fn gradcheck_defaults() -> Settings {
    let mut s = Settings::default();
    s.set("d", 8);
    s.set("m", 3);
    s.set("T", 4);
    s.set("seed", 0);
    s.set("variant", "general");
    s.set("memory_phi", "prelu");
    s.set("output_phi", "prelu");
    s
}

pub fn gradcheck(s: &Settings) -> Result<entnet::gradcheck::GradCheckReport> {
    let phi = [("prelu", Activation::Prelu), ("identity", Activation::Identity)];
    let variant = parse_enum(s, "variant", &[("general", Variant::General), ("simplified", Variant::Simplified)])?;
    let mut rng = substream(s.get("seed")?, "gradcheck");
    let (mut model, sample): (EntNet, _) = random_case(
        s.get("d")?,
        s.get("m")?,
        s.get("T")?,
        variant,
        parse_enum(s, "memory_phi", &phi)?,
        parse_enum(s, "output_phi", &phi)?,
        &mut rng,
    )?;
    check_model(&mut model, &sample, FD_STEP, REL_FLOOR)
}

pub fn gradcheck_passed(r: &entnet::gradcheck::GradCheckReport) -> bool {
    r.passed(TOLERANCE)
}
