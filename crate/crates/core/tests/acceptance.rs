//! End-to-end acceptance criteria. Each criterion prints one PASS/FAIL line
//! to stderr (bypassing the test harness's capture); the test fails if any
//! criterion fails.
//!
//! Criteria 5 and 7 read bAbI v1.2 files from the directory named by
//! `ENTNET_BABI_DIR` (the `en-valid-10k` layout: `qa1_*_train.txt`, ...).

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use entnet::checkpoint::Checkpoint;
use entnet::encoding::Vocabulary;
use entnet::inspect::slot_nearest_words;
use entnet::memory::{self, Activation, MemoryConfig, MemoryState, Variant};
use entnet::model::{EncodedSample, Encoder, EntNet, KeyMode, ModelConfig, Readout};
use entnet::numerics::{clip_global_norm, ops, Tape, Tensor};
use entnet::seeds::{self, substream};
use entnet::tasks::babi::load_task;
use entnet::tasks::cbt::{build_cbt_sample, window, CANDIDATES, WINDOW};
use entnet::tasks::world::{
    coord_token, generate_world_story, parse_dataset, world_oracle, Action, Direction, Statement, WorldConfig,
};
use entnet::tasks::{build_vocabulary, encode_samples, max_lengths, QASample};
use entnet::training::{evaluate_error, init_model, train_seeds, TrainConfig};
use rand::Rng;

pub const BABI_ENV: &str = "ENTNET_BABI_DIR";

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

/// `ENTNET_ACCEPTANCE_ONLY=1,2,6` restricts a run to some criteria; the
/// others are reported as not run and count as failures.
fn selected(n: usize) -> bool {
    match std::env::var("ENTNET_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|x| x.trim().parse() == Ok(n)),
        Err(_) => true,
    }
}

fn run(n: usize, name: &str, f: impl FnOnce() -> entnet::Result<Outcome>) -> bool {
    if !selected(n) {
        say(&format!("criterion {n} FAIL {name}: not run (excluded by ENTNET_ACCEPTANCE_ONLY)"));
        return false;
    }
    let start = Instant::now();
    let o = f().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
    say(&format!(
        "criterion {n} {} {name}: {} [{:.1}s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        start.elapsed().as_secs_f64()
    ));
    o.pass
}

// ---------------------------------------------------------------- 1: grads

fn loss_and_branches(model: &EntNet, sample: &EncodedSample) -> (f64, Vec<bool>) {
    let mut tape = Tape::new(&model.params);
    let pass = model.forward::<seeds::Rng>(&mut tape, sample, None, false).unwrap();
    let loss = model.loss(&mut tape, &pass, sample).unwrap();
    (tape.value(loss).item(), tape.prelu_branches())
}

/// Five-point central differences for every parameter entry. Returns
/// `None` when any perturbation moves a PReLU input across zero.
fn finite_difference_errors(model: &mut EntNet, sample: &EncodedSample, h: f64) -> Option<(f64, usize)> {
    let (grads, branches) = {
        let mut tape = Tape::new(&model.params);
        let pass = model.forward::<seeds::Rng>(&mut tape, sample, None, false).unwrap();
        let loss = model.loss(&mut tape, &pass, sample).unwrap();
        let b = tape.prelu_branches();
        (tape.backward(loss).unwrap(), b)
    };
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        for k in 0..model.params.get(id).value.len() {
            let x = model.params.get(id).value.data()[k];
            let mut f = [0.0; 4];
            for (slot, off) in f.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
                model.params.get_mut(id).value.data_mut()[k] = x + off * h;
                let (l, b) = loss_and_branches(model, sample);
                if b != branches {
                    model.params.get_mut(id).value.data_mut()[k] = x;
                    return None;
                }
                *slot = l;
            }
            model.params.get_mut(id).value.data_mut()[k] = x;
            let numeric = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * h);
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            count += 1;
        }
    }
    Some((worst, count))
}

fn random_model<R: Rng>(rng: &mut R, d: usize, m: usize, t: usize, variant: Variant, mem_phi: Activation, out_phi: Activation) -> (EntNet, EncodedSample) {
    let vocab = 9;
    let memory = match variant {
        Variant::General => MemoryConfig { activation: mem_phi, ..MemoryConfig::general(m, d) },
        Variant::Simplified => MemoryConfig::simplified(m, d),
    };
    let config = ModelConfig {
        vocab_size: vocab,
        memory,
        sentence_len: 3,
        query_len: 2,
        keys: KeyMode::Free,
        readout: Readout::Decoder,
        dual_encoding: false,
        output_activation: out_phi,
        encoder: Encoder::Mask,
    };
    let mut model = EntNet::init(config, rng).unwrap();
    for p in model.params.iter_mut() {
        if p.name.contains("masks") || p.name.ends_with("prelu") {
            p.value.data_mut().iter_mut().for_each(|x| *x = rng.random_range(0.2..1.5));
        }
    }
    let sample = EncodedSample {
        context: (0..t).map(|_| (0..3).map(|_| rng.random_range(0..vocab)).collect()).collect(),
        query: (0..2).map(|_| rng.random_range(1..vocab)).collect(),
        answer: rng.random_range(1..vocab),
        candidates: None,
    };
    (model, sample)
}

fn criterion_1() -> entnet::Result<Outcome> {
    let mut rng = substream(1, "acceptance-gradcheck");
    let phis = [Activation::Prelu, Activation::Identity];
    let (mut worst, mut entries, mut redraws) = (0.0f64, 0, 0);
    for i in 0..20 {
        let variant = if i % 2 == 0 { Variant::General } else { Variant::Simplified };
        let out_phi = phis[(i / 2) % 2];
        let mem_phi = if variant == Variant::General { phis[(i / 4) % 2] } else { Activation::Identity };
        let d = [4, 8][rng.random_range(0..2)];
        let m = [2, 3][rng.random_range(0..2)];
        let t = [1, 4][rng.random_range(0..2)];
        loop {
            let (mut model, sample) = random_model(&mut rng, d, m, t, variant, mem_phi, out_phi);
            match finite_difference_errors(&mut model, &sample, 1e-4) {
                Some((w, n)) => {
                    worst = worst.max(w);
                    entries += n;
                    break;
                }
                None => redraws += 1,
            }
        }
    }
    Ok(Outcome::new(
        worst < 1e-4,
        format!("20 configs, {entries} entries, max relative error {worst:.2e} (< 1e-4), {redraws} redrawn at PReLU kinks"),
    ))
}

// ------------------------------------------------------------ 2: generator

/// Straight replay, separate from the library oracle.
fn replay(statements: &[Statement]) -> Option<Vec<(i64, i64)>> {
    let mut pos = [(0i64, 0i64); 2];
    let mut dir = [(0i64, 0i64); 2];
    for st in statements {
        match *st {
            Statement::Place { agent, x, y } => pos[agent - 1] = (x, y),
            Statement::Act { agent, action: Action::Face(d) } => {
                dir[agent - 1] = match d {
                    Direction::N => (0, 1),
                    Direction::S => (0, -1),
                    Direction::E => (1, 0),
                    Direction::W => (-1, 0),
                }
            }
            Statement::Act { agent, action: Action::Move(k) } => {
                let a = agent - 1;
                for _ in 0..k {
                    pos[a] = (pos[a].0 + dir[a].0, pos[a].1 + dir[a].1);
                    if !(1..=10).contains(&pos[a].0) || !(1..=10).contains(&pos[a].1) {
                        return None;
                    }
                }
            }
        }
    }
    Some(pos.to_vec())
}

const APPENDIX_STORY: &str = "agent1 is at (2,8)
agent1 faces-N
agent2 is at (9,7)
agent2 faces-N
agent2 moves-2
agent2 faces-E
agent2 moves-1
agent1 moves-1
agent2 faces-S
agent2 moves-5
Q: where is agent1 ?
A: (2,9)
Q: where is agent2 ?
A: (10,4)
";

fn criterion_2() -> entnet::Result<Outcome> {
    let config = WorldConfig::variable(4, 40);
    let mut rng = substream(2, seeds::GENERATOR);
    let (mut mismatches, mut off_grid) = (0, 0);
    for _ in 0..10_000 {
        let story = generate_world_story(&config, &mut rng)?;
        match (replay(&story.statements), world_oracle(&story.statements, &config)) {
            (Some(r), Ok(o)) => mismatches += usize::from(r != story.answers || o != story.answers),
            _ => off_grid += 1,
        }
    }
    let example = &parse_dataset(APPENDIX_STORY)?[0];
    let answers: Vec<String> =
        world_oracle(&example.statements, &WorldConfig::fixed(10))?.into_iter().map(|(x, y)| coord_token(x, y)).collect();
    let worked = answers == ["(2,9)", "(10,4)"];
    Ok(Outcome::new(
        mismatches == 0 && off_grid == 0 && worked,
        format!("10000 stories: {mismatches} mismatches, {off_grid} off-grid; worked example gives {answers:?}"),
    ))
}

// -------------------------------------------------------------- 3, 4: world

struct WorldData {
    vocab: Vocabulary,
    train: Vec<EncodedSample>,
    valid: Vec<EncodedSample>,
    test: Vec<EncodedSample>,
}

fn world_samples(config: &WorldConfig, stories: usize, seed: u64) -> Vec<QASample> {
    let mut rng = substream(seed, seeds::GENERATOR);
    (0..stories).flat_map(|_| generate_world_story(config, &mut rng).unwrap().samples()).collect()
}

fn encode_world(vocab: &Vocabulary, samples: &[QASample]) -> Vec<EncodedSample> {
    encode_samples(samples, vocab, 4, 4, Readout::Decoder).unwrap()
}

fn world_data(config: &WorldConfig, seed: u64) -> WorldData {
    let vocab = config.vocabulary();
    WorldData {
        train: encode_world(&vocab, &world_samples(config, 10_000, seed)),
        valid: encode_world(&vocab, &world_samples(config, 1_000, seed + 1)),
        test: encode_world(&vocab, &world_samples(config, 1_000, seed + 2)),
        vocab,
    }
}

fn world_model_config(vocab: &Vocabulary) -> ModelConfig {
    ModelConfig {
        vocab_size: vocab.len(),
        memory: MemoryConfig::general(5, 20),
        sentence_len: 4,
        query_len: 4,
        keys: KeyMode::Free,
        readout: Readout::Decoder,
        dual_encoding: false,
        output_activation: Activation::Prelu,
        encoder: Encoder::Mask,
    }
}

/// Best of five seeds under the world-model protocol.
fn train_world(data: &WorldData) -> entnet::Result<(EntNet, String)> {
    let config = world_model_config(&data.vocab);
    let tc = TrainConfig::world(0.01);
    let (model, runs) = train_seeds(&config, &data.train, &data.valid, &tc, &[1, 2, 3, 4, 5], true, |_, _| {})?;
    let summary: Vec<String> =
        runs.iter().map(|r| format!("seed {} valid {:.3} ({} epochs)", r.seed, r.best_valid_error, r.epochs.len())).collect();
    Ok((model, summary.join(", ")))
}

fn criterion_3() -> entnet::Result<Outcome> {
    let data = world_data(&WorldConfig::fixed(10), 3_000);
    let (model, runs) = train_world(&data)?;
    let test = evaluate_error(&model, &data.test)?;
    Ok(Outcome::new(test.error <= 0.01, format!("T=10 test error {:.4} (<= 0.01); {runs}", test.error)))
}

fn criterion_4() -> entnet::Result<Outcome> {
    let data = world_data(&WorldConfig::variable(1, 20), 4_000);
    let (model, runs) = train_world(&data)?;
    let mut curve = Vec::new();
    let mut at_30 = f64::NAN;
    for t in (20..=80).step_by(10) {
        let samples = encode_world(&data.vocab, &world_samples(&WorldConfig::fixed(t), 1_000, 5_000 + t as u64));
        let e = evaluate_error(&model, &samples)?.error;
        if t == 30 {
            at_30 = e;
        }
        curve.push(format!("T={t}: {e:.3}"));
    }
    Ok(Outcome::new(
        at_30 <= 0.05,
        format!("T=30 error {at_30:.4} (<= 0.05); curve [{}] (reference 0, 0, 0, 0.01, 0.03, 0.05, 0.08); {runs}", curve.join(", ")),
    ))
}

// ---------------------------------------------------------------- 5: bAbI

fn babi_dir() -> Option<PathBuf> {
    std::env::var_os(BABI_ENV).map(PathBuf::from).filter(|p| p.is_dir())
}

struct BabiRun {
    model: EntNet,
    vocab: Vocabulary,
    valid_raw: Vec<QASample>,
    valid: Vec<EncodedSample>,
    test_error: f64,
    summary: String,
}

fn train_babi(task: usize, d: usize, keys: Option<Vec<String>>, encoder: Encoder) -> entnet::Result<BabiRun> {
    let dir = babi_dir().expect("checked by caller");
    let splits = load_task(&dir, task)?;
    let vocab = build_vocabulary(&[&splits.train, &splits.valid, &splits.test])?;
    let (k, kq) = max_lengths(&[&splits.train, &splits.valid, &splits.test]);
    let (key_mode, m) = match keys {
        Some(tokens) => (KeyMode::Tied(vocab.indices(&tokens)?), tokens.len()),
        None => (KeyMode::Free, 20),
    };
    let config = ModelConfig {
        vocab_size: vocab.len(),
        memory: MemoryConfig { keys_tied: key_mode != KeyMode::Free, ..MemoryConfig::general(m, d) },
        sentence_len: k,
        query_len: kq,
        keys: key_mode,
        readout: Readout::Decoder,
        dual_encoding: false,
        output_activation: Activation::Prelu,
        encoder,
    };
    let enc = |s: &[QASample]| encode_samples(s, &vocab, k, kq, Readout::Decoder);
    let (train, valid, test) = (enc(&splits.train)?, enc(&splits.valid)?, enc(&splits.test)?);
    let (model, runs) = train_seeds(&config, &train, &valid, &TrainConfig::babi(), &[1, 2, 3], true, |_, _| {})?;
    let test_error = evaluate_error(&model, &test)?.error;
    let summary = runs.iter().map(|r| format!("seed {} valid {:.3}", r.seed, r.best_valid_error)).collect::<Vec<_>>();
    Ok(BabiRun { model, vocab, valid_raw: splits.valid, valid, test_error, summary: summary.join(", ") })
}

fn criterion_5() -> entnet::Result<Outcome> {
    if babi_dir().is_none() {
        return Ok(Outcome::new(false, format!("bAbI data not available; set {BABI_ENV} to the en-valid-10k directory")));
    }
    let run = train_babi(1, 100, None, Encoder::Mask)?;
    Ok(Outcome::new(
        run.test_error <= 0.05,
        format!("task 1 test error {:.4} (not failed: <= 0.05); {}", run.test_error, run.summary),
    ))
}

// ------------------------------------------------------------ 6: structure

fn random_tensor<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.data_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
    t
}

fn criterion_6() -> entnet::Result<Outcome> {
    let mut rng = substream(6, "acceptance-structure");
    let (m, d) = (4, 6);
    let mut failures = Vec::new();
    let general = MemoryConfig::general(m, d);
    let weights = memory::CellWeights {
        u: random_tensor(&mut rng, &[d, d]),
        v: random_tensor(&mut rng, &[d, d]),
        w: random_tensor(&mut rng, &[d, d]),
        slopes: Some(random_tensor(&mut rng, &[d]).map(f64::abs)),
    };
    let keys = random_tensor(&mut rng, &[m, d]);
    let inputs: Vec<(Tensor, Tensor)> = (0..12)
        .map(|_| {
            let s = random_tensor(&mut rng, &[d]);
            (s.clone(), s)
        })
        .collect();

    // Unit-norm slots after every normalized step.
    let start = memory::init_state(&keys)?;
    let (last, trace) = memory::run_story(&inputs, &start, Some(&weights), &general, true)?;
    let norm_err = trace
        .iter()
        .flat_map(|s| (0..m).map(move |j| (s.slots.row(j).iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()))
        .fold(0.0, f64::max);
    if norm_err > 1e-5 {
        failures.push(format!("slot norm off by {norm_err:e}"));
    }

    // Permuting slots (with their keys) permutes the result exactly.
    let perm = [2, 0, 3, 1];
    let permute = |t: &Tensor| Tensor::from_rows(&perm.iter().map(|&i| t.row(i).to_vec()).collect::<Vec<_>>()).unwrap();
    let p_start = MemoryState { slots: permute(&start.slots), keys: permute(&start.keys) };
    let (p_last, _) = memory::run_story(&inputs, &p_start, Some(&weights), &general, false)?;
    if p_last.slots != permute(&last.slots) {
        failures.push("slot permutation is not exact".into());
    }

    // Simplified variant: h_j + g_j s exactly.
    let simple = MemoryConfig::simplified(m, d);
    let state = MemoryState { slots: random_tensor(&mut rng, &[m, d]), keys: keys.clone() };
    let s = random_tensor(&mut rng, &[d]);
    let g = memory::gate(&s, &state)?;
    let next = memory::step(&s, &s, &state, None, &simple)?;
    for j in 0..m {
        let expected: Vec<f64> = state.slots.row(j).iter().zip(s.data()).map(|(h, x)| h + g.data()[j] * x).collect();
        if next.slots.row(j) != expected.as_slice() {
            failures.push(format!("simplified step differs at slot {j}"));
        }
    }

    // NULL row stays zero through training; attention sums to one.
    let wc = WorldConfig::fixed(6);
    let vocab = wc.vocabulary();
    let samples = encode_world(&vocab, &world_samples(&wc, 40, 66));
    let mut config = world_model_config(&vocab);
    config.memory = MemoryConfig::general(3, 8);
    let mut model = init_model(config, 6)?;
    let tc = TrainConfig { max_epochs: 3, ..TrainConfig::world(0.01) };
    entnet::training::train(&mut model, &samples, &samples[..10], &tc, 6)?;
    let null_row = model.params.value(model.ids.embedding).row(0).to_vec();
    if null_row.iter().any(|&x| x != 0.0) {
        failures.push("NULL embedding moved".into());
    }
    let mut softmax_err: f64 = 0.0;
    for s in &samples {
        let p = model.predict(s)?;
        softmax_err = softmax_err.max((p.attention.sum() - 1.0).abs());
        softmax_err = softmax_err.max((p.distribution.probabilities.sum() - 1.0).abs());
    }
    if softmax_err > 1e-6 {
        failures.push(format!("softmax sums off by {softmax_err:e}"));
    }

    // Clipping bounds the global norm.
    let mut clip_max: f64 = 0.0;
    for scale in [1e-3, 1.0, 1e3, 1e6] {
        for p in model.params.iter_mut() {
            p.grad.data_mut().iter_mut().for_each(|g| *g = scale * rng.random_range(-1.0..1.0));
        }
        clip_global_norm(&mut model.params, 40.0);
        clip_max = clip_max.max(model.params.grad_norm());
    }
    if clip_max > 40.0 + 1e-9 {
        failures.push(format!("clipped norm {clip_max}"));
    }

    let detail = if failures.is_empty() {
        format!("norm dev {norm_err:.1e}, softmax dev {softmax_err:.1e}, clipped norm {clip_max:.6}; permutation and reduction exact")
    } else {
        failures.join("; ")
    };
    Ok(Outcome::new(failures.is_empty(), detail))
}

// -------------------------------------------------------- 7: interpretation

/// People (statement subjects) and objects (question subjects) of task 2.
fn task2_entities(samples: &[QASample]) -> Vec<String> {
    let mut set = BTreeSet::new();
    for s in samples {
        for sentence in &s.context {
            if let Some(first) = sentence.first() {
                set.insert(first.clone());
            }
        }
        if let Some(object) = queried_entity(s) {
            set.insert(object);
        }
    }
    set.into_iter().collect()
}

/// The token before the question mark: `where is the milk ?` gives `milk`.
fn queried_entity(s: &QASample) -> Option<String> {
    let q = &s.query;
    q.iter().position(|t| t == "?").and_then(|i| i.checked_sub(1)).map(|i| q[i].clone())
}

fn criterion_7() -> entnet::Result<Outcome> {
    let Some(dir) = babi_dir() else {
        return Ok(Outcome::new(false, format!("bAbI data not available; set {BABI_ENV} to the en-valid-10k directory")));
    };
    let entities = task2_entities(&load_task(&dir, 2)?.train);
    let run = train_babi(2, 100, Some(entities.clone()), Encoder::Bow)?;
    if run.test_error > 0.05 {
        return Ok(Outcome::new(false, format!("task 2 run failed: test error {:.4}; {}", run.test_error, run.summary)));
    }
    let weights = run.model.output_weights().expect("decoder readout");
    let KeyMode::Tied(key_idx) = &run.model.config.keys else { unreachable!("tied keys") };
    let (mut correct, mut ranked_first) = (0, 0);
    for (raw, s) in run.valid_raw.iter().zip(&run.valid) {
        if run.model.predict(s)?.answer != s.answer {
            continue;
        }
        let Some(slot) = queried_entity(raw).and_then(|e| entities.iter().position(|k| *k == e)) else { continue };
        correct += 1;
        let (state, _) = run.model.read_story(s)?;
        let report = slot_nearest_words(&state, &weights, 1, &run.vocab, Some(key_idx))?;
        ranked_first += usize::from(report.slots[slot].neighbors[0].token == raw.answer);
    }
    let rate = ranked_first as f64 / correct.max(1) as f64;
    Ok(Outcome::new(
        correct > 0 && rate >= 0.8,
        format!("gold location ranked first for {ranked_first}/{correct} correctly answered stories ({rate:.3}, >= 0.8)"),
    ))
}

// ------------------------------------------------------------------ 8: CBT

fn tokens(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn criterion_8() -> entnet::Result<Outcome> {
    let mut failures = Vec::new();
    let cands = tokens("ann bob cat dog eel fox gnu hen ibis jay");
    let story = vec![tokens("ann saw the cat"), tokens("at home then bob left")];
    let sample = build_cbt_sample(&story, &tokens("the XXXXX ran off"), "cat", &cands)?;
    let flat: Vec<String> = story.concat();
    let expected: Vec<Vec<String>> = [0, 3, 7].iter().map(|&i| window(&flat, i, WINDOW)).collect();
    let by_formula = [
        tokens("<null> <null> ann saw the"),
        tokens("saw the cat at home"),
        tokens("home then bob left <null>"),
    ];
    if sample.context != expected || expected != by_formula {
        failures.push(format!("windows {:?}", sample.context));
    }
    if sample.query != tokens("<null> the XXXXX ran off") {
        failures.push(format!("query window {:?}", sample.query));
    }

    let mut vocab = Vocabulary::default();
    entnet::tasks::extend_vocabulary(&mut vocab, std::slice::from_ref(&sample));
    let encoded = entnet::tasks::encode_sample(&sample, &vocab, WINDOW, WINDOW, Readout::Candidates)?;
    let config = ModelConfig {
        vocab_size: vocab.len(),
        memory: MemoryConfig { keys_tied: true, ..MemoryConfig::simplified(CANDIDATES, 8) },
        sentence_len: WINDOW,
        query_len: WINDOW,
        keys: KeyMode::Candidates,
        readout: Readout::Candidates,
        dual_encoding: true,
        output_activation: Activation::Identity,
        encoder: Encoder::Mask,
    };
    let model = init_model(config, 8)?;
    let p = model.predict(&encoded)?;
    let probs = &p.distribution.probabilities;
    let total = probs.sum();
    if probs.len() != CANDIDATES || (total - 1.0).abs() > 1e-6 || p.answer >= CANDIDATES {
        failures.push(format!("distribution of {} entries summing to {total}", probs.len()));
    }
    if ops::argmax(p.attention.data()) != p.answer {
        failures.push("prediction is not the attention argmax".into());
    }

    let ck = Checkpoint { model, vocab, meta: serde_json::json!({}) };
    let back = Checkpoint::from_bytes(&ck.to_bytes()?)?;
    if back.model.config != ck.model.config || back.model.predict(&encoded)?.answer != p.answer {
        failures.push("checkpoint round trip changed the model".into());
    }
    let detail = if failures.is_empty() {
        format!("windows match the b=5 formula; 10-way distribution sums to {total:.12}; simplified config round-trips")
    } else {
        failures.join("; ")
    };
    Ok(Outcome::new(failures.is_empty(), detail))
}

#[test]
fn acceptance_criteria() {
    let results = [
        run(1, "gradient correctness", criterion_1),
        run(2, "generator/oracle equivalence", criterion_2),
        run(3, "world model T=10", criterion_3),
        run(4, "length generalization", criterion_4),
        run(5, "bAbI task 1", criterion_5),
        run(6, "structural invariants", criterion_6),
        run(7, "slot interpretation", criterion_7),
        run(8, "CBT pipeline", criterion_8),
    ];
    let failed: Vec<usize> = results.iter().enumerate().filter(|(_, p)| !**p).map(|(i, _)| i + 1).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
