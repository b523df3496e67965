//! Minibatch training by backpropagation through time, evaluation and seed
//! selection.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DropoutCtx, EncodedSample, EntNet, ModelConfig};
use crate::numerics::{clip_global_norm, ops, Adam, Optimizer, ParamStore, Tape, CLIP_THRESHOLD};
use crate::seeds::{self, substream};

/// A task fails when its error is strictly above this.
pub const FAIL_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Babi,
    World,
    Cbt,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Halve the rate every this many epochs.
    HalveEpochs(usize),
    /// Halve the rate every this many parameter updates.
    HalveUpdates(usize),
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub protocol: Protocol,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub schedule: Schedule,
    pub batch_size: usize,
    pub clip: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a better validation error.
    pub patience: Option<usize>,
    /// Dropout on embedding rows during training.
    pub dropout: f64,
}

impl TrainConfig {
    /// ADAM at 0.01, halved every 25 epochs, 200 epochs.
    pub fn babi() -> Self {
        Self {
            protocol: Protocol::Babi,
            optimizer: OptimizerKind::Adam,
            lr: 0.01,
            schedule: Schedule::HalveEpochs(25),
            batch_size: 32,
            clip: CLIP_THRESHOLD,
            max_epochs: 200,
            patience: None,
            dropout: 0.0,
        }
    }

    /// ADAM halved every 10k updates; 200 epochs or a 25-epoch plateau.
    pub fn world(lr: f64) -> Self {
        Self {
            protocol: Protocol::World,
            lr,
            schedule: Schedule::HalveUpdates(10_000),
            patience: Some(25),
            ..Self::babi()
        }
    }

    /// Plain SGD at a fixed 0.001 with dropout 0.5.
    pub fn cbt() -> Self {
        Self {
            protocol: Protocol::Cbt,
            optimizer: OptimizerKind::Sgd,
            lr: 0.001,
            schedule: Schedule::Constant,
            patience: Some(25),
            dropout: 0.5,
            ..Self::babi()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and nonnegative", self.lr)));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch size and epoch count must be positive".into()));
        }
        if !(self.clip > 0.0) {
            return Err(Error::Config("clip threshold must be positive".into()));
        }
        if matches!(self.schedule, Schedule::HalveEpochs(0) | Schedule::HalveUpdates(0)) {
            return Err(Error::Config("schedule period must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidRate(self.dropout));
        }
        Ok(())
    }

    pub fn make_optimizer(&self) -> Optimizer {
        match self.optimizer {
            OptimizerKind::Adam => Optimizer::Adam(Adam::default()),
            OptimizerKind::Sgd => Optimizer::Sgd,
        }
    }
}

/// Learning rate at a given epoch (0-based) after `updates` steps.
pub fn lr_schedule(config: &TrainConfig, epoch: usize, updates: usize) -> f64 {
    let halvings = match config.schedule {
        Schedule::HalveEpochs(n) => epoch / n,
        Schedule::HalveUpdates(n) => updates / n,
        Schedule::Constant => 0,
    };
    config.lr * 0.5f64.powi(halvings.min(i32::MAX as usize) as i32)
}

/// Parameters for `seed`, drawn from its init stream.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<EntNet> {
    EntNet::init(config, &mut substream(seed, seeds::INIT))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub error: f64,
    pub loss: f64,
    pub correct: usize,
    pub total: usize,
}

impl Evaluation {
    pub fn from_counts(correct: usize, total: usize, loss: f64) -> Self {
        let error = if total == 0 { 0.0 } else { (total - correct) as f64 / total as f64 };
        Self { error, loss, correct, total }
    }

    pub fn failed(&self) -> bool {
        self.error > FAIL_THRESHOLD
    }
}

/// Fraction of samples whose predicted answer differs from the gold one,
/// with the mean loss.
pub fn evaluate_error(model: &EntNet, samples: &[EncodedSample]) -> Result<Evaluation> {
    let mut correct = 0;
    let mut loss = 0.0;
    for s in samples {
        let p = model.predict(s)?;
        loss += p.loss;
        correct += usize::from(p.answer == s.answer);
    }
    let mean = if samples.is_empty() { 0.0 } else { loss / samples.len() as f64 };
    Ok(Evaluation::from_counts(correct, samples.len(), mean))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// Error of the predictions made during the epoch's forward passes.
    pub train_error: f64,
    pub valid_loss: f64,
    pub valid_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    pub best_epoch: usize,
    pub best_valid_error: f64,
    pub updates: usize,
    pub test: Option<Evaluation>,
    pub wall_clock_secs: f64,
}

impl RunMetrics {
    /// `epoch,split,loss,error,lr,seed` rows; test uses the best epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,split,loss,error,lr,seed\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},train,{},{},{},{}", e.epoch, e.train_loss, e.train_error, e.lr, self.seed);
            let _ = writeln!(out, "{},valid,{},{},{},{}", e.epoch, e.valid_loss, e.valid_error, e.lr, self.seed);
        }
        if let Some(t) = &self.test {
            let lr = self.epochs.iter().find(|e| e.epoch == self.best_epoch).map_or(f64::NAN, |e| e.lr);
            let _ = writeln!(out, "{},test,{},{},{},{}", self.best_epoch, t.loss, t.error, lr, self.seed);
        }
        out
    }
}

/// Clips the accumulated gradients, steps the optimizer and pins the NULL
/// embedding row. Returns the gradient norm before clipping.
pub fn apply_update(model: &mut EntNet, optimizer: &mut Optimizer, lr: f64, clip: f64) -> f64 {
    let norm = clip_global_norm(&mut model.params, clip);
    optimizer.step(&mut model.params, lr);
    model.zero_null_embedding();
    norm
}

/// Runs forward and backward for one sample and adds `scale` times its
/// gradients into the store. Returns the loss and whether the prediction was
/// right.
pub fn accumulate_sample(
    model: &mut EntNet,
    sample: &EncodedSample,
    scale: f64,
    dropout: Option<DropoutCtx<'_, seeds::Rng>>,
) -> Result<(f64, bool)> {
    let (loss, hit, grads) = {
        let mut tape = Tape::new(&model.params);
        let pass = model.forward(&mut tape, sample, dropout, false)?;
        let hit = ops::argmax(tape.value(pass.scores).data()) == sample.answer;
        let loss = model.loss(&mut tape, &pass, sample)?;
        let value = tape.value(loss).item();
        (value, hit, tape.backward(loss)?)
    };
    model.params.accumulate(&grads, scale)?;
    Ok((loss, hit))
}

/// Trains `model` in place. On return the model holds the parameters of the
/// epoch with the lowest validation error (earliest on ties).
pub fn train(
    model: &mut EntNet,
    train_set: &[EncodedSample],
    valid_set: &[EncodedSample],
    config: &TrainConfig,
    seed: u64,
) -> Result<RunMetrics> {
    train_with(model, train_set, valid_set, config, seed, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    model: &mut EntNet,
    train_set: &[EncodedSample],
    valid_set: &[EncodedSample],
    config: &TrainConfig,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<RunMetrics> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let start = Instant::now();
    let mut shuffle_rng = substream(seed, seeds::SHUFFLE);
    let mut dropout_rng = substream(seed, seeds::DROPOUT);
    let mut optimizer = config.make_optimizer();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut updates = 0;
    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, ParamStore)> = None;

    for epoch in 0..config.max_epochs {
        let lr_at_start = lr_schedule(config, epoch, updates);
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut hits = 0;
        for batch in order.chunks(config.batch_size) {
            model.params.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let dropout = (config.dropout > 0.0).then(|| DropoutCtx { rate: config.dropout, rng: &mut dropout_rng });
                let (loss, hit) = accumulate_sample(model, &train_set[i], scale, dropout)?;
                if !loss.is_finite() {
                    return Err(Error::DivergedLoss { epoch, update: updates, loss });
                }
                loss_sum += loss;
                hits += usize::from(hit);
            }
            let lr = lr_schedule(config, epoch, updates);
            apply_update(model, &mut optimizer, lr, config.clip);
            updates += 1;
        }
        let train_eval = Evaluation::from_counts(hits, train_set.len(), loss_sum / train_set.len() as f64);
        let valid = if valid_set.is_empty() { train_eval } else { evaluate_error(model, valid_set)? };
        let m = EpochMetrics {
            epoch,
            lr: lr_at_start,
            train_loss: train_eval.loss,
            train_error: train_eval.error,
            valid_loss: valid.loss,
            valid_error: valid.error,
        };
        on_epoch(&m);
        epochs.push(m);
        if best.as_ref().is_none_or(|(_, err, _)| valid.error < *err) {
            best = Some((epoch, valid.error, model.params.clone()));
        }
        let (best_epoch, _, _) = best.as_ref().expect("set above");
        if config.patience.is_some_and(|p| epoch - best_epoch >= p) {
            break;
        }
    }

    let (best_epoch, best_valid_error, params) = best.expect("at least one epoch");
    model.params = params;
    Ok(RunMetrics {
        seed,
        epochs,
        best_epoch,
        best_valid_error,
        updates,
        test: None,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Run with the lowest validation error; ties go to the lowest seed.
pub fn select_best_seed(runs: &[RunMetrics]) -> Result<&RunMetrics> {
    runs.iter()
        .min_by(|a, b| a.best_valid_error.total_cmp(&b.best_valid_error).then(a.seed.cmp(&b.seed)))
        .ok_or(Error::EmptyRuns)
}

/// Trains one model per seed and keeps the best by validation error.
///
/// Seeds are visited in ascending order. With `stop_at_perfect`, the search
/// ends once a run reaches zero validation error: no later seed can win the
/// tie.
pub fn train_seeds(
    model_config: &ModelConfig,
    train_set: &[EncodedSample],
    valid_set: &[EncodedSample],
    config: &TrainConfig,
    seeds: &[u64],
    stop_at_perfect: bool,
    mut on_epoch: impl FnMut(u64, &EpochMetrics),
) -> Result<(EntNet, Vec<RunMetrics>)> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut runs = Vec::new();
    let mut best: Option<EntNet> = None;
    for seed in sorted {
        let mut model = init_model(model_config.clone(), seed)?;
        let run = train_with(&mut model, train_set, valid_set, config, seed, |m| on_epoch(seed, m))?;
        let improves = select_best_seed(&runs).map_or(true, |b| run.best_valid_error < b.best_valid_error);
        if improves {
            best = Some(model);
        }
        let perfect = run.best_valid_error == 0.0;
        runs.push(run);
        if stop_at_perfect && perfect {
            break;
        }
    }
    let best = best.ok_or(Error::EmptyRuns)?;
    Ok((best, runs))
}
