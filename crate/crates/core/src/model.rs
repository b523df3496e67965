//! The assembled network: encoder, dynamic memory and readout over one
//! parameter store.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::encoding::{encode_nodes, NULL_INDEX};
use crate::error::{Error, Result};
use crate::memory::{step_nodes, Activation, CellNodes, CellWeights, MemoryConfig, MemoryState, StoryContext, Variant};
use crate::numerics::{ops, NodeId, ParamId, ParamStore, Tape, Tensor};
use crate::output::{attention_score_nodes, predict_from_attention, respond_nodes, AnswerDistribution, OutputNodes, OutputWeights};

pub const INIT_STD: f64 = 0.1;

#[derive(Clone, Copy)]
enum Fill {
    Gaussian,
    Ones,
}

/// Where slot keys come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KeyMode {
    /// Free parameters.
    Free,
    /// Fixed embedding rows, one vocabulary index per slot.
    Tied(Vec<usize>),
    /// The embedding rows of each sample's candidate list.
    Candidates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Readout {
    /// Full vocabulary scores through `R phi(q + H u)`.
    Decoder,
    /// Attention over candidate-tied slots is the answer distribution.
    Candidates,
}

/// Sentence encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoder {
    /// Learned per-position multiplicative masks.
    #[default]
    Mask,
    /// Plain sum of word embeddings, no mask parameters.
    Bow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub memory: MemoryConfig,
    /// Padded sentence (or window) length.
    pub sentence_len: usize,
    pub query_len: usize,
    pub keys: KeyMode,
    pub readout: Readout,
    /// Separate mask sets for the gate and the update inputs.
    pub dual_encoding: bool,
    pub output_activation: Activation,
    #[serde(default)]
    pub encoder: Encoder,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.memory.validate()?;
        if self.vocab_size < 2 || self.sentence_len == 0 || self.query_len == 0 {
            return Err(Error::Config("vocabulary and sentence lengths must be positive".into()));
        }
        let tied = !matches!(self.keys, KeyMode::Free);
        if tied != self.memory.keys_tied {
            return Err(Error::Config("memory.keys_tied must match the key mode".into()));
        }
        if let KeyMode::Tied(idx) = &self.keys {
            if idx.len() != self.memory.slots {
                return Err(Error::Config(format!("{} tied keys for {} slots", idx.len(), self.memory.slots)));
            }
            if idx.iter().any(|&i| i >= self.vocab_size || i == NULL_INDEX) {
                return Err(Error::Config("tied keys must be non-null vocabulary rows".into()));
            }
        }
        if self.dual_encoding && self.encoder == Encoder::Bow {
            return Err(Error::Config("dual encodings need mask encoders".into()));
        }
        if self.readout == Readout::Candidates && self.keys != KeyMode::Candidates {
            return Err(Error::UntiedKeys);
        }
        Ok(())
    }

    /// Closed-form number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let v = self.vocab_size;
        let d = self.memory.dim;
        let mut n = v * d;
        if self.encoder == Encoder::Mask {
            n += self.sentence_len * d + self.query_len * d;
        }
        if self.dual_encoding {
            n += self.sentence_len * d;
        }
        if self.keys == KeyMode::Free {
            n += self.memory.slots * d;
        }
        if self.memory.variant == Variant::General {
            n += 3 * d * d;
            if self.memory.activation == Activation::Prelu {
                n += d;
            }
        }
        if self.readout == Readout::Decoder {
            n += v * d + d * d;
            if self.output_activation == Activation::Prelu {
                n += d;
            }
        }
        n
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellIds {
    pub u: ParamId,
    pub v: ParamId,
    pub w: ParamId,
    pub slopes: Option<ParamId>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputIds {
    pub r: ParamId,
    pub h: ParamId,
    pub slopes: Option<ParamId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamIds {
    pub embedding: ParamId,
    pub story_masks: Option<ParamId>,
    pub gate_masks: Option<ParamId>,
    pub query_masks: Option<ParamId>,
    pub keys: Option<ParamId>,
    pub cell: Option<CellIds>,
    pub output: Option<OutputIds>,
}

/// One story/question pair as vocabulary indices.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedSample {
    /// Each sentence padded to the model's sentence length.
    pub context: Vec<Vec<usize>>,
    pub query: Vec<usize>,
    /// Vocabulary index for decoder readout; position in `candidates` otherwise.
    pub answer: usize,
    pub candidates: Option<Vec<usize>>,
}

/// Handles into a recorded forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub attention: NodeId,
    /// Logits over the answer space (vocabulary or candidates).
    pub scores: NodeId,
    pub slots: NodeId,
    pub keys: NodeId,
    pub trace: Vec<NodeId>,
}

/// Dropout applied to gathered embedding rows during training.
pub struct DropoutCtx<'r, R: Rng + ?Sized> {
    pub rate: f64,
    pub rng: &'r mut R,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EntNet {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub ids: ParamIds,
}

impl EntNet {
    /// Gaussian(0, 0.1) weights; masks and PReLU slopes at 1; NULL row at 0.
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        Self::build(config, |fill, shape| match fill {
            Fill::Gaussian => {
                let mut t = Tensor::zeros(shape);
                t.data_mut().iter_mut().for_each(|x| *x = normal.sample(&mut *rng));
                t
            }
            Fill::Ones => Tensor::filled(shape, 1.0),
        })
        .map(|mut net| {
            net.zero_null_embedding();
            net
        })
    }

    fn build(config: ModelConfig, mut make: impl FnMut(Fill, &[usize]) -> Tensor) -> Result<Self> {
        config.validate()?;
        let (v, d, m) = (config.vocab_size, config.memory.dim, config.memory.slots);
        let (k, kq) = (config.sentence_len, config.query_len);
        let mut params = ParamStore::new();
        let mut add = |name: &str, fill: Fill, shape: &[usize]| params.add(name, make(fill, shape));

        let embedding = add("encoding.embedding", Fill::Gaussian, &[v, d]);
        let masked = config.encoder == Encoder::Mask;
        let story_masks = masked.then(|| add("encoding.story_masks", Fill::Ones, &[k, d]));
        let gate_masks = config.dual_encoding.then(|| add("encoding.gate_masks", Fill::Ones, &[k, d]));
        let query_masks = masked.then(|| add("encoding.query_masks", Fill::Ones, &[kq, d]));
        let keys = (config.keys == KeyMode::Free).then(|| add("memory.keys", Fill::Gaussian, &[m, d]));
        let cell = (config.memory.variant == Variant::General).then(|| CellIds {
            u: add("memory.U", Fill::Gaussian, &[d, d]),
            v: add("memory.V", Fill::Gaussian, &[d, d]),
            w: add("memory.W", Fill::Gaussian, &[d, d]),
            slopes: (config.memory.activation == Activation::Prelu).then(|| add("memory.prelu", Fill::Ones, &[d])),
        });
        let output = (config.readout == Readout::Decoder).then(|| OutputIds {
            r: add("output.R", Fill::Gaussian, &[v, d]),
            h: add("output.H", Fill::Gaussian, &[d, d]),
            slopes: (config.output_activation == Activation::Prelu).then(|| add("output.prelu", Fill::Ones, &[d])),
        });
        let ids = ParamIds { embedding, story_masks, gate_masks, query_masks, keys, cell, output };
        Ok(Self { config, params, ids })
    }

    /// Rebuilds parameter handles for a store whose names follow [`EntNet::init`].
    pub fn from_params(config: ModelConfig, params: ParamStore) -> Result<Self> {
        let template = Self::build(config.clone(), |_, shape| Tensor::zeros(shape))?;
        if template.params.len() != params.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameters, found {}",
                template.params.len(),
                params.len()
            )));
        }
        for (t, p) in template.params.iter().zip(params.iter()) {
            if t.name != p.name || t.value.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    p.name,
                    p.value.shape(),
                    t.name,
                    t.value.shape()
                )));
            }
        }
        Ok(Self { config, params, ids: template.ids })
    }

    pub fn zero_null_embedding(&mut self) {
        let emb = self.params.get_mut(self.ids.embedding);
        emb.value.row_mut(NULL_INDEX).fill(0.0);
    }

    pub fn cell_weights(&self) -> Option<CellWeights> {
        self.ids.cell.map(|c| CellWeights {
            u: self.params.value(c.u).clone(),
            v: self.params.value(c.v).clone(),
            w: self.params.value(c.w).clone(),
            slopes: c.slopes.map(|s| self.params.value(s).clone()),
        })
    }

    pub fn output_weights(&self) -> Option<OutputWeights> {
        self.ids.output.map(|o| OutputWeights {
            r: self.params.value(o.r).clone(),
            h: self.params.value(o.h).clone(),
            slopes: o.slopes.map(|s| self.params.value(s).clone()),
        })
    }

    fn check_sample(&self, sample: &EncodedSample) -> Result<()> {
        let c = &self.config;
        for s in &sample.context {
            if s.len() != c.sentence_len {
                return Err(Error::DimensionMismatch(format!("sentence of {} tokens, expected {}", s.len(), c.sentence_len)));
            }
        }
        if sample.query.len() != c.query_len {
            return Err(Error::DimensionMismatch(format!("query of {} tokens, expected {}", sample.query.len(), c.query_len)));
        }
        let all = sample.context.iter().flatten().chain(&sample.query).chain(sample.candidates.iter().flatten());
        for &i in all {
            if i >= c.vocab_size {
                return Err(Error::UnknownToken(format!("#{i}")));
            }
        }
        let answer_space = match c.readout {
            Readout::Decoder => c.vocab_size,
            Readout::Candidates => {
                let cands = sample.candidates.as_ref().ok_or(Error::UntiedKeys)?;
                if cands.len() != c.memory.slots {
                    return Err(Error::BadCandidateCount(cands.len()));
                }
                cands.len()
            }
        };
        if sample.answer >= answer_space {
            return Err(Error::DimensionMismatch(format!("answer {} outside {answer_space}", sample.answer)));
        }
        Ok(())
    }

    fn embed<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        idx: &[usize],
        dropout: &mut Option<DropoutCtx<'_, R>>,
    ) -> Result<NodeId> {
        let rows = tape.gather(self.ids.embedding, idx)?;
        match dropout {
            Some(ctx) if ctx.rate > 0.0 => {
                let mask = ops::dropout_mask(tape.value(rows).shape(), ctx.rate, ctx.rng)?;
                let mask = tape.constant(mask);
                tape.mul(rows, mask)
            }
            _ => Ok(rows),
        }
    }

    /// Records the full network for one sample.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        tape: &mut Tape<'_>,
        sample: &EncodedSample,
        mut dropout: Option<DropoutCtx<'_, R>>,
        keep_trace: bool,
    ) -> Result<ForwardPass> {
        self.check_sample(sample)?;
        let ids = &self.ids;
        let story_masks = ids.story_masks.map(|m| tape.param(m)).transpose()?;
        let gate_masks = ids.gate_masks.map(|g| tape.param(g)).transpose()?;
        let keys = match &self.config.keys {
            KeyMode::Free => tape.param(ids.keys.expect("free keys are registered"))?,
            KeyMode::Tied(idx) => tape.gather(ids.embedding, idx)?,
            KeyMode::Candidates => {
                tape.gather(ids.embedding, sample.candidates.as_ref().ok_or(Error::UntiedKeys)?)?
            }
        };
        let cell = match ids.cell {
            Some(c) => Some(CellNodes {
                u: tape.param(c.u)?,
                v: tape.param(c.v)?,
                w: tape.param(c.w)?,
                slopes: c.slopes.map(|s| tape.param(s)).transpose()?,
            }),
            None => None,
        };
        let ctx = StoryContext::new(tape, &self.config.memory, cell.as_ref(), keys)?;

        let mut slots = keys;
        let mut trace = Vec::new();
        for sentence in &sample.context {
            let rows = self.embed(tape, sentence, &mut dropout)?;
            let s_update = encode_or_sum(tape, rows, story_masks)?;
            let s_gate = match gate_masks {
                Some(g) => encode_nodes(tape, rows, g)?,
                None => s_update,
            };
            slots = step_nodes(tape, &ctx, slots, s_gate, s_update)?;
            if keep_trace {
                trace.push(slots);
            }
        }

        let qrows = self.embed(tape, &sample.query, &mut dropout)?;
        let query_masks = ids.query_masks.map(|m| tape.param(m)).transpose()?;
        let q = encode_or_sum(tape, qrows, query_masks)?;
        let (attention, scores) = match self.config.readout {
            Readout::Decoder => {
                let o = ids.output.expect("decoder readout is registered");
                let out = OutputNodes {
                    r: tape.param(o.r)?,
                    h: tape.param(o.h)?,
                    slopes: o.slopes.map(|s| tape.param(s)).transpose()?,
                };
                respond_nodes(tape, &out, q, slots)?
            }
            Readout::Candidates => {
                let scores = attention_score_nodes(tape, q, slots)?;
                (tape.softmax(scores), scores)
            }
        };
        Ok(ForwardPass { attention, scores, slots, keys, trace })
    }

    /// Cross-entropy of the answer scores against `sample.answer`.
    pub fn loss(&self, tape: &mut Tape<'_>, pass: &ForwardPass, sample: &EncodedSample) -> Result<NodeId> {
        tape.softmax_cross_entropy(pass.scores, sample.answer)
    }

    /// Inference for one sample; the answer is a vocabulary index (decoder)
    /// or a candidate position (tied candidates).
    pub fn predict(&self, sample: &EncodedSample) -> Result<Prediction> {
        let mut tape = Tape::new(&self.params);
        let pass = self.forward::<crate::seeds::Rng>(&mut tape, sample, None, false)?;
        let scores = tape.value(pass.scores).clone();
        let attention = tape.value(pass.attention).clone();
        let loss = tape.softmax_cross_entropy(pass.scores, sample.answer)?;
        let answer = match self.config.readout {
            Readout::Decoder => ops::argmax(scores.data()),
            Readout::Candidates => predict_from_attention(attention.data(), self.config.memory.keys_tied)?,
        };
        Ok(Prediction {
            answer,
            distribution: AnswerDistribution::from_scores(scores),
            attention,
            loss: tape.value(loss).item(),
        })
    }

    /// Memory after reading the context, plus the state after each sentence.
    pub fn read_story(&self, sample: &EncodedSample) -> Result<(MemoryState, Vec<MemoryState>)> {
        let mut tape = Tape::new(&self.params);
        let pass = self.forward::<crate::seeds::Rng>(&mut tape, sample, None, true)?;
        let keys = tape.value(pass.keys).clone();
        let state = |n: NodeId| MemoryState { slots: tape.value(n).clone(), keys: keys.clone() };
        Ok((state(pass.slots), pass.trace.iter().map(|&n| state(n)).collect()))
    }
}

fn encode_or_sum(tape: &mut Tape<'_>, rows: NodeId, masks: Option<NodeId>) -> Result<NodeId> {
    match masks {
        Some(m) => encode_nodes(tape, rows, m),
        None => Ok(tape.sum_rows(rows)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub answer: usize,
    pub distribution: AnswerDistribution,
    pub attention: Tensor,
    pub loss: f64,
}
