//! Query readout: attention over slots, a one-hop read, and vocabulary scores.
//!
//! ```text
//! p_j = softmax_j(<q, h_j>)
//! u   = sum_j p_j h_j
//! y   = R phi(q + H u)
//! ```

use crate::error::{Error, Result};
use crate::memory::MemoryState;
use crate::numerics::{ops, NodeId, Tape, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct OutputWeights {
    /// `|answers| x d` decoder.
    pub r: Tensor,
    pub h: Tensor,
    pub slopes: Option<Tensor>,
}

#[derive(Debug, Clone, Copy)]
pub struct OutputNodes {
    pub r: NodeId,
    pub h: NodeId,
    pub slopes: Option<NodeId>,
}

impl OutputNodes {
    pub fn constants(tape: &mut Tape<'_>, w: &OutputWeights) -> Self {
        Self {
            r: tape.constant(w.r.clone()),
            h: tape.constant(w.h.clone()),
            slopes: w.slopes.clone().map(|s| tape.constant(s)),
        }
    }
}

/// Scores with their softmax.
#[derive(Debug, Clone, PartialEq)]
pub struct AnswerDistribution {
    pub scores: Tensor,
    pub probabilities: Tensor,
}

impl AnswerDistribution {
    pub fn from_scores(scores: Tensor) -> Self {
        let probabilities = ops::softmax(&scores);
        Self { scores, probabilities }
    }

    pub fn argmax(&self) -> usize {
        ops::argmax(self.scores.data())
    }
}

pub fn attention_nodes(tape: &mut Tape<'_>, q: NodeId, slots: NodeId) -> Result<NodeId> {
    let scores = tape.matvec(slots, q)?;
    Ok(tape.softmax(scores))
}

/// Slot scores `<q, h_j>` before the softmax.
pub fn attention_score_nodes(tape: &mut Tape<'_>, q: NodeId, slots: NodeId) -> Result<NodeId> {
    tape.matvec(slots, q)
}

/// Returns `(p, y)`.
pub fn respond_nodes(
    tape: &mut Tape<'_>,
    weights: &OutputNodes,
    q: NodeId,
    slots: NodeId,
) -> Result<(NodeId, NodeId)> {
    let p = attention_nodes(tape, q, slots)?;
    let u = tape.vecmat(p, slots)?;
    let hu = tape.matvec(weights.h, u)?;
    let z = tape.add(q, hu)?;
    let z = match weights.slopes {
        Some(s) => tape.prelu(z, s)?,
        None => z,
    };
    let y = tape.matvec(weights.r, z)?;
    Ok((p, y))
}

pub fn attention_weights(q: &Tensor, state: &MemoryState) -> Result<Tensor> {
    let mut tape = Tape::detached();
    let qn = tape.constant(q.clone());
    let h = tape.constant(state.slots.clone());
    let p = attention_nodes(&mut tape, qn, h)?;
    Ok(tape.value(p).clone())
}

/// Answer logits `y` for query `q`.
pub fn respond(q: &Tensor, state: &MemoryState, weights: &OutputWeights) -> Result<Tensor> {
    let mut tape = Tape::detached();
    let nodes = OutputNodes::constants(&mut tape, weights);
    let qn = tape.constant(q.clone());
    let h = tape.constant(state.slots.clone());
    let (_, y) = respond_nodes(&mut tape, &nodes, qn, h)?;
    Ok(tape.value(y).clone())
}

/// Picks the most attended slot as the answer when slots are tied one-to-one
/// to candidates. Ties go to the lowest slot index.
pub fn predict_from_attention(p: &[f64], keys_tied: bool) -> Result<usize> {
    if !keys_tied {
        return Err(Error::UntiedKeys);
    }
    if p.is_empty() {
        return Err(Error::DimensionMismatch("empty attention".into()));
    }
    Ok(ops::argmax(p))
}
