//! The dynamic memory: `m` gated cells, each with a key `w_j` and content `h_j`.
//!
//! One step with encoded input `s` computes, for every slot independently,
//!
//! ```text
//! g_j  = sigmoid(<s, h_j> + <s, w_j>)
//! c_j  = phi(U h_j + V w_j + W s)
//! h_j <- h_j + g_j * c_j
//! h_j <- h_j / |h_j|            (general variant only)
//! ```
//!
//! `U`, `V`, `W` and the PReLU slopes are shared by all slots. The simplified
//! variant fixes `U = V = 0`, `W = I`, `phi = id` and skips normalization, so the
//! candidate is `s` itself. Keys never change during a story.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{NodeId, Tape, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    General,
    Simplified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Prelu,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryConfig {
    pub slots: usize,
    pub dim: usize,
    pub variant: Variant,
    pub activation: Activation,
    pub normalize: bool,
    pub keys_tied: bool,
}

impl MemoryConfig {
    pub fn general(slots: usize, dim: usize) -> Self {
        Self { slots, dim, variant: Variant::General, activation: Activation::Prelu, normalize: true, keys_tied: false }
    }

    pub fn simplified(slots: usize, dim: usize) -> Self {
        Self {
            slots,
            dim,
            variant: Variant::Simplified,
            activation: Activation::Identity,
            normalize: false,
            keys_tied: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.dim == 0 {
            return Err(Error::Config("memory needs at least one slot and one dimension".into()));
        }
        if self.variant == Variant::Simplified && (self.activation != Activation::Identity || self.normalize) {
            return Err(Error::Config("simplified memory requires identity phi and no normalization".into()));
        }
        Ok(())
    }
}

/// Slot contents and keys, both `m x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryState {
    pub slots: Tensor,
    pub keys: Tensor,
}

/// Eager-mode copies of the shared cell parameters (general variant).
#[derive(Debug, Clone, PartialEq)]
pub struct CellWeights {
    pub u: Tensor,
    pub v: Tensor,
    pub w: Tensor,
    pub slopes: Option<Tensor>,
}

/// Tape handles for the shared cell parameters.
#[derive(Debug, Clone, Copy)]
pub struct CellNodes {
    pub u: NodeId,
    pub v: NodeId,
    pub w: NodeId,
    pub slopes: Option<NodeId>,
}

impl CellNodes {
    pub fn constants(tape: &mut Tape<'_>, weights: &CellWeights) -> Self {
        Self {
            u: tape.constant(weights.u.clone()),
            v: tape.constant(weights.v.clone()),
            w: tape.constant(weights.w.clone()),
            slopes: weights.slopes.clone().map(|s| tape.constant(s)),
        }
    }
}

/// `g = sigmoid(H s + K s)`: one gate per slot.
pub fn gate_nodes(tape: &mut Tape<'_>, s_gate: NodeId, slots: NodeId, keys: NodeId) -> Result<NodeId> {
    let content = tape.matvec(slots, s_gate)?;
    let location = tape.matvec(keys, s_gate)?;
    let pre = tape.add(content, location)?;
    Ok(tape.sigmoid(pre))
}

/// `K V^T`, the key part of the candidate; constant over a story.
pub fn key_term_nodes(tape: &mut Tape<'_>, keys: NodeId, cell: &CellNodes) -> Result<NodeId> {
    tape.matmul_nt(keys, cell.v)
}

/// Candidate rows `phi(U h_j + V w_j + W s)`. Only for the general variant.
pub fn candidate_nodes(
    tape: &mut Tape<'_>,
    cell: &CellNodes,
    s_update: NodeId,
    slots: NodeId,
    key_term: NodeId,
) -> Result<NodeId> {
    let uh = tape.matmul_nt(slots, cell.u)?;
    let ws = tape.matvec(cell.w, s_update)?;
    let hk = tape.add(uh, key_term)?;
    let pre = tape.add_row(hk, ws)?;
    match cell.slopes {
        Some(slopes) => tape.prelu(pre, slopes),
        None => Ok(pre),
    }
}

/// Inputs to [`step_nodes`] that stay fixed over a story.
#[derive(Debug, Clone, Copy)]
pub struct StoryContext<'c> {
    pub config: &'c MemoryConfig,
    pub cell: Option<&'c CellNodes>,
    pub keys: NodeId,
    pub key_term: Option<NodeId>,
}

impl<'c> StoryContext<'c> {
    pub fn new(
        tape: &mut Tape<'_>,
        config: &'c MemoryConfig,
        cell: Option<&'c CellNodes>,
        keys: NodeId,
    ) -> Result<Self> {
        let key_term = match (config.variant, cell) {
            (Variant::General, Some(cell)) => Some(key_term_nodes(tape, keys, cell)?),
            (Variant::General, None) => {
                return Err(Error::Config("general memory needs cell weights".into()))
            }
            (Variant::Simplified, _) => None,
        };
        Ok(Self { config, cell, keys, key_term })
    }
}

/// Records one memory update and returns the new slot matrix.
pub fn step_nodes(
    tape: &mut Tape<'_>,
    ctx: &StoryContext<'_>,
    slots: NodeId,
    s_gate: NodeId,
    s_update: NodeId,
) -> Result<NodeId> {
    let g = gate_nodes(tape, s_gate, slots, ctx.keys)?;
    let update = match (ctx.cell, ctx.key_term) {
        (Some(cell), Some(key_term)) => {
            let cand = candidate_nodes(tape, cell, s_update, slots, key_term)?;
            tape.scale_rows(cand, g)?
        }
        _ => tape.outer(g, s_update)?,
    };
    let next = tape.add(slots, update)?;
    if ctx.config.normalize {
        tape.normalize_rows(next)
    } else {
        Ok(next)
    }
}

fn check_keys(keys: &Tensor) -> Result<()> {
    keys.dims2("keys").map(|_| ())
}

/// Initial state: every slot starts as a copy of its key.
pub fn init_state(keys: &Tensor) -> Result<MemoryState> {
    check_keys(keys)?;
    Ok(MemoryState { slots: keys.clone(), keys: keys.clone() })
}

fn check_state(state: &MemoryState, config: Option<&MemoryConfig>) -> Result<()> {
    if state.slots.shape() != state.keys.shape() {
        return Err(Error::DimensionMismatch(format!(
            "slots {:?} vs keys {:?}",
            state.slots.shape(),
            state.keys.shape()
        )));
    }
    if let Some(c) = config {
        if state.slots.shape() != [c.slots, c.dim] {
            return Err(Error::DimensionMismatch(format!(
                "state {:?} for a {}x{} memory",
                state.slots.shape(),
                c.slots,
                c.dim
            )));
        }
    }
    Ok(())
}

pub fn gate(s_gate: &Tensor, state: &MemoryState) -> Result<Tensor> {
    check_state(state, None)?;
    let mut tape = Tape::detached();
    let s = tape.constant(s_gate.clone());
    let h = tape.constant(state.slots.clone());
    let k = tape.constant(state.keys.clone());
    let g = gate_nodes(&mut tape, s, h, k)?;
    Ok(tape.value(g).clone())
}

pub fn candidate(
    s_update: &Tensor,
    state: &MemoryState,
    weights: Option<&CellWeights>,
    config: &MemoryConfig,
) -> Result<Tensor> {
    check_state(state, Some(config))?;
    match config.variant {
        Variant::Simplified => {
            let rows = vec![s_update.data().to_vec(); config.slots];
            Tensor::from_rows(&rows)
        }
        Variant::General => {
            let weights = weights.ok_or_else(|| Error::Config("general memory needs cell weights".into()))?;
            let mut tape = Tape::detached();
            let cell = CellNodes::constants(&mut tape, weights);
            let s = tape.constant(s_update.clone());
            let h = tape.constant(state.slots.clone());
            let k = tape.constant(state.keys.clone());
            let kt = key_term_nodes(&mut tape, k, &cell)?;
            let c = candidate_nodes(&mut tape, &cell, s, h, kt)?;
            Ok(tape.value(c).clone())
        }
    }
}

pub fn step(
    s_gate: &Tensor,
    s_update: &Tensor,
    state: &MemoryState,
    weights: Option<&CellWeights>,
    config: &MemoryConfig,
) -> Result<MemoryState> {
    let (last, _) = run_story(&[(s_gate.clone(), s_update.clone())], state, weights, config, false)?;
    Ok(last)
}

/// Applies [`step`] to each `(s_gate, s_update)` pair in order, starting from
/// `initial`. With `keep_trace`, also returns the state after every step.
pub fn run_story(
    inputs: &[(Tensor, Tensor)],
    initial: &MemoryState,
    weights: Option<&CellWeights>,
    config: &MemoryConfig,
    keep_trace: bool,
) -> Result<(MemoryState, Vec<MemoryState>)> {
    config.validate()?;
    check_state(initial, Some(config))?;
    let mut tape = Tape::detached();
    let cell = match (config.variant, weights) {
        (Variant::General, Some(w)) => Some(CellNodes::constants(&mut tape, w)),
        _ => None,
    };
    if config.variant == Variant::General && cell.as_ref().is_some_and(|c| c.slopes.is_some())
        != (config.activation == Activation::Prelu)
    {
        return Err(Error::Config("PReLU slopes must be given exactly when phi is PReLU".into()));
    }
    let keys = tape.constant(initial.keys.clone());
    let ctx = StoryContext::new(&mut tape, config, cell.as_ref(), keys)?;
    let mut slots = tape.constant(initial.slots.clone());
    let mut trace = Vec::new();
    for (s_gate, s_update) in inputs {
        let sg = tape.constant(s_gate.clone());
        let su = tape.constant(s_update.clone());
        slots = step_nodes(&mut tape, &ctx, slots, sg, su)?;
        if keep_trace {
            trace.push(MemoryState { slots: tape.value(slots).clone(), keys: initial.keys.clone() });
        }
    }
    let last = MemoryState { slots: tape.value(slots).clone(), keys: initial.keys.clone() };
    Ok((last, trace))
}
