//! What each memory slot holds, read through the decoder: the cosine
//! similarity between `phi(H h_j)` and every decoder row `r_i`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::encoding::{Vocabulary, NULL_INDEX};
use crate::error::{Error, Result};
use crate::memory::MemoryState;
use crate::numerics::{ops, Tensor, NORM_EPS};
use crate::output::OutputWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub token: String,
    pub index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotAffinity {
    pub slot: usize,
    /// Token the slot key is tied to, if any.
    pub key: Option<String>,
    /// Highest affinity first.
    pub neighbors: Vec<Neighbor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffinityReport {
    pub slots: Vec<SlotAffinity>,
}

/// `phi(H h_j)` for every slot, one row each.
pub fn slot_readouts(state: &MemoryState, weights: &OutputWeights) -> Result<Tensor> {
    let projected = state.slots.matmul_nt(&weights.h)?;
    match &weights.slopes {
        Some(s) => ops::prelu(&projected, s),
        None => Ok(projected),
    }
}

/// Affinity of every slot (rows) with every decoder row (columns). Decoder
/// rows with near-zero norm score 0.
pub fn affinity_matrix(state: &MemoryState, weights: &OutputWeights) -> Result<Tensor> {
    let readouts = slot_readouts(state, weights)?;
    let (m, v) = (readouts.rows(), weights.r.rows());
    let mut out = Tensor::zeros(&[m, v]);
    for j in 0..m {
        let a = readouts.row(j);
        let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= NORM_EPS {
            return Err(Error::NearZeroNorm { norm, eps: NORM_EPS });
        }
        for i in 0..v {
            let r = weights.r.row(i);
            if r.iter().map(|x| x * x).sum::<f64>().sqrt() > NORM_EPS {
                out.row_mut(j)[i] = ops::cosine(a, r)?;
            }
        }
    }
    Ok(out)
}

/// Top `k` vocabulary entries per slot by affinity, skipping the null token.
/// Ties go to the lower vocabulary index. `keys` names the token each slot
/// is tied to.
pub fn slot_nearest_words(
    state: &MemoryState,
    weights: &OutputWeights,
    k: usize,
    vocab: &Vocabulary,
    keys: Option<&[usize]>,
) -> Result<AffinityReport> {
    let aff = affinity_matrix(state, weights)?;
    let v = aff.cols();
    if v > vocab.len() {
        return Err(Error::DimensionMismatch(format!("decoder has {v} rows for {} tokens", vocab.len())));
    }
    if keys.is_some_and(|k| k.len() != aff.rows()) {
        return Err(Error::DimensionMismatch("one key token per slot".into()));
    }
    let slots = (0..aff.rows())
        .map(|j| {
            let row = aff.row(j);
            let mut order: Vec<usize> = (0..v).filter(|&i| i != NULL_INDEX).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
            SlotAffinity {
                slot: j,
                key: keys.map(|k| vocab.token(k[j]).to_string()),
                neighbors: order
                    .into_iter()
                    .take(k)
                    .map(|i| Neighbor { token: vocab.token(i).to_string(), index: i, score: row[i] })
                    .collect(),
            }
        })
        .collect();
    Ok(AffinityReport { slots })
}

impl AffinityReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Aligned text table, one line per slot.
impl fmt::Display for AffinityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.slots.iter().map(|s| s.neighbors.len()).max().unwrap_or(0);
        let cell = |n: &Neighbor| format!("{} ({:.3})", n.token, n.score);
        let key_w = self.slots.iter().map(|s| s.key.as_deref().unwrap_or("-").len()).max().unwrap_or(1).max(3);
        let mut widths = vec![0; k];
        for s in &self.slots {
            for (w, n) in widths.iter_mut().zip(&s.neighbors) {
                *w = (*w).max(cell(n).len());
            }
        }
        for (i, w) in widths.iter_mut().enumerate() {
            *w = (*w).max(format!("{}-NN", i + 1).len());
        }
        write!(f, "{:<4}  {:<key_w$}", "slot", "key")?;
        for (i, w) in widths.iter().enumerate() {
            write!(f, "  {:<w$}", format!("{}-NN", i + 1))?;
        }
        writeln!(f)?;
        for s in &self.slots {
            write!(f, "{:<4}  {:<key_w$}", s.slot, s.key.as_deref().unwrap_or("-"))?;
            for (n, w) in s.neighbors.iter().zip(&widths) {
                write!(f, "  {:<w$}", cell(n))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
