//! Central finite-difference check of the tape's parameter gradients.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::memory::{Activation, MemoryConfig, Variant};
use crate::model::{EncodedSample, Encoder, EntNet, KeyMode, ModelConfig, Readout};
use crate::numerics::Tape;

pub const FD_STEP: f64 = 1e-4;
/// Gradients smaller than this are compared in absolute terms.
pub const REL_FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
    pub checked: usize,
    /// Entries skipped because the perturbation flipped a PReLU branch, where
    /// a finite difference does not approximate the derivative.
    pub kinked: usize,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Loss and the PReLU branch pattern it was computed on.
fn loss_of(model: &EntNet, sample: &EncodedSample) -> Result<(f64, Vec<bool>)> {
    let mut tape = Tape::new(&model.params);
    let pass = model.forward::<crate::seeds::Rng>(&mut tape, sample, None, false)?;
    let loss = model.loss(&mut tape, &pass, sample)?;
    Ok((tape.value(loss).item(), tape.prelu_branches()))
}

/// Compares every parameter entry's analytic gradient with the five-point
/// central difference of step `step`:
///
/// ```text
/// f'(x) ~ (f(x - 2h) - 8 f(x - h) + 8 f(x + h) - f(x + 2h)) / 12h
/// ```
///
/// Its truncation error is `O(h^4)`, so curvature near small slot norms does
/// not swamp the comparison the way the two-point `O(h^2)` formula does.
pub fn check_model(model: &mut EntNet, sample: &EncodedSample, step: f64, floor: f64) -> Result<GradCheckReport> {
    let (grads, branches) = {
        let mut tape = Tape::new(&model.params);
        let pass = model.forward::<crate::seeds::Rng>(&mut tape, sample, None, false)?;
        let loss = model.loss(&mut tape, &pass, sample)?;
        let branches = tape.prelu_branches();
        (tape.backward(loss)?, branches)
    };
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: String::new(), checked: 0, kinked: 0 };
    let ids: Vec<_> = model.params.ids().collect();
    for id in ids {
        let n = model.params.get(id).value.len();
        for k in 0..n {
            let analytic = grads.get(id).map_or(0.0, |g| g.data()[k]);
            let orig = model.params.get(id).value.data()[k];
            let mut f = [0.0; 4];
            let mut kinked = false;
            for (slot, offset) in f.iter_mut().zip([-2.0, -1.0, 1.0, 2.0]) {
                model.params.get_mut(id).value.data_mut()[k] = orig + offset * step;
                let (loss, b) = loss_of(model, sample)?;
                *slot = loss;
                kinked |= b != branches;
            }
            model.params.get_mut(id).value.data_mut()[k] = orig;
            if kinked {
                report.kinked += 1;
                continue;
            }
            let numeric = (f[0] - 8.0 * f[1] + 8.0 * f[2] - f[3]) / (12.0 * step);
            let rel = relative_error(analytic, numeric, floor);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst.is_empty() {
                report.max_rel_error = rel;
                report.worst = format!("{}[{k}]", model.params.get(id).name);
            }
        }
    }
    Ok(report)
}

/// A small random model and a `t`-sentence sample over a 7-token vocabulary.
pub fn random_case<R: Rng + ?Sized>(
    d: usize,
    m: usize,
    t: usize,
    variant: Variant,
    memory_phi: Activation,
    output_phi: Activation,
    rng: &mut R,
) -> Result<(EntNet, EncodedSample)> {
    let vocab_size = 7;
    let memory = match variant {
        Variant::General => MemoryConfig { activation: memory_phi, ..MemoryConfig::general(m, d) },
        Variant::Simplified => MemoryConfig::simplified(m, d),
    };
    let config = ModelConfig {
        vocab_size,
        memory,
        sentence_len: 3,
        query_len: 2,
        keys: KeyMode::Free,
        readout: Readout::Decoder,
        dual_encoding: false,
        output_activation: output_phi,
        encoder: Encoder::Mask,
    };
    let mut model = EntNet::init(config, rng)?;
    // Move masks and slopes off their initial ones so every branch of the
    // PReLU and every mask entry carries a distinct gradient.
    for p in model.params.iter_mut() {
        if p.name.contains("masks") || p.name.ends_with("prelu") {
            p.value.data_mut().iter_mut().for_each(|x| *x = rng.random_range(0.2..1.5));
        }
    }
    let token = |rng: &mut R| rng.random_range(0..vocab_size);
    let sample = EncodedSample {
        context: (0..t).map(|_| (0..3).map(|_| token(rng)).collect()).collect(),
        query: (0..2).map(|_| token(rng)).collect(),
        answer: rng.random_range(1..vocab_size),
        candidates: None,
    };
    Ok((model, sample))
}
