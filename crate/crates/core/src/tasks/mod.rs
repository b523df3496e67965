//! Datasets: the grid world generator, bAbI text files and CBT windows.

pub mod babi;
pub mod cbt;
pub mod world;

use serde::{Deserialize, Serialize};

use crate::encoding::{pad_to_length, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{EncodedSample, Readout};

/// A story, a question about it and its answer, as tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QASample {
    /// Sentences (or windows), oldest first.
    pub context: Vec<Vec<String>>,
    pub query: Vec<String>,
    pub answer: String,
    pub candidates: Option<Vec<String>>,
    pub task_id: usize,
}

/// Every token of `samples`, first occurrence first, added to `vocab`.
pub fn extend_vocabulary(vocab: &mut Vocabulary, samples: &[QASample]) {
    for s in samples {
        for tok in s.context.iter().flatten().chain(&s.query) {
            vocab.insert(tok);
        }
        vocab.insert(&s.answer);
        for c in s.candidates.iter().flatten() {
            vocab.insert(c);
        }
    }
}

pub fn build_vocabulary(splits: &[&[QASample]]) -> Result<Vocabulary> {
    let mut vocab = Vocabulary::default();
    for samples in splits {
        extend_vocabulary(&mut vocab, samples);
    }
    if vocab.len() == 1 {
        return Err(Error::EmptyCorpus);
    }
    Ok(vocab)
}

/// Longest sentence and longest query over all splits.
pub fn max_lengths(splits: &[&[QASample]]) -> (usize, usize) {
    let mut k = 1;
    let mut kq = 1;
    for s in splits.iter().flat_map(|s| s.iter()) {
        k = s.context.iter().map(Vec::len).fold(k, usize::max);
        kq = kq.max(s.query.len());
    }
    (k, kq)
}

/// Maps tokens to padded index lists. With a candidate readout the answer
/// becomes its position in the candidate list.
pub fn encode_sample(
    sample: &QASample,
    vocab: &Vocabulary,
    sentence_len: usize,
    query_len: usize,
    readout: Readout,
) -> Result<EncodedSample> {
    let context = sample
        .context
        .iter()
        .map(|s| pad_to_length(&vocab.indices(s)?, sentence_len))
        .collect::<Result<Vec<_>>>()?;
    let query = pad_to_length(&vocab.indices(&sample.query)?, query_len)?;
    let candidates = sample.candidates.as_ref().map(|c| vocab.indices(c)).transpose()?;
    let answer = match readout {
        Readout::Decoder => vocab.index(&sample.answer)?,
        Readout::Candidates => {
            let cands = sample.candidates.as_ref().ok_or(Error::UntiedKeys)?;
            cands
                .iter()
                .position(|c| *c == sample.answer)
                .ok_or_else(|| Error::UnknownToken(format!("answer {} is not a candidate", sample.answer)))?
        }
    };
    Ok(EncodedSample { context, query, answer, candidates })
}

pub fn encode_samples(
    samples: &[QASample],
    vocab: &Vocabulary,
    sentence_len: usize,
    query_len: usize,
    readout: Readout,
) -> Result<Vec<EncodedSample>> {
    samples.iter().map(|s| encode_sample(s, vocab, sentence_len, query_len, readout)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::NULL_INDEX;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn sample() -> QASample {
        QASample {
            context: vec![toks("mary went to the garden"), toks("john ran")],
            query: toks("where is mary ?"),
            answer: "garden".into(),
            candidates: None,
            task_id: 1,
        }
    }

    #[test]
    fn vocabulary_and_lengths() {
        let s = [sample()];
        let v = build_vocabulary(&[&s]).unwrap();
        assert_eq!(v.index("mary").unwrap(), 1);
        assert_eq!(v.len(), 11);
        assert_eq!(max_lengths(&[&s]), (5, 4));
        assert!(matches!(build_vocabulary(&[&[]]), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn encodes_with_padding() {
        let s = sample();
        let v = build_vocabulary(&[std::slice::from_ref(&s)]).unwrap();
        let e = encode_sample(&s, &v, 6, 5, Readout::Decoder).unwrap();
        assert_eq!(e.context[1], vec![6, 7, NULL_INDEX, NULL_INDEX, NULL_INDEX, NULL_INDEX]);
        assert_eq!(e.answer, v.index("garden").unwrap());
        assert!(matches!(encode_sample(&s, &v, 4, 5, Readout::Decoder), Err(Error::TooLong { .. })));
        assert!(matches!(encode_sample(&s, &v, 6, 5, Readout::Candidates), Err(Error::UntiedKeys)));
    }

    #[test]
    fn candidate_answers_are_positions() {
        let mut s = sample();
        s.candidates = Some(toks("john mary garden"));
        let v = build_vocabulary(&[std::slice::from_ref(&s)]).unwrap();
        let e = encode_sample(&s, &v, 5, 4, Readout::Candidates).unwrap();
        assert_eq!(e.answer, 2);
        assert_eq!(e.candidates.unwrap(), v.indices(&toks("john mary garden")).unwrap());
        s.answer = "ran".into();
        assert!(encode_sample(&s, &v, 5, 4, Readout::Candidates).is_err());
    }
}
