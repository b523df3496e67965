//! Vocabulary handling and the multiplicative-mask sentence encoder.
//!
//! A sentence of `K` (padded) token indices is summarized as
//! `s = sum_i f_i * e_{idx_i}`, where `e` are embedding rows and `f_i` are
//! learned per-position masks. With every mask entry equal to one this is a
//! bag of words. Index 0 is the NULL padding symbol; its embedding row is held
//! at zero, so padding never contributes.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::numerics::{NodeId, Tape, Tensor};

pub const NULL_TOKEN: &str = "<null>";
pub const NULL_INDEX: usize = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        let mut index = HashMap::new();
        index.insert(NULL_TOKEN.to_string(), NULL_INDEX);
        Self { tokens: vec![NULL_TOKEN.to_string()], index }
    }
}

impl Vocabulary {
    /// Builds a vocabulary in first-occurrence order over all tokens of `corpus`.
    pub fn build<I, S, T>(corpus: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: IntoIterator<Item = T>,
        T: AsRef<str>,
    {
        let mut vocab = Self::default();
        let mut seen_any = false;
        for sentence in corpus {
            for token in sentence {
                seen_any = true;
                vocab.insert(token.as_ref());
            }
        }
        if !seen_any {
            return Err(Error::EmptyCorpus);
        }
        Ok(vocab)
    }

    /// Adds `token` if absent and returns its index.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&i) = self.index.get(token) {
            return i;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= 1
    }

    pub fn index(&self, token: &str) -> Result<usize> {
        self.index.get(token).copied().ok_or_else(|| Error::UnknownToken(token.to_string()))
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn indices<T: AsRef<str>>(&self, tokens: &[T]) -> Result<Vec<usize>> {
        tokens.iter().map(|t| self.index(t.as_ref())).collect()
    }

    /// `token<TAB>index` lines in index order.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            out.push_str(t);
            out.push('\t');
            out.push_str(&i.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut vocab = Self { tokens: Vec::new(), index: HashMap::new() };
        for (n, line) in text.lines().enumerate() {
            let malformed = |reason: &str| Error::MalformedLine { line: n + 1, reason: reason.into() };
            let (token, idx) = line.rsplit_once('\t').ok_or_else(|| malformed("missing tab"))?;
            let idx: usize = idx.parse().map_err(|_| malformed("bad index"))?;
            if idx != vocab.tokens.len() || vocab.index.contains_key(token) {
                return Err(malformed("indices must be dense, ordered and unique"));
            }
            vocab.index.insert(token.to_string(), idx);
            vocab.tokens.push(token.to_string());
        }
        if vocab.tokens.first().map(String::as_str) != Some(NULL_TOKEN) {
            return Err(Error::MalformedLine { line: 1, reason: "index 0 must be the null token".into() });
        }
        Ok(vocab)
    }
}

/// Right-pads `indices` with NULL up to length `k`.
pub fn pad_to_length(indices: &[usize], k: usize) -> Result<Vec<usize>> {
    if indices.len() > k {
        return Err(Error::TooLong { len: indices.len(), max: k });
    }
    let mut out = indices.to_vec();
    out.resize(k, NULL_INDEX);
    Ok(out)
}

/// Records `sum_i masks_i * rows_i` on the tape.
pub fn encode_nodes(tape: &mut Tape<'_>, rows: NodeId, masks: NodeId) -> Result<NodeId> {
    let masked = tape.mul(rows, masks)?;
    Ok(tape.sum_rows(masked))
}

/// Eager encoding of one padded sentence.
pub fn encode(indices: &[usize], masks: &Tensor, table: &Tensor) -> Result<Tensor> {
    check_len(indices, masks)?;
    let mut tape = Tape::detached();
    let rows = tape.constant(gather_checked(table, indices)?);
    let f = tape.constant(masks.clone());
    let s = encode_nodes(&mut tape, rows, f)?;
    Ok(tape.value(s).clone())
}

/// Gate and update encodings of the same sentence from two mask sets over one table.
pub fn encode_dual(
    indices: &[usize],
    masks_gate: &Tensor,
    masks_update: &Tensor,
    table: &Tensor,
) -> Result<(Tensor, Tensor)> {
    Ok((encode(indices, masks_gate, table)?, encode(indices, masks_update, table)?))
}

fn check_len(indices: &[usize], masks: &Tensor) -> Result<()> {
    if masks.rows() != indices.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} tokens for {} mask rows",
            indices.len(),
            masks.rows()
        )));
    }
    Ok(())
}

fn gather_checked(table: &Tensor, indices: &[usize]) -> Result<Tensor> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= table.rows()) {
        return Err(Error::UnknownToken(format!("#{bad}")));
    }
    table.gather_rows(indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> Tensor {
        // Row 0 is NULL.
        Tensor::from_rows(&[
            vec![0.0, 0.0, 0.0],
            vec![1.0, 2.0, 3.0],
            vec![-1.0, 0.5, 2.0],
            vec![0.2, -0.3, 0.4],
        ])
        .unwrap()
    }

    #[test]
    fn vocabulary_first_occurrence_order() {
        let v = Vocabulary::build(["a b", "b c"].iter().map(|s| s.split_whitespace())).unwrap();
        assert_eq!(v.tokens(), &[NULL_TOKEN, "a", "b", "c"]);
        assert_eq!(v.index("c").unwrap(), 3);
        let again = Vocabulary::build(["a b", "b c"].iter().map(|s| s.split_whitespace())).unwrap();
        assert_eq!(v, again);
        assert!(matches!(v.index("d"), Err(Error::UnknownToken(_))));
    }

    #[test]
    fn empty_corpus_is_rejected() {
        let empty: Vec<Vec<&str>> = vec![];
        assert!(matches!(Vocabulary::build(empty), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn null_token_in_corpus_keeps_index_zero() {
        let v = Vocabulary::build([vec![NULL_TOKEN, "x"]]).unwrap();
        assert_eq!(v.index(NULL_TOKEN).unwrap(), 0);
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn vocabulary_lines_round_trip() {
        let v = Vocabulary::build([vec!["mary", "(2,9)", "milk,football"]]).unwrap();
        assert_eq!(Vocabulary::from_lines(&v.to_lines()).unwrap(), v);
        assert!(Vocabulary::from_lines("a\t0\n").is_err());
        assert!(Vocabulary::from_lines("<null>\t0\nb\t2\n").is_err());
    }

    #[test]
    fn padding() {
        assert_eq!(pad_to_length(&[5, 7], 4).unwrap(), vec![5, 7, 0, 0]);
        assert_eq!(pad_to_length(&[1, 2, 3], 3).unwrap(), vec![1, 2, 3]);
        assert!(matches!(pad_to_length(&[1, 2, 3], 2), Err(Error::TooLong { len: 3, max: 2 })));
    }

    #[test]
    fn all_ones_masks_give_bag_of_words() {
        let s = encode(&[1, 2, 0], &Tensor::filled(&[3, 3], 1.0), &table()).unwrap();
        assert_eq!(s.data(), &[0.0, 2.5, 5.0]);
    }

    #[test]
    fn single_word_is_masked_embedding() {
        let masks = Tensor::from_rows(&[vec![2.0, 0.5, -1.0], vec![9.0, 9.0, 9.0]]).unwrap();
        let s = encode(&[3, 0], &masks, &table()).unwrap();
        assert_eq!(s.data(), &[0.4, -0.15, -0.4]);
    }

    #[test]
    fn all_null_sentence_is_zero() {
        let masks = Tensor::filled(&[2, 3], 3.0);
        assert_eq!(encode(&[0, 0], &masks, &table()).unwrap(), Tensor::zeros(&[3]));
        let (g, u) = encode_dual(&[0, 0], &masks, &Tensor::filled(&[2, 3], -1.0), &table()).unwrap();
        assert_eq!((g.sum(), u.sum()), (0.0, 0.0));
    }

    #[test]
    fn dual_with_shared_masks_is_degenerate() {
        let masks = Tensor::from_rows(&[vec![0.3, 1.0, 2.0], vec![1.5, -0.2, 0.7]]).unwrap();
        let (g, u) = encode_dual(&[1, 2], &masks, &masks, &table()).unwrap();
        assert_eq!(g, u);
    }

    #[test]
    fn out_of_range_index_and_length_mismatch() {
        let masks = Tensor::filled(&[2, 3], 1.0);
        assert!(matches!(encode(&[1, 9], &masks, &table()), Err(Error::UnknownToken(_))));
        assert!(encode(&[1], &masks, &table()).is_err());
    }

    #[test]
    fn order_matters_only_with_distinct_masks() {
        let ones = Tensor::filled(&[2, 3], 1.0);
        assert_eq!(encode(&[1, 2], &ones, &table()).unwrap(), encode(&[2, 1], &ones, &table()).unwrap());
        let masks = Tensor::from_rows(&[vec![0.3, 1.0, 2.0], vec![1.5, -0.2, 0.7]]).unwrap();
        assert_ne!(encode(&[1, 2], &masks, &table()).unwrap(), encode(&[2, 1], &masks, &table()).unwrap());
    }

    proptest! {
        #[test]
        fn null_contributes_nothing_for_any_masks(
            f in proptest::collection::vec(-5.0f64..5.0, 9),
        ) {
            let masks = Tensor::matrix(3, 3, f).unwrap();
            let with_null = encode(&[1, 0, 3], &masks, &table()).unwrap();
            let mut manual = vec![0.0; 3];
            for (pos, tok) in [(0usize, 1usize), (2, 3)] {
                for c in 0..3 {
                    manual[c] += masks.row(pos)[c] * table().row(tok)[c];
                }
            }
            for (a, b) in with_null.data().iter().zip(&manual) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
