use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::vocab::{Vocab, END, START};
use super::DataError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Full,
    Train,
    Test,
}

/// Encoded sentences without S/E framing, each at most `max_len` ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub sentences: Vec<Vec<usize>>,
    pub max_len: usize,
    pub split: Split,
}

impl Corpus {
    /// Blank lines are skipped; longer sentences are truncated.
    pub fn from_lines<'a>(lines: impl IntoIterator<Item = &'a str>, vocab: &Vocab, max_len: usize) -> Self {
        let sentences = lines
            .into_iter()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut ids = vocab.ids(l);
                ids.truncate(max_len);
                ids
            })
            .collect();
        Self {
            sentences,
            max_len,
            split: Split::Full,
        }
    }

    pub fn from_ids(mut sentences: Vec<Vec<usize>>, max_len: usize) -> Self {
        for s in &mut sentences {
            s.truncate(max_len);
        }
        Self {
            sentences,
            max_len,
            split: Split::Full,
        }
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// Sentence `i` as `S ids.. E`.
    pub fn framed(&self, i: usize) -> Vec<usize> {
        let s = &self.sentences[i];
        let mut out = Vec::with_capacity(s.len() + 2);
        out.push(START);
        out.extend_from_slice(s);
        out.push(END);
        out
    }

    pub fn framed_all(&self) -> Vec<Vec<usize>> {
        (0..self.len()).map(|i| self.framed(i)).collect()
    }

    /// Sentence `i` followed by `E`, the form the discriminator sees.
    pub fn terminated(&self, i: usize) -> Vec<usize> {
        let mut out = self.sentences[i].clone();
        out.push(END);
        out
    }

    pub fn check_ids(&self, vocab_size: usize) -> Result<(), DataError> {
        for s in &self.sentences {
            if let Some(&bad) = s.iter().find(|&&id| id >= vocab_size) {
                return Err(DataError::Invalid(format!("token id {bad} outside vocab of {vocab_size}")));
            }
        }
        Ok(())
    }

    /// Seeded shuffle, then the first `ratio` share becomes the training split.
    pub fn split(&self, ratio: f64, seed: u64) -> Result<(Corpus, Corpus), DataError> {
        if self.len() < 10 {
            return Err(DataError::Invalid(format!(
                "corpus of {} sentences is too small to split",
                self.len()
            )));
        }
        if !(0.0..1.0).contains(&ratio) || ratio == 0.0 {
            return Err(DataError::Invalid(format!("split ratio {ratio} must lie in (0, 1)")));
        }
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64) * ratio).round() as usize;
        let pick = |idx: &[usize], split| Corpus {
            sentences: idx.iter().map(|&i| self.sentences[i].clone()).collect(),
            max_len: self.max_len,
            split,
        };
        Ok((pick(&order[..n_train], Split::Train), pick(&order[n_train..], Split::Test)))
    }

    pub fn to_text(&self, vocab: &Vocab) -> String {
        let mut s = String::new();
        for sent in &self.sentences {
            s.push_str(&vocab.decode(sent));
            s.push('\n');
        }
        s
    }
}
