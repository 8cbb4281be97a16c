use std::collections::HashMap;
use std::fmt::Write as _;

use super::DataError;

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;
pub const NUM_SPECIALS: usize = 4;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIALS] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Token/id maps with the four reserved ids `PAD=0, S=1, E=2, UNK=3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, usize>,
}

impl Vocab {
    /// Keeps the `cap - 4` most frequent whitespace tokens; ties go to the
    /// lexicographically smaller token.
    pub fn build<'a>(lines: impl IntoIterator<Item = &'a str>, cap: usize) -> Result<Self, DataError> {
        if cap < NUM_SPECIALS {
            return Err(DataError::Invalid(format!("vocab cap {cap} leaves no room for specials")));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for line in lines {
            for tok in line.split_whitespace() {
                if SPECIAL_TOKENS.contains(&tok) {
                    continue;
                }
                *counts.entry(tok).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(DataError::Empty("corpus for vocabulary"));
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap - NUM_SPECIALS);
        Ok(Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_string())))
    }

    /// Specials followed by `words` in order.
    pub fn from_tokens(words: impl IntoIterator<Item = String>) -> Self {
        let mut id_to_token: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        id_to_token.extend(words);
        let token_to_id = id_to_token.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self {
            id_to_token,
            token_to_id,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.id_to_token.get(id).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    /// Ids of a sentence, without framing.
    pub fn ids(&self, sentence: &str) -> Vec<usize> {
        sentence.split_whitespace().map(|t| self.id(t)).collect()
    }

    /// `S`, up to `max_len` ids, then `E`.
    pub fn encode(&self, sentence: &str, max_len: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(max_len + 2);
        out.push(START);
        out.extend(sentence.split_whitespace().take(max_len).map(|t| self.id(t)));
        out.push(END);
        out
    }

    /// Drops S, E and PAD and joins the rest with single spaces.
    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| !matches!(i, PAD | START | END))
            .map(|&i| self.token(i).unwrap_or(SPECIAL_TOKENS[UNK]))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// One token per line; line number is the id.
    pub fn to_file_string(&self) -> String {
        let mut s = String::new();
        for t in &self.id_to_token {
            let _ = writeln!(s, "{t}");
        }
        s
    }

    pub fn from_file_string(text: &str) -> Result<Self, DataError> {
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < NUM_SPECIALS || lines[..NUM_SPECIALS] != SPECIAL_TOKENS {
            return Err(DataError::Invalid(
                "vocab file must start with <pad> <s> </s> <unk>".into(),
            ));
        }
        let words: Vec<String> = lines[NUM_SPECIALS..].iter().map(|s| s.to_string()).collect();
        let vocab = Self::from_tokens(words);
        if vocab.token_to_id.len() != vocab.id_to_token.len() {
            return Err(DataError::Invalid("duplicate token in vocab file".into()));
        }
        Ok(vocab)
    }
}
