use std::collections::HashMap;
use std::fmt;

use smallvec::SmallVec;

pub type TokenId = u32;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

/// A token-id sequence. The last id is the predicted word, the rest is its
/// history; the empty n-gram stands for the empty context.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NGram(SmallVec<[TokenId; 4]>);

impl NGram {
    pub fn new(ids: &[TokenId]) -> Self {
        NGram(SmallVec::from_slice(ids))
    }

    pub fn empty() -> Self {
        NGram(SmallVec::new())
    }

    pub fn unigram(w: TokenId) -> Self {
        NGram::new(&[w])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    /// The predicted word (last id).
    pub fn word(&self) -> Option<TokenId> {
        self.0.last().copied()
    }

    /// Everything but the last id.
    pub fn history(&self) -> NGram {
        match self.0.split_last() {
            Some((_, rest)) => NGram::new(rest),
            None => NGram::empty(),
        }
    }

    /// Everything but the first id (the backoff suffix).
    pub fn backoff(&self) -> NGram {
        if self.0.is_empty() {
            NGram::empty()
        } else {
            NGram::new(&self.0[1..])
        }
    }

    /// The last `k` ids (or the whole n-gram if shorter).
    pub fn suffix(&self, k: usize) -> NGram {
        let n = self.0.len();
        NGram::new(&self.0[n.saturating_sub(k)..])
    }

    pub fn extend(&self, w: TokenId) -> NGram {
        let mut ids = self.0.clone();
        ids.push(w);
        NGram(ids)
    }

    pub fn ends_with(&self, other: &NGram) -> bool {
        self.0.ends_with(&other.0)
    }
}

impl fmt::Debug for NGram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &self.0[..])
    }
}

impl From<Vec<TokenId>> for NGram {
    fn from(v: Vec<TokenId>) -> Self {
        NGram(SmallVec::from_vec(v))
    }
}

impl From<&[TokenId]> for NGram {
    fn from(v: &[TokenId]) -> Self {
        NGram::new(v)
    }
}

impl FromIterator<TokenId> for NGram {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        NGram(iter.into_iter().collect())
    }
}

/// Bidirectional token string <-> id map with the sentence-boundary and
/// unknown-word specials tracked.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    bos: Option<TokenId>,
    eos: Option<TokenId>,
    unk: Option<TokenId>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary with `<s>` and `</s>` registered first.
    pub fn with_boundaries() -> Self {
        let mut v = Self::new();
        v.insert(BOS);
        v.insert(EOS);
        v
    }

    /// Every whitespace-separated token of `lines`, plus the boundary symbols.
    pub fn from_corpus<'a, I>(lines: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut v = Self::with_boundaries();
        for line in lines {
            for tok in line.split_whitespace() {
                v.insert(tok);
            }
        }
        v
    }

    /// Returns the id of `token`, assigning the next free id if it is new.
    pub fn insert(&mut self, token: &str) -> TokenId {
        if let Some(&id) = self.ids.get(token) {
            return id;
        }
        let id = self.tokens.len() as TokenId;
        self.tokens.push(token.to_string());
        self.ids.insert(token.to_string(), id);
        match token {
            BOS => self.bos = Some(id),
            EOS => self.eos = Some(id),
            UNK => self.unk = Some(id),
            _ => {}
        }
        id
    }

    pub fn get(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains_id(&self, id: TokenId) -> bool {
        (id as usize) < self.tokens.len()
    }

    pub fn bos(&self) -> Option<TokenId> {
        self.bos
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    pub fn unk(&self) -> Option<TokenId> {
        self.unk
    }

    /// `<s>` only ever appears as context, never as a predicted word.
    pub fn is_predictable(&self, id: TokenId) -> bool {
        Some(id) != self.bos
    }

    /// Ids that can be predicted, in id order.
    pub fn predictable_ids(&self) -> impl Iterator<Item = TokenId> + '_ {
        (0..self.tokens.len() as TokenId).filter(move |&id| self.is_predictable(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = (TokenId, &str)> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (i as TokenId, t.as_str()))
    }

    /// Space-joined token strings.
    pub fn format(&self, ngram: &NGram) -> String {
        let mut out = String::new();
        for (i, &id) in ngram.ids().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            out.push_str(self.token(id).unwrap_or("<?>"));
        }
        out
    }

    /// Maps whitespace-separated tokens to an n-gram; `None` if any token is
    /// unknown.
    pub fn parse(&self, text: &str) -> Option<NGram> {
        text.split_whitespace().map(|t| self.get(t)).collect::<Option<Vec<_>>>().map(NGram::from)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ngram_parts() {
        let g = NGram::new(&[1, 2, 3]);
        assert_eq!(g.word(), Some(3));
        assert_eq!(g.history(), NGram::new(&[1, 2]));
        assert_eq!(g.backoff(), NGram::new(&[2, 3]));
        assert_eq!(g.suffix(1), NGram::unigram(3));
        assert_eq!(g.suffix(5), g);
        assert!(g.ends_with(&NGram::new(&[2, 3])));
        assert!(g.ends_with(&NGram::empty()));
        assert!(!g.ends_with(&NGram::new(&[1, 3])));
        assert_eq!(NGram::empty().history(), NGram::empty());
    }

    #[test]
    fn vocabulary_specials() {
        let mut v = Vocabulary::with_boundaries();
        let a = v.insert("a");
        assert_eq!(v.insert("a"), a);
        assert_eq!(v.bos(), Some(0));
        assert_eq!(v.eos(), Some(1));
        assert_eq!(v.unk(), None);
        v.insert(UNK);
        assert!(v.unk().is_some());
        assert!(!v.is_predictable(0));
        assert_eq!(v.predictable_ids().count(), 3);
        assert_eq!(v.parse("a </s>"), Some(NGram::new(&[a, 1])));
        assert_eq!(v.parse("a zzz"), None);
        assert_eq!(v.format(&NGram::new(&[0, a])), "<s> a");
    }
}
