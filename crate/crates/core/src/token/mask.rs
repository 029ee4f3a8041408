//! Valid-token sets and logit masking.

use super::vocab::TokenId;
use super::TokenError;

/// Score given to forbidden entries. Its softmax weight is exactly zero.
pub const FORBIDDEN: f32 = f32::NEG_INFINITY;

/// Fixed-size bitset over token ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TokenSet {
    words: Vec<u64>,
    len: usize,
}

impl TokenSet {
    pub fn new(len: usize) -> Self {
        Self {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn full(len: usize) -> Self {
        let mut set = Self::new(len);
        for w in set.words.iter_mut() {
            *w = u64::MAX;
        }
        set.clear_tail();
        set
    }

    pub fn from_ids(len: usize, ids: impl IntoIterator<Item = TokenId>) -> Self {
        let mut set = Self::new(len);
        for id in ids {
            set.insert(id);
        }
        set
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Universe size (vocabulary size), not the number of members.
    pub fn capacity(&self) -> usize {
        self.len
    }

    /// Panics if `id` is outside the universe.
    pub fn insert(&mut self, id: TokenId) {
        let i = id as usize;
        assert!(i < self.len, "token {id} outside set of size {}", self.len);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, id: TokenId) {
        let i = id as usize;
        if i < self.len {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn contains(&self, id: TokenId) -> bool {
        let i = id as usize;
        i < self.len && self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn union_with(&mut self, other: &TokenSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut bits = w;
            std::iter::from_fn(move || {
                if bits == 0 {
                    return None;
                }
                let b = bits.trailing_zeros();
                bits &= bits - 1;
                Some((wi * 64) as TokenId + b)
            })
        })
    }

    pub(crate) fn words(&self) -> &[u64] {
        &self.words
    }
}

/// Logits after masking: each entry is either the original score, bit for
/// bit, or [`FORBIDDEN`].
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedLogits {
    values: Vec<f32>,
}

impl MaskedLogits {
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.values
    }

    pub fn is_forbidden(&self, id: TokenId) -> bool {
        self.values
            .get(id as usize)
            .is_none_or(|&v| v == FORBIDDEN)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Keeps entries in `valid`, forbids everything else. One pass over the
/// vector, 64 entries per bitset word.
pub fn apply_mask(logits: &[f32], valid: &TokenSet) -> Result<MaskedLogits, TokenError> {
    if logits.len() != valid.capacity() {
        return Err(TokenError::LengthMismatch {
            expected: valid.capacity(),
            actual: logits.len(),
        });
    }
    if valid.is_empty() {
        return Err(TokenError::EmptyValidSet);
    }
    let mut values = vec![FORBIDDEN; logits.len()];
    for ((out, inp), &word) in values
        .chunks_mut(64)
        .zip(logits.chunks(64))
        .zip(valid.words())
    {
        if word == u64::MAX {
            out.copy_from_slice(inp);
            continue;
        }
        let mut bits = word;
        while bits != 0 {
            let b = bits.trailing_zeros() as usize;
            out[b] = inp[b];
            bits &= bits - 1;
        }
    }
    Ok(MaskedLogits { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn mask_example() {
        let set = TokenSet::from_ids(3, [0, 2]);
        let m = apply_mask(&[1.2, -0.5, 3.0], &set).unwrap();
        assert_eq!(m.values(), &[1.2, FORBIDDEN, 3.0]);
    }

    #[test]
    fn empty_and_length_errors() {
        assert!(matches!(
            apply_mask(&[1.0, 2.0], &TokenSet::new(2)),
            Err(TokenError::EmptyValidSet)
        ));
        assert!(matches!(
            apply_mask(&[1.0], &TokenSet::full(2)),
            Err(TokenError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn full_set_tail_is_clean() {
        let s = TokenSet::full(70);
        assert_eq!(s.count(), 70);
        assert_eq!(s.iter().last(), Some(69));
    }

    proptest! {
        #[test]
        fn transparency(logits in proptest::collection::vec(-1e6f32..1e6, 1..300), seed in any::<u64>()) {
            let n = logits.len();
            let ids: Vec<u32> = (0..n as u32).filter(|i| (seed >> (i % 64)) & 1 == 1 || *i == 0).collect();
            let set = TokenSet::from_ids(n, ids.iter().copied());
            let m = apply_mask(&logits, &set).unwrap();
            for (j, x) in logits.iter().enumerate() {
                if set.contains(j as u32) {
                    prop_assert_eq!(m.values()[j].to_bits(), x.to_bits());
                } else {
                    prop_assert!(m.is_forbidden(j as u32));
                }
            }
        }
    }
}
