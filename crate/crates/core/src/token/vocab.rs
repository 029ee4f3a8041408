//! Tokenizer vocabulary: token id <-> byte string, plus a byte trie used by
//! automaton construction and greedy tokenization.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::TokenError;

pub type TokenId = u32;

#[derive(Debug, Clone, Default)]
pub(crate) struct TrieNode {
    /// Sorted by byte.
    pub children: Vec<(u8, u32)>,
    /// Tokens whose byte string ends exactly at this node.
    pub tokens: Vec<TokenId>,
}

impl TrieNode {
    fn child(&self, byte: u8) -> Option<u32> {
        self.children
            .binary_search_by_key(&byte, |&(b, _)| b)
            .ok()
            .map(|i| self.children[i].1)
    }
}

/// The tokenizer model masks are computed against.
///
/// Ids are dense in `[0, size)`. Special tokens (chat markers, end of
/// sequence) never take part in constrained matching; they can only be
/// produced by fixed scaffolding, and `eos` doubles as the "stop" signal
/// for generation spans.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    entries: Vec<Vec<u8>>,
    special: BTreeSet<TokenId>,
    eos: Option<TokenId>,
    trie: Vec<TrieNode>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.special == other.special && self.eos == other.eos
    }
}

impl Vocabulary {
    pub fn new(
        entries: Vec<Vec<u8>>,
        special: impl IntoIterator<Item = TokenId>,
        eos: Option<TokenId>,
    ) -> Result<Self, TokenError> {
        let mut special: BTreeSet<TokenId> = special.into_iter().collect();
        if let Some(eos) = eos {
            special.insert(eos);
        }
        let size = entries.len();
        if let Some(&bad) = special.iter().find(|&&id| id as usize >= size) {
            return Err(TokenError::InvalidVocabulary(format!(
                "special token id {bad} is out of range for a vocabulary of {size}"
            )));
        }
        for (id, bytes) in entries.iter().enumerate() {
            if bytes.is_empty() && !special.contains(&(id as TokenId)) {
                return Err(TokenError::InvalidVocabulary(format!(
                    "token {id} has an empty byte string"
                )));
            }
        }
        let mut trie = vec![TrieNode::default()];
        for (id, bytes) in entries.iter().enumerate() {
            if bytes.is_empty() {
                continue;
            }
            let mut node = 0usize;
            for &b in bytes {
                node = match trie[node].child(b) {
                    Some(next) => next as usize,
                    None => {
                        let next = trie.len();
                        trie.push(TrieNode::default());
                        let children = &mut trie[node].children;
                        let at = children.partition_point(|&(c, _)| c < b);
                        children.insert(at, (b, next as u32));
                        next
                    }
                };
            }
            trie[node].tokens.push(id as TokenId);
        }
        Ok(Self {
            entries,
            special,
            eos,
            trie,
        })
    }

    /// Convenience constructor for tests and toy vocabularies: every string is
    /// an ordinary token, in order.
    pub fn from_strs<S: AsRef<str>>(tokens: &[S]) -> Result<Self, TokenError> {
        Self::new(
            tokens.iter().map(|s| s.as_ref().as_bytes().to_vec()).collect(),
            [],
            None,
        )
    }

    /// Like [`Vocabulary::from_strs`] but appends an end-of-sequence token
    /// spelled `eos_text`.
    pub fn from_strs_with_eos<S: AsRef<str>>(
        tokens: &[S],
        eos_text: &str,
    ) -> Result<Self, TokenError> {
        let mut entries: Vec<Vec<u8>> = tokens.iter().map(|s| s.as_ref().as_bytes().to_vec()).collect();
        let eos = entries.len() as TokenId;
        entries.push(eos_text.as_bytes().to_vec());
        Self::new(entries, [eos], Some(eos))
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn bytes(&self, id: TokenId) -> Option<&[u8]> {
        self.entries.get(id as usize).map(Vec::as_slice)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        self.special.contains(&id)
    }

    pub fn special_tokens(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.special.iter().copied()
    }

    pub fn eos(&self) -> Option<TokenId> {
        self.eos
    }

    pub(crate) fn trie(&self) -> &[TrieNode] {
        &self.trie
    }

    /// Greedy longest-match tokenization over every entry, special tokens
    /// included (scaffolding may contain chat markers). Ties between entries
    /// with identical bytes go to the lowest id.
    pub fn tokenize(&self, text: &str) -> Result<Vec<TokenId>, TokenError> {
        self.tokenize_bytes(text.as_bytes(), true)
    }

    /// Greedy longest-match tokenization restricted to ordinary tokens.
    pub fn tokenize_ordinary(&self, text: &[u8]) -> Result<Vec<TokenId>, TokenError> {
        self.tokenize_bytes(text, false)
    }

    fn tokenize_bytes(&self, bytes: &[u8], allow_special: bool) -> Result<Vec<TokenId>, TokenError> {
        let mut out = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            let mut node = 0usize;
            let mut best: Option<(usize, TokenId)> = None;
            let mut i = pos;
            while i < bytes.len() {
                match self.trie[node].child(bytes[i]) {
                    Some(next) => node = next as usize,
                    None => break,
                }
                i += 1;
                let candidate = self.trie[node]
                    .tokens
                    .iter()
                    .copied()
                    .filter(|&t| allow_special || !self.is_special(t))
                    .min();
                if let Some(t) = candidate {
                    best = Some((i, t));
                }
            }
            match best {
                Some((end, tok)) => {
                    out.push(tok);
                    pos = end;
                }
                None => return Err(TokenError::UnspellableText { offset: pos }),
            }
        }
        Ok(out)
    }

    pub fn detokenize_bytes(&self, ids: &[TokenId]) -> Vec<u8> {
        let mut out = Vec::new();
        for &id in ids {
            if let Some(b) = self.bytes(id) {
                out.extend_from_slice(b);
            }
        }
        out
    }

    /// Decodes ids to text; invalid UTF-8 is replaced.
    pub fn detokenize(&self, ids: &[TokenId]) -> String {
        String::from_utf8_lossy(&self.detokenize_bytes(ids)).into_owned()
    }

    /// True when `bytes` can be segmented into ordinary (non-special) tokens.
    pub fn is_spellable(&self, bytes: &[u8]) -> bool {
        if bytes.is_empty() {
            return true;
        }
        let mut reach = vec![false; bytes.len() + 1];
        reach[0] = true;
        for start in 0..bytes.len() {
            if !reach[start] {
                continue;
            }
            let mut node = 0usize;
            for (i, &b) in bytes[start..].iter().enumerate() {
                match self.trie[node].child(b) {
                    Some(next) => node = next as usize,
                    None => break,
                }
                if self.trie[node].tokens.iter().any(|&t| !self.is_special(t)) {
                    reach[start + i + 1] = true;
                }
            }
        }
        reach[bytes.len()]
    }

    /// Parses the native JSON vocabulary document.
    ///
    /// ```json
    /// {"0": "M", "1": "0", "2": "\\x80", "special": [3], "eos": 3}
    /// ```
    ///
    /// Values are UTF-8 strings in which `\xHH` denotes a raw byte and `\\`
    /// a literal backslash. If the document instead looks like a tokenizer
    /// export (`{"model": {"vocab": {...}, "merges": [...]}}`), the vocab map
    /// is read, merges are ignored, and byte-level symbols are decoded.
    pub fn from_json(text: &str) -> Result<Self, TokenError> {
        let value: Value =
            serde_json::from_str(text).map_err(|e| TokenError::InvalidVocabulary(e.to_string()))?;
        if value.get("model").and_then(|m| m.get("vocab")).is_some() {
            return Self::from_tokenizer_export(&value);
        }
        let obj = value
            .as_object()
            .ok_or_else(|| TokenError::InvalidVocabulary("expected a JSON object".into()))?;
        let mut map = BTreeMap::new();
        let mut special = Vec::new();
        let mut eos = None;
        for (key, v) in obj {
            match key.as_str() {
                "special" => {
                    let ids = v.as_array().ok_or_else(|| {
                        TokenError::InvalidVocabulary("\"special\" must be an array of ids".into())
                    })?;
                    for id in ids {
                        special.push(json_id(id)?);
                    }
                }
                "eos" => eos = Some(json_id(v)?),
                _ => {
                    let id: TokenId = key.parse().map_err(|_| {
                        TokenError::InvalidVocabulary(format!("token key {key:?} is not an id"))
                    })?;
                    let s = v.as_str().ok_or_else(|| {
                        TokenError::InvalidVocabulary(format!("token {id} must be a string"))
                    })?;
                    map.insert(id, unescape_bytes(s)?);
                }
            }
        }
        let entries = dense(map)?;
        Self::new(entries, special, eos)
    }

    fn from_tokenizer_export(value: &Value) -> Result<Self, TokenError> {
        let vocab = value["model"]["vocab"]
            .as_object()
            .ok_or_else(|| TokenError::InvalidVocabulary("model.vocab must be an object".into()))?;
        let decoder = byte_level_decoder();
        let mut map = BTreeMap::new();
        for (tok, id) in vocab {
            map.insert(json_id(id)?, decode_byte_level(tok, &decoder));
        }
        let mut special = Vec::new();
        let mut eos = None;
        if let Some(added) = value.get("added_tokens").and_then(Value::as_array) {
            for t in added {
                let id = json_id(&t["id"])?;
                let content = t["content"].as_str().unwrap_or_default();
                map.insert(id, content.as_bytes().to_vec());
                if t["special"].as_bool().unwrap_or(false) {
                    special.push(id);
                    if eos.is_none()
                        && matches!(content, "</s>" | "<|endoftext|>" | "<|eos|>" | "<eos>")
                    {
                        eos = Some(id);
                    }
                }
            }
        }
        let entries = dense(map)?;
        Self::new(entries, special, eos)
    }

    /// Serializes to the native JSON document format.
    pub fn to_json(&self) -> String {
        let mut obj = serde_json::Map::new();
        for (id, bytes) in self.entries.iter().enumerate() {
            obj.insert(id.to_string(), Value::String(escape_bytes(bytes)));
        }
        obj.insert(
            "special".into(),
            Value::Array(self.special.iter().map(|&i| Value::from(i)).collect()),
        );
        if let Some(eos) = self.eos {
            obj.insert("eos".into(), Value::from(eos));
        }
        serde_json::to_string_pretty(&Value::Object(obj)).expect("vocabulary serializes")
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let value: Value = serde_json::from_str(&self.to_json()).map_err(serde::ser::Error::custom)?;
        value.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        Vocabulary::from_json(&value.to_string()).map_err(serde::de::Error::custom)
    }
}

fn json_id(v: &Value) -> Result<TokenId, TokenError> {
    v.as_u64()
        .and_then(|n| TokenId::try_from(n).ok())
        .ok_or_else(|| TokenError::InvalidVocabulary(format!("{v} is not a token id")))
}

fn dense(map: BTreeMap<TokenId, Vec<u8>>) -> Result<Vec<Vec<u8>>, TokenError> {
    let mut entries = Vec::with_capacity(map.len());
    for (expected, (id, bytes)) in map.into_iter().enumerate() {
        if id as usize != expected {
            return Err(TokenError::InvalidVocabulary(format!(
                "token ids must be dense; missing id {expected}"
            )));
        }
        entries.push(bytes);
    }
    Ok(entries)
}

/// `\xHH` -> raw byte, `\\` -> backslash; anything else is literal UTF-8.
pub fn unescape_bytes(s: &str) -> Result<Vec<u8>, TokenError> {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            match bytes.get(i + 1) {
                Some(b'\\') => {
                    out.push(b'\\');
                    i += 2;
                }
                Some(b'x') => {
                    let hex = s.get(i + 2..i + 4).ok_or_else(|| {
                        TokenError::InvalidVocabulary(format!("truncated \\x escape in {s:?}"))
                    })?;
                    let b = u8::from_str_radix(hex, 16).map_err(|_| {
                        TokenError::InvalidVocabulary(format!("bad \\x escape in {s:?}"))
                    })?;
                    out.push(b);
                    i += 4;
                }
                _ => {
                    return Err(TokenError::InvalidVocabulary(format!(
                        "unknown escape in {s:?}"
                    )))
                }
            }
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    Ok(out)
}

pub fn escape_bytes(bytes: &[u8]) -> String {
    let mut out = String::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        match std::str::from_utf8(rest) {
            Ok(s) => {
                push_escaped(&mut out, s);
                break;
            }
            Err(e) => {
                let (valid, after) = rest.split_at(e.valid_up_to());
                push_escaped(&mut out, std::str::from_utf8(valid).expect("valid prefix"));
                let bad = e.error_len().unwrap_or(after.len());
                for b in &after[..bad] {
                    out.push_str(&format!("\\x{b:02x}"));
                }
                rest = &after[bad..];
            }
        }
    }
    out
}

fn push_escaped(out: &mut String, s: &str) {
    for c in s.chars() {
        if c == '\\' {
            out.push_str("\\\\");
        } else {
            out.push(c);
        }
    }
}

/// The GPT-2 style byte <-> printable-char table used by byte-level exports.
fn byte_level_decoder() -> BTreeMap<char, u8> {
    let mut printable: Vec<u32> = (b'!' as u32..=b'~' as u32).collect();
    printable.extend(0xA1..=0xAC);
    printable.extend(0xAE..=0xFF);
    let mut map = BTreeMap::new();
    let mut extra = 0u32;
    for b in 0u32..256 {
        let c = if printable.contains(&b) {
            b
        } else {
            extra += 1;
            255 + extra
        };
        map.insert(char::from_u32(c).expect("valid scalar"), b as u8);
    }
    map
}

fn decode_byte_level(tok: &str, decoder: &BTreeMap<char, u8>) -> Vec<u8> {
    if tok.chars().all(|c| decoder.contains_key(&c)) {
        tok.chars().map(|c| decoder[&c]).collect()
    } else {
        tok.as_bytes().to_vec()
    }
}
