//! Binary embedding store.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "DPAEMBED"
//! version   u32      1
//! dim       u32
//! hash_alg  u16 length + UTF-8 bytes   ("fnv1a64-ws")
//! model_id  u16 length + UTF-8 bytes
//! count     u64
//! flags     u32      bit 0: token section, bit 1: vocabulary section
//! records   count x (u64 hash, dim x f32), strictly ascending hash
//! [tokens]  u64 n, then n x (u64 hash, u32 len, len x dim x f32), ascending hash
//! [vocab]   u64 n, then n x (u16 length + UTF-8 word, dim x f32), ascending word
//! ```
//!
//! Nothing may follow the last section.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::hash::{content_hash, HASH_ALGORITHM};
use super::vector::{cosine, top_k_by_cosine, EmbeddingVector};
use crate::{Error, Result};

pub const STORE_MAGIC: &[u8; 8] = b"DPAEMBED";
pub const STORE_VERSION: u32 = 1;

const FLAG_TOKENS: u32 = 1;
const FLAG_VOCAB: u32 = 2;

/// Word vectors used for embedding-neighbour augmentation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Vocabulary {
    words: BTreeMap<String, EmbeddingVector>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn get(&self, word: &str) -> Option<&EmbeddingVector> {
        self.words.get(word)
    }

    pub fn words(&self) -> impl Iterator<Item = (&String, &EmbeddingVector)> {
        self.words.iter()
    }

    /// Closest other word by cosine; `None` if the word is unknown or has no
    /// neighbour.
    pub fn nearest(&self, word: &str) -> Result<Option<(String, f64)>> {
        let Some(q) = self.words.get(word) else {
            return Ok(None);
        };
        if q.norm() == 0.0 {
            return Ok(None);
        }
        let items: Vec<(&str, &EmbeddingVector)> =
            self.words.iter().map(|(w, v)| (w.as_str(), v)).collect();
        let hits = top_k_by_cosine(&items, q, 1, |w| *w == word)?;
        Ok(hits.into_iter().next().map(|(w, s)| (w.to_string(), s)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    model_id: String,
    entries: BTreeMap<u64, EmbeddingVector>,
    token_entries: Option<BTreeMap<u64, Vec<EmbeddingVector>>>,
    vocabulary: Option<Vocabulary>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, model_id: impl Into<String>) -> Self {
        assert!(dim > 0, "store dimension must be positive");
        EmbeddingStore {
            dim,
            model_id: model_id.into(),
            entries: BTreeMap::new(),
            token_entries: None,
            vocabulary: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&u64, &EmbeddingVector)> {
        self.entries.iter()
    }

    pub fn has_tokens(&self) -> bool {
        self.token_entries.is_some()
    }

    pub fn vocabulary(&self) -> Option<&Vocabulary> {
        self.vocabulary.as_ref()
    }

    fn check_dim(&self, v: &EmbeddingVector) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                actual: v.dim(),
            });
        }
        Ok(())
    }

    pub fn insert(&mut self, text: &str, v: EmbeddingVector) -> Result<u64> {
        let h = content_hash(text);
        self.insert_hash(h, v)?;
        Ok(h)
    }

    pub fn insert_hash(&mut self, hash: u64, v: EmbeddingVector) -> Result<()> {
        self.check_dim(&v)?;
        self.entries.insert(hash, v);
        Ok(())
    }

    pub fn insert_tokens(&mut self, text: &str, seq: Vec<EmbeddingVector>) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::Validation("token sequence must be non-empty".into()));
        }
        for v in &seq {
            self.check_dim(v)?;
        }
        self.token_entries
            .get_or_insert_with(BTreeMap::new)
            .insert(content_hash(text), seq);
        Ok(())
    }

    pub fn insert_word(&mut self, word: &str, v: EmbeddingVector) -> Result<()> {
        self.check_dim(&v)?;
        self.vocabulary
            .get_or_insert_with(Vocabulary::default)
            .words
            .insert(word.to_string(), v);
        Ok(())
    }

    pub fn get(&self, text: &str) -> Result<&EmbeddingVector> {
        let h = content_hash(text);
        self.entries
            .get(&h)
            .ok_or(Error::EmbeddingNotFound { hash: h })
    }

    pub fn get_hash(&self, hash: u64) -> Option<&EmbeddingVector> {
        self.entries.get(&hash)
    }

    pub fn tokens(&self, text: &str) -> Result<&[EmbeddingVector]> {
        let section = self.token_entries.as_ref().ok_or_else(|| {
            Error::Capability(
                "store has no token section; use length-1 sequences of the sentence vector instead"
                    .into(),
            )
        })?;
        let h = content_hash(text);
        section
            .get(&h)
            .map(Vec::as_slice)
            .ok_or(Error::EmbeddingNotFound { hash: h })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64 + self.entries.len() * (8 + 4 * self.dim));
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        put_str(&mut out, HASH_ALGORITHM);
        put_str(&mut out, &self.model_id);
        out.extend_from_slice(&(self.entries.len() as u64).to_le_bytes());
        let mut flags = 0;
        if self.token_entries.is_some() {
            flags |= FLAG_TOKENS;
        }
        if self.vocabulary.is_some() {
            flags |= FLAG_VOCAB;
        }
        out.extend_from_slice(&flags.to_le_bytes());
        for (h, v) in &self.entries {
            out.extend_from_slice(&h.to_le_bytes());
            put_vec(&mut out, v);
        }
        if let Some(tokens) = &self.token_entries {
            out.extend_from_slice(&(tokens.len() as u64).to_le_bytes());
            for (h, seq) in tokens {
                out.extend_from_slice(&h.to_le_bytes());
                out.extend_from_slice(&(seq.len() as u32).to_le_bytes());
                for v in seq {
                    put_vec(&mut out, v);
                }
            }
        }
        if let Some(vocab) = &self.vocabulary {
            out.extend_from_slice(&(vocab.words.len() as u64).to_le_bytes());
            for (w, v) in &vocab.words {
                put_str(&mut out, w);
                put_vec(&mut out, v);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != STORE_MAGIC {
            return Err(r.corrupt_at(0, "bad magic"));
        }
        let version = r.u32()?;
        if version != STORE_VERSION {
            return Err(r.corrupt_at(8, &format!("unsupported version {version}")));
        }
        let dim_at = r.pos;
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(r.corrupt_at(dim_at as u64, "zero dimension"));
        }
        let alg_at = r.pos;
        let alg = r.string()?;
        if alg != HASH_ALGORITHM {
            return Err(r.corrupt_at(alg_at as u64, &format!("unknown hash algorithm {alg:?}")));
        }
        let model_id = r.string()?;
        let count = r.u64()?;
        let flags = r.u32()?;
        let mut store = EmbeddingStore::new(dim, model_id);

        let mut prev: Option<u64> = None;
        for _ in 0..count {
            let at = r.pos;
            let h = r.u64()?;
            if prev.is_some_and(|p| p >= h) {
                return Err(r.corrupt_at(at as u64, "record hashes not strictly ascending"));
            }
            prev = Some(h);
            let v = r.vector(dim)?;
            store.entries.insert(h, v);
        }
        if flags & FLAG_TOKENS != 0 {
            let n = r.u64()?;
            let mut section = BTreeMap::new();
            let mut prev: Option<u64> = None;
            for _ in 0..n {
                let at = r.pos;
                let h = r.u64()?;
                if prev.is_some_and(|p| p >= h) {
                    return Err(r.corrupt_at(at as u64, "token hashes not strictly ascending"));
                }
                prev = Some(h);
                let len = r.u32()? as usize;
                if len == 0 {
                    return Err(r.corrupt_at(at as u64, "empty token sequence"));
                }
                let seq = (0..len)
                    .map(|_| r.vector(dim))
                    .collect::<Result<Vec<_>>>()?;
                section.insert(h, seq);
            }
            store.token_entries = Some(section);
        }
        if flags & FLAG_VOCAB != 0 {
            let n = r.u64()?;
            let mut vocab = Vocabulary::default();
            for _ in 0..n {
                let at = r.pos;
                let w = r.string()?;
                if vocab.words.keys().next_back().is_some_and(|p| *p >= w) {
                    return Err(r.corrupt_at(at as u64, "vocabulary words not strictly ascending"));
                }
                let v = r.vector(dim)?;
                vocab.words.insert(w, v);
            }
            store.vocabulary = Some(vocab);
        }
        if flags & !(FLAG_TOKENS | FLAG_VOCAB) != 0 {
            return Err(r.corrupt_at(0, &format!("unknown flags {flags:#x}")));
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt_at(r.pos as u64, "trailing bytes after last section"));
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let len = u16::try_from(s.len()).expect("string field longer than 65535 bytes");
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn put_vec(out: &mut Vec<u8>, v: &EmbeddingVector) {
    for x in v.values() {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn corrupt_at(&self, offset: u64, message: &str) -> Error {
        Error::CorruptStore {
            offset,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.corrupt_at(
                self.pos as u64,
                &format!(
                    "truncated: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let at = self.pos;
        let n = self.u16()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| self.corrupt_at(at as u64, "invalid UTF-8"))
    }

    fn vector(&mut self, dim: usize) -> Result<EmbeddingVector> {
        let at = self.pos;
        let raw = self.take(4 * dim)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        EmbeddingVector::new(values).map_err(|e| self.corrupt_at(at as u64, &e.to_string()))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StoreReport {
    pub valid: bool,
    pub dim: usize,
    pub model_id: String,
    pub count: usize,
    pub token_sequences: usize,
    pub vocabulary: usize,
    pub sampled: usize,
    pub max_self_cosine_error: f64,
}

/// Checks header, record integrity and self-cosine of up to ten evenly
/// spaced non-zero vectors (`|cos(v, v) - 1| <= 1e-6`).
pub fn validate_store(path: &Path) -> Result<StoreReport> {
    let store = EmbeddingStore::load(path)?;
    let nonzero: Vec<&EmbeddingVector> =
        store.entries.values().filter(|v| v.norm() > 0.0).collect();
    let sample: Vec<&EmbeddingVector> = if nonzero.len() <= 10 {
        nonzero
    } else {
        (0..10).map(|i| nonzero[i * nonzero.len() / 10]).collect()
    };
    let mut worst = 0.0f64;
    for v in &sample {
        worst = worst.max((cosine(v, v)? - 1.0).abs());
    }
    if worst > 1e-6 {
        return Err(Error::Validation(format!(
            "self-cosine deviates from 1 by {worst:e}"
        )));
    }
    Ok(StoreReport {
        valid: true,
        dim: store.dim,
        model_id: store.model_id.clone(),
        count: store.len(),
        token_sequences: store.token_entries.as_ref().map_or(0, BTreeMap::len),
        vocabulary: store.vocabulary.as_ref().map_or(0, Vocabulary::len),
        sampled: sample.len(),
        max_self_cosine_error: worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(xs: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(xs.to_vec()).unwrap()
    }

    fn sample_store() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(3, "toy-model");
        s.insert("PROCESSOR shall delete data.", v(&[0.1, -0.2, 0.3]))
            .unwrap();
        s.insert("Other sentence.", v(&[1.0, 0.0, 0.0])).unwrap();
        s.insert_tokens(
            "Other sentence.",
            vec![
                v(&[1.0, 0.0, 0.0]),
                v(&[0.0, 1.0, 0.0]),
                v(&[0.0, 0.0, 1.0]),
            ],
        )
        .unwrap();
        s.insert_word("delete", v(&[1.0, 0.1, 0.0])).unwrap();
        s.insert_word("erase", v(&[0.9, 0.2, 0.0])).unwrap();
        s.insert_word("keep", v(&[-1.0, 0.0, 0.0])).unwrap();
        s
    }

    #[test]
    fn lookup_identity_and_missing() {
        let s = sample_store();
        assert_eq!(
            s.get("PROCESSOR  shall delete data.").unwrap().values(),
            &[0.1, -0.2, 0.3]
        );
        match s.get("absent") {
            Err(Error::EmbeddingNotFound { hash }) => assert_eq!(hash, content_hash("absent")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dim_mismatch_rejected() {
        let mut s = EmbeddingStore::new(384, "m");
        let long = EmbeddingVector::new(vec![0.5; 768]).unwrap();
        assert!(matches!(
            s.insert("x", long),
            Err(Error::DimMismatch {
                expected: 384,
                actual: 768
            })
        ));
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let s = sample_store();
        let bytes = s.to_bytes();
        let back = EmbeddingStore::from_bytes(&bytes).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.tokens("Other sentence.").unwrap().len(), 3);
    }

    #[test]
    fn token_capability_error() {
        let mut s = EmbeddingStore::new(2, "m");
        s.insert("a", v(&[1.0, 0.0])).unwrap();
        assert!(matches!(s.tokens("a"), Err(Error::Capability(_))));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = sample_store().to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        match EmbeddingStore::from_bytes(cut) {
            Err(Error::CorruptStore { offset, .. }) => {
                assert!(offset > 0 && offset < bytes.len() as u64)
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn edited_dim_header_is_detected() {
        let mut s = EmbeddingStore::new(3, "m");
        for i in 0..5 {
            s.insert(&format!("s{i}"), v(&[i as f32, 1.0, 2.0]))
                .unwrap();
        }
        let mut bytes = s.to_bytes();
        // dim lives right after magic + version
        bytes[12..16].copy_from_slice(&4u32.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes),
            Err(Error::CorruptStore { .. })
        ));
        bytes[12..16].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            EmbeddingStore::from_bytes(&bytes),
            Err(Error::CorruptStore { .. })
        ));
    }

    #[test]
    fn validate_store_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.emb");
        sample_store().save(&p).unwrap();
        let rep = validate_store(&p).unwrap();
        assert!(rep.valid);
        assert_eq!(
            (rep.dim, rep.count, rep.token_sequences, rep.vocabulary),
            (3, 2, 1, 3)
        );
        assert!(rep.max_self_cosine_error <= 1e-6);
    }

    #[test]
    fn vocabulary_nearest_excludes_self() {
        let s = sample_store();
        let vocab = s.vocabulary().unwrap();
        assert_eq!(vocab.nearest("delete").unwrap().unwrap().0, "erase");
        let mut lonely = EmbeddingStore::new(2, "m");
        lonely.insert_word("only", v(&[1.0, 0.0])).unwrap();
        assert_eq!(lonely.vocabulary().unwrap().nearest("only").unwrap(), None);
    }

    proptest! {
        #[test]
        fn arbitrary_stores_round_trip(vals in proptest::collection::vec(proptest::collection::vec(-1e6f32..1e6, 4), 0..20)) {
            let mut s = EmbeddingStore::new(4, "p");
            for (i, x) in vals.iter().enumerate() {
                s.insert(&format!("sentence {i}"), v(x)).unwrap();
            }
            let back = EmbeddingStore::from_bytes(&s.to_bytes()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
