//! Sentence feature vectors: the encoder input format, the binary embedding
//! store, embedding providers, and vector similarity.

mod hash;
pub(crate) mod provider;
mod store;
mod vector;

pub use hash::{canonical_text, content_hash, HASH_ALGORITHM};
pub use provider::{EmbeddingProvider, HttpProvider, HttpProviderConfig};
pub use store::{
    validate_store, EmbeddingStore, StoreReport, Vocabulary, STORE_MAGIC, STORE_VERSION,
};
pub use vector::{cosine, nearest_neighbors, top_k_by_cosine, EmbeddingVector};

use crate::preprocess::Token;

/// Single-sentence encoder input: `[CLS] t1 ... tk [SEP]`.
pub fn encode_for_llm(tokens: &[Token]) -> String {
    let mut out = String::from("[CLS]");
    for t in tokens {
        out.push(' ');
        out.push_str(&t.text);
    }
    out.push_str(" [SEP]");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::tokenize;

    #[test]
    fn llm_encoding() {
        assert_eq!(
            encode_for_llm(&tokenize("hello world")),
            "[CLS] hello world [SEP]"
        );
        assert_eq!(encode_for_llm(&[]), "[CLS] [SEP]");
        assert_eq!(
            encode_for_llm(&tokenize("PROCESSOR shall.")),
            "[CLS] PROCESSOR shall . [SEP]"
        );
    }
}
