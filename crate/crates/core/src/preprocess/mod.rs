//! Text preprocessing: tokenizer, sentence splitter and party-reference
//! normalizer. All functions are pure.

mod normalize;
mod sentences;
mod tokenize;

pub use normalize::{
    normalize, review_candidates, AliasEntry, AliasTable, AppliedAlias, Normalized, Role,
};
pub use sentences::split_sentences;
pub use tokenize::{detokenize, tokenize, Token};

/// A DPA sentence after splitting and normalization, with its position in
/// the source document.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedSentence {
    pub index: u32,
    pub original: String,
    pub normalized: String,
    pub applied: Vec<AppliedAlias>,
}

/// Split, then normalize each segment against `aliases`.
pub fn prepare_document(text: &str, aliases: &AliasTable) -> Vec<PreparedSentence> {
    split_sentences(text)
        .into_iter()
        .enumerate()
        .map(|(i, original)| {
            let n = normalize(&original, aliases);
            PreparedSentence {
                index: i as u32,
                original,
                normalized: n.text,
                applied: n.applied,
            }
        })
        .collect()
}
