use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::lexicon::{is_content_word, SynonymLexicon};
use super::{Example, Origin};
use crate::embedding::{content_hash, EmbeddingStore};
use crate::preprocess::{detokenize, tokenize, Token};
use crate::rng::{self, Rng};
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentMethod {
    #[serde(rename = "BT")]
    BackTranslation,
    #[serde(rename = "SR")]
    Synonym,
    #[serde(rename = "ER")]
    Embedding,
    #[serde(rename = "NI-swap")]
    NoiseSwap,
    #[serde(rename = "NI-delete")]
    NoiseDelete,
    #[serde(rename = "NI-substitute")]
    NoiseSubstitute,
    #[serde(rename = "NI-crop")]
    NoiseCrop,
}

impl AugmentMethod {
    fn code(self) -> u64 {
        self as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedSentence {
    pub base: Example,
    pub text: String,
    pub method: AugmentMethod,
    pub params: String,
    pub identity: bool,
}

impl AugmentedSentence {
    pub(crate) fn new(base: &Example, text: String, method: AugmentMethod, params: String) -> Self {
        AugmentedSentence {
            identity: text == base.text,
            base: base.clone(),
            text,
            method,
            params,
        }
    }

    /// The variant as a training example with the base's gold labels.
    pub fn into_example(self) -> Example {
        Example {
            dpa_id: self.base.dpa_id,
            sentence_index: self.base.sentence_index,
            text: self.text,
            gold_labels: self.base.gold_labels,
            origin: Origin::Augmented {
                method: self.method,
                params: self.params,
                identity: self.identity,
            },
        }
    }
}

/// Variants produced by one augmentation run, with the number of
/// (sentence, variant) slots that produced nothing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Augmentation {
    pub variants: Vec<AugmentedSentence>,
    pub dropped: usize,
    pub failures: Vec<String>,
}

impl Augmentation {
    pub(crate) fn collect(per_sentence: Vec<Vec<Option<AugmentedSentence>>>) -> Self {
        let mut out = Augmentation::default();
        for slot in per_sentence.into_iter().flatten() {
            match slot {
                Some(v) => out.variants.push(v),
                None => out.dropped += 1,
            }
        }
        out
    }
}

pub(crate) fn sentence_rng(seed: u64, e: &Example, method: AugmentMethod, variant: u64) -> Rng {
    rng::keyed(
        seed,
        &[
            content_hash(&e.text),
            content_hash(&e.dpa_id),
            u64::from(e.sentence_index),
            method.code(),
            variant,
        ],
    )
}

/// Rebuilds `text` with the given token positions replaced, keeping all other
/// characters (spacing included) as they were.
pub(crate) fn splice(
    text: &str,
    tokens: &[Token],
    replacements: &BTreeMap<usize, String>,
) -> String {
    let mut out = String::with_capacity(text.len());
    let mut at = 0;
    for (&i, r) in replacements {
        out.push_str(&text[at..tokens[i].start]);
        out.push_str(r);
        at = tokens[i].end;
    }
    out.push_str(&text[at..]);
    out
}

/// Carries the capitalization of `original`'s first letter over to `word`.
pub(crate) fn match_case(original: &str, word: &str) -> String {
    if original.chars().next().is_some_and(char::is_uppercase) {
        let mut c = word.chars();
        match c.next() {
            Some(f) => f.to_uppercase().chain(c).collect(),
            None => String::new(),
        }
    } else {
        word.to_string()
    }
}

/// Synonym replacement: per sentence and lexicon one variant replacing up to
/// `max_replacements` content words that have lexicon entries. Sentences
/// with no such word are dropped (and counted).
pub fn augment_synonym(
    positives: &[Example],
    lexicons: &[SynonymLexicon],
    max_replacements: usize,
    seed: u64,
) -> Result<Augmentation> {
    if lexicons.is_empty() {
        return Err(Error::InvalidInput(
            "synonym replacement needs at least one lexicon".into(),
        ));
    }
    let per = par::map(positives, |e| {
        let tokens = tokenize(&e.text);
        lexicons
            .iter()
            .enumerate()
            .map(|(li, lex)| {
                let eligible: Vec<usize> = (0..tokens.len())
                    .filter(|&i| {
                        is_content_word(&tokens[i].text) && lex.synonyms(&tokens[i].text).is_some()
                    })
                    .collect();
                if eligible.is_empty() {
                    return None;
                }
                let mut rng = sentence_rng(seed, e, AugmentMethod::Synonym, li as u64);
                let k = max_replacements.max(1).min(eligible.len());
                let mut picks: Vec<usize> = sample(&mut rng, eligible.len(), k)
                    .into_iter()
                    .map(|j| eligible[j])
                    .collect();
                picks.sort_unstable();
                let mut repl = BTreeMap::new();
                let mut notes = Vec::new();
                for i in picks {
                    let syns = lex.synonyms(&tokens[i].text).expect("eligible");
                    let s = match_case(&tokens[i].text, &syns[rng.random_range(0..syns.len())]);
                    notes.push(format!("{}->{}", tokens[i].text, s));
                    repl.insert(i, s);
                }
                let text = splice(&e.text, &tokens, &repl);
                let params = format!("lexicon={}; {}", lex.source_name, notes.join(", "));
                Some(AugmentedSentence::new(
                    e,
                    text,
                    AugmentMethod::Synonym,
                    params,
                ))
            })
            .collect()
    });
    Ok(Augmentation::collect(per))
}

/// Embedding replacement: per sentence `variants` variants, each replacing
/// one seeded content word by its nearest vocabulary neighbour.
pub fn augment_embedding(
    positives: &[Example],
    store: &EmbeddingStore,
    variants: usize,
    seed: u64,
) -> Result<Augmentation> {
    let vocab = store
        .vocabulary()
        .ok_or_else(|| Error::Capability("embedding store has no vocabulary section".into()))?;
    // one neighbour lookup per distinct word
    let words: BTreeSet<String> = positives
        .iter()
        .flat_map(|e| tokenize(&e.text))
        .filter(|t| is_content_word(&t.text))
        .map(|t| t.text.to_lowercase())
        .collect();
    let words: Vec<String> = words.into_iter().collect();
    let found = par::try_map(&words, |w| vocab.nearest(w))?;
    let nearest: HashMap<&str, String> = words
        .iter()
        .zip(found)
        .filter_map(|(w, hit)| hit.map(|(n, _)| (w.as_str(), n)))
        .collect();
    let per = par::try_map(positives, |e| -> Result<Vec<Option<AugmentedSentence>>> {
        let tokens = tokenize(&e.text);
        let mut candidates: Vec<(usize, String)> = Vec::new();
        for (i, t) in tokens.iter().enumerate() {
            if is_content_word(&t.text) {
                if let Some(w) = nearest.get(t.text.to_lowercase().as_str()) {
                    candidates.push((i, w.clone()));
                }
            }
        }
        Ok((0..variants)
            .map(|v| {
                if candidates.is_empty() {
                    return None;
                }
                let mut rng = sentence_rng(seed, e, AugmentMethod::Embedding, v as u64);
                let (i, w) = &candidates[rng.random_range(0..candidates.len())];
                let s = match_case(&tokens[*i].text, w);
                let params = format!("{}->{}", tokens[*i].text, s);
                let text = splice(&e.text, &tokens, &BTreeMap::from([(*i, s)]));
                Some(AugmentedSentence::new(
                    e,
                    text,
                    AugmentMethod::Embedding,
                    params,
                ))
            })
            .collect())
    })?;
    Ok(Augmentation::collect(per))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOp {
    Swap,
    Delete,
    Substitute,
    Crop,
}

impl NoiseOp {
    pub const ALL: [NoiseOp; 4] = [
        NoiseOp::Swap,
        NoiseOp::Delete,
        NoiseOp::Substitute,
        NoiseOp::Crop,
    ];

    fn method(self) -> AugmentMethod {
        match self {
            NoiseOp::Swap => AugmentMethod::NoiseSwap,
            NoiseOp::Delete => AugmentMethod::NoiseDelete,
            NoiseOp::Substitute => AugmentMethod::NoiseSubstitute,
            NoiseOp::Crop => AugmentMethod::NoiseCrop,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    pub delete_fraction: f64,
    pub substitute_fraction: f64,
    /// Smallest kept share of tokens when cropping.
    pub crop_min_fraction: f64,
    pub min_tokens: usize,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            delete_fraction: 0.10,
            substitute_fraction: 0.10,
            crop_min_fraction: 0.70,
            min_tokens: 4,
        }
    }
}

/// Token-level result of one noise op.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum NoiseEdit {
    Swap(usize, usize),
    Delete(Vec<usize>),
    Substitute(BTreeMap<usize, String>),
    Crop { start: usize, len: usize },
}

fn count_for(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).ceil() as usize).clamp(1, n)
}

pub(crate) fn draw_edit(
    op: NoiseOp,
    n: usize,
    cfg: &NoiseConfig,
    vocabulary: &[String],
    rng: &mut Rng,
) -> Option<NoiseEdit> {
    if n < cfg.min_tokens.max(2) {
        return None;
    }
    match op {
        NoiseOp::Swap => {
            let p = sample(rng, n, 2);
            let (a, b) = (p.index(0), p.index(1));
            Some(NoiseEdit::Swap(a.min(b), a.max(b)))
        }
        NoiseOp::Delete => {
            let mut idx = sample(rng, n, count_for(cfg.delete_fraction, n).min(n - 1)).into_vec();
            idx.sort_unstable();
            Some(NoiseEdit::Delete(idx))
        }
        NoiseOp::Substitute => {
            if vocabulary.is_empty() {
                return None;
            }
            let idx = sample(rng, n, count_for(cfg.substitute_fraction, n)).into_vec();
            let mut map = BTreeMap::new();
            for i in idx {
                map.insert(i, vocabulary[rng.random_range(0..vocabulary.len())].clone());
            }
            Some(NoiseEdit::Substitute(map))
        }
        NoiseOp::Crop => {
            let min_len = ((cfg.crop_min_fraction * n as f64).ceil() as usize).clamp(1, n);
            if min_len >= n {
                return Some(NoiseEdit::Crop { start: 0, len: n });
            }
            let len = rng.random_range(min_len..n);
            let start = rng.random_range(0..=n - len);
            Some(NoiseEdit::Crop { start, len })
        }
    }
}

/// Applies an edit to token texts.
pub(crate) fn apply_edit(tokens: &[String], edit: &NoiseEdit) -> Vec<String> {
    match edit {
        NoiseEdit::Swap(a, b) => {
            let mut t = tokens.to_vec();
            t.swap(*a, *b);
            t
        }
        NoiseEdit::Delete(idx) => tokens
            .iter()
            .enumerate()
            .filter(|(i, _)| idx.binary_search(i).is_err())
            .map(|(_, t)| t.clone())
            .collect(),
        NoiseEdit::Substitute(map) => tokens
            .iter()
            .enumerate()
            .map(|(i, t)| map.get(&i).cloned().unwrap_or_else(|| t.clone()))
            .collect(),
        NoiseEdit::Crop { start, len } => tokens[*start..start + len].to_vec(),
    }
}

fn render_edit(text: &str, tokens: &[Token], edit: &NoiseEdit) -> (String, String) {
    let texts: Vec<String> = tokens.iter().map(|t| t.text.clone()).collect();
    match edit {
        NoiseEdit::Swap(a, b) => {
            let repl = BTreeMap::from([(*a, texts[*b].clone()), (*b, texts[*a].clone())]);
            (splice(text, tokens, &repl), format!("positions={a},{b}"))
        }
        NoiseEdit::Substitute(map) => {
            let notes: Vec<String> = map.iter().map(|(i, w)| format!("{i}:{w}")).collect();
            (splice(text, tokens, map), notes.join(","))
        }
        NoiseEdit::Delete(idx) => {
            let notes: Vec<String> = idx.iter().map(usize::to_string).collect();
            (
                detokenize(&apply_edit(&texts, edit)),
                format!("deleted={}", notes.join(",")),
            )
        }
        NoiseEdit::Crop { start, len } => {
            let t = if *len == tokens.len() {
                text.to_string()
            } else {
                detokenize(&apply_edit(&texts, edit))
            };
            (t, format!("window={start}+{len}"))
        }
    }
}

/// Noise injection: one variant per sentence per op. Sentences shorter than
/// `min_tokens` skip the op (counted as dropped), as does substitution
/// without a vocabulary.
pub fn augment_noise(
    positives: &[Example],
    ops: &[NoiseOp],
    cfg: &NoiseConfig,
    vocabulary: &[String],
    seed: u64,
) -> Result<Augmentation> {
    let per = par::map(positives, |e| {
        let tokens = tokenize(&e.text);
        ops.iter()
            .map(|&op| {
                let mut rng = sentence_rng(seed, e, op.method(), 0);
                let edit = draw_edit(op, tokens.len(), cfg, vocabulary, &mut rng)?;
                let (text, params) = render_edit(&e.text, &tokens, &edit);
                Some(AugmentedSentence::new(e, text, op.method(), params))
            })
            .collect()
    });
    Ok(Augmentation::collect(per))
}

/// Distinct lower-cased word tokens of `examples`, sorted.
pub(crate) fn word_vocabulary(examples: &[Example]) -> Vec<String> {
    let mut words: Vec<String> = examples
        .iter()
        .flat_map(|e| tokenize(&e.text))
        .filter(|t| is_content_word(&t.text))
        .map(|t| t.text.to_lowercase())
        .collect();
    words.sort();
    words.dedup();
    words
}
