//! Class-imbalance handling for training sets: random under/over-sampling,
//! four augmentation families (synonym replacement, embedding-neighbour
//! replacement, noise injection, back-translation) and named recipes that
//! chain them.

mod augment;
mod lexicon;
mod recipe;
mod resample;
mod translate;

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use augment::{
    augment_embedding, augment_noise, augment_synonym, AugmentMethod, Augmentation,
    AugmentedSentence, NoiseConfig, NoiseOp,
};
pub use lexicon::{is_content_word, SynonymLexicon, STOPWORDS};
pub use recipe::{
    build_variant, builtin_recipes, AugmentFamily, Resources, Step, VariantManifest, VariantRecipe,
};
pub use resample::{random_oversample, random_undersample, under_oversample};
pub use translate::{
    augment_backtranslate, HttpTranslator, IdentityTranslator, TableTranslator, Translator,
    DEFAULT_PIVOTS,
};

use crate::classifiers::TaskSpec;
use crate::corpus::{LabeledCorpus, ProvisionId};
use crate::{Error, Result};

/// Where a training example came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Original,
    /// Copy made by oversampling.
    Duplicate,
    Augmented {
        method: AugmentMethod,
        params: String,
        /// The method left the text unchanged.
        identity: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub dpa_id: String,
    pub sentence_index: u32,
    pub text: String,
    #[serde(rename = "labels")]
    pub gold_labels: BTreeSet<ProvisionId>,
    pub origin: Origin,
}

impl Example {
    pub fn is_positive(&self) -> bool {
        !self.gold_labels.is_empty()
    }
}

/// A flat training set: corpus sentences plus any duplicates and variants.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn from_corpus(corpus: &LabeledCorpus) -> Self {
        Dataset {
            examples: corpus
                .sentences()
                .map(|s| Example {
                    dpa_id: s.dpa_id.clone(),
                    sentence_index: s.sentence_index,
                    text: s.text.clone(),
                    gold_labels: s.gold_labels.clone(),
                    origin: Origin::Original,
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Example count per class name of `task`, every class present.
    pub fn class_counts(&self, task: &TaskSpec) -> BTreeMap<String, usize> {
        let mut counts: BTreeMap<String, usize> =
            task.classes.iter().map(|c| (c.clone(), 0)).collect();
        for e in &self.examples {
            *counts
                .get_mut(&task.classes[task.class_of(&e.gold_labels)])
                .unwrap() += 1;
        }
        counts
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.examples {
            out.push_str(&serde_json::to_string(e).expect("example serializes"));
            out.push('\n');
        }
        out
    }

    pub fn parse_jsonl<R: BufRead>(reader: R, source_name: &str) -> Result<Self> {
        let mut examples = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source_name, e))?;
            if line.trim().is_empty() {
                continue;
            }
            examples.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                source_name: source_name.into(),
                line: i + 1,
                message: e.to_string(),
            })?);
        }
        Ok(Dataset { examples })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(std::io::BufReader::new(f), &path.display().to_string())
    }

    /// `(text, labels)` pairs for feature building.
    pub fn items(&self) -> impl Iterator<Item = (&str, &BTreeSet<ProvisionId>)> {
        self.examples
            .iter()
            .map(|e| (e.text.as_str(), &e.gold_labels))
    }
}
