use std::collections::BTreeMap;
use std::path::Path;

use crate::{Error, Result};

/// Function words never chosen for replacement.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "also", "am", "an", "and", "any",
    "are", "as", "at", "be", "because", "been", "before", "being", "below", "between", "both",
    "but", "by", "can", "could", "did", "do", "does", "doing", "down", "during", "each", "either",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "itself", "may", "me",
    "might", "more", "most", "must", "my", "neither", "no", "nor", "not", "of", "off", "on",
    "once", "only", "or", "other", "our", "ours", "out", "over", "own", "same", "shall", "she",
    "should", "so", "some", "such", "than", "that", "the", "their", "theirs", "them", "then",
    "there", "these", "they", "this", "those", "through", "to", "too", "under", "until", "up",
    "upon", "very", "was", "we", "were", "what", "when", "where", "whether", "which", "while",
    "who", "whom", "why", "will", "with", "within", "without", "would", "you", "your",
];

/// Alphabetic and not a stopword (case-insensitive).
pub fn is_content_word(token: &str) -> bool {
    !token.is_empty()
        && token.chars().all(char::is_alphabetic)
        && !STOPWORDS.contains(&token.to_lowercase().as_str())
}

/// Lower-case word to synonyms, from a `word TAB syn,syn,...` file.
#[derive(Debug, Clone, PartialEq)]
pub struct SynonymLexicon {
    pub source_name: String,
    entries: BTreeMap<String, Vec<String>>,
}

impl SynonymLexicon {
    /// Synonyms equal to their headword are dropped; an entry left empty is
    /// an error, as is a lexicon without entries.
    pub fn new(source_name: impl Into<String>, raw: BTreeMap<String, Vec<String>>) -> Result<Self> {
        let source_name = source_name.into();
        let mut entries = BTreeMap::new();
        for (word, syns) in raw {
            let word = word.trim().to_lowercase();
            let syns: Vec<String> = syns
                .into_iter()
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty() && s.to_lowercase() != word)
                .collect();
            if word.is_empty() || syns.is_empty() {
                return Err(Error::Validation(format!(
                    "lexicon {source_name}: entry {word:?} has no synonym other than itself"
                )));
            }
            entries.insert(word, syns);
        }
        if entries.is_empty() {
            return Err(Error::Validation(format!("lexicon {source_name} is empty")));
        }
        Ok(SynonymLexicon {
            source_name,
            entries,
        })
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut raw: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, syns) = line.split_once('\t').ok_or_else(|| Error::Parse {
                source_name: source_name.into(),
                line: i + 1,
                message: "expected `word<TAB>synonym,synonym,...`".into(),
            })?;
            raw.entry(word.to_string())
                .or_default()
                .extend(syns.split(',').map(str::to_string));
        }
        Self::new(source_name, raw)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn synonyms(&self, word: &str) -> Option<&[String]> {
        self.entries.get(&word.to_lowercase()).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
