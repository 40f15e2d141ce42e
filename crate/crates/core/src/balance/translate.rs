use std::collections::BTreeMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::augment::{match_case, splice};
use super::{AugmentMethod, Augmentation, AugmentedSentence, Example};
use crate::embedding::provider::{http_agent, post_json_with_retry};
use crate::preprocess::tokenize;
use crate::{par, Error, Result};

pub const DEFAULT_PIVOTS: [&str; 2] = ["fr", "de"];

/// Share of failed translation attempts above which a run is aborted.
const MAX_FAILURE_RATE: f64 = 0.20;

pub trait Translator: Send + Sync {
    fn translate(&self, text: &str, src: &str, dst: &str) -> Result<String>;
}

/// Returns the input unchanged.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityTranslator;

impl Translator for IdentityTranslator {
    fn translate(&self, text: &str, _src: &str, _dst: &str) -> Result<String> {
        Ok(text.to_string())
    }
}

/// Word-for-word lookup per language pair; unknown words pass through.
#[derive(Debug, Clone, Default)]
pub struct TableTranslator {
    tables: BTreeMap<(String, String), BTreeMap<String, String>>,
}

impl TableTranslator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, src: &str, dst: &str, pairs: &[(&str, &str)]) -> Self {
        let table = self.tables.entry((src.into(), dst.into())).or_default();
        for (a, b) in pairs {
            table.insert(a.to_lowercase(), (*b).to_string());
        }
        self
    }
}

impl Translator for TableTranslator {
    fn translate(&self, text: &str, src: &str, dst: &str) -> Result<String> {
        let Some(table) = self.tables.get(&(src.to_string(), dst.to_string())) else {
            return Err(Error::Capability(format!(
                "no translation table {src}->{dst}"
            )));
        };
        let tokens = tokenize(text);
        let repl: BTreeMap<usize, String> = tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| {
                table
                    .get(&t.text.to_lowercase())
                    .map(|w| (i, match_case(&t.text, w)))
            })
            .collect();
        Ok(splice(text, &tokens, &repl))
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    src: &'a str,
    dst: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

/// Client for `POST {"text", "src", "dst"}` answering `{"text"}`.
pub struct HttpTranslator {
    endpoint: String,
    agent: ureq::Agent,
    retries: u32,
    backoff: Duration,
}

impl HttpTranslator {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpTranslator {
            endpoint: endpoint.into(),
            agent: http_agent(Duration::from_secs(30)),
            retries: 3,
            backoff: Duration::from_millis(200),
        }
    }

    pub fn with_retries(mut self, retries: u32, backoff: Duration) -> Self {
        self.retries = retries;
        self.backoff = backoff;
        self
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, src: &str, dst: &str) -> Result<String> {
        let resp: TranslateResponse = post_json_with_retry(
            &self.agent,
            &self.endpoint,
            &TranslateRequest { text, src, dst },
            self.retries,
            self.backoff,
        )?;
        Ok(resp.text)
    }
}

/// Back-translation through each pivot language: one variant per sentence
/// and pivot. Failed round trips are listed in `failures`; more than 20%
/// failed attempts aborts the run.
pub fn augment_backtranslate(
    positives: &[Example],
    translator: &dyn Translator,
    pivots: &[String],
) -> Result<Augmentation> {
    if pivots.is_empty() {
        return Err(Error::InvalidInput(
            "back-translation needs at least one pivot language".into(),
        ));
    }
    let per = par::map(positives, |e| {
        pivots
            .iter()
            .map(|pivot| {
                translator
                    .translate(&e.text, "en", pivot)
                    .and_then(|f| translator.translate(&f, pivot, "en"))
                    .map(|back| {
                        AugmentedSentence::new(
                            e,
                            back,
                            AugmentMethod::BackTranslation,
                            format!("pivot={pivot}"),
                        )
                    })
                    .map_err(|err| format!("{}#{} via {pivot}: {err}", e.dpa_id, e.sentence_index))
            })
            .collect::<Vec<_>>()
    });
    let mut out = Augmentation::default();
    let mut attempts = 0usize;
    for r in per.into_iter().flatten() {
        attempts += 1;
        match r {
            Ok(v) => out.variants.push(v),
            Err(f) => out.failures.push(f),
        }
    }
    if attempts > 0 && out.failures.len() as f64 > MAX_FAILURE_RATE * attempts as f64 {
        return Err(Error::Transport {
            message: format!(
                "back-translation failed for {} of {attempts} attempts; first: {}",
                out.failures.len(),
                out.failures[0]
            ),
            retryable: false,
        });
    }
    out.dropped = out.failures.len();
    Ok(out)
}
