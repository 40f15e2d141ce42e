//! Ground-truth data model: provision catalog, labeled DPA sentences,
//! DPA-level splitting and corpus statistics.
//!
//! # File formats
//!
//! The catalog is a JSON document:
//!
//! ```json
//! { "regulation_name": "GDPR",
//!   "provisions": [ { "id": "PO1", "title": "...", "description": "..." } ] }
//! ```
//!
//! The ground truth is line-delimited JSON, one sentence per line:
//!
//! ```json
//! {"dpa_id":"dpa-01","sentence_index":0,"text":"PROCESSOR shall ...","labels":["PO1"]}
//! ```
//!
//! An optional first line `{"meta":{...}}` carries free-text provenance and
//! an optional claim of corpus size that is checked at load time.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::{rng, Error, Result};

/// Identifier of a catalog provision, e.g. `PO1`: letters followed by digits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ProvisionId(String);

impl ProvisionId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let letters = id.chars().take_while(|c| c.is_ascii_alphabetic()).count();
        let rest = &id[letters..];
        if letters == 0 || rest.is_empty() || !rest.chars().all(|c| c.is_ascii_digit()) {
            return Err(Error::Validation(format!(
                "provision id {id:?} must be letters followed by digits"
            )));
        }
        Ok(ProvisionId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ProvisionId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        ProvisionId::new(s)
    }
}

impl From<ProvisionId> for String {
    fn from(p: ProvisionId) -> String {
        p.0
    }
}

impl fmt::Display for ProvisionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provision {
    pub id: ProvisionId,
    pub title: String,
    #[serde(default)]
    pub description: String,
}

/// Ordered provisions. The order defines class indices everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionCatalog {
    pub regulation_name: String,
    pub provisions: Vec<Provision>,
}

impl ProvisionCatalog {
    pub fn new(regulation_name: impl Into<String>, provisions: Vec<Provision>) -> Result<Self> {
        let catalog = ProvisionCatalog {
            regulation_name: regulation_name.into(),
            provisions,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn validate(&self) -> Result<()> {
        if self.provisions.is_empty() {
            return Err(Error::Validation("catalog has no provisions".into()));
        }
        let mut seen = HashSet::new();
        for p in &self.provisions {
            if !seen.insert(&p.id) {
                return Err(Error::Validation(format!(
                    "duplicate provision id {}",
                    p.id
                )));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }

    pub fn from_json(text: &str, source_name: &str) -> Result<Self> {
        let catalog: ProvisionCatalog = serde_json::from_str(text).map_err(|e| Error::Parse {
            source_name: source_name.to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        catalog.validate()?;
        Ok(catalog)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn len(&self) -> usize {
        self.provisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.provisions.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ProvisionId> {
        self.provisions.iter().map(|p| &p.id)
    }

    pub fn index_of(&self, id: &ProvisionId) -> Option<usize> {
        self.provisions.iter().position(|p| &p.id == id)
    }

    pub fn get(&self, id: &ProvisionId) -> Option<&Provision> {
        self.provisions.iter().find(|p| &p.id == id)
    }

    /// Resolves a raw id string against the catalog.
    pub fn resolve(&self, raw: &str) -> Result<ProvisionId> {
        self.provisions
            .iter()
            .find(|p| p.id.as_str() == raw)
            .map(|p| p.id.clone())
            .ok_or_else(|| Error::UnknownProvision(raw.to_string()))
    }

    pub fn digest(&self) -> String {
        crate::digest::sha256_hex(self.to_json().as_bytes())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub dpa_id: String,
    pub sentence_index: u32,
    pub text: String,
    #[serde(rename = "labels")]
    pub gold_labels: BTreeSet<ProvisionId>,
}

impl Sentence {
    pub fn is_positive(&self) -> bool {
        !self.gold_labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dpa {
    pub dpa_id: String,
    pub sentences: Vec<Sentence>,
}

impl Dpa {
    /// Provisions satisfied by at least one gold sentence.
    pub fn satisfied(&self) -> BTreeSet<ProvisionId> {
        self.sentences
            .iter()
            .flat_map(|s| s.gold_labels.iter().cloned())
            .collect()
    }
}

/// Size claimed in a ground-truth header, verified against the actual data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusClaim {
    pub dpas: usize,
    pub sentences: usize,
    pub positives: usize,
}

/// Size of the reference annotated corpus the catalog was designed around.
pub const REFERENCE_CLAIM: CorpusClaim = CorpusClaim {
    dpas: 169,
    sentences: 31_185,
    positives: 3_387,
};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct CorpusMeta {
    #[serde(default)]
    provenance: String,
    #[serde(default)]
    claim: Option<CorpusClaim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub catalog: ProvisionCatalog,
    pub dpas: Vec<Dpa>,
    pub provenance: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRecord {
    dpa_id: String,
    sentence_index: u32,
    text: String,
    #[serde(default)]
    labels: Vec<String>,
}

impl LabeledCorpus {
    /// Builds a corpus from flat sentences, grouping by `dpa_id` in order of
    /// first appearance and ordering sentences by index.
    pub fn from_sentences(
        catalog: ProvisionCatalog,
        sentences: Vec<Sentence>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let mut order: Vec<String> = Vec::new();
        let mut groups: BTreeMap<String, Vec<Sentence>> = BTreeMap::new();
        for s in sentences {
            if !groups.contains_key(&s.dpa_id) {
                order.push(s.dpa_id.clone());
            }
            groups.entry(s.dpa_id.clone()).or_default().push(s);
        }
        let dpas = order
            .into_iter()
            .map(|id| {
                let mut sentences = groups.remove(&id).unwrap_or_default();
                sentences.sort_by_key(|s| s.sentence_index);
                Dpa {
                    dpa_id: id,
                    sentences,
                }
            })
            .collect();
        let corpus = LabeledCorpus {
            catalog,
            dpas,
            provenance: provenance.into(),
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        self.catalog.validate()?;
        let mut ids = HashSet::new();
        for dpa in &self.dpas {
            if !ids.insert(dpa.dpa_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate dpa_id {}",
                    dpa.dpa_id
                )));
            }
            let mut idx = HashSet::new();
            for s in &dpa.sentences {
                if s.dpa_id != dpa.dpa_id {
                    return Err(Error::Validation(format!(
                        "sentence of {} filed under {}",
                        s.dpa_id, dpa.dpa_id
                    )));
                }
                if !idx.insert(s.sentence_index) {
                    return Err(Error::Validation(format!(
                        "duplicate sentence ({}, {})",
                        s.dpa_id, s.sentence_index
                    )));
                }
                if s.text.trim().is_empty() {
                    return Err(Error::Validation(format!(
                        "empty text at ({}, {})",
                        s.dpa_id, s.sentence_index
                    )));
                }
                for l in &s.gold_labels {
                    if self.catalog.index_of(l).is_none() {
                        return Err(Error::UnknownProvision(l.to_string()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.dpas.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn sentence_count(&self) -> usize {
        self.dpas.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn positive_count(&self) -> usize {
        self.sentences().filter(|s| s.is_positive()).count()
    }

    pub fn dpa(&self, id: &str) -> Option<&Dpa> {
        self.dpas.iter().find(|d| d.dpa_id == id)
    }

    /// Sub-corpus holding the given DPAs, in this corpus' order.
    pub fn subset(&self, ids: &BTreeSet<String>) -> LabeledCorpus {
        LabeledCorpus {
            catalog: self.catalog.clone(),
            dpas: self
                .dpas
                .iter()
                .filter(|d| ids.contains(&d.dpa_id))
                .cloned()
                .collect(),
            provenance: self.provenance.clone(),
        }
    }

    /// Writes the line-delimited ground truth (no header line).
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for s in self.sentences() {
            let labels: Vec<&str> = s.gold_labels.iter().map(|l| l.as_str()).collect();
            let rec = serde_json::json!({
                "dpa_id": s.dpa_id,
                "sentence_index": s.sentence_index,
                "text": s.text,
                "labels": labels,
            });
            writeln!(out, "{rec}")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("utf-8")
    }
}

/// Reads a ground-truth file and resolves its labels against the catalog.
pub fn load_ground_truth(path: &Path, catalog_path: &Path) -> Result<LabeledCorpus> {
    let catalog = ProvisionCatalog::load(catalog_path)?;
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ground_truth(BufReader::new(file), &path.display().to_string(), catalog)
}

pub fn parse_ground_truth<R: BufRead>(
    reader: R,
    source_name: &str,
    catalog: ProvisionCatalog,
) -> Result<LabeledCorpus> {
    let mut meta = CorpusMeta::default();
    let mut sentences = Vec::new();
    let mut keys = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(source_name, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            source_name: source_name.to_string(),
            line: lineno,
            message,
        };
        if lineno == 1 && trimmed.starts_with("{\"meta\"") {
            #[derive(Deserialize)]
            struct Header {
                meta: CorpusMeta,
            }
            let h: Header = serde_json::from_str(trimmed).map_err(|e| parse_err(e.to_string()))?;
            meta = h.meta;
            continue;
        }
        let rec: RawRecord = serde_json::from_str(trimmed).map_err(|e| parse_err(e.to_string()))?;
        if rec.text.trim().is_empty() {
            return Err(parse_err("empty sentence text".into()));
        }
        if !keys.insert((rec.dpa_id.clone(), rec.sentence_index)) {
            return Err(parse_err(format!(
                "duplicate sentence ({}, {})",
                rec.dpa_id, rec.sentence_index
            )));
        }
        let gold_labels = rec
            .labels
            .iter()
            .map(|l| catalog.resolve(l))
            .collect::<Result<BTreeSet<_>>>()?;
        sentences.push(Sentence {
            dpa_id: rec.dpa_id,
            sentence_index: rec.sentence_index,
            text: rec.text,
            gold_labels,
        });
    }
    let corpus = LabeledCorpus::from_sentences(catalog, sentences, meta.provenance)?;
    if let Some(claim) = meta.claim {
        corpus_stats(&corpus).verify_claim(&claim)?;
    }
    Ok(corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
    pub dev_fraction: f64,
    pub val_fraction_of_dev: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            seed: 0,
            dev_fraction: 0.70,
            val_fraction_of_dev: 0.20,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("dev_fraction", self.dev_fraction),
            ("val_fraction_of_dev", self.val_fraction_of_dev),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::Validation(format!(
                    "{name} must lie in (0, 1), got {f}"
                )));
            }
        }
        Ok(())
    }
}

/// DPA ids of each part; serialized as the split manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub spec: SplitSpec,
    pub dev: Vec<String>,
    pub eval: Vec<String>,
    pub train: Vec<String>,
    pub val: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct CorpusSplit {
    pub assignment: SplitAssignment,
    pub dev: LabeledCorpus,
    pub eval: LabeledCorpus,
    pub train: LabeledCorpus,
    pub val: LabeledCorpus,
}

/// Splits at whole-DPA granularity: sort ids, seeded shuffle, cut.
///
/// `|dev| = round(dev_fraction * n)`, `|val| = round(val_fraction_of_dev * |dev|)`.
/// Dev, eval and train must be non-empty; val may be empty for tiny corpora.
pub fn split_dpas(corpus: &LabeledCorpus, spec: &SplitSpec) -> Result<CorpusSplit> {
    spec.validate()?;
    let n = corpus.dpas.len();
    if n < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 DPAs to split, have {n}"
        )));
    }
    let n_dev = (spec.dev_fraction * n as f64).round() as usize;
    if n_dev == 0 || n_dev >= n {
        return Err(Error::Validation(format!(
            "dev fraction {} of {n} DPAs leaves an empty part",
            spec.dev_fraction
        )));
    }
    let n_val = (spec.val_fraction_of_dev * n_dev as f64).round() as usize;
    if n_val >= n_dev {
        return Err(Error::Validation(format!(
            "validation fraction {} of {n_dev} dev DPAs leaves no training DPA",
            spec.val_fraction_of_dev
        )));
    }

    let mut ids: Vec<String> = corpus.dpas.iter().map(|d| d.dpa_id.clone()).collect();
    ids.sort();
    ids.shuffle(&mut rng::from_seed(spec.seed));

    let (dev_ids, eval_ids) = ids.split_at(n_dev);
    let (train_ids, val_ids) = dev_ids.split_at(n_dev - n_val);

    let in_corpus_order = |part: &[String]| -> Vec<String> {
        let set: HashSet<&String> = part.iter().collect();
        corpus
            .dpas
            .iter()
            .filter(|d| set.contains(&d.dpa_id))
            .map(|d| d.dpa_id.clone())
            .collect()
    };
    let assignment = SplitAssignment {
        spec: *spec,
        dev: in_corpus_order(dev_ids),
        eval: in_corpus_order(eval_ids),
        train: in_corpus_order(train_ids),
        val: in_corpus_order(val_ids),
    };
    let part = |ids: &[String]| corpus.subset(&ids.iter().cloned().collect());
    Ok(CorpusSplit {
        dev: part(&assignment.dev),
        eval: part(&assignment.eval),
        train: part(&assignment.train),
        val: part(&assignment.val),
        assignment,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsTable {
    pub total_dpas: usize,
    pub total_sentences: usize,
    pub positive_sentences: usize,
    pub positive_fraction: f64,
    pub per_provision: Vec<(ProvisionId, usize)>,
}

impl StatsTable {
    pub fn count(&self, id: &ProvisionId) -> Option<usize> {
        self.per_provision
            .iter()
            .find(|(p, _)| p == id)
            .map(|(_, c)| *c)
    }

    pub fn verify_claim(&self, claim: &CorpusClaim) -> Result<()> {
        let actual = CorpusClaim {
            dpas: self.total_dpas,
            sentences: self.total_sentences,
            positives: self.positive_sentences,
        };
        if actual != *claim {
            return Err(Error::Validation(format!(
                "corpus claims {} DPAs / {} sentences / {} positives but holds {} / {} / {}",
                claim.dpas,
                claim.sentences,
                claim.positives,
                actual.dpas,
                actual.sentences,
                actual.positives
            )));
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("provision\tpositives\n");
        for (id, c) in &self.per_provision {
            out.push_str(&format!("{id}\t{c}\n"));
        }
        out.push_str(&format!("#dpas\t{}\n", self.total_dpas));
        out.push_str(&format!("#sentences\t{}\n", self.total_sentences));
        out.push_str(&format!(
            "#positive_sentences\t{}\n",
            self.positive_sentences
        ));
        out.push_str(&format!(
            "#positive_fraction\t{:.6}\n",
            self.positive_fraction
        ));
        out
    }
}

pub fn corpus_stats(corpus: &LabeledCorpus) -> StatsTable {
    let mut counts: Vec<usize> = vec![0; corpus.catalog.len()];
    for s in corpus.sentences() {
        for l in &s.gold_labels {
            if let Some(i) = corpus.catalog.index_of(l) {
                counts[i] += 1;
            }
        }
    }
    let total = corpus.sentence_count();
    let positives = corpus.positive_count();
    StatsTable {
        total_dpas: corpus.dpas.len(),
        total_sentences: total,
        positive_sentences: positives,
        positive_fraction: if total == 0 {
            0.0
        } else {
            positives as f64 / total as f64
        },
        per_provision: corpus.catalog.ids().cloned().zip(counts).collect(),
    }
}
