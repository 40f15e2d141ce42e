//! Deterministic synthetic data: a 19-provision catalog, a small labelled
//! DPA corpus with raw documents, alias and synonym files, and a toy
//! sentence encoder whose vectors carry one planted axis per provision.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::corpus::{LabeledCorpus, Provision, ProvisionCatalog, ProvisionId, Sentence};
use crate::embedding::{content_hash, EmbeddingProvider, EmbeddingStore, EmbeddingVector};
use crate::preprocess::tokenize;
use crate::{rng, Error, Result};

pub const MODEL_ID: &str = "synthetic-encoder-1";

/// Size of the average DPA used for throughput runs.
pub const THROUGHPUT_SENTENCES: usize = 184;

/// (id, title, anchor words, templates). Templates are written in
/// normalized form; every template uses at least one anchor word and no
/// anchor word of another provision.
const PROVISIONS: [(&str, &str, &[&str], [&str; 3]); 19] = [
    ("PO1", "Process only on documented instructions", &["documented", "instructions", "solely"], [
        "PROCESSOR shall process personal data only on documented instructions from CONTROLLER.",
        "PROCESSOR acts solely on the documented instructions of CONTROLLER.",
        "Personal data is processed solely in line with instructions issued by CONTROLLER.",
    ]),
    ("PO2", "Inform the controller of infringing instructions", &["infringes", "infringement", "unlawful", "opinion"], [
        "PROCESSOR shall immediately tell CONTROLLER if, in its opinion, an instruction infringes applicable law.",
        "Where an instruction appears unlawful in its opinion, PROCESSOR alerts CONTROLLER without undue delay.",
        "PROCESSOR shall flag any instruction that in its opinion constitutes an infringement of data protection law.",
    ]),
    ("PO3", "Confidentiality of authorised persons", &["confidentiality", "confidential", "authorised", "personnel"], [
        "PROCESSOR ensures that persons authorised to process personal data have committed themselves to confidentiality.",
        "All personnel of PROCESSOR with access to personal data are bound by a duty of confidentiality.",
        "PROCESSOR keeps personal data confidential and limits access to authorised personnel.",
    ]),
    ("PO4", "Security of processing", &["security", "technical", "organisational", "encryption"], [
        "PROCESSOR shall implement appropriate technical and organisational measures to ensure a level of security appropriate to the risk.",
        "Security measures taken by PROCESSOR include encryption and pseudonymisation of personal data.",
        "PROCESSOR maintains technical and organisational security controls described in the annex.",
    ]),
    ("PO5", "Authorisation before engaging sub-processors", &["engage", "engaging", "authorisation"], [
        "PROCESSOR shall not engage another processor without specific or general written authorisation of CONTROLLER.",
        "Engaging any sub-processor requires the authorisation of CONTROLLER.",
        "PROCESSOR may engage sub-processors only with the authorisation of CONTROLLER.",
    ]),
    ("PO6", "Inform of changes to sub-processors", &["changes", "replacement", "object", "addition"], [
        "PROCESSOR shall inform CONTROLLER of any intended changes concerning the addition or replacement of sub-processors.",
        "CONTROLLER may object to such changes within thirty days of notice.",
        "PROCESSOR gives CONTROLLER the opportunity to object to the addition of a sub-processor.",
    ]),
    ("PO7", "Same obligations for sub-processors", &["imposes", "equivalent", "flow", "contract", "contracts"], [
        "PROCESSOR imposes on each sub-processor equivalent data protection obligations by way of a contract.",
        "Sub-processor contracts shall contain obligations equivalent to those set out in this agreement.",
        "PROCESSOR shall flow down equivalent data protection obligations to its sub-processors under a written contract.",
    ]),
    ("PO8", "Liability for sub-processors", &["liable", "liability", "fails", "fulfil"], [
        "Where a sub-processor fails to fulfil its obligations, PROCESSOR remains fully liable to CONTROLLER.",
        "PROCESSOR accepts full liability for sub-processors that fail to fulfil their duties.",
        "PROCESSOR remains liable if a sub-processor fails to fulfil its data protection obligations.",
    ]),
    ("PO9", "Assist with data subject rights", &["subjects", "subject", "requests", "request", "rights", "exercise", "exercising"], [
        "PROCESSOR shall assist CONTROLLER in responding to requests from data subjects exercising their rights.",
        "PROCESSOR helps CONTROLLER answer data subject requests concerning their rights.",
        "PROCESSOR forwards any request from a data subject to CONTROLLER and supports the exercise of their rights.",
    ]),
    ("PO10", "Assist with security and related obligations", &["pursuant", "ensuring", "articles", "32", "36"], [
        "PROCESSOR shall assist CONTROLLER in ensuring compliance with the obligations pursuant to Articles 32 to 36.",
        "PROCESSOR supports CONTROLLER in ensuring its obligations pursuant to Articles 32 to 36 are met.",
        "Assistance pursuant to Articles 32 to 36 is provided at the reasonable cost of CONTROLLER.",
    ]),
    ("PO11", "Notify personal data breaches", &["breach", "breaches", "notify"], [
        "PROCESSOR shall notify CONTROLLER without undue delay after becoming aware of a personal data breach.",
        "PROCESSOR shall notify CONTROLLER of any personal data breach within 48 hours.",
        "PROCESSOR shall notify CONTROLLER of breaches and provide all details needed for reporting.",
    ]),
    ("PO12", "Assist with impact assessments", &["impact", "assessment", "assessments"], [
        "PROCESSOR shall assist CONTROLLER with data protection impact assessments.",
        "Where required, PROCESSOR contributes to any impact assessment carried out by CONTROLLER.",
        "PROCESSOR provides input for the data protection impact assessment of new processing operations.",
    ]),
    ("PO13", "Assist with prior consultation", &["consultation", "consult", "prior"], [
        "PROCESSOR shall assist CONTROLLER in the prior consultation of the supervisory authority.",
        "Should CONTROLLER need to consult the supervisory authority prior to processing, PROCESSOR provides reasonable assistance.",
        "PROCESSOR supports any prior consultation with the supervisory authority.",
    ]),
    ("PO14", "Delete or return data at the end of services", &["delete", "deletes", "deletion", "return", "returns", "termination", "end"], [
        "At the end of the provision of services, PROCESSOR shall delete or return all personal data to CONTROLLER.",
        "Upon termination, PROCESSOR returns personal data and deletes existing copies.",
        "PROCESSOR shall certify the deletion of personal data after termination of the services.",
    ]),
    ("PO15", "Information to demonstrate compliance", &["demonstrate", "information", "necessary", "records"], [
        "PROCESSOR shall make available to CONTROLLER all information necessary to demonstrate compliance.",
        "When asked, PROCESSOR provides the information necessary to demonstrate compliance with Article 28.",
        "PROCESSOR keeps records sufficient to demonstrate compliance with its obligations.",
    ]),
    ("PO16", "Allow and contribute to audits", &["audits", "audit", "inspections", "auditor"], [
        "PROCESSOR shall allow for and contribute to audits, including inspections, conducted by CONTROLLER.",
        "CONTROLLER or an auditor mandated by CONTROLLER may audit the facilities of PROCESSOR.",
        "PROCESSOR cooperates with inspections and audits on reasonable notice.",
    ]),
    ("PO17", "Transfers to third countries", &["third", "country", "countries", "international", "transfer", "transfers"], [
        "PROCESSOR shall not transfer personal data to a third country without the approval of CONTROLLER.",
        "Transfers of personal data to third countries or international organisations require appropriate safeguards.",
        "PROCESSOR ensures any international transfer is covered by standard contractual clauses.",
    ]),
    ("PO18", "Inform of legal requirements to process", &["union", "member", "state", "legal", "requirement", "obliges"], [
        "Where Union or Member State law requires processing, PROCESSOR informs CONTROLLER of that legal requirement before processing.",
        "PROCESSOR shall inform CONTROLLER of any legal requirement to process personal data beyond this agreement.",
        "If Member State law obliges PROCESSOR to process data, CONTROLLER is informed in advance unless prohibited.",
    ]),
    ("PO19", "Cooperate with the supervisory authority", &["cooperate", "cooperation", "enquiries"], [
        "PROCESSOR shall cooperate with the supervisory authority and answer its enquiries in the performance of its tasks.",
        "PROCESSOR answers enquiries of the supervisory authority in cooperation with CONTROLLER.",
        "PROCESSOR and CONTROLLER cooperate fully with the supervisory authority on any enquiries.",
    ]),
];

/// Sentences that satisfy no provision.
const FILLERS: [&str; 24] = [
    "This agreement is governed by the laws of Luxembourg.",
    "Capitalised terms have the meaning given in the main agreement.",
    "The parties have signed this agreement on the date below.",
    "Schedule 1 lists the categories of personal data processed.",
    "The processing concerns customer contact details and billing data.",
    "Each party bears its own costs in connection with this agreement.",
    "Notices shall be sent to the addresses set out above.",
    "This agreement enters into force on the effective date.",
    "Headings are for convenience only.",
    "The duration of processing equals the term of the services.",
    "The processing relates to the hosting of an online shop.",
    "The affected individuals include employees and customers.",
    "The nature of processing comprises storage and backup.",
    "Any amendment to this agreement must be made in writing.",
    "If a clause is invalid, the remaining clauses stay in force.",
    "Personal data means data relating to an identified or identifiable person.",
    "CONTROLLER determines the purposes and means of processing.",
    "PROCESSOR is established in Germany.",
    "The contact person for CONTROLLER is the data protection officer.",
    "The annex forms an integral part of this agreement.",
    "This agreement replaces any earlier data processing terms between the parties.",
    "Fees for the services are set out in the commercial terms.",
    "Both parties shall act in good faith.",
    "PROCESSOR provides cloud hosting services to CONTROLLER.",
];

/// Neutral openers mixed into sentences for surface variety.
const OPENERS: [&str; 5] = [
    "",
    "",
    "In addition, ",
    "For the avoidance of doubt, ",
    "Under this agreement, ",
];

const PROCESSORS: [&str; 6] = [
    "Nimbus Hosting Ltd",
    "Orbital Data Services GmbH",
    "Bluefin Analytics BV",
    "Kestrel Cloud SAS",
    "Harbor Payroll Systems Inc",
    "Quillon Software AB",
];

const CONTROLLERS: [&str; 6] = [
    "Fabrikam Retail SA",
    "Northwind Traders Oy",
    "Contoso Pharma AG",
    "Tailspin Travel SRL",
    "Woodgrove Mutual Bank",
    "Litware Education SpA",
];

/// Two small synonym lexicons (word, synonyms).
const LEXICON_A: [(&str, &str); 12] = [
    ("personal", "private"),
    ("data", "information"),
    ("ensure", "guarantee"),
    ("assist", "help,support"),
    ("appropriate", "suitable"),
    ("obligations", "duties"),
    ("provide", "supply"),
    ("reasonable", "fair"),
    ("immediately", "promptly"),
    ("measures", "steps"),
    ("services", "offerings"),
    ("processing", "handling"),
];

const LEXICON_B: [(&str, &str); 10] = [
    ("personal", "individual"),
    ("ensure", "make sure"),
    ("assist", "aid"),
    ("obligations", "commitments"),
    ("supports", "backs"),
    ("provides", "delivers"),
    ("agreement", "arrangement"),
    ("applicable", "relevant"),
    ("remains", "stays"),
    ("existing", "current"),
];

/// The 19 processor-obligation provisions, titles only.
pub fn reference_catalog() -> ProvisionCatalog {
    ProvisionCatalog::new(
        "GDPR",
        PROVISIONS
            .iter()
            .map(|(id, title, _, _)| Provision {
                id: ProvisionId::new(*id).expect("valid id"),
                title: (*title).to_string(),
                description: String::new(),
            })
            .collect(),
    )
    .expect("catalog is valid")
}

fn lexicon_text(entries: &[(&str, &str)]) -> String {
    entries.iter().map(|(w, s)| format!("{w}\t{s}\n")).collect()
}

/// Toy encoder: each lower-cased token gets a fixed pseudo-random vector;
/// anchor words of provision `k` add `anchor_weight` on axis `k`, and every
/// word adds `background` on the last axis (the shared component real
/// encoders have, which keeps anchor-free sentences close together). A
/// sentence vector is the mean of its token vectors scaled to unit length.
#[derive(Debug, Clone)]
pub struct SynthEncoder {
    pub dim: usize,
    pub seed: u64,
    pub noise: f64,
    pub anchor_weight: f64,
    pub background: f64,
    anchors: HashMap<String, usize>,
}

impl SynthEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim <= PROVISIONS.len() {
            return Err(Error::InvalidInput(format!(
                "synthetic encoder needs at least {} dimensions",
                PROVISIONS.len() + 1
            )));
        }
        let anchors = PROVISIONS
            .iter()
            .enumerate()
            .flat_map(|(k, (_, _, words, _))| words.iter().map(move |w| (w.to_string(), k)))
            .collect();
        Ok(SynthEncoder {
            dim,
            seed,
            noise: 0.2,
            anchor_weight: 3.0,
            background: 0.2,
            anchors,
        })
    }

    pub fn word_vector(&self, word: &str) -> Vec<f64> {
        let w = word.to_lowercase();
        let mut r = rng::keyed(self.seed, &[content_hash(&w)]);
        let mut v: Vec<f64> = (0..self.dim)
            .map(|_| r.random_range(-self.noise..self.noise))
            .collect();
        if let Some(&k) = self.anchors.get(&w) {
            v[k] += self.anchor_weight;
        }
        v[self.dim - 1] += self.background;
        v
    }

    fn token_vectors(&self, text: &str) -> Result<Vec<Vec<f64>>> {
        let toks = tokenize(text);
        if toks.is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        Ok(toks.iter().map(|t| self.word_vector(&t.text)).collect())
    }

    fn to_vector(v: &[f64]) -> Result<EmbeddingVector> {
        EmbeddingVector::new(v.iter().map(|&x| x as f32).collect())
    }

    /// Store holding sentence vectors and token sequences for `texts` and a
    /// vocabulary of every word in `texts` plus `extra_words`.
    pub fn build_store<'a>(
        &self,
        texts: impl IntoIterator<Item = &'a str>,
        extra_words: impl IntoIterator<Item = &'a str>,
    ) -> Result<EmbeddingStore> {
        let mut store = EmbeddingStore::new(self.dim, MODEL_ID);
        self.extend_store(&mut store, texts)?;
        for w in extra_words {
            store.insert_word(&w.to_lowercase(), Self::to_vector(&self.word_vector(w))?)?;
        }
        Ok(store)
    }

    /// Adds any of `texts` the store lacks; returns how many were added.
    pub fn extend_store<'a>(
        &self,
        store: &mut EmbeddingStore,
        texts: impl IntoIterator<Item = &'a str>,
    ) -> Result<usize> {
        let mut added = 0;
        for t in texts {
            for tok in tokenize(t) {
                if tok.text.chars().all(char::is_alphabetic) {
                    let w = tok.text.to_lowercase();
                    if store.vocabulary().is_none_or(|v| v.get(&w).is_none()) {
                        store.insert_word(&w, Self::to_vector(&self.word_vector(&w))?)?;
                    }
                }
            }
            if store.get(t).is_ok() {
                continue;
            }
            store.insert(t, self.embed(t)?)?;
            store.insert_tokens(t, self.embed_tokens(t)?)?;
            added += 1;
        }
        Ok(added)
    }
}

impl EmbeddingProvider for SynthEncoder {
    fn dim(&self) -> Result<usize> {
        Ok(self.dim)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let toks = self.token_vectors(text)?;
        let mut mean = vec![0.0; self.dim];
        for v in &toks {
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        let norm = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        Self::to_vector(&mean.iter().map(|m| m / norm).collect::<Vec<_>>())
    }

    fn embed_tokens(&self, text: &str) -> Result<Vec<EmbeddingVector>> {
        self.token_vectors(text)?
            .iter()
            .map(|v| Self::to_vector(v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_dpas: usize,
    pub seed: u64,
    pub dim: usize,
    pub fillers_per_dpa: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_dpas: 12,
            seed: 2023,
            dim: 32,
            fillers_per_dpa: 14,
        }
    }
}

/// A raw DPA as a user would submit it, with party names in place of roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDocument {
    pub dpa_id: String,
    pub processor: String,
    pub controller: String,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct SynthBundle {
    pub config: SynthConfig,
    pub corpus: LabeledCorpus,
    pub documents: Vec<SynthDocument>,
    pub encoder: SynthEncoder,
}

fn denormalize(sentence: &str, processor: &str, controller: &str) -> String {
    sentence
        .replace("PROCESSOR", processor)
        .replace("CONTROLLER", controller)
}

fn lower_first(s: &str) -> String {
    // keep role names upper case
    if s.starts_with("PROCESSOR") || s.starts_with("CONTROLLER") {
        return s.to_string();
    }
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Normalized sentences of one DPA with their labels. DPA `i` omits
/// `i % 4` provisions, chosen deterministically from the seed.
fn dpa_sentences(i: usize, cfg: &SynthConfig) -> Vec<(String, Option<usize>)> {
    let mut r = rng::keyed(cfg.seed, &[0x0044_5041, i as u64]);
    let omit: BTreeSet<usize> = (0..i % 4)
        .map(|j| (i * 5 + j * 7) % PROVISIONS.len())
        .collect();
    let mut out: Vec<(String, Option<usize>)> = Vec::new();
    for (k, (_, _, _, templates)) in PROVISIONS.iter().enumerate() {
        if omit.contains(&k) {
            continue;
        }
        let copies = 1 + usize::from(r.random_bool(0.4));
        let mut picks: Vec<usize> = (0..templates.len()).collect();
        picks.shuffle(&mut r);
        for &t in picks.iter().take(copies) {
            let opener = OPENERS[r.random_range(0..OPENERS.len())];
            let s = if opener.is_empty() {
                templates[t].to_string()
            } else {
                format!("{opener}{}", lower_first(templates[t]))
            };
            out.push((s, Some(k)));
        }
    }
    let mut fillers: Vec<usize> = (0..FILLERS.len()).collect();
    fillers.shuffle(&mut r);
    for &f in fillers.iter().take(cfg.fillers_per_dpa.min(FILLERS.len())) {
        out.push((FILLERS[f].to_string(), None));
    }
    out.shuffle(&mut r);
    out
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthBundle> {
    if cfg.n_dpas < 2 {
        return Err(Error::InvalidInput(
            "synthetic corpus needs at least 2 DPAs".into(),
        ));
    }
    let catalog = reference_catalog();
    let ids: Vec<ProvisionId> = catalog.ids().cloned().collect();
    let mut sentences = Vec::new();
    let mut documents = Vec::new();
    for i in 0..cfg.n_dpas {
        let dpa_id = format!("dpa{:02}", i + 1);
        let processor = PROCESSORS[i % PROCESSORS.len()];
        let controller = CONTROLLERS[(i / 2 + i) % CONTROLLERS.len()];
        let mut lines = Vec::new();
        for (idx, (text, label)) in dpa_sentences(i, cfg).into_iter().enumerate() {
            lines.push(denormalize(&text, processor, controller));
            sentences.push(Sentence {
                dpa_id: dpa_id.clone(),
                sentence_index: idx as u32,
                text,
                gold_labels: label.map(|k| ids[k].clone()).into_iter().collect(),
            });
        }
        let mut text = lines.join("\n");
        text.push('\n');
        documents.push(SynthDocument {
            dpa_id,
            processor: processor.into(),
            controller: controller.into(),
            text,
        });
    }
    Ok(SynthBundle {
        corpus: LabeledCorpus::from_sentences(catalog, sentences, "synthetic")?,
        documents,
        encoder: SynthEncoder::new(cfg.dim, cfg.seed)?,
        config: cfg.clone(),
    })
}

/// Alias table lines mapping every synthetic party name to its role.
pub fn alias_table_text() -> String {
    let mut out = String::from("# synthetic party names\n");
    for p in PROCESSORS {
        out.push_str(&format!("{p}\tPROCESSOR\n"));
    }
    for c in CONTROLLERS {
        out.push_str(&format!("{c}\tCONTROLLER\n"));
    }
    out
}

/// Lexicon files as (file name, contents).
pub fn lexicon_files() -> Vec<(&'static str, String)> {
    vec![
        ("lexicon_a.tsv", lexicon_text(&LEXICON_A)),
        ("lexicon_b.tsv", lexicon_text(&LEXICON_B)),
    ]
}

/// A raw document of `n` sentences cycling through every provision and
/// filler, with its normalized sentences.
pub fn synthetic_document(n: usize, seed: u64) -> (String, Vec<String>) {
    let mut r = rng::keyed(seed, &[0x0044_4f43]);
    let mut normalized = Vec::with_capacity(n);
    for i in 0..n {
        let s = if i % 3 == 2 {
            FILLERS[r.random_range(0..FILLERS.len())].to_string()
        } else {
            let (_, _, _, t) = PROVISIONS[(i / 3 * 2 + i % 3) % PROVISIONS.len()];
            t[r.random_range(0..3)].to_string()
        };
        normalized.push(s);
    }
    let text = normalized
        .iter()
        .map(|s| denormalize(s, PROCESSORS[0], CONTROLLERS[0]))
        .collect::<Vec<_>>()
        .join("\n");
    (text, normalized)
}

impl SynthBundle {
    /// Provisions satisfied per DPA according to the gold labels.
    pub fn gold_completeness(&self) -> BTreeMap<String, BTreeSet<ProvisionId>> {
        self.corpus
            .dpas
            .iter()
            .map(|d| (d.dpa_id.clone(), d.satisfied()))
            .collect()
    }

    /// The 184-sentence document written as `throughput_dpa.txt`.
    pub fn throughput_document(&self) -> (String, Vec<String>) {
        synthetic_document(THROUGHPUT_SENTENCES, self.config.seed)
    }

    /// Vectors for every corpus sentence, the throughput document and the
    /// lexicon words.
    pub fn store(&self) -> Result<EmbeddingStore> {
        let (_, extra_doc) = self.throughput_document();
        let texts: Vec<&str> = self
            .corpus
            .sentences()
            .map(|s| s.text.as_str())
            .chain(extra_doc.iter().map(String::as_str))
            .collect();
        let mut extra: Vec<&str> = Vec::new();
        for (w, syns) in LEXICON_A.iter().chain(LEXICON_B.iter()) {
            extra.push(w);
            extra.extend(syns.split(',').filter(|s| !s.contains(' ')));
        }
        self.encoder.build_store(texts, extra)
    }

    /// Writes the bundle into `dir` and returns the written paths:
    /// `catalog.json`, `ground_truth.jsonl`, `aliases.tsv`, two lexicons,
    /// `store.bin`, `completeness.json`, `throughput_dpa.txt` and
    /// `dpas/<id>.txt`.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        let mut put = |name: &str, bytes: &[u8]| -> Result<()> {
            let p = dir.join(name);
            if let Some(parent) = p.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
            written.push(p);
            Ok(())
        };
        let mut catalog = self.corpus.catalog.to_json();
        catalog.push('\n');
        put("catalog.json", catalog.as_bytes())?;
        let header = serde_json::json!({"meta": {"provenance": format!("synthetic, seed {}", self.config.seed)}});
        put(
            "ground_truth.jsonl",
            format!("{header}\n{}", self.corpus.to_jsonl()).as_bytes(),
        )?;
        put("aliases.tsv", alias_table_text().as_bytes())?;
        for (name, text) in lexicon_files() {
            put(name, text.as_bytes())?;
        }
        put("store.bin", &self.store()?.to_bytes())?;
        let mut gold = serde_json::to_string_pretty(&self.gold_completeness()).expect("serializes");
        gold.push('\n');
        put("completeness.json", gold.as_bytes())?;
        put(
            "throughput_dpa.txt",
            self.throughput_document().0.as_bytes(),
        )?;
        for d in &self.documents {
            put(&format!("dpas/{}.txt", d.dpa_id), d.text.as_bytes())?;
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::balance::is_content_word;
    use crate::corpus::{corpus_stats, load_ground_truth};
    use crate::preprocess::{prepare_document, AliasTable};

    fn anchor_owner(word: &str) -> Option<usize> {
        PROVISIONS.iter().position(|(_, _, a, _)| a.contains(&word))
    }

    #[test]
    fn anchors_are_unique_and_planted() {
        let mut seen = BTreeSet::new();
        for (_, _, anchors, _) in PROVISIONS {
            for a in anchors {
                assert!(seen.insert(*a), "{a} used twice");
            }
        }
        for (k, (id, _, _, templates)) in PROVISIONS.iter().enumerate() {
            for t in templates {
                let owners: Vec<usize> = tokenize(t)
                    .iter()
                    .filter_map(|w| anchor_owner(&w.text.to_lowercase()))
                    .collect();
                assert!(!owners.is_empty(), "{id}: {t}");
                assert!(owners.iter().all(|&o| o == k), "{id}: {t}");
            }
        }
        for f in FILLERS {
            assert!(
                tokenize(f)
                    .iter()
                    .all(|w| anchor_owner(&w.text.to_lowercase()).is_none()),
                "{f}"
            );
        }
        for (w, _) in LEXICON_A.iter().chain(&LEXICON_B) {
            assert!(is_content_word(w));
        }
    }

    #[test]
    fn corpus_shape() {
        let b = generate(&SynthConfig::default()).unwrap();
        let stats = corpus_stats(&b.corpus);
        assert!(stats.total_dpas >= 8);
        assert!(stats.total_sentences >= 300, "{}", stats.total_sentences);
        assert!(stats.per_provision.iter().all(|(_, n)| *n > 0));
        let gold = b.gold_completeness();
        assert!(gold.values().any(|s| s.len() == 19));
        assert!(gold.values().any(|s| s.len() < 19));
    }

    #[test]
    fn documents_normalize_back_to_corpus_sentences() {
        let b = generate(&SynthConfig::default()).unwrap();
        let aliases = AliasTable::parse(&alias_table_text(), "aliases").unwrap();
        for (doc, dpa) in b.documents.iter().zip(&b.corpus.dpas) {
            let prepared = prepare_document(&doc.text, &aliases);
            let got: Vec<&str> = prepared.iter().map(|p| p.normalized.as_str()).collect();
            let want: Vec<&str> = dpa.sentences.iter().map(|s| s.text.as_str()).collect();
            assert_eq!(got, want);
        }
        let (text, normalized) = synthetic_document(184, 1);
        let prepared = prepare_document(&text, &aliases);
        assert_eq!(prepared.len(), 184);
        assert!(prepared
            .iter()
            .zip(&normalized)
            .all(|(p, n)| &p.normalized == n));
    }

    #[test]
    fn encoder_and_store_agree() {
        let b = generate(&SynthConfig {
            n_dpas: 3,
            ..SynthConfig::default()
        })
        .unwrap();
        let store = b.store().unwrap();
        let s = &b.corpus.dpas[0].sentences[0].text;
        assert_eq!(store.get(s).unwrap(), &b.encoder.embed(s).unwrap());
        assert_eq!(store.tokens(s).unwrap().len(), tokenize(s).len());
        let vocab = store.vocabulary().unwrap();
        // anchor words find a sibling anchor as nearest neighbour
        let (nn, _) = vocab.nearest("breach").unwrap().unwrap();
        assert_eq!(anchor_owner(&nn), anchor_owner("breach"));
    }

    #[test]
    fn bundle_round_trips_through_files() {
        let b = generate(&SynthConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let files = b.write(dir.path()).unwrap();
        assert_eq!(files.len(), 8 + b.documents.len());
        let back = load_ground_truth(
            &dir.path().join("ground_truth.jsonl"),
            &dir.path().join("catalog.json"),
        )
        .unwrap();
        assert_eq!(back.dpas, b.corpus.dpas);
        let store = EmbeddingStore::load(&dir.path().join("store.bin")).unwrap();
        assert_eq!(store, b.store().unwrap());
        let again = generate(&SynthConfig::default()).unwrap();
        assert_eq!(again.corpus, b.corpus);
    }
}
