use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use dpacheck::corpus::{corpus_stats, split_dpas, SplitSpec};
use dpacheck::embedding::{
    validate_store as check_store, EmbeddingProvider, EmbeddingStore, EmbeddingVector,
};
use dpacheck::preprocess::{prepare_document, review_candidates, AliasTable};
use dpacheck::synth::{self, SynthConfig, SynthEncoder};
use serde::Serialize;
use serde_json::json;

use crate::common::{read_text, seed, write_stdout, CorpusArgs};
use crate::config::{pick, provider_url};
use crate::manifest::Artifacts;
use crate::{CliError, Ctx};

#[derive(Args, Debug)]
pub struct PreprocessArgs {
    /// DPA text file
    #[arg(long, value_name = "FILE")]
    pub dpa: PathBuf,
    /// Alias table (pattern TAB PROCESSOR|CONTROLLER)
    #[arg(long, value_name = "FILE")]
    pub aliases: Option<PathBuf>,
    /// Write sentences.jsonl and audit.tsv here instead of printing
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// List capitalized multi-word spans left unmatched, as alias candidates
    #[arg(long)]
    pub review: bool,
}

#[derive(Serialize)]
struct SentenceRecord<'a> {
    index: u32,
    original: &'a str,
    normalized: &'a str,
}

pub fn load_aliases(
    flag: &Option<PathBuf>,
    ctx: &Ctx,
) -> Result<(AliasTable, Option<PathBuf>), CliError> {
    match flag.clone().or_else(|| ctx.cfg.aliases.clone()) {
        Some(p) => Ok((AliasTable::load(&p)?, Some(p))),
        None => Ok((AliasTable::default(), None)),
    }
}

pub fn preprocess(ctx: &Ctx, a: PreprocessArgs) -> Result<(), CliError> {
    let (aliases, alias_path) = load_aliases(&a.aliases, ctx)?;
    let text = read_text(&a.dpa)?;
    let sentences = prepare_document(&text, &aliases);
    let mut jsonl = String::new();
    let mut audit = String::from("sentence\tpattern\trole\tmatched\tstart\tend\n");
    for s in &sentences {
        let rec = SentenceRecord {
            index: s.index,
            original: &s.original,
            normalized: &s.normalized,
        };
        jsonl.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        jsonl.push('\n');
        for x in &s.applied {
            let _ = writeln!(
                audit,
                "{}\t{}\t{}\t{}\t{}\t{}",
                s.index,
                x.pattern,
                x.role.as_str(),
                x.matched,
                x.start,
                x.end
            );
        }
    }
    match &a.out {
        Some(dir) => {
            let config = json!({"aliases": alias_path, "dpa": a.dpa});
            let mut art = Artifacts::in_dir("preprocess", None, config, dir)?;
            art.input("dpa", &a.dpa)?;
            if let Some(p) = &alias_path {
                art.input("aliases", p)?;
            }
            art.write("sentences.jsonl", jsonl.as_bytes())?;
            art.write("audit.tsv", audit.as_bytes())?;
            art.finish()?;
        }
        None => {
            let mut out = String::new();
            for s in &sentences {
                let _ = writeln!(out, "{}\t{}", s.index, s.normalized);
            }
            write_stdout(&out);
        }
    }
    if a.review {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in &sentences {
            for c in review_candidates(&s.normalized) {
                *counts.entry(c).or_default() += 1;
            }
        }
        let mut out = String::new();
        for (c, n) in counts {
            let _ = writeln!(out, "REVIEW\t{c}\t{n}");
        }
        write_stdout(&out);
    }
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct SplitArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Share of DPAs used for development (train + validation)
    #[arg(long, default_value_t = 0.70)]
    pub dev_fraction: f64,
    /// Share of development DPAs held out for validation
    #[arg(long, default_value_t = 0.20)]
    pub val_fraction: f64,
    #[arg(long, value_name = "DIR")]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn split(ctx: &Ctx, a: SplitArgs) -> Result<(), CliError> {
    let seed = seed(&a.seed, ctx);
    let spec = SplitSpec {
        seed,
        dev_fraction: a.dev_fraction,
        val_fraction_of_dev: a.val_fraction,
    };
    let mut art = Artifacts::in_dir("split", Some(seed), json!({"spec": spec}), &a.out)?;
    let corpus = a.input.load(ctx, Some(&mut art))?;
    let s = split_dpas(&corpus, &spec)?;
    let mut assignment = serde_json::to_string_pretty(&s.assignment).expect("serializes");
    assignment.push('\n');
    art.write("split.json", assignment.as_bytes())?;
    for (name, part) in [
        ("dev", &s.dev),
        ("eval", &s.eval),
        ("train", &s.train),
        ("val", &s.val),
    ] {
        art.write(&format!("{name}.jsonl"), part.to_jsonl().as_bytes())?;
    }
    art.finish()?;
    write_stdout(&format!(
        "dev={} (train={} val={}) eval={}\n",
        s.assignment.dev.len(),
        s.assignment.train.len(),
        s.assignment.val.len(),
        s.assignment.eval.len()
    ));
    Ok(())
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: CorpusArgs,
    /// Print JSON instead of a table
    #[arg(long)]
    pub json: bool,
}

pub fn stats(ctx: &Ctx, a: StatsArgs) -> Result<(), CliError> {
    let corpus = a.input.load(ctx, None)?;
    let t = corpus_stats(&corpus);
    if a.json {
        write_stdout(&format!(
            "{}\n",
            serde_json::to_string_pretty(&t).expect("serializes")
        ));
    } else {
        write_stdout(&t.to_tsv());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ValidateStoreArgs {
    /// Store file to check
    #[arg(long, value_name = "FILE")]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

pub fn validate_store(ctx: &Ctx, a: ValidateStoreArgs) -> Result<(), CliError> {
    let path = pick(&a.store, &ctx.cfg.store, "store")?;
    let r = check_store(&path)?;
    if a.json {
        write_stdout(&format!(
            "{}\n",
            serde_json::to_string_pretty(&r).expect("serializes")
        ));
    } else {
        write_stdout(&format!(
            "valid\tdim={}\tmodel={}\tcount={}\ttokens={}\tvocabulary={}\tsampled={}\tmax_self_cos_err={:e}\n",
            r.dim, r.model_id, r.count, r.token_sequences, r.vocabulary, r.sampled, r.max_self_cosine_error
        ));
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Sentences to embed, one per line, or a corpus / training set JSONL
    #[arg(long, value_name = "FILE")]
    pub texts: PathBuf,
    /// Store to write; an existing store is extended
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Embedding service endpoint (also DPACHECK_PROVIDER_URL)
    #[arg(long, value_name = "URL")]
    pub provider_url: Option<String>,
    /// Use the synthetic encoder with this seed instead of a service
    #[arg(long, value_name = "SEED", conflicts_with = "provider_url")]
    pub synthetic: Option<u64>,
    /// Dimension of the synthetic encoder
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    /// Model id recorded in a new store
    #[arg(long, default_value = "remote")]
    pub model_id: String,
    /// Also store per-token vectors (synthetic encoder only)
    #[arg(long)]
    pub tokens: bool,
}

/// Plain lines, or the `text` field of JSON lines (lines without one are
/// skipped). Repeats are dropped.
fn text_lines(raw: &str, source_name: &str) -> Result<Vec<String>, CliError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, l) in raw.lines().map(str::trim).enumerate() {
        let t = if l.starts_with('{') {
            let v: serde_json::Value = serde_json::from_str(l).map_err(|e| {
                CliError::Core(dpacheck::Error::Parse {
                    source_name: source_name.into(),
                    line: i + 1,
                    message: e.to_string(),
                })
            })?;
            match v.get("text").and_then(|t| t.as_str()) {
                Some(t) => t.to_string(),
                None => continue,
            }
        } else {
            l.to_string()
        };
        if !t.is_empty() && seen.insert(t.clone()) {
            out.push(t);
        }
    }
    Ok(out)
}

pub fn embed(ctx: &Ctx, a: EmbedArgs) -> Result<(), CliError> {
    let texts = text_lines(&read_text(&a.texts)?, &a.texts.display().to_string())?;
    let existing = if a.out.exists() {
        Some(EmbeddingStore::load(&a.out)?)
    } else {
        None
    };
    let added;
    let store = if let Some(seed) = a.synthetic {
        let enc = SynthEncoder::new(a.dim, seed)?;
        let mut store = existing.unwrap_or_else(|| EmbeddingStore::new(a.dim, synth::MODEL_ID));
        added = if a.tokens {
            enc.extend_store(&mut store, texts.iter().map(String::as_str))?
        } else {
            let mut n = 0;
            for t in &texts {
                if store.get(t).is_err() {
                    store.insert(t, enc.embed(t)?)?;
                    n += 1;
                }
            }
            n
        };
        store
    } else {
        let url = provider_url(&a.provider_url, &ctx.cfg)
            .ok_or_else(|| CliError::Usage("missing --provider-url or --synthetic".into()))?;
        let provider = dpacheck::embedding::HttpProvider::new(
            dpacheck::embedding::HttpProviderConfig::new(url),
        );
        let todo: Vec<String> = texts
            .iter()
            .filter(|t| existing.as_ref().is_none_or(|s| s.get(t).is_err()))
            .cloned()
            .collect();
        let vectors: Vec<EmbeddingVector> = provider.embed_batch(&todo)?;
        let mut store = match existing {
            Some(s) => s,
            None => EmbeddingStore::new(provider.dim()?, a.model_id.clone()),
        };
        for (t, v) in todo.iter().zip(vectors) {
            store.insert(t, v)?;
        }
        added = todo.len();
        store
    };
    store.save(&a.out)?;
    write_stdout(&format!(
        "added {added} of {} texts; store holds {}\n",
        texts.len(),
        store.len()
    ));
    Ok(())
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_name = "DIR")]
    #[serde(skip)]
    pub out: PathBuf,
    /// Number of DPAs
    #[arg(long, default_value_t = SynthConfig::default().n_dpas)]
    pub dpas: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Embedding dimension (at least 20)
    #[arg(long, default_value_t = SynthConfig::default().dim)]
    pub dim: usize,
    /// "Other" sentences per DPA
    #[arg(long, default_value_t = SynthConfig::default().fillers_per_dpa)]
    pub fillers: usize,
}

pub fn synth(ctx: &Ctx, a: SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        n_dpas: a.dpas,
        seed: a
            .seed
            .or(ctx.cfg.seed)
            .unwrap_or(SynthConfig::default().seed),
        dim: a.dim,
        fillers_per_dpa: a.fillers,
    };
    let bundle = synth::generate(&cfg)?;
    let mut art = Artifacts::in_dir("synth", Some(cfg.seed), json!({"synth": cfg}), &a.out)?;
    let written = bundle.write(&a.out)?;
    for p in written {
        let rel = p
            .strip_prefix(&a.out)
            .unwrap_or(&p)
            .to_string_lossy()
            .replace('\\', "/");
        art.record(&rel)?;
    }
    art.finish()?;
    let stats = corpus_stats(&bundle.corpus);
    write_stdout(&format!(
        "wrote {} DPAs, {} sentences ({} positive) to {}\n",
        stats.total_dpas,
        stats.total_sentences,
        stats.positive_sentences,
        a.out.display()
    ));
    Ok(())
}
