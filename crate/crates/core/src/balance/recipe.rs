use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::augment::word_vocabulary;
use super::{
    augment_backtranslate, augment_embedding, augment_noise, augment_synonym, random_oversample,
    random_undersample, Augmentation, Dataset, Example, NoiseConfig, NoiseOp, Origin,
    SynonymLexicon, Translator, DEFAULT_PIVOTS,
};
use crate::classifiers::TaskSpec;
use crate::embedding::EmbeddingStore;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AugmentFamily {
    BT,
    SR,
    ER,
    NI,
}

impl fmt::Display for AugmentFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Undersample,
    Oversample,
    Augment(AugmentFamily),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Undersample => f.write_str("RU"),
            Step::Oversample => f.write_str("RO"),
            Step::Augment(a) => write!(f, "{a}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRecipe {
    pub name: String,
    pub steps: Vec<Step>,
}

impl VariantRecipe {
    pub fn new(name: impl Into<String>, steps: Vec<Step>) -> Result<Self> {
        let r = VariantRecipe {
            name: name.into(),
            steps,
        };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<()> {
        let count = |s: Step| self.steps.iter().filter(|x| **x == s).count();
        if self.steps.is_empty() {
            return Err(Error::Validation(format!(
                "recipe {} has no steps",
                self.name
            )));
        }
        if count(Step::Undersample) > 1 || count(Step::Oversample) > 1 {
            return Err(Error::Validation(format!(
                "recipe {} resamples more than once",
                self.name
            )));
        }
        for f in [
            AugmentFamily::BT,
            AugmentFamily::SR,
            AugmentFamily::ER,
            AugmentFamily::NI,
        ] {
            if count(Step::Augment(f)) > 1 {
                return Err(Error::Validation(format!(
                    "recipe {} repeats {f}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn builtin(name: &str) -> Result<Self> {
        builtin_recipes()
            .into_iter()
            .find(|r| r.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::InvalidInput(format!("unknown recipe {name}")))
    }
}

/// The thirteen named variants: three resampling schemes, four augmentation
/// families alone and followed by RUOS, and all four together with and
/// without RUOS.
pub fn builtin_recipes() -> Vec<VariantRecipe> {
    use AugmentFamily::*;
    use Step::*;
    let families = [BT, SR, ER, NI];
    let mut out = vec![
        ("RU".to_string(), vec![Undersample]),
        ("RO".to_string(), vec![Oversample]),
        ("RUOS".to_string(), vec![Undersample, Oversample]),
    ];
    for f in families {
        out.push((f.to_string(), vec![Augment(f)]));
    }
    for f in families {
        out.push((
            format!("{f}+RUOS"),
            vec![Augment(f), Undersample, Oversample],
        ));
    }
    let all: Vec<Step> = families.iter().map(|f| Augment(*f)).collect();
    out.push(("ALL".into(), all.clone()));
    out.push((
        "ALL+RUOS".into(),
        [all, vec![Undersample, Oversample]].concat(),
    ));
    out.into_iter()
        .map(|(name, steps)| VariantRecipe { name, steps })
        .collect()
}

/// External inputs the augmentation steps may need.
pub struct Resources<'a> {
    pub lexicons: Vec<SynonymLexicon>,
    pub store: Option<&'a EmbeddingStore>,
    pub translator: Option<&'a dyn Translator>,
    pub pivots: Vec<String>,
    pub noise: NoiseConfig,
    pub noise_ops: Vec<NoiseOp>,
    pub synonym_replacements: usize,
    pub embedding_variants: usize,
}

impl Default for Resources<'_> {
    fn default() -> Self {
        Resources {
            lexicons: Vec::new(),
            store: None,
            translator: None,
            pivots: DEFAULT_PIVOTS.iter().map(|p| p.to_string()).collect(),
            noise: NoiseConfig::default(),
            noise_ops: NoiseOp::ALL.to_vec(),
            synonym_replacements: 2,
            embedding_variants: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantManifest {
    pub recipe: String,
    pub steps: Vec<String>,
    pub seed: u64,
    pub input_counts: BTreeMap<String, usize>,
    pub class_counts: BTreeMap<String, usize>,
    pub examples: usize,
    /// Variants added per augmentation method.
    pub augmented: BTreeMap<String, usize>,
    /// Sentence/variant slots that produced nothing, per family.
    pub dropped: BTreeMap<String, usize>,
    pub identity_variants: usize,
    pub failures: Vec<String>,
    pub dataset_digest: String,
}

fn missing(recipe: &str, step: Step, what: &str) -> Error {
    Error::Capability(format!("recipe {recipe}: step {step} needs {what}"))
}

fn run_family(
    family: AugmentFamily,
    recipe: &str,
    positives: &[Example],
    all: &[Example],
    res: &Resources<'_>,
    seed: u64,
) -> Result<Augmentation> {
    let step = Step::Augment(family);
    match family {
        AugmentFamily::BT => {
            let t = res
                .translator
                .ok_or_else(|| missing(recipe, step, "a translator"))?;
            augment_backtranslate(positives, t, &res.pivots)
        }
        AugmentFamily::SR => {
            if res.lexicons.is_empty() {
                return Err(missing(recipe, step, "a synonym lexicon"));
            }
            augment_synonym(positives, &res.lexicons, res.synonym_replacements, seed)
        }
        AugmentFamily::ER => {
            let store = res
                .store
                .ok_or_else(|| missing(recipe, step, "an embedding store with a vocabulary"))?;
            augment_embedding(positives, store, res.embedding_variants, seed)
        }
        AugmentFamily::NI => augment_noise(
            positives,
            &res.noise_ops,
            &res.noise,
            &word_vocabulary(all),
            seed,
        ),
    }
}

/// Applies `recipe` to `data` for `task`. Augmentation draws only from the
/// original positive examples of the input; variants are appended in step
/// order, then resampling steps act on the grown set.
pub fn build_variant(
    data: &Dataset,
    task: &TaskSpec,
    recipe: &VariantRecipe,
    seed: u64,
    res: &Resources<'_>,
) -> Result<(Dataset, VariantManifest)> {
    recipe.validate()?;
    let other = task.other_index();
    let positives: Vec<Example> = data
        .examples
        .iter()
        .filter(|e| e.origin == Origin::Original && task.class_of(&e.gold_labels) != other)
        .cloned()
        .collect();
    let mut manifest = VariantManifest {
        recipe: recipe.name.clone(),
        steps: recipe.steps.iter().map(Step::to_string).collect(),
        seed,
        input_counts: data.class_counts(task),
        class_counts: BTreeMap::new(),
        examples: 0,
        augmented: BTreeMap::new(),
        dropped: BTreeMap::new(),
        identity_variants: 0,
        failures: Vec::new(),
        dataset_digest: String::new(),
    };
    let mut out = data.clone();
    for &step in &recipe.steps {
        match step {
            Step::Undersample => out = random_undersample(&out, task, seed)?,
            Step::Oversample => out = random_oversample(&out, task, seed)?,
            Step::Augment(family) => {
                let aug = run_family(family, &recipe.name, &positives, &data.examples, res, seed)?;
                *manifest.dropped.entry(family.to_string()).or_default() += aug.dropped;
                manifest.failures.extend(aug.failures);
                for v in aug.variants {
                    let method = serde_json::to_value(v.method).expect("method serializes");
                    *manifest
                        .augmented
                        .entry(method.as_str().unwrap_or_default().to_string())
                        .or_default() += 1;
                    manifest.identity_variants += usize::from(v.identity);
                    out.examples.push(v.into_example());
                }
            }
        }
    }
    manifest.class_counts = out.class_counts(task);
    manifest.examples = out.len();
    manifest.dataset_digest = crate::digest::sha256_hex(out.to_jsonl().as_bytes());
    Ok((out, manifest))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::super::tests::dataset;
    use super::super::{under_oversample, IdentityTranslator};
    use super::*;
    use crate::classifiers::TaskMode;
    use crate::corpus::ProvisionId;
    use crate::embedding::EmbeddingVector;

    fn task() -> TaskSpec {
        TaskSpec {
            classes: vec!["PO1".into(), "PO2".into(), "other".into()],
            mode: TaskMode::Multiclass,
        }
    }

    fn lexicon() -> SynonymLexicon {
        SynonymLexicon::parse("sentence\tclause\nnumber\tcount\n", "t").unwrap()
    }

    fn store() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(2, "toy");
        for (w, v) in [
            ("sentence", [1.0f32, 0.0]),
            ("clause", [0.9, 0.1]),
            ("number", [0.0, 1.0]),
            ("count", [0.1, 0.9]),
        ] {
            s.insert_word(w, EmbeddingVector::new(v.to_vec()).unwrap())
                .unwrap();
        }
        s
    }

    #[test]
    fn thirteen_recipes() {
        let r = builtin_recipes();
        assert_eq!(r.len(), 13);
        let names: BTreeSet<&str> = r.iter().map(|x| x.name.as_str()).collect();
        assert_eq!(names.len(), 13);
        for x in &r {
            x.validate().unwrap();
        }
        assert_eq!(VariantRecipe::builtin("all+ruos").unwrap().steps.len(), 6);
        assert!(VariantRecipe::new("bad", vec![Step::Oversample, Step::Oversample]).is_err());
    }

    #[test]
    fn distinct_outputs_and_counts() {
        let d = dataset(&[("PO1", 6), ("PO2", 3), ("other", 30)]);
        let s = store();
        let res = Resources {
            lexicons: vec![lexicon()],
            store: Some(&s),
            translator: Some(&IdentityTranslator),
            ..Resources::default()
        };
        let mut digests = BTreeSet::new();
        for r in builtin_recipes() {
            let (out, m) = build_variant(&d, &task(), &r, 5, &res).unwrap();
            assert_eq!(m.examples, out.len());
            assert_eq!(m.class_counts, out.class_counts(&task()));
            digests.insert(m.dataset_digest.clone());
            if r.name.ends_with("RUOS") {
                let n = m.class_counts.values().next().copied().unwrap();
                assert!(m.class_counts.values().all(|c| *c == n), "{}", r.name);
            }
        }
        assert_eq!(digests.len(), 13);
        let (ru, _) =
            build_variant(&d, &task(), &VariantRecipe::builtin("RU").unwrap(), 5, &res).unwrap();
        assert_eq!(ru.class_counts(&task())["other"], 6);
        let (bt, m) =
            build_variant(&d, &task(), &VariantRecipe::builtin("BT").unwrap(), 5, &res).unwrap();
        assert_eq!(bt.len(), 39 + 2 * 9);
        assert_eq!(m.identity_variants, 18);
    }

    #[test]
    fn composition_matches_manual_chain() {
        let d = dataset(&[("PO1", 6), ("PO2", 3), ("other", 30)]);
        let res = Resources {
            lexicons: vec![lexicon()],
            ..Resources::default()
        };
        let (got, _) = build_variant(
            &d,
            &task(),
            &VariantRecipe::builtin("SR+RUOS").unwrap(),
            9,
            &res,
        )
        .unwrap();
        let pos: Vec<Example> = d
            .examples
            .iter()
            .filter(|e| e.is_positive())
            .cloned()
            .collect();
        let mut manual = d.clone();
        let aug = augment_synonym(&pos, &[lexicon()], 2, 9).unwrap();
        manual
            .examples
            .extend(aug.variants.into_iter().map(|v| v.into_example()));
        assert_eq!(got, under_oversample(&manual, &task(), 9).unwrap());
    }

    #[test]
    fn binary_task_augments_only_its_provision() {
        let d = dataset(&[("PO1", 4), ("PO2", 5), ("other", 10)]);
        let t = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        let res = Resources {
            lexicons: vec![lexicon()],
            ..Resources::default()
        };
        let (out, m) =
            build_variant(&d, &t, &VariantRecipe::builtin("SR").unwrap(), 0, &res).unwrap();
        assert_eq!(m.augmented["SR"], 4);
        assert_eq!(out.class_counts(&t)["PO1"], 8);
    }

    #[test]
    fn missing_resources_name_the_step() {
        let d = dataset(&[("PO1", 2), ("other", 2)]);
        let t = TaskSpec::binary(ProvisionId::new("PO1").unwrap());
        for (name, needle) in [("BT", "BT"), ("SR+RUOS", "SR"), ("ALL", "BT"), ("ER", "ER")] {
            let err = build_variant(
                &d,
                &t,
                &VariantRecipe::builtin(name).unwrap(),
                0,
                &Resources::default(),
            )
            .unwrap_err();
            assert!(err.to_string().contains(&format!("step {needle}")), "{err}");
        }
        build_variant(
            &d,
            &t,
            &VariantRecipe::builtin("NI").unwrap(),
            0,
            &Resources::default(),
        )
        .unwrap();
    }
}
