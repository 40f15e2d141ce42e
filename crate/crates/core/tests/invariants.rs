use std::collections::{BTreeSet, HashSet};

use dpacheck::balance::{
    augment_noise, random_oversample, random_undersample, under_oversample, Dataset, Example,
    NoiseConfig, NoiseOp, Origin,
};
use dpacheck::classifiers::{
    fit, Algorithm, ClassifierModel, FeatureMatrix, Hyperparameters, Input, LinearKind,
    LinearParams, ModelContainer, ModelParams, TaskSpec, TrainingMeta,
};
use dpacheck::corpus::{
    corpus_stats, LabeledCorpus, Provision, ProvisionCatalog, ProvisionId, Sentence,
};
use dpacheck::embedding::{
    cosine, nearest_neighbors, EmbeddingProvider, EmbeddingStore, EmbeddingVector,
};
use dpacheck::synth::SynthEncoder;
use proptest::prelude::*;

const IDS: [&str; 3] = ["PO1", "PO2", "PO3"];

fn catalog() -> ProvisionCatalog {
    let provisions = IDS
        .iter()
        .map(|id| Provision {
            id: ProvisionId::new(*id).unwrap(),
            title: format!("title {id}"),
            description: String::new(),
        })
        .collect();
    ProvisionCatalog::new("test", provisions).unwrap()
}

fn labels(mask: u8) -> BTreeSet<ProvisionId> {
    (0..IDS.len())
        .filter(|i| mask & (1 << i) != 0)
        .map(|i| ProvisionId::new(IDS[i]).unwrap())
        .collect()
}

// (dpa, label mask) per sentence
fn sentences() -> impl Strategy<Value = Vec<(u8, u8)>> {
    prop::collection::vec((0u8..4, 0u8..8), 1..60)
}

fn corpus(raw: &[(u8, u8)]) -> LabeledCorpus {
    let sentences = raw
        .iter()
        .enumerate()
        .map(|(i, &(d, m))| Sentence {
            dpa_id: format!("d{d}"),
            sentence_index: i as u32,
            text: format!("sentence number {i} of document {d}"),
            gold_labels: labels(m),
        })
        .collect();
    LabeledCorpus::from_sentences(catalog(), sentences, "generated").unwrap()
}

// every class present once, then the generated tail with single labels only
fn dataset(tail: &[u8]) -> Dataset {
    let masks = [1u8, 2, 4, 0]
        .iter()
        .copied()
        .chain(tail.iter().map(|m| [0, 1, 2, 4][*m as usize % 4]));
    Dataset {
        examples: masks
            .enumerate()
            .map(|(i, m)| Example {
                dpa_id: "d".into(),
                sentence_index: i as u32,
                text: format!("the processor shall keep record {i} safe and available"),
                gold_labels: labels(m),
                origin: Origin::Original,
            })
            .collect(),
    }
}

fn vector() -> impl Strategy<Value = Vec<f32>> {
    prop::collection::vec(-1.0f32..1.0, 6)
        .prop_filter("non-zero", |v| v.iter().any(|x| x.abs() > 1e-3))
}

fn linear_model(weights: Vec<f64>, bias: Vec<f64>) -> ClassifierModel {
    let task = TaskSpec::multiclass(&catalog());
    let mut params = LinearParams::zeros(LinearKind::Logreg, 3, task.n_classes());
    params.weights = weights;
    params.bias = bias;
    ClassifierModel {
        algorithm: Algorithm::Logreg,
        dim: 3,
        meta: TrainingMeta {
            seed: 0,
            hyperparameters: Hyperparameters::default(),
            epochs_run: 0,
            final_loss: 0.0,
        },
        params: ModelParams::Linear(params),
        task,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn per_provision_counts_cover_positives(raw in sentences()) {
        let c = corpus(&raw);
        let st = corpus_stats(&c);
        let sum: usize = st.per_provision.iter().map(|(_, n)| n).sum();
        prop_assert!(sum >= st.positive_sentences);
        let multi = raw.iter().any(|(_, m)| m.count_ones() > 1);
        if !multi {
            prop_assert_eq!(sum, st.positive_sentences);
        }
        prop_assert_eq!(st.total_sentences, raw.len());
        prop_assert!(st.positive_fraction >= 0.0 && st.positive_fraction <= 1.0);
    }

    #[test]
    fn nearest_neighbours_match_exhaustive_scan(
        stored in prop::collection::vec(vector(), 1..30),
        query in vector(),
        k in 1usize..6,
    ) {
        let mut store = EmbeddingStore::new(6, "t");
        let mut hashes = Vec::new();
        for (i, v) in stored.iter().enumerate() {
            hashes.push(store.insert(&format!("text {i}"), EmbeddingVector::new(v.clone()).unwrap()).unwrap());
        }
        let q = EmbeddingVector::new(query).unwrap();
        let exclude: HashSet<u64> = hashes.iter().step_by(3).copied().collect();
        let hits = nearest_neighbors(&store, &q, k, &exclude).unwrap();

        let mut all: Vec<f64> = store
            .entries()
            .filter(|(h, _)| !exclude.contains(h))
            .map(|(_, v)| cosine(&q, v).unwrap())
            .collect();
        all.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert_eq!(hits.len(), all.len().min(k));
        for ((h, sim), want) in hits.iter().zip(&all) {
            prop_assert!(!exclude.contains(h));
            prop_assert!((sim - want).abs() < 1e-9);
        }
    }

    #[test]
    fn providers_are_deterministic(words in prop::collection::vec("[a-z]{1,8}", 1..12)) {
        let text = words.join(" ");
        let a = SynthEncoder::new(24, 3).unwrap();
        let b = SynthEncoder::new(24, 3).unwrap();
        let va = a.embed(&text).unwrap();
        prop_assert_eq!(&va, &b.embed(&text).unwrap());

        let mut store = EmbeddingStore::new(24, "t");
        store.insert(&text, va.clone()).unwrap();
        let reread = EmbeddingStore::from_bytes(&store.to_bytes()).unwrap();
        prop_assert_eq!(&reread.embed(&text).unwrap(), &va);
    }

    #[test]
    fn softmax_ignores_a_shared_bias_shift(
        weights in prop::collection::vec(-3.0f64..3.0, 12),
        bias in prop::collection::vec(-3.0f64..3.0, 4),
        x in prop::collection::vec(-2.0f64..2.0, 3),
        shift in -50.0f64..50.0,
    ) {
        let a = linear_model(weights.clone(), bias.clone());
        let b = linear_model(weights, bias.iter().map(|v| v + shift).collect());
        let pa = a.predict_scores(Input::Vector(&x)).unwrap();
        let pb = b.predict_scores(Input::Vector(&x)).unwrap();
        prop_assert!((pa.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for (u, v) in pa.iter().zip(&pb) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn model_container_round_trip_keeps_predictions(
        weights in prop::collection::vec(-3.0f64..3.0, 12),
        bias in prop::collection::vec(-3.0f64..3.0, 4),
        probes in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..10),
    ) {
        let model = linear_model(weights, bias);
        let bytes = ModelContainer::from_model(&model).to_bytes();
        let back = ModelContainer::from_bytes(&bytes).unwrap().to_model().unwrap();
        for x in &probes {
            prop_assert_eq!(
                model.predict_scores(Input::Vector(x)).unwrap(),
                back.predict_scores(Input::Vector(x)).unwrap()
            );
        }
        prop_assert_eq!(ModelContainer::from_model(&back).to_bytes(), bytes);
    }

    #[test]
    fn undersampling_keeps_only_originals(tail in prop::collection::vec(0u8..4, 0..40), seed in any::<u64>()) {
        let data = dataset(&tail);
        let task = TaskSpec::multiclass(&catalog());
        let out = random_undersample(&data, &task, seed).unwrap();
        prop_assert!(out.len() <= data.len());
        for e in &out.examples {
            prop_assert!(data.examples.contains(e));
        }
    }

    #[test]
    fn oversampling_never_drops_and_copies_labels(tail in prop::collection::vec(0u8..4, 0..40), seed in any::<u64>()) {
        let data = dataset(&tail);
        let task = TaskSpec::multiclass(&catalog());
        for out in [random_oversample(&data, &task, seed).unwrap(), under_oversample(&data, &task, seed).unwrap()] {
            for e in &out.examples {
                let base = data
                    .examples
                    .iter()
                    .find(|o| o.sentence_index == e.sentence_index)
                    .expect("derived from an input example");
                prop_assert_eq!(&base.gold_labels, &e.gold_labels);
                prop_assert_eq!(&base.text, &e.text);
            }
        }
        let over = random_oversample(&data, &task, seed).unwrap();
        for e in &data.examples {
            prop_assert!(over.examples.contains(e));
        }
    }

    #[test]
    fn noise_variants_keep_gold_labels(tail in prop::collection::vec(0u8..4, 0..20), seed in any::<u64>()) {
        let data = dataset(&tail);
        let positives: Vec<Example> = data.examples.into_iter().filter(Example::is_positive).collect();
        let vocab: Vec<String> = ["alpha", "beta", "gamma"].iter().map(|s| s.to_string()).collect();
        let aug = augment_noise(&positives, &NoiseOp::ALL, &NoiseConfig::default(), &vocab, seed).unwrap();
        prop_assert_eq!(aug.variants.len() + aug.dropped, positives.len() * NoiseOp::ALL.len());
        for v in aug.variants {
            let base = v.base.clone();
            let e = v.into_example();
            prop_assert_eq!(e.gold_labels, base.gold_labels);
            prop_assert_eq!(e.sentence_index, base.sentence_index);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn training_is_deterministic(
        rows in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 8..24),
        seed in any::<u64>(),
        algorithm in prop::sample::select(vec![Algorithm::Logreg, Algorithm::LinearSvm, Algorithm::RandomForest, Algorithm::Mlp]),
    ) {
        let task = TaskSpec::multiclass(&catalog());
        let labels: Vec<usize> = (0..rows.len()).map(|i| i % task.n_classes()).collect();
        let data = FeatureMatrix::new(rows, labels, task.n_classes()).unwrap();
        let hp = Hyperparameters {
            epochs: 5,
            n_trees: 5,
            max_depth: 4,
            hidden_sizes: vec![6],
            ..Hyperparameters::default()
        };
        let a = ModelContainer::from_model(&fit(algorithm, &task, &data, &hp, seed).unwrap());
        let b = ModelContainer::from_model(&fit(algorithm, &task, &data, &hp, seed).unwrap());
        prop_assert_eq!(a.digest(), b.digest());
    }
}
