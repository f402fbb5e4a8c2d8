//! Randomized invariants over the public API.

use std::collections::BTreeSet;

use proptest::prelude::*;

use zerolog::data::{split_corpus, Corpus};
use zerolog::embed::{embed_template, normalize_token, oov_vector, EmbeddingConfig, WordVectorTable};
use zerolog::eval::{compute_metrics, metrics_from_counts, ConfusionCounts};
use zerolog::parser::{Drain, DrainConfig, Label, LogTemplate, Session, Token};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn metrics_bounds_and_harmonic_identity(
        tp in 0usize..400,
        fp in 0usize..400,
        fn_ in 0usize..400,
        tn in 0usize..400,
    ) {
        let counts = ConfusionCounts { tp, fp, fn_, tn };
        let m = metrics_from_counts(counts, 0.5);
        prop_assert!((0.0..=1.0).contains(&m.precision));
        prop_assert!((0.0..=1.0).contains(&m.recall));
        prop_assert!((0.0..=1.0).contains(&m.f1));
        prop_assert_eq!(m.counts.total(), tp + fp + fn_ + tn);
        if m.precision + m.recall > 0.0 {
            let harmonic = 2.0 * m.precision * m.recall / (m.precision + m.recall);
            prop_assert!((m.f1 - harmonic).abs() < 1e-12);
        } else {
            prop_assert_eq!(m.f1, 0.0);
        }
    }
}

proptest! {
    #[test]
    fn raising_the_threshold_never_raises_recall_or_false_positives(
        scored in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 1..80),
        t_lo in 0.0f64..=1.0,
        t_hi in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if t_lo <= t_hi { (t_lo, t_hi) } else { (t_hi, t_lo) };
        let gold: Vec<bool> = scored.iter().map(|(_, g)| *g).collect();
        let at = |t: f64| {
            let pred: Vec<bool> = scored.iter().map(|(p, _)| *p >= t).collect();
            compute_metrics(&pred, &gold, t).unwrap()
        };
        let (m_lo, m_hi) = (at(lo), at(hi));
        prop_assert!(m_hi.recall <= m_lo.recall);
        prop_assert!(m_hi.counts.fp <= m_lo.counts.fp);
    }

    #[test]
    fn splits_are_disjoint_stratified_and_seed_stable(
        normal in 2usize..40,
        anomalous in 2usize..40,
        fraction in 0.2f64..=1.0,
        seed in any::<u64>(),
    ) {
        let mut sessions = Vec::new();
        for i in 0..normal {
            sessions.push(Session {
                key: format!("n{i}"),
                event_ids: vec![0],
                label: Label::Normal,
            });
        }
        for i in 0..anomalous {
            sessions.push(Session {
                key: format!("a{i}"),
                event_ids: vec![0],
                label: Label::Anomalous,
            });
        }
        let corpus = Corpus { system: "p".into(), sessions };
        let fractions = vec![("take".to_string(), fraction)];
        let Ok(splits) = split_corpus(&corpus, &fractions, seed) else {
            // legal only when a class would round to zero sessions
            prop_assert!(
                (fraction * normal as f64).round() < 1.0
                    || (fraction * anomalous as f64).round() < 1.0
            );
            return Ok(());
        };
        let again = split_corpus(&corpus, &fractions, seed).unwrap();
        prop_assert_eq!(&splits[0].1, &again[0].1);
        let got = &splits[0].1;
        let keys: BTreeSet<&String> = got.sessions.iter().map(|s| &s.key).collect();
        prop_assert_eq!(keys.len(), got.sessions.len());
        let counts = got.counts();
        prop_assert!((counts.normal as f64 - fraction * normal as f64).abs() <= 1.0);
        prop_assert!((counts.anomalous as f64 - fraction * anomalous as f64).abs() <= 1.0);
    }

    #[test]
    fn drain_ids_are_dense_and_replay_stable(
        lines in prop::collection::vec(
            prop::collection::vec(0usize..5, 1..6),
            1..40,
        ),
    ) {
        let alphabet = ["open", "close", "read", "write", "sync"];
        let tokenized: Vec<Vec<String>> = lines
            .iter()
            .map(|l| l.iter().map(|&i| alphabet[i].to_string()).collect())
            .collect();
        let parse_all = || {
            let mut drain = Drain::new(DrainConfig::default()).unwrap();
            let ids: Vec<u32> = tokenized.iter().map(|t| drain.parse_line(t)).collect();
            (ids, drain.freeze())
        };
        let (ids_a, store) = parse_all();
        let (ids_b, _) = parse_all();
        prop_assert_eq!(&ids_a, &ids_b);
        let distinct: BTreeSet<u32> = ids_a.iter().copied().collect();
        prop_assert_eq!(distinct.len(), store.len());
        let dense: BTreeSet<u32> = (0..store.len() as u32).collect();
        prop_assert_eq!(distinct, dense);
    }

    #[test]
    fn oov_vectors_are_unit_norm_and_deterministic(
        token in "[a-z0-9_]{1,12}",
        seed in any::<u64>(),
        dim in 1usize..64,
    ) {
        let v = oov_vector(&token, dim, seed);
        prop_assert_eq!(v.len(), dim);
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() < 1e-9);
        prop_assert_eq!(v, oov_vector(&token, dim, seed));
    }

    #[test]
    fn normalized_tokens_are_lowercase_words(token in "[A-Za-z0-9_.$<>*-]{1,20}") {
        for piece in normalize_token(&token) {
            prop_assert!(!piece.is_empty());
            prop_assert!(piece.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit()));
        }
    }

    #[test]
    fn aggregated_embeddings_stay_inside_the_unit_ball(
        words in prop::collection::vec("[a-z]{1,10}", 1..8),
    ) {
        let template = LogTemplate {
            id: 0,
            tokens: words.iter().map(|w| Token::Lit(w.clone())).collect(),
            match_count: 1,
        };
        let config = EmbeddingConfig { dimension: 16, ..EmbeddingConfig::default() };
        let table = WordVectorTable::empty(16);
        let (v, all_oov) = embed_template(&template, &table, &config, None).unwrap();
        prop_assert!(!all_oov, "seeded hash counts as a usable vector");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        // convex combination of unit vectors
        prop_assert!(norm <= 1.0 + 1e-9);
    }
}
