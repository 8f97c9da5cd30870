mod common;

use proptest::prelude::*;

use supmix::corpus::{check_bio, read_conll, repair_bio, subsample, write_conll, Dataset, TaggedSentence};
use supmix::embeddings::{load_text_embeddings, EmbeddingTable};
use supmix::encoders::{CacheRecord, SourceStack};
use supmix::evaluation::{extract_spans, span_f1, spans_to_bio};
use supmix::mixer::softmax_weights;
use supmix::rng;

const TAGS: [&str; 7] = ["O", "B-A", "I-A", "B-B", "I-B", "B-C", "I-C"];

fn tag_seq(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(0..TAGS.len(), 1..=max).prop_map(|v| v.into_iter().map(|i| TAGS[i].to_owned()).collect())
}

fn valid_seq(max: usize) -> impl Strategy<Value = Vec<String>> {
    tag_seq(max).prop_map(|mut t| {
        repair_bio(&mut t);
        t
    })
}

fn dataset(max_sentences: usize) -> impl Strategy<Value = Dataset> {
    prop::collection::vec(valid_seq(6), 1..=max_sentences).prop_map(|seqs| {
        Dataset::new(
            seqs.into_iter()
                .enumerate()
                .map(|(i, labels)| {
                    let tokens = (0..labels.len()).map(|j| format!("w{i}_{j}")).collect();
                    TaggedSentence::new(tokens, labels).unwrap()
                })
                .collect(),
        )
    })
}

proptest! {
    #[test]
    fn softmax_is_a_distribution(a in prop::collection::vec(-30.0f64..30.0, 1..=8), c in -50.0f64..50.0) {
        let w = softmax_weights(&a);
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        prop_assert!(w.iter().all(|&x| x > 0.0));
        let shifted = softmax_weights(&a.iter().map(|x| x + c).collect::<Vec<_>>());
        for (x, y) in w.iter().zip(&shifted) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn mixer_is_permutation_equivariant(seed in any::<u64>()) {
        let mut r = rng::seeded(seed);
        let dims = [3, 1, 5, 2];
        let m = common::random_mixer(&mut r, &dims, 4);
        let stack = common::random_stack(&mut r, 3, &dims);
        let perm = rng::permutation(dims.len(), &mut r);
        let mut pm = m.clone();
        pm.projections = perm.iter().map(|&i| m.projections[i].clone()).collect();
        pm.logits = perm.iter().map(|&i| m.logits[i]).collect();
        let pstack = SourceStack::new(perm.iter().map(|&i| stack.entries()[i].clone()).collect()).unwrap();
        prop_assert_eq!(pm.forward(&pstack).unwrap(), m.forward(&stack).unwrap());
    }

    #[test]
    fn repair_gives_valid_bio(mut tags in tag_seq(12)) {
        repair_bio(&mut tags);
        prop_assert!(check_bio(&tags).is_ok());
        let again = { let mut t = tags.clone(); repair_bio(&mut t); t };
        prop_assert_eq!(again, tags);
    }

    #[test]
    fn spans_round_trip_through_bio(tags in valid_seq(12)) {
        let spans = extract_spans(&tags);
        prop_assert_eq!(spans_to_bio(&spans, tags.len()), tags);
    }

    #[test]
    fn self_score_is_perfect(data in dataset(5)) {
        let gold: Vec<Vec<String>> = data.sentences().iter().map(|s| s.labels().to_vec()).collect();
        let prf = span_f1(&gold, &gold).unwrap();
        prop_assert_eq!(prf.pred_spans, prf.gold_spans);
        prop_assert_eq!(prf.matched, prf.gold_spans);
        if prf.gold_spans > 0 {
            prop_assert_eq!(prf.f1, 1.0);
        }
    }

    #[test]
    fn conll_round_trip(data in dataset(6)) {
        let text = write_conll(&data);
        let back = read_conll(&text).unwrap();
        prop_assert_eq!(write_conll(&back), text);
        prop_assert_eq!(back, data);
    }

    #[test]
    fn subsample_is_a_sorted_subset(data in dataset(12), n in 0usize..15, seed in any::<u64>()) {
        let sub = subsample(&data, n, seed);
        prop_assert_eq!(sub.len(), n.min(data.len()));
        let positions: Vec<usize> = sub
            .sentences()
            .iter()
            .map(|s| data.sentences().iter().position(|t| t == s).unwrap())
            .collect();
        prop_assert!(positions.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(subsample(&data, n, seed), sub);
    }

    #[test]
    fn embedding_text_is_exact(rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 3), 1..6)) {
        let tokens: Vec<String> = (0..rows.len()).map(|i| format!("tok{i}")).collect();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let table = EmbeddingTable::from_parts(tokens, ndarray::Array2::from_shape_vec((rows.len(), 3), flat).unwrap()).unwrap();
        prop_assert_eq!(load_text_embeddings(&table.to_text(), Some(3)).unwrap(), table);
    }

    #[test]
    fn cache_records_are_exact(seed in any::<u64>(), n in 1usize..5, d in 1usize..6) {
        let mut r = rng::seeded(seed);
        let m = common::uniform(&mut r, n, d, 1e3);
        let tokens: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let rec = CacheRecord::new(&tokens, m.view()).unwrap();
        let back = CacheRecord::parse_line(&rec.to_line(), 1).unwrap();
        prop_assert_eq!(back.matrix(), m);
        prop_assert_eq!(back.tokens, tokens);
    }
}
