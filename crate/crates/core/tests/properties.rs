use proptest::prelude::*;

use tweak::decoder::{combined_score, decode, faithfulness_weight, DecodeConfig, Strategy as Decoding, WeightScheme};
use tweak::eval::{bleu, PositionHistogram};
use tweak::knowledge::{parse_jsonl, to_jsonl, FactList, FactTriple, K2TInstance};
use tweak::lm::{sequence_logprob, LanguageModel, ToyLm};
use tweak::verifier::HypothesisKind;

fn field() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z]{1,5}", 1..3).prop_map(|w| w.join(" "))
}

fn triple() -> impl Strategy<Value = FactTriple> {
    (field(), "[a-z]{1,6}(_[a-z]{1,4})?", field()).prop_map(|(s, r, o)| FactTriple::new(&s, &r, &o).unwrap())
}

fn fact_list() -> impl Strategy<Value = FactList> {
    prop::collection::vec(triple(), 1..4).prop_map(|t| FactList::new(t).unwrap())
}

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-d]", 1..6).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn linearization_token_count(facts in fact_list()) {
        let words: usize = facts
            .iter()
            .map(|t| t.subject().split_whitespace().count() + t.relation().split_whitespace().count() + t.object().split_whitespace().count())
            .sum();
        prop_assert_eq!(facts.linearize().split_whitespace().count(), 3 * facts.len() + words);
    }

    #[test]
    fn linearization_is_injective(a in fact_list(), b in fact_list()) {
        prop_assert_eq!(a == b, a.linearize() == b.linearize());
    }

    #[test]
    fn corpus_jsonl_round_trip(items in prop::collection::vec((fact_list(), prop::collection::vec(sentence(), 0..3)), 0..5)) {
        let instances: Vec<K2TInstance> = items.into_iter().map(|(f, r)| K2TInstance::new(f, r)).collect();
        prop_assert_eq!(parse_jsonl(&to_jsonl(&instances)).unwrap(), instances);
    }

    #[test]
    fn dynamic_weight_is_monotone(t in 0usize..60, fl in 0usize..60) {
        for scheme in [WeightScheme::Dynamic, WeightScheme::Hvm] {
            let w = faithfulness_weight(scheme, t, fl);
            prop_assert!((0.0..=1.0).contains(&w));
            prop_assert!(faithfulness_weight(scheme, t + 1, fl) >= w);
            if fl > 0 {
                prop_assert!(faithfulness_weight(scheme, t, fl + 1) <= w);
            }
        }
    }

    #[test]
    fn zero_alpha_leaves_generator_score(gen in -50.0f64..0.0, faith in -50.0f64..0.0) {
        prop_assert_eq!(combined_score(gen, faith, 0.0), gen);
        prop_assert_eq!(combined_score(gen, f64::NEG_INFINITY, 0.0), gen);
    }

    #[test]
    fn toy_distributions_are_normalized(corpus in prop::collection::vec(sentence(), 1..5), order in 1usize..5, probe in prop::collection::vec(0u32..6, 0..4)) {
        let facts = FactList::new(vec![FactTriple::new("a", "r", "b").unwrap()]).unwrap();
        let pairs: Vec<_> = corpus.into_iter().map(|s| (facts.clone(), s)).collect();
        let lm = ToyLm::train(&pairs, order, 0.1).unwrap();
        let v = lm.vocabulary();
        let mut prefix = vec![v.bos()];
        prefix.extend(probe.into_iter().map(|i| i % v.len() as u32).filter(|&i| i != v.bos()));
        let dist = lm.next_logprobs(&prefix, &facts).unwrap();
        prop_assert!((dist.exp_sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn beam_output_score_factorizes(corpus in prop::collection::vec(sentence(), 1..5), k in 1usize..5) {
        let facts = FactList::new(vec![FactTriple::new("a", "r", "b").unwrap()]).unwrap();
        let pairs: Vec<_> = corpus.into_iter().map(|s| (facts.clone(), s)).collect();
        let lm = ToyLm::train(&pairs, 3, 0.05).unwrap();
        let cfg = DecodeConfig::toy(Decoding::Beam).with_k(k);
        let out = decode(&facts, &lm, None, &cfg).unwrap();
        let again = decode(&facts, &lm, None, &cfg).unwrap();
        prop_assert_eq!(&out, &again);
        if out.tokens.last() == Some(&lm.vocabulary().eos()) {
            let direct = sequence_logprob(&lm, &out.tokens, &facts).unwrap();
            prop_assert!((direct - out.gen_logprob).abs() < 1e-9);
        }
        for w in out.beam.windows(2) {
            prop_assert!(w[0].combined >= w[1].combined);
        }
    }

    #[test]
    fn bleu_is_bounded(c in sentence(), r in sentence()) {
        let s = bleu(&c, std::slice::from_ref(&r), 4);
        prop_assert!((0.0..=100.0).contains(&s));
        prop_assert!((bleu(&r, std::slice::from_ref(&r), 4) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn histogram_conserves_counts(points in prop::collection::vec((0.0f64..=1.0, any::<bool>()), 0..200), bins in 1usize..25) {
        let mut h = PositionHistogram::new(bins);
        for (p, back) in &points {
            h.add(*p, if *back { HypothesisKind::Backward } else { HypothesisKind::Forward });
        }
        prop_assert_eq!(h.total() as usize, points.len());
        prop_assert_eq!(h.backward.iter().sum::<u64>() as usize, points.iter().filter(|(_, b)| *b).count());
        prop_assert_eq!(PositionHistogram::from_csv(&h.to_csv()).unwrap(), h);
    }
}
