use std::io::Cursor;
use std::path::Path;

use podintro::chunker::ChunkConfig;
use podintro::corpus::{self, Annotation, Token, TokenRange, Tolerance, TranscriptDoc};
use podintro::scorer::{self, LogisticModel};
use podintro::synth::{self, IntRange, SynthConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn timed_doc(n: usize, ms_per_token: u64, annotations: Vec<Annotation>) -> TranscriptDoc {
    TranscriptDoc {
        episode_id: "e".into(),
        program_id: "p".into(),
        tokens: (0..n)
            .map(|i| Token::new(i, "w").with_times(i as u64 * ms_per_token, i as u64 * ms_per_token + 1))
            .collect(),
        annotations,
    }
}

fn annotation(id: usize, range: Option<(usize, usize)>) -> Annotation {
    Annotation {
        annotator_id: format!("a{id}"),
        intro: range.and_then(|(s, e)| TokenRange::new(s, e)),
    }
}

proptest! {
    #[test]
    fn agreement_is_symmetric(a in 0usize..300, b in 0usize..300, ms in 50u64..1000, timed in any::<bool>()) {
        let mut doc = timed_doc(300, ms, vec![]);
        if !timed {
            doc.tokens.iter_mut().for_each(|t| { t.start_ms = None; t.end_ms = None; });
        }
        let tol = Tolerance::default();
        prop_assert_eq!(corpus::positions_agree(a, b, &doc, tol), corpus::positions_agree(b, a, &doc, tol));
    }

    #[test]
    fn gold_ignores_annotation_order(
        ranges in prop::collection::vec(prop::option::weighted(0.85, (0usize..150, 1usize..100)), 1..6),
        rot in 0usize..6,
        reverse in any::<bool>(),
    ) {
        let anns: Vec<Annotation> = ranges
            .iter()
            .enumerate()
            .map(|(i, r)| annotation(i, r.map(|(s, l)| (s, s + l))))
            .collect();
        let mut permuted = anns.clone();
        permuted.rotate_left(rot % anns.len());
        if reverse {
            permuted.reverse();
        }
        let tol = Tolerance::default();
        let lhs = corpus::resolve_gold(&timed_doc(260, 300, anns), tol).unwrap();
        let rhs = corpus::resolve_gold(&timed_doc(260, 300, permuted), tol).unwrap();
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn gold_positions_come_from_annotators(
        ranges in prop::collection::vec((0usize..150, 1usize..100), 1..6),
    ) {
        let anns: Vec<Annotation> = ranges.iter().enumerate().map(|(i, &(s, l))| annotation(i, Some((s, s + l)))).collect();
        let gold = corpus::resolve_gold(&timed_doc(260, 300, anns), Tolerance::default()).unwrap();
        if let Some(r) = gold.intro {
            prop_assert!(ranges.iter().any(|&(s, _)| s == r.start()));
            prop_assert!(ranges.iter().any(|&(s, l)| s + l == r.end()));
        }
    }
}

#[test]
fn synth_gold_stays_in_configured_ranges() {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for generation in 0..1000u64 {
        let start_min = rng.random_range(0..100);
        let start = IntRange::new(start_min, start_min + rng.random_range(0..100));
        let len_min = rng.random_range(1..80);
        let len = IntRange::new(len_min, len_min + rng.random_range(0..80));
        let ep_min = start.max + len.max + rng.random_range(0..50);
        let cfg = SynthConfig {
            programs: 2,
            episodes_per_program: 3,
            intro_start_range: start,
            intro_len_range: len,
            episode_len_range: IntRange::new(ep_min, ep_min + rng.random_range(0..200)),
            no_intro_prob: 0.1,
            seed: generation,
            ..SynthConfig::default()
        };
        for doc in synth::generate(&cfg).unwrap() {
            doc.validate().unwrap();
            assert!(cfg.episode_len_range.contains(doc.len()));
            if let Some(r) = doc.annotations[0].intro {
                assert!(r.end() <= doc.len(), "{} in generation {generation}", doc.episode_id);
                assert!(start.contains(r.start()) && len.contains(r.len()));
            }
        }
    }
}

#[test]
fn synth_corpus_round_trips_byte_for_byte() {
    let docs = synth::generate(&SynthConfig {
        programs: 4,
        episodes_per_program: 3,
        no_intro_prob: 0.3,
        seed: 8,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut first = Vec::new();
    corpus::write_corpus(&mut first, &docs).unwrap();
    let parsed = corpus::parse_corpus(Cursor::new(&first), Path::new("mem")).unwrap();
    assert_eq!(parsed, docs);
    let mut second = Vec::new();
    corpus::write_corpus(&mut second, &parsed).unwrap();
    assert_eq!(first, second);
}

#[test]
fn scored_documents_are_valid_score_sequences() {
    let cfg = SynthConfig {
        programs: 2,
        episodes_per_program: 4,
        ..SynthConfig::default()
    };
    let table = synth::random_embeddings(cfg.vocabulary(), 8, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for doc in synth::generate(&cfg).unwrap() {
        let model = LogisticModel {
            weights: (0..8).map(|_| rng.random_range(-30.0..30.0)).collect(),
            bias: rng.random_range(-5.0..5.0),
        };
        let chunk = ChunkConfig::new(rng.random_range(2..600), 0).unwrap();
        let chunk = ChunkConfig::new(chunk.max_len, rng.random_range(0..chunk.max_len)).unwrap();
        let seq = scorer::score_document(&doc, &model, &table, &chunk).unwrap();
        assert_eq!(seq.episode_id, doc.episode_id);
        assert_eq!(seq.len(), doc.len());
        assert_eq!(seq.first_out_of_range(), None);
    }
}
