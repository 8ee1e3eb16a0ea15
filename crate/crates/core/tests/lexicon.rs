use std::path::Path;

use proptest::prelude::*;
use storyarcs_core::lexicon::{load_lexicon, score_window, Lexicon, NeutralBand};

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

#[test]
fn wide_release_file_reads_the_average_column() {
    let lex = load_lexicon(fixture("lexicon_wide.tsv"), None).unwrap();
    assert_eq!(lex.len(), 4);
    assert_eq!(lex.score("laughter"), Some(8.50));
    assert_eq!(lex.score("terrorist"), Some(1.30));
    assert_eq!(lex.score("the"), Some(4.98));

    let banded = load_lexicon(
        fixture("lexicon_wide.tsv"),
        Some(NeutralBand::new(4.0, 6.0).unwrap()),
    )
    .unwrap();
    assert_eq!(banded.len(), 3);
    assert_eq!(banded.excluded(), 1);
    assert_eq!(banded.score("the"), None);
}

fn vocab() -> Vec<String> {
    (0..40).map(|i| format!("v{i}")).collect()
}

fn window() -> impl Strategy<Value = Vec<String>> {
    // Index 40 and above are out-of-lexicon words.
    prop::collection::vec(0usize..60, 1..300).prop_map(|ix| {
        let mut t: Vec<String> = ix.iter().map(|&i| format!("v{i}")).collect();
        t.push("v0".into());
        t
    })
}

fn lexicon_from(scores: &[f64]) -> Lexicon {
    Lexicon::from_entries(vocab().into_iter().zip(scores.iter().copied()), None).unwrap()
}

proptest! {
    #[test]
    fn permutation_does_not_change_score(
        scores in prop::collection::vec(1.0f64..=9.0, 40),
        tokens in window(),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let lex = lexicon_from(&scores);
        let mut shuffled = tokens.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = score_window(&tokens, &lex).unwrap();
        let b = score_window(&shuffled, &lex).unwrap();
        prop_assert_eq!(a.score.to_bits(), b.score.to_bits());
        prop_assert_eq!(a.matched_count, b.matched_count);
    }

    #[test]
    fn score_within_lexicon_range(scores in prop::collection::vec(1.0f64..=9.0, 40), tokens in window()) {
        let lex = lexicon_from(&scores);
        let s = score_window(&tokens, &lex).unwrap().score;
        prop_assert!(lex.min_score() <= s && s <= lex.max_score());
    }

    #[test]
    fn affine_map_of_scores_maps_the_score(
        scores in prop::collection::vec(1.0f64..=9.0, 40),
        tokens in window(),
        a in -1.0f64..=1.0,
    ) {
        // a·h + b keeps [1, 9] inside [1, 9] for |a| ≤ 1 with b = 5 − 5a.
        let b = 5.0 - 5.0 * a;
        let lex = lexicon_from(&scores);
        let mapped: Vec<f64> = scores.iter().map(|h| a * h + b).collect();
        let lex2 = lexicon_from(&mapped);
        let s = score_window(&tokens, &lex).unwrap().score;
        let s2 = score_window(&tokens, &lex2).unwrap().score;
        prop_assert!((s2 - (a * s + b)).abs() <= 1e-12 * 9.0);
    }

    #[test]
    fn duplicating_every_token_keeps_score(scores in prop::collection::vec(1.0f64..=9.0, 40), tokens in window()) {
        let lex = lexicon_from(&scores);
        let doubled: Vec<String> = tokens.iter().flat_map(|t| [t.clone(), t.clone()]).collect();
        let a = score_window(&tokens, &lex).unwrap();
        let b = score_window(&doubled, &lex).unwrap();
        prop_assert!((a.score - b.score).abs() <= 1e-12 * a.score);
        prop_assert_eq!(b.matched_count, 2 * a.matched_count);
    }
}
