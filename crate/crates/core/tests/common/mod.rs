//! Synthetic corpora and independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use storyarcs_core::arcs::{mean_center, EmotionalArc};
use storyarcs_core::lexicon::Lexicon;

/// Rise, fall, fall-rise and rise-fall shapes sampled at `len` points,
/// mean-centered and scaled to unit RMS.
pub fn templates(len: usize) -> Vec<Vec<f64>> {
    let x = |t: usize| t as f64 / (len - 1) as f64;
    let raw: Vec<Vec<f64>> = vec![
        (0..len).map(x).collect(),
        (0..len).map(|t| -x(t)).collect(),
        (0..len).map(|t| (2.0 * x(t) - 1.0).abs()).collect(),
        (0..len).map(|t| -(2.0 * x(t) - 1.0).abs()).collect(),
    ];
    raw.into_iter()
        .map(|v| {
            let c = mean_center(&EmotionalArc::new(0, v)).values;
            let rms = (c.iter().map(|a| a * a).sum::<f64>() / len as f64).sqrt();
            c.into_iter().map(|a| a / rms).collect()
        })
        .collect()
}

/// `per_template` noisy copies of each template. Noise is Gaussian with
/// standard deviation `1 / snr` against unit-RMS templates. Returns centered
/// arcs (ids 0..) and their planted labels.
pub fn planted_arcs(
    per_template: usize,
    len: usize,
    snr: f64,
    seed: u64,
) -> (Vec<EmotionalArc>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0 / snr).unwrap();
    let mut arcs = Vec::new();
    let mut labels = Vec::new();
    for (label, tpl) in templates(len).into_iter().enumerate() {
        for _ in 0..per_template {
            let values = tpl.iter().map(|v| v + noise.sample(&mut rng)).collect();
            let id = arcs.len() as u64;
            arcs.push(mean_center(&EmotionalArc::new(id, values)));
            labels.push(label);
        }
    }
    (arcs, labels)
}

fn choose2(x: u64) -> f64 {
    (x * x.saturating_sub(1)) as f64 / 2.0
}

/// Adjusted Rand index between two labelings, from the contingency table.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut rows: HashMap<usize, u64> = HashMap::new();
    let mut cols: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_rows: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_cols: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_rows * sum_cols / choose2(a.len() as u64);
    let max = 0.5 * (sum_rows + sum_cols);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

/// Vocabulary of `per_score` words at each integer score 1..=9, named
/// `h<score>w<k>`.
pub fn synthetic_lexicon_entries(per_score: usize) -> Vec<(String, f64)> {
    (1..=9)
        .flat_map(|s| (0..per_score).map(move |k| (format!("h{s}w{k}"), s as f64)))
        .collect()
}

pub fn synthetic_lexicon(per_score: usize) -> Lexicon {
    Lexicon::from_entries(synthetic_lexicon_entries(per_score), None).unwrap()
}

/// A book whose local mean happiness follows `shape` (values in [-1, 1]):
/// each token is a score-8 word with probability `0.5 + 0.4 * shape`,
/// otherwise a score-2 word, and every fourth token is an unscored filler.
pub fn shaped_book(shape: impl Fn(f64) -> f64, words: usize, rng: &mut impl Rng) -> Vec<String> {
    (0..words)
        .map(|i| {
            if i % 4 == 3 {
                return "the".to_string();
            }
            let p = 0.5 + 0.4 * shape(i as f64 / words as f64).clamp(-1.0, 1.0);
            let k = rng.random_range(0..5);
            if rng.random::<f64>() < p {
                format!("h8w{k}")
            } else {
                format!("h2w{k}")
            }
        })
        .collect()
}

/// Shape functions on [0, 1] matching [`templates`].
pub fn shape_fn(label: usize) -> fn(f64) -> f64 {
    match label % 4 {
        0 => |x| 2.0 * x - 1.0,
        1 => |x| 1.0 - 2.0 * x,
        2 => |x| 2.0 * (2.0 * x - 1.0).abs() - 1.0,
        _ => |x| 1.0 - 2.0 * (2.0 * x - 1.0).abs(),
    }
}

/// Writes a small Gutenberg-like corpus: catalog, raw texts with licence
/// boilerplate, and a lexicon. Returns the book ids written.
pub fn write_corpus(root: &Path, books: usize, words: usize, seed: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let texts = root.join("texts");
    std::fs::create_dir_all(&texts).unwrap();
    let mut lex = String::from("word\tscore\n");
    for (w, s) in synthetic_lexicon_entries(5) {
        writeln!(lex, "{w}\t{s}").unwrap();
    }
    std::fs::write(root.join("lexicon.tsv"), lex).unwrap();

    let mut catalog = String::from("id,title,language,loc_classes,downloads\n");
    let mut ids = Vec::new();
    for b in 0..books {
        let id = 100 + b as u64;
        let downloads = 5 + (b as u64 * 37) % 200;
        let title = if b % 7 == 6 {
            format!("Collected Poems {b}")
        } else {
            format!("Novel Number {b}")
        };
        writeln!(catalog, "{id},{title},en,PR;PS,{downloads}").unwrap();
        let tokens = shaped_book(shape_fn(b), words, &mut rng);
        let mut text = String::from("The Project Gutenberg EBook of a novel\nLicence text here.\n");
        text.push_str("*** START OF THIS PROJECT GUTENBERG EBOOK NOVEL ***\n");
        for line in tokens.chunks(12) {
            text.push_str(&line.join(" "));
            text.push_str(" , said she.\n");
        }
        text.push_str("*** END OF THIS PROJECT GUTENBERG EBOOK NOVEL ***\nMore licence.\n");
        std::fs::write(texts.join(format!("{id}.txt")), text).unwrap();
        ids.push(id);
    }
    std::fs::write(root.join("catalog.csv"), catalog).unwrap();
    ids
}
