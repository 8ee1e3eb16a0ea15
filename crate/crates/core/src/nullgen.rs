//! Null texts: uniformly shuffled words and 2-gram Markov chain output.

use std::collections::HashMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NullError {
    #[error("need at least {needed} tokens, got {found}")]
    TooShort { needed: usize, found: usize },
    #[error("replica count must be at least 1")]
    NoReplicas,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NullKind {
    Salad,
    Markov,
}

impl NullKind {
    fn tag(self) -> u64 {
        match self {
            NullKind::Salad => 1,
            NullKind::Markov => 2,
        }
    }
}

impl fmt::Display for NullKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NullKind::Salad => "salad",
            NullKind::Markov => "markov",
        })
    }
}

impl std::str::FromStr for NullKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "salad" => Ok(NullKind::Salad),
            "markov" | "markov2" => Ok(NullKind::Markov),
            other => Err(format!(
                "unknown null kind {other:?} (expected salad or markov)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NullSpec {
    pub kind: NullKind,
    pub seed: u64,
    pub replicas: usize,
}

impl NullSpec {
    pub fn new(kind: NullKind, seed: u64, replicas: usize) -> Result<Self, NullError> {
        if replicas == 0 {
            return Err(NullError::NoReplicas);
        }
        Ok(Self {
            kind,
            seed,
            replicas,
        })
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one (book, replica) pair, stable across platforms and releases.
pub fn derive_seed(base: u64, kind: NullKind, book_id: u64, replica: usize) -> u64 {
    [kind.tag(), book_id, replica as u64]
        .iter()
        .fold(splitmix(base), |acc, &x| splitmix(acc ^ x))
}

/// Seeded uniform permutation of `tokens`.
pub fn word_salad<T: Clone>(tokens: &[T], seed: u64) -> Vec<T> {
    let mut out = tokens.to_vec();
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}

/// Successor counts between consecutive tokens, in first-seen order.
struct BigramTable<'a> {
    vocab: Vec<&'a str>,
    successors: Vec<Vec<(usize, u64)>>,
}

impl<'a> BigramTable<'a> {
    fn new<S: AsRef<str>>(tokens: &'a [S]) -> Self {
        let mut ids: HashMap<&str, usize> = HashMap::new();
        let mut vocab = Vec::new();
        let seq: Vec<usize> = tokens
            .iter()
            .map(|t| {
                let t = t.as_ref();
                *ids.entry(t).or_insert_with(|| {
                    vocab.push(t);
                    vocab.len() - 1
                })
            })
            .collect();
        let mut successors: Vec<Vec<(usize, u64)>> = vec![Vec::new(); vocab.len()];
        let mut slot: HashMap<(usize, usize), usize> = HashMap::new();
        for pair in seq.windows(2) {
            let list = &mut successors[pair[0]];
            let pos = *slot.entry((pair[0], pair[1])).or_insert_with(|| {
                list.push((pair[1], 0));
                list.len() - 1
            });
            list[pos].1 += 1;
        }
        Self { vocab, successors }
    }

    fn next<R: Rng>(&self, current: usize, rng: &mut R) -> Option<usize> {
        let list = &self.successors[current];
        let total: u64 = list.iter().map(|(_, c)| c).sum();
        if total == 0 {
            return None;
        }
        let mut pick = rng.random_range(0..total);
        for &(w, c) in list {
            if pick < c {
                return Some(w);
            }
            pick -= c;
        }
        unreachable!("pick is below the total count")
    }
}

/// Emits `out_length` tokens from a 2-gram chain trained on `tokens`.
///
/// The chain starts at a token drawn uniformly from the vocabulary. When the
/// current token has no successor it restarts from a fresh uniform draw.
pub fn markov_nonsense<S: AsRef<str>>(
    tokens: &[S],
    seed: u64,
    out_length: usize,
) -> Result<Vec<String>, NullError> {
    Ok(markov_with_restarts(tokens, seed, out_length)?.0)
}

/// [`markov_nonsense`] that also returns the output positions where the chain
/// restarted.
pub fn markov_with_restarts<S: AsRef<str>>(
    tokens: &[S],
    seed: u64,
    out_length: usize,
) -> Result<(Vec<String>, Vec<usize>), NullError> {
    if tokens.len() < 2 {
        return Err(NullError::TooShort {
            needed: 2,
            found: tokens.len(),
        });
    }
    let table = BigramTable::new(tokens);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(out_length);
    let mut restarts = Vec::new();
    let mut current = None;
    while out.len() < out_length {
        let next = current.and_then(|c| table.next(c, &mut rng));
        let token = match next {
            Some(t) => t,
            None => {
                restarts.push(out.len());
                rng.random_range(0..table.vocab.len())
            }
        };
        out.push(table.vocab[token].to_string());
        current = Some(token);
    }
    Ok((out, restarts))
}
