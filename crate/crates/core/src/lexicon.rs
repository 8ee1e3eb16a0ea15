//! Happiness lexicon loading and window scoring.
//!
//! A window's score is the frequency-weighted mean of the happiness of the
//! lexicon words it contains. Tokens missing from the lexicon are ignored.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use thiserror::Error;

/// Lowest admissible happiness score.
pub const MIN_SCORE: f64 = 1.0;
/// Highest admissible happiness score.
pub const MAX_SCORE: f64 = 9.0;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("line {line}: duplicate word {word:?}")]
    Duplicate { line: usize, word: String },
    #[error("lexicon is empty after loading ({excluded} rows excluded by the neutral band)")]
    Empty { excluded: usize },
    #[error("invalid neutral band ({low}, {high}): low must be below high")]
    InvalidBand { low: f64, high: f64 },
    #[error("window has no tokens")]
    EmptyWindow,
    #[error("none of the {total} window tokens are in the lexicon")]
    ZeroCoverage { total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Open interval of scores excluded from the lexicon at load time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeutralBand {
    pub low: f64,
    pub high: f64,
}

impl NeutralBand {
    pub fn new(low: f64, high: f64) -> Result<Self, LexiconError> {
        if low.is_nan() || high.is_nan() || low >= high {
            return Err(LexiconError::InvalidBand { low, high });
        }
        Ok(Self { low, high })
    }

    pub fn contains(&self, score: f64) -> bool {
        score > self.low && score < self.high
    }
}

/// Word to happiness table. Words are stored lowercased and sorted, so the
/// index of a word is its rank in ascending word order.
#[derive(Debug, Clone)]
pub struct Lexicon {
    words: Vec<String>,
    scores: Vec<f64>,
    index: HashMap<String, usize>,
    neutral_band: Option<NeutralBand>,
    excluded: usize,
}

impl Lexicon {
    /// Builds a lexicon from `(word, score)` pairs.
    pub fn from_entries<I, S>(
        entries: I,
        neutral_band: Option<NeutralBand>,
    ) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: AsRef<str>,
    {
        let rows = entries
            .into_iter()
            .enumerate()
            .map(|(i, (w, s))| (i + 1, w.as_ref().to_string(), s));
        Self::build(rows, neutral_band)
    }

    fn build(
        rows: impl Iterator<Item = (usize, String, f64)>,
        neutral_band: Option<NeutralBand>,
    ) -> Result<Self, LexiconError> {
        let mut table: BTreeMap<String, f64> = BTreeMap::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut excluded = 0;
        for (line, word, score) in rows {
            let word = word.to_lowercase();
            if word.is_empty() {
                return Err(LexiconError::Parse {
                    line,
                    reason: "empty word".into(),
                });
            }
            if !score.is_finite() || !(MIN_SCORE..=MAX_SCORE).contains(&score) {
                return Err(LexiconError::Parse {
                    line,
                    reason: format!("score {score} outside [{MIN_SCORE}, {MAX_SCORE}]"),
                });
            }
            if seen.insert(word.clone(), line).is_some() {
                return Err(LexiconError::Duplicate { line, word });
            }
            if neutral_band.is_some_and(|b| b.contains(score)) {
                excluded += 1;
                continue;
            }
            table.insert(word, score);
        }
        if table.is_empty() {
            return Err(LexiconError::Empty { excluded });
        }
        let (words, scores): (Vec<_>, Vec<_>) = table.into_iter().unzip();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Ok(Self {
            words,
            scores,
            index,
            neutral_band,
            excluded,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Rows dropped because their score fell inside the neutral band.
    pub fn excluded(&self) -> usize {
        self.excluded
    }

    pub fn neutral_band(&self) -> Option<NeutralBand> {
        self.neutral_band
    }

    /// Score of `word` after lowercasing.
    pub fn score(&self, word: &str) -> Option<f64> {
        self.index_of(word).map(|i| self.scores[i])
    }

    /// Position of `word` in ascending word order.
    pub fn index_of(&self, word: &str) -> Option<usize> {
        match self.index.get(word) {
            Some(&i) => Some(i),
            None if word.chars().any(char::is_uppercase) => {
                self.index.get(&word.to_lowercase()).copied()
            }
            None => None,
        }
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn min_score(&self) -> f64 {
        self.scores.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_score(&self) -> f64 {
        self.scores
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.scores.iter().copied())
    }
}

/// Parses a tab-separated lexicon table.
///
/// The first non-blank line is a header when its score column is not
/// numeric. The score is read from the second column unless the header names
/// a `happiness_average` or `score` column (the labMT release puts the rank
/// in column two). Extra columns are ignored; lines starting with `#` are
/// skipped.
pub fn parse_lexicon(
    source: &str,
    neutral_band: Option<NeutralBand>,
) -> Result<Lexicon, LexiconError> {
    let mut score_col = 1;
    let mut header_checked = false;
    let mut rows = Vec::new();
    for (i, raw) in source.lines().enumerate() {
        let line = i + 1;
        let text = raw.trim_end_matches('\r');
        if text.trim().is_empty() || text.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = text.split('\t').collect();
        if !header_checked {
            header_checked = true;
            let numeric = cols
                .get(score_col)
                .is_some_and(|c| c.trim().parse::<f64>().is_ok());
            if !numeric {
                if let Some(pos) = cols.iter().position(|c| {
                    let c = c.trim().to_ascii_lowercase();
                    c == "happiness_average" || c == "score"
                }) {
                    score_col = pos;
                }
                continue;
            }
        }
        if cols.len() <= score_col {
            return Err(LexiconError::Parse {
                line,
                reason: format!("expected at least {} tab-separated columns", score_col + 1),
            });
        }
        let word = cols[0].trim();
        let field = cols[score_col].trim();
        let score: f64 = field.parse().map_err(|_| LexiconError::Parse {
            line,
            reason: format!("score {field:?} is not a number"),
        })?;
        rows.push((line, word.to_string(), score));
    }
    Lexicon::build(rows.into_iter(), neutral_band)
}

/// Reads and parses a lexicon file.
pub fn load_lexicon(
    path: impl AsRef<Path>,
    neutral_band: Option<NeutralBand>,
) -> Result<Lexicon, LexiconError> {
    let source = std::fs::read_to_string(path)?;
    parse_lexicon(&source, neutral_band)
}

/// Happiness of one window of text.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowScore {
    pub score: f64,
    pub matched_count: usize,
    pub total_count: usize,
}

/// Frequency-weighted average happiness of `tokens`.
///
/// Word frequencies are accumulated per lexicon word and summed in ascending
/// word order, so the result does not depend on token order.
pub fn score_window<S: AsRef<str>>(
    tokens: &[S],
    lexicon: &Lexicon,
) -> Result<WindowScore, LexiconError> {
    if tokens.is_empty() {
        return Err(LexiconError::EmptyWindow);
    }
    let mut freq: BTreeMap<usize, u64> = BTreeMap::new();
    for t in tokens {
        if let Some(i) = lexicon.index_of(t.as_ref()) {
            *freq.entry(i).or_insert(0) += 1;
        }
    }
    let matched: u64 = freq.values().sum();
    if matched == 0 {
        return Err(LexiconError::ZeroCoverage {
            total: tokens.len(),
        });
    }
    let weighted = freq
        .iter()
        .fold(0.0, |acc, (&i, &f)| acc + lexicon.scores[i] * f as f64);
    Ok(WindowScore {
        score: weighted / matched as f64,
        matched_count: matched as usize,
        total_count: tokens.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lex(entries: &[(&str, f64)]) -> Lexicon {
        Lexicon::from_entries(entries.iter().copied(), None).unwrap()
    }

    #[test]
    fn loads_plain_rows() {
        let l = parse_lexicon("a\t2.0\nb\t5.0\nc\t8.0\n", None).unwrap();
        assert_eq!(l.len(), 3);
        assert_eq!(l.excluded(), 0);
    }

    #[test]
    fn neutral_band_drops_middle_row() {
        let band = NeutralBand::new(4.0, 6.0).unwrap();
        let l = parse_lexicon("a\t2.0\nb\t5.0\nc\t8.0\n", Some(band)).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.excluded(), 1);
        assert!(l.score("b").is_none());
    }

    #[test]
    fn trailing_columns_are_ignored() {
        let l = parse_lexicon("happy\t7.2\textra\tmore\n", None).unwrap();
        assert_eq!(l.score("happy"), Some(7.2));
    }

    #[test]
    fn header_is_detected() {
        let l = parse_lexicon("word\tscore\nfine\t6.5\n", None).unwrap();
        assert_eq!(l.len(), 1);
        let labmt = "word\thappiness_rank\thappiness_average\tsd\nlaughter\t1\t8.50\t0.93\n";
        let l = parse_lexicon(labmt, None).unwrap();
        assert_eq!(l.score("laughter"), Some(8.5));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_lexicon("a\t2.0\nb\tnope\n", None).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err}");
        let err = parse_lexicon("a\t2.0\nlonely\n", None).unwrap_err();
        assert!(matches!(err, LexiconError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn duplicates_after_case_folding_are_rejected() {
        let err = parse_lexicon("Happy\t7.0\nhappy\t7.1\n", None).unwrap_err();
        assert!(matches!(err, LexiconError::Duplicate { line: 2, .. }));
    }

    #[test]
    fn out_of_range_score_rejected() {
        assert!(parse_lexicon("a\t9.5\n", None).is_err());
        assert!(parse_lexicon("a\tNaN\n", None).is_err());
    }

    #[test]
    fn empty_results_are_errors() {
        assert!(matches!(
            parse_lexicon("", None),
            Err(LexiconError::Empty { .. })
        ));
        let band = NeutralBand::new(4.0, 6.0).unwrap();
        assert!(matches!(
            parse_lexicon("a\t5.0\n", Some(band)),
            Err(LexiconError::Empty { excluded: 1 })
        ));
        assert!(NeutralBand::new(6.0, 4.0).is_err());
    }

    #[test]
    fn single_word_window() {
        let l = lex(&[("w", 6.0)]);
        let s = score_window(&["w"; 5], &l).unwrap();
        assert_eq!(s.score, 6.0);
        assert_eq!((s.matched_count, s.total_count), (5, 5));
    }

    #[test]
    fn weighted_average() {
        let l = lex(&[("a", 7.0), ("b", 4.0)]);
        let s = score_window(&["a", "a", "b"], &l).unwrap();
        assert_eq!(s.score, 6.0);
    }

    #[test]
    fn unmatched_tokens_are_ignored_and_case_folded() {
        let l = lex(&[("a", 7.0), ("b", 4.0)]);
        let s = score_window(&["A", "x", "b", "y"], &l).unwrap();
        assert_eq!(s.score, 5.5);
        assert_eq!((s.matched_count, s.total_count), (2, 4));
    }

    #[test]
    fn zero_coverage() {
        let l = lex(&[("a", 7.0)]);
        assert!(matches!(
            score_window(&["zzz"], &l),
            Err(LexiconError::ZeroCoverage { total: 1 })
        ));
        let empty: [&str; 0] = [];
        assert!(matches!(
            score_window(&empty, &l),
            Err(LexiconError::EmptyWindow)
        ));
    }
}
