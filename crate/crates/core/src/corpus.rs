//! Catalog filtering, Project Gutenberg boilerplate removal and tokenization.

use std::collections::{BTreeSet, HashSet};
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("catalog line {line}: {reason}")]
    Catalog { line: usize, reason: String },
    #[error("catalog has duplicate book id {0}")]
    DuplicateId(u64),
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Metadata for one book.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: u64,
    pub title: String,
    pub language: String,
    pub loc_classes: BTreeSet<String>,
    pub downloads: u64,
    /// Counted from the cleaned text when the catalog does not carry it.
    pub word_count: Option<u64>,
}

/// Title keywords that mark collections, anthologies and multi-volume sets.
pub const TITLE_BLACKLIST: [&str; 17] = [
    "stories",
    "collection",
    "poems",
    "complete",
    "essays",
    "fables",
    "tales",
    "papers",
    "poetry",
    "verses",
    "ballads",
    "sketches",
    "vol.",
    "vols.",
    "works",
    "volume",
    "other",
];

/// Download thresholds used for the sensitivity sweep.
pub const DOWNLOAD_THRESHOLDS: [u64; 4] = [10, 20, 40, 80];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_words: u64,
    pub max_words: u64,
    /// Books need strictly more downloads than this.
    pub min_downloads: u64,
    pub languages: BTreeSet<String>,
    pub loc_classes: BTreeSet<String>,
    pub title_blacklist: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_words: 20_000,
            max_words: 100_000,
            min_downloads: 40,
            languages: ["en".to_string()].into(),
            loc_classes: ["PN", "PR", "PS", "PZ"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            title_blacklist: TITLE_BLACKLIST.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_words >= self.max_words {
            return Err(CorpusError::Config(format!(
                "min_words ({}) must be below max_words ({})",
                self.min_words, self.max_words
            )));
        }
        Ok(())
    }

    fn title_pattern(&self) -> Option<Regex> {
        if self.title_blacklist.is_empty() {
            return None;
        }
        let alternatives: Vec<String> = self
            .title_blacklist
            .iter()
            .map(|kw| {
                let kw = kw.to_lowercase();
                let body = regex::escape(&kw);
                // A trailing period is itself the right-hand boundary.
                if kw.ends_with(|c: char| c.is_alphanumeric()) {
                    format!(r"\b{body}\b")
                } else {
                    format!(r"\b{body}")
                }
            })
            .collect();
        Some(Regex::new(&format!("(?i)(?:{})", alternatives.join("|"))).expect("escaped keywords"))
    }
}

/// Checks everything except the word count.
struct MetadataFilter<'a> {
    config: &'a FilterConfig,
    languages: HashSet<String>,
    classes: HashSet<String>,
    title: Option<Regex>,
}

impl<'a> MetadataFilter<'a> {
    fn new(config: &'a FilterConfig) -> Self {
        Self {
            config,
            languages: config.languages.iter().map(|l| l.to_lowercase()).collect(),
            classes: config
                .loc_classes
                .iter()
                .map(|c| c.to_uppercase())
                .collect(),
            title: config.title_pattern(),
        }
    }

    fn accepts(&self, entry: &CatalogEntry) -> bool {
        self.languages.contains(&entry.language.to_lowercase())
            && entry.downloads > self.config.min_downloads
            && entry
                .loc_classes
                .iter()
                .any(|c| self.classes.contains(&c.to_uppercase()))
            && !self
                .title
                .as_ref()
                .is_some_and(|re| re.is_match(&entry.title))
    }
}

fn length_ok(entry: &CatalogEntry, config: &FilterConfig) -> bool {
    entry
        .word_count
        .is_some_and(|w| w >= config.min_words && w <= config.max_words)
}

/// Keeps the entries that pass every filter, in input order. Entries without a
/// word count fail the length bound.
pub fn filter_catalog(catalog: &[CatalogEntry], config: &FilterConfig) -> Vec<CatalogEntry> {
    let meta = MetadataFilter::new(config);
    catalog
        .iter()
        .filter(|e| meta.accepts(e) && length_ok(e, config))
        .cloned()
        .collect()
}

/// Like [`filter_catalog`] but ignores the word-count bounds. Used to decide
/// which texts are worth cleaning before their length is known.
pub fn filter_catalog_metadata(
    catalog: &[CatalogEntry],
    config: &FilterConfig,
) -> Vec<CatalogEntry> {
    let meta = MetadataFilter::new(config);
    catalog
        .iter()
        .filter(|e| meta.accepts(e))
        .cloned()
        .collect()
}

#[derive(Debug, Deserialize)]
struct CatalogRow {
    id: u64,
    title: String,
    language: String,
    #[serde(default)]
    loc_classes: String,
    downloads: u64,
    #[serde(default)]
    word_count: Option<u64>,
}

/// Reads a catalog from a delimiter-separated file with a header row naming
/// `id, title, language, loc_classes, downloads` and optionally `word_count`.
/// Multiple classes are separated by `;`.
pub fn read_catalog(
    path: impl AsRef<Path>,
    delimiter: u8,
) -> Result<Vec<CatalogEntry>, CorpusError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut entries = Vec::new();
    let mut ids = HashSet::new();
    for (i, row) in reader.deserialize::<CatalogRow>().enumerate() {
        let row = row.map_err(|e| CorpusError::Catalog {
            line: i + 2,
            reason: e.to_string(),
        })?;
        if !ids.insert(row.id) {
            return Err(CorpusError::DuplicateId(row.id));
        }
        entries.push(CatalogEntry {
            id: row.id,
            title: row.title,
            language: row.language,
            loc_classes: row
                .loc_classes
                .split(';')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
            downloads: row.downloads,
            word_count: row.word_count,
        });
    }
    Ok(entries)
}

/// Writes a catalog in the format accepted by [`read_catalog`].
pub fn write_catalog(path: impl AsRef<Path>, entries: &[CatalogEntry]) -> Result<(), CorpusError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "id",
        "title",
        "language",
        "loc_classes",
        "downloads",
        "word_count",
    ])?;
    for e in entries {
        let classes: Vec<&str> = e.loc_classes.iter().map(String::as_str).collect();
        w.write_record([
            e.id.to_string(),
            e.title.clone(),
            e.language.clone(),
            classes.join(";"),
            e.downloads.to_string(),
            e.word_count.map(|c| c.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Which boilerplate rule fired for a book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StripRule {
    /// 1-based index into the rule list.
    Rule(u8),
    None,
}

impl StripRule {
    pub fn matched(self) -> bool {
        self != StripRule::None
    }
}

/// Outcome of cleaning one book.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StripReport {
    pub front: StripRule,
    pub back: StripRule,
}

/// `(byte offset, line)` for every line, line terminators included.
fn line_spans(text: &str) -> Vec<(usize, &str)> {
    let mut offset = 0;
    text.split_inclusive('\n')
        .map(|line| {
            let start = offset;
            offset += line.len();
            (start, line)
        })
        .collect()
}

const FRONT_MARKERS: [&str; 2] = [
    "START OF THIS PROJECT GUTENBERG EBOOK",
    "START OF THE PROJECT GUTENBERG EBOOK",
];

const BACK_MARKERS: [&str; 3] = [
    "end of this project gutenberg ebook",
    "end of the project gutenberg ebook",
    "end of project gutenberg",
];

/// Removes the licence preamble. Returns the text after the matched line.
pub fn strip_front_matter(text: &str) -> (String, StripRule) {
    let lines = line_spans(text);
    let after = |i: usize| {
        let (start, line) = lines[i];
        text[start + line.len()..].to_string()
    };
    if let Some(i) = lines
        .iter()
        .position(|(_, l)| FRONT_MARKERS.iter().any(|m| l.contains(m)))
    {
        return (after(i), StripRule::Rule(1));
    }
    let half = lines.len() / 2;
    if let Some(i) = lines[..half]
        .iter()
        .position(|(_, l)| l.contains("END") && l.contains("SMALL PRINT"))
    {
        return (after(i), StripRule::Rule(2));
    }
    (text.to_string(), StripRule::None)
}

/// Removes the licence epilogue. Returns the text before the matched line.
pub fn strip_back_matter(text: &str) -> (String, StripRule) {
    let lines = line_spans(text);
    let before = |i: usize| text[..lines[i].0].to_string();
    if let Some(i) = lines.iter().position(|(_, l)| {
        let l = l.to_lowercase();
        BACK_MARKERS.iter().any(|m| l.contains(m))
    }) {
        return (before(i), StripRule::Rule(1));
    }
    let n = lines.len();
    let last_quarter = n - n / 4;
    if let Some(i) = (last_quarter..n).find(|&i| {
        let l = lines[i].1.to_lowercase();
        l.contains("end") && l.contains("project gutenberg")
    }) {
        return (before(i), StripRule::Rule(2));
    }
    let last_tenth = n - n / 10;
    if let Some(i) = (last_tenth..n).find(|&i| lines[i].1.contains("THE END")) {
        return (before(i), StripRule::Rule(3));
    }
    (text.to_string(), StripRule::None)
}

/// Applies front then back stripping.
pub fn clean_text(text: &str) -> (String, StripReport) {
    let (body, front) = strip_front_matter(text);
    let (body, back) = strip_back_matter(&body);
    (body, StripReport { front, back })
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Splits on whitespace, lowercases and trims punctuation from both ends of
/// each piece. Internal apostrophes and hyphens survive.
pub fn tokenize(text: &str) -> Vec<String> {
    // Lowercasing first keeps the result stable: some capitals lowercase to a
    // letter plus a combining mark, which the trim would otherwise leave.
    text.split_whitespace()
        .map(|piece| {
            piece
                .to_lowercase()
                .trim_matches(|c: char| !is_word_char(c))
                .to_string()
        })
        .filter(|core| !core.is_empty())
        .collect()
}

/// Like [`tokenize`] but emits each leading and trailing punctuation mark as
/// its own token.
pub fn tokenize_with_punctuation(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for piece in text.split_whitespace() {
        let piece = piece.to_lowercase();
        let piece = piece.as_str();
        let core = piece.trim_matches(|c: char| !is_word_char(c));
        if core.is_empty() {
            out.extend(piece.chars().map(String::from));
            continue;
        }
        let start = piece.find(core).expect("core is a substring");
        out.extend(piece[..start].chars().map(String::from));
        out.push(core.to_string());
        out.extend(piece[start + core.len()..].chars().map(String::from));
    }
    out
}

/// True for tokens made only of punctuation.
pub fn is_punctuation(token: &str) -> bool {
    !token.chars().any(is_word_char)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(title: &str, words: u64, downloads: u64, class: &str) -> CatalogEntry {
        CatalogEntry {
            id: 1,
            title: title.into(),
            language: "en".into(),
            loc_classes: [class.to_string()].into(),
            downloads,
            word_count: Some(words),
        }
    }

    fn keep(e: CatalogEntry) -> bool {
        filter_catalog(&[e], &FilterConfig::default()).len() == 1
    }

    #[test]
    fn novel_is_kept() {
        assert!(keep(entry("A Novel", 50_000, 100, "PR")));
    }

    #[test]
    fn blacklisted_titles_rejected() {
        assert!(!keep(entry("Collected Poems", 50_000, 100, "PR")));
        assert!(!keep(entry("The Works of Max Beerbohm", 50_000, 100, "PR")));
        assert!(!keep(entry("Memoirs, Vol. 2", 50_000, 100, "PR")));
        assert!(!keep(entry("VOLS. I-II", 50_000, 100, "PR")));
        assert!(!keep(entry("Short-Stories", 50_000, 100, "PR")));
    }

    #[test]
    fn keywords_match_whole_words_only() {
        assert!(keep(entry("The Mother", 50_000, 100, "PR")));
        assert!(keep(entry("Others", 50_000, 100, "PR")));
        assert!(keep(entry("Volcano Days", 50_000, 100, "PR")));
        assert!(keep(entry("Vol", 50_000, 100, "PR")));
    }

    #[test]
    fn length_download_class_language_bounds() {
        assert!(!keep(entry("A Novel", 15_000, 100, "PR")));
        assert!(!keep(entry("A Novel", 100_001, 100, "PR")));
        assert!(keep(entry("A Novel", 20_000, 100, "PR")));
        assert!(keep(entry("A Novel", 100_000, 100, "PR")));
        assert!(!keep(entry("A Novel", 50_000, 40, "PR")));
        assert!(keep(entry("A Novel", 50_000, 41, "PR")));
        assert!(!keep(entry("A Novel", 50_000, 100, "QA")));
        let mut fr = entry("A Novel", 50_000, 100, "PZ");
        fr.language = "fr".into();
        assert!(!keep(fr));
        let mut unknown = entry("A Novel", 0, 100, "PZ");
        unknown.word_count = None;
        assert!(!keep(unknown));
    }

    #[test]
    fn filter_config_validation() {
        let cfg = FilterConfig {
            min_words: 10,
            max_words: 10,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(FilterConfig::default().validate().is_ok());
    }

    fn numbered(n: usize, overrides: &[(usize, &str)]) -> String {
        (0..n)
            .map(|i| {
                overrides
                    .iter()
                    .find(|(j, _)| *j == i)
                    .map(|(_, l)| l.to_string())
                    .unwrap_or_else(|| format!("line {i}"))
            })
            .collect::<Vec<_>>()
            .join("\n")
            + "\n"
    }

    #[test]
    fn front_rule_one() {
        let text = numbered(
            100,
            &[(29, "*** START OF THIS PROJECT GUTENBERG EBOOK ALICE ***")],
        );
        let (body, rule) = strip_front_matter(&text);
        assert_eq!(rule, StripRule::Rule(1));
        assert!(body.starts_with("line 30\n"));
        let text = numbered(
            100,
            &[(5, "*** START OF THE PROJECT GUTENBERG EBOOK X ***")],
        );
        assert_eq!(strip_front_matter(&text).1, StripRule::Rule(1));
    }

    #[test]
    fn front_rule_two_only_in_first_half() {
        let text = numbered(
            100,
            &[(10, "*END*THE SMALL PRINT! FOR PUBLIC DOMAIN ETEXTS*")],
        );
        let (body, rule) = strip_front_matter(&text);
        assert_eq!(rule, StripRule::Rule(2));
        assert!(body.starts_with("line 11\n"));
        let late = numbered(100, &[(60, "END THE SMALL PRINT")]);
        assert_eq!(strip_front_matter(&late).1, StripRule::None);
    }

    #[test]
    fn front_passthrough() {
        let text = numbered(10, &[]);
        assert_eq!(strip_front_matter(&text), (text.clone(), StripRule::None));
    }

    #[test]
    fn back_rule_one_case_insensitive() {
        let text = numbered(100, &[(95, "*** END OF THIS PROJECT GUTENBERG EBOOK ***")]);
        let (body, rule) = strip_back_matter(&text);
        assert_eq!(rule, StripRule::Rule(1));
        assert!(body.ends_with("line 94\n"));
        // The common "End of Project Gutenberg's <title>" footer is caught by
        // the first rule already.
        let text = numbered(100, &[(90, "End of Project Gutenberg's Alice")]);
        assert_eq!(strip_back_matter(&text).1, StripRule::Rule(1));
    }

    #[test]
    fn back_rule_two_in_last_quarter() {
        let text = numbered(100, &[(90, "End of the Project Gutenberg Etext of Alice")]);
        let (body, rule) = strip_back_matter(&text);
        assert_eq!(rule, StripRule::Rule(2));
        assert!(body.ends_with("line 89\n"));
        let early = numbered(100, &[(50, "End of the Project Gutenberg Etext")]);
        assert_eq!(strip_back_matter(&early).1, StripRule::None);
    }

    #[test]
    fn back_rule_three_case_sensitive_last_tenth() {
        let text = numbered(100, &[(95, "THE END")]);
        let (body, rule) = strip_back_matter(&text);
        assert_eq!(rule, StripRule::Rule(3));
        assert!(body.ends_with("line 94\n"));
        assert_eq!(
            strip_back_matter(&numbered(100, &[(95, "The End")])).1,
            StripRule::None
        );
        assert_eq!(
            strip_back_matter(&numbered(100, &[(80, "THE END")])).1,
            StripRule::None
        );
    }

    #[test]
    fn back_passthrough() {
        let text = numbered(10, &[]);
        assert_eq!(strip_back_matter(&text), (text.clone(), StripRule::None));
        assert_eq!(strip_back_matter(""), (String::new(), StripRule::None));
    }

    #[test]
    fn tokenize_examples() {
        assert_eq!(
            tokenize("Alice's Adventures, Ch. 1"),
            ["alice's", "adventures", "ch", "1"]
        );
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("well-known -- 'quoted'"), ["well-known", "quoted"]);
    }

    #[test]
    fn tokenize_keeping_punctuation() {
        assert_eq!(
            tokenize_with_punctuation("go , said the King."),
            ["go", ",", "said", "the", "king", "."]
        );
        assert_eq!(tokenize_with_punctuation("--but"), ["-", "-", "but"]);
        assert!(is_punctuation(","));
        assert!(!is_punctuation("n't"));
    }
}
