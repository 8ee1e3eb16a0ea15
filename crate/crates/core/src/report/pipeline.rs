//! Stage orchestration: ingest, arcs, svd, cluster, som, null, report.
//!
//! Every stage reads the files left by the previous ones in the run
//! directory, so any stage can be rerun on its own.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tables::{self, num, write_csv, write_json};
use super::{download_stats, mode_label, HistogramConfig};
use crate::arcs::{self, emotional_arc, mean_center, EmotionalArc};
use crate::clustering::{
    central_book, distance_matrix, mean_arc, members_by_label, silhouette, ward_linkage, WardInput,
};
use crate::corpus::{
    clean_text, filter_catalog, filter_catalog_metadata, is_punctuation, read_catalog, tokenize,
    tokenize_with_punctuation, write_catalog, CatalogEntry, FilterConfig, StripRule,
};
use crate::lexicon::{load_lexicon, NeutralBand};
use crate::modes::{decompose, ArcMatrix, Polarity};
use crate::nullgen::{derive_seed, markov_nonsense, word_salad, NullKind};
use crate::som::{self, SomConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Arcs,
    Svd,
    Cluster,
    Som,
    Null,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Arcs,
        Stage::Svd,
        Stage::Cluster,
        Stage::Som,
        Stage::Null,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Arcs => "arcs",
            Stage::Svd => "svd",
            Stage::Cluster => "cluster",
            Stage::Som => "som",
            Stage::Null => "null",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage}: {message}{}", fmt_books(.books))]
    Stage {
        stage: Stage,
        message: String,
        books: Vec<u64>,
    },
    #[error("config: {0}")]
    Config(String),
}

fn fmt_books(books: &[u64]) -> String {
    if books.is_empty() {
        return String::new();
    }
    let shown: Vec<String> = books.iter().take(20).map(u64::to_string).collect();
    let more = if books.len() > 20 {
        format!(" and {} more", books.len() - 20)
    } else {
        String::new()
    };
    format!(" (books {}{more})", shown.join(", "))
}

trait StageContext<T> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError>;
}

impl<T, E: fmt::Display> StageContext<T> for Result<T, E> {
    fn stage(self, stage: Stage) -> Result<T, PipelineError> {
        self.map_err(|e| PipelineError::Stage {
            stage,
            message: e.to_string(),
            books: vec![],
        })
    }
}

fn fail(stage: Stage, message: impl Into<String>, books: Vec<u64>) -> PipelineError {
    PipelineError::Stage {
        stage,
        message: message.into(),
        books,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NullSettings {
    pub kinds: Vec<NullKind>,
    pub seed: u64,
    pub replicas: usize,
}

impl Default for NullSettings {
    fn default() -> Self {
        Self {
            kinds: vec![NullKind::Salad, NullKind::Markov],
            seed: 0,
            replicas: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub catalog: PathBuf,
    /// Field separator of the catalog file.
    pub catalog_delimiter: char,
    /// Directory of raw texts named `<id>.txt`.
    pub texts_dir: PathBuf,
    pub lexicon: PathBuf,
    pub neutral_band: Option<[f64; 2]>,
    pub filter: FilterConfig,
    /// Keep books where no front-matter rule matched.
    pub include_unstripped: bool,
    pub window_size: usize,
    pub points: usize,
    /// Modes listed in the per-mode book reports.
    pub report_modes: usize,
    pub top_k: usize,
    pub ward_input: WardInput,
    pub cuts: Vec<usize>,
    pub dendrogram_clusters: usize,
    pub som: SomConfig,
    pub null: NullSettings,
    pub min_fractions: Vec<f64>,
    pub histogram: HistogramConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            catalog: PathBuf::from("catalog.csv"),
            catalog_delimiter: ',',
            texts_dir: PathBuf::from("texts"),
            lexicon: PathBuf::from("lexicon.tsv"),
            neutral_band: None,
            filter: FilterConfig::default(),
            include_unstripped: false,
            window_size: arcs::DEFAULT_WINDOW,
            points: arcs::DEFAULT_POINTS,
            report_modes: 12,
            top_k: 10,
            ward_input: WardInput::Squared,
            cuts: (2..=9).collect(),
            dendrogram_clusters: 60,
            som: SomConfig::default(),
            null: NullSettings::default(),
            min_fractions: vec![0.025, 0.005],
            histogram: HistogramConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.filter
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.som
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some([lo, hi]) = self.neutral_band {
            NeutralBand::new(lo, hi).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.window_size == 0 || self.points == 0 {
            return Err(PipelineError::Config(
                "window_size and points must be positive".into(),
            ));
        }
        if self.null.replicas == 0 {
            return Err(PipelineError::Config(
                "null.replicas must be at least 1".into(),
            ));
        }
        if self.histogram.bins == 0
            || !(self.histogram.low > 0.0 && self.histogram.low < self.histogram.high)
        {
            return Err(PipelineError::Config(
                "histogram needs bins >= 1 and 0 < low < high".into(),
            ));
        }
        if !self.catalog_delimiter.is_ascii() {
            return Err(PipelineError::Config(
                "catalog_delimiter must be ASCII".into(),
            ));
        }
        Ok(())
    }

    fn band(&self) -> Option<NeutralBand> {
        self.neutral_band
            .map(|[lo, hi]| NeutralBand { low: lo, high: hi })
    }
}

/// SHA-256 of the canonical JSON form of the config.
pub fn config_hash(config: &PipelineConfig) -> String {
    tables::hex_digest(
        serde_json::to_string(config)
            .expect("config serializes")
            .as_bytes(),
    )
}

pub type StageCounts = BTreeMap<String, u64>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Counts recorded by each stage, keyed by stage name (null analyses are
    /// keyed `null-<kind>-<replica>/<stage>`).
    pub stages: BTreeMap<String, StageCounts>,
    /// SHA-256 of every file in the run directory except the manifest.
    pub artifacts: BTreeMap<String, String>,
}

/// Layout of a run directory.
#[derive(Debug, Clone)]
pub struct RunDir {
    pub root: PathBuf,
}

const MANIFEST: &str = "manifest.json";

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn tokens_dir(&self) -> PathBuf {
        self.root.join("tokens")
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join(MANIFEST)
    }

    pub fn read_manifest(&self) -> Manifest {
        fs::read_to_string(self.manifest_path())
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
            .unwrap_or_default()
    }
}

/// One analysis target: the real corpus or one null replica.
struct Analysis {
    dir: PathBuf,
    token_suffix: String,
    key_prefix: String,
}

impl Analysis {
    fn real(run: &RunDir) -> Self {
        Self {
            dir: run.root.clone(),
            token_suffix: "txt".into(),
            key_prefix: String::new(),
        }
    }

    fn null(run: &RunDir, kind: NullKind, replica: usize) -> Self {
        let name = format!("null-{kind}-{replica}");
        Self {
            dir: run.root.join(&name),
            token_suffix: format!("{kind}.{replica}"),
            key_prefix: format!("{name}/"),
        }
    }

    fn key(&self, stage: Stage) -> String {
        format!("{}{}", self.key_prefix, stage)
    }

    fn sub(&self, name: &str) -> std::io::Result<PathBuf> {
        let p = self.dir.join(name);
        fs::create_dir_all(&p)?;
        Ok(p)
    }
}

fn token_path(run: &RunDir, id: u64, suffix: &str) -> PathBuf {
    run.tokens_dir().join(format!("{id}.{suffix}"))
}

fn read_books(run: &RunDir, stage: Stage) -> Result<Vec<CatalogEntry>, PipelineError> {
    read_catalog(run.root.join("books.csv"), b',').map_err(|e| {
        fail(
            stage,
            format!("reading books.csv (run ingest first): {e}"),
            vec![],
        )
    })
}

fn raw_text(config: &PipelineConfig, id: u64) -> std::io::Result<String> {
    let bytes = fs::read(config.texts_dir.join(format!("{id}.txt")))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn ingest(config: &PipelineConfig, run: &RunDir) -> Result<StageCounts, PipelineError> {
    let stage = Stage::Ingest;
    let delimiter = config.catalog_delimiter as u8;
    let catalog = read_catalog(&config.catalog, delimiter).stage(stage)?;
    let candidates = filter_catalog_metadata(&catalog, &config.filter);

    let cleaned: Vec<_> = candidates
        .par_iter()
        .map(|e| {
            raw_text(config, e.id).map(|text| {
                let (body, report) = clean_text(&text);
                (report, tokenize(&body))
            })
        })
        .collect();
    let missing: Vec<u64> = candidates
        .iter()
        .zip(&cleaned)
        .filter(|(_, r)| r.is_err())
        .map(|(e, _)| e.id)
        .collect();
    if !missing.is_empty() {
        return Err(fail(stage, "raw text missing or unreadable", missing));
    }
    let cleaned: Vec<_> = cleaned.into_iter().map(Result::unwrap).collect();

    let mut stripped = Vec::new();
    let mut tokens_by_id = HashMap::new();
    let mut strip_rows = Vec::new();
    let (mut front_hits, mut back_hits, mut both_hits) = (0u64, 0u64, 0u64);
    for (entry, (report, tokens)) in candidates.iter().zip(cleaned) {
        front_hits += report.front.matched() as u64;
        back_hits += report.back.matched() as u64;
        both_hits += (report.front.matched() && report.back.matched()) as u64;
        let usable = report.front.matched() || config.include_unstripped;
        strip_rows.push(vec![
            entry.id.to_string(),
            rule_name(report.front),
            rule_name(report.back),
            tokens.len().to_string(),
            usable.to_string(),
        ]);
        if usable {
            let mut e = entry.clone();
            e.word_count.get_or_insert(tokens.len() as u64);
            stripped.push(e);
            tokens_by_id.insert(entry.id, tokens);
        }
    }
    let kept = filter_catalog(&stripped, &config.filter);

    fs::create_dir_all(run.tokens_dir()).stage(stage)?;
    kept.par_iter()
        .map(|e| tables::write_tokens(&token_path(run, e.id, "txt"), &tokens_by_id[&e.id]))
        .collect::<Result<Vec<_>, _>>()
        .stage(stage)?;
    write_catalog(run.root.join("books.csv"), &kept).stage(stage)?;
    write_csv(
        &run.root.join("strip_report.csv"),
        &["book_id", "front_rule", "back_rule", "tokens", "usable"],
        strip_rows,
    )
    .stage(stage)?;

    Ok(BTreeMap::from([
        ("catalog".into(), catalog.len() as u64),
        ("metadata_kept".into(), candidates.len() as u64),
        ("front_matched".into(), front_hits),
        ("back_matched".into(), back_hits),
        ("both_matched".into(), both_hits),
        ("stripped".into(), stripped.len() as u64),
        ("kept".into(), kept.len() as u64),
    ]))
}

fn rule_name(rule: StripRule) -> String {
    match rule {
        StripRule::Rule(i) => i.to_string(),
        StripRule::None => "none".into(),
    }
}

fn compute_arcs(
    config: &PipelineConfig,
    run: &RunDir,
    target: &Analysis,
) -> Result<StageCounts, PipelineError> {
    let stage = Stage::Arcs;
    let books = read_books(run, stage)?;
    let lexicon = load_lexicon(&config.lexicon, config.band()).stage(stage)?;
    let results: Vec<_> = books
        .par_iter()
        .map(|b| {
            let tokens = tables::read_tokens(&token_path(run, b.id, &target.token_suffix))
                .map_err(|e| e.to_string())?;
            let words: Vec<&String> = tokens.iter().filter(|t| !is_punctuation(t)).collect();
            emotional_arc(b.id, &words, &lexicon, config.window_size, config.points)
                .map_err(|e| e.to_string())
        })
        .collect();
    let mut failed = Vec::new();
    let mut first_error = None;
    let mut arcs = Vec::with_capacity(books.len());
    for (b, r) in books.iter().zip(results) {
        match r {
            Ok(a) => arcs.push(a),
            Err(e) => {
                failed.push(b.id);
                first_error.get_or_insert(e);
            }
        }
    }
    if !failed.is_empty() {
        return Err(fail(stage, first_error.unwrap(), failed));
    }
    fs::create_dir_all(&target.dir).stage(stage)?;
    let centered: Vec<EmotionalArc> = arcs.iter().map(mean_center).collect();
    let out = |name: &str| fs::File::create(target.dir.join(name)).map(std::io::BufWriter::new);
    arcs::write_arcs_csv(out("arcs.csv").stage(stage)?, &arcs).stage(stage)?;
    arcs::write_arcs_binary(out("arcs.bin").stage(stage)?, &arcs).stage(stage)?;
    arcs::write_arcs_csv(out("arcs_centered.csv").stage(stage)?, &centered).stage(stage)?;
    Ok(BTreeMap::from([
        ("arcs".into(), arcs.len() as u64),
        ("points".into(), config.points as u64),
        ("lexicon_words".into(), lexicon.len() as u64),
    ]))
}

fn read_centered(target: &Analysis, stage: Stage) -> Result<Vec<EmotionalArc>, PipelineError> {
    let file = fs::File::open(target.dir.join("arcs_centered.csv")).map_err(|e| {
        fail(
            stage,
            format!("reading arcs_centered.csv (run arcs first): {e}"),
            vec![],
        )
    })?;
    arcs::read_arcs_csv(std::io::BufReader::new(file)).stage(stage)
}

fn row_of(id: u64, values: impl Iterator<Item = f64>) -> Vec<String> {
    std::iter::once(id.to_string())
        .chain(values.map(num))
        .collect()
}

fn indexed_header(first: &str, prefix: &str, n: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=n).map(|i| format!("{prefix}{i}")))
        .collect()
}

fn svd(
    config: &PipelineConfig,
    run: &RunDir,
    target: &Analysis,
) -> Result<StageCounts, PipelineError> {
    let stage = Stage::Svd;
    let arcs = read_centered(target, stage)?;
    let books: HashMap<u64, CatalogEntry> = read_books(run, stage)?
        .into_iter()
        .map(|b| (b.id, b))
        .collect();
    let matrix = ArcMatrix::from_arcs(&arcs).stage(stage)?;
    let d = decompose(&matrix).stage(stage)?;
    let dir = target.sub("svd").stage(stage)?;
    let k = d.num_modes();

    let header = indexed_header("mode", "t", matrix.ncols());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &dir.join("modes.csv"),
        &header,
        (0..k).map(|j| row_of(j as u64 + 1, d.modes.row(j).iter().copied())),
    )
    .stage(stage)?;

    let curve = d.variance_curve();
    write_csv(
        &dir.join("spectrum.csv"),
        &["mode", "singular_value", "variance_explained"],
        (0..k).map(|j| {
            vec![
                (j + 1).to_string(),
                num(d.singular_values[j]),
                num(curve[j]),
            ]
        }),
    )
    .stage(stage)?;

    let header = indexed_header("book_id", "w", k);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    for (name, m) in [
        ("coefficients.csv", &d.coefficients),
        ("coefficients_normalized.csv", &d.normalized),
    ] {
        write_csv(
            &dir.join(name),
            &header,
            (0..d.num_books()).map(|i| row_of(d.book_ids[i], m.row(i).iter().copied())),
        )
        .stage(stage)?;
    }

    let mut top = Vec::new();
    for j in 0..config.report_modes.min(k) {
        for polarity in [Polarity::Positive, Polarity::Negative] {
            for (rank, b) in d
                .rank_books_for_mode(j, polarity, config.top_k)
                .stage(stage)?
                .into_iter()
                .enumerate()
            {
                let meta = books.get(&b.book_id);
                top.push(vec![
                    mode_label(j, polarity),
                    (rank + 1).to_string(),
                    b.book_id.to_string(),
                    meta.map(|m| m.title.clone()).unwrap_or_default(),
                    meta.map(|m| m.downloads.to_string()).unwrap_or_default(),
                    num(b.coefficient),
                ]);
            }
        }
    }
    write_csv(
        &dir.join("top_books.csv"),
        &[
            "mode",
            "rank",
            "book_id",
            "title",
            "downloads",
            "coefficient",
        ],
        top,
    )
    .stage(stage)?;

    let assignments = d.assign_all();
    write_csv(
        &dir.join("assignments.csv"),
        &["book_id", "mode", "polarity", "label"],
        assignments.iter().zip(&d.book_ids).map(|((m, p), id)| {
            vec![
                id.to_string(),
                (m + 1).to_string(),
                if *p == Polarity::Positive { "+" } else { "-" }.to_string(),
                mode_label(*m, *p),
            ]
        }),
    )
    .stage(stage)?;

    #[derive(Serialize)]
    struct Summary {
        books: usize,
        points: usize,
        modes: usize,
        rank: usize,
        variance_explained_12: Option<f64>,
        variance_curve: Vec<f64>,
    }
    write_json(
        &dir.join("summary.json"),
        &Summary {
            books: d.num_books(),
            points: matrix.ncols(),
            modes: k,
            rank: d.rank(),
            variance_explained_12: d.variance_explained(12).ok(),
            variance_curve: curve,
        },
    )
    .stage(stage)?;
    Ok(BTreeMap::from([
        ("rows".into(), d.num_books() as u64),
        ("modes".into(), k as u64),
        ("rank".into(), d.rank() as u64),
    ]))
}

fn cluster(config: &PipelineConfig, target: &Analysis) -> Result<StageCounts, PipelineError> {
    let stage = Stage::Cluster;
    let arcs = read_centered(target, stage)?;
    let n = arcs.len();
    let dist = distance_matrix(&arcs).stage(stage)?;
    let tree = ward_linkage(&dist, config.ward_input).stage(stage)?;
    let ids: Vec<u64> = arcs.iter().map(|a| a.book_id).collect();
    let dir = target.sub("cluster").stage(stage)?;

    write_csv(
        &dir.join("merges.csv"),
        &["step", "cluster_id", "a", "b", "height", "size"],
        tree.merges.iter().enumerate().map(|(t, m)| {
            vec![
                t.to_string(),
                (n + t).to_string(),
                m.a.to_string(),
                m.b.to_string(),
                num(m.height),
                m.size.to_string(),
            ]
        }),
    )
    .stage(stage)?;

    let ks: Vec<usize> = config
        .cuts
        .iter()
        .copied()
        .filter(|&k| k >= 1 && k <= n)
        .collect();
    let cuts: Vec<Vec<usize>> = ks
        .iter()
        .map(|&k| tree.cut(k))
        .collect::<Result<_, _>>()
        .stage(stage)?;
    let header: Vec<String> = std::iter::once("book_id".to_string())
        .chain(ks.iter().map(|k| format!("k{k}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &dir.join("cuts.csv"),
        &header,
        (0..n).map(|i| {
            std::iter::once(ids[i].to_string())
                .chain(cuts.iter().map(|c| c[i].to_string()))
                .collect::<Vec<_>>()
        }),
    )
    .stage(stage)?;

    #[derive(Serialize)]
    struct ClusterSummary {
        label: usize,
        size: usize,
        central_book: u64,
        mean_silhouette: Option<f64>,
        mean_arc: Vec<f64>,
    }
    #[derive(Serialize)]
    struct CutSummary {
        k: usize,
        mean_silhouette: Option<f64>,
        clusters: Vec<ClusterSummary>,
    }
    let mut sil_rows = Vec::new();
    let mut summaries = Vec::new();
    for (&k, labels) in ks.iter().zip(&cuts) {
        let sil = silhouette(labels, &dist).ok();
        if let Some(s) = &sil {
            for i in 0..n {
                sil_rows.push(vec![
                    ids[i].to_string(),
                    k.to_string(),
                    labels[i].to_string(),
                    num(s.values[i]),
                ]);
            }
        }
        let clusters = members_by_label(labels)
            .into_iter()
            .enumerate()
            .map(|(label, members)| ClusterSummary {
                label,
                size: members.len(),
                central_book: central_book(&members, &dist).expect("clusters are non-empty"),
                mean_silhouette: sil.as_ref().map(|s| {
                    members.iter().map(|&i| s.values[i]).sum::<f64>() / members.len() as f64
                }),
                mean_arc: mean_arc(&arcs, &members),
            })
            .collect();
        summaries.push(CutSummary {
            k,
            mean_silhouette: sil.map(|s| s.mean),
            clusters,
        });
    }
    write_csv(
        &dir.join("silhouettes.csv"),
        &["book_id", "k", "label", "silhouette"],
        sil_rows,
    )
    .stage(stage)?;

    #[derive(Serialize)]
    struct Summary {
        books: usize,
        ward_input: WardInput,
        final_height: f64,
        cuts: Vec<CutSummary>,
    }
    write_json(
        &dir.join("clusters.json"),
        &Summary {
            books: n,
            ward_input: config.ward_input,
            final_height: tree.final_height(),
            cuts: summaries,
        },
    )
    .stage(stage)?;

    let top = config.dendrogram_clusters.clamp(1, n);
    let leaves = tree.truncated_leaves(top).stage(stage)?;
    write_csv(
        &dir.join("dendrogram.csv"),
        &["cluster_id", "size", "central_book"],
        leaves.iter().map(|(id, members)| {
            vec![
                id.to_string(),
                members.len().to_string(),
                central_book(members, &dist).expect("non-empty").to_string(),
            ]
        }),
    )
    .stage(stage)?;

    Ok(BTreeMap::from([
        ("leaves".into(), n as u64),
        ("merges".into(), tree.merges.len() as u64),
    ]))
}

fn train_som(config: &PipelineConfig, target: &Analysis) -> Result<StageCounts, PipelineError> {
    let stage = Stage::Som;
    let arcs = read_centered(target, stage)?;
    if arcs.is_empty() {
        return Err(fail(stage, "no arcs", vec![]));
    }
    let mut grid = som::init_grid(&config.som, arcs[0].len());
    som::train(&mut grid, &arcs, &config.som).stage(stage)?;
    let winners = som::winners(&grid, &arcs);
    let bmat = som::b_matrix(&grid);
    let dir = target.sub("som").stage(stage)?;

    let header: Vec<String> = ["node", "row", "col"]
        .iter()
        .map(|s| s.to_string())
        .chain((0..grid.dim()).map(|t| format!("t{t}")))
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_csv(
        &dir.join("nodes.csv"),
        &header,
        grid.nodes.iter().enumerate().map(|(k, v)| {
            let (r, c) = grid.coords(k);
            [k.to_string(), r.to_string(), c.to_string()]
                .into_iter()
                .chain(v.iter().copied().map(num))
                .collect::<Vec<_>>()
        }),
    )
    .stage(stage)?;
    write_csv(
        &dir.join("grid.csv"),
        &["node", "row", "col", "winner_count", "b_value"],
        (0..grid.len()).map(|k| {
            let (r, c) = grid.coords(k);
            vec![
                k.to_string(),
                r.to_string(),
                c.to_string(),
                winners[&k].count.to_string(),
                num(bmat[k]),
            ]
        }),
    )
    .stage(stage)?;
    write_csv(
        &dir.join("members.csv"),
        &["node", "book_id"],
        winners.iter().flat_map(|(k, w)| {
            let arcs = &arcs;
            w.members
                .iter()
                .map(move |&i| vec![k.to_string(), arcs[i].book_id.to_string()])
        }),
    )
    .stage(stage)?;

    #[derive(Serialize)]
    struct TopNode {
        node: usize,
        row: usize,
        col: usize,
        count: usize,
        books: Vec<u64>,
        mean_arc: Vec<f64>,
    }
    let mut ranked: Vec<(&usize, &som::NodeWinners)> = winners.iter().collect();
    ranked.sort_by(|a, b| b.1.count.cmp(&a.1.count).then(a.0.cmp(b.0)));
    let top: Vec<TopNode> = ranked
        .into_iter()
        .take(9)
        .filter(|(_, w)| w.count > 0)
        .map(|(&k, w)| {
            let (row, col) = grid.coords(k);
            TopNode {
                node: k,
                row,
                col,
                count: w.count,
                books: w.members.iter().map(|&i| arcs[i].book_id).collect(),
                mean_arc: mean_arc(&arcs, &w.members),
            }
        })
        .collect();
    #[derive(Serialize)]
    struct Summary<'a> {
        config: &'a SomConfig,
        books: usize,
        occupied_nodes: usize,
        top_nodes: Vec<TopNode>,
    }
    let occupied = winners.values().filter(|w| w.count > 0).count();
    write_json(
        &dir.join("summary.json"),
        &Summary {
            config: &config.som,
            books: arcs.len(),
            occupied_nodes: occupied,
            top_nodes: top,
        },
    )
    .stage(stage)?;
    Ok(BTreeMap::from([
        ("corpus".into(), arcs.len() as u64),
        ("nodes".into(), grid.len() as u64),
        ("occupied_nodes".into(), occupied as u64),
        ("steps".into(), config.som.total_steps),
    ]))
}

fn report(
    config: &PipelineConfig,
    run: &RunDir,
    target: &Analysis,
) -> Result<StageCounts, PipelineError> {
    let stage = Stage::Report;
    let downloads: HashMap<u64, u64> = read_books(run, stage)?
        .into_iter()
        .map(|b| (b.id, b.downloads))
        .collect();
    let path = target.dir.join("svd").join("assignments.csv");
    let mut reader = csv::Reader::from_path(&path).map_err(|e| {
        fail(
            stage,
            format!("reading {} (run svd first): {e}", path.display()),
            vec![],
        )
    })?;
    let mut assignments = Vec::new();
    let mut dl = Vec::new();
    for rec in reader.records() {
        let rec = rec.stage(stage)?;
        let parse = |i: usize| rec.get(i).and_then(|f| f.parse::<u64>().ok());
        let (Some(id), Some(mode)) = (parse(0), parse(1)) else {
            return Err(fail(stage, "malformed assignments.csv", vec![]));
        };
        let polarity = if rec.get(2) == Some("-") {
            Polarity::Negative
        } else {
            Polarity::Positive
        };
        let Some(&d) = downloads.get(&id) else {
            return Err(fail(stage, "book missing from books.csv", vec![id]));
        };
        assignments.push((mode as usize - 1, polarity));
        dl.push(d);
    }
    let dir = target.sub("report").stage(stage)?;
    let mut counts = BTreeMap::from([("books".to_string(), assignments.len() as u64)]);
    for &min_fraction in &config.min_fractions {
        let stats = download_stats(&assignments, &dl, min_fraction, &config.histogram);
        let tag = format!("{}pct", num(min_fraction * 100.0));
        let header: Vec<String> = [
            "mode",
            "count",
            "fraction",
            "median",
            "mean",
            "below_range",
            "above_range",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain((0..config.histogram.bins).map(|b| format!("bin{b}")))
        .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            &dir.join(format!("downloads_{tag}.csv")),
            &header,
            stats.iter().map(|s| {
                [
                    s.label.clone(),
                    s.count.to_string(),
                    num(s.fraction),
                    num(s.median),
                    num(s.mean),
                    s.below_range.to_string(),
                    s.above_range.to_string(),
                ]
                .into_iter()
                .chain(s.histogram.iter().map(usize::to_string))
                .collect::<Vec<_>>()
            }),
        )
        .stage(stage)?;
        #[derive(Serialize)]
        struct Report<'a> {
            min_fraction: f64,
            log10_edges: Vec<f64>,
            groups: &'a [super::ModeDownloadStats],
        }
        write_json(
            &dir.join(format!("downloads_{tag}.json")),
            &Report {
                min_fraction,
                log10_edges: config.histogram.edges(),
                groups: &stats,
            },
        )
        .stage(stage)?;
        counts.insert(format!("groups_{tag}"), stats.len() as u64);
    }
    Ok(counts)
}

fn generate_nulls(
    config: &PipelineConfig,
    run: &RunDir,
    kind: NullKind,
    replica: usize,
) -> Result<StageCounts, PipelineError> {
    let stage = Stage::Null;
    let books = read_books(run, stage)?;
    let suffix = format!("{kind}.{replica}");
    let results: Vec<Result<usize, String>> = books
        .par_iter()
        .map(|b| {
            let seed = derive_seed(config.null.seed, kind, b.id, replica);
            let tokens = match kind {
                NullKind::Salad => {
                    let real = tables::read_tokens(&token_path(run, b.id, "txt"))
                        .map_err(|e| e.to_string())?;
                    word_salad(&real, seed)
                }
                NullKind::Markov => {
                    let text = raw_text(config, b.id).map_err(|e| e.to_string())?;
                    let (body, _) = clean_text(&text);
                    let source = tokenize_with_punctuation(&body);
                    markov_nonsense(&source, seed, source.len()).map_err(|e| e.to_string())?
                }
            };
            tables::write_tokens(&token_path(run, b.id, &suffix), &tokens)
                .map_err(|e| e.to_string())?;
            Ok(tokens.len())
        })
        .collect();
    let failed: Vec<u64> = books
        .iter()
        .zip(&results)
        .filter(|(_, r)| r.is_err())
        .map(|(b, _)| b.id)
        .collect();
    if let Some(Err(e)) = results.iter().find(|r| r.is_err()) {
        return Err(fail(
            stage,
            format!("{kind} replica {replica}: {e}"),
            failed,
        ));
    }
    let total: usize = results.into_iter().map(Result::unwrap).sum();
    Ok(BTreeMap::from([
        ("books".into(), books.len() as u64),
        ("tokens".into(), total as u64),
    ]))
}

fn analyze(
    config: &PipelineConfig,
    run: &RunDir,
    target: &Analysis,
    manifest: &mut Manifest,
) -> Result<(), PipelineError> {
    manifest
        .stages
        .insert(target.key(Stage::Arcs), compute_arcs(config, run, target)?);
    manifest
        .stages
        .insert(target.key(Stage::Svd), svd(config, run, target)?);
    manifest
        .stages
        .insert(target.key(Stage::Cluster), cluster(config, target)?);
    manifest
        .stages
        .insert(target.key(Stage::Som), train_som(config, target)?);
    manifest
        .stages
        .insert(target.key(Stage::Report), report(config, run, target)?);
    Ok(())
}

fn write_manifest(
    config: &PipelineConfig,
    run: &RunDir,
    manifest: &mut Manifest,
) -> Result<(), PipelineError> {
    let stage = Stage::Report;
    manifest.config_hash = config_hash(config);
    manifest.seeds = BTreeMap::from([
        ("som".into(), config.som.seed),
        ("null".into(), config.null.seed),
    ]);
    let mut artifacts = BTreeMap::new();
    for rel in tables::list_files(&run.root).stage(stage)? {
        if rel == Path::new(MANIFEST) {
            continue;
        }
        let bytes = fs::read(run.root.join(&rel)).stage(stage)?;
        artifacts.insert(
            rel.to_string_lossy().replace('\\', "/"),
            tables::hex_digest(&bytes),
        );
    }
    manifest.artifacts = artifacts;
    write_json(&run.manifest_path(), manifest).stage(stage)
}

/// Runs one stage against `run` and refreshes the manifest.
pub fn run_stage(
    config: &PipelineConfig,
    run: &RunDir,
    stage: Stage,
) -> Result<Manifest, PipelineError> {
    config.validate()?;
    fs::create_dir_all(&run.root).stage(stage)?;
    fs::write(run.root.join("config.toml"), config.to_toml()).stage(stage)?;
    let mut manifest = run.read_manifest();
    let real = Analysis::real(run);
    match stage {
        Stage::Ingest => {
            manifest
                .stages
                .insert(real.key(stage), ingest(config, run)?);
        }
        Stage::Arcs => {
            manifest
                .stages
                .insert(real.key(stage), compute_arcs(config, run, &real)?);
        }
        Stage::Svd => {
            manifest
                .stages
                .insert(real.key(stage), svd(config, run, &real)?);
        }
        Stage::Cluster => {
            manifest
                .stages
                .insert(real.key(stage), cluster(config, &real)?);
        }
        Stage::Som => {
            manifest
                .stages
                .insert(real.key(stage), train_som(config, &real)?);
        }
        Stage::Null => {
            for &kind in &config.null.kinds {
                for replica in 0..config.null.replicas {
                    let target = Analysis::null(run, kind, replica);
                    manifest.stages.insert(
                        target.key(Stage::Null),
                        generate_nulls(config, run, kind, replica)?,
                    );
                    analyze(config, run, &target, &mut manifest)?;
                }
            }
        }
        Stage::Report => {
            manifest
                .stages
                .insert(real.key(stage), report(config, run, &real)?);
        }
    }
    write_manifest(config, run, &mut manifest)?;
    Ok(manifest)
}

/// Runs every stage in order.
pub fn run_pipeline(config: &PipelineConfig, run: &RunDir) -> Result<Manifest, PipelineError> {
    let mut manifest = Manifest::default();
    for stage in Stage::ALL {
        manifest = run_stage(config, run, stage)?;
    }
    Ok(manifest)
}
