//! Emotional arcs of books.
//!
//! Books are scored with a happiness lexicon over a sliding window, giving a
//! fixed-length arc per book. The arcs are then analysed three ways: an SVD
//! of the arc matrix, Ward hierarchical clustering, and a self-organizing
//! map. Shuffled and Markov-chain versions of each book provide null arcs.

pub mod arcs;
pub mod clustering;
pub mod corpus;
pub mod lexicon;
pub mod modes;
pub mod nullgen;
pub mod report;
pub mod som;

pub use arcs::{emotional_arc, mean_center, plan_windows, EmotionalArc, WindowPlan};
pub use clustering::{
    distance_matrix, silhouette, ward_linkage, ClusterTree, DistanceMatrix, WardInput,
};
pub use corpus::{
    filter_catalog, strip_back_matter, strip_front_matter, tokenize, CatalogEntry, FilterConfig,
};
pub use lexicon::{load_lexicon, parse_lexicon, score_window, Lexicon, NeutralBand, WindowScore};
pub use modes::{decompose, ArcMatrix, ModeDecomposition, Polarity};
pub use nullgen::{markov_nonsense, word_salad, NullKind, NullSpec};
pub use report::{download_stats, run_pipeline, run_stage, PipelineConfig, RunDir, Stage};
pub use som::{SomConfig, SomGrid};
