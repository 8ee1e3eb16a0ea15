use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use storyarcs_core::clustering::WardInput;
use storyarcs_core::nullgen::NullKind;
use storyarcs_core::report::{run_pipeline, run_stage, Manifest, PipelineConfig, RunDir, Stage};

#[derive(Parser)]
#[command(
    name = "storyarcs",
    version,
    about = "Emotional arcs of books: windowed lexicon scoring, SVD modes, Ward clustering and a self-organizing map"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filter the catalog, strip licence text and tokenize kept books.
    Ingest(StageArgs),
    /// Score sliding windows into one arc per book.
    Arcs(StageArgs),
    /// Decompose the centered arcs into modes.
    Svd(StageArgs),
    /// Ward clustering, cuts and silhouettes.
    Cluster(StageArgs),
    /// Train the self-organizing map.
    Som(StageArgs),
    /// Build null corpora and rerun the analyses on them.
    Null(StageArgs),
    /// Download statistics per signed mode.
    Report(StageArgs),
    /// Every stage in order.
    All(StageArgs),
    /// Print the effective config as TOML.
    Config(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Key-value config file (TOML); flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Parent of run directories.
    #[arg(long, default_value = "run")]
    output_dir: PathBuf,
    /// Run name; defaults to a UTC timestamp. Reuse it to run later stages.
    #[arg(long)]
    name: Option<String>,
    /// Exact run directory, overriding --output-dir and --name.
    #[arg(long)]
    run_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum WardArg {
    Squared,
    Plain,
}

/// One flag per config field. Unset flags leave the file or default value.
#[derive(Args)]
struct Overrides {
    #[arg(long, help_heading = "Inputs")]
    catalog: Option<PathBuf>,
    #[arg(long, help_heading = "Inputs")]
    catalog_delimiter: Option<char>,
    #[arg(long, help_heading = "Inputs")]
    texts_dir: Option<PathBuf>,
    #[arg(long, help_heading = "Inputs")]
    lexicon: Option<PathBuf>,
    /// Drop lexicon words scored strictly inside LOW,HIGH.
    #[arg(long, value_delimiter = ',', num_args = 2, value_names = ["LOW", "HIGH"], help_heading = "Inputs")]
    neutral_band: Option<Vec<f64>>,
    /// Disable the neutral band even if the config file sets one.
    #[arg(long, conflicts_with = "neutral_band", help_heading = "Inputs")]
    no_neutral_band: bool,

    #[arg(long, help_heading = "Filter")]
    min_words: Option<u64>,
    #[arg(long, help_heading = "Filter")]
    max_words: Option<u64>,
    /// Keep books with strictly more downloads than this.
    #[arg(long, help_heading = "Filter")]
    min_downloads: Option<u64>,
    #[arg(long, value_delimiter = ',', help_heading = "Filter")]
    languages: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', help_heading = "Filter")]
    loc_classes: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',', help_heading = "Filter")]
    title_blacklist: Option<Vec<String>>,
    /// Keep books where no front-matter marker was found.
    #[arg(long, num_args = 0..=1, default_missing_value = "true", help_heading = "Filter")]
    include_unstripped: Option<bool>,

    #[arg(long, help_heading = "Arcs")]
    window_size: Option<usize>,
    #[arg(long, help_heading = "Arcs")]
    points: Option<usize>,

    #[arg(long, help_heading = "Analysis")]
    report_modes: Option<usize>,
    #[arg(long, help_heading = "Analysis")]
    top_k: Option<usize>,
    #[arg(long, value_enum, help_heading = "Analysis")]
    ward_input: Option<WardArg>,
    #[arg(long, value_delimiter = ',', help_heading = "Analysis")]
    cuts: Option<Vec<usize>>,
    #[arg(long, help_heading = "Analysis")]
    dendrogram_clusters: Option<usize>,

    #[arg(long, help_heading = "Self-organizing map")]
    som_rows: Option<usize>,
    #[arg(long, help_heading = "Self-organizing map")]
    som_cols: Option<usize>,
    #[arg(
        long,
        allow_negative_numbers = true,
        help_heading = "Self-organizing map"
    )]
    som_alpha: Option<f64>,
    #[arg(
        long,
        allow_negative_numbers = true,
        help_heading = "Self-organizing map"
    )]
    som_beta: Option<f64>,
    #[arg(long, help_heading = "Self-organizing map")]
    som_steps: Option<u64>,
    #[arg(long, help_heading = "Self-organizing map")]
    som_seed: Option<u64>,
    #[arg(long, help_heading = "Self-organizing map")]
    som_init_amplitude: Option<f64>,

    #[arg(long, value_delimiter = ',', help_heading = "Null corpora")]
    null_kinds: Option<Vec<NullKind>>,
    #[arg(long, help_heading = "Null corpora")]
    null_seed: Option<u64>,
    #[arg(long, help_heading = "Null corpora")]
    null_replicas: Option<usize>,

    #[arg(long, value_delimiter = ',', help_heading = "Report")]
    min_fractions: Option<Vec<f64>>,
    #[arg(long, help_heading = "Report")]
    histogram_bins: Option<usize>,
    #[arg(long, help_heading = "Report")]
    histogram_low: Option<f64>,
    #[arg(long, help_heading = "Report")]
    histogram_high: Option<f64>,
}

macro_rules! set {
    ($($flag:expr => $field:expr),* $(,)?) => {
        $(if let Some(v) = $flag.clone() { $field = v.into(); })*
    };
}

impl Overrides {
    fn apply(&self, c: &mut PipelineConfig) {
        set! {
            self.catalog => c.catalog,
            self.catalog_delimiter => c.catalog_delimiter,
            self.texts_dir => c.texts_dir,
            self.lexicon => c.lexicon,
            self.min_words => c.filter.min_words,
            self.max_words => c.filter.max_words,
            self.min_downloads => c.filter.min_downloads,
            self.title_blacklist => c.filter.title_blacklist,
            self.include_unstripped => c.include_unstripped,
            self.window_size => c.window_size,
            self.points => c.points,
            self.report_modes => c.report_modes,
            self.top_k => c.top_k,
            self.cuts => c.cuts,
            self.dendrogram_clusters => c.dendrogram_clusters,
            self.som_rows => c.som.rows,
            self.som_cols => c.som.cols,
            self.som_alpha => c.som.alpha,
            self.som_beta => c.som.beta,
            self.som_steps => c.som.total_steps,
            self.som_seed => c.som.seed,
            self.som_init_amplitude => c.som.init_amplitude,
            self.null_kinds => c.null.kinds,
            self.null_seed => c.null.seed,
            self.null_replicas => c.null.replicas,
            self.min_fractions => c.min_fractions,
            self.histogram_bins => c.histogram.bins,
            self.histogram_low => c.histogram.low,
            self.histogram_high => c.histogram.high,
        }
        if let Some(v) = &self.languages {
            c.filter.languages = v.iter().cloned().collect();
        }
        if let Some(v) = &self.loc_classes {
            c.filter.loc_classes = v.iter().cloned().collect();
        }
        if let Some(band) = &self.neutral_band {
            c.neutral_band = Some([band[0], band[1]]);
        }
        if self.no_neutral_band {
            c.neutral_band = None;
        }
        if let Some(w) = self.ward_input {
            c.ward_input = match w {
                WardArg::Squared => WardInput::Squared,
                WardArg::Plain => WardInput::Plain,
            };
        }
    }
}

impl StageArgs {
    fn config(&self) -> Result<PipelineConfig> {
        let mut config = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                PipelineConfig::from_toml(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => PipelineConfig::default(),
        };
        self.overrides.apply(&mut config);
        config.validate()?;
        Ok(config)
    }

    fn run_dir(&self) -> RunDir {
        if let Some(dir) = &self.run_dir {
            return RunDir::new(dir);
        }
        let name = self
            .name
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string());
        RunDir::new(self.output_dir.join(name))
    }
}

fn summarize(run: &RunDir, manifest: &Manifest, stages: &[Stage]) {
    println!("run directory: {}", run.root.display());
    for (key, counts) in &manifest.stages {
        let stage = key.rsplit('/').next().unwrap_or(key);
        if !stages.iter().any(|s| s.name() == stage)
            && !(key.starts_with("null-") && stages.contains(&Stage::Null))
        {
            continue;
        }
        let shown: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("  {key}: {}", shown.join(" "));
    }
    println!("  artifacts: {}", manifest.artifacts.len());
}

fn run(cli: Cli) -> Result<()> {
    let (args, stage) = match &cli.command {
        Command::Ingest(a) => (a, Some(Stage::Ingest)),
        Command::Arcs(a) => (a, Some(Stage::Arcs)),
        Command::Svd(a) => (a, Some(Stage::Svd)),
        Command::Cluster(a) => (a, Some(Stage::Cluster)),
        Command::Som(a) => (a, Some(Stage::Som)),
        Command::Null(a) => (a, Some(Stage::Null)),
        Command::Report(a) => (a, Some(Stage::Report)),
        Command::All(a) => (a, None),
        Command::Config(a) => {
            print!("{}", a.config()?.to_toml());
            return Ok(());
        }
    };
    let config = args.config()?;
    let run = args.run_dir();
    if stage.is_some_and(|s| s != Stage::Ingest) && !run.root.exists() {
        bail!(
            "run directory {} does not exist; pass --name or --run-dir of an ingested run",
            run.root.display()
        );
    }
    match stage {
        Some(s) => summarize(&run, &run_stage(&config, &run, s)?, &[s]),
        None => summarize(&run, &run_pipeline(&config, &run)?, &Stage::ALL),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
