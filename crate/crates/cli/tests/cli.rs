use std::fmt::Write as _;
use std::path::Path;
use std::process::{Command, Output};

fn storyarcs(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storyarcs"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

/// Twelve books whose halves alternate between happy and sad words.
fn write_inputs(root: &Path) {
    std::fs::create_dir_all(root.join("texts")).unwrap();
    std::fs::write(
        root.join("lexicon.tsv"),
        "word\tscore\njoy\t8.0\nlove\t7.5\ngrief\t2.0\nloss\t2.5\n",
    )
    .unwrap();
    let mut catalog = String::from("id,title,language,loc_classes,downloads\n");
    for b in 0..12u64 {
        writeln!(catalog, "{},Story {b},en,PR,{}", 10 + b, 30 + 10 * b).unwrap();
        let mut text =
            String::from("Header\n*** START OF THIS PROJECT GUTENBERG EBOOK STORY ***\n");
        for i in 0..3_000u64 {
            let happy = (i * (b % 3 + 1) / 1_000) % 2 == b % 2;
            let word = match (happy, (i + b) % 3) {
                (true, 0) => "joy",
                (true, _) => "love",
                (false, 0) => "grief",
                (false, _) => "loss",
            };
            text.push_str(word);
            text.push(if i % 10 == 9 { '\n' } else { ' ' });
        }
        text.push_str("*** END OF THIS PROJECT GUTENBERG EBOOK STORY ***\n");
        std::fs::write(root.join("texts").join(format!("{}.txt", 10 + b)), text).unwrap();
    }
    std::fs::write(root.join("catalog.csv"), catalog).unwrap();
    std::fs::write(
        root.join("config.toml"),
        "catalog = \"catalog.csv\"\ntexts_dir = \"texts\"\nlexicon = \"lexicon.tsv\"\nwindow_size = 300\npoints = 20\n\
         [filter]\nmin_words = 1000\nmin_downloads = 20\n[som]\nrows = 3\ncols = 3\ntotal_steps = 2000\n",
    )
    .unwrap();
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = storyarcs(
        &[
            "config",
            "--config",
            "config.toml",
            "--points",
            "25",
            "--som-alpha",
            "-0.2",
            "--null-kinds",
            "salad",
            "--languages",
            "en,fr",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("points = 25"), "{text}");
    assert!(text.contains("window_size = 300"));
    assert!(text.contains("alpha = -0.2"));
    assert!(text.contains("kinds = [\"salad\"]"));
    assert!(text.contains("rows = 3"));
}

#[test]
fn full_run_then_single_stage() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = storyarcs(
        &[
            "all",
            "--config",
            "config.toml",
            "--name",
            "demo",
            "--min-downloads",
            "40",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("kept=10"), "{stdout}");

    let run = dir.path().join("run/demo");
    for file in [
        "manifest.json",
        "books.csv",
        "arcs.csv",
        "svd/modes.csv",
        "cluster/merges.csv",
        "som/nodes.csv",
    ] {
        assert!(run.join(file).exists(), "missing {file}");
    }
    assert!(run.join("null-markov-0/svd/spectrum.csv").exists());
    let manifest = std::fs::read(run.join("manifest.json")).unwrap();

    let again = storyarcs(
        &[
            "svd",
            "--config",
            "config.toml",
            "--run-dir",
            "run/demo",
            "--min-downloads",
            "40",
        ],
        dir.path(),
    );
    assert!(
        again.status.success(),
        "{}",
        String::from_utf8_lossy(&again.stderr)
    );
    assert_eq!(std::fs::read(run.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn later_stage_needs_an_existing_run() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = storyarcs(
        &["cluster", "--config", "config.toml", "--name", "absent"],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    write_inputs(dir.path());
    let out = storyarcs(&["ingest", "--config", "missing.toml"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.toml"));

    let out = storyarcs(
        &[
            "ingest",
            "--config",
            "config.toml",
            "--min-words",
            "5000",
            "--max-words",
            "100",
        ],
        dir.path(),
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("min_words"));
}
