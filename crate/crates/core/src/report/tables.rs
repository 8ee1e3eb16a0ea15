//! Plain file helpers shared by the pipeline stages.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Writes a comma-separated table with a header row.
pub fn write_csv<I, R, S>(path: &Path, header: &[&str], rows: I) -> io::Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// One token per line.
pub fn write_tokens<S: AsRef<str>>(path: &Path, tokens: &[S]) -> io::Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for t in tokens {
        out.write_all(t.as_ref().as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_tokens(path: &Path) -> io::Result<Vec<String>> {
    BufReader::new(fs::File::open(path)?)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.is_empty()))
        .collect()
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Every regular file under `root`, relative and sorted.
pub fn list_files(root: &Path) -> io::Result<Vec<PathBuf>> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                out.push(path.strip_prefix(root).expect("under root").to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}

/// Formats a float with the shortest representation that round-trips.
pub fn num(v: f64) -> String {
    v.to_string()
}
