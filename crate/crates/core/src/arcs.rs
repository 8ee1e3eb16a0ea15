//! Fixed-length emotional arcs from a sliding window over a book.
//!
//! A book of `N` tokens yields `n` windows of `Nw` tokens each. Window `i`
//! starts at `floor(i * (N - Nw - 1) / n)`, so every book produces the same
//! number of points regardless of its length.

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{score_window, Lexicon, LexiconError};

pub const DEFAULT_WINDOW: usize = 10_000;
pub const DEFAULT_POINTS: usize = 200;

#[derive(Debug, Error)]
pub enum ArcError {
    #[error("book of {book_length} words is too short for {points} windows of {window} words")]
    TooShort {
        book_length: usize,
        window: usize,
        points: usize,
    },
    #[error("window size and point count must both be at least 1")]
    InvalidPlan,
    #[error("window {window} of book {book_id}: {source}")]
    Window {
        book_id: u64,
        window: usize,
        #[source]
        source: LexiconError,
    },
    #[error("arc matrix: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowPlan {
    pub book_length: usize,
    pub window_size: usize,
    pub points: usize,
    /// Real-valued words advanced per step, `(N - (Nw + 1)) / n`.
    pub stride: f64,
    pub starts: Vec<usize>,
}

impl WindowPlan {
    /// Token range covered by window `i`.
    pub fn window(&self, i: usize) -> std::ops::Range<usize> {
        self.starts[i]..self.starts[i] + self.window_size
    }
}

pub fn plan_windows(
    book_length: usize,
    window_size: usize,
    points: usize,
) -> Result<WindowPlan, ArcError> {
    if points == 0 || window_size == 0 {
        return Err(ArcError::InvalidPlan);
    }
    if book_length <= window_size + points {
        return Err(ArcError::TooShort {
            book_length,
            window: window_size,
            points,
        });
    }
    let span = (book_length - window_size - 1) as u128;
    let starts = (0..points)
        .map(|i| (i as u128 * span / points as u128) as usize)
        .collect();
    Ok(WindowPlan {
        book_length,
        window_size,
        points,
        stride: span as f64 / points as f64,
        starts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionalArc {
    pub book_id: u64,
    pub values: Vec<f64>,
    pub centered: bool,
}

impl EmotionalArc {
    pub fn new(book_id: u64, values: Vec<f64>) -> Self {
        Self {
            book_id,
            values,
            centered: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Arithmetic mean, refined with one correction pass so that constant
    /// arcs return their value exactly.
    pub fn mean(&self) -> f64 {
        let n = self.values.len() as f64;
        let first = self.values.iter().sum::<f64>() / n;
        first + self.values.iter().map(|v| v - first).sum::<f64>() / n
    }
}

/// Subtracts the arithmetic mean from every point.
pub fn mean_center(arc: &EmotionalArc) -> EmotionalArc {
    let mean = if arc.is_empty() { 0.0 } else { arc.mean() };
    EmotionalArc {
        book_id: arc.book_id,
        values: arc.values.iter().map(|v| v - mean).collect(),
        centered: true,
    }
}

/// Scores every window of `tokens`.
///
/// Tokens are mapped to lexicon indices once and word frequencies are updated
/// incrementally as the window slides. The weighted sum runs over lexicon
/// indices in ascending order, which gives the same bits as
/// [`score_window`] on each window.
pub fn emotional_arc<S: AsRef<str> + Sync>(
    book_id: u64,
    tokens: &[S],
    lexicon: &Lexicon,
    window_size: usize,
    points: usize,
) -> Result<EmotionalArc, ArcError> {
    let plan = plan_windows(tokens.len(), window_size, points)?;
    let ids: Vec<Option<usize>> = tokens
        .iter()
        .map(|t| lexicon.index_of(t.as_ref()))
        .collect();
    let scores = lexicon.scores();
    let mut counts = vec![0u64; lexicon.len()];
    let mut matched = 0u64;
    let (mut lo, mut hi) = (0usize, 0usize);
    let mut values = Vec::with_capacity(points);
    for (w, &start) in plan.starts.iter().enumerate() {
        let end = start + window_size;
        // Starts are non-decreasing, so only advance the two edges.
        while hi < end {
            if let Some(i) = ids[hi] {
                counts[i] += 1;
                matched += 1;
            }
            hi += 1;
        }
        while lo < start {
            if let Some(i) = ids[lo] {
                counts[i] -= 1;
                matched -= 1;
            }
            lo += 1;
        }
        if matched == 0 {
            return Err(ArcError::Window {
                book_id,
                window: w,
                source: LexiconError::ZeroCoverage { total: window_size },
            });
        }
        let weighted = counts
            .iter()
            .zip(scores)
            .filter(|(&c, _)| c > 0)
            .fold(0.0, |acc, (&c, &h)| acc + h * c as f64);
        values.push(weighted / matched as f64);
    }
    Ok(EmotionalArc::new(book_id, values))
}

/// Reference path: calls [`score_window`] on each planned window.
pub fn emotional_arc_direct<S: AsRef<str>>(
    book_id: u64,
    tokens: &[S],
    lexicon: &Lexicon,
    window_size: usize,
    points: usize,
) -> Result<EmotionalArc, ArcError> {
    let plan = plan_windows(tokens.len(), window_size, points)?;
    let values = (0..points)
        .map(|w| {
            score_window(&tokens[plan.window(w)], lexicon)
                .map(|s| s.score)
                .map_err(|source| ArcError::Window {
                    book_id,
                    window: w,
                    source,
                })
        })
        .collect::<Result<_, _>>()?;
    Ok(EmotionalArc::new(book_id, values))
}

/// Arcs for many books in parallel; output order follows input order.
pub fn emotional_arcs<S: AsRef<str> + Sync>(
    books: &[(u64, Vec<S>)],
    lexicon: &Lexicon,
    window_size: usize,
    points: usize,
) -> Vec<Result<EmotionalArc, ArcError>> {
    books
        .par_iter()
        .map(|(id, tokens)| emotional_arc(*id, tokens, lexicon, window_size, points))
        .collect()
}

const MAGIC: &[u8; 4] = b"EARC";
const VERSION: u32 = 1;

/// Writes arcs as a compact binary: magic, version, rows, cols (u64) and
/// row-major little-endian doubles.
pub fn write_arcs_binary<W: Write>(mut out: W, arcs: &[EmotionalArc]) -> Result<(), ArcError> {
    let cols = arcs.first().map_or(0, EmotionalArc::len);
    if arcs.iter().any(|a| a.len() != cols) {
        return Err(ArcError::Format("arcs differ in length".into()));
    }
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(arcs.len() as u64).to_le_bytes())?;
    out.write_all(&(cols as u64).to_le_bytes())?;
    for arc in arcs {
        for v in &arc.values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads the binary written by [`write_arcs_binary`] as rows of values.
pub fn read_arcs_binary<R: Read>(mut input: R) -> Result<Vec<Vec<f64>>, ArcError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ArcError::Format("bad magic".into()));
    }
    let mut b4 = [0u8; 4];
    input.read_exact(&mut b4)?;
    let version = u32::from_le_bytes(b4);
    if version != VERSION {
        return Err(ArcError::Format(format!("unsupported version {version}")));
    }
    let mut b8 = [0u8; 8];
    input.read_exact(&mut b8)?;
    let rows = u64::from_le_bytes(b8) as usize;
    input.read_exact(&mut b8)?;
    let cols = u64::from_le_bytes(b8) as usize;
    let mut out = Vec::with_capacity(rows);
    for _ in 0..rows {
        let mut row = Vec::with_capacity(cols);
        for _ in 0..cols {
            input.read_exact(&mut b8)?;
            row.push(f64::from_le_bytes(b8));
        }
        out.push(row);
    }
    Ok(out)
}

/// Writes one row per arc: book id followed by the values.
pub fn write_arcs_csv<W: Write>(out: W, arcs: &[EmotionalArc]) -> Result<(), ArcError> {
    let cols = arcs.first().map_or(0, EmotionalArc::len);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["book_id".to_string()];
    header.extend((0..cols).map(|t| format!("t{t}")));
    w.write_record(&header).map_err(csv_err)?;
    for arc in arcs {
        let mut rec = vec![arc.book_id.to_string()];
        rec.extend(arc.values.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads arcs written by [`write_arcs_csv`]. The `centered` flag is set when
/// every row sums to zero within 1e-9.
pub fn read_arcs_csv<R: Read>(input: R) -> Result<Vec<EmotionalArc>, ArcError> {
    let mut r = csv::Reader::from_reader(input);
    let mut arcs = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let mut fields = rec.iter();
        let id = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| ArcError::Format("missing book id".into()))?;
        let values = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| ArcError::Format(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let centered = values.iter().sum::<f64>().abs() < 1e-9;
        arcs.push(EmotionalArc {
            book_id: id,
            values,
            centered,
        });
    }
    Ok(arcs)
}

fn csv_err(e: csv::Error) -> ArcError {
    ArcError::Format(e.to_string())
}
