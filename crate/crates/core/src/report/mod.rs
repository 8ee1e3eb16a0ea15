//! Download statistics per signed mode, and the end-to-end pipeline.

mod pipeline;
pub mod tables;

pub use pipeline::{
    config_hash, run_pipeline, run_stage, Manifest, NullSettings, PipelineConfig, PipelineError,
    RunDir, Stage, StageCounts,
};

use serde::{Deserialize, Serialize};

use crate::modes::Polarity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramConfig {
    pub bins: usize,
    /// Lower edge in downloads (not log).
    pub low: f64,
    /// Upper edge in downloads (not log).
    pub high: f64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bins: 30,
            low: 20.0,
            high: 30_000.0,
        }
    }
}

impl HistogramConfig {
    /// `bins + 1` equal-width edges in log10 space.
    pub fn edges(&self) -> Vec<f64> {
        let (lo, hi) = (self.low.log10(), self.high.log10());
        let width = (hi - lo) / self.bins as f64;
        (0..=self.bins).map(|i| lo + width * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeDownloadStats {
    /// E.g. `+SV3` or `-SV1`.
    pub label: String,
    /// 1-based mode number.
    pub mode: usize,
    pub polarity: Polarity,
    pub count: usize,
    pub fraction: f64,
    pub median: f64,
    pub mean: f64,
    pub histogram: Vec<usize>,
    /// Members with downloads below the first edge (including zero).
    pub below_range: usize,
    /// Members above the last edge.
    pub above_range: usize,
}

pub fn mode_label(mode: usize, polarity: Polarity) -> String {
    let sign = match polarity {
        Polarity::Positive => '+',
        Polarity::Negative => '-',
    };
    format!("{sign}SV{}", mode + 1)
}

fn median(sorted: &[u64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

fn histogram(values: &[u64], config: &HistogramConfig) -> (Vec<usize>, usize, usize) {
    let edges = config.edges();
    let (lo, hi) = (edges[0], edges[config.bins]);
    let width = (hi - lo) / config.bins as f64;
    let mut counts = vec![0; config.bins];
    let (mut below, mut above) = (0, 0);
    for &v in values {
        let x = (v as f64).log10();
        if x.is_nan() || x < lo {
            below += 1;
        } else if x > hi {
            above += 1;
        } else {
            let bin = (((x - lo) / width) as usize).min(config.bins - 1);
            counts[bin] += 1;
        }
    }
    (counts, below, above)
}

/// Groups books by signed mode and summarizes their downloads. Groups holding
/// less than `min_fraction` of the corpus are dropped. Output is ordered by
/// mode, positive before negative.
pub fn download_stats(
    assignments: &[(usize, Polarity)],
    downloads: &[u64],
    min_fraction: f64,
    hist: &HistogramConfig,
) -> Vec<ModeDownloadStats> {
    assert_eq!(
        assignments.len(),
        downloads.len(),
        "one assignment per book"
    );
    let total = assignments.len();
    let mut groups: std::collections::BTreeMap<(usize, Polarity), Vec<u64>> = Default::default();
    for (&key, &d) in assignments.iter().zip(downloads) {
        groups.entry(key).or_default().push(d);
    }
    groups
        .into_iter()
        .filter(|(_, members)| members.len() as f64 / total as f64 >= min_fraction)
        .map(|((mode, polarity), mut members)| {
            members.sort_unstable();
            let (histogram, below_range, above_range) = histogram(&members, hist);
            ModeDownloadStats {
                label: mode_label(mode, polarity),
                mode: mode + 1,
                polarity,
                count: members.len(),
                fraction: members.len() as f64 / total as f64,
                median: median(&members),
                mean: members.iter().sum::<u64>() as f64 / members.len() as f64,
                histogram,
                below_range,
                above_range,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_and_mean() {
        let a = [(0, Polarity::Positive); 3];
        let s = download_stats(&a, &[1, 2, 3], 0.0, &HistogramConfig::default());
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].median, s[0].mean), (2.0, 2.0));
        assert_eq!(s[0].label, "+SV1");
        assert_eq!(s[0].below_range, 3);
        let even = download_stats(&a[..2], &[10, 30], 0.0, &HistogramConfig::default());
        assert_eq!(even[0].median, 20.0);
    }

    #[test]
    fn first_edge_is_log_twenty() {
        let e = HistogramConfig::default().edges();
        assert_eq!(e.len(), 31);
        assert!((e[0] - 1.30103).abs() < 1e-5);
        assert!((e[30] - 30_000f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn histogram_bounds() {
        let a = [(2, Polarity::Negative); 4];
        let s = download_stats(
            &a,
            &[20, 30_000, 40_000, 100],
            0.0,
            &HistogramConfig::default(),
        );
        assert_eq!(s[0].histogram[0], 1);
        assert_eq!(s[0].histogram[29], 1);
        assert_eq!(s[0].above_range, 1);
        assert_eq!(s[0].histogram.iter().sum::<usize>(), 3);
        assert_eq!(s[0].label, "-SV3");
    }

    #[test]
    fn small_groups_dropped_and_counts_reconcile() {
        let mut a = vec![(0, Polarity::Positive); 50];
        a.extend(vec![(1, Polarity::Negative); 49]);
        a.push((2, Polarity::Positive));
        let d = vec![100; 100];
        let all = download_stats(&a, &d, 0.0, &HistogramConfig::default());
        assert_eq!(all.iter().map(|s| s.count).sum::<usize>(), 100);
        let kept = download_stats(&a, &d, 0.025, &HistogramConfig::default());
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[1].label, "-SV2");
    }
}
