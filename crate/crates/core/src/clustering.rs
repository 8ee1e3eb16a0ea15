//! Ward agglomerative clustering over the mean absolute difference between
//! arcs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arcs::EmotionalArc;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("arc {index} has length {found}, expected {expected}")]
    LengthMismatch {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("need at least {needed} items, got {found}")]
    TooFew { needed: usize, found: usize },
    #[error("cluster count {k} outside 1..={n}")]
    CutRange { k: usize, n: usize },
    #[error("silhouette needs at least two clusters")]
    SingleCluster,
    #[error("assignment covers {found} items but the distance matrix has {expected}")]
    AssignmentSize { found: usize, expected: usize },
    #[error("empty cluster")]
    EmptyCluster,
}

/// Mean absolute difference between two equal-length series.
pub fn arc_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let total: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    total / a.len() as f64
}

/// Dense symmetric distance matrix over books.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
    book_ids: Vec<u64>,
}

impl DistanceMatrix {
    pub fn from_fn(book_ids: Vec<u64>, f: impl Fn(usize, usize) -> f64 + Sync) -> Self {
        let n = book_ids.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| f(i, j)).collect())
            .collect();
        let mut data = vec![0.0; n * n];
        for (i, row) in upper.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                data[i * n + j] = d;
                data[j * n + i] = d;
            }
        }
        Self { n, data, book_ids }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn book_ids(&self) -> &[u64] {
        &self.book_ids
    }
}

/// Pairwise arc distances. Arcs are expected to be mean-centered.
pub fn distance_matrix(arcs: &[EmotionalArc]) -> Result<DistanceMatrix, ClusterError> {
    let len = arcs.first().map_or(0, EmotionalArc::len);
    for (index, a) in arcs.iter().enumerate() {
        if a.len() != len {
            return Err(ClusterError::LengthMismatch {
                index,
                found: a.len(),
                expected: len,
            });
        }
    }
    let ids = arcs.iter().map(|a| a.book_id).collect();
    Ok(DistanceMatrix::from_fn(ids, |i, j| {
        arc_distance(&arcs[i].values, &arcs[j].values)
    }))
}

/// How input distances enter the Ward recurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WardInput {
    /// Distances are squared before the update and heights are reported as
    /// the square root of the merged dissimilarity.
    #[default]
    Squared,
    /// Distances are used as given and heights are the merged dissimilarity.
    Plain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

/// Merge history. Leaves are `0..n`; the cluster formed by merge `t` is
/// `n + t`, so the root is `2(n - 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterTree {
    pub leaves: usize,
    pub merges: Vec<Merge>,
}

pub fn ward_linkage(d: &DistanceMatrix, input: WardInput) -> Result<ClusterTree, ClusterError> {
    let n = d.len();
    if n < 2 {
        return Err(ClusterError::TooFew {
            needed: 2,
            found: n,
        });
    }
    let mut dis: Vec<f64> = match input {
        WardInput::Squared => d.data.iter().map(|v| v * v).collect(),
        WardInput::Plain => d.data.clone(),
    };
    let at = |i: usize, j: usize| i * n + j;
    let mut active = vec![true; n];
    let mut size = vec![1usize; n];
    let mut label: Vec<usize> = (0..n).collect();
    // nn[i]: nearest active slot j > i, lowest j on ties.
    let mut nn = vec![usize::MAX; n];
    let nearest = |dis: &[f64], active: &[bool], i: usize| {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in i + 1..n {
            if active[j] && dis[at(i, j)] < best.1 {
                best = (j, dis[at(i, j)]);
            }
        }
        best.0
    };
    for (i, slot) in nn.iter_mut().enumerate().take(n - 1) {
        *slot = nearest(&dis, &active, i);
    }

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let mut best = (usize::MAX, f64::INFINITY);
        for i in 0..n {
            if active[i] && nn[i] != usize::MAX && dis[at(i, nn[i])] < best.1 {
                best = (i, dis[at(i, nn[i])]);
            }
        }
        let (i, dij) = best;
        let j = nn[i];
        let (si, sj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let sk = size[k] as f64;
            let updated =
                ((si + sk) * dis[at(i, k)] + (sj + sk) * dis[at(j, k)] - sk * dij) / (si + sj + sk);
            let updated = updated.max(0.0);
            dis[at(i, k)] = updated;
            dis[at(k, i)] = updated;
        }
        active[j] = false;
        let (la, lb) = (label[i].min(label[j]), label[i].max(label[j]));
        size[i] += size[j];
        label[i] = n + step;
        merges.push(Merge {
            a: la,
            b: lb,
            height: match input {
                WardInput::Squared => dij.sqrt(),
                WardInput::Plain => dij,
            },
            size: size[i],
        });

        nn[j] = usize::MAX;
        for k in 0..n {
            if !active[k] || k >= n - 1 {
                continue;
            }
            if k == i || nn[k] == i || nn[k] == j {
                nn[k] = nearest(&dis, &active, k);
            } else if k < i {
                let cur = dis[at(k, nn[k])];
                let cand = dis[at(k, i)];
                if cand < cur || (cand == cur && i < nn[k]) {
                    nn[k] = i;
                }
            }
        }
    }
    Ok(ClusterTree { leaves: n, merges })
}

impl ClusterTree {
    /// Cluster height of the final merge.
    pub fn final_height(&self) -> f64 {
        self.merges.last().map_or(0.0, |m| m.height)
    }

    /// Cluster id (leaf or merge) containing each leaf once the last
    /// `k - 1` merges are undone.
    fn cut_roots(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        let n = self.leaves;
        if k == 0 || k > n {
            return Err(ClusterError::CutRange { k, n });
        }
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        for (t, m) in self.merges.iter().take(n - k).enumerate() {
            let ra = find(&mut parent, m.a);
            let rb = find(&mut parent, m.b);
            parent[ra] = n + t;
            parent[rb] = n + t;
        }
        Ok((0..n).map(|x| find(&mut parent, x)).collect())
    }

    /// Labels for the `k` clusters left after undoing the last `k - 1` merges.
    /// Label 0 is the largest cluster; ties go to the cluster holding the
    /// smallest leaf.
    pub fn cut(&self, k: usize) -> Result<Vec<usize>, ClusterError> {
        let roots = self.cut_roots(k)?;
        let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (leaf, &r) in roots.iter().enumerate() {
            groups.entry(r).or_insert((0, leaf)).0 += 1;
        }
        let mut order: Vec<(usize, (usize, usize))> = groups.into_iter().collect();
        order.sort_by(|x, y| y.1 .0.cmp(&x.1 .0).then(x.1 .1.cmp(&y.1 .1)));
        let relabel: BTreeMap<usize, usize> = order
            .iter()
            .enumerate()
            .map(|(lbl, (root, _))| (*root, lbl))
            .collect();
        Ok(roots.iter().map(|r| relabel[r]).collect())
    }

    /// The `k` clusters of [`ClusterTree::cut`] in label order, each as
    /// `(cluster id, member leaves)`. This is the dendrogram truncated to `k`
    /// leaves.
    pub fn truncated_leaves(&self, k: usize) -> Result<Vec<(usize, Vec<usize>)>, ClusterError> {
        let roots = self.cut_roots(k)?;
        let labels = self.cut(k)?;
        Ok(members_by_label(&labels)
            .into_iter()
            .map(|m| (roots[m[0]], m))
            .collect())
    }
}

/// Members of each label, labels in ascending order, members ascending.
pub fn members_by_label(labels: &[usize]) -> Vec<Vec<usize>> {
    let k = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); k];
    for (i, &l) in labels.iter().enumerate() {
        out[l].push(i);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Silhouette {
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Silhouette of each item under `labels`. Singletons score 0, as do items
/// whose intra- and nearest-cluster distances are both zero.
pub fn silhouette(labels: &[usize], d: &DistanceMatrix) -> Result<Silhouette, ClusterError> {
    if labels.len() != d.len() {
        return Err(ClusterError::AssignmentSize {
            found: labels.len(),
            expected: d.len(),
        });
    }
    let groups = members_by_label(labels);
    if groups.iter().any(Vec::is_empty) {
        return Err(ClusterError::EmptyCluster);
    }
    if groups.len() < 2 {
        return Err(ClusterError::SingleCluster);
    }
    let values: Vec<f64> = (0..d.len())
        .into_par_iter()
        .map(|i| {
            let own = labels[i];
            if groups[own].len() == 1 {
                return 0.0;
            }
            let row = d.row(i);
            let mean_to = |g: &[usize]| g.iter().map(|&j| row[j]).sum::<f64>();
            let a = mean_to(&groups[own]) / (groups[own].len() - 1) as f64;
            let b = groups
                .iter()
                .enumerate()
                .filter(|(l, _)| *l != own)
                .map(|(_, g)| mean_to(g) / g.len() as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom == 0.0 {
                0.0
            } else {
                (b - a) / denom
            }
        })
        .collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(Silhouette { values, mean })
}

/// Member with the smallest total distance to the rest of its cluster;
/// ties go to the smallest index.
pub fn central_member(members: &[usize], d: &DistanceMatrix) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &i in members {
        let total: f64 = members.iter().map(|&j| d.get(i, j)).sum();
        match best {
            Some((bi, bt)) if total > bt || (total == bt && i > bi) => {}
            _ => best = Some((i, total)),
        }
    }
    best.map(|(i, _)| i)
}

/// Book id of the [`central_member`].
pub fn central_book(members: &[usize], d: &DistanceMatrix) -> Option<u64> {
    central_member(members, d).map(|i| d.book_ids()[i])
}

/// Pointwise mean of the arcs at the given rows.
pub fn mean_arc(arcs: &[EmotionalArc], members: &[usize]) -> Vec<f64> {
    let len = arcs.first().map_or(0, EmotionalArc::len);
    let mut out = vec![0.0; len];
    for &m in members {
        for (o, v) in out.iter_mut().zip(&arcs[m].values) {
            *o += v;
        }
    }
    let count = members.len().max(1) as f64;
    out.iter_mut().for_each(|v| *v /= count);
    out
}
