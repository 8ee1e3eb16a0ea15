//! Self-organizing map over emotional arcs.
//!
//! Nodes sit on a square grid. At presentation `i` the winner's
//! neighborhood is every node within grid distance `sqrt(N_nodes) * (i+1)^α`,
//! and each of them moves toward the presented arc by `(i+1)^β`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arcs::EmotionalArc;
use crate::clustering::arc_distance;

#[derive(Debug, Error)]
pub enum SomError {
    #[error("no arcs to train on")]
    EmptyCorpus,
    #[error("arc {index} has length {found}, grid dimension is {expected}")]
    Dimension {
        index: usize,
        found: usize,
        expected: usize,
    },
    #[error("invalid SOM config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SomConfig {
    pub rows: usize,
    pub cols: usize,
    /// Neighborhood radius exponent, negative.
    pub alpha: f64,
    /// Learning rate exponent, negative.
    pub beta: f64,
    pub total_steps: u64,
    pub seed: u64,
    pub init_amplitude: f64,
}

impl Default for SomConfig {
    fn default() -> Self {
        Self {
            rows: 8,
            cols: 8,
            alpha: -0.15,
            beta: -0.15,
            total_steps: 1_000_000,
            seed: 0,
            init_amplitude: 0.05,
        }
    }
}

impl SomConfig {
    pub fn nodes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn validate(&self) -> Result<(), SomError> {
        if self.nodes() == 0 {
            return Err(SomError::Config("grid must have at least one node".into()));
        }
        if self.alpha.is_nan() || self.beta.is_nan() || self.alpha >= 0.0 || self.beta >= 0.0 {
            return Err(SomError::Config("alpha and beta must be negative".into()));
        }
        if self.init_amplitude.is_nan() || self.init_amplitude < 0.0 {
            return Err(SomError::Config(
                "init_amplitude must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Neighborhood radius at presentation `step`.
    pub fn radius(&self, step: u64) -> f64 {
        (self.nodes() as f64).sqrt() * ((step + 1) as f64).powf(self.alpha)
    }

    /// Learning rate at presentation `step`, in (0, 1].
    pub fn learning_rate(&self, step: u64) -> f64 {
        ((step + 1) as f64).powf(self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SomGrid {
    pub rows: usize,
    pub cols: usize,
    /// Node vectors, row-major over the grid.
    pub nodes: Vec<Vec<f64>>,
}

impl SomGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.nodes.first().map_or(0, Vec::len)
    }

    pub fn coords(&self, node: usize) -> (usize, usize) {
        (node / self.cols, node % self.cols)
    }

    /// Euclidean distance between two nodes' grid coordinates.
    pub fn grid_distance(&self, a: usize, b: usize) -> f64 {
        let (ra, ca) = self.coords(a);
        let (rb, cb) = self.coords(b);
        let dr = ra as f64 - rb as f64;
        let dc = ca as f64 - cb as f64;
        (dr * dr + dc * dc).sqrt()
    }

    /// Node nearest to `arc`; lowest index on ties.
    pub fn best_match(&self, arc: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, v) in self.nodes.iter().enumerate() {
            let d = arc_distance(v, arc);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    /// Up to eight grid-adjacent nodes of `node`.
    pub fn adjacent(&self, node: usize) -> Vec<usize> {
        let (r, c) = self.coords(node);
        let mut out = Vec::with_capacity(8);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                if dr == 0 && dc == 0 {
                    continue;
                }
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if nr >= 0 && nc >= 0 && (nr as usize) < self.rows && (nc as usize) < self.cols {
                    out.push(nr as usize * self.cols + nc as usize);
                }
            }
        }
        out
    }
}

/// Node vectors drawn uniformly from `[-init_amplitude, init_amplitude]`.
pub fn init_grid(config: &SomConfig, dim: usize) -> SomGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let a = config.init_amplitude;
    let nodes = (0..config.nodes())
        .map(|_| {
            (0..dim)
                .map(|_| {
                    if a == 0.0 {
                        0.0
                    } else {
                        rng.random_range(-a..=a)
                    }
                })
                .collect()
        })
        .collect();
    SomGrid {
        rows: config.rows,
        cols: config.cols,
        nodes,
    }
}

/// Nodes strictly inside the neighborhood radius of `winner` at `step`.
pub fn neighborhood(config: &SomConfig, grid: &SomGrid, winner: usize, step: u64) -> Vec<usize> {
    let radius = config.radius(step);
    (0..grid.len())
        .filter(|&j| grid.grid_distance(winner, j) < radius)
        .collect()
}

/// Trains `grid` in place for `config.total_steps` presentations.
///
/// Arcs are presented in a seeded shuffle that is redrawn every epoch. The
/// shuffle stream is separate from the one used by [`init_grid`].
pub fn train(
    grid: &mut SomGrid,
    arcs: &[EmotionalArc],
    config: &SomConfig,
) -> Result<(), SomError> {
    config.validate()?;
    if arcs.is_empty() {
        return Err(SomError::EmptyCorpus);
    }
    let dim = grid.dim();
    for (index, a) in arcs.iter().enumerate() {
        if a.len() != dim {
            return Err(SomError::Dimension {
                index,
                found: a.len(),
                expected: dim,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..arcs.len()).collect();
    let mut cursor = order.len();
    for step in 0..config.total_steps {
        if cursor == order.len() {
            order.shuffle(&mut rng);
            cursor = 0;
        }
        let x = &arcs[order[cursor]].values;
        cursor += 1;
        let winner = grid.best_match(x);
        let radius = config.radius(step);
        let rate = config.learning_rate(step);
        for j in 0..grid.len() {
            if grid.grid_distance(winner, j) < radius {
                for (v, &xv) in grid.nodes[j].iter_mut().zip(x) {
                    *v += rate * (xv - *v);
                }
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeWinners {
    pub count: usize,
    /// Row indices of the arcs won by this node.
    pub members: Vec<usize>,
}

/// Best-matching node for every arc, in arc order.
pub fn assign(grid: &SomGrid, arcs: &[EmotionalArc]) -> Vec<usize> {
    arcs.par_iter()
        .map(|a| grid.best_match(&a.values))
        .collect()
}

/// Arcs grouped by their best-matching node. Every node appears, possibly
/// with no members.
pub fn winners(grid: &SomGrid, arcs: &[EmotionalArc]) -> BTreeMap<usize, NodeWinners> {
    let mut out: BTreeMap<usize, NodeWinners> = (0..grid.len())
        .map(|k| {
            (
                k,
                NodeWinners {
                    count: 0,
                    members: Vec::new(),
                },
            )
        })
        .collect();
    for (i, k) in assign(grid, arcs).into_iter().enumerate() {
        let e = out.get_mut(&k).expect("node index in range");
        e.count += 1;
        e.members.push(i);
    }
    out
}

/// Mean distance from each node vector to its grid-adjacent node vectors,
/// row-major over the grid.
pub fn b_matrix(grid: &SomGrid) -> Vec<f64> {
    (0..grid.len())
        .map(|k| {
            let adj = grid.adjacent(k);
            if adj.is_empty() {
                return 0.0;
            }
            adj.iter()
                .map(|&j| arc_distance(&grid.nodes[k], &grid.nodes[j]))
                .sum::<f64>()
                / adj.len() as f64
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(steps: u64) -> SomConfig {
        SomConfig {
            rows: 4,
            cols: 4,
            total_steps: steps,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let cfg = SomConfig::default();
        let a = init_grid(&cfg, 20);
        assert_eq!(a, init_grid(&cfg, 20));
        assert!(a.nodes.iter().flatten().all(|v| v.abs() <= 0.05));
        assert_eq!(a.len(), 64);
        let zero = init_grid(
            &SomConfig {
                init_amplitude: 0.0,
                ..cfg
            },
            5,
        );
        assert!(zero.nodes.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn corner_neighborhood_at_step_zero() {
        let cfg = SomConfig::default();
        let grid = init_grid(&cfg, 1);
        let nbd = neighborhood(&cfg, &grid, 0, 0);
        // Radius 8 from (0,0): exclude nodes with r² + c² >= 64.
        let expected: Vec<usize> = (0..64)
            .filter(|k| (k / 8) * (k / 8) + (k % 8) * (k % 8) < 64)
            .collect();
        assert_eq!(nbd, expected);
        assert!(!nbd.contains(&63));
        assert!(nbd.contains(&0));
        let late = neighborhood(&cfg, &grid, 27, 1_000_000_000);
        assert_eq!(late, vec![27]);
    }

    #[test]
    fn radius_shrinks() {
        let cfg = SomConfig::default();
        assert_eq!(cfg.radius(0), 8.0);
        assert!((0..1000).all(|i| cfg.radius(i + 1) <= cfg.radius(i)));
        assert_eq!(cfg.learning_rate(0), 1.0);
    }

    #[test]
    fn zero_steps_leaves_grid_alone() {
        let cfg = small(0);
        let mut grid = init_grid(&cfg, 3);
        let before = grid.clone();
        train(
            &mut grid,
            &[EmotionalArc::new(1, vec![1.0, 0.0, -1.0])],
            &cfg,
        )
        .unwrap();
        assert_eq!(grid, before);
    }

    #[test]
    fn converges_to_single_arc() {
        let cfg = small(10_000);
        let arc = EmotionalArc::new(1, vec![0.3, -0.1, -0.2]);
        let mut grid = init_grid(&cfg, 3);
        train(&mut grid, std::slice::from_ref(&arc), &cfg).unwrap();
        let w = grid.best_match(&arc.values);
        assert!(arc_distance(&grid.nodes[w], &arc.values) < 1e-3);
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = small(10);
        let mut grid = init_grid(&cfg, 3);
        assert!(matches!(
            train(&mut grid, &[], &cfg),
            Err(SomError::EmptyCorpus)
        ));
        let bad = [EmotionalArc::new(1, vec![0.0; 4])];
        assert!(matches!(
            train(&mut grid, &bad, &cfg),
            Err(SomError::Dimension { .. })
        ));
        let cfg = SomConfig {
            alpha: 0.1,
            ..small(10)
        };
        assert!(train(&mut grid, &[EmotionalArc::new(1, vec![0.0; 3])], &cfg).is_err());
    }

    #[test]
    fn winners_partition() {
        let cfg = small(0);
        let grid = init_grid(&cfg, 2);
        let arcs: Vec<_> = (0..5)
            .map(|i| EmotionalArc::new(i, vec![0.01, -0.01]))
            .collect();
        let w = winners(&grid, &arcs);
        assert_eq!(w.values().map(|n| n.count).sum::<usize>(), 5);
        assert_eq!(w.values().filter(|n| n.count > 0).count(), 1);
    }

    #[test]
    fn b_matrix_flat_and_plateau() {
        let flat = SomGrid {
            rows: 3,
            cols: 3,
            nodes: vec![vec![0.5, 0.5]; 9],
        };
        assert!(b_matrix(&flat).iter().all(|&b| b == 0.0));
        // Left column at 0, others at 1: the middle column borders the step.
        let nodes = (0..16)
            .map(|k| vec![if k % 4 < 2 { 0.0 } else { 1.0 }])
            .collect();
        let g = SomGrid {
            rows: 4,
            cols: 4,
            nodes,
        };
        let b = b_matrix(&g);
        assert!(b.iter().all(|&v| v >= 0.0));
        let edge_col = |c: usize| (0..4).map(|r| b[r * 4 + c]).fold(0.0, f64::max);
        assert!(edge_col(1) > edge_col(0));
        assert!(edge_col(2) > edge_col(3));
        assert_eq!(edge_col(0), 0.0);
    }
}
