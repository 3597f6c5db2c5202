//! Seeded random grid functions for property checks and self-tests.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::grid::{GridRegulated, PLFunction, TimeGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` intervals on `[0, horizon]` with widths drawn from `[0.2, 1]` and rescaled.
pub fn random_grid<R: Rng>(rng: &mut R, horizon: f64, n: usize) -> TimeGrid {
    let widths: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = widths.iter().sum();
    let mut nodes = Vec::with_capacity(n + 1);
    let mut t = 0.0;
    nodes.push(0.0);
    for w in &widths[..n - 1] {
        t += horizon * w / total;
        nodes.push(t);
    }
    nodes.push(horizon);
    TimeGrid::new(nodes).expect("positive widths")
}

/// Random walk with increments uniform in `[-step, step]`, starting at `start`.
pub fn random_walk<R: Rng>(rng: &mut R, grid: &TimeGrid, start: f64, step: f64) -> PLFunction {
    let mut v = start;
    let values = (0..grid.len())
        .map(|k| {
            if k > 0 {
                v += rng.random_range(-step..=step);
            }
            v
        })
        .collect();
    PLFunction::new(grid.clone(), values).expect("finite")
}

/// Sum of a few random sinusoids, sampled on `grid`.
pub fn random_smooth<R: Rng>(rng: &mut R, grid: &TimeGrid, amplitude: f64) -> PLFunction {
    let terms: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(-amplitude..=amplitude),
                rng.random_range(0.5..8.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    PLFunction::from_fn(grid, |t| terms.iter().map(|(a, f, p)| a * (f * t + p).sin()).sum())
}

/// Values uniform in `[-scale, scale]` at every node.
pub fn random_pl<R: Rng>(rng: &mut R, grid: &TimeGrid, scale: f64) -> PLFunction {
    let values = (0..grid.len()).map(|_| rng.random_range(-scale..=scale)).collect();
    PLFunction::new(grid.clone(), values).expect("finite")
}

/// Independent left limit, value and right limit at every node.
pub fn random_regulated<R: Rng>(rng: &mut R, grid: &TimeGrid, scale: f64) -> GridRegulated {
    let n = grid.len();
    let mut draw = |_| rng.random_range(-scale..=scale);
    let left: Vec<f64> = (0..n).map(&mut draw).collect();
    let value: Vec<f64> = (0..n).map(&mut draw).collect();
    let right: Vec<f64> = (0..n).map(&mut draw).collect();
    GridRegulated::new(grid.clone(), left, value, right).expect("finite")
}

/// Random function that mixes continuous nodes and jump nodes.
pub fn random_mixed<R: Rng>(rng: &mut R, grid: &TimeGrid, scale: f64, jump_prob: f64) -> GridRegulated {
    let n = grid.len();
    let mut left = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    let mut right = Vec::with_capacity(n);
    for _ in 0..n {
        let v = rng.random_range(-scale..=scale);
        let l = if rng.random_bool(jump_prob) { rng.random_range(-scale..=scale) } else { v };
        let r = if rng.random_bool(jump_prob) { rng.random_range(-scale..=scale) } else { v };
        left.push(l);
        value.push(v);
        right.push(r);
    }
    GridRegulated::new(grid.clone(), left, value, right).expect("finite")
}

/// Right-continuous function with interior slopes and jumps at a random subset of nodes.
pub fn random_right_continuous<R: Rng>(rng: &mut R, grid: &TimeGrid, scale: f64, jump_prob: f64) -> GridRegulated {
    let n = grid.len();
    let mut left = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for _ in 0..n {
        let v = rng.random_range(-scale..=scale);
        let l = if rng.random_bool(jump_prob) { rng.random_range(-scale..=scale) } else { v };
        left.push(l);
        value.push(v);
    }
    GridRegulated::right_continuous(grid.clone(), left, value).expect("finite")
}

/// Right-continuous step function with exactly `jumps` jumps at distinct interior nodes.
pub fn random_step<R: Rng>(rng: &mut R, grid: &TimeGrid, jumps: usize, scale: f64) -> GridRegulated {
    let n = grid.len();
    assert!(jumps + 2 <= n, "grid too coarse for {jumps} jumps");
    let mut idx: Vec<usize> = (1..n - 1).collect();
    for i in 0..jumps {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    let mut at: Vec<usize> = idx[..jumps].to_vec();
    at.sort_unstable();
    let mut level = rng.random_range(-scale..=scale);
    let mut left = vec![0.0; n];
    let mut value = vec![0.0; n];
    let mut next = 0;
    for k in 0..n {
        left[k] = level;
        if next < at.len() && at[next] == k {
            level = rng.random_range(-scale..=scale);
            next += 1;
        }
        value[k] = level;
    }
    GridRegulated::right_continuous(grid.clone(), left, value).expect("finite")
}
