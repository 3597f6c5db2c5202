//! Time grids and the two function classes every other module works with.
//!
//! * [`PLFunction`]: continuous, piecewise linear between grid nodes. Controls,
//!   directions and states live here.
//! * [`GridRegulated`]: regulated function whose jumps sit at grid nodes. Each
//!   node stores a left limit, a value and a right limit; between nodes the
//!   function is affine from the right limit at `t_k` to the left limit at
//!   `t_{k+1}`. Derivatives, adjoints and test functions live here.
//!
//! Both are immutable once built; all operations return new values.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for equality tests between O(1) quantities.
pub const TOL_EQ: f64 = 1e-10;

/// Which representative of a regulated function to read at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Value,
    Right,
}

/// Position of a time inside a grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Location {
    /// Coincides with node `k`.
    Node(usize),
    /// Strictly inside `(t_k, t_{k+1})`.
    Interior(usize),
}

/// Strictly increasing nodes `0 = t_0 < ... < t_N = T` with `N >= 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridRepr", into = "GridRepr")]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    nodes: Vec<f64>,
}

impl TryFrom<GridRepr> for TimeGrid {
    type Error = Error;
    fn try_from(r: GridRepr) -> Result<Self> {
        TimeGrid::new(r.nodes)
    }
}

impl From<TimeGrid> for GridRepr {
    fn from(g: TimeGrid) -> Self {
        GridRepr { nodes: g.nodes }
    }
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidGrid("need at least two nodes".into()));
        }
        if nodes.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidGrid("non-finite node".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first node must be 0, got {}", nodes[0])));
        }
        if let Some(w) = nodes.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "nodes not strictly increasing at {} -> {}",
                w[0], w[1]
            )));
        }
        Ok(TimeGrid { nodes })
    }

    /// `n` equal intervals on `[0, horizon]`.
    pub fn uniform(horizon: f64, n: usize) -> Result<Self> {
        if n == 0 || !(horizon > 0.0) {
            return Err(Error::InvalidGrid(format!("uniform grid needs n >= 1 and T > 0 (n={n}, T={horizon})")));
        }
        let mut nodes: Vec<f64> = (0..=n).map(|k| horizon * k as f64 / n as f64).collect();
        nodes[n] = horizon;
        TimeGrid::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of nodes (`N + 1`).
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Number of intervals (`N`).
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn node(&self, k: usize) -> f64 {
        self.nodes[k]
    }

    pub fn width(&self, k: usize) -> f64 {
        self.nodes[k + 1] - self.nodes[k]
    }

    pub fn min_width(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// Distance below which two times are treated as the same node.
    pub fn node_tol(&self) -> f64 {
        1e-13 * self.horizon().max(1.0)
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let tol = self.node_tol();
        if !(t >= -tol && t <= self.horizon() + tol) {
            return Err(Error::OutOfDomain { t, horizon: self.horizon() });
        }
        Ok(())
    }

    pub fn locate(&self, t: f64) -> Result<Location> {
        self.check_domain(t)?;
        let tol = self.node_tol();
        let idx = self.nodes.partition_point(|&s| s < t);
        if idx < self.nodes.len() && (self.nodes[idx] - t).abs() <= tol {
            return Ok(Location::Node(idx));
        }
        if idx > 0 && (t - self.nodes[idx - 1]).abs() <= tol {
            return Ok(Location::Node(idx - 1));
        }
        if idx == 0 {
            return Ok(Location::Node(0));
        }
        if idx >= self.nodes.len() {
            return Ok(Location::Node(self.nodes.len() - 1));
        }
        Ok(Location::Interior(idx - 1))
    }

    /// Index of the node at `t`, if `t` is a node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        match self.locate(t) {
            Ok(Location::Node(k)) => Some(k),
            _ => None,
        }
    }

    /// Grid containing these nodes plus every point of `extra` in `[0, T]`.
    pub fn with_points(&self, extra: &[f64]) -> TimeGrid {
        let tol = self.node_tol();
        let horizon = self.horizon();
        let mut all: Vec<f64> = self.nodes.clone();
        all.extend(extra.iter().copied().filter(|t| t.is_finite() && *t > tol && *t < horizon - tol));
        all.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
        let mut out: Vec<f64> = Vec::with_capacity(all.len());
        for t in all {
            match out.last() {
                Some(&last) if t - last <= tol => {
                    // keep whichever is an original node
                    if self.nodes.binary_search_by(|s| s.partial_cmp(&t).unwrap()).is_ok() {
                        *out.last_mut().unwrap() = t;
                    }
                }
                _ => out.push(t),
            }
        }
        *out.first_mut().unwrap() = 0.0;
        *out.last_mut().unwrap() = horizon;
        TimeGrid { nodes: out }
    }

    /// Union of two grids on the same horizon.
    pub fn merge(&self, other: &TimeGrid) -> Result<TimeGrid> {
        if (self.horizon() - other.horizon()).abs() > self.node_tol() {
            return Err(Error::GridMismatch(format!(
                "horizons differ: {} vs {}",
                self.horizon(),
                other.horizon()
            )));
        }
        if self == other {
            return Ok(self.clone());
        }
        Ok(self.with_points(other.nodes()))
    }

    /// True when every node of `self` is a node of `finer`.
    pub fn is_refined_by(&self, finer: &TimeGrid) -> bool {
        self.nodes.iter().all(|&t| finer.index_of(t).is_some())
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}

fn lerp(a: f64, b: f64, lambda: f64) -> f64 {
    a + (b - a) * lambda
}

/// Continuous piecewise linear function on a [`TimeGrid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PlRepr", into = "PlRepr")]
pub struct PLFunction {
    grid: TimeGrid,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PlRepr {
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl TryFrom<PlRepr> for PLFunction {
    type Error = Error;
    fn try_from(r: PlRepr) -> Result<Self> {
        PLFunction::new(TimeGrid::new(r.nodes)?, r.values)
    }
}

impl From<PLFunction> for PlRepr {
    fn from(f: PLFunction) -> Self {
        PlRepr { nodes: f.grid.nodes, values: f.values }
    }
}

impl PLFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        check_len(grid.len(), values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite function value".into()));
        }
        Ok(PLFunction { grid, values })
    }

    pub fn from_fn(grid: &TimeGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        PLFunction { grid: grid.clone(), values }
    }

    pub fn constant(grid: &TimeGrid, c: f64) -> Self {
        PLFunction { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn zero(grid: &TimeGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    /// Value at `t`. Continuous, so `side` is irrelevant.
    pub fn eval(&self, t: f64) -> Result<f64> {
        Ok(match self.grid.locate(t)? {
            Location::Node(k) => self.values[k],
            Location::Interior(k) => {
                let lambda = (t - self.grid.node(k)) / self.grid.width(k);
                lerp(self.values[k], self.values[k + 1], lambda)
            }
        })
    }

    pub fn eval_side(&self, t: f64, _side: Side) -> Result<f64> {
        self.eval(t)
    }

    /// Same function on `grid`, which must contain every node of `self`.
    pub fn resample(&self, grid: &TimeGrid) -> Result<PLFunction> {
        if !self.grid.is_refined_by(grid) {
            return Err(Error::GridMismatch("target grid does not contain all source nodes".into()));
        }
        self.sample_onto(grid)
    }

    /// Interpolate onto an arbitrary grid (not exact unless the grid refines `self`).
    pub fn sample_onto(&self, grid: &TimeGrid) -> Result<PLFunction> {
        let values = grid.nodes().iter().map(|&t| self.eval(t)).collect::<Result<Vec<_>>>()?;
        PLFunction::new(grid.clone(), values)
    }

    pub fn refine(&self, extra: &[f64]) -> PLFunction {
        if extra.is_empty() {
            return self.clone();
        }
        let grid = self.grid.with_points(extra);
        // grid refines self.grid by construction
        self.sample_onto(&grid).expect("refined grid lies inside the domain")
    }

    pub fn total_variation(&self) -> f64 {
        self.values.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }

    /// `|f(0)| + var(f)`.
    pub fn bv_norm(&self) -> f64 {
        self.values[0].abs() + self.total_variation()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> PLFunction {
        PLFunction { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn scale(&self, c: f64) -> PLFunction {
        self.map(|v| c * v)
    }

    /// `a * self + b * other` on the merged grid.
    pub fn combine(&self, a: f64, other: &PLFunction, b: f64) -> Result<PLFunction> {
        let grid = self.grid.merge(&other.grid)?;
        let lhs = self.resample(&grid)?;
        let rhs = other.resample(&grid)?;
        let values = lhs.values.iter().zip(&rhs.values).map(|(x, y)| a * x + b * y).collect();
        Ok(PLFunction { grid, values })
    }

    pub fn add(&self, other: &PLFunction) -> Result<PLFunction> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &PLFunction) -> Result<PLFunction> {
        self.combine(1.0, other, -1.0)
    }

    /// Exact `\int_0^T self * other dt`.
    pub fn inner_l2(&self, other: &PLFunction) -> Result<f64> {
        let grid = self.grid.merge(&other.grid)?;
        let f = self.resample(&grid)?;
        let g = other.resample(&grid)?;
        Ok((0..grid.intervals())
            .map(|k| linear_product_integral(grid.width(k), f.values[k], f.values[k + 1], g.values[k], g.values[k + 1]))
            .sum())
    }

    /// Exact `\int_0^T f dt`.
    pub fn integral(&self) -> f64 {
        (0..self.grid.intervals())
            .map(|k| 0.5 * self.grid.width(k) * (self.values[k] + self.values[k + 1]))
            .sum()
    }

    /// Max absolute difference at the nodes of the merged grid.
    pub fn max_abs_diff(&self, other: &PLFunction) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }
}

/// `\int_0^h f g` for affine `f` (from `f0` to `f1`) and `g` (from `g0` to `g1`).
pub fn linear_product_integral(h: f64, f0: f64, f1: f64, g0: f64, g1: f64) -> f64 {
    h / 6.0 * (2.0 * f0 * g0 + f0 * g1 + f1 * g0 + 2.0 * f1 * g1)
}

/// Regulated function with jumps only at grid nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegRepr", into = "RegRepr")]
pub struct GridRegulated {
    grid: TimeGrid,
    left: Vec<f64>,
    value: Vec<f64>,
    right: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RegRepr {
    nodes: Vec<f64>,
    left: Vec<f64>,
    value: Vec<f64>,
    right: Vec<f64>,
}

impl TryFrom<RegRepr> for GridRegulated {
    type Error = Error;
    fn try_from(r: RegRepr) -> Result<Self> {
        GridRegulated::new(TimeGrid::new(r.nodes)?, r.left, r.value, r.right)
    }
}

impl From<GridRegulated> for RegRepr {
    fn from(f: GridRegulated) -> Self {
        RegRepr { nodes: f.grid.nodes, left: f.left, value: f.value, right: f.right }
    }
}

impl GridRegulated {
    /// Builds the function; `left[0]` and `right[N]` are overwritten by the
    /// endpoint conventions `v(0-) = v(0)`, `v(T+) = v(T)`.
    pub fn new(grid: TimeGrid, mut left: Vec<f64>, value: Vec<f64>, mut right: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        check_len(n, left.len())?;
        check_len(n, value.len())?;
        check_len(n, right.len())?;
        if left.iter().chain(&value).chain(&right).any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite function value".into()));
        }
        left[0] = value[0];
        right[n - 1] = value[n - 1];
        Ok(GridRegulated { grid, left, value, right })
    }

    /// Right-continuous function from node values and left limits.
    pub fn right_continuous(grid: TimeGrid, left: Vec<f64>, value: Vec<f64>) -> Result<Self> {
        let right = value.clone();
        Self::new(grid, left, value, right)
    }

    pub fn from_pl(f: &PLFunction) -> Self {
        GridRegulated {
            grid: f.grid.clone(),
            left: f.values.clone(),
            value: f.values.clone(),
            right: f.values.clone(),
        }
    }

    pub fn constant(grid: &TimeGrid, c: f64) -> Self {
        let n = grid.len();
        GridRegulated { grid: grid.clone(), left: vec![c; n], value: vec![c; n], right: vec![c; n] }
    }

    pub fn zero(grid: &TimeGrid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// `1_{{t_k}}`.
    pub fn node_indicator(grid: &TimeGrid, k: usize) -> Self {
        let mut f = Self::zero(grid);
        f.value[k] = 1.0;
        f
    }

    /// Right-continuous step `1_{[t_k, T]}`.
    pub fn step_from(grid: &TimeGrid, k: usize) -> Self {
        let n = grid.len();
        let mut left = vec![0.0; n];
        let mut value = vec![0.0; n];
        let mut right = vec![0.0; n];
        for j in k..n {
            value[j] = 1.0;
            right[j] = 1.0;
            if j > k {
                left[j] = 1.0;
            }
        }
        if k == 0 {
            left[0] = 1.0;
        }
        GridRegulated { grid: grid.clone(), left, value, right }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn left(&self) -> &[f64] {
        &self.left
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn right(&self) -> &[f64] {
        &self.right
    }

    pub fn horizon(&self) -> f64 {
        self.grid.horizon()
    }

    pub fn at_node(&self, k: usize, side: Side) -> f64 {
        match side {
            Side::Left => self.left[k],
            Side::Value => self.value[k],
            Side::Right => self.right[k],
        }
    }

    pub fn eval(&self, t: f64, side: Side) -> Result<f64> {
        Ok(match self.grid.locate(t)? {
            Location::Node(k) => self.at_node(k, side),
            Location::Interior(k) => {
                let lambda = (t - self.grid.node(k)) / self.grid.width(k);
                lerp(self.right[k], self.left[k + 1], lambda)
            }
        })
    }

    pub fn is_right_continuous(&self, tol: f64) -> bool {
        self.value.iter().zip(&self.right).all(|(v, r)| (v - r).abs() <= tol)
    }

    /// `v(t) = v(t-)` at every node `t < T`.
    pub fn is_left_continuous(&self, tol: f64) -> bool {
        let n = self.grid.len();
        (0..n - 1).all(|k| (self.value[k] - self.left[k]).abs() <= tol)
    }

    /// Nodes where the left and right limits differ by more than `tol`.
    pub fn jump_nodes(&self, tol: f64) -> Vec<usize> {
        (0..self.grid.len())
            .filter(|&k| (self.left[k] - self.value[k]).abs() > tol || (self.right[k] - self.value[k]).abs() > tol)
            .collect()
    }

    /// Sum of interior variations plus every one-sided jump.
    pub fn total_variation(&self) -> f64 {
        let jumps: f64 = (0..self.grid.len())
            .map(|k| (self.value[k] - self.left[k]).abs() + (self.right[k] - self.value[k]).abs())
            .sum();
        let interiors: f64 = (0..self.grid.intervals()).map(|k| (self.left[k + 1] - self.right[k]).abs()).sum();
        jumps + interiors
    }

    /// Supremum over all points, limits included.
    pub fn sup_norm(&self) -> f64 {
        self.left.iter().chain(&self.value).chain(&self.right).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same function on `grid`, which must contain every node of `self`.
    pub fn resample(&self, grid: &TimeGrid) -> Result<GridRegulated> {
        if !self.grid.is_refined_by(grid) {
            return Err(Error::GridMismatch("target grid does not contain all source nodes".into()));
        }
        let n = grid.len();
        let mut left = Vec::with_capacity(n);
        let mut value = Vec::with_capacity(n);
        let mut right = Vec::with_capacity(n);
        for &t in grid.nodes() {
            match self.grid.locate(t)? {
                Location::Node(k) => {
                    left.push(self.left[k]);
                    value.push(self.value[k]);
                    right.push(self.right[k]);
                }
                Location::Interior(k) => {
                    let lambda = (t - self.grid.node(k)) / self.grid.width(k);
                    let v = lerp(self.right[k], self.left[k + 1], lambda);
                    left.push(v);
                    value.push(v);
                    right.push(v);
                }
            }
        }
        Ok(GridRegulated { grid: grid.clone(), left, value, right })
    }

    pub fn refine(&self, extra: &[f64]) -> GridRegulated {
        if extra.is_empty() {
            return self.clone();
        }
        let grid = self.grid.with_points(extra);
        self.resample(&grid).expect("refined grid contains the source grid")
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridRegulated {
        GridRegulated {
            grid: self.grid.clone(),
            left: self.left.iter().map(|&v| f(v)).collect(),
            value: self.value.iter().map(|&v| f(v)).collect(),
            right: self.right.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, c: f64) -> GridRegulated {
        self.map(|v| c * v)
    }

    /// `a * self + b * other` on the merged grid.
    pub fn combine(&self, a: f64, other: &GridRegulated, b: f64) -> Result<GridRegulated> {
        let grid = self.grid.merge(&other.grid)?;
        let f = self.resample(&grid)?;
        let g = other.resample(&grid)?;
        let mix = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect::<Vec<_>>();
        Ok(GridRegulated {
            left: mix(&f.left, &g.left),
            value: mix(&f.value, &g.value),
            right: mix(&f.right, &g.right),
            grid,
        })
    }

    pub fn add(&self, other: &GridRegulated) -> Result<GridRegulated> {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &GridRegulated) -> Result<GridRegulated> {
        self.combine(1.0, other, -1.0)
    }

    /// Right-limit function `v_+`.
    pub fn right_limit_fn(&self) -> GridRegulated {
        let mut f = self.clone();
        f.value = self.right.clone();
        let n = f.grid.len();
        f.left[0] = f.value[0];
        f.right[n - 1] = f.value[n - 1];
        f
    }

    /// Left-limit function `v_-`.
    pub fn left_limit_fn(&self) -> GridRegulated {
        let mut f = self.clone();
        f.value = self.left.clone();
        let n = f.grid.len();
        f.left[0] = f.value[0];
        f.right[n - 1] = f.value[n - 1];
        f
    }

    /// Product with the indicator of an interval whose endpoints are nodes `s < tau`.
    pub fn masked(&self, s: usize, tau: usize, interval: IntervalKind) -> Result<GridRegulated> {
        let n = self.grid.len();
        if !(s < tau && tau < n) {
            return Err(Error::Domain(format!("mask needs node indices s < tau < {n}, got {s}, {tau}")));
        }
        let (closed_left, closed_right) = interval.closedness();
        let mut out = GridRegulated::zero(&self.grid);
        for k in s..=tau {
            let inside_value = (k > s || closed_left) && (k < tau || closed_right);
            if inside_value {
                out.value[k] = self.value[k];
            }
            if k > s {
                out.left[k] = self.left[k];
            }
            if k < tau {
                out.right[k] = self.right[k];
            }
        }
        out.left[0] = out.value[0];
        out.right[n - 1] = out.value[n - 1];
        Ok(out)
    }
}

/// Open/closed variants of an interval `J` with endpoints `s < tau`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IntervalKind {
    /// `[s, tau]`
    Closed,
    /// `(s, tau]`
    LeftOpen,
    /// `[s, tau)`
    RightOpen,
    /// `(s, tau)`
    Open,
}

impl IntervalKind {
    fn closedness(self) -> (bool, bool) {
        match self {
            IntervalKind::Closed => (true, true),
            IntervalKind::LeftOpen => (false, true),
            IntervalKind::RightOpen => (true, false),
            IntervalKind::Open => (false, false),
        }
    }
}

/// Half-width `r` of `Z = [-r, r]` and the initial state `y0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HysteresisConfig {
    pub r: f64,
    pub y0: f64,
}

impl HysteresisConfig {
    pub fn new(r: f64, y0: f64) -> Result<Self> {
        let cfg = HysteresisConfig { r, y0 };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0) || !self.r.is_finite() {
            return Err(Error::Domain(format!("r must be positive, got {}", self.r)));
        }
        if !(self.y0.abs() <= self.r) {
            return Err(Error::Domain(format!("|y0| = {} exceeds r = {}", self.y0.abs(), self.r)));
        }
        Ok(())
    }

    /// Projection onto `Z`.
    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(-self.r, self.r)
    }
}
