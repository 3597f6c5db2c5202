//! Approximation of reduced-cone directions by smooth radial ones.
//!
//! Every point `t` gets the largest `eps` for which `z` stays within `1/j` of
//! its value at `t` (or of `z(t-)` left of a jump) on `[t - eps, t + eps]` and
//! that value is admissible for every cone met there. A greedy chain of such
//! neighbourhoods covers `[0, T]`; cut points between consecutive centres
//! carry a smooth partition of unity. Jump centres keep their left value only
//! left of the jump, and a cutoff of width `1/i` turns that one-sided piece
//! into a smooth radial function.

use serde::{Deserialize, Serialize};

use super::CriticalContext;
use crate::error::{Error, Result};
use crate::grid::{GridRegulated, PLFunction, Side, TimeGrid};
use crate::sensitivity::{Cone, ConeSpec};
use crate::smooth::{cutoff, smooth_step};

/// One neighbourhood of the cover.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverElement {
    pub center: f64,
    pub eps: f64,
    /// Left value is used and cut off at the centre.
    pub jump: bool,
    /// `z(center)` or, at a jump, `z(center-)`.
    pub value: f64,
}

/// Transition of the partition of unity between two consecutive elements.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct Cut {
    at: f64,
    width: f64,
}

/// Pointwise convergence of `z_{i,j}` towards `z_j` at the sample nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCheck {
    /// `max_s |z_{i,j}(s) - z_j(s)|` for each `i`.
    pub max_error: Vec<(usize, f64)>,
    /// Nodes where the error is not nonincreasing in `i`.
    pub non_monotone: usize,
    /// Nodes that should already agree exactly but do not.
    pub nonzero_past_threshold: usize,
    /// Nodes whose exact-agreement threshold lies beyond the largest `i`.
    pub pending: usize,
}

impl ConvergenceCheck {
    pub fn ok(&self) -> bool {
        self.non_monotone == 0 && self.nonzero_past_threshold == 0
    }
}

/// Output of [`polyhedric_approx`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyhedricApprox {
    pub xi: f64,
    pub cover: Vec<CoverElement>,
    cuts: Vec<Cut>,
    /// Grid carrying every breakpoint of the approximants.
    pub sample_grid: TimeGrid,
    /// Regulated approximant with jumps only at jump centres.
    pub z_j: GridRegulated,
    /// Smooth radial approximants `z_{i,j}` sampled on `sample_grid`.
    pub z_ij: Vec<(usize, PLFunction)>,
}

struct Field<'a> {
    z: GridRegulated,
    cones: ConeSpec,
    horizon: f64,
    jump_tol: f64,
    zero_tol: f64,
    _ctx: &'a CriticalContext,
}

impl Field<'_> {
    fn nodes(&self) -> &[f64] {
        self.z.grid().nodes()
    }

    /// Indices of nodes strictly inside `(a, b)`.
    fn inside(&self, a: f64, b: f64) -> std::ops::Range<usize> {
        let tol = self.z.grid().node_tol();
        let lo = self.nodes().partition_point(|&s| s <= a + tol);
        let hi = self.nodes().partition_point(|&s| s < b - tol);
        lo..hi.max(lo)
    }

    fn eval(&self, t: f64, side: Side) -> f64 {
        self.z.eval(t, side).expect("inside the horizon")
    }

    fn cone_at(&self, t: f64) -> Cone {
        self.cones.at(t).expect("inside the horizon")
    }

    /// Every cone met on `[a, b]` (closed) or `[a, b)` contains `c`.
    fn cones_admit(&self, a: f64, b: f64, include_b: bool, c: f64) -> bool {
        if !self.cone_at(a).contains(c, 0.0) || (include_b && !self.cone_at(b).contains(c, 0.0)) {
            return false;
        }
        let range = self.inside(a, b);
        let grid = self.z.grid();
        for k in range.clone() {
            if !self.cones.nodes[k].contains(c, 0.0) {
                return false;
            }
        }
        // open intervals meeting (a, b)
        let first = grid.nodes().partition_point(|&s| s <= a).saturating_sub(1);
        let last = if range.is_empty() { first } else { range.end - 1 };
        (first..=last.min(grid.intervals() - 1)).all(|k| self.cones.intervals[k].contains(c, 0.0))
    }

    /// `sup |z - c|` over `[a, b]` or `[a, b)`.
    fn sup_dev(&self, a: f64, b: f64, include_b: bool, c: f64) -> f64 {
        let mut m = (self.eval(a, Side::Value) - c).abs();
        if b > a + self.z.grid().node_tol() {
            m = m.max((self.eval(a, Side::Right) - c).abs());
            m = m.max((self.eval(b, Side::Left) - c).abs());
        }
        if include_b {
            m = m.max((self.eval(b, Side::Value) - c).abs());
        }
        for k in self.inside(a, b) {
            for s in [Side::Left, Side::Value, Side::Right] {
                m = m.max((self.z.at_node(k, s) - c).abs());
            }
        }
        m
    }

    fn is_jump(&self, t: f64) -> bool {
        match self.z.grid().index_of(t) {
            Some(k) => (self.z.left()[k] - self.z.value()[k]).abs() > self.jump_tol,
            None => false,
        }
    }

    fn element_value(&self, t: f64) -> (bool, f64) {
        let jump = self.is_jump(t);
        let v = if jump { self.eval(t, Side::Left) } else { self.eval(t, Side::Value) };
        (jump, if v.abs() <= self.zero_tol { 0.0 } else { v })
    }

    fn admissible(&self, t: f64, eps: f64, xi: f64) -> bool {
        let a = (t - eps).max(0.0);
        let b = (t + eps).min(self.horizon);
        let (jump, c) = self.element_value(t);
        if jump {
            if self.sup_dev(a, t, false, c) > xi || self.sup_dev(t, b, true, 0.0) > xi {
                return false;
            }
            c == 0.0 || (t - eps > 0.0 && self.cones_admit(a, t, false, c))
        } else {
            if self.sup_dev(a, b, true, c) > xi {
                return false;
            }
            c == 0.0 || (t - eps > 0.0 && self.cones_admit(a, b, true, c))
        }
    }

    /// Largest admissible radius, by halving then bisection.
    fn radius(&self, t: f64, xi: f64) -> f64 {
        let cap = self.horizon;
        if self.admissible(t, cap, xi) {
            return cap;
        }
        let mut hi = cap;
        let mut lo = 0.0;
        for _ in 0..200 {
            let trial = 0.5 * hi;
            if self.admissible(t, trial, xi) {
                lo = trial;
                break;
            }
            hi = trial;
        }
        if lo == 0.0 {
            return 0.0;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.admissible(t, mid, xi) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

fn rise(s: f64, cut: &Cut) -> f64 {
    smooth_step((s - cut.at + 0.5 * cut.width) / cut.width)
}

impl PolyhedricApprox {
    /// Partition-of-unity weights of the (at most three) elements near `s`.
    fn weights(&self, s: f64) -> impl Iterator<Item = (usize, f64)> + '_ {
        let m = self.cuts.partition_point(|c| c.at < s);
        let lo = m.saturating_sub(1);
        let hi = (m + 1).min(self.cover.len() - 1);
        (lo..=hi).filter_map(move |e| {
            let left = if e == 0 { 1.0 } else { rise(s, &self.cuts[e - 1]) };
            let right = if e + 1 == self.cover.len() { 0.0 } else { rise(s, &self.cuts[e]) };
            let w = left - right;
            (w > 0.0).then_some((e, w))
        })
    }

    /// `z_j(s)`; `left` selects the left limit at jump centres.
    pub fn eval_zj(&self, s: f64, left: bool) -> f64 {
        self.weights(s)
            .map(|(e, w)| {
                let el = &self.cover[e];
                let keep = !el.jump || s < el.center || (left && s <= el.center);
                if keep {
                    el.value * w
                } else {
                    0.0
                }
            })
            .sum()
    }

    /// `z_{i,j}(s)`.
    pub fn eval_zij(&self, i: usize, s: f64) -> f64 {
        let inv = 1.0 / i as f64;
        self.weights(s)
            .map(|(e, w)| {
                let el = &self.cover[e];
                if el.jump {
                    el.value * w * cutoff((s - el.center + inv) * i as f64)
                } else {
                    el.value * w
                }
            })
            .sum()
    }

    /// Checks `z_{i,j} -> z_j` at every sample node, exactly zero once
    /// `center - s >= 2/i` for each jump element whose weight reaches `s`.
    pub fn convergence(&self) -> ConvergenceCheck {
        let nodes = self.sample_grid.nodes();
        let mut max_error = vec![0.0; self.z_ij.len()];
        let mut non_monotone = 0;
        let mut nonzero_past_threshold = 0;
        let mut pending = 0;
        let i_max = self.z_ij.last().map_or(0, |(i, _)| *i);
        for (k, &s) in nodes.iter().enumerate() {
            let zj = self.z_j.value()[k];
            // smallest i from which the cutoffs reaching s equal one
            let threshold = self
                .weights(s)
                .filter(|(e, _)| self.cover[*e].jump && s < self.cover[*e].center)
                .map(|(e, _)| (2.0 / (self.cover[e].center - s)).ceil())
                .fold(0.0, f64::max);
            let mut prev = f64::INFINITY;
            for (n, (i, zij)) in self.z_ij.iter().enumerate() {
                let err = (zij.value(k) - zj).abs();
                max_error[n] = f64::max(max_error[n], err);
                if err > prev + 1e-14 {
                    non_monotone += 1;
                }
                if (*i as f64) >= threshold && err > 1e-14 {
                    nonzero_past_threshold += 1;
                }
                prev = err;
            }
            if threshold > i_max as f64 {
                pending += 1;
            }
        }
        ConvergenceCheck {
            max_error: self.z_ij.iter().map(|(i, _)| *i).zip(max_error).collect(),
            non_monotone,
            nonzero_past_threshold,
            pending,
        }
    }
}

/// Builds `z_j` with `||z_j - z|| <= 1/j` and the smooth radial `z_{i,j}` for
/// each `i` in `is`.
pub fn polyhedric_approx(ctx: &CriticalContext, z: &GridRegulated, j: usize, is: &[usize]) -> Result<PolyhedricApprox> {
    if j == 0 || is.iter().any(|&i| i == 0) {
        return Err(Error::Domain("j and every i must be positive".into()));
    }
    let member = super::reduced_cone_membership(ctx, z)?;
    if let Some(v) = member.violation {
        return Err(Error::Precondition(format!("z is not in the reduced critical cone: {} at t = {}", v.reason, v.t)));
    }
    let xi = 1.0 / j as f64;
    let grid = ctx.grid().merge(z.grid())?;
    let field = Field {
        z: z.resample(&grid)?,
        cones: ctx.cones.on_grid(&grid)?,
        horizon: grid.horizon(),
        jump_tol: 1e-10 * z.sup_norm().max(1.0),
        zero_tol: 1e-12 * z.sup_norm().max(1.0),
        _ctx: ctx,
    };

    let cover = greedy_cover(&field, xi)?;
    let cuts = cut_points(&cover);

    let mut extra: Vec<f64> = cover.iter().map(|e| e.center).collect();
    for c in &cuts {
        for q in 0..=8 {
            extra.push(c.at - 0.5 * c.width + c.width * q as f64 / 8.0);
        }
    }
    for el in cover.iter().filter(|e| e.jump && e.value != 0.0) {
        for &i in is {
            let inv = 1.0 / i as f64;
            for q in 0..=8 {
                extra.push(el.center - 2.0 * inv + inv * q as f64 / 8.0);
            }
        }
    }
    let sample_grid = grid.with_points(&extra);

    let mut approx = PolyhedricApprox {
        xi,
        cover,
        cuts,
        sample_grid: sample_grid.clone(),
        z_j: GridRegulated::zero(&sample_grid),
        z_ij: Vec::new(),
    };
    let left: Vec<f64> = sample_grid.nodes().iter().map(|&s| approx.eval_zj(s, true)).collect();
    let value: Vec<f64> = sample_grid.nodes().iter().map(|&s| approx.eval_zj(s, false)).collect();
    approx.z_j = GridRegulated::right_continuous(sample_grid.clone(), left, value)?;
    let mut sorted = is.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    approx.z_ij = sorted
        .into_iter()
        .map(|i| (i, PLFunction::from_fn(&sample_grid, |s| approx.eval_zij(i, s))))
        .collect();
    Ok(approx)
}

fn greedy_cover(field: &Field<'_>, xi: f64) -> Result<Vec<CoverElement>> {
    let horizon = field.horizon;
    let element = |t: f64| -> Result<CoverElement> {
        let eps = field.radius(t, xi);
        if !(eps > 0.0) {
            return Err(Error::Precondition(format!("no admissible neighbourhood at t = {t}")));
        }
        let (jump, value) = field.element_value(t);
        Ok(CoverElement { center: t, eps, jump, value })
    };
    let mut cover = vec![element(0.0)?];
    loop {
        let last = *cover.last().unwrap();
        let reach = last.center + last.eps;
        if reach > horizon || last.center >= horizon {
            break;
        }
        let nodes = field.nodes();
        let lo = nodes.partition_point(|&s| s <= last.center);
        let hi = nodes.partition_point(|&s| s <= reach);
        let mut candidates: Vec<f64> = nodes[lo..hi.min(nodes.len())].to_vec();
        if hi < nodes.len() {
            candidates.push(nodes[hi]);
        }
        candidates.push(reach);
        for lambda in [0.5, 0.75, 0.9] {
            candidates.push(last.center + lambda * (reach - last.center));
        }
        let mut best: Option<CoverElement> = None;
        for t in candidates {
            if t <= last.center || t > horizon {
                continue;
            }
            let el = element(t)?;
            if el.center - el.eps >= reach {
                continue;
            }
            if best.map_or(true, |b| el.center + el.eps > b.center + b.eps) {
                best = Some(el);
            }
        }
        let next = best.ok_or_else(|| Error::Precondition(format!("cover stalls at t = {reach}")))?;
        cover.push(next);
    }
    Ok(cover)
}

fn cut_points(cover: &[CoverElement]) -> Vec<Cut> {
    cover
        .windows(2)
        .map(|w| {
            let lo = w[0].center.max(w[1].center - w[1].eps);
            let hi = w[1].center.min(w[0].center + w[0].eps);
            Cut { at: 0.5 * (lo + hi), width: 0.5 * (hi - lo) }
        })
        .collect()
}
