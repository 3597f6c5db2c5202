//! Scalar stop and play operators on piecewise linear inputs.
//!
//! On a segment where `u` is affine the state follows
//! `y = clamp(u + w, -r, r)` with `w = y - u` frozen from the segment start,
//! and `w` only moves while `y` sits on `±r`. The instant `y` reaches the
//! boundary inside a segment is inserted as a node, so `y` and `w` are
//! exactly piecewise linear on the output grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridRegulated, HysteresisConfig, PLFunction, TimeGrid};
use crate::ksint;

/// Output of [`stop`], all on the refined grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopSolution {
    /// `S(u)`.
    pub y: PLFunction,
    /// `y - u`.
    pub w: PLFunction,
    /// Input resampled onto the refined grid.
    pub u: PLFunction,
    pub cfg: HysteresisConfig,
}

impl StopSolution {
    pub fn grid(&self) -> &TimeGrid {
        self.y.grid()
    }
}

/// Evaluates `y = S(u)` exactly.
pub fn stop(u: &PLFunction, cfg: &HysteresisConfig) -> Result<StopSolution> {
    cfg.validate()?;
    let r = cfg.r;
    let nodes = u.grid().nodes();
    let node_tol = u.grid().node_tol();
    let vals = u.values();

    let mut t_out = Vec::with_capacity(nodes.len() + 8);
    let mut u_out = Vec::with_capacity(nodes.len() + 8);
    let mut y_out = Vec::with_capacity(nodes.len() + 8);

    let mut w = cfg.y0 - vals[0];
    t_out.push(nodes[0]);
    u_out.push(vals[0]);
    y_out.push(cfg.y0);

    for k in 0..nodes.len() - 1 {
        let (u0, u1) = (vals[k], vals[k + 1]);
        let free = u1 + w;
        if free.abs() > r {
            let bound = r.copysign(free);
            let theta = (bound - w - u0) / (u1 - u0);
            let t_hit = nodes[k] + theta * (nodes[k + 1] - nodes[k]);
            // hits that round onto a node are not inserted
            if theta > 1e-12 && theta < 1.0 - 1e-12 && t_hit - nodes[k] > node_tol && nodes[k + 1] - t_hit > node_tol {
                t_out.push(t_hit);
                u_out.push(bound - w);
                y_out.push(bound);
            }
        }
        let y1 = free.clamp(-r, r);
        w = y1 - u1;
        t_out.push(nodes[k + 1]);
        u_out.push(u1);
        y_out.push(y1);
    }

    let grid = TimeGrid::new(t_out)?;
    let w_out: Vec<f64> = y_out.iter().zip(&u_out).map(|(y, u)| y - u).collect();
    Ok(StopSolution {
        y: PLFunction::new(grid.clone(), y_out)?,
        w: PLFunction::new(grid.clone(), w_out)?,
        u: PLFunction::new(grid, u_out)?,
        cfg: *cfg,
    })
}

/// `P(u) = u - S(u)` on the refined grid.
pub fn play(u: &PLFunction, cfg: &HysteresisConfig) -> Result<PLFunction> {
    Ok(stop(u, cfg)?.w.scale(-1.0))
}

/// Activity class of a time instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Inactive,
    BiactivePlus,
    BiactiveMinus,
    StrictlyActive,
}

impl Regime {
    pub fn is_biactive(self) -> bool {
        matches!(self, Regime::BiactivePlus | Regime::BiactiveMinus)
    }
}

/// Regime of one node together with the distances to both thresholds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRegime {
    pub regime: Regime,
    /// `r - |y(t)|`.
    pub activity_margin: f64,
    /// `|w(t_{k+1}) - w(t_k)|` on the next interval (0 at `T`).
    pub constancy_margin: f64,
    /// Within three decades of either threshold without crossing it.
    pub unstable: bool,
}

/// Regimes at every node and on every open interval of the solution grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Regimes {
    pub nodes: Vec<NodeRegime>,
    pub intervals: Vec<Regime>,
    pub tol_act: f64,
    pub tol_const: f64,
}

impl Regimes {
    pub fn node(&self, k: usize) -> Regime {
        self.nodes[k].regime
    }

    pub fn unstable_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&k| self.nodes[k].unstable).collect()
    }
}

pub fn tol_act(r: f64) -> f64 {
    1e-9 * r
}

pub fn tol_const(w: &PLFunction) -> f64 {
    1e-9 * (1.0 + w.total_variation())
}

fn near(margin: f64, tol: f64) -> bool {
    margin > tol && margin < 1e3 * tol
}

/// Classifies nodes by activity and by whether `y - u` stays constant on the next interval.
pub fn classify_regimes(sol: &StopSolution) -> Regimes {
    let r = sol.cfg.r;
    let t_act = tol_act(r);
    let t_const = tol_const(&sol.w);
    let y = sol.y.values();
    let w = sol.w.values();
    let n = y.len();

    let nodes = (0..n)
        .map(|k| {
            let activity_margin = r - y[k].abs();
            let constancy_margin = if k + 1 < n { (w[k + 1] - w[k]).abs() } else { 0.0 };
            let regime = if activity_margin > t_act {
                Regime::Inactive
            } else if k + 1 == n || constancy_margin <= t_const {
                if y[k] > 0.0 {
                    Regime::BiactivePlus
                } else {
                    Regime::BiactiveMinus
                }
            } else {
                Regime::StrictlyActive
            };
            let unstable = near(activity_margin, t_act) || (regime != Regime::Inactive && near(constancy_margin, t_const));
            NodeRegime { regime, activity_margin, constancy_margin, unstable }
        })
        .collect::<Vec<_>>();

    let intervals = (0..n - 1)
        .map(|k| {
            let on_same_side = nodes[k].regime != Regime::Inactive
                && nodes[k + 1].activity_margin <= t_act
                && y[k].signum() == y[k + 1].signum();
            if on_same_side {
                nodes[k].regime
            } else {
                Regime::Inactive
            }
        })
        .collect();

    Regimes { nodes, intervals, tol_act: t_act, tol_const: t_const }
}

/// `min_v \int_a^b (v - y) d(y - u)` over test functions `v` with values in `[-r, r]`.
pub fn vi_residual(sol: &StopSolution, test_fns: &[GridRegulated], a: f64, b: f64) -> Result<f64> {
    let r = sol.cfg.r;
    let y = GridRegulated::from_pl(&sol.y);
    let w = GridRegulated::from_pl(&sol.w);
    let mut worst = f64::INFINITY;
    for v in test_fns {
        if v.sup_norm() > r + tol_act(r) {
            return Err(Error::Precondition(format!(
                "test function leaves [-r, r]: sup norm {} > {}",
                v.sup_norm(),
                r
            )));
        }
        let diff = v.sub(&y)?;
        worst = worst.min(ksint::ks_integrate(&diff, &w, a, b)?);
    }
    Ok(worst)
}
