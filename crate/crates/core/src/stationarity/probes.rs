//! Smooth directions that approximate `c 1_[t, T]` and whose derivative
//! vanishes off `(t - 1/i, t)`.

use serde::{Deserialize, Serialize};

use super::CriticalContext;
use crate::error::{Error, Result};
use crate::grid::{PLFunction, Side};
use crate::sensitivity::{dirdiff_vi, DerivativeResult};
use crate::smooth::probe_step;

/// A probe direction and the derivative it produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarProbe {
    pub t: f64,
    pub c: f64,
    pub i: usize,
    /// `h_i(s) = c probe_step((s - t) i)` sampled on the solution grid plus the ramp.
    pub h: PLFunction,
    pub derivative: DerivativeResult,
    /// `max |eta_i|` over nodes outside `(t - 1/i, t)`, one-sided limits included.
    pub max_outside: f64,
}

/// Samples per unit ramp.
const RAMP_SAMPLES: usize = 32;

/// Builds the probe at `t` with weight `c`, which must lie in the polar of the cone at `t`.
pub fn polar_probe(ctx: &CriticalContext, t: f64, c: f64, i: usize) -> Result<PolarProbe> {
    if i == 0 {
        return Err(Error::Domain("probe index must be positive".into()));
    }
    let cone = ctx.cones.at(t)?;
    if !cone.polar().contains(c, 0.0) {
        return Err(Error::Precondition(format!("weight {c} is not in the polar of the {cone:?} cone at t = {t}")));
    }
    let inv = 1.0 / i as f64;
    let extra: Vec<f64> = (0..=RAMP_SAMPLES).map(|q| t - inv + inv * q as f64 / RAMP_SAMPLES as f64).collect();
    let grid = ctx.grid().with_points(&extra);
    let h = PLFunction::from_fn(&grid, |s| c * probe_step((s - t) * i as f64));
    let u = ctx.sol.u.resample(&grid)?;
    let derivative = dirdiff_vi(&u, &h, &ctx.sol.cfg)?;
    let eta = &derivative.eta;
    let tol = eta.grid().node_tol();
    let mut max_outside: f64 = 0.0;
    for (k, &s) in eta.grid().nodes().iter().enumerate() {
        let sides: &[Side] = if s <= t - inv + tol || s > t + tol {
            &[Side::Left, Side::Value, Side::Right]
        } else if s >= t - tol {
            &[Side::Value, Side::Right]
        } else {
            &[]
        };
        for &side in sides {
            max_outside = max_outside.max(eta.at_node(k, side).abs());
        }
    }
    Ok(PolarProbe { t, c, i, h, derivative, max_outside })
}
