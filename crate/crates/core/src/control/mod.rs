//! Optimal control of the stop operator: problem data, objective, solver and
//! the weak-star counterexample.

pub mod counterexample;
pub mod solver;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{linear_product_integral, GridRegulated, HysteresisConfig, PLFunction, TimeGrid};
use crate::hysteresis::{classify_regimes, stop, Regimes, StopSolution};
use crate::sensitivity::{dirdiff_on_solution, DerivativeResult};

/// Tracking, terminal and discrete H^1 control terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    /// Target trajectory `y_d`.
    pub y_d: PLFunction,
    /// Terminal target `y_T`.
    pub y_target: f64,
    pub w_track: f64,
    pub w_term: f64,
    pub nu: f64,
}

/// Admissible controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Admissible {
    Unconstrained,
    Box { lower: PLFunction, upper: PLFunction },
}

/// Horizon, bounds, objective and admissible set on a control grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlProblem {
    pub cfg: HysteresisConfig,
    pub grid: TimeGrid,
    pub objective: Objective,
    pub admissible: Admissible,
}

impl ControlProblem {
    pub fn new(cfg: HysteresisConfig, grid: TimeGrid, objective: Objective, admissible: Admissible) -> Result<Self> {
        let p = ControlProblem { cfg, grid, objective, admissible };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        let o = &self.objective;
        if !(o.nu > 0.0) {
            return Err(Error::Domain(format!("nu must be positive, got {}", o.nu)));
        }
        if !(o.w_track >= 0.0 && o.w_term >= 0.0) {
            return Err(Error::Domain("objective weights must be nonnegative".into()));
        }
        if (o.y_d.horizon() - self.grid.horizon()).abs() > self.grid.node_tol() {
            return Err(Error::GridMismatch("target trajectory has a different horizon".into()));
        }
        if let Admissible::Box { lower, upper } = &self.admissible {
            let l = lower.sample_onto(&self.grid)?;
            let u = upper.sample_onto(&self.grid)?;
            if l.values().iter().zip(u.values()).any(|(a, b)| a > b) {
                return Err(Error::Domain("box bounds need lower <= upper".into()));
            }
        }
        Ok(())
    }

    /// Terminal observation only: `w_track = 0`.
    pub fn is_terminal_only(&self) -> bool {
        self.objective.w_track == 0.0
    }

    /// Box bounds as node vectors, if any.
    pub fn bounds(&self) -> Result<Option<(Vec<f64>, Vec<f64>)>> {
        Ok(match &self.admissible {
            Admissible::Unconstrained => None,
            Admissible::Box { lower, upper } => Some((
                lower.sample_onto(&self.grid)?.values().to_vec(),
                upper.sample_onto(&self.grid)?.values().to_vec(),
            )),
        })
    }

    pub fn control(&self, values: Vec<f64>) -> Result<PLFunction> {
        PLFunction::new(self.grid.clone(), values)
    }
}

/// Lumped mass weights `m_k` of the trapezoidal rule.
pub fn lumped_mass(grid: &TimeGrid) -> Vec<f64> {
    let n = grid.len();
    (0..n)
        .map(|k| {
            let left = if k > 0 { grid.width(k - 1) } else { 0.0 };
            let right = if k + 1 < n { grid.width(k) } else { 0.0 };
            0.5 * (left + right)
        })
        .collect()
}

/// `(M + K) u` with lumped mass `M` and stiffness `K` of PL functions.
pub fn h1_apply(grid: &TimeGrid, u: &[f64]) -> Vec<f64> {
    let m = lumped_mass(grid);
    let mut out: Vec<f64> = u.iter().zip(&m).map(|(a, b)| a * b).collect();
    for k in 0..grid.intervals() {
        let s = (u[k + 1] - u[k]) / grid.width(k);
        out[k] -= s;
        out[k + 1] += s;
    }
    out
}

/// `\int u^2 (trapezoid) + \int u'^2`.
pub fn h1_norm_sq(grid: &TimeGrid, u: &[f64]) -> f64 {
    h1_apply(grid, u).iter().zip(u).map(|(a, b)| a * b).sum()
}

/// `\int f z dt` for PL `f` and a grid-regulated `z`.
pub fn l2_pairing(f: &PLFunction, z: &GridRegulated) -> Result<f64> {
    let grid = f.grid().merge(z.grid())?;
    let f = f.resample(&grid)?;
    let z = z.resample(&grid)?;
    Ok((0..grid.intervals())
        .map(|k| linear_product_integral(grid.width(k), f.value(k), f.value(k + 1), z.right()[k], z.left()[k + 1]))
        .sum())
}

/// Objective value and partial derivatives at a control.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveEval {
    pub j: f64,
    pub sol: StopSolution,
    pub regimes: Regimes,
    /// `w_track (y - y_d)`, an L^1 density.
    pub d1: PLFunction,
    /// `w_term (y(T) - y_T)`.
    pub d2: f64,
    /// Coefficients `g_k` with `<d3 J, h> = sum_k g_k h(t_k)` for PL `h` on the control grid.
    pub d3: Vec<f64>,
    pub u: PLFunction,
}

/// Evaluates `J(S(u), S(u)(T), u)` and its partial derivatives.
pub fn objective_eval(problem: &ControlProblem, u: &PLFunction) -> Result<ObjectiveEval> {
    if u.grid() != &problem.grid {
        return Err(Error::GridMismatch("control must live on the problem grid".into()));
    }
    let o = &problem.objective;
    let sol = stop(u, &problem.cfg)?;
    let err = sol.y.sub(&o.y_d)?;
    let track = 0.5 * o.w_track * err.inner_l2(&err)?;
    let y_t = *sol.y.values().last().unwrap();
    let term = 0.5 * o.w_term * (y_t - o.y_target).powi(2);
    let cost = 0.5 * o.nu * h1_norm_sq(&problem.grid, u.values());
    let d3 = h1_apply(&problem.grid, u.values()).into_iter().map(|v| o.nu * v).collect();
    Ok(ObjectiveEval {
        j: track + term + cost,
        d1: err.scale(o.w_track),
        d2: o.w_term * (y_t - o.y_target),
        d3,
        regimes: classify_regimes(&sol),
        sol,
        u: u.clone(),
    })
}

impl ObjectiveEval {
    /// Solves the derivative for a direction on the control grid.
    pub fn derivative(&self, h: &PLFunction) -> Result<DerivativeResult> {
        let h_sol = h.resample(self.sol.grid())?;
        Ok(dirdiff_on_solution(self.sol.clone(), self.regimes.clone(), &h_sol))
    }

    /// `J'(u; h) = <d1 J, eta> + d2 J eta(T) + <d3 J, h>`.
    pub fn directional_derivative(&self, h: &PLFunction) -> Result<f64> {
        let res = self.derivative(h)?;
        self.pairing(&res.eta, h)
    }

    /// `<d1 J, eta> + d2 J eta(T) + sum_k g_k h_k`.
    pub fn pairing(&self, eta: &GridRegulated, h: &PLFunction) -> Result<f64> {
        if h.values().len() != self.d3.len() {
            return Err(Error::LengthMismatch { expected: self.d3.len(), got: h.values().len() });
        }
        let n = eta.grid().len();
        let track = if self.d1.sup_norm() == 0.0 { 0.0 } else { l2_pairing(&self.d1, eta)? };
        let control: f64 = self.d3.iter().zip(h.values()).map(|(g, v)| g * v).sum();
        Ok(track + self.d2 * eta.value()[n - 1] + control)
    }
}
