//! Directional derivatives of the stop operator.
//!
//! [`dirdiff_vi`] computes the right limit `eta` of `S'(u; h)` with a
//! catch-up scheme: on each open interval of the solution grid the cone is
//! fixed and `h` is affine, so `eta` is the projection of the carried value
//! plus the increment of `h`, and at every node the left limit is projected
//! onto that node's cone. Kinks where the projection starts to bind inside an
//! interval are inserted as nodes.
//!
//! [`dirdiff_fd`] is the finite-difference oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridRegulated, HysteresisConfig, Location, PLFunction, Side, TimeGrid, TOL_EQ};
use crate::hysteresis::{classify_regimes, stop, Regime, Regimes, StopSolution};
use crate::ksint;

/// Closed convex cone in the real line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cone {
    /// All of R.
    Free,
    /// `(-inf, 0]`.
    NonPos,
    /// `[0, inf)`.
    NonNeg,
    /// `{0}`.
    Zero,
}

impl Cone {
    pub fn from_regime(regime: Regime) -> Cone {
        match regime {
            Regime::Inactive => Cone::Free,
            Regime::BiactivePlus => Cone::NonPos,
            Regime::BiactiveMinus => Cone::NonNeg,
            Regime::StrictlyActive => Cone::Zero,
        }
    }

    pub fn project(self, x: f64) -> f64 {
        match self {
            Cone::Free => x,
            Cone::NonPos => x.min(0.0),
            Cone::NonNeg => x.max(0.0),
            Cone::Zero => 0.0,
        }
    }

    pub fn contains(self, x: f64, tol: f64) -> bool {
        match self {
            Cone::Free => true,
            Cone::NonPos => x <= tol,
            Cone::NonNeg => x >= -tol,
            Cone::Zero => x.abs() <= tol,
        }
    }

    /// Polar cone `{c : c x <= 0 for all x in the cone}`.
    pub fn polar(self) -> Cone {
        match self {
            Cone::Free => Cone::Zero,
            Cone::NonPos => Cone::NonNeg,
            Cone::NonNeg => Cone::NonPos,
            Cone::Zero => Cone::Free,
        }
    }
}

/// Pointwise critical cones at nodes and on open intervals of a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSpec {
    pub grid: TimeGrid,
    pub nodes: Vec<Cone>,
    pub intervals: Vec<Cone>,
}

impl ConeSpec {
    pub fn from_regimes(grid: &TimeGrid, regimes: &Regimes) -> ConeSpec {
        ConeSpec {
            grid: grid.clone(),
            nodes: regimes.nodes.iter().map(|n| Cone::from_regime(n.regime)).collect(),
            intervals: regimes.intervals.iter().map(|&r| Cone::from_regime(r)).collect(),
        }
    }

    /// Cone at an arbitrary time.
    pub fn at(&self, t: f64) -> Result<Cone> {
        Ok(match self.grid.locate(t)? {
            Location::Node(k) => self.nodes[k],
            Location::Interior(k) => self.intervals[k],
        })
    }

    /// Same cone field on a grid that refines `self.grid`.
    pub fn on_grid(&self, grid: &TimeGrid) -> Result<ConeSpec> {
        if !self.grid.is_refined_by(grid) {
            return Err(Error::GridMismatch("cone grid is not contained in the target grid".into()));
        }
        let nodes = grid.nodes().iter().map(|&t| self.at(t)).collect::<Result<Vec<_>>>()?;
        let intervals = (0..grid.intervals())
            .map(|k| self.at(0.5 * (grid.node(k) + grid.node(k + 1))))
            .collect::<Result<Vec<_>>>()?;
        Ok(ConeSpec { grid: grid.clone(), nodes, intervals })
    }

    /// First violation of `z(t) in K(t)` over nodes, one-sided limits and interiors.
    pub fn violation(&self, z: &GridRegulated, tol: f64) -> Result<Option<(f64, f64)>> {
        let grid = self.grid.merge(z.grid())?;
        let cones = self.on_grid(&grid)?;
        let z = z.resample(&grid)?;
        for k in 0..grid.len() {
            if !cones.nodes[k].contains(z.value()[k], tol) {
                return Ok(Some((grid.node(k), z.value()[k])));
            }
            if k + 1 < grid.len() {
                let c = cones.intervals[k];
                for v in [z.right()[k], z.left()[k + 1]] {
                    if !c.contains(v, tol) {
                        return Ok(Some((0.5 * (grid.node(k) + grid.node(k + 1)), v)));
                    }
                }
            }
        }
        Ok(None)
    }
}

/// Right limit of `S'(u; h)` with the data it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeResult {
    /// Right-continuous `eta = S'(u; h)_+`, jumps only at nodes.
    pub eta: GridRegulated,
    /// Direction on the grid of `eta`.
    pub h: PLFunction,
    /// Cones on the grid of `eta`.
    pub cones: ConeSpec,
    /// State on the solution grid (no kink nodes).
    pub sol: StopSolution,
    pub regimes: Regimes,
    /// FD estimate of `S'(u; h)` at the nodes of `eta`, when computed.
    pub delta_node_values: Option<Vec<f64>>,
}

impl DerivativeResult {
    pub fn grid(&self) -> &TimeGrid {
        self.eta.grid()
    }

    /// Nodes with `eta(t-) != eta(t)`.
    pub fn jump_nodes(&self) -> Vec<usize> {
        let (l, v) = (self.eta.left(), self.eta.value());
        (0..l.len()).filter(|&k| (l[k] - v[k]).abs() > TOL_EQ).collect()
    }
}

/// Solves `y = S(u)` on the union of the grids of `u` and `h`, and puts `h` on the result.
pub fn solve_with_direction(u: &PLFunction, h: &PLFunction, cfg: &HysteresisConfig) -> Result<(StopSolution, PLFunction)> {
    let base = u.grid().merge(h.grid())?;
    let sol = stop(&u.resample(&base)?, cfg)?;
    let h = h.resample(sol.grid())?;
    Ok((sol, h))
}

/// `eta = S'(u; h)_+` by the catch-up scheme.
pub fn dirdiff_vi(u: &PLFunction, h: &PLFunction, cfg: &HysteresisConfig) -> Result<DerivativeResult> {
    let (sol, h) = solve_with_direction(u, h, cfg)?;
    let regimes = classify_regimes(&sol);
    Ok(dirdiff_on_solution(sol, regimes, &h))
}

/// Catch-up on a precomputed solution; `h` must live on the solution grid.
pub fn dirdiff_on_solution(sol: StopSolution, regimes: Regimes, h: &PLFunction) -> DerivativeResult {
    let grid = sol.grid().clone();
    let cones = ConeSpec::from_regimes(&grid, &regimes);
    let hv = h.values();
    let n = grid.len();

    let mut t_out = vec![0.0];
    let mut left = vec![0.0];
    let mut value = vec![0.0];
    let mut right = vec![0.0];
    let mut h_out = vec![hv[0]];
    let mut node_cones = vec![cones.nodes[0]];
    let mut int_cones = Vec::with_capacity(n);

    let mut eta = cones.nodes[0].project(0.0);
    value[0] = eta;
    right[0] = eta;
    left[0] = eta;

    for k in 0..n - 1 {
        let c = cones.intervals[k];
        let dh = hv[k + 1] - hv[k];
        let free_end = eta + dh;
        // a kink appears when the free trajectory leaves the interval cone inside the interval
        if !c.contains(free_end, 0.0) && matches!(c, Cone::NonPos | Cone::NonNeg) && c.contains(eta, 0.0) && eta != 0.0
        {
            let theta = -eta / dh;
            if theta > 1e-12 && theta < 1.0 - 1e-12 {
                let t = grid.node(k) + theta * grid.width(k);
                t_out.push(t);
                left.push(0.0);
                value.push(0.0);
                right.push(0.0);
                h_out.push(hv[k] + theta * dh);
                node_cones.push(c);
                int_cones.push(c);
            }
        }
        int_cones.push(c);
        let eta_minus = c.project(if matches!(c, Cone::Zero) { 0.0 } else { free_end });
        let cone_next = cones.nodes[k + 1];
        eta = cone_next.project(eta_minus);
        t_out.push(grid.node(k + 1));
        left.push(eta_minus);
        value.push(eta);
        right.push(eta);
        h_out.push(hv[k + 1]);
        node_cones.push(cone_next);
    }

    // the right representative of the first interval starts from the projected initial value
    let eta_grid = TimeGrid::new(t_out).expect("kinks lie strictly inside intervals");
    let eta_fn =
        GridRegulated::new(eta_grid.clone(), left, value, right).expect("catch-up values are finite");
    DerivativeResult {
        h: PLFunction::new(eta_grid.clone(), h_out).expect("lengths match"),
        cones: ConeSpec { grid: eta_grid, nodes: node_cones, intervals: int_cones },
        eta: eta_fn,
        sol,
        regimes,
        delta_node_values: None,
    }
}

/// Finite-difference quotients of `S` at fixed evaluation points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdResult {
    pub points: Vec<f64>,
    pub alphas: Vec<f64>,
    /// `quotients[a][k] = (S(u + alpha_a h) - S(u))(points[k]) / alpha_a`.
    pub quotients: Vec<Vec<f64>>,
    /// Linear extrapolation to `alpha = 0` from the two smallest steps.
    pub limit: Vec<f64>,
    /// `|q_last - q_second_to_last|` per point.
    pub drift: Vec<f64>,
}

impl FdResult {
    pub fn finest(&self) -> &[f64] {
        self.quotients.last().expect("at least one alpha")
    }
}

/// Difference quotients `(S(u + alpha h) - S(u))(t) / alpha` at `points`.
pub fn dirdiff_fd(
    u: &PLFunction,
    h: &PLFunction,
    cfg: &HysteresisConfig,
    alphas: &[f64],
    points: &[f64],
) -> Result<FdResult> {
    if alphas.is_empty() || alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::Domain("step sizes must be positive".into()));
    }
    if alphas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Domain("step sizes must be strictly decreasing".into()));
    }
    if *alphas.last().unwrap() > 1e-6 {
        return Err(Error::Domain("smallest step size must be at most 1e-6".into()));
    }
    let base = stop(u, cfg)?;
    let y0 = points.iter().map(|&t| base.y.eval(t)).collect::<Result<Vec<_>>>()?;
    let mut quotients = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let pert = stop(&u.combine(1.0, h, alpha)?, cfg)?;
        let q = points
            .iter()
            .zip(&y0)
            .map(|(&t, &y)| Ok((pert.y.eval(t)? - y) / alpha))
            .collect::<Result<Vec<_>>>()?;
        quotients.push(q);
    }
    let m = quotients.len();
    let (limit, drift) = if m >= 2 {
        let (a1, a2) = (alphas[m - 2], alphas[m - 1]);
        let (q1, q2) = (&quotients[m - 2], &quotients[m - 1]);
        let limit = q1.iter().zip(q2).map(|(x1, x2)| x2 - a2 * (x1 - x2) / (a1 - a2)).collect();
        let drift = q1.iter().zip(q2).map(|(x1, x2)| (x1 - x2).abs()).collect();
        (limit, drift)
    } else {
        (quotients[0].clone(), vec![0.0; points.len()])
    };
    Ok(FdResult { points: points.to_vec(), alphas: alphas.to_vec(), quotients, limit, drift })
}

/// Nodes of `res.grid()` whose regime history is robust under a perturbation of size `alpha * h`.
///
/// A solution node is fragile when its activity margin or its constancy
/// margin sits strictly between the classification tolerance and
/// `8 alpha ||h||_inf`. Fragility is carried forward until a strictly active
/// node resets `eta` to 0.
pub fn fd_stable_nodes(res: &DerivativeResult, alpha: f64) -> Vec<bool> {
    let band = 8.0 * alpha * res.h.sup_norm().max(TOL_EQ);
    let reg = &res.regimes;
    let mut sol_stable = Vec::with_capacity(reg.nodes.len());
    let mut tainted = false;
    for node in &reg.nodes {
        let fragile = (node.activity_margin > reg.tol_act && node.activity_margin < band + reg.tol_act)
            || (node.regime != Regime::Inactive
                && node.constancy_margin > reg.tol_const
                && node.constancy_margin < band + reg.tol_const);
        if node.regime == Regime::StrictlyActive && !fragile {
            tainted = false;
        }
        tainted |= fragile;
        sol_stable.push(!tainted);
    }
    // kink nodes inherit the flag of the solution node before them
    let sol_grid = res.sol.grid();
    let mut idx = 0;
    res.grid()
        .nodes()
        .iter()
        .map(|&t| {
            while idx + 1 < sol_grid.len() && sol_grid.node(idx + 1) <= t + sol_grid.node_tol() {
                idx += 1;
            }
            sol_stable[idx]
        })
        .collect()
}

/// Result of comparing `eta` with FD quotients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdComparison {
    pub alpha: f64,
    /// Max over stable nodes of `min(|q - eta(t)|, |q - eta(t-)|)`.
    pub max_deviation: f64,
    pub worst_time: f64,
    pub checked: usize,
    pub skipped: usize,
    /// FD value per node of `eta`.
    pub quotients: Vec<f64>,
}

/// Compares `eta` with FD quotients at step `alpha`; `S'(u; h)(t)` is `eta(t)` or `eta(t-)`.
pub fn compare_with_fd(res: &DerivativeResult, u: &PLFunction, cfg: &HysteresisConfig, alpha: f64) -> Result<FdComparison> {
    let points = res.grid().nodes().to_vec();
    let alphas = if alpha > 1e-6 { vec![alpha, 1e-6] } else { vec![alpha] };
    let fd = dirdiff_fd(u, &res.h, cfg, &alphas, &points)?;
    let q = fd.quotients[0].clone();
    let stable = fd_stable_nodes(res, alpha);
    let mut max_deviation = 0.0f64;
    let mut worst_time = 0.0;
    let mut checked = 0;
    for k in 0..points.len() {
        if !stable[k] {
            continue;
        }
        checked += 1;
        let dev = (q[k] - res.eta.value()[k]).abs().min((q[k] - res.eta.left()[k]).abs());
        if dev > max_deviation {
            max_deviation = dev;
            worst_time = points[k];
        }
    }
    Ok(FdComparison { alpha, max_deviation, worst_time, checked, skipped: points.len() - checked, quotients: q })
}

/// Residuals of the derivative variational inequality on `[0, s]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivativeViResidual {
    /// `min_z \int_0^s (z - eta) d(eta - h)`.
    pub min_residual: f64,
    /// `\int_0^s eta d(eta - h)`.
    pub orthogonality: f64,
}

/// Evaluates the derivative VI for cone-feasible test functions `zs`.
pub fn derivative_vi_residual(res: &DerivativeResult, zs: &[GridRegulated], s: f64) -> Result<DerivativeViResidual> {
    if !(s > 0.0) {
        return Err(Error::Domain("upper limit s must be positive".into()));
    }
    let eta = &res.eta;
    let integrator = eta.sub(&GridRegulated::from_pl(&res.h))?;
    let mut min_residual = f64::INFINITY;
    for z in zs {
        if let Some((t, v)) = res.cones.violation(z, 1e-12)? {
            return Err(Error::Precondition(format!("test function value {v} at t = {t} leaves the critical cone")));
        }
        let diff = z.sub(eta)?;
        min_residual = min_residual.min(ksint::ks_integrate(&diff, &integrator, 0.0, s)?);
    }
    let orthogonality = ksint::ks_integrate(eta, &integrator, 0.0, s)?;
    Ok(DerivativeViResidual { min_residual, orthogonality })
}

/// Reads `eta` at `t` from the side matching the node convention `delta(t) in {eta(t), eta(t-)}`.
pub fn eta_candidates(res: &DerivativeResult, t: f64) -> Result<(f64, f64)> {
    Ok((res.eta.eval(t, Side::Value)?, res.eta.eval(t, Side::Left)?))
}
