//! Descent solver for the control problem.
//!
//! Stage one minimises a surrogate where the clamp `[-r, r]` is replaced by
//! a softplus clamp of width `sigma`, with the gradient from the discrete
//! adjoint recursion, for a decreasing sequence of widths. Stage two runs
//! the same quasi-Newton iteration on the exact objective with one-sided
//! derivatives along nodal hats. For terminal-only objectives, where `y(T)`
//! is piecewise affine in the nodal values of `u`, a final stage minimises
//! the local quadratic model exactly, including the variant that pins
//! `y(T)` to a threshold. The last stage steps along whichever direction
//! of a sampled admissible family has the most negative directional
//! derivative, until none is negative. Certification draws a separate family.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{h1_apply, objective_eval, ControlProblem, ObjectiveEval};
use crate::error::{Error, Result};
use crate::grid::{linear_product_integral, HysteresisConfig, PLFunction};
use crate::stationarity::{
    bouligand_residual, build_adjoint, check_strong_stationarity, direction_family, tangent_directions,
    BouligandReport, StationarityReport, StationaritySamples,
};

/// Seed offset of the descent family, so certification uses other directions.
const DESCENT_STREAM: u64 = 0x5e_ed0f_de5c;
/// Relative slope below which a sampled direction counts as descent.
const DESCENT_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Smoothing widths, decreasing.
    pub sigmas: Vec<f64>,
    pub max_iter: usize,
    pub exact_iter: usize,
    pub polish_iter: usize,
    /// Steps along sampled descent directions.
    pub descent_iter: usize,
    pub memory: usize,
    pub grad_tol: f64,
    /// Random directions added to the structured family when certifying.
    pub certify_random: usize,
    /// Tolerance of the stationarity check; `None` skips it.
    pub stationarity_tol: Option<f64>,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            sigmas: vec![1e-1, 1e-2, 1e-3, 1e-4],
            max_iter: 300,
            exact_iter: 100,
            polish_iter: 40,
            descent_iter: 200,
            memory: 8,
            grad_tol: 1e-10,
            certify_random: 64,
            stationarity_tol: Some(1e-6),
            seed: 0,
        }
    }
}

/// Exact objective after each accepted step of a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub stage: String,
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub u: PLFunction,
    pub j: f64,
    pub trace: Vec<TraceEntry>,
    /// Stages whose exact objective ended above where it started.
    pub stage_increases: Vec<String>,
    pub bouligand: BouligandReport,
    /// Present for unconstrained problems when a tolerance is set.
    pub stationarity: Option<StationarityReport>,
}

/// Softplus `sigma log(1 + exp(z / sigma))` and its derivative.
fn softplus(z: f64, sigma: f64) -> (f64, f64) {
    let x = z / sigma;
    let value = z.max(0.0) + sigma * (-x.abs()).exp().ln_1p();
    let slope = if x >= 0.0 { 1.0 / (1.0 + (-x).exp()) } else { x.exp() / (1.0 + x.exp()) };
    (value, slope)
}

/// Smooth clamp onto `[-r, r]` and its derivative.
pub fn smooth_clamp(x: f64, r: f64, sigma: f64) -> (f64, f64) {
    let (a, da) = softplus(x - r, sigma);
    let (b, db) = softplus(-r - x, sigma);
    (x - a + b, 1.0 - da - db)
}

/// Nodal state of the smoothed recursion `y_{k+1} = clamp_sigma(y_k + u_{k+1} - u_k)`
/// and the step slopes `d clamp_sigma`.
pub fn smoothed_state(cfg: &HysteresisConfig, u: &[f64], sigma: f64) -> (Vec<f64>, Vec<f64>) {
    let n = u.len();
    let mut y = vec![cfg.y0; n];
    let mut dy = vec![0.0; n];
    for k in 0..n.saturating_sub(1) {
        let (v, d) = smooth_clamp(y[k] + u[k + 1] - u[k], cfg.r, sigma);
        y[k + 1] = v;
        dy[k + 1] = d;
    }
    (y, dy)
}

/// Surrogate objective on the control grid and its gradient.
pub fn smoothed_objective(problem: &ControlProblem, u: &[f64], sigma: f64) -> Result<(f64, Vec<f64>)> {
    let grid = &problem.grid;
    let o = &problem.objective;
    let n = grid.len();
    let yd = o.y_d.sample_onto(grid)?;
    let (y, dy) = smoothed_state(&problem.cfg, u, sigma);
    let e: Vec<f64> = y.iter().zip(yd.values()).map(|(a, b)| a - b).collect();
    // consistent mass for the tracking term
    let mut track = 0.0;
    let mut direct = vec![0.0; n];
    for k in 0..n - 1 {
        let h = grid.width(k);
        track += linear_product_integral(h, e[k], e[k + 1], e[k], e[k + 1]);
        direct[k] += o.w_track * h * (2.0 * e[k] + e[k + 1]) / 6.0;
        direct[k + 1] += o.w_track * h * (e[k] + 2.0 * e[k + 1]) / 6.0;
    }
    direct[n - 1] += o.w_term * (y[n - 1] - o.y_target);
    let hu = h1_apply(grid, u);
    let j = 0.5 * o.w_track * track
        + 0.5 * o.w_term * (y[n - 1] - o.y_target).powi(2)
        + 0.5 * o.nu * hu.iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
    let mut grad: Vec<f64> = hu.iter().map(|v| o.nu * v).collect();
    let mut adj = direct[n - 1];
    for k in (0..n - 1).rev() {
        let s = adj * dy[k + 1];
        grad[k + 1] += s;
        grad[k] -= s;
        adj = direct[k] + s;
    }
    Ok((j, grad))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn project(x: &mut [f64], bounds: &Option<(Vec<f64>, Vec<f64>)>) {
    if let Some((lo, hi)) = bounds {
        for (k, v) in x.iter_mut().enumerate() {
            *v = v.clamp(lo[k], hi[k]);
        }
    }
}

/// Gradient with components pushing out of the box removed.
fn projected_gradient(x: &[f64], g: &[f64], bounds: &Option<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    match bounds {
        None => g.to_vec(),
        Some((lo, hi)) => g
            .iter()
            .enumerate()
            .map(|(k, &gk)| {
                let tol = 1e-12 * (1.0 + x[k].abs());
                if (x[k] <= lo[k] + tol && gk > 0.0) || (x[k] >= hi[k] - tol && gk < 0.0) {
                    0.0
                } else {
                    gk
                }
            })
            .collect(),
    }
}

/// Limited-memory BFGS with projection onto the box and Armijo backtracking.
/// Calls `step` after every accepted iterate.
fn lbfgs(
    mut f: impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    x0: Vec<f64>,
    bounds: &Option<(Vec<f64>, Vec<f64>)>,
    max_iter: usize,
    memory: usize,
    grad_tol: f64,
    mut step: impl FnMut(&[f64]) -> Result<()>,
) -> Result<Vec<f64>> {
    let mut x = x0;
    project(&mut x, bounds);
    let (mut fx, mut g) = f(&x)?;
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut stalls = 0;
    for it in 0..max_iter {
        let pg = projected_gradient(&x, &g, bounds);
        let gnorm = pg.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gnorm <= grad_tol {
            break;
        }
        // two-loop recursion on the free components
        let mut q = pg.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut d: Vec<f64> = q.iter().map(|v| -v).collect();
        let free = projected_gradient(&x, &d.iter().map(|v| -v).collect::<Vec<_>>(), bounds);
        d = free.iter().map(|v| -v).collect();
        if dot(&d, &pg) >= 0.0 {
            hist.clear();
            d = pg.iter().map(|v| -v).collect();
        }
        let mut accepted = None;
        for attempt in 0..2 {
            if attempt == 1 {
                // quasi-Newton step failed: restart from steepest descent
                hist.clear();
                d = pg.iter().map(|v| -v).collect();
            }
            let mut t = if hist.is_empty() { (1.0 / gnorm).min(1.0) } else { 1.0 };
            if attempt == 0 && it > 0 && hist.is_empty() {
                t = 1.0;
            }
            for _ in 0..60 {
                let mut xn: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
                project(&mut xn, bounds);
                let (fn_, gn) = f(&xn)?;
                let dx: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                if fn_.is_finite() && fn_ <= fx + 1e-4 * dot(&g, &dx) && dx.iter().any(|v| *v != 0.0) {
                    accepted = Some((xn, fn_, gn, dx));
                    break;
                }
                t *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((xn, fn_, gn, s)) = accepted else { break };
        let mut y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let mut s = s;
        if let Some((lo, hi)) = bounds {
            // curvature pairs only see variables off the bounds
            for k in 0..s.len() {
                if xn[k] <= lo[k] || xn[k] >= hi[k] {
                    s[k] = 0.0;
                    y[k] = 0.0;
                }
            }
        }
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            hist.push_back((s, y, 1.0 / sy));
            if hist.len() > memory {
                hist.pop_front();
            }
        }
        let decrease = fx - fn_;
        x = xn;
        fx = fn_;
        g = gn;
        step(&x)?;
        if decrease <= 1e-15 * fx.abs().max(1e-300) {
            stalls += 1;
            if stalls >= 3 {
                if hist.is_empty() {
                    break;
                }
                hist.clear();
                stalls = 0;
            }
        } else {
            stalls = 0;
        }
    }
    Ok(x)
}

/// One-sided derivatives `J'(u; e_k)` along every nodal hat.
pub fn hat_derivatives(eval: &ObjectiveEval) -> Result<Vec<f64>> {
    let grid = eval.u.grid();
    let n = grid.len();
    (0..n)
        .map(|k| {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            eval.directional_derivative(&PLFunction::new(grid.clone(), v)?)
        })
        .collect()
}

/// `eta(T)` along every nodal hat, the local slope of `u -> y(T)`.
fn terminal_slopes(eval: &ObjectiveEval) -> Result<Vec<f64>> {
    let grid = eval.u.grid();
    let n = grid.len();
    (0..n)
        .map(|k| {
            let mut v = vec![0.0; n];
            v[k] = 1.0;
            let res = eval.derivative(&PLFunction::new(grid.clone(), v)?)?;
            Ok(*res.eta.value().last().unwrap())
        })
        .collect()
}

/// Solves `(M + K) x = b` for the tridiagonal H^1 matrix.
fn h1_solve(grid: &crate::grid::TimeGrid, b: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let m = super::lumped_mass(grid);
    let mut diag = m.clone();
    let mut off = vec![0.0; n.saturating_sub(1)];
    for k in 0..n - 1 {
        let s = 1.0 / grid.width(k);
        diag[k] += s;
        diag[k + 1] += s;
        off[k] = -s;
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { off[0] / diag[0] } else { 0.0 };
    d[0] = b[0] / diag[0];
    for k in 1..n {
        let denom = diag[k] - off[k - 1] * c[k - 1];
        if k + 1 < n {
            c[k] = off[k] / denom;
        }
        d[k] = (b[k] - off[k - 1] * d[k - 1]) / denom;
    }
    let mut x = d;
    for k in (0..n - 1).rev() {
        x[k] -= c[k] * x[k + 1];
    }
    x
}

/// Exact minimisers of the local models of a terminal-only objective.
fn polish_candidates(problem: &ControlProblem, eval: &ObjectiveEval) -> Result<Vec<Vec<f64>>> {
    let o = &problem.objective;
    let r = problem.cfg.r;
    let grid = &problem.grid;
    let n = grid.len();
    let u = eval.u.values();
    let y_t = *eval.sol.y.values().last().unwrap();
    let mut bases = vec![eval.clone()];
    if y_t.abs() >= r * (1.0 - 1e-6) {
        // step inside so the slopes describe the piece below the threshold
        let mut v = u.to_vec();
        v[n - 1] -= 1e-7 * r * y_t.signum();
        bases.push(objective_eval(problem, &problem.control(v)?)?);
    }
    let mut out = Vec::new();
    for base in &bases {
        let a = terminal_slopes(base)?;
        let ub = base.u.values();
        let yb = *base.sol.y.values().last().unwrap();
        let c = yb - dot(&a, ub);
        let v: Vec<f64> = h1_solve(grid, &a).into_iter().map(|x| x / o.nu).collect();
        let av = dot(&a, &v);
        if o.w_term > 0.0 {
            let scale = o.w_term * (o.y_target - c) / (1.0 + o.w_term * av);
            out.push(v.iter().map(|x| scale * x).collect());
        }
        if av > 0.0 {
            for bound in [r, -r] {
                let scale = (bound - c) / av;
                out.push(v.iter().map(|x| scale * x).collect());
            }
        }
    }
    Ok(out)
}

/// Runs all stages from `u0` (zero when absent) and certifies the result.
pub fn solve(problem: &ControlProblem, u0: Option<&PLFunction>, opts: &SolverOptions) -> Result<SolveResult> {
    problem.validate()?;
    if opts.sigmas.windows(2).any(|w| w[1] >= w[0]) || opts.sigmas.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::Domain("smoothing widths must be positive and decreasing".into()));
    }
    let grid = problem.grid.clone();
    let bounds = problem.bounds()?;
    let mut x = match u0 {
        Some(u) => u.sample_onto(&grid)?.values().to_vec(),
        None => vec![0.0; grid.len()],
    };
    project(&mut x, &bounds);
    let exact = |x: &[f64]| -> Result<f64> { Ok(objective_eval(problem, &problem.control(x.to_vec())?)?.j) };

    let mut trace = vec![TraceEntry { stage: "start".into(), j: exact(&x)? }];
    let mut stage_increases = Vec::new();

    for &sigma in &opts.sigmas {
        let stage = format!("sigma={sigma:e}");
        let before = exact(&x)?;
        let mut entries = Vec::new();
        x = lbfgs(
            |v| smoothed_objective(problem, v, sigma),
            x,
            &bounds,
            opts.max_iter,
            opts.memory,
            opts.grad_tol,
            |v| {
                entries.push(exact(v)?);
                Ok(())
            },
        )?;
        let after = exact(&x)?;
        if after > before {
            stage_increases.push(stage.clone());
        }
        trace.extend(entries.into_iter().map(|j| TraceEntry { stage: stage.clone(), j }));
    }

    // exact objective with hat derivatives; keep the best iterate seen
    {
        let mut best = (exact(&x)?, x.clone());
        let mut entries = Vec::new();
        let x_out = lbfgs(
            |v| {
                let e = objective_eval(problem, &problem.control(v.to_vec())?)?;
                Ok((e.j, hat_derivatives(&e)?))
            },
            x.clone(),
            &bounds,
            opts.exact_iter,
            opts.memory,
            opts.grad_tol,
            |v| {
                entries.push(exact(v)?);
                Ok(())
            },
        )?;
        let j_out = exact(&x_out)?;
        if j_out <= best.0 {
            best = (j_out, x_out);
        }
        x = best.1;
        trace.extend(entries.into_iter().map(|j| TraceEntry { stage: "exact".into(), j }));
    }

    if problem.is_terminal_only() && bounds.is_none() {
        for _ in 0..opts.polish_iter {
            let eval = objective_eval(problem, &problem.control(x.clone())?)?;
            let mut best: Option<(f64, Vec<f64>)> = None;
            for cand in polish_candidates(problem, &eval)? {
                // backtrack towards the current point if the model overshoots a kink
                let mut t = 1.0;
                for _ in 0..30 {
                    let trial: Vec<f64> = x.iter().zip(&cand).map(|(a, b)| a + t * (b - a)).collect();
                    let j = exact(&trial)?;
                    if j < eval.j {
                        if best.as_ref().map_or(true, |b| j < b.0) {
                            best = Some((j, trial));
                        }
                        break;
                    }
                    t *= 0.5;
                }
            }
            match best {
                Some((j, v)) if j < eval.j - 1e-15 * eval.j.abs() => {
                    x = v;
                    trace.push(TraceEntry { stage: "polish".into(), j });
                }
                _ => break,
            }
        }
    }

    let family = direction_family(&grid, 4 * opts.certify_random.max(16), opts.seed ^ DESCENT_STREAM);
    for _ in 0..opts.descent_iter {
        let u = problem.control(x.clone())?;
        let eval = objective_eval(problem, &u)?;
        let dirs = tangent_directions(problem, &u, &family)?;
        let rep = bouligand_residual(&eval, &dirs)?;
        let slope = rep.min_residual;
        if slope >= -DESCENT_TOL * (1.0 + eval.j.abs()) {
            break;
        }
        let h = dirs[rep.worst].values();
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial: Vec<f64> = x.iter().zip(h).map(|(a, b)| a + t * b).collect();
            project(&mut trial, &bounds);
            let j = exact(&trial)?;
            if j <= eval.j + 1e-4 * t * slope {
                accepted = Some((trial, j));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, j)) = accepted else { break };
        x = trial;
        trace.push(TraceEntry { stage: "descent".into(), j });
    }

    let u = problem.control(x)?;
    let eval = objective_eval(problem, &u)?;
    let dirs = tangent_directions(problem, &u, &direction_family(&grid, opts.certify_random, opts.seed))?;
    let bouligand = bouligand_residual(&eval, &dirs)?;
    let stationarity = match (opts.stationarity_tol, &bounds) {
        (Some(tol), None) => {
            let (adj, mu) = build_adjoint(&eval)?;
            let samples = StationaritySamples::standard(&eval, &dirs, 16, opts.seed)?;
            Some(check_strong_stationarity(&eval, &adj, &mu, &samples, tol)?)
        }
        _ => None,
    };
    Ok(SolveResult { j: eval.j, u, trace, stage_increases, bouligand, stationarity })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{Admissible, Objective};
    use crate::grid::{HysteresisConfig, TimeGrid};

    fn terminal_problem(y_target: f64) -> ControlProblem {
        let grid = TimeGrid::uniform(1.0, 40).unwrap();
        let obj = Objective { y_d: PLFunction::zero(&grid), y_target, w_track: 0.0, w_term: 10.0, nu: 0.05 };
        ControlProblem::new(HysteresisConfig::new(1.0, 0.0).unwrap(), grid, obj, Admissible::Unconstrained).unwrap()
    }

    #[test]
    fn smooth_clamp_limits() {
        let (v, d) = smooth_clamp(0.0, 1.0, 1e-3);
        assert!(v.abs() < 1e-12 && (d - 1.0).abs() < 1e-12);
        let (v, d) = smooth_clamp(5.0, 1.0, 1e-3);
        assert!((v - 1.0).abs() < 1e-12 && d.abs() < 1e-12);
        let (v, _) = smooth_clamp(-5.0, 1.0, 1e-3);
        assert!((v + 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_gradient_matches_differences() {
        let grid = TimeGrid::uniform(2.0, 15).unwrap();
        let obj = Objective {
            y_d: PLFunction::from_fn(&grid, |t| 0.8 * (2.0 * t).sin()),
            y_target: 0.3,
            w_track: 1.0,
            w_term: 2.0,
            nu: 0.1,
        };
        let p = ControlProblem::new(HysteresisConfig::new(0.7, 0.1).unwrap(), grid.clone(), obj, Admissible::Unconstrained)
            .unwrap();
        let u: Vec<f64> = grid.nodes().iter().map(|t| 1.5 * (3.0 * t).sin()).collect();
        let (_, g) = smoothed_objective(&p, &u, 0.05).unwrap();
        for k in [0, 4, 15] {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[k] += 1e-6;
            dn[k] -= 1e-6;
            let fd = (smoothed_objective(&p, &up, 0.05).unwrap().0 - smoothed_objective(&p, &dn, 0.05).unwrap().0) / 2e-6;
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + g[k].abs()), "k = {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn h1_solver_inverts_apply() {
        let grid = TimeGrid::new(vec![0.0, 0.3, 0.5, 1.2, 2.0]).unwrap();
        let x = vec![1.0, -2.0, 0.5, 3.0, 0.1];
        let b = h1_apply(&grid, &x);
        let back = h1_solve(&grid, &b);
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn interior_terminal_target_is_certified() {
        let p = terminal_problem(0.5);
        let res = solve(&p, None, &SolverOptions::default()).unwrap();
        assert!(res.bouligand.min_residual > -1e-8, "{:?}", res.bouligand);
        let st = res.stationarity.unwrap();
        assert!(st.pass, "{:?}", st.lines);
    }

    #[test]
    fn unreachable_terminal_target_pins_the_threshold() {
        let p = terminal_problem(1.5);
        let res = solve(&p, None, &SolverOptions::default()).unwrap();
        assert!(res.bouligand.min_residual > -1e-8, "{:?}", res.bouligand);
        assert!(res.stationarity.unwrap().pass);
    }

    #[test]
    fn box_is_respected() {
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let obj = Objective { y_d: PLFunction::constant(&grid, 0.9), y_target: 0.0, w_track: 1.0, w_term: 0.0, nu: 0.01 };
        let adm = Admissible::Box { lower: PLFunction::constant(&grid, -0.2), upper: PLFunction::constant(&grid, 0.3) };
        let p = ControlProblem::new(HysteresisConfig::new(1.0, 0.0).unwrap(), grid, obj, adm).unwrap();
        let res = solve(&p, None, &SolverOptions { sigmas: vec![1e-2], ..Default::default() }).unwrap();
        assert!(res.u.values().iter().all(|&v| (-0.2..=0.3).contains(&v)));
        assert!(res.stationarity.is_none());
        assert!(res.bouligand.min_residual > -1e-4, "{:?}", res.bouligand);
    }
}
