//! Critical cones, radial directions, polyhedric approximation and the
//! strong-stationarity checker.

mod adjoint;
mod bouligand;
mod polyhedric;
mod probes;

pub use adjoint::{
    build_adjoint, check_strong_stationarity, AdjointState, LineResult, Multiplier, QFormCheck, StationarityReport,
    StationaritySamples,
};
pub use bouligand::{bouligand_residual, direction_family, tangent_directions, BouligandReport};
pub use polyhedric::{polyhedric_approx, ConvergenceCheck, CoverElement, PolyhedricApprox};
pub use probes::{polar_probe, PolarProbe};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridRegulated, HysteresisConfig, PLFunction, TimeGrid};
use crate::hysteresis::{classify_regimes, stop, Regimes, StopSolution};
use crate::ksint;
use crate::sensitivity::{Cone, ConeSpec};

/// State, regimes and cones at a fixed control.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalContext {
    pub sol: StopSolution,
    pub regimes: Regimes,
    pub cones: ConeSpec,
}

impl CriticalContext {
    pub fn new(u: &PLFunction, cfg: &HysteresisConfig) -> Result<Self> {
        Ok(Self::from_solution(stop(u, cfg)?))
    }

    pub fn from_solution(sol: StopSolution) -> Self {
        let regimes = classify_regimes(&sol);
        Self::with_regimes(sol, regimes)
    }

    pub fn with_regimes(sol: StopSolution, regimes: Regimes) -> Self {
        let cones = ConeSpec::from_regimes(sol.grid(), &regimes);
        CriticalContext { sol, regimes, cones }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.sol.grid()
    }

    pub fn r(&self) -> f64 {
        self.sol.cfg.r
    }

    /// Cones of the radial set `{z : y + a z in [-r, r] for small a}`: sign
    /// constraints wherever `y` touches a threshold, nothing else.
    pub fn radial_cones(&self) -> ConeSpec {
        let y = self.sol.y.values();
        let tol = self.regimes.tol_act;
        let r = self.r();
        let at = |v: f64| {
            if v >= r - tol {
                Cone::NonPos
            } else if v <= -r + tol {
                Cone::NonNeg
            } else {
                Cone::Free
            }
        };
        let nodes: Vec<Cone> = y.iter().map(|&v| at(v)).collect();
        let intervals = (0..y.len() - 1)
            .map(|k| if nodes[k] == nodes[k + 1] { nodes[k] } else { Cone::Free })
            .collect();
        ConeSpec { grid: self.grid().clone(), nodes, intervals }
    }
}

/// Why a function fails a membership test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub value: f64,
    pub reason: String,
}

/// Outcome of [`reduced_cone_membership`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipReport {
    pub member: bool,
    pub violation: Option<Violation>,
    /// `\int_0^T z d(y - u)`.
    pub orthogonality: f64,
    /// Largest `|\int z d(y - u)|` over a single interval of the merged grid.
    pub max_interval_integral: f64,
}

fn structural_violation(z: &GridRegulated, tol: f64) -> Option<Violation> {
    let grid = z.grid();
    if !z.is_right_continuous(tol) {
        let k = (0..grid.len()).find(|&k| (z.value()[k] - z.right()[k]).abs() > tol).unwrap();
        return Some(Violation { t: grid.node(k), value: z.right()[k], reason: "not right-continuous".into() });
    }
    if z.value()[0].abs() > tol {
        return Some(Violation { t: 0.0, value: z.value()[0], reason: "z(0) != 0".into() });
    }
    for k in 1..grid.len() {
        if (z.left()[k] - z.value()[k]).abs() > tol && z.value()[k].abs() > tol {
            return Some(Violation {
                t: grid.node(k),
                value: z.value()[k],
                reason: "jumps to a nonzero value".into(),
            });
        }
    }
    None
}

fn interval_integrals(z: &GridRegulated, w: &PLFunction) -> Result<(f64, f64)> {
    let grid = z.grid().merge(w.grid())?;
    let z = z.resample(&grid)?;
    let w = w.resample(&grid)?;
    let wv = w.values();
    let mut total = 0.0;
    let mut worst: f64 = 0.0;
    for k in 0..grid.intervals() {
        let piece = 0.5 * (z.right()[k] + z.left()[k + 1]) * (wv[k + 1] - wv[k]);
        total += piece;
        worst = worst.max(piece.abs());
    }
    Ok((total, worst))
}

fn tolerance(z: &GridRegulated) -> f64 {
    1e-10 * z.sup_norm().max(1.0)
}

/// Tests `z` for membership in the reduced critical cone at the solution.
///
/// `z` must be right-continuous, vanish at 0, lie pointwise in the critical
/// cone and vanish wherever it jumps.
pub fn reduced_cone_membership(ctx: &CriticalContext, z: &GridRegulated) -> Result<MembershipReport> {
    let tol = tolerance(z);
    let mut violation = structural_violation(z, tol);
    if violation.is_none() {
        if let Some((t, value)) = ctx.cones.violation(z, tol)? {
            violation = Some(Violation { t, value, reason: "leaves the critical cone".into() });
        }
    }
    let wz = GridRegulated::from_pl(&ctx.sol.w);
    let orthogonality = ksint::ks_integrate(z, &wz, 0.0, ctx.sol.grid().horizon())?;
    let (_, max_interval_integral) = interval_integrals(z, &ctx.sol.w)?;
    Ok(MembershipReport { member: violation.is_none(), violation, orthogonality, max_interval_integral })
}

/// Both sides of the characterisation of criticality for right-continuous `z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalityEquivalence {
    /// Pointwise membership in the critical cones.
    pub pointwise: bool,
    /// Radial sign conditions plus vanishing `\int z d(y - u)` on every interval.
    pub radial_and_orthogonal: bool,
}

pub fn criticality_equivalence(ctx: &CriticalContext, z: &GridRegulated) -> Result<CriticalityEquivalence> {
    let tol = tolerance(z);
    let structural = structural_violation(z, tol).is_none();
    let pointwise = structural && ctx.cones.violation(z, tol)?.is_none();
    let radial = ctx.radial_cones().violation(z, tol)?.is_none();
    let scale = tol * (1.0 + ctx.sol.w.total_variation());
    let (_, worst) = interval_integrals(z, &ctx.sol.w)?;
    Ok(CriticalityEquivalence { pointwise, radial_and_orthogonal: structural && radial && worst <= scale })
}

/// Largest admissible step of a radial direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialReport {
    /// Step `a` with `S(u + s z) = S(u) + s z` for `s in [0, a]`, if any.
    pub alpha: Option<f64>,
    pub reason: Option<String>,
    /// `max |S(u + a z) - (y + a z)|` over nodes, recomputed with [`stop`].
    pub stop_deviation: Option<f64>,
}

impl RadialReport {
    fn absent(reason: impl Into<String>) -> Self {
        RadialReport { alpha: None, reason: Some(reason.into()), stop_deviation: None }
    }
}

/// Largest step `alpha <= alpha_max` for which `y + alpha z` stays in `[-r, r]`
/// at every node, given that `z` is critical on the merged grid.
pub fn radial_membership(ctx: &CriticalContext, z: &PLFunction, alpha_max: f64) -> Result<RadialReport> {
    if !(alpha_max > 0.0) {
        return Err(Error::Domain("alpha_max must be positive".into()));
    }
    let zr = GridRegulated::from_pl(z);
    let tol = tolerance(&zr);
    if z.value(0).abs() > tol {
        return Ok(RadialReport::absent("z(0) != 0"));
    }
    if let Some((t, v)) = ctx.cones.violation(&zr, tol)? {
        return Ok(RadialReport::absent(format!("value {v:.3e} at t = {t:.6} leaves the critical cone")));
    }
    let grid = ctx.grid().merge(z.grid())?;
    let y = ctx.sol.y.resample(&grid)?;
    let zg = z.resample(&grid)?;
    let r = ctx.r();
    let mut alpha = alpha_max;
    for (yv, zv) in y.values().iter().zip(zg.values()) {
        if *zv > tol {
            alpha = alpha.min((r - yv) / zv);
        } else if *zv < -tol {
            alpha = alpha.min((r + yv) / (-zv));
        }
    }
    if !(alpha > 0.0) {
        return Ok(RadialReport::absent("no positive step keeps y + alpha z inside [-r, r]"));
    }
    let u = ctx.sol.u.resample(&grid)?;
    let moved = stop(&u.combine(1.0, &zg, alpha)?, &ctx.sol.cfg)?;
    let expect = y.combine(1.0, &zg, alpha)?;
    let dev = expect
        .grid()
        .nodes()
        .iter()
        .zip(expect.values())
        .map(|(&t, &v)| Ok((moved.y.eval(t)? - v).abs()))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(RadialReport { alpha: Some(alpha), reason: None, stop_deviation: Some(dev) })
}

/// Verdict of a radial test repeated under grid refinement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "alpha", rename_all = "snake_case")]
pub enum RadialVerdict {
    /// The step stabilises at this value.
    Present(f64),
    /// The step shrinks with the mesh, or a grid rejects `z` outright.
    Absent,
    Undetermined,
}

/// Steps found on each grid of the refinement sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinedRadial {
    pub steps: Vec<(usize, Option<f64>)>,
    pub verdict: RadialVerdict,
}

/// Samples `u` and `z` on uniform grids with `ns` intervals and decides
/// whether the admissible radial step survives refinement.
pub fn radial_membership_refined(
    u: impl Fn(f64) -> f64,
    z: impl Fn(f64) -> f64,
    cfg: &HysteresisConfig,
    horizon: f64,
    ns: &[usize],
    alpha_max: f64,
) -> Result<RefinedRadial> {
    if ns.len() < 2 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("need at least two increasing grid sizes".into()));
    }
    let mut steps = Vec::with_capacity(ns.len());
    for &n in ns {
        let grid = TimeGrid::uniform(horizon, n)?;
        let ctx = CriticalContext::new(&PLFunction::from_fn(&grid, &u), cfg)?;
        let rep = radial_membership(&ctx, &PLFunction::from_fn(&grid, &z), alpha_max)?;
        steps.push((n, rep.alpha));
    }
    let alphas: Option<Vec<f64>> = steps.iter().map(|s| s.1).collect();
    let verdict = match alphas {
        None => RadialVerdict::Absent,
        Some(a) => {
            let shrinking = a.windows(2).all(|w| w[1] <= 0.75 * w[0]);
            let last = a[a.len() - 1];
            let prev = a[a.len() - 2];
            if shrinking {
                RadialVerdict::Absent
            } else if (last - prev).abs() <= 1e-2 * prev.abs() {
                RadialVerdict::Present(a.iter().copied().fold(f64::INFINITY, f64::min))
            } else {
                RadialVerdict::Undetermined
            }
        }
    };
    Ok(RefinedRadial { steps, verdict })
}

/// Distance from `x` to a cone.
pub(crate) fn cone_distance(c: Cone, x: f64) -> f64 {
    (x - c.project(x)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensitivity::dirdiff_vi;
    use std::f64::consts::FRAC_PI_2;

    fn cfg() -> HysteresisConfig {
        HysteresisConfig::new(1.0, 0.0).unwrap()
    }

    #[test]
    fn derivative_is_in_reduced_cone() {
        let grid = TimeGrid::uniform(4.0, 40).unwrap();
        let u = PLFunction::from_fn(&grid, |t| 1.6 * (2.0 * t).sin());
        let h = PLFunction::from_fn(&grid, |t| (3.0 * t).cos() - 1.0);
        let res = dirdiff_vi(&u, &h, &cfg()).unwrap();
        assert!(!res.jump_nodes().is_empty());
        let ctx = CriticalContext::with_regimes(res.sol.clone(), res.regimes.clone());
        let rep = reduced_cone_membership(&ctx, &res.eta).unwrap();
        assert!(rep.member, "{:?}", rep.violation);
        assert!(rep.orthogonality.abs() < 1e-12);
        let eq = criticality_equivalence(&ctx, &res.eta).unwrap();
        assert!(eq.pointwise && eq.radial_and_orthogonal);
    }

    #[test]
    fn nonzero_jump_is_rejected() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let ctx = CriticalContext::new(&PLFunction::zero(&grid), &cfg()).unwrap();
        let z = GridRegulated::step_from(&grid, 2);
        let rep = reduced_cone_membership(&ctx, &z).unwrap();
        assert!(!rep.member);
        assert_eq!(rep.violation.unwrap().reason, "jumps to a nonzero value");
    }

    #[test]
    fn strictly_active_stretch_forbids_mass() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let u = PLFunction::from_fn(&grid, |t| 2.0 * t);
        let ctx = CriticalContext::new(&u, &cfg()).unwrap();
        // tent at the strictly active node 3
        let mut v = vec![0.0; 5];
        v[3] = -1.0;
        let z = GridRegulated::from_pl(&PLFunction::new(grid.clone(), v).unwrap());
        let eq = criticality_equivalence(&ctx, &z).unwrap();
        assert!(!eq.pointwise && !eq.radial_and_orthogonal);
    }

    #[test]
    fn radial_step_inside_band() {
        let grid = TimeGrid::uniform(2.0, 20).unwrap();
        let u = PLFunction::from_fn(&grid, |t| 0.5 * (3.0 * t).sin());
        let ctx = CriticalContext::new(&u, &cfg()).unwrap();
        let z = PLFunction::from_fn(&grid, |t| 0.5 * (t * (2.0 - t)));
        let rep = radial_membership(&ctx, &z, 1.0).unwrap();
        assert_eq!(rep.alpha, Some(1.0));
        assert!(rep.stop_deviation.unwrap() < 1e-14);
    }

    #[test]
    fn sine_direction_is_not_radial_in_the_limit() {
        let r = radial_membership_refined(f64::sin, |t| (2.0 * t).sin(), &cfg(), FRAC_PI_2, &[64, 128, 256, 512], 1.0)
            .unwrap();
        assert_eq!(r.verdict, RadialVerdict::Absent, "{:?}", r.steps);
        let a0 = r.steps[0].1.unwrap();
        assert!((a0 - FRAC_PI_2 / 64.0 / 4.0).abs() < 1e-2 * a0);
    }
}
