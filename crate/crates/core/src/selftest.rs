//! Randomized identity suites for the integral and the stop operator.
//!
//! Each suite draws its instances from a seeded generator and reports the
//! worst error per identity, so the same seed always yields the same report.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grid::{GridRegulated, HysteresisConfig, IntervalKind, PLFunction, Side, TimeGrid};
use crate::hysteresis::{stop, vi_residual};
use crate::instances::{random_grid, random_pl, random_regulated, random_right_continuous, random_walk, rng};
use crate::ksint::{
    countable_support_vanishing_check, ks_integrate, ks_integrate_masked, partial_integration_check,
    refinement_sum_oracle,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub instances: usize,
    pub max_error: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub checks: Vec<IdentityCheck>,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Tally {
    name: &'static str,
    tol: f64,
    instances: usize,
    max_error: f64,
}

impl Tally {
    fn new(name: &'static str, tol: f64) -> Self {
        Tally { name, tol, instances: 0, max_error: 0.0 }
    }

    fn record(&mut self, err: f64) {
        self.instances += 1;
        // NaN must fail
        self.max_error = if err.is_nan() { f64::NAN } else { self.max_error.max(err) };
    }

    fn finish(self) -> IdentityCheck {
        IdentityCheck {
            name: self.name.into(),
            instances: self.instances,
            max_error: self.max_error,
            tol: self.tol,
            pass: self.max_error <= self.tol,
        }
    }
}

/// Draws two distinct node indices `ka < kb`.
fn node_pair<R: Rng>(rng: &mut R, n: usize) -> (usize, usize) {
    let ka = rng.random_range(0..n - 1);
    let kb = rng.random_range(ka + 1..n);
    (ka, kb)
}

/// Constants rule, point mass, additivity, subintervals, countable support,
/// partial integration, and the refinement-sum oracle at `depth`.
pub fn ks_identity_suite(instances: usize, seed: u64, depth: u32) -> Result<SuiteReport> {
    let mut rng = rng(seed);
    let mut constants = Tally::new("constants", 1e-10);
    let mut point_mass = Tally::new("single_point_mass", 1e-10);
    let mut additivity = Tally::new("interval_additivity", 1e-10);
    let mut subintervals = Tally::new("subinterval_indicator", 1e-10);
    let mut vanishing = Tally::new("countable_support_vanishing", 1e-10);
    let mut partial = Tally::new("partial_integration", 1e-10);
    let mut oracle = Tally::new("refinement_sum_oracle", 1e-8);

    for _ in 0..instances {
        let horizon = rng.random_range(0.5..3.0);
        let n = rng.random_range(4..24);
        let grid = random_grid(&mut rng, horizon, n);
        let f = random_regulated(&mut rng, &grid, 1.0);
        let g = random_regulated(&mut rng, &grid, 1.0);
        let (ka, kb) = node_pair(&mut rng, grid.len());
        let (a, b) = (grid.node(ka), grid.node(kb));

        let c = rng.random_range(-2.0..2.0);
        let int_c = ks_integrate(&GridRegulated::constant(&grid, c), &g, a, b)?;
        let dg = g.eval(b, Side::Value)? - g.eval(a, Side::Value)?;
        let int_dc = ks_integrate(&f, &GridRegulated::constant(&grid, c), a, b)?;
        constants.record((int_c - c * dg).abs().max(int_dc.abs()));

        let k = rng.random_range(ka..=kb);
        let mass = ks_integrate(&GridRegulated::node_indicator(&grid, k), &g, a, b)?;
        let plus = if k == kb { g.value()[k] } else { g.right()[k] };
        let minus = if k == ka { g.value()[k] } else { g.left()[k] };
        point_mass.record((mass - (plus - minus)).abs());

        let mid = rng.random_range(a..b);
        let whole = ks_integrate(&f, &g, a, b)?;
        let split = ks_integrate(&f, &g, a, mid)? + ks_integrate(&f, &g, mid, b)?;
        additivity.record((whole - split).abs());

        let g_rc = random_right_continuous(&mut rng, &grid, 1.0, 0.4);
        let lhs = ks_integrate(&f, &g_rc, a, b)?;
        let rhs = ks_integrate_masked(&f, &g_rc, a, b, IntervalKind::LeftOpen)?;
        let mut sub_err = (lhs - rhs).abs();
        let g_cont = GridRegulated::from_pl(&random_pl(&mut rng, &grid, 1.0));
        let lhs = ks_integrate(&f, &g_cont, a, b)?;
        for kind in [IntervalKind::Closed, IntervalKind::LeftOpen, IntervalKind::RightOpen, IntervalKind::Open] {
            sub_err = sub_err.max((lhs - ks_integrate_masked(&f, &g_cont, a, b, kind)?).abs());
        }
        subintervals.record(sub_err);

        let mut spikes = vec![0.0; grid.len()];
        for v in spikes.iter_mut().take(grid.len() - 1).skip(1) {
            if rng.random_bool(0.5) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let spiky = GridRegulated::new(grid.clone(), vec![0.0; grid.len()], spikes, vec![0.0; grid.len()])?;
        let family: Vec<GridRegulated> = (0..4).map(|_| random_regulated(&mut rng, &grid, 1.0)).collect();
        vanishing.record(countable_support_vanishing_check(&spiky, &family)?);

        let (l, r) = partial_integration_check(&g_rc)?;
        partial.record((l - r).abs());

        let fo = GridRegulated::from_pl(&random_pl(&mut rng, &grid, 1.0));
        let go = GridRegulated::from_pl(&random_pl(&mut rng, &grid, 1.0));
        let exact = ks_integrate(&fo, &go, 0.0, horizon)?;
        let approx = refinement_sum_oracle(&fo, &go, 0.0, horizon, depth)?;
        oracle.record((exact - approx).abs());
    }

    Ok(SuiteReport {
        suite: "ks_identities".into(),
        seed,
        checks: [constants, point_mass, additivity, subintervals, vanishing, partial, oracle]
            .into_iter()
            .map(Tally::finish)
            .collect(),
    })
}

/// The sine example, the Lipschitz bound, the comparison principle and the VI residual.
pub fn stop_property_suite(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut rng = rng(seed);

    let mut sine = Tally::new("sine_passthrough", 1e-12);
    let grid = TimeGrid::uniform(std::f64::consts::FRAC_PI_2, 200)?;
    let u = PLFunction::from_fn(&grid, f64::sin);
    let sol = stop(&u, &HysteresisConfig::new(1.0, 0.0)?)?;
    sine.record(sol.y.max_abs_diff(&sol.u)?);

    let mut lipschitz = Tally::new("lipschitz_bound", 1e-12);
    let mut comparison = Tally::new("comparison_principle", 1e-12);
    let mut vi = Tally::new("vi_residual_nonnegative", 1e-10);
    for _ in 0..instances {
        let r = rng.random_range(0.2..1.5);
        let cfg = HysteresisConfig::new(r, rng.random_range(-r..=r))?;
        let (horizon, n) = (rng.random_range(0.5..3.0), rng.random_range(5..60));
        let grid = random_grid(&mut rng, horizon, n);
        let u1 = random_walk(&mut rng, &grid, 0.0, 0.8);
        let u2 = random_walk(&mut rng, &grid, 0.0, 0.8);
        let s1 = stop(&u1, &cfg)?;
        let s2 = stop(&u2, &cfg)?;
        let common = s1.grid().merge(s2.grid())?;
        let gap = s1.y.resample(&common)?.max_abs_diff(&s2.y.resample(&common)?)?;
        lipschitz.record((gap - 2.0 * u1.max_abs_diff(&u2)?).max(0.0));

        // u2 - u1 nondecreasing
        let mut acc = 0.0;
        let incr: Vec<f64> = (0..grid.len())
            .map(|k| {
                if k > 0 {
                    acc += rng.random_range(0.0..0.5);
                }
                acc
            })
            .collect();
        let up = u1.add(&PLFunction::new(grid.clone(), incr)?)?;
        let s_up = stop(&up, &cfg)?;
        let common = s1.grid().merge(s_up.grid())?;
        let lo = s1.y.resample(&common)?;
        let hi = s_up.y.resample(&common)?;
        let worst = lo.values().iter().zip(hi.values()).fold(0.0f64, |m, (a, b)| m.max(a - b));
        comparison.record(worst);

        let tests: Vec<GridRegulated> =
            (0..20).map(|_| random_regulated(&mut rng, s1.grid(), 1.0).scale(r)).collect();
        let t = s1.grid().horizon();
        vi.record((-vi_residual(&s1, &tests, 0.0, t)?).max(0.0));
    }

    Ok(SuiteReport {
        suite: "stop_properties".into(),
        seed,
        checks: [sine, lipschitz, comparison, vi].into_iter().map(Tally::finish).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suites_pass_and_repeat() {
        let a = ks_identity_suite(20, 3, 10).unwrap();
        assert!(a.pass(), "{a:?}");
        assert_eq!(a, ks_identity_suite(20, 3, 10).unwrap());
        let s = stop_property_suite(20, 3).unwrap();
        assert!(s.pass(), "{s:?}");
    }
}
