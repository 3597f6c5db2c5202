//! Kurzweil-Stieltjes integrals `\int_a^b f dg` for grid functions.
//!
//! Both arguments are [`GridRegulated`], so jumps sit at nodes and each open
//! interval carries affine pieces. The closed form is then
//!
//! * open interval `(t_k, t_{k+1})`: `(f(t_k+) + f(t_{k+1}-)) / 2 * (g(t_{k+1}-) - g(t_k+))`,
//! * node `t`: `f(t) * (g(t+) - g(t-))`, with `g(a-) := g(a)` and `g(b+) := g(b)`.
//!
//! [`refinement_sum_oracle`] evaluates tagged Riemann-Stieltjes sums through
//! point evaluation only and serves as an independent check.

use crate::error::{Error, Result};
use crate::grid::{GridRegulated, Side, TimeGrid, TOL_EQ};

fn check_range(horizon: f64, a: f64, b: f64) -> Result<()> {
    if !(a < b) {
        return Err(Error::Domain(format!("integration range needs a < b, got [{a}, {b}]")));
    }
    if a < 0.0 || b > horizon * (1.0 + 1e-13) {
        return Err(Error::OutOfDomain { t: if a < 0.0 { a } else { b }, horizon });
    }
    Ok(())
}

/// Puts `f` and `g` on one grid containing `a` and `b` as nodes.
fn align(f: &GridRegulated, g: &GridRegulated, a: f64, b: f64) -> Result<(GridRegulated, GridRegulated)> {
    let grid = f.grid().merge(g.grid())?.with_points(&[a, b]);
    Ok((f.resample(&grid)?, g.resample(&grid)?))
}

/// Closed-form `\int_a^b f dg`.
pub fn ks_integrate(f: &GridRegulated, g: &GridRegulated, a: f64, b: f64) -> Result<f64> {
    check_range(f.horizon(), a, b)?;
    let (f, g) = align(f, g, a, b)?;
    let grid = f.grid();
    let ka = grid.index_of(a).expect("a is a node after alignment");
    let kb = grid.index_of(b).expect("b is a node after alignment");
    Ok(integrate_nodes(&f, &g, ka, kb))
}

/// `\int_{t_ka}^{t_kb} f dg` for two functions already on the same grid.
pub(crate) fn integrate_nodes(f: &GridRegulated, g: &GridRegulated, ka: usize, kb: usize) -> f64 {
    let (fl, fv, fr) = (f.left(), f.value(), f.right());
    let (gl, gv, gr) = (g.left(), g.value(), g.right());
    let mut sum = 0.0;
    for k in ka..=kb {
        let g_minus = if k == ka { gv[k] } else { gl[k] };
        let g_plus = if k == kb { gv[k] } else { gr[k] };
        sum += fv[k] * (g_plus - g_minus);
        if k < kb {
            sum += 0.5 * (fr[k] + fl[k + 1]) * (gl[k + 1] - gr[k]);
        }
    }
    sum
}

/// Tagged Riemann-Stieltjes sums built from point evaluations of `f` and `g`.
///
/// Every node `t` of the merged grid gets a band `[t - e, t + e]` tagged at
/// `t`, where `e = h_min * 2^(-3 depth)`. Gaps between bands are cut into
/// `2^min(depth, 8)` pieces tagged at their midpoints.
pub fn refinement_sum_oracle(f: &GridRegulated, g: &GridRegulated, a: f64, b: f64, depth: u32) -> Result<f64> {
    if depth == 0 {
        return Err(Error::Domain("oracle depth must be at least 1".into()));
    }
    check_range(f.horizon(), a, b)?;
    let grid = f.grid().merge(g.grid())?.with_points(&[a, b]);
    let nodes: Vec<f64> = grid.nodes().iter().copied().filter(|&t| t >= a && t <= b).collect();
    let eps = grid.min_width() * 2f64.powi(-3 * depth as i32);
    let pieces = 1usize << depth.min(8);

    let fv = |t: f64| f.eval(t, Side::Value);
    let gv = |t: f64| g.eval(t, Side::Value);

    let mut sum = 0.0;
    for (idx, &t) in nodes.iter().enumerate() {
        let lo = if idx == 0 { t } else { t - eps };
        let hi = if idx + 1 == nodes.len() { t } else { t + eps };
        sum += fv(t)? * (gv(hi)? - gv(lo)?);
        if idx + 1 < nodes.len() {
            let start = hi;
            let end = nodes[idx + 1] - eps;
            let step = (end - start) / pieces as f64;
            for m in 0..pieces {
                let x0 = start + step * m as f64;
                let x1 = if m + 1 == pieces { end } else { x0 + step };
                sum += fv(0.5 * (x0 + x1))? * (gv(x1)? - gv(x0)?);
            }
        }
    }
    Ok(sum)
}

/// Both sides of `\int g dg = (g(T)^2 - g(0)^2)/2 + sum_t (g(t) - g(t-))^2 / 2` on `[0, T]`.
pub fn partial_integration_check(g: &GridRegulated) -> Result<(f64, f64)> {
    if !g.is_right_continuous(TOL_EQ) {
        return Err(Error::Precondition("partial integration needs a right-continuous integrator".into()));
    }
    let n = g.grid().len();
    let lhs = integrate_nodes(g, g, 0, n - 1);
    let (gl, gv) = (g.left(), g.value());
    let jumps: f64 = (0..n).map(|k| (gv[k] - gl[k]).powi(2)).sum();
    let rhs = 0.5 * (gv[n - 1].powi(2) - gv[0].powi(2)) + 0.5 * jumps;
    Ok((lhs, rhs))
}

/// `max |\int_0^T f dg|` over `family`, for `g` vanishing off finitely many nodes and at both ends.
pub fn countable_support_vanishing_check(g: &GridRegulated, family: &[GridRegulated]) -> Result<f64> {
    let n = g.grid().len();
    let off_support = g.left().iter().chain(g.right()).all(|v| v.abs() <= TOL_EQ);
    if !off_support || g.value()[0].abs() > TOL_EQ || g.value()[n - 1].abs() > TOL_EQ {
        return Err(Error::Precondition(
            "integrator must vanish at both ends and away from finitely many nodes".into(),
        ));
    }
    let horizon = g.horizon();
    family.iter().try_fold(0.0f64, |worst, f| Ok(worst.max(ks_integrate(f, g, 0.0, horizon)?.abs())))
}

/// `\int_a^b 1_J f dg` for `J` between nodes `s < tau` of the merged grid.
pub fn ks_integrate_masked(
    f: &GridRegulated,
    g: &GridRegulated,
    s: f64,
    tau: f64,
    kind: crate::grid::IntervalKind,
) -> Result<f64> {
    let grid: TimeGrid = f.grid().merge(g.grid())?.with_points(&[s, tau]);
    let f = f.resample(&grid)?;
    let g = g.resample(&grid)?;
    let ks = grid.index_of(s).expect("s is a node");
    let kt = grid.index_of(tau).expect("tau is a node");
    let masked = f.masked(ks, kt, kind)?;
    Ok(integrate_nodes(&masked, &g, 0, grid.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{IntervalKind, PLFunction};
    use approx::assert_abs_diff_eq;

    fn grid() -> TimeGrid {
        TimeGrid::new(vec![0.0, 0.3, 0.5, 1.0]).unwrap()
    }

    fn sample_g() -> GridRegulated {
        GridRegulated::new(grid(), vec![0.0, 0.4, -1.0, 2.0], vec![0.2, 0.7, 0.5, 1.5], vec![0.1, 0.9, 0.6, 0.0])
            .unwrap()
    }

    #[test]
    fn constant_integrand() {
        let g = sample_g();
        let c = GridRegulated::constant(g.grid(), 2.5);
        let v = ks_integrate(&c, &g, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, 2.5 * (1.5 - 0.2), epsilon = 1e-14);
        let v = ks_integrate(&c, &g, 0.3, 1.0).unwrap();
        assert_abs_diff_eq!(v, 2.5 * (1.5 - 0.7), epsilon = 1e-14);
    }

    #[test]
    fn single_point_mass() {
        let g = sample_g();
        let ind = GridRegulated::node_indicator(g.grid(), 2);
        let v = ks_integrate(&ind, &g, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.6 - (-1.0), epsilon = 1e-14);
        // endpoint conventions: at b the right limit is g(b)
        let v = ks_integrate(&ind, &g, 0.0, 0.5).unwrap();
        assert_abs_diff_eq!(v, 0.5 - (-1.0), epsilon = 1e-14);
        let v = ks_integrate(&ind, &g, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(v, 0.6 - 0.5, epsilon = 1e-14);
    }

    #[test]
    fn step_against_itself() {
        let step = GridRegulated::step_from(&grid(), 2);
        assert_abs_diff_eq!(ks_integrate(&step, &step, 0.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        let (l, r) = partial_integration_check(&step).unwrap();
        assert_abs_diff_eq!(l, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r, 1.0, epsilon = 1e-15);
        for depth in 1..=4 {
            let o = refinement_sum_oracle(&step, &step, 0.0, 1.0, depth).unwrap();
            assert_abs_diff_eq!(o, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn pl_pair_matches_riemann_stieltjes() {
        let g = TimeGrid::uniform(1.0, 5).unwrap();
        let f = PLFunction::from_fn(&g, |t| t * t);
        let h = PLFunction::from_fn(&g, |t| 3.0 * t);
        let v = ks_integrate(&GridRegulated::from_pl(&f), &GridRegulated::from_pl(&h), 0.0, 1.0).unwrap();
        // 3 * trapezoid integral of the PL interpolant of t^2
        assert_abs_diff_eq!(v, 3.0 * f.integral(), epsilon = 1e-14);
    }

    #[test]
    fn non_node_limits_are_inserted() {
        let g = sample_g();
        let f = GridRegulated::constant(g.grid(), 1.0);
        let whole = ks_integrate(&f, &g, 0.0, 1.0).unwrap();
        let split = ks_integrate(&f, &g, 0.0, 0.77).unwrap() + ks_integrate(&f, &g, 0.77, 1.0).unwrap();
        assert_abs_diff_eq!(whole, split, epsilon = 1e-14);
    }

    #[test]
    fn errors() {
        let g = sample_g();
        assert!(ks_integrate(&g, &g, 0.5, 0.5).is_err());
        assert!(ks_integrate(&g, &g, 0.0, 1.5).is_err());
        assert!(partial_integration_check(&g).is_err());
        assert!(countable_support_vanishing_check(&g, &[]).is_err());
    }

    #[test]
    fn vanishing_support() {
        let grid = grid();
        let mut g = GridRegulated::node_indicator(&grid, 1);
        g = g.add(&GridRegulated::node_indicator(&grid, 2).scale(-3.0)).unwrap();
        let fam = vec![sample_g(), GridRegulated::constant(&grid, 1.0)];
        assert!(countable_support_vanishing_check(&g, &fam).unwrap() <= 1e-15);
    }

    #[test]
    fn masked_open_interval_with_continuous_integrator() {
        let grid = grid();
        let f = GridRegulated::constant(&grid, 1.0);
        let g = GridRegulated::from_pl(&PLFunction::from_fn(&grid, |t| t));
        for kind in [IntervalKind::Closed, IntervalKind::Open, IntervalKind::LeftOpen, IntervalKind::RightOpen] {
            let v = ks_integrate_masked(&f, &g, 0.3, 1.0, kind).unwrap();
            assert_abs_diff_eq!(v, 0.7, epsilon = 1e-14);
        }
    }
}
