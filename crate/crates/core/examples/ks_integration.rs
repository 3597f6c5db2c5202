//! Stieltjes integrals of functions that jump at the same time.

use hysterix::grid::{GridRegulated, IntervalKind, TimeGrid};
use hysterix::ksint::{ks_integrate, ks_integrate_masked, partial_integration_check, refinement_sum_oracle};

fn main() -> hysterix::Result<()> {
    let grid = TimeGrid::new(vec![0.0, 0.5, 1.0, 2.0])?;
    // f jumps from 1 to 3 at t = 1, g jumps from 0 to 2 there
    let f = GridRegulated::new(grid.clone(), vec![0.0, 0.5, 1.0, 1.0], vec![0.0, 0.5, 2.0, 1.0], vec![0.0, 0.5, 3.0, 1.0])?;
    let g = GridRegulated::new(grid.clone(), vec![0.0, 0.0, 0.0, 2.0], vec![0.0, 0.0, 1.0, 2.0], vec![0.0, 0.0, 2.0, 2.0])?;

    let whole = ks_integrate(&f, &g, 0.0, 2.0)?;
    println!("int_0^2 f dg = {whole}  (f(1) times the jump of g)");
    for kind in [IntervalKind::Closed, IntervalKind::LeftOpen, IntervalKind::RightOpen, IntervalKind::Open] {
        println!("{kind:?} indicator of [0.5, 1]: {}", ks_integrate_masked(&f, &g, 0.5, 1.0, kind)?);
    }

    let smooth_f = GridRegulated::from_pl(&hysterix::grid::PLFunction::from_fn(&grid, |t| t * t));
    let smooth_g = GridRegulated::from_pl(&hysterix::grid::PLFunction::from_fn(&grid, |t| 1.0 - t));
    let exact = ks_integrate(&smooth_f, &smooth_g, 0.0, 2.0)?;
    for depth in [2, 6, 12] {
        let approx = refinement_sum_oracle(&smooth_f, &smooth_g, 0.0, 2.0, depth)?;
        println!("depth {depth:2}: tagged sum {approx:.12} vs closed form {exact:.12}");
    }
    // right-continuous integrator: value equals the right limit
    let step = GridRegulated::new(grid.clone(), vec![0.0, 0.0, 0.0, 2.0], vec![0.0, 0.0, 2.0, 2.0], vec![0.0, 0.0, 2.0, 2.0])?;
    let (lhs, rhs) = partial_integration_check(&step)?;
    println!("int g dg = {lhs}, (g(T)^2 - g(0)^2 + sum of squared jumps) / 2 = {rhs}");
    Ok(())
}
