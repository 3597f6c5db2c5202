//! Directional derivative of the stop operator against difference quotients.

use hysterix::grid::{HysteresisConfig, PLFunction, TimeGrid};
use hysterix::sensitivity::{compare_with_fd, dirdiff_vi};

fn main() -> hysterix::Result<()> {
    let grid = TimeGrid::uniform(2.0, 200)?;
    let u = PLFunction::from_fn(&grid, |t| 1.5 * (std::f64::consts::PI * t).sin());
    let h = PLFunction::from_fn(&grid, |t| (3.0 * t).cos());
    let cfg = HysteresisConfig::new(1.0, 0.0)?;

    let res = dirdiff_vi(&u, &h, &cfg)?;
    let fd = compare_with_fd(&res, &u, &cfg, 1e-6)?;
    println!("max |fd - eta| = {:.3e} over {} stable nodes ({} skipped)", fd.max_deviation, fd.checked, fd.skipped);

    for k in res.jump_nodes() {
        let t = res.grid().node(k);
        println!("jump at t = {t:.4}: eta(t-) = {:+.5}, eta(t) = {:+.5}", res.eta.left()[k], res.eta.value()[k]);
    }
    println!("var eta = {:.4} <= 2 var h = {:.4}", res.eta.total_variation(), 2.0 * h.total_variation());
    Ok(())
}
