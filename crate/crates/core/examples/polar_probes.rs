//! Probe directions whose derivatives vanish away from a short window.

use hysterix::grid::{HysteresisConfig, PLFunction, TimeGrid};
use hysterix::stationarity::{polar_probe, CriticalContext};

fn main() -> hysterix::Result<()> {
    let grid = TimeGrid::uniform(2.0, 80)?;
    // rise, hold, fall, hold
    let u = PLFunction::from_fn(&grid, |t| match t {
        t if t <= 0.5 => 3.0 * t,
        t if t <= 1.0 => 1.5,
        t if t <= 1.5 => 1.5 - 6.0 * (t - 1.0),
        _ => -1.5,
    });
    let ctx = CriticalContext::new(&u, &HysteresisConfig::new(0.5, 0.0)?)?;

    for t in [0.4, 0.75, 1.75] {
        let k = ctx.grid().index_of(t).expect("grid node");
        let cone = ctx.cones.nodes[k];
        let polar = cone.polar();
        let c = if polar.project(1.0) != 0.0 { polar.project(1.0) } else { polar.project(-1.0) };
        println!("t = {t}: {:?}, cone {cone:?}, weight {c}", ctx.regimes.node(k));
        for i in [4, 16, 64] {
            let probe = polar_probe(&ctx, t, c, i)?;
            println!("    i = {i:2}: max |eta| outside (t - 1/i, t) = {:.2e}", probe.max_outside);
        }
    }
    Ok(())
}
