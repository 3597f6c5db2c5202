//! Stop and play outputs for a decaying oscillation.

use hysterix::grid::{HysteresisConfig, PLFunction, TimeGrid};
use hysterix::hysteresis::{classify_regimes, play, stop};

fn main() -> hysterix::Result<()> {
    let grid = TimeGrid::uniform(4.0, 40)?;
    let u = PLFunction::from_fn(&grid, |t| 2.0 * (-0.3 * t).exp() * (3.0 * t).sin());
    let cfg = HysteresisConfig::new(0.5, 0.0)?;
    let sol = stop(&u, &cfg)?;
    let p = play(&u, &cfg)?;
    let regimes = classify_regimes(&sol);

    println!("{:>8} {:>9} {:>9} {:>9}  regime", "t", "u", "y", "play");
    for (k, &t) in sol.grid().nodes().iter().enumerate() {
        println!(
            "{t:8.4} {:9.5} {:9.5} {:9.5}  {:?}",
            sol.u.value(k),
            sol.y.value(k),
            p.value(k),
            regimes.node(k)
        );
    }
    println!("{} hit nodes inserted", sol.grid().len() - grid.len());
    Ok(())
}
