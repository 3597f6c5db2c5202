//! Tracks a sine with the stop output under box constraints.

use hysterix::control::solver::{solve, SolverOptions};
use hysterix::control::{Admissible, ControlProblem, Objective};
use hysterix::grid::{HysteresisConfig, PLFunction, TimeGrid};

fn main() -> hysterix::Result<()> {
    let grid = TimeGrid::uniform(1.0, 80)?;
    let y_d = PLFunction::from_fn(&grid, |t| 0.8 * (6.0 * t).sin());
    let objective = Objective { y_d, y_target: 0.0, w_track: 1.0, w_term: 0.0, nu: 1e-4 };
    let admissible = Admissible::Box { lower: PLFunction::constant(&grid, -0.5), upper: PLFunction::constant(&grid, 0.5) };
    let problem = ControlProblem::new(HysteresisConfig::new(0.5, 0.0)?, grid, objective, admissible)?;

    let res = solve(&problem, None, &SolverOptions::default())?;
    let mut last = "";
    for entry in &res.trace {
        if entry.stage != last {
            println!("{:>10}: J = {:.6e}", entry.stage, entry.j);
            last = &entry.stage;
        }
    }
    println!("J = {:.6e}, Bouligand residual {:.2e} over {} directions", res.j, res.bouligand.min_residual, res.bouligand.count);
    Ok(())
}
