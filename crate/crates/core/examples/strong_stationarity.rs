//! Solves a terminal-target problem and checks the primal-dual system.

use hysterix::control::solver::{solve, SolverOptions};
use hysterix::control::{objective_eval, Admissible, ControlProblem, Objective};
use hysterix::grid::{HysteresisConfig, PLFunction, TimeGrid};
use hysterix::stationarity::{build_adjoint, check_strong_stationarity, direction_family, StationaritySamples};

fn main() -> hysterix::Result<()> {
    let grid = TimeGrid::uniform(1.0, 100)?;
    let objective = Objective { y_d: PLFunction::zero(&grid), y_target: 0.6, w_track: 0.0, w_term: 1.0, nu: 1e-3 };
    let problem = ControlProblem::new(HysteresisConfig::new(0.8, -0.4)?, grid.clone(), objective, Admissible::Unconstrained)?;
    let sol = solve(&problem, None, &SolverOptions { stationarity_tol: None, ..SolverOptions::default() })?;
    println!("J = {:.6e}, Bouligand residual {:.2e}", sol.j, sol.bouligand.min_residual);

    let eval = objective_eval(&problem, &sol.u)?;
    let (adj, mu) = build_adjoint(&eval)?;
    let samples = StationaritySamples::standard(&eval, &direction_family(&grid, 32, 1), 16, 2)?;
    let report = check_strong_stationarity(&eval, &adj, &mu, &samples, 1e-6)?;
    for line in &report.lines {
        println!("{:<48} {:.2e} over {}", line.name, line.residual, line.checked);
    }
    println!("terminal jump defect {:?}", report.terminal_jump);

    let mut bad = adj.clone();
    bad.p = bad.p.scale(1.1);
    let rep = check_strong_stationarity(&eval, &bad, &mu, &samples, 1e-6)?;
    println!("scaled adjoint fails lines {:?}", rep.failing_lines());
    Ok(())
}
