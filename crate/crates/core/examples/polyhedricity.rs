//! Smooth radial approximants of a derivative with jumps.

use hysterix::grid::{HysteresisConfig, PLFunction, TimeGrid};
use hysterix::sensitivity::dirdiff_vi;
use hysterix::stationarity::{polyhedric_approx, radial_membership, CriticalContext};

fn main() -> hysterix::Result<()> {
    let grid = TimeGrid::uniform(1.0, 50)?;
    let u = PLFunction::from_fn(&grid, |t| 1.2 * (2.0 * std::f64::consts::PI * t).sin());
    let h = PLFunction::from_fn(&grid, |t| 1.0 - t);
    let cfg = HysteresisConfig::new(0.8, 0.0)?;

    let res = dirdiff_vi(&u, &h, &cfg)?;
    let z = res.eta.clone();
    let ctx = CriticalContext::with_regimes(res.sol.clone(), res.regimes.clone());
    println!("z has {} jumps, sup norm {:.4}", z.jump_nodes(1e-10).len(), z.sup_norm());

    for j in [2, 8, 32] {
        let a = polyhedric_approx(&ctx, &z, j, &[4, 16, 64])?;
        println!("j = {j:2}: {} cover elements", a.cover.len());
        for (i, zij) in &a.z_ij {
            let alpha = radial_membership(&ctx, zij, 1.0)?.alpha.unwrap_or(0.0);
            println!("    i = {i:2}: sup {:.4}, radial step {alpha:.3e}", zij.sup_norm());
        }
        let conv = a.convergence();
        // the sup error stays at the jump height: convergence is pointwise only
        println!(
            "    sup errors {:?}, non-monotone nodes {}, pending {}, ok {}",
            conv.max_error.iter().map(|(_, e)| format!("{e:.3}")).collect::<Vec<_>>(),
            conv.non_monotone,
            conv.pending,
            conv.ok()
        );
    }
    Ok(())
}
