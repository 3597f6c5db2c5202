//! Sampled Bouligand stationarity: `J'(u; h) >= 0` over admissible directions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::control::{ControlProblem, ObjectiveEval};
use crate::error::Result;
use crate::grid::{PLFunction, TimeGrid};
use crate::instances;

/// Smallest directional derivative over a direction family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BouligandReport {
    pub min_residual: f64,
    /// Index of the minimising direction.
    pub worst: usize,
    pub count: usize,
}

/// `+-1`, `+-` nodal hats, `+-` ramps `1_[t_k, T]` smeared over one
/// interval, and `n_random` random directions; all with sup norm 1.
pub fn direction_family(grid: &TimeGrid, n_random: usize, seed: u64) -> Vec<PLFunction> {
    let n = grid.len();
    let mut out = Vec::with_capacity(4 * n + n_random + 2);
    for sign in [1.0, -1.0] {
        out.push(PLFunction::constant(grid, sign));
        for k in 0..n {
            let mut v = vec![0.0; n];
            v[k] = sign;
            out.push(PLFunction::new(grid.clone(), v).expect("finite"));
        }
        for k in 1..n {
            let v = (0..n).map(|m| if m >= k { sign } else { 0.0 }).collect();
            out.push(PLFunction::new(grid.clone(), v).expect("finite"));
        }
    }
    let mut rng = instances::rng(seed);
    for q in 0..n_random {
        let h = if q % 2 == 0 {
            instances::random_smooth(&mut rng, grid, 1.0)
        } else {
            let scale = rng.random_range(0.1..1.0);
            instances::random_pl(&mut rng, grid, scale)
        };
        let norm = h.sup_norm();
        if norm > 0.0 {
            out.push(h.scale(1.0 / norm));
        }
    }
    out
}

/// Restricts directions to the tangent cone of the box at `u`.
pub fn tangent_directions(problem: &ControlProblem, u: &PLFunction, dirs: &[PLFunction]) -> Result<Vec<PLFunction>> {
    let Some((lo, hi)) = problem.bounds()? else {
        return Ok(dirs.to_vec());
    };
    let tol = 1e-12;
    Ok(dirs
        .iter()
        .map(|h| {
            let v = h
                .values()
                .iter()
                .enumerate()
                .map(|(k, &x)| {
                    let uk = u.value(k);
                    if uk <= lo[k] + tol && uk >= hi[k] - tol {
                        0.0
                    } else if uk <= lo[k] + tol {
                        x.max(0.0)
                    } else if uk >= hi[k] - tol {
                        x.min(0.0)
                    } else {
                        x
                    }
                })
                .collect();
            PLFunction::new(u.grid().clone(), v).expect("finite")
        })
        .filter(|h| h.sup_norm() > 0.0)
        .collect())
}

/// `min_h J'(u; h)` over the given directions.
pub fn bouligand_residual(eval: &ObjectiveEval, dirs: &[PLFunction]) -> Result<BouligandReport> {
    let mut min_residual = f64::INFINITY;
    let mut worst = 0;
    for (q, h) in dirs.iter().enumerate() {
        let d = eval.directional_derivative(h)?;
        if d < min_residual {
            min_residual = d;
            worst = q;
        }
    }
    Ok(BouligandReport { min_residual, worst, count: dirs.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::{objective_eval, Admissible, Objective};
    use crate::grid::HysteresisConfig;

    #[test]
    fn family_size_and_norms() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let f = direction_family(&grid, 6, 1);
        assert_eq!(f.len(), 2 * (1 + 11 + 10) + 6);
        assert!(f.iter().all(|h| (h.sup_norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn zero_control_of_pure_cost_is_stationary() {
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let obj = Objective { y_d: PLFunction::zero(&grid), y_target: 0.0, w_track: 1.0, w_term: 1.0, nu: 1.0 };
        let p = ControlProblem::new(HysteresisConfig::new(1.0, 0.0).unwrap(), grid.clone(), obj, Admissible::Unconstrained)
            .unwrap();
        let e = objective_eval(&p, &PLFunction::zero(&grid)).unwrap();
        let rep = bouligand_residual(&e, &direction_family(&grid, 10, 3)).unwrap();
        assert!(rep.min_residual.abs() < 1e-14);
        // a nonzero control is not stationary
        let e = objective_eval(&p, &PLFunction::constant(&grid, 0.5)).unwrap();
        assert!(bouligand_residual(&e, &direction_family(&grid, 0, 3)).unwrap().min_residual < -0.1);
    }

    #[test]
    fn box_restricts_directions() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let obj = Objective { y_d: PLFunction::zero(&grid), y_target: 0.0, w_track: 1.0, w_term: 0.0, nu: 1.0 };
        let adm = Admissible::Box { lower: PLFunction::zero(&grid), upper: PLFunction::constant(&grid, 1.0) };
        let p = ControlProblem::new(HysteresisConfig::new(1.0, 0.0).unwrap(), grid.clone(), obj, adm).unwrap();
        let u = PLFunction::zero(&grid);
        let dirs = tangent_directions(&p, &u, &[PLFunction::constant(&grid, -1.0), PLFunction::constant(&grid, 1.0)])
            .unwrap();
        assert_eq!(dirs.len(), 1);
        assert!(dirs[0].values().iter().all(|&v| v == 1.0));
    }
}
