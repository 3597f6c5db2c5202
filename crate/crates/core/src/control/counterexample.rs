//! Bumps that converge weakly-* to zero in BV while their stop outputs do not
//! converge to the output of the zero input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{HysteresisConfig, PLFunction, TimeGrid};
use crate::hysteresis::stop;
use crate::smooth::bump;

pub const HORIZON: f64 = 2.0;

/// Row of the counterexample table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleRow {
    pub n: usize,
    pub u_bv: f64,
    pub u_l1: f64,
    pub y_bv: f64,
    /// `S(u_n)(T)`.
    pub y_terminal: f64,
    /// `max_{t >= 2/n} |S(u_n)(t) + 1|`.
    pub tail_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleReport {
    pub r: f64,
    pub y0: f64,
    pub rows: Vec<CounterexampleRow>,
    /// `S(0)(T)`.
    pub limit_terminal: f64,
}

/// `u_n(t) = bump(n t)` on `[0, 2]`, sampled with `per_bump` intervals on the support.
pub fn bump_control(n: usize, per_bump: usize) -> Result<PLFunction> {
    if n == 0 || per_bump < 2 || per_bump % 2 != 0 {
        return Err(Error::Domain("need n >= 1 and an even number of samples per bump".into()));
    }
    let support = 2.0 / n as f64;
    let mut nodes: Vec<f64> = (0..=per_bump).map(|q| support * q as f64 / per_bump as f64).collect();
    nodes.push(HORIZON);
    nodes.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let grid = TimeGrid::new(nodes)?;
    let nf = n as f64;
    Ok(PLFunction::from_fn(&grid, |t| bump(nf * t)))
}

/// Tabulates norms and outputs of the bump sequence with `r = y0 = 1`.
pub fn counterexample_demo(ns: &[usize]) -> Result<CounterexampleReport> {
    let cfg = HysteresisConfig::new(1.0, 1.0)?;
    let rows = ns
        .iter()
        .map(|&n| {
            let u = bump_control(n, 64)?;
            let sol = stop(&u, &cfg)?;
            let tail = 2.0 / n as f64;
            let tail_deviation = sol
                .y
                .grid()
                .nodes()
                .iter()
                .zip(sol.y.values())
                .filter(|(t, _)| **t >= tail - 1e-12)
                .fold(0.0f64, |m, (_, y)| m.max((y + 1.0).abs()));
            Ok(CounterexampleRow {
                n,
                u_bv: u.bv_norm(),
                u_l1: u.map(f64::abs).integral(),
                y_bv: sol.y.bv_norm(),
                y_terminal: *sol.y.values().last().unwrap(),
                tail_deviation,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let zero = PLFunction::zero(&TimeGrid::uniform(HORIZON, 1)?);
    let limit_terminal = *stop(&zero, &cfg)?.y.values().last().unwrap();
    Ok(CounterexampleReport { r: cfg.r, y0: cfg.y0, rows, limit_terminal })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let rep = counterexample_demo(&[1, 4, 64]).unwrap();
        for row in &rep.rows {
            assert!((row.u_bv - 4.0).abs() < 1e-12);
            assert!((row.y_bv - 3.0).abs() < 1e-12);
            assert!(row.tail_deviation < 1e-12);
            assert_eq!(row.y_terminal, -1.0);
        }
        assert_eq!(rep.limit_terminal, 1.0);
        assert!(rep.rows[2].u_l1 < rep.rows[0].u_l1 / 32.0);
    }
}
