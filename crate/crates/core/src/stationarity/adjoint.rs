//! Adjoint state, multiplier and the five-line strong-stationarity check.
//!
//! On a control grid the adjoint `p` is piecewise constant and
//! left-continuous with `p(0) = 0` and jump `g_k` at `t_k`, where
//! `<d3 J, h> = sum_k g_k h(t_k)`. The multiplier is
//! `mu = dp + d1 J dt + d2 J delta_T`, stored as atoms at the control nodes
//! and an `L^1` density.

use serde::{Deserialize, Serialize};

use super::{cone_distance, polyhedric_approx, reduced_cone_membership, CriticalContext};
use crate::control::{l2_pairing, ObjectiveEval};
use crate::error::{Error, Result};
use crate::grid::{GridRegulated, Location, PLFunction, TimeGrid};
use crate::hysteresis::Regime;
use crate::instances;
use crate::ksint::ks_integrate;

/// Left-continuous piecewise constant adjoint on the control grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdjointState {
    pub p: GridRegulated,
    /// `d2 J`, the terminal weight carried by the `q` form.
    pub d2: f64,
}

impl AdjointState {
    pub fn grid(&self) -> &TimeGrid {
        self.p.grid()
    }

    /// `p(t-)`, with `p(0-) = p(0)`.
    pub fn left_at(&self, t: f64) -> Result<f64> {
        Ok(match self.p.grid().locate(t)? {
            Location::Node(k) => self.p.left()[k],
            Location::Interior(k) => self.p.right()[k],
        })
    }

    /// `q = p + d2 J 1_{T}`.
    pub fn q(&self) -> GridRegulated {
        let n = self.p.grid().len();
        let mut value = self.p.value().to_vec();
        value[n - 1] += self.d2;
        GridRegulated::new(self.p.grid().clone(), self.p.left().to_vec(), value, self.p.right().to_vec())
            .expect("finite adjoint")
    }
}

/// `mu = sum_k atoms_k delta_{t_k} + density dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Multiplier {
    pub grid: TimeGrid,
    pub atoms: Vec<f64>,
    pub density: PLFunction,
}

impl Multiplier {
    /// `<mu, z>`.
    pub fn pair(&self, z: &GridRegulated) -> Result<f64> {
        let mut total = if self.density.sup_norm() == 0.0 { 0.0 } else { l2_pairing(&self.density, z)? };
        for (k, &a) in self.atoms.iter().enumerate() {
            if a != 0.0 {
                total += a * z.eval(self.grid.node(k), crate::grid::Side::Value)?;
            }
        }
        Ok(total)
    }
}

/// Builds `p` and `mu` from the partial derivatives of the objective.
pub fn build_adjoint(eval: &ObjectiveEval) -> Result<(AdjointState, Multiplier)> {
    let grid = eval.u.grid().clone();
    let g = &eval.d3;
    let n = grid.len();
    let mut left = vec![0.0; n];
    let mut right = vec![0.0; n];
    let mut acc = 0.0;
    for k in 0..n {
        left[k] = acc;
        acc += g[k];
        right[k] = acc;
    }
    let mut value = left.clone();
    value[n - 1] = acc;
    right[n - 1] = acc;
    let p = GridRegulated::new(grid.clone(), left, value, right)?;
    let mut atoms = g.clone();
    atoms[n - 1] += eval.d2;
    Ok((
        AdjointState { p, d2: eval.d2 },
        Multiplier { grid, atoms, density: eval.d1.clone() },
    ))
}

/// Test families used by [`check_strong_stationarity`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StationaritySamples {
    /// Candidates for the reduced critical cone; non-members are skipped.
    pub z_family: Vec<GridRegulated>,
    /// Controls for the `p`-defining identity.
    pub h_family: Vec<PLFunction>,
    /// Regulated functions for the `mu`-defining identity.
    pub basis: Vec<GridRegulated>,
    pub description: String,
}

impl StationaritySamples {
    /// Node tents and left ramps of the solution grid, derivatives of the
    /// given directions, polyhedric approximants of a few of them, and
    /// random regulated functions.
    pub fn standard(eval: &ObjectiveEval, directions: &[PLFunction], n_random: usize, seed: u64) -> Result<Self> {
        let ctx = CriticalContext::with_regimes(eval.sol.clone(), eval.regimes.clone());
        let sol_grid = ctx.grid().clone();
        let n = sol_grid.len();
        let mut z_family = Vec::new();
        for k in 1..n {
            for c in [1.0, -1.0] {
                let mut tent = vec![0.0; n];
                tent[k] = c;
                z_family.push(GridRegulated::from_pl(&PLFunction::new(sol_grid.clone(), tent)?));
                let mut left = vec![0.0; n];
                left[k] = c;
                let value = vec![0.0; n];
                z_family.push(GridRegulated::right_continuous(sol_grid.clone(), left, value)?);
            }
        }
        let tents = z_family.len();
        let mut etas = Vec::new();
        for h in directions {
            let res = eval.derivative(h)?;
            let norm = res.eta.sup_norm();
            if norm > 0.0 {
                etas.push(res.eta.scale(1.0 / norm));
            }
        }
        let mut approximants = 0;
        for eta in etas.iter().filter(|e| !e.jump_nodes(1e-10).is_empty()).take(3) {
            let a = polyhedric_approx(&ctx, eta, 8, &[16])?;
            z_family.push(a.z_j.clone());
            for (_, zij) in &a.z_ij {
                z_family.push(GridRegulated::from_pl(zij));
            }
            approximants += 1 + a.z_ij.len();
        }
        let n_etas = etas.len();
        z_family.extend(etas);

        let mut rng = instances::rng(seed);
        let mut basis = z_family.clone();
        for _ in 0..n_random {
            basis.push(instances::random_mixed(&mut rng, &sol_grid, 1.0, 0.3));
        }
        let description = format!(
            "{tents} node tents and left ramps on the solution grid, {n_etas} normalised derivatives, \
             {approximants} polyhedric approximants, {} control directions, {n_random} random regulated functions",
            directions.len()
        );
        Ok(StationaritySamples { z_family, h_family: directions.to_vec(), basis, description })
    }
}

/// Where a line attains its worst residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub t: Option<f64>,
    pub index: Option<usize>,
    pub value: f64,
}

/// One line of the system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineResult {
    pub name: String,
    pub residual: f64,
    pub pass: bool,
    pub checked: usize,
    pub witness: Option<Witness>,
}

/// Integration-by-parts form with `q = p + d2 J 1_{T}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QFormCheck {
    pub q0: f64,
    /// `q(T) - d2 J`.
    pub q_terminal: f64,
    /// `max |-\int q dh - <d3 J, h>|`.
    pub control_identity: f64,
    /// `max |-\int z dq - <d1 J, z> + <mu, z>|`.
    pub multiplier_identity: f64,
}

/// Result of [`check_strong_stationarity`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub lines: Vec<LineResult>,
    pub pass: bool,
    pub tol: f64,
    pub q_form: QFormCheck,
    /// `|p(T-) - p(T) - d2 J|` when `T` is inactive.
    pub terminal_jump: Option<f64>,
    pub skipped_non_members: usize,
    pub families: String,
}

impl StationarityReport {
    pub fn failing_lines(&self) -> Vec<usize> {
        (0..self.lines.len()).filter(|&l| !self.lines[l].pass).map(|l| l + 1).collect()
    }
}

fn line(name: &str, residual: f64, tol: f64, checked: usize, witness: Option<Witness>) -> LineResult {
    LineResult { name: name.into(), residual, pass: residual <= tol, checked, witness }
}

/// Checks the five lines of the strong-stationarity system on sampled families.
pub fn check_strong_stationarity(
    eval: &ObjectiveEval,
    adj: &AdjointState,
    mu: &Multiplier,
    samples: &StationaritySamples,
    tol: f64,
) -> Result<StationarityReport> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let ctx = CriticalContext::with_regimes(eval.sol.clone(), eval.regimes.clone());
    let horizon = ctx.grid().horizon();
    let p = &adj.p;
    let n = p.grid().len();

    // (1) boundary values
    let p0 = p.value()[0];
    let pt = p.value()[n - 1];
    let l1 = line(
        "p(0) = p(T) = 0",
        p0.abs().max(pt.abs()),
        tol,
        2,
        Some(Witness { t: Some(if p0.abs() >= pt.abs() { 0.0 } else { horizon }), index: None, value: p0.abs().max(pt.abs()) }),
    );

    // (2) p(t-) in K(t) at nodes and on open intervals of the solution grid
    let sg = ctx.grid();
    let mut worst2 = (0.0, None);
    let mut checked2 = 0;
    for k in 0..sg.len() {
        let t = sg.node(k);
        let d = cone_distance(ctx.cones.nodes[k], adj.left_at(t)?);
        checked2 += 1;
        if d > worst2.0 {
            worst2 = (d, Some(t));
        }
        if k + 1 < sg.len() {
            let mid = 0.5 * (t + sg.node(k + 1));
            let d = cone_distance(ctx.cones.intervals[k], adj.left_at(mid)?);
            checked2 += 1;
            if d > worst2.0 {
                worst2 = (d, Some(mid));
            }
        }
    }
    let l2 = line(
        "p(t-) in K(t)",
        worst2.0,
        tol,
        checked2,
        worst2.1.map(|t| Witness { t: Some(t), index: None, value: worst2.0 }),
    );

    // (3) <mu, z> >= 0 on the reduced cone
    let mut min3 = f64::INFINITY;
    let mut arg3 = None;
    let mut skipped = 0;
    let mut checked3 = 0;
    for (q, z) in samples.z_family.iter().enumerate() {
        if !reduced_cone_membership(&ctx, z)?.member {
            skipped += 1;
            continue;
        }
        checked3 += 1;
        let v = mu.pair(z)?;
        if v < min3 {
            min3 = v;
            arg3 = Some(q);
        }
    }
    let l3 = line(
        "<mu, z> >= 0 on the reduced critical cone",
        if checked3 == 0 { 0.0 } else { (-min3).max(0.0) },
        tol,
        checked3,
        arg3.map(|q| Witness { t: None, index: Some(q), value: min3 }),
    );

    // (4) \int h dp = <d3 J, h>
    let mut worst4 = (0.0, None);
    for (q, h) in samples.h_family.iter().enumerate() {
        let lhs = ks_integrate(&GridRegulated::from_pl(h), p, 0.0, horizon)?;
        let rhs: f64 = eval.d3.iter().zip(h.values()).map(|(g, v)| g * v).sum();
        let d = (lhs - rhs).abs();
        if d > worst4.0 {
            worst4 = (d, Some(q));
        }
    }
    let l4 = line(
        "\\int h dp = <d3 J, h>",
        worst4.0,
        tol,
        samples.h_family.len(),
        worst4.1.map(|q| Witness { t: None, index: Some(q), value: worst4.0 }),
    );

    // (5) -\int z dp = <d1 J, z> + d2 J z(T) - <mu, z>
    let q_fn = adj.q();
    let mut worst5 = (0.0, None);
    let mut worst_q5: f64 = 0.0;
    for (q, z) in samples.basis.iter().enumerate() {
        let track = if eval.d1.sup_norm() == 0.0 { 0.0 } else { l2_pairing(&eval.d1, z)? };
        let muz = mu.pair(z)?;
        let zt = z.value()[z.grid().len() - 1];
        let lhs = -ks_integrate(z, p, 0.0, horizon)?;
        let d = (lhs - (track + eval.d2 * zt - muz)).abs();
        if d > worst5.0 {
            worst5 = (d, Some(q));
        }
        let lhs_q = -ks_integrate(z, &q_fn, 0.0, horizon)?;
        worst_q5 = worst_q5.max((lhs_q - (track - muz)).abs());
    }
    let l5 = line(
        "-\\int z dp = <d1 J, z> + d2 J z(T) - <mu, z>",
        worst5.0,
        tol,
        samples.basis.len(),
        worst5.1.map(|q| Witness { t: None, index: Some(q), value: worst5.0 }),
    );

    let mut worst_q4: f64 = 0.0;
    for h in &samples.h_family {
        let lhs = -ks_integrate(&q_fn, &GridRegulated::from_pl(h), 0.0, horizon)?;
        let rhs: f64 = eval.d3.iter().zip(h.values()).map(|(g, v)| g * v).sum();
        worst_q4 = worst_q4.max((lhs - rhs).abs());
    }
    let q_form = QFormCheck {
        q0: q_fn.value()[0],
        q_terminal: q_fn.value()[n - 1] - eval.d2,
        control_identity: worst_q4,
        multiplier_identity: worst_q5,
    };

    let last = eval.regimes.nodes.len() - 1;
    let terminal_jump = (eval.regimes.node(last) == Regime::Inactive)
        .then(|| ((p.left()[n - 1] - p.value()[n - 1]) - eval.d2).abs());

    let lines = vec![l1, l2, l3, l4, l5];
    let pass = lines.iter().all(|l| l.pass);
    Ok(StationarityReport {
        lines,
        pass,
        tol,
        q_form,
        terminal_jump,
        skipped_non_members: skipped,
        families: samples.description.clone(),
    })
}
