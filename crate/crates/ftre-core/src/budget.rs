//! Error-budget formulas and parameter-selection procedures.
//!
//! Three knobs control the predicted fidelity of a compiled circuit: the
//! per-rotation synthesis accuracy `eps_rz`, the magic-state error `eps_m`,
//! and the logical operation error `eps_l` fixed by the code distance. This
//! module evaluates the fidelity model, inverts the distance/error relation,
//! and selects parameters either by budget halving or by brute-force grid
//! search.

// Range checks are written in negated form so NaN parameters fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthesis::SynthModel;

/// Surface-code noise model: `ler(d) = prefactor * (p / p_th)^((d+1)/2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Physical error rate.
    pub p: f64,
    /// Threshold error rate.
    pub p_th: f64,
    /// Logical error rate prefactor.
    pub prefactor: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            p: 0.001,
            p_th: 0.0057,
            prefactor: 0.03,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(Error::Budget(format!("physical error rate {} not in (0,1)", self.p)));
        }
        if !(self.p_th > 0.0 && self.p_th < 1.0) {
            return Err(Error::Budget(format!("threshold {} not in (0,1)", self.p_th)));
        }
        if !(self.prefactor > 0.0) {
            return Err(Error::Budget(format!("prefactor {} must be positive", self.prefactor)));
        }
        Ok(())
    }
}

/// Map from requested magic-state error to the expected cultivation
/// repetitions, as a step function over calibration anchors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CultivationTable {
    /// `(eps_m, rep)` pairs in descending `eps_m` order.
    pub anchors: Vec<(f64, f64)>,
    /// Folded cultivation divides the repetition count by this factor.
    pub folded_divisor: f64,
}

impl Default for CultivationTable {
    fn default() -> Self {
        CultivationTable {
            anchors: vec![(1e-6, 5.0), (6.1e-7, 40.0), (1e-9, 100.0)],
            folded_divisor: 10.0,
        }
    }
}

impl CultivationTable {
    pub fn validate(&self) -> Result<()> {
        if self.anchors.is_empty() {
            return Err(Error::Budget("cultivation table has no anchors".into()));
        }
        for w in self.anchors.windows(2) {
            if !(w[1].0 < w[0].0) {
                return Err(Error::Budget("cultivation anchors must be in descending eps_m order".into()));
            }
            if !(w[1].1 >= w[0].1) {
                return Err(Error::Budget("cultivation repetitions must not decrease as eps_m shrinks".into()));
            }
        }
        if self.anchors.iter().any(|&(e, r)| !(e > 0.0 && e < 1.0) || !(r > 0.0)) {
            return Err(Error::Budget("cultivation anchors must have eps_m in (0,1) and positive rep".into()));
        }
        if !(self.folded_divisor > 0.0) {
            return Err(Error::Budget("folded divisor must be positive".into()));
        }
        Ok(())
    }

    /// Weakest anchor: the largest achievable `eps_m`.
    pub fn weakest(&self) -> (f64, f64) {
        self.anchors[0]
    }

    /// Strongest anchor: the smallest achievable `eps_m`.
    pub fn strongest(&self) -> (f64, f64) {
        *self.anchors.last().unwrap()
    }
}

/// Expected cultivation repetitions to reach magic-state error `eps_m`: the
/// rep of the anchor with the largest `eps_m` at or below the request.
pub fn cultivation_rep(cult: &CultivationTable, eps_m: f64, folded: bool) -> Result<f64> {
    if !(eps_m > 0.0 && eps_m < 1.0) {
        return Err(Error::Budget(format!("magic-state error {eps_m} not in (0,1)")));
    }
    let anchor = cult
        .anchors
        .iter()
        .find(|&&(e, _)| e <= eps_m)
        .ok_or_else(|| {
            Error::Budget(format!(
                "magic-state error {eps_m} is below the soft cultivation limit of {}",
                cult.strongest().0
            ))
        })?;
    Ok(if folded { anchor.1 / cult.folded_divisor } else { anchor.1 })
}

/// One parameter point selected by a budget procedure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetSolution {
    /// Surface code distance (odd).
    pub d: u32,
    /// Per-rotation synthesis accuracy.
    pub eps_rz: f64,
    /// Magic-state error after cultivation.
    pub eps_m: f64,
    /// Logical operation error at distance `d`.
    pub eps_l: f64,
    /// Expected cultivation repetitions for `eps_m`.
    pub rep: f64,
    /// Predicted circuit fidelity at this point.
    pub fidelity: f64,
}

impl fmt::Display for BudgetSolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "d={} eps_rz={:.3e} eps_m={:.3e} eps_l={:.3e} rep={} F={:.6}",
            self.d, self.eps_rz, self.eps_m, self.eps_l, self.rep, self.fidelity
        )
    }
}

/// Logical error rate of a distance-`d` code operation.
pub fn ler(noise: &NoiseModel, d: u32) -> Result<f64> {
    if d < 3 || d.is_multiple_of(2) {
        return Err(Error::Budget(format!("code distance must be odd and at least 3, got {d}")));
    }
    Ok(noise.prefactor * (noise.p / noise.p_th).powf((d as f64 + 1.0) / 2.0))
}

/// Hard ceiling for distance scans; beyond this the model is meaningless.
const D_SCAN_CAP: u32 = 9999;

/// Smallest odd distance whose logical error rate is strictly below
/// `target_ler`.
pub fn min_distance(noise: &NoiseModel, target_ler: f64) -> Result<u32> {
    if !(target_ler > 0.0 && target_ler < noise.prefactor) {
        return Err(Error::Budget(format!(
            "target logical error rate must lie in (0, {}), got {target_ler}",
            noise.prefactor
        )));
    }
    if noise.p >= noise.p_th {
        return Err(Error::Budget(format!(
            "no distance can reach {target_ler}: p={} is not below threshold {}",
            noise.p, noise.p_th
        )));
    }
    let mut d = 3;
    while d <= D_SCAN_CAP {
        if ler(noise, d)? < target_ler {
            return Ok(d);
        }
        d += 2;
    }
    Err(Error::Budget(format!(
        "target logical error rate {target_ler} unreachable below distance {D_SCAN_CAP}"
    )))
}

/// Predicted circuit fidelity.
///
/// `F = (1-eps_rz)^k * (1-eps_m)^(a_t*k*|log eps_rz|)
///    * (1-eps_l)^(l + a_c*|log eps_rz|)`
///
/// evaluated in log space via `ln_1p`. When `k` is zero (or `eps_rz` is,
/// which only arises for rotation-free circuits) the rotation and
/// magic-state factors drop out entirely.
pub fn circuit_fidelity(
    eps_rz: f64,
    eps_m: f64,
    eps_l: f64,
    k: u64,
    l: f64,
    model: &SynthModel,
) -> f64 {
    debug_assert!((0.0..1.0).contains(&eps_rz));
    debug_assert!((0.0..1.0).contains(&eps_m));
    debug_assert!((0.0..1.0).contains(&eps_l));
    debug_assert!(l >= 0.0);
    if k == 0 || eps_rz == 0.0 {
        return (l * (-eps_l).ln_1p()).exp();
    }
    let abs_log = model.abs_log(eps_rz);
    let mut ln_f = k as f64 * (-eps_rz).ln_1p();
    ln_f += model.a_t * k as f64 * abs_log * (-eps_m).ln_1p();
    ln_f += (l + model.a_c * abs_log) * (-eps_l).ln_1p();
    ln_f.exp()
}

/// Extra Clifford exposure from teleportation correction sub-circuits, for
/// architectures without a transversal S gate: two correction gates per T
/// gate, halved when corrections are assumed random (only half of the
/// teleportations need one).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeleportOverhead {
    #[default]
    Off,
    PerT,
    PerTRandomized,
}

/// Effective Clifford count including the optional teleportation-correction
/// term.
pub fn effective_clifford_count(
    overhead: TeleportOverhead,
    k: u64,
    l: u64,
    eps_rz: f64,
    model: &SynthModel,
) -> f64 {
    let base = l as f64;
    if overhead == TeleportOverhead::Off || k == 0 || eps_rz == 0.0 {
        return base;
    }
    let t_count = model.a_t * k as f64 * model.abs_log(eps_rz);
    let weight = match overhead {
        TeleportOverhead::PerT => 1.0,
        TeleportOverhead::PerTRandomized => 0.5,
        TeleportOverhead::Off => unreachable!(),
    };
    base + 2.0 * weight * t_count
}

#[allow(clippy::too_many_arguments)]
fn solution_at(
    d: u32,
    eps_rz: f64,
    eps_m: f64,
    k: u64,
    l_eff: f64,
    noise: &NoiseModel,
    cult: &CultivationTable,
    model: &SynthModel,
    folded: bool,
) -> Result<BudgetSolution> {
    let eps_l = ler(noise, d)?;
    let rep = cultivation_rep(cult, eps_m, folded)?;
    Ok(BudgetSolution {
        d,
        eps_rz,
        eps_m,
        eps_l,
        rep,
        fidelity: circuit_fidelity(eps_rz, eps_m, eps_l, k, l_eff, model),
    })
}

/// Parameters shared by both selection procedures.
#[derive(Clone, Copy, Debug)]
pub struct SolverOptions {
    pub d_max: u32,
    pub folded: bool,
    pub overhead: TeleportOverhead,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            d_max: 51,
            folded: false,
            overhead: TeleportOverhead::Off,
        }
    }
}

/// Budget-halving heuristic.
///
/// Half the budget pays for rotation synthesis, fixing `eps_rz` so that `k`
/// rotations jointly succeed with probability `1 - target/2`. A quarter is
/// offered to magic states: the weakest cultivation anchor that keeps the
/// magic factor above `1 - target/4` is chosen, the strongest if none
/// suffices. The distance is then the smallest odd value that brings the
/// whole fidelity above `1 - target`.
pub fn solve_halving(
    k: u64,
    l: u64,
    target_error: f64,
    noise: &NoiseModel,
    cult: &CultivationTable,
    model: &SynthModel,
    opts: &SolverOptions,
) -> Result<BudgetSolution> {
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(Error::Budget(format!("target error {target_error} not in (0,1)")));
    }
    noise.validate()?;
    cult.validate()?;
    model.validate()?;

    let eps_rz = if k == 0 {
        0.0
    } else {
        1.0 - (1.0 - target_error / 2.0).powf(1.0 / k as f64)
    };

    let eps_m = if k == 0 {
        cult.weakest().0
    } else {
        let magic_uses = model.a_t * k as f64 * model.abs_log(eps_rz);
        cult.anchors
            .iter()
            .find(|&&(e, _)| (magic_uses * (-e).ln_1p()).exp() >= 1.0 - target_error / 4.0)
            .map(|&(e, _)| e)
            .unwrap_or(cult.strongest().0)
    };

    let l_eff = effective_clifford_count(opts.overhead, k, l, eps_rz, model);
    let mut best: Option<BudgetSolution> = None;
    let mut d = 3;
    while d <= opts.d_max {
        let sol = solution_at(d, eps_rz, eps_m, k, l_eff, noise, cult, model, opts.folded)?;
        if sol.fidelity >= 1.0 - target_error {
            assert!(sol.fidelity >= 1.0 - target_error);
            return Ok(sol);
        }
        // Ties go to the later (larger-d) point: fidelity is increasing in d,
        // so equality can only come from f64 underflow.
        if best.is_none_or(|b| sol.fidelity >= b.fidelity) {
            best = Some(sol);
        }
        d += 2;
    }
    let best = best.expect("distance scan visited at least d=3");
    Err(Error::Infeasible {
        message: format!(
            "no distance up to {} meets the {target_error} error budget (k={k}, l={l})",
            opts.d_max
        ),
        best: Box::new(best),
    })
}

/// Grid specification for the sensitivity analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Inclusive odd-distance range.
    pub d_min: u32,
    pub d_max: u32,
    /// Log-spaced `eps_rz` grid bounds.
    pub eps_rz_min: f64,
    pub eps_rz_max: f64,
    pub points_per_decade: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            d_min: 3,
            d_max: 25,
            eps_rz_min: 1e-8,
            eps_rz_max: 1e-3,
            points_per_decade: 4,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d_min < 3 || self.d_min.is_multiple_of(2) || self.d_max.is_multiple_of(2) || self.d_min > self.d_max {
            return Err(Error::Budget(format!(
                "distance range [{}, {}] must be odd-bounded and nonempty",
                self.d_min, self.d_max
            )));
        }
        if !(self.eps_rz_min > 0.0 && self.eps_rz_min <= self.eps_rz_max && self.eps_rz_max < 1.0) {
            return Err(Error::Budget(format!(
                "eps_rz grid [{}, {}] must satisfy 0 < min <= max < 1",
                self.eps_rz_min, self.eps_rz_max
            )));
        }
        if self.points_per_decade == 0 {
            return Err(Error::Budget("points_per_decade must be at least 1".into()));
        }
        Ok(())
    }

    /// Log-spaced grid values, ascending, including both endpoints.
    pub fn eps_rz_values(&self) -> Vec<f64> {
        let decades = (self.eps_rz_max / self.eps_rz_min).log10();
        let steps = (decades * self.points_per_decade as f64 + 1e-9).floor() as u32;
        let mut vals: Vec<f64> = (0..=steps)
            .map(|i| self.eps_rz_min * 10f64.powf(i as f64 / self.points_per_decade as f64))
            .collect();
        if *vals.last().unwrap() < self.eps_rz_max * (1.0 - 1e-9) {
            vals.push(self.eps_rz_max);
        }
        vals
    }
}

/// One evaluated grid point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub d: u32,
    pub eps_rz: f64,
    pub eps_m: f64,
    pub fidelity: f64,
    pub rep: f64,
    pub feasible: bool,
    /// Marks the eps_m-maximizing feasible point of this distance contour.
    pub contour_best: bool,
}

/// Lexicographic cost of a feasible point: cultivation repetitions dominate,
/// then distance, then synthesis effort.
fn cost_key(p: &GridPoint, model: &SynthModel) -> (f64, u32, f64) {
    (p.rep, p.d, model.abs_log(p.eps_rz))
}

/// Exhaustive sensitivity analysis over a (d, eps_rz, eps_m) grid.
///
/// Returns the full fidelity surface together with the feasible point of
/// minimum cost. Within each distance contour the feasible point with the
/// weakest magic-state requirement (ties toward larger eps_rz) is flagged.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_grid(
    k: u64,
    l: u64,
    target_error: f64,
    noise: &NoiseModel,
    cult: &CultivationTable,
    model: &SynthModel,
    grid: &GridSpec,
    opts: &SolverOptions,
) -> Result<(BudgetSolution, Vec<GridPoint>)> {
    if !(target_error > 0.0 && target_error < 1.0) {
        return Err(Error::Budget(format!("target error {target_error} not in (0,1)")));
    }
    noise.validate()?;
    cult.validate()?;
    model.validate()?;
    grid.validate()?;

    let eps_rz_values = grid.eps_rz_values();
    let mut surface = Vec::new();
    for d in (grid.d_min..=grid.d_max).step_by(2) {
        let eps_l = ler(noise, d)?;
        let contour_start = surface.len();
        for &eps_rz in &eps_rz_values {
            for &(eps_m, rep) in &cult.anchors {
                let l_eff = effective_clifford_count(opts.overhead, k, l, eps_rz, model);
                let fidelity = circuit_fidelity(eps_rz, eps_m, eps_l, k, l_eff, model);
                let rep = if opts.folded { rep / cult.folded_divisor } else { rep };
                surface.push(GridPoint {
                    d,
                    eps_rz,
                    eps_m,
                    fidelity,
                    rep,
                    feasible: fidelity >= 1.0 - target_error,
                    contour_best: false,
                });
            }
        }
        let contour = &mut surface[contour_start..];
        if let Some(best_idx) = contour
            .iter()
            .enumerate()
            .filter(|(_, p)| p.feasible)
            .max_by(|(_, a), (_, b)| {
                (a.eps_m, a.eps_rz)
                    .partial_cmp(&(b.eps_m, b.eps_rz))
                    .expect("grid values are finite")
            })
            .map(|(i, _)| i)
        {
            contour[best_idx].contour_best = true;
        }
    }

    let winner = surface
        .iter()
        .filter(|p| p.feasible)
        .min_by(|a, b| {
            cost_key(a, model)
                .partial_cmp(&cost_key(b, model))
                .expect("grid values are finite")
                .then_with(|| b.fidelity.partial_cmp(&a.fidelity).unwrap())
        })
        .copied();

    match winner {
        Some(p) => {
            let sol = BudgetSolution {
                d: p.d,
                eps_rz: p.eps_rz,
                eps_m: p.eps_m,
                eps_l: ler(noise, p.d)?,
                rep: p.rep,
                fidelity: p.fidelity,
            };
            Ok((sol, surface))
        }
        None => {
            let best = surface
                .iter()
                .max_by(|a, b| a.fidelity.partial_cmp(&b.fidelity).unwrap())
                .expect("grid is nonempty");
            Err(Error::Infeasible {
                message: format!(
                    "no grid point meets the {target_error} error budget (k={k}, l={l})"
                ),
                best: Box::new(BudgetSolution {
                    d: best.d,
                    eps_rz: best.eps_rz,
                    eps_m: best.eps_m,
                    eps_l: ler(noise, best.d)?,
                    rep: best.rep,
                    fidelity: best.fidelity,
                }),
            })
        }
    }
}

/// Closed-form estimator: physical qubits from the code footprint and total
/// runtime from depth, syndrome cycles per moment, cycle time and shot count.
pub fn formula_estimate(
    n_logical: u64,
    depth: u64,
    cycles_per_moment: u64,
    cycle_time_s: f64,
    trials: u64,
    d: u32,
) -> Result<(u64, f64)> {
    if n_logical == 0 || depth == 0 || cycles_per_moment == 0 || trials == 0 {
        return Err(Error::Budget("formula estimate arguments must be positive".into()));
    }
    if !(cycle_time_s > 0.0) {
        return Err(Error::Budget(format!("cycle time {cycle_time_s} must be positive")));
    }
    if d < 3 || d.is_multiple_of(2) {
        return Err(Error::Budget(format!("code distance must be odd and at least 3, got {d}")));
    }
    let physical = (d as u64).pow(2) * n_logical;
    let moments = depth as f64 * cycles_per_moment as f64 * trials as f64;
    Ok((physical, moments * cycle_time_s))
}
