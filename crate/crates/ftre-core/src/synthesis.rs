//! Rotation-synthesis count model and the Rz macro-expansion stage.
//!
//! Each Rz is compiled into a placeholder Clifford+T sequence whose T and
//! Clifford counts follow an empirical linear-in-log(1/eps) fit. Resource
//! estimates depend only on the counts and the single-qubit seriality of the
//! sequence, both of which the placeholder preserves; the gate identities
//! themselves are not those an exact synthesizer would emit.

// Range checks are written in negated form so NaN parameters fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use serde::{Deserialize, Serialize};

use crate::circuit::{Circuit, GateKind, Level, Op};
use crate::error::{Error, Result};

/// Logarithm base used by the count fit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Decimal,
}

/// Linear count model: a rotation synthesized to accuracy eps costs about
/// `a_t * |log eps|` T gates and `a_c * |log eps|` Clifford gates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthModel {
    pub a_t: f64,
    pub a_c: f64,
    pub log_base: LogBase,
}

impl Default for SynthModel {
    fn default() -> Self {
        SynthModel {
            a_t: 5.0,
            a_c: 8.0,
            log_base: LogBase::Natural,
        }
    }
}

impl SynthModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_t > 0.0) || !(self.a_c > 0.0) {
            return Err(Error::Synthesis(format!(
                "synthesis coefficients must be positive (a_t={}, a_c={})",
                self.a_t, self.a_c
            )));
        }
        Ok(())
    }

    /// |log eps| in the configured base.
    pub fn abs_log(&self, eps: f64) -> f64 {
        let l = match self.log_base {
            LogBase::Natural => eps.ln(),
            LogBase::Decimal => eps.log10(),
        };
        l.abs()
    }
}

/// Guard subtracted before `ceil` so exact integer products (such as
/// `a_t * |ln e^-1| = 5`) do not round up on float noise.
const CEIL_GUARD: f64 = 1e-9;

fn count(coeff: f64, abs_log: f64) -> u64 {
    (coeff * abs_log - CEIL_GUARD).ceil().max(0.0) as u64
}

/// T and Clifford gate counts for one Rz synthesized to accuracy `eps_rz`.
pub fn synthesis_counts(model: &SynthModel, eps_rz: f64) -> Result<(u64, u64)> {
    if !(eps_rz > 0.0 && eps_rz <= 1.0) {
        return Err(Error::Synthesis(format!(
            "synthesis accuracy must lie in (0, 1], got {eps_rz}"
        )));
    }
    let a = model.abs_log(eps_rz);
    Ok((count(model.a_t, a), count(model.a_c, a)))
}

/// Deterministic placeholder sequence with exactly `n_t` T and `n_c` Clifford
/// gates: cycle through H, T, S, T, skipping any position whose pool is
/// exhausted.
pub fn placeholder_sequence(qubit: u32, n_t: u64, n_c: u64) -> Vec<Op> {
    const PATTERN: [GateKind; 4] = [GateKind::H, GateKind::T, GateKind::S, GateKind::T];
    let mut out = Vec::with_capacity((n_t + n_c) as usize);
    let (mut rem_t, mut rem_c) = (n_t, n_c);
    let mut pos = 0usize;
    while rem_t > 0 || rem_c > 0 {
        let kind = PATTERN[pos % 4];
        pos += 1;
        let pool = if kind == GateKind::T { &mut rem_t } else { &mut rem_c };
        if *pool == 0 {
            continue;
        }
        *pool -= 1;
        out.push(Op::new(kind, vec![qubit]));
    }
    out
}

/// Replace every Rz with its placeholder sequence, retagging the circuit to
/// the Clifford+T level. All other ops pass through unchanged.
pub fn expand_rz(circuit: &Circuit, model: &SynthModel, eps_rz: f64) -> Result<Circuit> {
    if circuit.level != Level::CliffordRz {
        return Err(Error::Synthesis(format!(
            "expand_rz expects a clifford_rz circuit, got level {}",
            circuit.level
        )));
    }
    let (n_t, n_c) = synthesis_counts(model, eps_rz)?;
    let mut out = Circuit::new(circuit.qubits, Level::CliffordT);
    out.global_phase = circuit.global_phase;
    // A replaced Rz can never carry a classical control (Rz takes none), and
    // measure indices shift as sequences are spliced in; remap controls.
    let mut index_map = Vec::with_capacity(circuit.ops.len());
    for op in &circuit.ops {
        index_map.push(out.ops.len() as u32);
        if op.kind == GateKind::Rz {
            out.ops.extend(placeholder_sequence(op.qubits[0], n_t, n_c));
        } else {
            let mut rewritten = op.clone();
            if let Some(c) = rewritten.ctrl {
                rewritten.ctrl = Some(index_map[c as usize]);
            }
            out.push(rewritten);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::gate_counts;

    #[test]
    fn counts_at_inverse_e_are_exact() {
        let m = SynthModel::default();
        assert_eq!(synthesis_counts(&m, (-1.0f64).exp()).unwrap(), (5, 8));
    }

    #[test]
    fn counts_at_eps_one_are_zero() {
        let m = SynthModel::default();
        assert_eq!(synthesis_counts(&m, 1.0).unwrap(), (0, 0));
    }

    #[test]
    fn counts_match_reference_values() {
        let m = SynthModel::default();
        assert_eq!(synthesis_counts(&m, 2.4e-5).unwrap(), (54, 86));
        assert_eq!(synthesis_counts(&m, 1e-5).unwrap(), (58, 93));
    }

    #[test]
    fn decimal_base_scales_counts_down() {
        let m = SynthModel {
            log_base: LogBase::Decimal,
            ..SynthModel::default()
        };
        assert_eq!(synthesis_counts(&m, 1e-5).unwrap(), (25, 40));
    }

    #[test]
    fn out_of_range_eps_is_rejected() {
        let m = SynthModel::default();
        assert!(synthesis_counts(&m, 0.0).is_err());
        assert!(synthesis_counts(&m, 1.5).is_err());
        assert!(synthesis_counts(&m, -0.1).is_err());
    }

    #[test]
    fn placeholder_has_exact_counts_and_order() {
        let seq = placeholder_sequence(0, 5, 8);
        let kinds: Vec<GateKind> = seq.iter().map(|o| o.kind).collect();
        use GateKind::{H, S, T};
        assert_eq!(kinds, vec![H, T, S, T, H, T, S, T, H, T, S, H, S]);
    }

    #[test]
    fn expand_rz_replaces_every_rotation() {
        let mut c = Circuit::new(2, Level::CliffordRz);
        c.push(Op::new(GateKind::H, vec![0]));
        c.push(Op::rz(0, 0.3));
        c.push(Op::new(GateKind::Cnot, vec![0, 1]));
        c.push(Op::rz(1, -0.7));
        let out = expand_rz(&c, &SynthModel::default(), (-1.0f64).exp()).unwrap();
        assert_eq!(out.level, Level::CliffordT);
        let counts = gate_counts(&out);
        assert_eq!(counts.k, 0);
        assert_eq!(counts.t, 2 * 5);
        assert_eq!(counts.l, 2 + 2 * 8);
        out.validate().unwrap();
    }

    #[test]
    fn expand_rz_remaps_classical_controls() {
        let mut c = Circuit::new(2, Level::CliffordRz);
        c.push(Op::rz(0, 0.3));
        c.push(Op::new(GateKind::Measure, vec![0]));
        c.push(Op::new(GateKind::X, vec![1]).with_ctrl(1));
        let out = expand_rz(&c, &SynthModel::default(), (-1.0f64).exp()).unwrap();
        out.validate().unwrap();
        let measure_at = out
            .ops
            .iter()
            .position(|o| o.kind == GateKind::Measure)
            .unwrap() as u32;
        assert_eq!(out.ops.last().unwrap().ctrl, Some(measure_at));
    }

    #[test]
    fn expand_rz_requires_clifford_rz_level() {
        let c = Circuit::new(1, Level::Input);
        assert!(expand_rz(&c, &SynthModel::default(), 0.5).is_err());
    }
}
