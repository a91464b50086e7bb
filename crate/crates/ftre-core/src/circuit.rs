//! Circuit intermediate representation shared by every pipeline stage.
//!
//! A [`Circuit`] is an ordered list of [`Op`]s over dense qubit indices,
//! tagged with the abstraction [`Level`] it currently sits at. The same
//! structure carries the input circuit, the Clifford+Rz and Clifford+T
//! intermediates, and the final primitive circuit; validation rules depend on
//! the level.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Abstraction level of a circuit. Levels are ordered: compilation stages may
/// only move a circuit forward.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    #[default]
    Input,
    CliffordRz,
    CliffordT,
    Primitive,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Input => "input",
            Level::CliffordRz => "clifford_rz",
            Level::CliffordT => "clifford_t",
            Level::Primitive => "primitive",
        }
    }

    pub fn parse(s: &str) -> Option<Level> {
        match s {
            "input" => Some(Level::Input),
            "clifford_rz" => Some(Level::CliffordRz),
            "clifford_t" => Some(Level::CliffordT),
            "primitive" => Some(Level::Primitive),
            _ => None,
        }
    }
}

impl fmt::Display for Level {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Every gate and primitive kind known to the pipeline.
///
/// Logical kinds (`I` .. `Toffoli`, rotations, `U1Q`/`U2Q`) appear in input
/// and intermediate circuits; the remaining kinds are elements of the
/// fault-tolerant primitive instruction set and only appear at
/// [`Level::Primitive`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum GateKind {
    I,
    X,
    Y,
    Z,
    H,
    S,
    Sdg,
    T,
    Tdg,
    Rz,
    Rx,
    Ry,
    #[serde(rename = "CNOT")]
    Cnot,
    #[serde(rename = "CZ")]
    Cz,
    #[serde(rename = "SWAP")]
    Swap,
    Toffoli,
    #[serde(rename = "U1Q")]
    U1q,
    #[serde(rename = "U2Q")]
    U2q,
    Measure,
    Reset,
    #[serde(rename = "SE")]
    Se,
    CultT,
    CultS,
    Merge,
    Split,
    ZMove,
    AMove,
}

/// Operand arity rule for a gate kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arity {
    Exactly(usize),
    AtLeast(usize),
}

impl GateKind {
    pub const ALL: [GateKind; 27] = [
        GateKind::I,
        GateKind::X,
        GateKind::Y,
        GateKind::Z,
        GateKind::H,
        GateKind::S,
        GateKind::Sdg,
        GateKind::T,
        GateKind::Tdg,
        GateKind::Rz,
        GateKind::Rx,
        GateKind::Ry,
        GateKind::Cnot,
        GateKind::Cz,
        GateKind::Swap,
        GateKind::Toffoli,
        GateKind::U1q,
        GateKind::U2q,
        GateKind::Measure,
        GateKind::Reset,
        GateKind::Se,
        GateKind::CultT,
        GateKind::CultS,
        GateKind::Merge,
        GateKind::Split,
        GateKind::ZMove,
        GateKind::AMove,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GateKind::I => "I",
            GateKind::X => "X",
            GateKind::Y => "Y",
            GateKind::Z => "Z",
            GateKind::H => "H",
            GateKind::S => "S",
            GateKind::Sdg => "Sdg",
            GateKind::T => "T",
            GateKind::Tdg => "Tdg",
            GateKind::Rz => "Rz",
            GateKind::Rx => "Rx",
            GateKind::Ry => "Ry",
            GateKind::Cnot => "CNOT",
            GateKind::Cz => "CZ",
            GateKind::Swap => "SWAP",
            GateKind::Toffoli => "Toffoli",
            GateKind::U1q => "U1Q",
            GateKind::U2q => "U2Q",
            GateKind::Measure => "Measure",
            GateKind::Reset => "Reset",
            GateKind::Se => "SE",
            GateKind::CultT => "CultT",
            GateKind::CultS => "CultS",
            GateKind::Merge => "Merge",
            GateKind::Split => "Split",
            GateKind::ZMove => "ZMove",
            GateKind::AMove => "AMove",
        }
    }

    pub fn parse(s: &str) -> Option<GateKind> {
        GateKind::ALL.iter().copied().find(|k| k.as_str() == s)
    }

    pub fn arity(self) -> Arity {
        match self {
            GateKind::I
            | GateKind::X
            | GateKind::Y
            | GateKind::Z
            | GateKind::H
            | GateKind::S
            | GateKind::Sdg
            | GateKind::T
            | GateKind::Tdg
            | GateKind::Rz
            | GateKind::Rx
            | GateKind::Ry
            | GateKind::U1q
            | GateKind::Measure
            | GateKind::Reset => Arity::Exactly(1),
            GateKind::Cnot | GateKind::Cz | GateKind::Swap | GateKind::U2q => Arity::Exactly(2),
            GateKind::Toffoli => Arity::Exactly(3),
            GateKind::Merge | GateKind::Split => Arity::Exactly(2),
            GateKind::Se | GateKind::CultT | GateKind::CultS | GateKind::ZMove | GateKind::AMove => {
                Arity::AtLeast(1)
            }
        }
    }

    pub fn takes_angle(self) -> bool {
        matches!(self, GateKind::Rz | GateKind::Rx | GateKind::Ry)
    }

    pub fn takes_matrix(self) -> bool {
        matches!(self, GateKind::U1q | GateKind::U2q)
    }

    pub fn is_pauli(self) -> bool {
        matches!(self, GateKind::I | GateKind::X | GateKind::Y | GateKind::Z)
    }

    /// Clifford gates tallied into the `l` count of [`GateCounts`]. The
    /// identity is excluded: it is free at every level.
    pub fn is_clifford_gate(self) -> bool {
        matches!(
            self,
            GateKind::X
                | GateKind::Y
                | GateKind::Z
                | GateKind::H
                | GateKind::S
                | GateKind::Sdg
                | GateKind::Cnot
                | GateKind::Cz
                | GateKind::Swap
        )
    }

    /// Kinds that exist only in the fault-tolerant primitive instruction set.
    pub fn is_primitive_only(self) -> bool {
        matches!(
            self,
            GateKind::Se
                | GateKind::CultT
                | GateKind::CultS
                | GateKind::Merge
                | GateKind::Split
                | GateKind::ZMove
                | GateKind::AMove
        )
    }

    /// Whether the kind may appear in a circuit tagged with `level`.
    pub fn allowed_at(self, level: Level) -> bool {
        match level {
            Level::Input => !self.is_primitive_only(),
            Level::CliffordRz => matches!(
                self,
                GateKind::I
                    | GateKind::X
                    | GateKind::Y
                    | GateKind::Z
                    | GateKind::H
                    | GateKind::S
                    | GateKind::Sdg
                    | GateKind::T
                    | GateKind::Tdg
                    | GateKind::Rz
                    | GateKind::Cnot
                    | GateKind::Measure
                    | GateKind::Reset
            ),
            Level::CliffordT => matches!(
                self,
                GateKind::I
                    | GateKind::X
                    | GateKind::Y
                    | GateKind::Z
                    | GateKind::H
                    | GateKind::S
                    | GateKind::Sdg
                    | GateKind::T
                    | GateKind::Tdg
                    | GateKind::Cnot
                    | GateKind::Measure
                    | GateKind::Reset
            ),
            Level::Primitive => matches!(
                self,
                GateKind::I
                    | GateKind::X
                    | GateKind::Y
                    | GateKind::Z
                    | GateKind::H
                    | GateKind::S
                    | GateKind::Cnot
                    | GateKind::Measure
                    | GateKind::Reset
            ) || self.is_primitive_only(),
        }
    }
}

impl fmt::Display for GateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Matrix payload for arbitrary-unitary input gates. Only stage-1 compilation
/// reads these; they never survive past [`Level::Input`] and are never
/// serialized.
#[derive(Clone, Debug, PartialEq)]
pub enum MatrixPayload {
    One(Box<Matrix2<Complex64>>),
    Two(Box<Matrix4<Complex64>>),
}

/// One gate application.
#[derive(Clone, Debug, PartialEq)]
pub struct Op {
    pub kind: GateKind,
    /// Ordered operands. For `CNOT` the control comes first; for `Merge` the
    /// two endpoint patches; for batch primitives (`CultT`, `SE`, ...) every
    /// patch the operation spans.
    pub qubits: Vec<u32>,
    /// Rotation angle in radians; present iff the kind is `Rz`/`Rx`/`Ry`.
    pub angle: Option<f64>,
    /// Classical control: index of the `Measure` op whose outcome gates this
    /// op.
    pub ctrl: Option<u32>,
    /// Unitary payload for `U1Q`/`U2Q`; internal to stage-1.
    pub matrix: Option<MatrixPayload>,
    /// Duration override in ticks, set by stage-2 for ops whose time is not a
    /// pure function of the kind (distance-dependent moves).
    pub dur_ticks: Option<u64>,
}

impl Op {
    pub fn new(kind: GateKind, qubits: Vec<u32>) -> Self {
        Op {
            kind,
            qubits,
            angle: None,
            ctrl: None,
            matrix: None,
            dur_ticks: None,
        }
    }

    pub fn rot(kind: GateKind, qubit: u32, angle: f64) -> Self {
        debug_assert!(kind.takes_angle());
        Op {
            angle: Some(angle),
            ..Op::new(kind, vec![qubit])
        }
    }

    pub fn rz(qubit: u32, angle: f64) -> Self {
        Op::rot(GateKind::Rz, qubit, angle)
    }

    pub fn u1q(qubit: u32, matrix: Matrix2<Complex64>) -> Self {
        Op {
            matrix: Some(MatrixPayload::One(Box::new(matrix))),
            ..Op::new(GateKind::U1q, vec![qubit])
        }
    }

    pub fn u2q(a: u32, b: u32, matrix: Matrix4<Complex64>) -> Self {
        Op {
            matrix: Some(MatrixPayload::Two(Box::new(matrix))),
            ..Op::new(GateKind::U2q, vec![a, b])
        }
    }

    pub fn with_ctrl(mut self, measure_op: u32) -> Self {
        self.ctrl = Some(measure_op);
        self
    }
}

/// An ordered circuit over qubits `0..qubits`.
#[derive(Clone, Debug, PartialEq)]
pub struct Circuit {
    pub qubits: u32,
    pub ops: Vec<Op>,
    pub level: Level,
    /// Accumulated global phase in radians. Physically unobservable; tracked
    /// so stage-1 rewrites preserve circuit matrices exactly.
    pub global_phase: f64,
}

impl Circuit {
    pub fn new(qubits: u32, level: Level) -> Self {
        Circuit {
            qubits,
            ops: Vec::new(),
            level,
            global_phase: 0.0,
        }
    }

    pub fn push(&mut self, op: Op) {
        self.ops.push(op);
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Check every structural invariant: operand bounds and distinctness,
    /// arity, angle/matrix presence, level membership, and classical-control
    /// references.
    pub fn validate(&self) -> Result<()> {
        for (i, op) in self.ops.iter().enumerate() {
            let fail = |msg: String| Err(Error::Validation(format!("op {i} ({}): {msg}", op.kind)));
            if !op.kind.allowed_at(self.level) {
                return fail(format!("not allowed at level {}", self.level));
            }
            match op.kind.arity() {
                Arity::Exactly(n) if op.qubits.len() != n => {
                    return fail(format!("expected {n} operand(s), got {}", op.qubits.len()));
                }
                Arity::AtLeast(n) if op.qubits.len() < n => {
                    return fail(format!(
                        "expected at least {n} operand(s), got {}",
                        op.qubits.len()
                    ));
                }
                _ => {}
            }
            for &q in &op.qubits {
                if q >= self.qubits {
                    return fail(format!("qubit {q} out of range (circuit has {})", self.qubits));
                }
            }
            let mut sorted = op.qubits.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != op.qubits.len() {
                return fail("repeated operand".into());
            }
            match (op.kind.takes_angle(), op.angle) {
                (true, None) => return fail("missing angle".into()),
                (false, Some(_)) => return fail("unexpected angle".into()),
                (true, Some(a)) if !a.is_finite() => return fail("non-finite angle".into()),
                _ => {}
            }
            match (op.kind.takes_matrix(), op.matrix.is_some()) {
                (true, false) => return fail("missing matrix payload".into()),
                (false, true) => return fail("unexpected matrix payload".into()),
                _ => {}
            }
            if let Some(c) = op.ctrl {
                if c as usize >= i {
                    return fail(format!("classical control references op {c}, not before it"));
                }
                if self.ops[c as usize].kind != GateKind::Measure {
                    return fail(format!("classical control references op {c}, not a Measure"));
                }
            }
        }
        Ok(())
    }
}

/// Tally of a circuit's ops, plus the three counts the error-budget solver
/// consumes: `k` rotations, `l` Clifford gates, `t` T gates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GateCounts {
    pub per_kind: BTreeMap<GateKind, u64>,
    /// Number of Rz gates.
    pub k: u64,
    /// Number of Clifford gates (Paulis, H, S/Sdg, CNOT, CZ, SWAP).
    pub l: u64,
    /// Number of T/Tdg gates.
    pub t: u64,
}

impl GateCounts {
    pub fn total(&self) -> u64 {
        self.per_kind.values().sum()
    }
}

/// Count every op by kind in a single pass.
pub fn gate_counts(circuit: &Circuit) -> GateCounts {
    let mut counts = GateCounts::default();
    for op in &circuit.ops {
        *counts.per_kind.entry(op.kind).or_insert(0) += 1;
        match op.kind {
            GateKind::Rz => counts.k += 1,
            GateKind::T | GateKind::Tdg => counts.t += 1,
            k if k.is_clifford_gate() => counts.l += 1,
            _ => {}
        }
    }
    counts
}
