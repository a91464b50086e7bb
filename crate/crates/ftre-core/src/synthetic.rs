//! Deterministic synthetic workloads.
//!
//! The estimator's benchmark studies need circuits with a controlled shape:
//! rotation-dominated layers for the cultivation-bound regime, and a
//! Trotterized evolution layer for compilation spot checks. Both generators
//! are pure functions of their arguments, so identical seeds reproduce
//! identical circuits byte for byte.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, GateKind, Level, Op};

/// Angle range that stays clear of the Clifford snap points at multiples of
/// pi/2, so every generated rotation survives stage 1 as a genuine Rz.
fn random_angle(rng: &mut ChaCha8Rng) -> f64 {
    let quadrant = rng.gen_range(0..4) as f64;
    quadrant * std::f64::consts::FRAC_PI_2 + rng.gen_range(0.2..1.3)
}

/// Rotation-dominated layered circuit: every layer applies one Rz to each
/// qubit, followed by a brickwork round of CNOTs to keep the state
/// entangled. The Rz count is `qubits * layers` exactly.
pub fn rz_heavy(qubits: u32, layers: u32, seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new(qubits, Level::Input);
    for layer in 0..layers {
        for q in 0..qubits {
            c.push(Op::rz(q, random_angle(&mut rng)));
        }
        let first = layer % 2;
        let mut a = first;
        while a + 1 < qubits {
            c.push(Op::new(GateKind::Cnot, vec![a, a + 1]));
            a += 2;
        }
    }
    c
}

/// One first-order Trotter step of a transverse-field Ising evolution on a
/// line: an Rx per qubit, then exp(-i theta ZZ/2) on even and odd
/// nearest-neighbour bonds via the CNOT-Rz-CNOT conjugation.
pub fn trotter_layer(qubits: u32, seed: u64) -> Circuit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = Circuit::new(qubits, Level::Input);
    for q in 0..qubits {
        c.push(Op::rot(GateKind::Rx, q, random_angle(&mut rng)));
    }
    for parity in 0..2 {
        let mut a = parity;
        while a + 1 < qubits {
            c.push(Op::new(GateKind::Cnot, vec![a, a + 1]));
            c.push(Op::rz(a + 1, random_angle(&mut rng)));
            c.push(Op::new(GateKind::Cnot, vec![a, a + 1]));
            a += 2;
        }
    }
    c
}
