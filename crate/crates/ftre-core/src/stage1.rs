//! Stage-1 compilation: lowering arbitrary input circuits to the
//! Clifford+Rz gate set.
//!
//! The pipeline expands multi-qubit gates into CNOT networks, synthesizes
//! two-qubit unitaries with a KAK (Cartan) decomposition over the CNOT
//! basis, lowers single-qubit unitaries through ZYZ Euler angles, and runs
//! a merge/eject cleanup pass that fuses adjacent rotations and cancels
//! inverse pairs. Global phase is tracked exactly so every rewrite
//! preserves the circuit matrix, not just the channel.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::sync::OnceLock;

use nalgebra::{DMatrix, Matrix2, Matrix4, Vector4};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::circuit::{Circuit, GateKind, Level, MatrixPayload, Op};
use crate::error::{Error, Result};

/// Rotation angles within this distance of a multiple of pi/2 are snapped
/// to the exact Clifford gate.
pub const SNAP_TOL: f64 = 1e-12;

/// Inputs to the matrix decompositions must be unitary to this max-norm.
const UNITARY_TOL: f64 = 1e-10;

/// Max-norm bound on the reconstruction defect of a KAK decomposition.
const KAK_TOL: f64 = 1e-9;

const PI32: f64 = 3.0 * FRAC_PI_2;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

// ---------------------------------------------------------------------------
// Gate matrices
// ---------------------------------------------------------------------------

/// Matrix of a named single-qubit gate, if the kind has one.
pub fn gate_matrix_1q(op: &Op) -> Option<Matrix2<Complex64>> {
    let s2 = std::f64::consts::FRAC_1_SQRT_2;
    let m = match op.kind {
        GateKind::I => Matrix2::identity(),
        GateKind::X => Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)),
        GateKind::Y => Matrix2::new(c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)),
        GateKind::Z => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)),
        GateKind::H => Matrix2::new(c(s2, 0.0), c(s2, 0.0), c(s2, 0.0), c(-s2, 0.0)),
        GateKind::S => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)),
        GateKind::Sdg => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0)),
        GateKind::T => Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, FRAC_PI_4).exp()),
        GateKind::Tdg => {
            Matrix2::new(c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -FRAC_PI_4).exp())
        }
        GateKind::Rz => rz_matrix(op.angle?),
        GateKind::Rx => {
            let h = op.angle? / 2.0;
            Matrix2::new(
                c(h.cos(), 0.0),
                c(0.0, -h.sin()),
                c(0.0, -h.sin()),
                c(h.cos(), 0.0),
            )
        }
        GateKind::Ry => {
            let h = op.angle? / 2.0;
            Matrix2::new(
                c(h.cos(), 0.0),
                c(-h.sin(), 0.0),
                c(h.sin(), 0.0),
                c(h.cos(), 0.0),
            )
        }
        GateKind::U1q => match op.matrix.as_ref()? {
            MatrixPayload::One(m) => **m,
            MatrixPayload::Two(_) => return None,
        },
        _ => return None,
    };
    Some(m)
}

fn rz_matrix(theta: f64) -> Matrix2<Complex64> {
    Matrix2::new(
        c(0.0, -theta / 2.0).exp(),
        c(0.0, 0.0),
        c(0.0, 0.0),
        c(0.0, theta / 2.0).exp(),
    )
}

/// Matrix of a two-qubit gate over operands `[a, b]` with `a` as the high
/// bit of the basis index.
fn gate_matrix_2q(op: &Op) -> Option<Matrix4<Complex64>> {
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let m = match op.kind {
        GateKind::Cnot => Matrix4::new(
            l, o, o, o, //
            o, l, o, o, //
            o, o, o, l, //
            o, o, l, o,
        ),
        GateKind::Cz => Matrix4::from_diagonal(&Vector4::new(l, l, l, -l)),
        GateKind::Swap => Matrix4::new(
            l, o, o, o, //
            o, o, l, o, //
            o, l, o, o, //
            o, o, o, l,
        ),
        GateKind::U2q => match op.matrix.as_ref()? {
            MatrixPayload::Two(m) => **m,
            MatrixPayload::One(_) => return None,
        },
        _ => return None,
    };
    Some(m)
}

/// Dense matrix of a circuit on at most three qubits, in the big-endian
/// basis (qubit 0 is the most significant bit). Includes the global phase.
/// Measurements, resets, classical control, and primitive-level operations
/// are rejected.
pub fn circuit_matrix(circuit: &Circuit) -> Result<DMatrix<Complex64>> {
    let n = circuit.qubits as usize;
    if n > 3 {
        return Err(Error::Stage1(format!(
            "circuit_matrix supports at most 3 qubits, got {n}"
        )));
    }
    let dim = 1usize << n;
    let mut acc = DMatrix::<Complex64>::identity(dim, dim);
    for op in &circuit.ops {
        if op.ctrl.is_some() {
            return Err(Error::Stage1(
                "circuit_matrix cannot evaluate classically controlled operations".into(),
            ));
        }
        let local: DMatrix<Complex64> = if op.kind == GateKind::Toffoli {
            let mut m = DMatrix::identity(8, 8);
            m[(6, 6)] = c(0.0, 0.0);
            m[(7, 7)] = c(0.0, 0.0);
            m[(6, 7)] = c(1.0, 0.0);
            m[(7, 6)] = c(1.0, 0.0);
            m
        } else if op.qubits.len() == 1 {
            let m = gate_matrix_1q(op).ok_or_else(|| {
                Error::Stage1(format!("no unitary matrix for {} operation", op.kind.as_str()))
            })?;
            DMatrix::from_fn(2, 2, |i, j| m[(i, j)])
        } else if op.qubits.len() == 2 {
            let m = gate_matrix_2q(op).ok_or_else(|| {
                Error::Stage1(format!("no unitary matrix for {} operation", op.kind.as_str()))
            })?;
            DMatrix::from_fn(4, 4, |i, j| m[(i, j)])
        } else {
            return Err(Error::Stage1(format!(
                "no unitary matrix for {} operation",
                op.kind.as_str()
            )));
        };
        acc = embed(&local, &op.qubits, n) * acc;
    }
    let phase = c(0.0, circuit.global_phase).exp();
    Ok(acc * phase)
}

/// Embeds a k-qubit matrix over the listed operands into the full space.
fn embed(local: &DMatrix<Complex64>, operands: &[u32], n: usize) -> DMatrix<Complex64> {
    let m = operands.len();
    let dim = 1usize << n;
    let mut full = DMatrix::<Complex64>::zeros(dim, dim);
    for j in 0..dim {
        let mut li = 0usize;
        for (k, &q) in operands.iter().enumerate() {
            let bit = (j >> (n - 1 - q as usize)) & 1;
            li |= bit << (m - 1 - k);
        }
        for lo in 0..(1usize << m) {
            let mut jo = j;
            for (k, &q) in operands.iter().enumerate() {
                let pos = n - 1 - q as usize;
                let bit = (lo >> (m - 1 - k)) & 1;
                jo = (jo & !(1usize << pos)) | (bit << pos);
            }
            full[(jo, j)] = local[(lo, li)];
        }
    }
    full
}

fn check_unitary2(u: &Matrix2<Complex64>) -> Result<()> {
    let defect = u.adjoint() * u - Matrix2::identity();
    if defect.iter().any(|x| x.norm() > UNITARY_TOL) {
        return Err(Error::Validation("matrix is not unitary".into()));
    }
    Ok(())
}

fn check_unitary4(u: &Matrix4<Complex64>) -> Result<()> {
    let defect = u.adjoint() * u - Matrix4::identity();
    if defect.iter().any(|x| x.norm() > UNITARY_TOL) {
        return Err(Error::Validation("matrix is not unitary".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Single-qubit Euler lowering
// ---------------------------------------------------------------------------

/// ZYZ Euler angles of a single-qubit unitary:
/// `U = exp(i*phase) * Rz(alpha) * Ry(beta) * Rz(gamma)` with `beta` in
/// `[0, pi]`. Returns `(alpha, beta, gamma, phase)`.
pub fn euler_zyz(u: &Matrix2<Complex64>) -> Result<(f64, f64, f64, f64)> {
    check_unitary2(u)?;
    let det = u[(0, 0)] * u[(1, 1)] - u[(0, 1)] * u[(1, 0)];
    let phase = det.arg() / 2.0;
    let unphase = c(0.0, -phase).exp();
    let v00 = u[(0, 0)] * unphase;
    let v10 = u[(1, 0)] * unphase;
    let v11 = u[(1, 1)] * unphase;
    let beta = 2.0 * v10.norm().atan2(v00.norm());
    let sum_half = v11.arg();
    let diff_half = v10.arg();
    Ok((sum_half + diff_half, beta, sum_half - diff_half, phase))
}

/// Gate templates in application order plus a global-phase correction.
type Rewrite = (Vec<(GateKind, Option<f64>)>, f64);

/// Replaces `Rz(theta)` with the exact Clifford when `theta` is within
/// `SNAP_TOL` of a multiple of pi/2, normalizing the angle into `[-pi, pi]`
/// otherwise. Returns the replacement ops and the global-phase correction.
fn rz_or_clifford(theta: f64) -> Rewrite {
    let m = (theta / TAU).round();
    let r = theta - TAU * m;
    let phase = PI * m;
    if r.abs() <= SNAP_TOL {
        (vec![], phase)
    } else if (r - FRAC_PI_2).abs() <= SNAP_TOL {
        (vec![(GateKind::S, None)], phase - FRAC_PI_4)
    } else if (r + FRAC_PI_2).abs() <= SNAP_TOL {
        (vec![(GateKind::Sdg, None)], phase + FRAC_PI_4)
    } else if (r.abs() - PI).abs() <= SNAP_TOL {
        (vec![(GateKind::Z, None)], phase - r.signum() * FRAC_PI_2)
    } else {
        (vec![(GateKind::Rz, Some(r))], phase)
    }
}

/// Lowers a single-qubit unitary to the Clifford+Rz alphabet via ZYZ
/// angles, snapping near-Clifford rotations. Returns gate templates in
/// application order plus the global phase of the rewrite.
fn canonical_1q(u: &Matrix2<Complex64>) -> Result<Rewrite> {
    let (alpha, beta, gamma, phase) = euler_zyz(u)?;
    let mut ops = Vec::new();
    let mut ph = phase;
    if beta.abs() <= SNAP_TOL {
        let (seq, d) = rz_or_clifford(alpha + gamma);
        ops.extend(seq);
        ph += d;
    } else if (beta - PI).abs() <= SNAP_TOL {
        // Ry(pi) = -iY, and Y commutes with Rz by negating the angle.
        ops.push((GateKind::Y, None));
        let (seq, d) = rz_or_clifford(alpha - gamma);
        ops.extend(seq);
        ph += d - FRAC_PI_2;
    } else {
        let (s1, d1) = rz_or_clifford(gamma);
        ops.extend(s1);
        ph += d1;
        // Ry(beta) = S H Rz(beta) H Sdg, exactly.
        ops.push((GateKind::Sdg, None));
        ops.push((GateKind::H, None));
        let (s2, d2) = rz_or_clifford(beta);
        ops.extend(s2);
        ph += d2;
        ops.push((GateKind::H, None));
        ops.push((GateKind::S, None));
        let (s3, d3) = rz_or_clifford(alpha);
        ops.extend(s3);
        ph += d3;
    }
    Ok((ops, ph))
}

// ---------------------------------------------------------------------------
// Multi-qubit expansion
// ---------------------------------------------------------------------------

/// Expands Toffoli gates into the standard 6-CNOT/7-T network and SWAP
/// gates into three CNOTs. Circuits that are already one- and two-qubit
/// only pass through unchanged.
pub fn decompose_multiqubit(circuit: &Circuit) -> Result<Circuit> {
    if circuit.level != Level::Input {
        return Err(Error::Stage1(format!(
            "multi-qubit expansion expects an input-level circuit, got {}",
            circuit.level.as_str()
        )));
    }
    circuit.validate()?;
    let mut out = Circuit::new(circuit.qubits, Level::Input);
    out.global_phase = circuit.global_phase;
    for op in &circuit.ops {
        match op.kind {
            GateKind::Toffoli => {
                let (a, b, t) = (op.qubits[0], op.qubits[1], op.qubits[2]);
                for (kind, qs) in toffoli_network(a, b, t) {
                    let mut next = Op::new(kind, qs);
                    next.ctrl = op.ctrl;
                    out.ops.push(next);
                }
            }
            GateKind::Swap => {
                let (a, b) = (op.qubits[0], op.qubits[1]);
                for qs in [vec![a, b], vec![b, a], vec![a, b]] {
                    let mut next = Op::new(GateKind::Cnot, qs);
                    next.ctrl = op.ctrl;
                    out.ops.push(next);
                }
            }
            _ => out.ops.push(op.clone()),
        }
    }
    Ok(out)
}

fn toffoli_network(a: u32, b: u32, t: u32) -> Vec<(GateKind, Vec<u32>)> {
    vec![
        (GateKind::H, vec![t]),
        (GateKind::Cnot, vec![b, t]),
        (GateKind::Tdg, vec![t]),
        (GateKind::Cnot, vec![a, t]),
        (GateKind::T, vec![t]),
        (GateKind::Cnot, vec![b, t]),
        (GateKind::Tdg, vec![t]),
        (GateKind::Cnot, vec![a, t]),
        (GateKind::T, vec![b]),
        (GateKind::T, vec![t]),
        (GateKind::H, vec![t]),
        (GateKind::Cnot, vec![a, b]),
        (GateKind::T, vec![a]),
        (GateKind::Tdg, vec![b]),
        (GateKind::Cnot, vec![a, b]),
    ]
}

// ---------------------------------------------------------------------------
// KAK decomposition over the CNOT basis
// ---------------------------------------------------------------------------

/// Result of synthesizing a two-qubit unitary: at most three CNOTs plus
/// single-qubit unitaries over local qubit labels 0 (high bit of the input
/// matrix) and 1 (low bit), and the global phase of the sequence.
#[derive(Clone, Debug)]
pub struct KakDecomposition {
    pub ops: Vec<Op>,
    pub global_phase: f64,
}

impl KakDecomposition {
    /// Number of CNOT gates in the synthesized sequence.
    pub fn cnot_count(&self) -> usize {
        self.ops.iter().filter(|op| op.kind == GateKind::Cnot).count()
    }
}

/// Cartan coordinates and local factors of a two-qubit unitary:
/// `U = exp(i*phase) (k1l x k1r) exp(i(a XX + b YY + c ZZ)) (k2l x k2r)`.
struct WeylDecomposition {
    a: f64,
    b: f64,
    c: f64,
    global_phase: f64,
    k1l: Matrix2<Complex64>,
    k1r: Matrix2<Complex64>,
    k2l: Matrix2<Complex64>,
    k2r: Matrix2<Complex64>,
}

fn magic_basis() -> Matrix4<Complex64> {
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    Matrix4::new(
        l, i, o, o, //
        o, o, i, l, //
        o, o, i, -l, //
        l, -i, o, o,
    )
}

fn magic_basis_dagger() -> Matrix4<Complex64> {
    let o = c(0.0, 0.0);
    let h = c(0.5, 0.0);
    let ih = c(0.0, 0.5);
    Matrix4::new(
        h, o, o, h, //
        -ih, o, o, ih, //
        o, -ih, -ih, o, //
        o, h, -h, o,
    )
}

fn magic_out_of(u: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    magic_basis_dagger() * u * magic_basis()
}

fn magic_into(u: &Matrix4<Complex64>) -> Matrix4<Complex64> {
    magic_basis() * u * magic_basis_dagger()
}

fn ipx() -> Matrix2<Complex64> {
    Matrix2::new(c(0.0, 0.0), c(0.0, 1.0), c(0.0, 1.0), c(0.0, 0.0))
}

fn ipy() -> Matrix2<Complex64> {
    Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0))
}

fn ipz() -> Matrix2<Complex64> {
    Matrix2::new(c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, -1.0))
}

fn det2(m: &Matrix2<Complex64>) -> Complex64 {
    m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]
}

/// Splits an SU(4) matrix that is (numerically) a tensor product into its
/// one-qubit factors and a residual phase.
fn decompose_product(
    su4: &Matrix4<Complex64>,
) -> Result<(Matrix2<Complex64>, Matrix2<Complex64>, f64)> {
    let mut r = su4.fixed_view::<2, 2>(0, 0).into_owned();
    let mut det_r = det2(&r);
    if det_r.norm() < 0.1 {
        r = su4.fixed_view::<2, 2>(2, 0).into_owned();
        det_r = det2(&r);
    }
    if det_r.norm() < 0.1 {
        return Err(Error::Stage1(
            "matrix is not a tensor product of one-qubit factors".into(),
        ));
    }
    let r = r / det_r.sqrt();
    let temp = su4 * Matrix2::identity().kronecker(&r.adjoint());
    let mut l = Matrix2::zeros();
    for (li, ti) in [0usize, 2].iter().enumerate() {
        for (lj, tj) in [0usize, 2].iter().enumerate() {
            l[(li, lj)] = temp[(*ti, *tj)];
        }
    }
    let det_l = det2(&l);
    if det_l.norm() < 0.9 {
        return Err(Error::Stage1(
            "matrix is not a tensor product of one-qubit factors".into(),
        ));
    }
    let l = l / det_l.sqrt();
    Ok((l, r, det_l.arg() / 2.0))
}

/// Cartan (Weyl chamber) decomposition of a two-qubit unitary. The
/// simultaneous diagonalization perturbs the matrix with seeded random
/// mixing coefficients until the eigenbasis is numerically consistent.
fn weyl_decompose(unitary: &Matrix4<Complex64>) -> Result<WeylDecomposition> {
    let det_u = unitary.determinant();
    let u = unitary * det_u.powf(-0.25);
    let mut global_phase = det_u.arg() / 4.0;
    let u_p = magic_out_of(&u);
    let m2 = u_p.transpose() * u_p;

    let mut rng = ChaCha8Rng::seed_from_u64(2023);
    let mut found: Option<(Matrix4<f64>, [Complex64; 4])> = None;
    for attempt in 0..100 {
        let (ra, rb) = if attempt == 0 {
            (1.2602066112249388, 0.22317849046722027)
        } else {
            (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        };
        let mut mixed = Matrix4::<f64>::zeros();
        for i in 0..4 {
            for j in 0..4 {
                mixed[(i, j)] = ra * m2[(i, j)].re + rb * m2[(i, j)].im;
            }
        }
        let mixed = (mixed + mixed.transpose()) * 0.5;
        let eig = mixed.symmetric_eigen();
        let p = eig.eigenvectors;
        let pc = p.map(|x| c(x, 0.0));
        let diagonalized = pc.transpose() * m2 * pc;
        let mut diag = [c(0.0, 0.0); 4];
        for (k, d) in diag.iter_mut().enumerate() {
            *d = diagonalized[(k, k)];
        }
        let recon = pc * Matrix4::from_diagonal(&Vector4::from(diag)) * pc.transpose();
        let ok = (0..4).all(|i| {
            (0..4).all(|j| (recon[(i, j)] - m2[(i, j)]).norm() <= 1e-13 * (1.0 + m2[(i, j)].norm()))
        });
        if ok {
            found = Some((p, diag));
            break;
        }
    }
    let (mut p, diag) = found.ok_or_else(|| {
        Error::Stage1("simultaneous diagonalization of the magic-basis form failed".into())
    })?;

    let mut d = [0.0f64; 4];
    for k in 0..4 {
        d[k] = -diag[k].arg() / 2.0;
    }
    d[3] = -d[0] - d[1] - d[2];
    let mut cs = [0.0f64; 3];
    for i in 0..3 {
        cs[i] = ((d[i] + d[3]) / 2.0).rem_euclid(TAU);
    }
    let cstemp: Vec<f64> = cs
        .iter()
        .map(|x| {
            let r = x.rem_euclid(FRAC_PI_2);
            r.min(FRAC_PI_2 - r)
        })
        .collect();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&x, &y| cstemp[x].partial_cmp(&cstemp[y]).unwrap());
    let order = [order[1], order[2], order[0]];
    let (cs_old, d_old, p_old) = (cs, d, p);
    for i in 0..3 {
        cs[i] = cs_old[order[i]];
        d[i] = d_old[order[i]];
        for r in 0..4 {
            p[(r, i)] = p_old[(r, order[i])];
        }
    }
    if p.determinant() < 0.0 {
        for r in 0..4 {
            p[(r, 3)] = -p[(r, 3)];
        }
    }
    let pc = p.map(|x| c(x, 0.0));
    let temp = Matrix4::from_diagonal(&Vector4::new(
        c(0.0, d[0]).exp(),
        c(0.0, d[1]).exp(),
        c(0.0, d[2]).exp(),
        c(0.0, d[3]).exp(),
    ));
    let k1 = magic_into(&(u_p * pc * temp));
    let k2 = magic_into(&pc.transpose());

    let (mut k1l, mut k1r, phase_l) = decompose_product(&k1)?;
    let (k2l, mut k2r, phase_r) = decompose_product(&k2)?;
    global_phase += phase_l + phase_r;

    // Reflect into the Weyl chamber.
    if cs[0] > FRAC_PI_2 {
        cs[0] -= PI32;
        k1l *= ipy();
        k1r *= ipy();
        global_phase += FRAC_PI_2;
    }
    if cs[1] > FRAC_PI_2 {
        cs[1] -= PI32;
        k1l *= ipx();
        k1r *= ipx();
        global_phase += FRAC_PI_2;
    }
    let mut conjs = 0u32;
    if cs[0] > FRAC_PI_4 {
        cs[0] = FRAC_PI_2 - cs[0];
        k1l *= ipy();
        k2r = ipy() * k2r;
        conjs += 1;
        global_phase -= FRAC_PI_2;
    }
    if cs[1] > FRAC_PI_4 {
        cs[1] = FRAC_PI_2 - cs[1];
        k1l *= ipx();
        k2r = ipx() * k2r;
        conjs += 1;
        global_phase += FRAC_PI_2;
        if conjs == 1 {
            global_phase -= PI;
        }
    }
    if cs[2] > FRAC_PI_2 {
        cs[2] -= PI32;
        k1l *= ipz();
        k1r *= ipz();
        global_phase += FRAC_PI_2;
        if conjs == 1 {
            global_phase -= PI;
        }
    }
    if conjs == 1 {
        cs[2] = FRAC_PI_2 - cs[2];
        k1l *= ipz();
        k2r = ipz() * k2r;
        global_phase += FRAC_PI_2;
    }
    if cs[2] > FRAC_PI_4 {
        cs[2] -= FRAC_PI_2;
        k1l *= ipz();
        k1r *= ipz();
        global_phase -= FRAC_PI_2;
    }

    Ok(WeylDecomposition {
        a: cs[1],
        b: cs[0],
        c: cs[2],
        global_phase,
        k1l,
        k1r,
        k2l,
        k2r,
    })
}

fn trace_to_fid(tr: Complex64) -> f64 {
    (4.0 + tr.norm_sqr()) / 20.0
}

/// Precomputed local corrections for synthesis over the CNOT basis gate.
struct CnotBasisDecomposer {
    basis: WeylDecomposition,
    u0l: Matrix2<Complex64>,
    u0r: Matrix2<Complex64>,
    u1l: Matrix2<Complex64>,
    u1ra: Matrix2<Complex64>,
    u1rb: Matrix2<Complex64>,
    u2la: Matrix2<Complex64>,
    u2lb: Matrix2<Complex64>,
    u2ra: Matrix2<Complex64>,
    u2rb: Matrix2<Complex64>,
    u3l: Matrix2<Complex64>,
    u3r: Matrix2<Complex64>,
    q0l: Matrix2<Complex64>,
    q0r: Matrix2<Complex64>,
    q1la: Matrix2<Complex64>,
    q1lb: Matrix2<Complex64>,
    q1ra: Matrix2<Complex64>,
    q1rb: Matrix2<Complex64>,
    q2l: Matrix2<Complex64>,
    q2r: Matrix2<Complex64>,
}

/// CNOT matrix with the control on the low bit, matching the qubit
/// labelling used while assembling the synthesized sequence.
fn cnot_low_control() -> Matrix4<Complex64> {
    let o = c(0.0, 0.0);
    let l = c(1.0, 0.0);
    Matrix4::new(
        l, o, o, o, //
        o, o, o, l, //
        o, o, l, o, //
        o, l, o, o,
    )
}

impl CnotBasisDecomposer {
    fn new() -> Result<Self> {
        let basis = weyl_decompose(&cnot_low_control())?;
        let b = basis.b;
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        let k1ld = basis.k1l.adjoint();
        let k1rd = basis.k1r.adjoint();
        let k2ld = basis.k2l.adjoint();
        let k2rd = basis.k2r.adjoint();

        let t = c(0.5, -0.5);
        let k11l = Matrix2::new(
            t * (c(0.0, -1.0) * c(0.0, -b).exp()),
            t * c(0.0, -b).exp(),
            t * (c(0.0, -1.0) * c(0.0, b).exp()),
            t * -(c(0.0, b).exp()),
        );
        let k11r = Matrix2::new(
            c(s2, 0.0) * (c(0.0, 1.0) * c(0.0, -b).exp()),
            c(s2, 0.0) * -(c(0.0, -b).exp()),
            c(s2, 0.0) * c(0.0, b).exp(),
            c(s2, 0.0) * (c(0.0, -1.0) * c(0.0, b).exp()),
        );
        let k12l = Matrix2::new(c(0.5, 0.5), c(0.5, 0.5), c(-0.5, 0.5), c(0.5, -0.5));
        let k12r = Matrix2::new(c(0.0, s2), c(s2, 0.0), c(-s2, 0.0), c(0.0, -s2));
        let k32l_k21l = Matrix2::new(
            c(s2, 0.0) * c(1.0, (2.0 * b).cos()),
            c(s2, 0.0) * c(0.0, (2.0 * b).sin()),
            c(s2, 0.0) * c(0.0, (2.0 * b).sin()),
            c(s2, 0.0) * c(1.0, -(2.0 * b).cos()),
        );
        let t = c(0.5, 0.5);
        let k21r = Matrix2::new(
            t * (c(0.0, -1.0) * c(0.0, -2.0 * b).exp()),
            t * c(0.0, -2.0 * b).exp(),
            t * (c(0.0, 1.0) * c(0.0, 2.0 * b).exp()),
            t * c(0.0, 2.0 * b).exp(),
        );
        let k22l = Matrix2::new(c(s2, 0.0), c(-s2, 0.0), c(s2, 0.0), c(s2, 0.0));
        let k22r = Matrix2::new(c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0));
        let k31l = Matrix2::new(
            c(s2, 0.0) * c(0.0, -b).exp(),
            c(s2, 0.0) * c(0.0, -b).exp(),
            c(s2, 0.0) * -(c(0.0, b).exp()),
            c(s2, 0.0) * c(0.0, b).exp(),
        );
        let k31r = Matrix2::new(
            c(0.0, 1.0) * c(0.0, b).exp(),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, -1.0) * c(0.0, -b).exp(),
        );
        let t = c(0.5, 0.5);
        let k32r = Matrix2::new(
            t * c(0.0, b).exp(),
            t * -(c(0.0, -b).exp()),
            t * (c(0.0, -1.0) * c(0.0, b).exp()),
            t * (c(0.0, -1.0) * c(0.0, -b).exp()),
        );

        Ok(CnotBasisDecomposer {
            u0l: k31l * k1ld,
            u0r: k31r * k1rd,
            u1l: k2ld * k32l_k21l * k1ld,
            u1ra: k2rd * k32r,
            u1rb: k21r * k1rd,
            u2la: k2ld * k22l,
            u2lb: k11l * k1ld,
            u2ra: k2rd * k22r,
            u2rb: k11r * k1rd,
            u3l: k2ld * k12l,
            u3r: k2rd * k12r,
            q0l: k12l.adjoint() * k1ld,
            q0r: k12r.adjoint() * ipz() * k1rd,
            q1la: k2ld * k11l.adjoint(),
            q1lb: k11l * k1ld,
            q1ra: k2rd * ipz() * k11r.adjoint(),
            q1rb: k11r * k1rd,
            q2l: k2ld * k12l,
            q2r: k2rd * k12r,
            basis,
        })
    }

    /// Traces of the target against the best approximation using 0..=3
    /// basis gates.
    fn traces(&self, t: &WeylDecomposition) -> [Complex64; 4] {
        [
            4.0 * c(
                t.a.cos() * t.b.cos() * t.c.cos(),
                t.a.sin() * t.b.sin() * t.c.sin(),
            ),
            4.0 * c(
                (FRAC_PI_4 - t.a).cos() * (self.basis.b - t.b).cos() * t.c.cos(),
                (FRAC_PI_4 - t.a).sin() * (self.basis.b - t.b).sin() * t.c.sin(),
            ),
            c(4.0 * t.c.cos(), 0.0),
            c(4.0, 0.0),
        ]
    }

    fn decomp0(t: &WeylDecomposition) -> Vec<Matrix2<Complex64>> {
        vec![t.k1r * t.k2r, t.k1l * t.k2l]
    }

    fn decomp1(&self, t: &WeylDecomposition) -> Vec<Matrix2<Complex64>> {
        vec![
            self.basis.k2r.adjoint() * t.k2r,
            self.basis.k2l.adjoint() * t.k2l,
            t.k1r * self.basis.k1r.adjoint(),
            t.k1l * self.basis.k1l.adjoint(),
        ]
    }

    fn decomp2(&self, t: &WeylDecomposition) -> Vec<Matrix2<Complex64>> {
        vec![
            self.q2r * t.k2r,
            self.q2l * t.k2l,
            self.q1ra * rz_matrix(2.0 * t.b) * self.q1rb,
            self.q1la * rz_matrix(-2.0 * t.a) * self.q1lb,
            t.k1r * self.q0r,
            t.k1l * self.q0l,
        ]
    }

    fn decomp3(&self, t: &WeylDecomposition) -> Vec<Matrix2<Complex64>> {
        vec![
            self.u3r * t.k2r,
            self.u3l * t.k2l,
            self.u2ra * rz_matrix(2.0 * t.b) * self.u2rb,
            self.u2la * rz_matrix(-2.0 * t.a) * self.u2lb,
            self.u1ra * rz_matrix(-2.0 * t.c) * self.u1rb,
            self.u1l,
            t.k1r * self.u0r,
            t.k1l * self.u0l,
        ]
    }
}

fn cnot_decomposer() -> &'static CnotBasisDecomposer {
    static DECOMPOSER: OnceLock<CnotBasisDecomposer> = OnceLock::new();
    DECOMPOSER.get_or_init(|| {
        CnotBasisDecomposer::new().expect("the CNOT basis decomposition is exact")
    })
}

/// Synthesizes a two-qubit unitary (big-endian over local qubits 0 and 1)
/// into at most three CNOTs and at most eight single-qubit unitaries. The
/// reconstruction, including global phase, matches the input to max-norm
/// 1e-9.
pub fn kak_decompose(unitary: &Matrix4<Complex64>) -> Result<KakDecomposition> {
    check_unitary4(unitary)?;
    let target = weyl_decompose(unitary)?;
    let dec = cnot_decomposer();
    let traces = dec.traces(&target);
    let nbasis = traces
        .iter()
        .position(|&tr| trace_to_fid(tr) >= 1.0 - 1e-12)
        .unwrap_or(3);
    let locals = match nbasis {
        0 => CnotBasisDecomposer::decomp0(&target),
        1 => dec.decomp1(&target),
        2 => dec.decomp2(&target),
        3 => dec.decomp3(&target),
        _ => unreachable!(),
    };
    let mut global_phase = target.global_phase - nbasis as f64 * dec.basis.global_phase;
    if nbasis == 2 {
        global_phase += PI;
    }
    // Even list entries act on the low bit (local qubit 1), odd entries on
    // the high bit (local qubit 0); the basis CNOT is controlled by the
    // low bit.
    let mut ops = Vec::with_capacity(2 * nbasis + 3);
    for i in 0..nbasis {
        ops.push(Op::u1q(1, locals[2 * i]));
        ops.push(Op::u1q(0, locals[2 * i + 1]));
        ops.push(Op::new(GateKind::Cnot, vec![1, 0]));
    }
    ops.push(Op::u1q(1, locals[2 * nbasis]));
    ops.push(Op::u1q(0, locals[2 * nbasis + 1]));

    let result = KakDecomposition { ops, global_phase };
    let mut check = Circuit::new(2, Level::Input);
    check.ops = result.ops.clone();
    check.global_phase = result.global_phase;
    let recon = circuit_matrix(&check)?;
    let defect = (0..4)
        .flat_map(|i| (0..4).map(move |j| (i, j)))
        .map(|(i, j)| (recon[(i, j)] - unitary[(i, j)]).norm())
        .fold(0.0f64, f64::max);
    if defect > KAK_TOL {
        return Err(Error::Stage1(format!(
            "two-qubit synthesis reconstruction defect {defect:.3e} exceeds {KAK_TOL:.0e}"
        )));
    }
    Ok(result)
}

// ---------------------------------------------------------------------------
// Merge/eject cleanup
// ---------------------------------------------------------------------------

/// Fuses adjacent single-qubit gates, cancels adjacent inverse pairs (both
/// one- and two-qubit), snaps near-Clifford rotations, and drops identity
/// rotations. The circuit matrix is preserved exactly, including global
/// phase; the gate count never increases; the pass is idempotent.
pub fn merge_eject(circuit: &Circuit) -> Result<Circuit> {
    circuit.validate()?;
    for op in &circuit.ops {
        if op.qubits.len() > 2 {
            return Err(Error::Stage1(
                "merge/eject expects one- and two-qubit operations only".into(),
            ));
        }
    }
    let mut ops = circuit.ops.clone();
    let mut phase = circuit.global_phase;
    loop {
        let cancelled = cancel_2q_pairs(&mut ops);
        let fused = fuse_1q_runs(&mut ops, circuit.qubits, &mut phase)?;
        if !cancelled && !fused {
            break;
        }
    }
    let mut out = Circuit::new(circuit.qubits, circuit.level);
    out.ops = ops;
    // Normalized into (-pi, pi] so repeated passes agree at the boundary.
    let r = phase.rem_euclid(TAU);
    out.global_phase = if r > PI { r - TAU } else { r };
    Ok(out)
}

/// Rebuilds the op list, dropping flagged entries and splicing in
/// replacements ahead of the index they keyed on. Classical-control
/// references are remapped to the surviving indices.
fn rebuild(ops: &mut Vec<Op>, delete: &[bool], mut replace: BTreeMap<usize, Vec<Op>>) {
    let mut map = vec![u32::MAX; ops.len()];
    let mut out = Vec::with_capacity(ops.len());
    for (i, op) in ops.iter().enumerate() {
        if let Some(rep) = replace.remove(&i) {
            out.extend(rep);
        }
        if !delete[i] {
            map[i] = out.len() as u32;
            out.push(op.clone());
        }
    }
    for op in &mut out {
        if let Some(ctl) = op.ctrl {
            debug_assert_ne!(map[ctl as usize], u32::MAX);
            op.ctrl = Some(map[ctl as usize]);
        }
    }
    *ops = out;
}

fn cancel_2q_pairs(ops: &mut Vec<Op>) -> bool {
    let n = ops.len();
    let mut delete = vec![false; n];
    let mut changed = false;
    for i in 0..n {
        if delete[i] || ops[i].ctrl.is_some() {
            continue;
        }
        if !matches!(ops[i].kind, GateKind::Cnot | GateKind::Cz | GateKind::Swap) {
            continue;
        }
        let (a, b) = (ops[i].qubits[0], ops[i].qubits[1]);
        let partner = (i + 1..n).find(|&j| {
            !delete[j] && ops[j].qubits.iter().any(|&q| q == a || q == b)
        });
        let Some(j) = partner else { continue };
        if delete[j] || ops[j].ctrl.is_some() || ops[j].kind != ops[i].kind {
            continue;
        }
        let same = if ops[i].kind == GateKind::Cnot {
            ops[j].qubits == ops[i].qubits
        } else {
            ops[j].qubits.len() == 2
                && ((ops[j].qubits[0] == a && ops[j].qubits[1] == b)
                    || (ops[j].qubits[0] == b && ops[j].qubits[1] == a))
        };
        if same {
            delete[i] = true;
            delete[j] = true;
            changed = true;
        }
    }
    if changed {
        rebuild(ops, &delete, BTreeMap::new());
    }
    changed
}

fn is_plain_1q(op: &Op) -> bool {
    if op.ctrl.is_some() || op.qubits.len() != 1 {
        return false;
    }
    matches!(
        op.kind,
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
    )
}

fn fuse_1q_runs(ops: &mut Vec<Op>, qubits: u32, phase: &mut f64) -> Result<bool> {
    let n = ops.len();
    let mut delete = vec![false; n];
    let mut replace: BTreeMap<usize, Vec<Op>> = BTreeMap::new();
    let mut changed = false;
    for q in 0..qubits {
        let mut run: Vec<usize> = Vec::new();
        for i in 0..n {
            if !ops[i].qubits.contains(&q) {
                continue;
            }
            if is_plain_1q(&ops[i]) {
                run.push(i);
            } else {
                changed |= process_run(ops, &run, q, phase, &mut delete, &mut replace)?;
                run.clear();
            }
        }
        changed |= process_run(ops, &run, q, phase, &mut delete, &mut replace)?;
    }
    if changed {
        rebuild(ops, &delete, replace);
    }
    Ok(changed)
}

/// Rewrites one maximal run of single-qubit gates on qubit `q`. Chooses
/// between the peephole-simplified run and (for longer runs) a fresh Euler
/// resynthesis of the fused matrix, keeping whichever is strictly shorter.
fn process_run(
    ops: &[Op],
    run: &[usize],
    q: u32,
    phase: &mut f64,
    delete: &mut [bool],
    replace: &mut BTreeMap<usize, Vec<Op>>,
) -> Result<bool> {
    if run.is_empty() {
        return Ok(false);
    }
    let templates: Vec<Op> = run.iter().map(|&i| ops[i].clone()).collect();
    let (peeped, peep_phase) = peephole(templates.clone());

    let mut best = peeped;
    let mut best_phase = peep_phase;
    if run.len() >= 2 {
        let mut fused = Matrix2::identity();
        for op in &templates {
            let m = gate_matrix_1q(op).ok_or_else(|| {
                Error::Stage1(format!("cannot fuse {} operation", op.kind.as_str()))
            })?;
            fused = m * fused;
        }
        let (canon, canon_phase) = canonical_1q(&fused)?;
        let canon_ops: Vec<Op> = canon
            .into_iter()
            .map(|(kind, angle)| match angle {
                Some(a) => Op::rot(kind, q, a),
                None => Op::new(kind, vec![q]),
            })
            .collect();
        let (canon_ops, extra) = peephole(canon_ops);
        if canon_ops.len() < best.len() {
            best = canon_ops;
            best_phase = canon_phase + extra;
        }
    }

    if same_ops(&best, &templates) {
        return Ok(false);
    }
    for &i in run {
        delete[i] = true;
    }
    replace.insert(run[0], best);
    *phase += best_phase;
    Ok(true)
}

fn same_ops(a: &[Op], b: &[Op]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.kind == y.kind
                && x.angle.map(f64::to_bits) == y.angle.map(f64::to_bits)
                && x.matrix == y.matrix
        })
}

/// Exact local rewrites on a run of single-qubit gates: inverse-pair
/// cancellation, Pauli products, S/Z and T ladder collapses, rotation
/// merging, identity elimination, and Rz angle normalization. Returns the
/// simplified run and the accumulated global-phase correction.
fn peephole(mut run: Vec<Op>) -> (Vec<Op>, f64) {
    let mut phase = 0.0f64;
    // Normalize rotation angles first so the pair rules see canonical gates.
    let mut i = 0;
    while i < run.len() {
        if run[i].kind == GateKind::Rz {
            let q = run[i].qubits[0];
            let (rep, d) = rz_or_clifford(run[i].angle.unwrap());
            if rep.len() != 1
                || rep[0].0 != GateKind::Rz
                || rep[0].1.map(f64::to_bits) != run[i].angle.map(f64::to_bits)
            {
                phase += d;
                let rep: Vec<Op> = rep
                    .into_iter()
                    .map(|(kind, angle)| match angle {
                        Some(a) => Op::rot(kind, q, a),
                        None => Op::new(kind, vec![q]),
                    })
                    .collect();
                run.splice(i..=i, rep);
                continue;
            }
        }
        i += 1;
    }
    loop {
        let mut fired = false;
        let mut i = 0;
        while i + 1 < run.len() {
            if let Some((rep, d)) = pair_rule(&run[i], &run[i + 1]) {
                let q = run[i].qubits[0];
                phase += d;
                let rep: Vec<Op> = rep
                    .into_iter()
                    .map(|(kind, angle)| match angle {
                        Some(a) => Op::rot(kind, q, a),
                        None => Op::new(kind, vec![q]),
                    })
                    .collect();
                run.splice(i..=i + 1, rep);
                fired = true;
                i = i.saturating_sub(1);
            } else {
                i += 1;
            }
        }
        if !fired {
            break;
        }
    }
    (run, phase)
}

/// Exact rewrite for the ordered pair (first applied, then second), or
/// `None` when the pair has no shorter named form.
fn pair_rule(first: &Op, second: &Op) -> Option<Rewrite> {
    use GateKind::*;
    if first.matrix.is_some() || second.matrix.is_some() {
        return None;
    }
    if first.kind == I {
        return Some((vec![(second.kind, second.angle)], 0.0));
    }
    if second.kind == I {
        return Some((vec![(first.kind, first.angle)], 0.0));
    }
    if first.kind == Rz && second.kind == Rz {
        return Some(rz_or_clifford(first.angle.unwrap() + second.angle.unwrap()));
    }
    let out = match (first.kind, second.kind) {
        (X, X) | (Y, Y) | (Z, Z) | (H, H) | (S, Sdg) | (Sdg, S) | (T, Tdg) | (Tdg, T) => {
            (vec![], 0.0)
        }
        (S, S) | (Sdg, Sdg) => (vec![(Z, None)], 0.0),
        (T, T) => (vec![(S, None)], 0.0),
        (Tdg, Tdg) => (vec![(Sdg, None)], 0.0),
        (Z, S) | (S, Z) => (vec![(Sdg, None)], 0.0),
        (Z, Sdg) | (Sdg, Z) => (vec![(S, None)], 0.0),
        // Pauli products: the matrix of the pair is the third Pauli times
        // a tracked phase of +/- pi/2.
        (X, Y) => (vec![(Z, None)], -FRAC_PI_2),
        (Y, X) => (vec![(Z, None)], FRAC_PI_2),
        (Y, Z) => (vec![(X, None)], -FRAC_PI_2),
        (Z, Y) => (vec![(X, None)], FRAC_PI_2),
        (Z, X) => (vec![(Y, None)], -FRAC_PI_2),
        (X, Z) => (vec![(Y, None)], FRAC_PI_2),
        _ => return None,
    };
    Some(out)
}

// ---------------------------------------------------------------------------
// Full stage-1 pipeline
// ---------------------------------------------------------------------------

/// Lowers an input-level circuit to the Clifford+Rz alphabet. T and Tdg
/// become Rz(+/- pi/4) rotations; controlled-Z, SWAP, Toffoli, and matrix
/// payloads are expanded over CNOT; the merge/eject pass then cleans up.
/// The circuit matrix (for up to three qubits, where it is defined) is
/// preserved to max-norm 1e-9 including global phase.
pub fn to_clifford_rz(circuit: &Circuit) -> Result<Circuit> {
    let expanded = decompose_multiqubit(circuit)?;

    let mut two_lowered = Circuit::new(expanded.qubits, Level::Input);
    two_lowered.global_phase = expanded.global_phase;
    for op in &expanded.ops {
        match op.kind {
            GateKind::Cz => {
                let (a, b) = (op.qubits[0], op.qubits[1]);
                for mut next in [
                    Op::new(GateKind::H, vec![b]),
                    Op::new(GateKind::Cnot, vec![a, b]),
                    Op::new(GateKind::H, vec![b]),
                ] {
                    next.ctrl = op.ctrl;
                    two_lowered.ops.push(next);
                }
            }
            GateKind::U2q => {
                let Some(MatrixPayload::Two(m)) = op.matrix.as_ref() else {
                    return Err(Error::Stage1("matrix payload missing on 2-qubit unitary".into()));
                };
                let kak = kak_decompose(m)?;
                two_lowered.global_phase += kak.global_phase;
                for kop in kak.ops {
                    let mut next = kop.clone();
                    next.qubits = kop.qubits.iter().map(|&l| op.qubits[l as usize]).collect();
                    next.ctrl = op.ctrl;
                    two_lowered.ops.push(next);
                }
            }
            _ => two_lowered.ops.push(op.clone()),
        }
    }

    let mut lowered = Circuit::new(expanded.qubits, Level::CliffordRz);
    lowered.global_phase = two_lowered.global_phase;
    for op in &two_lowered.ops {
        let q = op.qubits[0];
        match op.kind {
            GateKind::T => {
                lowered.ops.push(Op::rz(q, FRAC_PI_4).with_ctrl_opt(op.ctrl));
                lowered.global_phase += PI / 8.0;
            }
            GateKind::Tdg => {
                lowered.ops.push(Op::rz(q, -FRAC_PI_4).with_ctrl_opt(op.ctrl));
                lowered.global_phase -= PI / 8.0;
            }
            GateKind::Rx => {
                let theta = op.angle.unwrap();
                lowered.ops.push(Op::new(GateKind::H, vec![q]).with_ctrl_opt(op.ctrl));
                lowered.ops.push(Op::rz(q, theta).with_ctrl_opt(op.ctrl));
                lowered.ops.push(Op::new(GateKind::H, vec![q]).with_ctrl_opt(op.ctrl));
            }
            GateKind::Ry => {
                let theta = op.angle.unwrap();
                for kind in [GateKind::Sdg, GateKind::H] {
                    lowered.ops.push(Op::new(kind, vec![q]).with_ctrl_opt(op.ctrl));
                }
                lowered.ops.push(Op::rz(q, theta).with_ctrl_opt(op.ctrl));
                for kind in [GateKind::H, GateKind::S] {
                    lowered.ops.push(Op::new(kind, vec![q]).with_ctrl_opt(op.ctrl));
                }
            }
            GateKind::U1q => {
                let m = gate_matrix_1q(op)
                    .ok_or_else(|| Error::Stage1("matrix payload missing on 1-qubit unitary".into()))?;
                let (seq, d) = canonical_1q(&m)?;
                lowered.global_phase += d;
                for (kind, angle) in seq {
                    let next = match angle {
                        Some(a) => Op::rot(kind, q, a),
                        None => Op::new(kind, vec![q]),
                    };
                    lowered.ops.push(next.with_ctrl_opt(op.ctrl));
                }
            }
            GateKind::I
            | GateKind::X
            | GateKind::Y
            | GateKind::Z
            | GateKind::H
            | GateKind::S
            | GateKind::Sdg
            | GateKind::Rz
            | GateKind::Cnot
            | GateKind::Measure
            | GateKind::Reset => lowered.ops.push(op.clone()),
            other => {
                return Err(Error::Stage1(format!(
                    "{} is not supported by stage-1 lowering",
                    other.as_str()
                )))
            }
        }
    }

    let out = merge_eject(&lowered)?;
    out.validate()?;
    Ok(out)
}

impl Op {
    fn with_ctrl_opt(mut self, ctrl: Option<u32>) -> Self {
        self.ctrl = ctrl;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn gauss(rng: &mut ChaCha8Rng) -> f64 {
        let u1: f64 = rng.gen::<f64>().max(1e-12);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    fn random_unitary2(rng: &mut ChaCha8Rng) -> Matrix2<Complex64> {
        let m = Matrix2::from_fn(|_, _| c(gauss(rng), gauss(rng)));
        m.qr().q()
    }

    fn random_unitary4(rng: &mut ChaCha8Rng) -> Matrix4<Complex64> {
        let m = Matrix4::from_fn(|_, _| c(gauss(rng), gauss(rng)));
        m.qr().q()
    }

    fn max_norm_diff(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        (a - b).iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    fn reconstruct_zyz(alpha: f64, beta: f64, gamma: f64, phase: f64) -> Matrix2<Complex64> {
        let ry = Matrix2::new(
            c((beta / 2.0).cos(), 0.0),
            c(-(beta / 2.0).sin(), 0.0),
            c((beta / 2.0).sin(), 0.0),
            c((beta / 2.0).cos(), 0.0),
        );
        rz_matrix(alpha) * ry * rz_matrix(gamma) * c(0.0, phase).exp()
    }

    #[test]
    fn euler_of_identity_is_zero() {
        let (a, b, g, p) = euler_zyz(&Matrix2::identity()).unwrap();
        assert_eq!((a, b, g, p), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn euler_of_hadamard_matches_reference() {
        let h = gate_matrix_1q(&Op::new(GateKind::H, vec![0])).unwrap();
        let (a, b, g, p) = euler_zyz(&h).unwrap();
        assert_abs_diff_eq!(a, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b, FRAC_PI_2, epsilon = 1e-14);
        assert_abs_diff_eq!(g, PI, epsilon = 1e-14);
        assert_abs_diff_eq!(p, FRAC_PI_2, epsilon = 1e-14);
    }

    #[test]
    fn euler_reconstructs_random_unitaries() {
        let mut rng = rng(11);
        for _ in 0..50 {
            let u = random_unitary2(&mut rng);
            let (a, b, g, p) = euler_zyz(&u).unwrap();
            assert!((0.0..=PI).contains(&b));
            let v = reconstruct_zyz(a, b, g, p);
            let defect = (u - v).iter().map(|x| x.norm()).fold(0.0, f64::max);
            assert!(defect <= 1e-12, "defect {defect}");
        }
    }

    #[test]
    fn euler_rejects_non_unitary() {
        let m = Matrix2::new(c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0));
        assert!(euler_zyz(&m).is_err());
    }

    #[test]
    fn rz_snapping_hits_all_cliffords() {
        for (theta, kind, phase) in [
            (FRAC_PI_2, Some(GateKind::S), -FRAC_PI_4),
            (-FRAC_PI_2, Some(GateKind::Sdg), FRAC_PI_4),
            (PI, Some(GateKind::Z), -FRAC_PI_2),
            (-PI, Some(GateKind::Z), FRAC_PI_2),
            (0.0, None, 0.0),
            (TAU, None, PI),
        ] {
            let (ops, d) = rz_or_clifford(theta);
            match kind {
                Some(k) => {
                    assert_eq!(ops.len(), 1);
                    assert_eq!(ops[0].0, k);
                }
                None => assert!(ops.is_empty()),
            }
            let wrapped = (d - phase).rem_euclid(TAU).min((phase - d).rem_euclid(TAU));
            assert_abs_diff_eq!(wrapped, 0.0, epsilon = 1e-12);
        }
        let (ops, d) = rz_or_clifford(0.7);
        assert_eq!(ops[0], (GateKind::Rz, Some(0.7)));
        assert_eq!(d, 0.0);
    }

    #[test]
    fn toffoli_expands_to_the_exact_matrix() {
        let mut circ = Circuit::new(3, Level::Input);
        circ.push(Op::new(GateKind::Toffoli, vec![0, 1, 2]));
        let want = circuit_matrix(&circ).unwrap();
        let got = decompose_multiqubit(&circ).unwrap();
        let counts = crate::circuit::gate_counts(&got);
        assert_eq!(counts.per_kind.get(&GateKind::Cnot), Some(&6));
        let t_like = counts.per_kind.get(&GateKind::T).copied().unwrap_or(0)
            + counts.per_kind.get(&GateKind::Tdg).copied().unwrap_or(0);
        assert_eq!(t_like, 7);
        assert_eq!(counts.per_kind.get(&GateKind::H), Some(&2));
        assert!(max_norm_diff(&circuit_matrix(&got).unwrap(), &want) <= 1e-12);
    }

    #[test]
    fn swap_expands_to_three_cnots() {
        let mut circ = Circuit::new(2, Level::Input);
        circ.push(Op::new(GateKind::Swap, vec![0, 1]));
        let want = circuit_matrix(&circ).unwrap();
        let got = decompose_multiqubit(&circ).unwrap();
        assert_eq!(got.ops.len(), 3);
        assert!(got.ops.iter().all(|op| op.kind == GateKind::Cnot));
        assert!(max_norm_diff(&circuit_matrix(&got).unwrap(), &want) <= 1e-12);
    }

    #[test]
    fn two_qubit_circuits_pass_through_expansion() {
        let mut circ = Circuit::new(2, Level::Input);
        circ.push(Op::new(GateKind::H, vec![0]));
        circ.push(Op::new(GateKind::Cnot, vec![0, 1]));
        circ.push(Op::rz(1, 0.25));
        let got = decompose_multiqubit(&circ).unwrap();
        assert_eq!(got.ops, circ.ops);
    }

    #[test]
    fn kak_of_identity_uses_no_cnots() {
        let kak = kak_decompose(&Matrix4::identity()).unwrap();
        assert_eq!(kak.cnot_count(), 0);
    }

    #[test]
    fn kak_of_cnot_uses_one_cnot_with_identity_locals() {
        let kak = kak_decompose(&cnot_low_control()).unwrap();
        assert_eq!(kak.cnot_count(), 1);
        for op in &kak.ops {
            if op.kind == GateKind::U1q {
                let m = gate_matrix_1q(op).unwrap();
                assert!(m.trace().norm() > 2.0 - 1e-9, "local is not identity-like");
            }
        }
    }

    #[test]
    fn kak_reconstructs_random_unitaries() {
        let mut rng = rng(23);
        for _ in 0..100 {
            let u = random_unitary4(&mut rng);
            let kak = kak_decompose(&u).unwrap();
            assert!(kak.cnot_count() <= 3);
            let locals = kak.ops.iter().filter(|op| op.kind == GateKind::U1q).count();
            assert!(locals <= 8);
        }
    }

    #[test]
    fn kak_rejects_non_unitary_input() {
        let m = Matrix4::from_element(c(0.3, 0.0));
        assert!(kak_decompose(&m).is_err());
    }

    #[test]
    fn merge_cancels_inverse_pairs() {
        let mut circ = Circuit::new(2, Level::Input);
        circ.push(Op::new(GateKind::H, vec![0]));
        circ.push(Op::new(GateKind::H, vec![0]));
        circ.push(Op::new(GateKind::S, vec![1]));
        circ.push(Op::new(GateKind::Cnot, vec![0, 1]));
        circ.push(Op::new(GateKind::Cnot, vec![0, 1]));
        circ.push(Op::new(GateKind::Sdg, vec![1]));
        let got = merge_eject(&circ).unwrap();
        assert!(got.ops.is_empty(), "got {:?}", got.ops);
        assert_eq!(got.global_phase, 0.0);
    }

    #[test]
    fn merge_fuses_rotation_ladders() {
        let mut circ = Circuit::new(1, Level::Input);
        circ.push(Op::rz(0, 0.3));
        circ.push(Op::rz(0, 0.4));
        let got = merge_eject(&circ).unwrap();
        assert_eq!(got.ops.len(), 1);
        assert_abs_diff_eq!(got.ops[0].angle.unwrap(), 0.7, epsilon = 1e-15);

        let mut circ = Circuit::new(1, Level::Input);
        circ.push(Op::new(GateKind::T, vec![0]));
        circ.push(Op::new(GateKind::T, vec![0]));
        let got = merge_eject(&circ).unwrap();
        assert_eq!(got.ops.len(), 1);
        assert_eq!(got.ops[0].kind, GateKind::S);
    }

    #[test]
    fn merge_snaps_clifford_angle_rotations() {
        let mut circ = Circuit::new(1, Level::Input);
        circ.push(Op::rz(0, FRAC_PI_2 + 1e-14));
        let got = merge_eject(&circ).unwrap();
        assert_eq!(got.ops.len(), 1);
        assert_eq!(got.ops[0].kind, GateKind::S);
    }

    #[test]
    fn merge_keeps_classically_controlled_ops() {
        let mut circ = Circuit::new(1, Level::Input);
        circ.push(Op::new(GateKind::Measure, vec![0]));
        circ.push(Op::new(GateKind::X, vec![0]).with_ctrl(0));
        circ.push(Op::new(GateKind::X, vec![0]).with_ctrl(0));
        let got = merge_eject(&circ).unwrap();
        assert_eq!(got.ops.len(), 3);
    }

    #[test]
    fn merge_remaps_control_indices_after_deletion() {
        let mut circ = Circuit::new(2, Level::Input);
        circ.push(Op::new(GateKind::H, vec![1]));
        circ.push(Op::new(GateKind::H, vec![1]));
        circ.push(Op::new(GateKind::Measure, vec![1]));
        circ.push(Op::new(GateKind::Z, vec![0]).with_ctrl(2));
        let got = merge_eject(&circ).unwrap();
        assert_eq!(got.ops.len(), 2);
        assert_eq!(got.ops[0].kind, GateKind::Measure);
        assert_eq!(got.ops[1].ctrl, Some(0));
    }

    #[test]
    fn merge_preserves_random_two_qubit_matrices() {
        let mut rng = rng(37);
        let kinds = [
            GateKind::H,
            GateKind::S,
            GateKind::T,
            GateKind::X,
            GateKind::Rz,
            GateKind::Cnot,
        ];
        for trial in 0..10 {
            let mut circ = Circuit::new(2, Level::Input);
            for _ in 0..20 {
                let kind = kinds[rng.gen_range(0..kinds.len())];
                let q = rng.gen_range(0..2u32);
                let op = match kind {
                    GateKind::Cnot => Op::new(GateKind::Cnot, vec![q, 1 - q]),
                    GateKind::Rz => Op::rz(q, rng.gen_range(-PI..PI)),
                    k => Op::new(k, vec![q]),
                };
                circ.push(op);
            }
            let want = circuit_matrix(&circ).unwrap();
            let got = merge_eject(&circ).unwrap();
            assert!(got.ops.len() <= circ.ops.len());
            let diff = max_norm_diff(&circuit_matrix(&got).unwrap(), &want);
            assert!(diff <= 1e-9, "trial {trial}: defect {diff}");
        }
    }

    #[test]
    fn merge_is_idempotent() {
        let mut rng = rng(41);
        for _ in 0..10 {
            let mut circ = Circuit::new(2, Level::Input);
            for _ in 0..14 {
                let q = rng.gen_range(0..2u32);
                match rng.gen_range(0..5) {
                    0 => circ.push(Op::new(GateKind::H, vec![q])),
                    1 => circ.push(Op::rz(q, rng.gen_range(-8.0..8.0))),
                    2 => circ.push(Op::new(GateKind::T, vec![q])),
                    3 => circ.push(Op::new(GateKind::Cnot, vec![q, 1 - q])),
                    _ => circ.push(Op::new(GateKind::Sdg, vec![q])),
                }
            }
            let once = merge_eject(&circ).unwrap();
            let twice = merge_eject(&once).unwrap();
            assert_eq!(once, twice);
        }
    }

    #[test]
    fn rx_lowers_to_the_conjugated_rotation() {
        let mut circ = Circuit::new(1, Level::Input);
        circ.push(Op::rot(GateKind::Rx, 0, 0.7));
        let got = to_clifford_rz(&circ).unwrap();
        let kinds: Vec<GateKind> = got.ops.iter().map(|op| op.kind).collect();
        assert_eq!(kinds, vec![GateKind::H, GateKind::Rz, GateKind::H]);
        assert_abs_diff_eq!(got.ops[1].angle.unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn t_becomes_a_quarter_rotation() {
        let mut circ = Circuit::new(1, Level::Input);
        circ.push(Op::new(GateKind::T, vec![0]));
        let got = to_clifford_rz(&circ).unwrap();
        assert_eq!(got.ops.len(), 1);
        assert_eq!(got.ops[0].kind, GateKind::Rz);
        assert_abs_diff_eq!(got.ops[0].angle.unwrap(), FRAC_PI_4, epsilon = 1e-15);
        assert_abs_diff_eq!(got.global_phase, PI / 8.0, epsilon = 1e-15);
    }

    #[test]
    fn clifford_circuits_need_no_rotations() {
        let mut circ = Circuit::new(3, Level::Input);
        circ.push(Op::new(GateKind::H, vec![0]));
        circ.push(Op::new(GateKind::S, vec![1]));
        circ.push(Op::new(GateKind::Cz, vec![0, 1]));
        circ.push(Op::new(GateKind::Swap, vec![1, 2]));
        circ.push(Op::new(GateKind::X, vec![2]));
        circ.push(Op::new(GateKind::Measure, vec![0]));
        let got = to_clifford_rz(&circ).unwrap();
        assert_eq!(got.level, Level::CliffordRz);
        assert_eq!(crate::circuit::gate_counts(&got).k, 0);
    }

    #[test]
    fn lowering_stays_in_the_clifford_rz_alphabet() {
        let mut rng = rng(53);
        let mut circ = Circuit::new(3, Level::Input);
        circ.push(Op::new(GateKind::Toffoli, vec![0, 1, 2]));
        circ.push(Op::u2q(0, 2, random_unitary4(&mut rng)));
        circ.push(Op::u1q(1, random_unitary2(&mut rng)));
        circ.push(Op::rot(GateKind::Ry, 0, 1.1));
        circ.push(Op::new(GateKind::Tdg, vec![2]));
        let got = to_clifford_rz(&circ).unwrap();
        let allowed = [
            GateKind::I,
            GateKind::X,
            GateKind::Y,
            GateKind::Z,
            GateKind::H,
            GateKind::S,
            GateKind::Sdg,
            GateKind::Rz,
            GateKind::Cnot,
            GateKind::Measure,
            GateKind::Reset,
        ];
        for op in &got.ops {
            assert!(allowed.contains(&op.kind), "{} leaked through", op.kind.as_str());
        }
    }

    #[test]
    fn lowering_preserves_three_qubit_unitaries() {
        let mut rng = rng(59);
        for trial in 0..5 {
            let mut circ = Circuit::new(3, Level::Input);
            circ.push(Op::new(GateKind::H, vec![0]));
            circ.push(Op::u2q(0, 1, random_unitary4(&mut rng)));
            circ.push(Op::new(GateKind::T, vec![2]));
            circ.push(Op::new(GateKind::Toffoli, vec![0, 1, 2]));
            circ.push(Op::rot(GateKind::Rx, 1, rng.gen_range(-PI..PI)));
            circ.push(Op::u1q(2, random_unitary2(&mut rng)));
            circ.push(Op::new(GateKind::Cz, vec![1, 2]));
            circ.push(Op::new(GateKind::Swap, vec![0, 2]));
            let want = circuit_matrix(&circ).unwrap();
            let got = to_clifford_rz(&circ).unwrap();
            let diff = max_norm_diff(&circuit_matrix(&got).unwrap(), &want);
            assert!(diff <= 1e-9, "trial {trial}: defect {diff}");
        }
    }
}
