//! Hot-kernel benchmarks: two-qubit decomposition, longest-path search, and
//! primitive timing lookups.

use criterion::{criterion_group, criterion_main, Criterion};
use ftre::arch::load_preset;
use ftre::dag::OpDag;
use ftre::stage1::{circuit_matrix, kak_decompose};
use ftre::synthetic::trotter_layer;
use ftre::{Circuit, GateKind, Level, Op, SpeedColumn};
use nalgebra::Matrix4;

/// A fixed entangling 2-qubit unitary built from a short circuit.
fn sample_unitary() -> Matrix4<nalgebra::Complex<f64>> {
    let mut c = Circuit::new(2, Level::Input);
    c.push(Op::new(GateKind::H, vec![0]));
    c.push(Op::rz(0, 0.37));
    c.push(Op::new(GateKind::Cnot, vec![0, 1]));
    c.push(Op::rz(1, 1.2));
    c.push(Op::new(GateKind::Cnot, vec![1, 0]));
    let m = circuit_matrix(&c).unwrap();
    Matrix4::from_iterator(m.iter().cloned())
}

/// Layered DAG shaped like a compiled circuit: `width` parallel chains with
/// cross links every third layer.
fn layered_dag(width: u32, depth: u32) -> OpDag {
    let n = width * depth;
    let dur: Vec<u64> = (0..n).map(|i| 100 + u64::from(i % 7) * 13).collect();
    let mut edges = Vec::new();
    for layer in 1..depth {
        for lane in 0..width {
            let here = layer * width + lane;
            edges.push((here - width, here));
            if layer % 3 == 0 && lane + 1 < width {
                edges.push((here - width, here + 1));
            }
        }
    }
    OpDag::from_edges(dur, &edges).unwrap()
}

fn bench_kernels(c: &mut Criterion) {
    let unitary = sample_unitary();
    c.bench_function("kak_decompose", |b| {
        b.iter(|| kak_decompose(std::hint::black_box(&unitary)).unwrap())
    });

    let dag = layered_dag(16, 64);
    c.bench_function("critical_path_16x64", |b| {
        b.iter(|| std::hint::black_box(&dag).critical_path())
    });

    let arch = load_preset("dsm", SpeedColumn::Current, None).unwrap();
    let kinds = [GateKind::Se, GateKind::H, GateKind::Cnot, GateKind::CultT];
    c.bench_function("primitive_time", |b| {
        b.iter(|| {
            kinds
                .iter()
                .map(|&k| arch.primitive_time(k, std::hint::black_box(11)).unwrap())
                .sum::<f64>()
        })
    });

    let circuit = trotter_layer(12, 3);
    c.bench_function("to_clifford_rz_trotter_12", |b| {
        b.iter(|| ftre::stage1::to_clifford_rz(std::hint::black_box(&circuit)).unwrap())
    });
}

criterion_group!(benches, bench_kernels);
criterion_main!(benches);
