//! Dependency DAG over circuit ops and critical-path analysis.
//!
//! Durations are held in integer ticks (one microsecond is
//! [`TICKS_PER_US`] ticks) so that path lengths and time breakdowns add up
//! exactly, independent of summation order.

use std::collections::BTreeMap;

use crate::circuit::{Circuit, GateKind};
use crate::error::{Error, Result};

/// Tick resolution: one microsecond in ticks.
pub const TICKS_PER_US: u64 = 1_000_000;

/// Convert a duration in microseconds to ticks, rounding to nearest.
pub fn us_to_ticks(us: f64) -> u64 {
    debug_assert!(us >= 0.0 && us.is_finite());
    (us * TICKS_PER_US as f64).round() as u64
}

/// Convert ticks back to microseconds.
pub fn ticks_to_us(ticks: u128) -> f64 {
    ticks as f64 / TICKS_PER_US as f64
}

/// Per-kind durations in ticks. Ops carrying an explicit duration override
/// (distance-dependent moves) bypass the table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Durations {
    pub per_kind: BTreeMap<GateKind, u64>,
}

impl Durations {
    pub fn set_us(&mut self, kind: GateKind, us: f64) {
        self.per_kind.insert(kind, us_to_ticks(us));
    }

    pub fn op_ticks(&self, kind: GateKind, dur_override: Option<u64>) -> Result<u64> {
        if let Some(t) = dur_override {
            return Ok(t);
        }
        self.per_kind.get(&kind).copied().ok_or_else(|| {
            Error::Compile(format!("no duration configured for primitive {kind}"))
        })
    }
}

/// Longest weighted path through an [`OpDag`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CriticalPath {
    /// Total duration of the path in ticks.
    pub length_ticks: u128,
    /// Op indices along the path, in execution order.
    pub path: Vec<u32>,
}

/// Dependency DAG: one node per op, edges from earlier to later ops.
///
/// Edges always point from a lower op index to a higher one, so the op order
/// is already a topological order.
#[derive(Clone, Debug)]
pub struct OpDag {
    dur: Vec<u64>,
    preds: Vec<Vec<u32>>,
    succs: Vec<Vec<u32>>,
}

impl OpDag {
    /// Build a DAG from explicit node durations and edges. Every edge must
    /// satisfy `from < to`.
    pub fn from_edges(dur: Vec<u64>, edges: &[(u32, u32)]) -> Result<OpDag> {
        let n = dur.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= b || b as usize >= n {
                return Err(Error::Validation(format!("bad DAG edge {a} -> {b}")));
            }
            succs[a as usize].push(b);
            preds[b as usize].push(a);
        }
        let mut dag = OpDag { dur, preds, succs };
        dag.dedup_edges();
        Ok(dag)
    }

    fn dedup_edges(&mut self) {
        for list in self.preds.iter_mut().chain(self.succs.iter_mut()) {
            list.sort_unstable();
            list.dedup();
        }
    }

    pub fn len(&self) -> usize {
        self.dur.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dur.is_empty()
    }

    pub fn duration(&self, node: u32) -> u64 {
        self.dur[node as usize]
    }

    pub fn preds(&self, node: u32) -> &[u32] {
        &self.preds[node as usize]
    }

    pub fn succs(&self, node: u32) -> &[u32] {
        &self.succs[node as usize]
    }

    pub fn edge_count(&self) -> usize {
        self.succs.iter().map(Vec::len).sum()
    }

    /// Sum of all node durations: the fully serialized execution time.
    pub fn serial_time(&self) -> u128 {
        self.dur.iter().map(|&d| d as u128).sum()
    }

    /// Earliest start time of each node under unlimited parallelism.
    pub fn start_times(&self) -> Vec<u128> {
        let n = self.len();
        let mut start = vec![0u128; n];
        for i in 0..n {
            for &p in &self.preds[i] {
                let finish = start[p as usize] + self.dur[p as usize] as u128;
                if finish > start[i] {
                    start[i] = finish;
                }
            }
        }
        start
    }

    /// Longest weighted path by forward relaxation in op order. Ties are
    /// broken toward the smallest op index so the result is deterministic.
    pub fn critical_path(&self) -> CriticalPath {
        let n = self.len();
        if n == 0 {
            return CriticalPath {
                length_ticks: 0,
                path: Vec::new(),
            };
        }
        // finish[i] is the length of the longest path ending at node i.
        let mut finish = vec![0u128; n];
        let mut best_pred: Vec<Option<u32>> = vec![None; n];
        for i in 0..n {
            let mut start = 0u128;
            let mut pick = None;
            for &p in &self.preds[i] {
                let f = finish[p as usize];
                if f > start || (f == start && pick.is_none()) {
                    start = f;
                    pick = Some(p);
                }
            }
            finish[i] = start + self.dur[i] as u128;
            best_pred[i] = pick;
        }
        let mut end = 0u32;
        let mut best = 0u128;
        for (i, &f) in finish.iter().enumerate() {
            if f > best {
                best = f;
                end = i as u32;
            }
        }
        let mut path = Vec::new();
        let mut cur = Some(end);
        while let Some(i) = cur {
            path.push(i);
            cur = best_pred[i as usize];
        }
        path.reverse();
        CriticalPath {
            length_ticks: best,
            path,
        }
    }
}

/// Build the dependency DAG of a circuit.
///
/// Two ops depend on each other when they share a qubit (program order on
/// that qubit is preserved) or when one is classically controlled on the
/// other's measurement record. Resource-induced dependencies (routing paths,
/// factory reuse) are added by the compiler via [`build_dag_with`].
pub fn build_dag(circuit: &Circuit, durations: &Durations) -> Result<OpDag> {
    build_dag_with(circuit, durations, &[])
}

/// [`build_dag`] plus explicit resource-serialization edges from the
/// compiler, each `(earlier, later)` by op index.
pub fn build_dag_with(
    circuit: &Circuit,
    durations: &Durations,
    extra_edges: &[(u32, u32)],
) -> Result<OpDag> {
    let n = circuit.ops.len();
    let mut dur = Vec::with_capacity(n);
    let mut edges: Vec<(u32, u32)> = extra_edges.to_vec();
    let mut last_on_qubit: Vec<Option<u32>> = vec![None; circuit.qubits as usize];
    for (i, op) in circuit.ops.iter().enumerate() {
        let i = i as u32;
        dur.push(durations.op_ticks(op.kind, op.dur_ticks)?);
        for &q in &op.qubits {
            if let Some(prev) = last_on_qubit[q as usize] {
                edges.push((prev, i));
            }
            last_on_qubit[q as usize] = Some(i);
        }
        if let Some(c) = op.ctrl {
            if c >= i {
                return Err(Error::Validation(format!(
                    "op {i}: classical control references op {c}, not before it"
                )));
            }
            edges.push((c, i));
        }
    }
    OpDag::from_edges(dur, &edges)
}
