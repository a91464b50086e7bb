//! Stage-2 compilation: read-and-replace lowering from Clifford+T to the
//! architecture's primitive instruction set.
//!
//! The lowering walks the stage-2 circuit in program order. Transversal
//! architectures map H/S/CNOT straight onto their primitives; lattice
//! architectures route CNOTs through ancilla patches as Merge/Split pairs and
//! implement S by teleportation. T gates become teleportation networks fed by
//! magic-state factories; when every factory of a kind has been consumed, one
//! batch cultivation op re-arms all of them at once. Post-op correction,
//! movement, and idling passes then insert the bookkeeping primitives the
//! hardware model charges for.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::arch::{Architecture, PrimitiveSet};
use crate::circuit::{Circuit, GateKind, Level, Op};
use crate::dag::{build_dag_with, us_to_ticks, Durations, OpDag};
use crate::error::{Error, Result};
use crate::layout::{nearest_available_factory, Cell, CellRole, FactoryKind, LayoutGrid};

/// Cultivation lifecycle of a factory patch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactoryStatus {
    /// Holds a cultivated resource state.
    Ready,
    /// State consumed (or never produced); needs cultivation before reuse.
    Used,
}

/// One magic-state factory tracked during lowering.
#[derive(Clone, Debug)]
pub struct FactoryState {
    pub cell: Cell,
    /// Qubit index of the factory patch in the compiled circuit.
    pub qubit: u32,
    pub kind: FactoryKind,
    pub status: FactoryStatus,
    /// Index of the cultivation op that produced the current state.
    pub last_cultivation_op: Option<u32>,
}

/// Ancilla cells held by one Merge, with the op interval that blocks them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RouteReservation {
    pub path: Vec<Cell>,
    /// (Merge op index, Split op index).
    pub interval: (u32, u32),
}

/// A primitive circuit plus the scheduling metadata the op list alone cannot
/// carry: resource-serialization edges, per-kind durations, and the logical
/// intents consumed from the stage-2 input.
#[derive(Clone, Debug)]
pub struct CompiledCircuit {
    pub circuit: Circuit,
    /// Routing-conflict ordering constraints as (earlier, later) op indices.
    pub extra_edges: Vec<(u32, u32)>,
    pub reservations: Vec<RouteReservation>,
    pub durations: Durations,
    /// Multiset of logical gate intents implemented by the output, with
    /// teleported gates counted as their intent.
    pub intents: BTreeMap<GateKind, u64>,
    /// Data qubits occupy indices `0..n_data`; factories follow.
    pub n_data: u32,
}

impl CompiledCircuit {
    /// Dependency DAG including the routing-conflict edges.
    pub fn dag(&self) -> Result<OpDag> {
        build_dag_with(&self.circuit, &self.durations, &self.extra_edges)
    }
}

/// Per-kind durations for `arch` at its configured distance. SE entries
/// include the decoding-dependent round count; A-Move durations are omitted
/// because every A-Move op carries a distance-dependent override.
pub fn primitive_durations(arch: &Architecture) -> Result<Durations> {
    let mut durations = Durations::default();
    for &kind in &arch.primitives {
        if kind == GateKind::AMove {
            continue;
        }
        let mut us = arch.primitive_time(kind, arch.d)?;
        if kind == GateKind::Se {
            us *= arch.se_rounds() as f64;
        }
        durations.set_us(kind, us);
    }
    Ok(durations)
}

/// Logical gate intents of a circuit: H, S (incl. Sdg), T (incl. Tdg), CNOT,
/// Measure, and Reset. Pauli frame updates are free and not tracked.
pub fn logical_intents(circuit: &Circuit) -> BTreeMap<GateKind, u64> {
    let mut intents = BTreeMap::new();
    for op in &circuit.ops {
        let intent = match op.kind {
            GateKind::H => GateKind::H,
            GateKind::S | GateKind::Sdg => GateKind::S,
            GateKind::T | GateKind::Tdg => GateKind::T,
            GateKind::Cnot => GateKind::Cnot,
            GateKind::Measure => GateKind::Measure,
            GateKind::Reset => GateKind::Reset,
            _ => continue,
        };
        *intents.entry(intent).or_insert(0) += 1;
    }
    intents
}

/// Shortest ancilla route between the patches at `from` and `to`, by
/// breadth-first search with successors explored in (row, column) order. The
/// returned cells are all ancilla-role; the first is adjacent to `from` and
/// the last to `to`.
pub fn ancilla_route(layout: &LayoutGrid, from: Cell, to: Cell) -> Result<Vec<Cell>> {
    let mut parent: BTreeMap<Cell, Option<Cell>> = BTreeMap::new();
    let mut queue = VecDeque::new();
    for n in layout.neighbors(from) {
        if layout.role(n) == CellRole::Ancilla {
            parent.insert(n, None);
            queue.push_back(n);
        }
    }
    while let Some(cell) = queue.pop_front() {
        if LayoutGrid::manhattan(cell, to) == 1 {
            let mut path = vec![cell];
            let mut cur = parent[&cell];
            while let Some(p) = cur {
                path.push(p);
                cur = parent[&p];
            }
            path.reverse();
            return Ok(path);
        }
        for n in layout.neighbors(cell) {
            if layout.role(n) == CellRole::Ancilla && !parent.contains_key(&n) {
                parent.insert(n, Some(cell));
                queue.push_back(n);
            }
        }
    }
    Err(Error::Compile(format!(
        "no ancilla route between the patches at {from:?} and {to:?}"
    )))
}

struct Lowerer<'a> {
    arch: &'a Architecture,
    layout: &'a LayoutGrid,
    ops: Vec<Op>,
    extra_edges: Vec<(u32, u32)>,
    reservations: Vec<RouteReservation>,
    intents: BTreeMap<GateKind, u64>,
    t_factories: Vec<FactoryState>,
    s_factories: Vec<FactoryState>,
    /// Last op holding each ancilla cell.
    cell_users: BTreeMap<Cell, u32>,
    /// Output index of the Measure emitted for each input Measure.
    measure_map: BTreeMap<u32, u32>,
}

impl<'a> Lowerer<'a> {
    fn new(arch: &'a Architecture, layout: &'a LayoutGrid) -> Self {
        let factory_pool = |cells: &[Cell], kind: FactoryKind| -> Vec<FactoryState> {
            cells
                .iter()
                .enumerate()
                .map(|(i, &cell)| FactoryState {
                    cell,
                    qubit: match kind {
                        FactoryKind::T => layout.t_factory_qubit(i),
                        FactoryKind::S => layout.s_factory_qubit(i),
                    },
                    kind,
                    status: FactoryStatus::Used,
                    last_cultivation_op: None,
                })
                .collect()
        };
        Lowerer {
            arch,
            layout,
            ops: Vec::new(),
            extra_edges: Vec::new(),
            reservations: Vec::new(),
            intents: BTreeMap::new(),
            t_factories: factory_pool(&layout.t_cells, FactoryKind::T),
            s_factories: factory_pool(&layout.s_cells, FactoryKind::S),
            cell_users: BTreeMap::new(),
            measure_map: BTreeMap::new(),
        }
    }

    fn emit(&mut self, op: Op) -> u32 {
        let idx = self.ops.len() as u32;
        self.ops.push(op);
        idx
    }

    fn intent(&mut self, kind: GateKind) {
        *self.intents.entry(kind).or_insert(0) += 1;
    }

    fn pool(&mut self, kind: FactoryKind) -> &mut Vec<FactoryState> {
        match kind {
            FactoryKind::T => &mut self.t_factories,
            FactoryKind::S => &mut self.s_factories,
        }
    }

    /// Re-arm the pool when no cultivated state is left: one batch
    /// cultivation op spanning every used factory of the kind.
    fn ensure_ready(&mut self, kind: FactoryKind) -> Result<()> {
        if self.pool(kind).iter().any(|f| f.status == FactoryStatus::Ready) {
            return Ok(());
        }
        if self.pool(kind).is_empty() {
            let (cult, role) = match kind {
                FactoryKind::T => (GateKind::CultT, "T"),
                FactoryKind::S => (GateKind::CultS, "S"),
            };
            return Err(Error::Compile(format!(
                "{cult} needed but the layout has no {role} factory"
            )));
        }
        let qubits: Vec<u32> = self.pool(kind).iter().map(|f| f.qubit).collect();
        let cult = match kind {
            FactoryKind::T => GateKind::CultT,
            FactoryKind::S => GateKind::CultS,
        };
        let idx = self.emit(Op::new(cult, qubits));
        for f in self.pool(kind).iter_mut() {
            f.status = FactoryStatus::Ready;
            f.last_cultivation_op = Some(idx);
        }
        Ok(())
    }

    /// Consume the cultivated state nearest to `from`, batching a
    /// re-cultivation first if none is ready. Returns the factory's qubit.
    fn take_factory(&mut self, from: Cell, kind: FactoryKind) -> Result<u32> {
        self.ensure_ready(kind)?;
        let busy: BTreeSet<Cell> = self
            .pool(kind)
            .iter()
            .filter(|f| f.status != FactoryStatus::Ready)
            .map(|f| f.cell)
            .collect();
        let cell = nearest_available_factory(self.layout, from, kind, &busy)
            .expect("ensure_ready left at least one factory available");
        let f = self
            .pool(kind)
            .iter_mut()
            .find(|f| f.cell == cell)
            .expect("factory pool covers every factory cell");
        f.status = FactoryStatus::Used;
        Ok(f.qubit)
    }

    /// Lattice CNOT: Merge and Split over the shortest ancilla route, with
    /// ordering edges against earlier Merges holding any shared cell.
    fn route_cnot(&mut self, control: u32, target: u32, ctrl: Option<u32>) -> Result<()> {
        let from = self.layout.qubit_cell(control);
        let to = self.layout.qubit_cell(target);
        let path = ancilla_route(self.layout, from, to)?;
        let merge = self.emit(Op {
            ctrl,
            ..Op::new(GateKind::Merge, vec![control, target])
        });
        for &cell in &path {
            if let Some(prev) = self.cell_users.insert(cell, merge) {
                self.extra_edges.push((prev, merge));
            }
        }
        let split = self.emit(Op::new(GateKind::Split, vec![control, target]));
        self.reservations.push(RouteReservation {
            path,
            interval: (merge, split),
        });
        Ok(())
    }

    /// T-gate teleportation. Transversal architectures consume one T state
    /// and correct with a classically-controlled transversal S; lattice
    /// architectures consume a T and an S state, correcting with a
    /// classically-controlled routed CNOT and a Pauli Z.
    fn teleport_t(&mut self, target: u32, ctrl: Option<u32>) -> Result<()> {
        let at = self.layout.qubit_cell(target);
        match self.arch.primitive_set {
            PrimitiveSet::Movement => {
                let f = self.take_factory(at, FactoryKind::T)?;
                self.emit(Op {
                    ctrl,
                    ..Op::new(GateKind::Cnot, vec![f, target])
                });
                let m = self.emit(Op::new(GateKind::Measure, vec![f]));
                self.emit(Op::new(GateKind::S, vec![target]).with_ctrl(m));
            }
            PrimitiveSet::Lattice => {
                let tf = self.take_factory(at, FactoryKind::T)?;
                let sf = self.take_factory(at, FactoryKind::S)?;
                self.route_cnot(tf, target, ctrl)?;
                let m1 = self.emit(Op::new(GateKind::Measure, vec![tf]));
                self.route_cnot(sf, target, Some(m1))?;
                let m2 = self.emit(Op::new(GateKind::Measure, vec![sf]));
                self.emit(Op::new(GateKind::Z, vec![target]).with_ctrl(m2));
            }
        }
        self.intent(GateKind::T);
        Ok(())
    }

    /// S-gate teleportation for architectures without a transversal S: one S
    /// state, a routed CNOT, and a classically-controlled Pauli Z.
    fn teleport_s(&mut self, target: u32, ctrl: Option<u32>) -> Result<()> {
        let at = self.layout.qubit_cell(target);
        let sf = self.take_factory(at, FactoryKind::S)?;
        self.route_cnot(sf, target, ctrl)?;
        let m = self.emit(Op::new(GateKind::Measure, vec![sf]));
        self.emit(Op::new(GateKind::Z, vec![target]).with_ctrl(m));
        self.intent(GateKind::S);
        Ok(())
    }
}

/// Read-and-replace lowering of a Clifford+T circuit onto the architecture's
/// primitive set, with factory scheduling and CNOT routing. The correction
/// passes run separately; [`compile_to_primitive`] chains everything.
pub fn lower_clifford(
    circuit: &Circuit,
    arch: &Architecture,
    layout: &LayoutGrid,
) -> Result<CompiledCircuit> {
    if circuit.level != Level::CliffordT {
        return Err(Error::Compile(format!(
            "stage-2 lowering expects a clifford_t circuit, got {}",
            circuit.level
        )));
    }
    circuit.validate()?;
    arch.validate()?;
    layout.validate()?;
    if layout.n_data() != circuit.qubits {
        return Err(Error::Compile(format!(
            "layout has {} data patches but the circuit uses {} qubits",
            layout.n_data(),
            circuit.qubits
        )));
    }
    match arch.primitive_set {
        PrimitiveSet::Movement if layout.strategy.uses_ancilla() => {
            return Err(Error::Compile(format!(
                "{} routes by physical movement and needs a dense layout, not {}",
                arch.name, layout.strategy
            )));
        }
        PrimitiveSet::Lattice if !layout.strategy.uses_ancilla() => {
            return Err(Error::Compile(format!(
                "{} needs ancilla routing space; the {} layout has none",
                arch.name, layout.strategy
            )));
        }
        _ => {}
    }

    let durations = primitive_durations(arch)?;
    let mut lower = Lowerer::new(arch, layout);
    for (i, op) in circuit.ops.iter().enumerate() {
        let ctrl = match op.ctrl {
            Some(c) => Some(*lower.measure_map.get(&c).ok_or_else(|| {
                Error::Compile(format!("op {i}: classical control on an unmapped measurement"))
            })?),
            None => None,
        };
        match op.kind {
            GateKind::I | GateKind::X | GateKind::Y | GateKind::Z => {
                lower.emit(Op {
                    ctrl,
                    ..Op::new(op.kind, op.qubits.clone())
                });
            }
            GateKind::H => {
                lower.emit(Op {
                    ctrl,
                    ..Op::new(GateKind::H, op.qubits.clone())
                });
                lower.intent(GateKind::H);
            }
            GateKind::S | GateKind::Sdg => match arch.primitive_set {
                PrimitiveSet::Movement => {
                    lower.emit(Op {
                        ctrl,
                        ..Op::new(GateKind::S, op.qubits.clone())
                    });
                    lower.intent(GateKind::S);
                }
                PrimitiveSet::Lattice => lower.teleport_s(op.qubits[0], ctrl)?,
            },
            GateKind::T | GateKind::Tdg => lower.teleport_t(op.qubits[0], ctrl)?,
            GateKind::Cnot => {
                match arch.primitive_set {
                    PrimitiveSet::Movement => {
                        lower.emit(Op {
                            ctrl,
                            ..Op::new(GateKind::Cnot, op.qubits.clone())
                        });
                    }
                    PrimitiveSet::Lattice => {
                        lower.route_cnot(op.qubits[0], op.qubits[1], ctrl)?;
                    }
                }
                lower.intent(GateKind::Cnot);
            }
            GateKind::Measure => {
                let out = lower.emit(Op {
                    ctrl,
                    ..Op::new(GateKind::Measure, op.qubits.clone())
                });
                lower.measure_map.insert(i as u32, out);
                lower.intent(GateKind::Measure);
            }
            GateKind::Reset => {
                lower.emit(Op {
                    ctrl,
                    ..Op::new(GateKind::Reset, op.qubits.clone())
                });
                lower.intent(GateKind::Reset);
            }
            other => {
                return Err(Error::Compile(format!(
                    "op {i}: {other} is outside the Clifford+T alphabet (stage violation)"
                )));
            }
        }
    }

    let out = Circuit {
        qubits: layout.total_addressable(),
        ops: lower.ops,
        level: Level::Primitive,
        global_phase: 0.0,
    };
    out.validate()?;
    Ok(CompiledCircuit {
        circuit: out,
        extra_edges: lower.extra_edges,
        reservations: lower.reservations,
        durations,
        intents: lower.intents,
        n_data: layout.n_data(),
    })
}

/// Rebuilds an op list around insertions, then remaps every classical
/// control, extra edge, and reservation interval to the new indices.
struct Rewriter {
    ops: Vec<Op>,
    map: Vec<u32>,
}

impl Rewriter {
    fn new(original_len: usize) -> Self {
        Rewriter {
            ops: Vec::with_capacity(original_len),
            map: vec![0; original_len],
        }
    }

    fn insert(&mut self, op: Op) {
        debug_assert!(op.ctrl.is_none(), "inserted ops must not carry stale controls");
        self.ops.push(op);
    }

    fn keep(&mut self, original: usize, op: Op) {
        self.map[original] = self.ops.len() as u32;
        self.ops.push(op);
    }

    fn apply(mut self, compiled: &mut CompiledCircuit) {
        for op in &mut self.ops {
            if let Some(c) = op.ctrl {
                op.ctrl = Some(self.map[c as usize]);
            }
        }
        for (a, b) in &mut compiled.extra_edges {
            *a = self.map[*a as usize];
            *b = self.map[*b as usize];
        }
        for r in &mut compiled.reservations {
            r.interval = (
                self.map[r.interval.0 as usize],
                self.map[r.interval.1 as usize],
            );
        }
        compiled.circuit.ops = self.ops;
    }
}

/// Gates applied transversally across the patch, which the hardware model
/// follows with a syndrome extraction when post-op correction is on. Lattice
/// primitives carry their own rounds (Merge spans d of them), so only the
/// transversal instruction set qualifies.
fn is_transversal(kind: GateKind, set: PrimitiveSet) -> bool {
    set == PrimitiveSet::Movement && matches!(kind, GateKind::H | GateKind::S | GateKind::Cnot)
}

/// Insert a syndrome extraction after every transversal gate.
pub fn post_op_correction_pass(mut compiled: CompiledCircuit, arch: &Architecture) -> CompiledCircuit {
    if !arch.post_op_correction {
        return compiled;
    }
    let ops = std::mem::take(&mut compiled.circuit.ops);
    let mut rw = Rewriter::new(ops.len());
    for (i, op) in ops.into_iter().enumerate() {
        let follow = is_transversal(op.kind, arch.primitive_set).then(|| op.qubits.clone());
        rw.keep(i, op);
        if let Some(qubits) = follow {
            rw.insert(Op::new(GateKind::Se, qubits));
        }
    }
    rw.apply(&mut compiled);
    compiled
}

/// Insert the logical movement each gate needs: zone round trips (Z-Move)
/// when the architecture cannot entangle or read out in place, and
/// acceleration-limited alignment moves (A-Move) sized by the Manhattan
/// distance between the operand patches otherwise.
pub fn movement_pass(
    mut compiled: CompiledCircuit,
    arch: &Architecture,
    layout: &LayoutGrid,
) -> Result<CompiledCircuit> {
    if arch.primitive_set != PrimitiveSet::Movement {
        return Err(Error::Compile(format!(
            "movement pass applies to movement architectures, not {}",
            arch.name
        )));
    }
    let caps = arch.movement_capabilities;
    let need = |kind: GateKind| -> Result<()> {
        if arch.primitives.contains(&kind) {
            Ok(())
        } else {
            Err(Error::Compile(format!(
                "{} movement rules need the {kind} primitive",
                arch.name
            )))
        }
    };

    let a_move = |qubits: &[u32]| -> Result<Op> {
        let l = LayoutGrid::manhattan(
            layout.qubit_cell(qubits[0]),
            layout.qubit_cell(*qubits.last().expect("entangling ops have two operands")),
        ) as f64;
        let us = arch.a_move_spec()?.time_us(l);
        Ok(Op {
            dur_ticks: Some(us_to_ticks(us)),
            ..Op::new(GateKind::AMove, qubits.to_vec())
        })
    };

    let ops = std::mem::take(&mut compiled.circuit.ops);
    let mut rw = Rewriter::new(ops.len());
    for (i, op) in ops.into_iter().enumerate() {
        match op.kind {
            GateKind::Cnot if !caps.in_place_entangle => {
                need(GateKind::ZMove)?;
                rw.insert(Op::new(GateKind::ZMove, op.qubits.clone()));
                let back = Op::new(GateKind::ZMove, op.qubits.clone());
                rw.keep(i, op);
                rw.insert(back);
            }
            GateKind::Cnot => {
                need(GateKind::AMove)?;
                rw.insert(a_move(&op.qubits)?);
                rw.keep(i, op);
            }
            GateKind::Measure if !caps.in_place_readout => {
                need(GateKind::ZMove)?;
                rw.insert(Op::new(GateKind::ZMove, op.qubits.clone()));
                rw.keep(i, op);
            }
            _ => rw.keep(i, op),
        }
    }
    rw.apply(&mut compiled);
    Ok(compiled)
}

/// Insert syndrome extractions on idle qubits. A data qubit idle for a gap of
/// `g` ticks under the as-soon-as-possible schedule receives
/// `g / (se_frequency * t_SE)` rounds, which provably fit inside the gap, so
/// the critical path is unchanged (asserted).
pub fn idling_pass(mut compiled: CompiledCircuit, arch: &Architecture) -> Result<CompiledCircuit> {
    if !arch.idling_se || compiled.circuit.is_empty() {
        return Ok(compiled);
    }
    let dag = compiled.dag()?;
    let before = dag.critical_path().length_ticks;
    let se_ticks = compiled.durations.op_ticks(GateKind::Se, None)?;
    if se_ticks == 0 {
        return Ok(compiled);
    }
    let quantum = se_ticks as u128 * arch.se_frequency as u128;
    let starts = dag.start_times();
    let total = before;

    let mut per_qubit: Vec<Vec<usize>> = vec![Vec::new(); compiled.n_data as usize];
    for (i, op) in compiled.circuit.ops.iter().enumerate() {
        for &q in &op.qubits {
            if q < compiled.n_data {
                per_qubit[q as usize].push(i);
            }
        }
    }

    // Anchor -> SE ops to place before / after that op.
    let mut before_op: BTreeMap<usize, Vec<Op>> = BTreeMap::new();
    let mut after_op: BTreeMap<usize, Vec<Op>> = BTreeMap::new();
    for (q, ops) in per_qubit.iter().enumerate() {
        let Some((&first, &last)) = ops.first().zip(ops.last()) else {
            continue;
        };
        let idle = |gap: u128, anchor: &mut Vec<Op>| {
            for _ in 0..gap / quantum {
                anchor.push(Op::new(GateKind::Se, vec![q as u32]));
            }
        };
        idle(starts[first], before_op.entry(first).or_default());
        for w in ops.windows(2) {
            let finish = starts[w[0]] + dag.duration(w[0] as u32) as u128;
            idle(starts[w[1]] - finish, after_op.entry(w[0]).or_default());
        }
        let finish = starts[last] + dag.duration(last as u32) as u128;
        idle(total - finish, after_op.entry(last).or_default());
    }
    if before_op.is_empty() && after_op.is_empty() {
        return Ok(compiled);
    }

    let ops = std::mem::take(&mut compiled.circuit.ops);
    let mut rw = Rewriter::new(ops.len());
    for (i, op) in ops.into_iter().enumerate() {
        for se in before_op.remove(&i).unwrap_or_default() {
            rw.insert(se);
        }
        let after = after_op.remove(&i);
        rw.keep(i, op);
        for se in after.unwrap_or_default() {
            rw.insert(se);
        }
    }
    rw.apply(&mut compiled);

    let after = compiled.dag()?.critical_path().length_ticks;
    assert_eq!(
        before, after,
        "idling insertions must not extend the critical path"
    );
    Ok(compiled)
}

/// Full stage-2 pipeline: lowering, then movement (transversal architectures
/// only), post-op correction, and idling.
pub fn compile_to_primitive(
    circuit: &Circuit,
    arch: &Architecture,
    layout: &LayoutGrid,
) -> Result<CompiledCircuit> {
    let mut compiled = lower_clifford(circuit, arch, layout)?;
    if arch.primitive_set == PrimitiveSet::Movement {
        compiled = movement_pass(compiled, arch, layout)?;
    }
    compiled = post_op_correction_pass(compiled, arch);
    compiled = idling_pass(compiled, arch)?;
    compiled.circuit.validate()?;
    Ok(compiled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{load_preset, SpeedColumn};
    use crate::layout::{generate_layout, LayoutStrategy};

    fn dsm() -> Architecture {
        load_preset("dsm", SpeedColumn::Current, None).unwrap()
    }

    fn ssm() -> Architecture {
        load_preset("ssm", SpeedColumn::Current, None).unwrap()
    }

    fn mzo() -> Architecture {
        load_preset("mzo", SpeedColumn::Current, None).unwrap()
    }

    fn dsnm() -> Architecture {
        load_preset("dsnm", SpeedColumn::Current, None).unwrap()
    }

    fn c2(qubits: u32, ops: Vec<Op>) -> Circuit {
        let mut c = Circuit::new(qubits, Level::CliffordT);
        c.ops = ops;
        c.validate().unwrap();
        c
    }

    fn kinds(compiled: &CompiledCircuit) -> Vec<GateKind> {
        compiled.circuit.ops.iter().map(|op| op.kind).collect()
    }

    fn dense_layout(n: u32, t: u32) -> LayoutGrid {
        generate_layout(LayoutStrategy::Dense, n, t, 0).unwrap()
    }

    fn sandwich_layout(n: u32, t: u32, s: u32) -> LayoutGrid {
        generate_layout(LayoutStrategy::Sandwich, n, t, s).unwrap()
    }

    #[test]
    fn movement_lowering_maps_gates_directly() {
        let c = c2(
            2,
            vec![
                Op::new(GateKind::H, vec![0]),
                Op::new(GateKind::Sdg, vec![1]),
                Op::new(GateKind::Cnot, vec![0, 1]),
                Op::new(GateKind::X, vec![0]),
                Op::new(GateKind::Measure, vec![1]),
            ],
        );
        let compiled = lower_clifford(&c, &dsm(), &dense_layout(2, 1)).unwrap();
        assert_eq!(
            kinds(&compiled),
            vec![
                GateKind::H,
                GateKind::S,
                GateKind::Cnot,
                GateKind::X,
                GateKind::Measure
            ]
        );
        assert_eq!(compiled.intents, logical_intents(&c));
    }

    #[test]
    fn movement_teleport_adds_exactly_cult_cnot_measure_s() {
        let c = c2(1, vec![Op::new(GateKind::T, vec![0])]);
        let compiled = lower_clifford(&c, &dsm(), &dense_layout(1, 1)).unwrap();
        assert_eq!(
            kinds(&compiled),
            vec![GateKind::CultT, GateKind::Cnot, GateKind::Measure, GateKind::S]
        );
        let s = &compiled.circuit.ops[3];
        assert_eq!(s.ctrl, Some(2));
        assert_eq!(compiled.circuit.ops[1].qubits, vec![1, 0]);
    }

    #[test]
    fn second_t_on_a_single_factory_batches_a_recultivation() {
        let c = c2(
            1,
            vec![Op::new(GateKind::T, vec![0]), Op::new(GateKind::T, vec![0])],
        );
        let compiled = lower_clifford(&c, &dsm(), &dense_layout(1, 1)).unwrap();
        let cults: Vec<usize> = kinds(&compiled)
            .iter()
            .enumerate()
            .filter(|(_, k)| **k == GateKind::CultT)
            .map(|(i, _)| i)
            .collect();
        assert_eq!(cults, vec![0, 4]);
    }

    #[test]
    fn batch_recultivation_spans_every_factory() {
        let c = c2(
            1,
            vec![
                Op::new(GateKind::T, vec![0]),
                Op::new(GateKind::T, vec![0]),
                Op::new(GateKind::T, vec![0]),
            ],
        );
        let compiled = lower_clifford(&c, &dsm(), &dense_layout(1, 2)).unwrap();
        let batches: Vec<&Op> = compiled
            .circuit
            .ops
            .iter()
            .filter(|op| op.kind == GateKind::CultT)
            .collect();
        assert_eq!(batches.len(), 2);
        for b in batches {
            assert_eq!(b.qubits, vec![1, 2]);
        }
    }

    #[test]
    fn factory_discipline_exactly_one_cultivation_between_uses() {
        let c = c2(
            2,
            vec![
                Op::new(GateKind::T, vec![0]),
                Op::new(GateKind::T, vec![1]),
                Op::new(GateKind::T, vec![0]),
                Op::new(GateKind::T, vec![1]),
            ],
        );
        let compiled = lower_clifford(&c, &dsm(), &dense_layout(2, 2)).unwrap();
        let factory_qubits = [2u32, 3u32];
        for fq in factory_qubits {
            let mut cultivations_since_use = 0i32;
            for op in &compiled.circuit.ops {
                if !op.qubits.contains(&fq) {
                    continue;
                }
                match op.kind {
                    GateKind::CultT => cultivations_since_use += 1,
                    GateKind::Cnot => {
                        assert_eq!(cultivations_since_use, 1, "factory {fq} reused without exactly one cultivation");
                        cultivations_since_use = 0;
                    }
                    _ => {}
                }
            }
        }
    }

    #[test]
    fn lattice_t_uses_the_three_qubit_network() {
        let c = c2(1, vec![Op::new(GateKind::T, vec![0])]);
        let compiled = lower_clifford(&c, &dsnm(), &sandwich_layout(1, 1, 1)).unwrap();
        let ks = kinds(&compiled);
        assert_eq!(
            ks,
            vec![
                GateKind::CultT,
                GateKind::CultS,
                GateKind::Merge,
                GateKind::Split,
                GateKind::Measure,
                GateKind::Merge,
                GateKind::Split,
                GateKind::Measure,
                GateKind::Z
            ]
        );
        let cc_merge = &compiled.circuit.ops[5];
        assert_eq!(cc_merge.ctrl, Some(4));
        let z = &compiled.circuit.ops[8];
        assert_eq!(z.ctrl, Some(7));
    }

    #[test]
    fn lattice_s_teleports_with_cult_s() {
        let c = c2(1, vec![Op::new(GateKind::S, vec![0])]);
        let compiled = lower_clifford(&c, &dsnm(), &sandwich_layout(1, 1, 1)).unwrap();
        assert_eq!(
            kinds(&compiled),
            vec![
                GateKind::CultS,
                GateKind::Merge,
                GateKind::Split,
                GateKind::Measure,
                GateKind::Z
            ]
        );
        assert_eq!(compiled.intents[&GateKind::S], 1);
    }

    #[test]
    fn adjacent_patches_route_through_one_shared_ancilla() {
        // Sandwich: factories row 0, ancilla row 1, data row 2. The T factory
        // at (0, 0) and the data patch at (2, 0) share the ancilla at (1, 0).
        let layout = sandwich_layout(2, 1, 1);
        let path = ancilla_route(&layout, (0, 0), (2, 0)).unwrap();
        assert_eq!(path, vec![(1, 0)]);
    }

    #[test]
    fn disjoint_routes_do_not_serialize() {
        let c = c2(
            4,
            vec![
                Op::new(GateKind::Cnot, vec![0, 1]),
                Op::new(GateKind::Cnot, vec![2, 3]),
            ],
        );
        let compiled = lower_clifford(&c, &dsnm(), &sandwich_layout(4, 1, 1)).unwrap();
        assert!(compiled.extra_edges.is_empty());
    }

    #[test]
    fn overlapping_routes_serialize_on_the_shared_cell() {
        let c = c2(
            2,
            vec![
                Op::new(GateKind::Cnot, vec![0, 1]),
                Op::new(GateKind::Cnot, vec![1, 0]),
            ],
        );
        let compiled = lower_clifford(&c, &dsnm(), &sandwich_layout(2, 1, 1)).unwrap();
        assert!(!compiled.extra_edges.is_empty());
        let dag = compiled.dag().unwrap();
        let starts = dag.start_times();
        let merges: Vec<usize> = compiled
            .circuit
            .ops
            .iter()
            .enumerate()
            .filter(|(_, op)| op.kind == GateKind::Merge)
            .map(|(i, _)| i)
            .collect();
        let first_end = starts[merges[0]] + dag.duration(merges[0] as u32) as u128;
        assert!(starts[merges[1]] >= first_end);
    }

    #[test]
    fn post_op_correction_disabled_is_identity() {
        let c = c2(1, vec![Op::new(GateKind::H, vec![0])]);
        let mut arch = dsm();
        arch.post_op_correction = false;
        let layout = dense_layout(1, 1);
        let compiled = lower_clifford(&c, &arch, &layout).unwrap();
        let before = compiled.circuit.clone();
        let after = post_op_correction_pass(compiled, &arch);
        assert_eq!(after.circuit, before);
    }

    #[test]
    fn post_op_correction_follows_every_transversal_gate() {
        let c = c2(
            2,
            vec![
                Op::new(GateKind::H, vec![0]),
                Op::new(GateKind::S, vec![1]),
                Op::new(GateKind::Cnot, vec![0, 1]),
            ],
        );
        let arch = dsm();
        let layout = dense_layout(2, 1);
        let compiled = post_op_correction_pass(lower_clifford(&c, &arch, &layout).unwrap(), &arch);
        let ks = kinds(&compiled);
        assert_eq!(ks.iter().filter(|k| **k == GateKind::Se).count(), 3);
        assert_eq!(ks[1], GateKind::Se);
        assert_eq!(compiled.circuit.ops[5].qubits, vec![0, 1]);
    }

    #[test]
    fn ssm_cnot_gets_a_zone_round_trip() {
        let c = c2(2, vec![Op::new(GateKind::Cnot, vec![0, 1])]);
        let arch = ssm();
        let layout = dense_layout(2, 1);
        let compiled = movement_pass(lower_clifford(&c, &arch, &layout).unwrap(), &arch, &layout).unwrap();
        assert_eq!(
            kinds(&compiled),
            vec![GateKind::ZMove, GateKind::Cnot, GateKind::ZMove]
        );
    }

    #[test]
    fn mzo_measure_is_preceded_by_a_zone_move() {
        let c = c2(
            2,
            vec![
                Op::new(GateKind::Cnot, vec![0, 1]),
                Op::new(GateKind::Measure, vec![0]),
            ],
        );
        let arch = mzo();
        let layout = dense_layout(2, 1);
        let compiled = movement_pass(lower_clifford(&c, &arch, &layout).unwrap(), &arch, &layout).unwrap();
        assert_eq!(
            kinds(&compiled),
            vec![
                GateKind::AMove,
                GateKind::Cnot,
                GateKind::ZMove,
                GateKind::Measure
            ]
        );
    }

    #[test]
    fn dsm_adjacent_cnot_needs_one_fixed_time_alignment_move() {
        let c = c2(2, vec![Op::new(GateKind::Cnot, vec![0, 1])]);
        let arch = dsm();
        let layout = dense_layout(2, 1);
        let compiled = movement_pass(lower_clifford(&c, &arch, &layout).unwrap(), &arch, &layout).unwrap();
        assert_eq!(kinds(&compiled), vec![GateKind::AMove, GateKind::Cnot]);
        assert_eq!(compiled.circuit.ops[0].dur_ticks, Some(us_to_ticks(22.0)));
    }

    #[test]
    fn movement_pass_rejects_lattice_architectures() {
        let c = c2(1, vec![Op::new(GateKind::H, vec![0])]);
        let arch = dsnm();
        let layout = sandwich_layout(1, 1, 1);
        let compiled = lower_clifford(&c, &arch, &layout).unwrap();
        assert!(movement_pass(compiled, &arch, &layout).is_err());
    }

    #[test]
    fn idling_pass_fills_gaps_without_stretching_the_critical_path() {
        // Qubit 1 idles for 3695 us while qubit 0 runs three measure/reset
        // rounds; at 1411.08 us per SE exactly two rounds fit the gap.
        let mut ops = vec![Op::new(GateKind::H, vec![1])];
        for _ in 0..3 {
            ops.push(Op::new(GateKind::Measure, vec![0]));
            ops.push(Op::new(GateKind::Reset, vec![0]));
        }
        ops.push(Op::new(GateKind::Cnot, vec![0, 1]));
        let c = c2(2, ops);
        let mut arch = dsm();
        arch.idling_se = true;
        arch.post_op_correction = false;
        let layout = dense_layout(2, 1);
        let compiled = lower_clifford(&c, &arch, &layout).unwrap();
        let before = compiled.dag().unwrap().critical_path().length_ticks;
        let idled = idling_pass(compiled, &arch).unwrap();
        let se_ops: Vec<&Op> = idled
            .circuit
            .ops
            .iter()
            .filter(|op| op.kind == GateKind::Se)
            .collect();
        assert_eq!(se_ops.len(), 2);
        assert!(se_ops.iter().all(|op| op.qubits == vec![1]));
        assert_eq!(idled.dag().unwrap().critical_path().length_ticks, before);
    }

    #[test]
    fn idling_pass_is_identity_on_packed_circuits() {
        let c = c2(1, vec![Op::new(GateKind::H, vec![0]), Op::new(GateKind::H, vec![0])]);
        let mut arch = dsm();
        arch.idling_se = true;
        arch.post_op_correction = false;
        let layout = dense_layout(1, 1);
        let compiled = lower_clifford(&c, &arch, &layout).unwrap();
        let before = compiled.circuit.clone();
        let idled = idling_pass(compiled, &arch).unwrap();
        assert_eq!(idled.circuit, before);
    }

    #[test]
    fn output_alphabet_stays_within_the_primitive_set() {
        let c = c2(
            3,
            vec![
                Op::new(GateKind::H, vec![0]),
                Op::new(GateKind::T, vec![1]),
                Op::new(GateKind::Cnot, vec![1, 2]),
                Op::new(GateKind::Sdg, vec![2]),
                Op::new(GateKind::Y, vec![0]),
                Op::new(GateKind::Measure, vec![2]),
                Op::new(GateKind::Reset, vec![2]),
            ],
        );
        for (arch, layout) in [
            (dsm(), dense_layout(3, 2)),
            (ssm(), dense_layout(3, 2)),
            (dsnm(), sandwich_layout(3, 2, 2)),
        ] {
            let compiled = compile_to_primitive(&c, &arch, &layout).unwrap();
            for op in &compiled.circuit.ops {
                assert!(
                    arch.primitives.contains(&op.kind),
                    "{}: {} escaped the primitive set",
                    arch.name,
                    op.kind
                );
            }
            assert_eq!(compiled.intents, logical_intents(&c), "{}", arch.name);
        }
    }

    #[test]
    fn compilation_is_deterministic() {
        let c = c2(
            3,
            vec![
                Op::new(GateKind::T, vec![0]),
                Op::new(GateKind::Cnot, vec![0, 1]),
                Op::new(GateKind::T, vec![2]),
                Op::new(GateKind::S, vec![1]),
            ],
        );
        let arch = dsm();
        let layout = dense_layout(3, 2);
        let a = compile_to_primitive(&c, &arch, &layout).unwrap();
        let b = compile_to_primitive(&c, &arch, &layout).unwrap();
        assert_eq!(a.circuit, b.circuit);
        assert_eq!(a.extra_edges, b.extra_edges);
        assert_eq!(a.intents, b.intents);
    }

    #[test]
    fn stage_violation_is_rejected() {
        let mut c = Circuit::new(1, Level::CliffordRz);
        c.push(Op::rz(0, 0.3));
        let arch = dsm();
        let layout = dense_layout(1, 1);
        assert!(lower_clifford(&c, &arch, &layout).is_err());
    }

    #[test]
    fn lattice_t_without_s_factories_is_a_configuration_error() {
        let c = c2(1, vec![Op::new(GateKind::T, vec![0])]);
        let layout = sandwich_layout(1, 1, 0);
        let err = lower_clifford(&c, &dsnm(), &layout).unwrap_err();
        assert!(err.to_string().contains("no S factory"), "{err}");
    }

    #[test]
    fn classical_controls_survive_insertion_passes() {
        let c = c2(
            2,
            vec![
                Op::new(GateKind::Measure, vec![0]),
                Op::new(GateKind::H, vec![1]).with_ctrl(0),
                Op::new(GateKind::Cnot, vec![0, 1]),
            ],
        );
        let arch = ssm();
        let layout = dense_layout(2, 1);
        let compiled = compile_to_primitive(&c, &arch, &layout).unwrap();
        let measure_idx = compiled
            .circuit
            .ops
            .iter()
            .position(|op| op.kind == GateKind::Measure)
            .unwrap() as u32;
        let h = compiled
            .circuit
            .ops
            .iter()
            .find(|op| op.kind == GateKind::H)
            .unwrap();
        assert_eq!(h.ctrl, Some(measure_idx));
        compiled.circuit.validate().unwrap();
    }
}
