//! Resource estimation from a compiled primitive circuit: critical path,
//! serial upper bound, qubit counts, and time breakdowns by primitive kind
//! and by physical operation class.
//!
//! All accounting runs in integer ticks so the conservation invariants are
//! exact: the per-primitive breakdown sums to the critical path tick for
//! tick, and so does the physical breakdown, whose rounding and calibrated
//! residuals land in an explicit `other` bucket. Microsecond floats appear
//! only as derived display values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arch::{AMoveSpec, Architecture, PhysClass, PrimitiveRecipe, PrimitiveSet, SpeedColumn, SyndromeRounds};
use crate::budget::BudgetSolution;
use crate::circuit::GateKind;
use crate::compile::CompiledCircuit;
use crate::dag::{ticks_to_us, TICKS_PER_US};
use crate::error::{Error, Result};
use crate::layout::{LayoutGrid, LayoutStrategy};

pub const REPORT_SCHEMA: &str = "ftre-report/1";

/// Reporting knobs that do not change compilation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReportOptions {
    /// Charge classically-controlled corrections half their duration,
    /// modelling the even odds that a teleportation correction fires.
    pub assume_random_corrections: bool,
}

/// Architecture parameters echoed into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSummary {
    pub name: String,
    pub column: SpeedColumn,
    pub primitive_set: PrimitiveSet,
    pub d: u32,
    pub rep_t: f64,
    pub rep_s: f64,
    pub folded_cultivation: bool,
    pub syndrome_rounds: SyndromeRounds,
}

/// Layout parameters echoed into the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutSummary {
    pub strategy: LayoutStrategy,
    pub width: u32,
    pub height: u32,
    pub data: u32,
    pub t_factories: u32,
    pub s_factories: u32,
}

/// Critical-path usage of one primitive kind.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub count: u64,
    pub ticks: u64,
    pub us: f64,
}

/// Critical-path time attributed to one physical operation class.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysUsage {
    pub ticks: u64,
    pub us: f64,
}

/// The full machine-readable estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceReport {
    pub schema: String,
    pub arch: ArchSummary,
    pub layout: LayoutSummary,
    /// Patches in use: data, factories, and ancilla.
    pub logical_qubits: u64,
    /// `logical_qubits * d^2`.
    pub physical_qubits: u64,
    pub critical_path_ticks: u64,
    pub critical_path_us: f64,
    /// Fully serialized execution time, the stated upper bound.
    pub serial_ticks: u64,
    pub serial_us: f64,
    /// Logical gates the compiled circuit implements.
    pub intents: BTreeMap<String, u64>,
    /// Ops in the whole primitive circuit, by kind.
    pub op_counts: BTreeMap<String, u64>,
    /// Critical-path time by primitive kind.
    pub by_primitive: BTreeMap<String, Usage>,
    /// Critical-path time by physical class: `1q`, `2q`, `meas`, `reset`,
    /// `movement` (A-Moves and Z-Moves combined), and `other` for calibrated
    /// residuals and rounding.
    pub by_physical: BTreeMap<String, PhysUsage>,
    pub budget: Option<BudgetSolution>,
    /// Hash of the fully-resolved architecture and layout.
    pub fingerprint: String,
}

/// One evaluated sweep point; failed points carry their error message and
/// zeroed results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub arch: String,
    pub column: String,
    pub folded: bool,
    pub decoding: String,
    pub layout: String,
    pub t_factories: u32,
    pub s_factories: u32,
    pub d: u32,
    pub logical_qubits: u64,
    pub physical_qubits: u64,
    pub critical_path_us: f64,
    pub serial_us: f64,
    pub error: String,
}

/// SHA-256 over the canonical JSON of the resolved architecture and layout.
pub fn config_fingerprint(arch: &Architecture, layout: &LayoutGrid) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(arch).map_err(|e| Error::Report(e.to_string()))?);
    hasher.update([0u8]);
    hasher.update(serde_json::to_vec(layout).map_err(|e| Error::Report(e.to_string()))?);
    Ok(hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

fn floor_ticks(us: f64) -> u64 {
    (us * TICKS_PER_US as f64).floor() as u64
}

fn bucket_of(class: PhysClass) -> &'static str {
    match class {
        PhysClass::OneQ => "1q",
        PhysClass::TwoQ => "2q",
        PhysClass::Meas => "meas",
        PhysClass::Reset => "reset",
        PhysClass::ZMove | PhysClass::AMove => "movement",
        PhysClass::Se => "other",
    }
}

/// Expand recipe class counts into bucketed ticks, recursing through the SE
/// pseudo-class so syndrome extraction decomposes into its base operations.
fn expand_classes(
    arch: &Architecture,
    recipe: &PrimitiveRecipe,
    factor: f64,
    depth: u32,
    parts: &mut Vec<(&'static str, u64)>,
) -> Result<()> {
    for (&class, &count) in &recipe.counts {
        if class == PhysClass::Se && depth < 2 {
            if let Some(se) = arch.recipes.get(&GateKind::Se) {
                expand_classes(arch, se, factor * count, depth + 1, parts)?;
                continue;
            }
        }
        let speed = match class {
            PhysClass::AMove => match arch.speeds.a_move {
                Some(AMoveSpec::Fixed { us }) => us,
                // Distance-dependent moves are priced per op, not per class.
                _ => 0.0,
            },
            _ => arch.class_speed(class)?,
        };
        parts.push((bucket_of(class), floor_ticks(count * speed * factor)));
    }
    Ok(())
}

/// Physical-class tick attribution of one op. The parts never exceed the op
/// total; the shortfall (calibrated residuals plus rounding) becomes `other`.
fn attribute_op(
    arch: &Architecture,
    kind: GateKind,
    total: u64,
    halved: bool,
) -> Result<Vec<(&'static str, u64)>> {
    if kind == GateKind::AMove {
        return Ok(vec![("movement", total)]);
    }
    let Some(recipe) = arch.recipes.get(&kind) else {
        return Ok(vec![("other", total)]);
    };
    let mut factor = 1.0;
    if recipe.scales_with_d {
        factor *= arch.d as f64;
    }
    if recipe.rep_scaling {
        factor *= match kind {
            GateKind::CultS => arch.rep_s,
            _ => arch.rep_t,
        };
    }
    if kind == GateKind::Se {
        factor *= arch.se_rounds() as f64;
    }
    if halved {
        factor *= 0.5;
    }
    let mut parts = Vec::new();
    expand_classes(arch, recipe, factor, 0, &mut parts)?;
    let mut attributed: u64 = parts.iter().map(|p| p.1).sum();
    if attributed > total {
        let mut excess = attributed - total;
        for p in parts.iter_mut().rev() {
            let take = excess.min(p.1);
            p.1 -= take;
            excess -= take;
            if excess == 0 {
                break;
            }
        }
        attributed = total;
    }
    parts.push(("other", total - attributed));
    Ok(parts)
}

/// Compute the resource estimate for a compiled circuit.
pub fn analyze(
    compiled: &CompiledCircuit,
    arch: &Architecture,
    layout: &LayoutGrid,
    budget: Option<&BudgetSolution>,
    options: ReportOptions,
) -> Result<ResourceReport> {
    let halved_storage;
    let compiled = if options.assume_random_corrections {
        let mut w = compiled.clone();
        for i in 0..w.circuit.ops.len() {
            let op = &w.circuit.ops[i];
            if op.ctrl.is_some() {
                let base = w.durations.op_ticks(op.kind, op.dur_ticks)?;
                w.circuit.ops[i].dur_ticks = Some(base / 2);
            }
        }
        halved_storage = w;
        &halved_storage
    } else {
        compiled
    };

    let dag = compiled.dag()?;
    let cp = dag.critical_path();
    let critical_path_ticks = u64::try_from(cp.length_ticks)
        .map_err(|_| Error::Report("critical path exceeds the reportable tick range".into()))?;
    let serial_ticks = u64::try_from(dag.serial_time())
        .map_err(|_| Error::Report("serial time exceeds the reportable tick range".into()))?;

    let mut by_primitive: BTreeMap<String, Usage> = BTreeMap::new();
    let mut phys_ticks: BTreeMap<&'static str, u64> = BTreeMap::new();
    for &i in &cp.path {
        let op = &compiled.circuit.ops[i as usize];
        let ticks = dag.duration(i);
        let entry = by_primitive.entry(op.kind.to_string()).or_default();
        entry.count += 1;
        entry.ticks += ticks;
        let halved = options.assume_random_corrections && op.ctrl.is_some();
        for (bucket, t) in attribute_op(arch, op.kind, ticks, halved)? {
            *phys_ticks.entry(bucket).or_insert(0) += t;
        }
    }
    for usage in by_primitive.values_mut() {
        usage.us = ticks_to_us(usage.ticks as u128);
    }
    let by_physical: BTreeMap<String, PhysUsage> = phys_ticks
        .into_iter()
        .map(|(bucket, ticks)| {
            (
                bucket.to_string(),
                PhysUsage {
                    ticks,
                    us: ticks_to_us(ticks as u128),
                },
            )
        })
        .collect();

    let mut op_counts: BTreeMap<String, u64> = BTreeMap::new();
    for op in &compiled.circuit.ops {
        *op_counts.entry(op.kind.to_string()).or_insert(0) += 1;
    }

    Ok(ResourceReport {
        schema: REPORT_SCHEMA.to_string(),
        arch: ArchSummary {
            name: arch.name.clone(),
            column: arch.column,
            primitive_set: arch.primitive_set,
            d: arch.d,
            rep_t: arch.rep_t,
            rep_s: arch.rep_s,
            folded_cultivation: arch.folded_cultivation,
            syndrome_rounds: arch.syndrome_rounds,
        },
        layout: LayoutSummary {
            strategy: layout.strategy,
            width: layout.width,
            height: layout.height,
            data: layout.n_data(),
            t_factories: layout.t_cells.len() as u32,
            s_factories: layout.s_cells.len() as u32,
        },
        logical_qubits: layout.logical_qubits(),
        physical_qubits: layout.physical_qubits(arch.d),
        critical_path_ticks,
        critical_path_us: ticks_to_us(critical_path_ticks as u128),
        serial_ticks,
        serial_us: ticks_to_us(serial_ticks as u128),
        intents: compiled
            .intents
            .iter()
            .map(|(k, &v)| (k.to_string(), v))
            .collect(),
        op_counts,
        by_primitive,
        by_physical,
        budget: budget.cloned(),
        fingerprint: config_fingerprint(arch, layout)?,
    })
}

/// Canonical JSON rendering: stable key order, trailing newline.
pub fn emit_report(report: &ResourceReport) -> Result<String> {
    let mut text =
        serde_json::to_string_pretty(report).map_err(|e| Error::Report(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Parse a report and check its schema and conservation invariants.
pub fn validate_report_json(text: &str) -> Result<ResourceReport> {
    let report: ResourceReport =
        serde_json::from_str(text).map_err(|e| Error::Report(format!("malformed report: {e}")))?;
    if report.schema != REPORT_SCHEMA {
        return Err(Error::Report(format!(
            "unsupported report schema {:?}, expected {REPORT_SCHEMA:?}",
            report.schema
        )));
    }
    let primitive_sum: u64 = report.by_primitive.values().map(|u| u.ticks).sum();
    if primitive_sum != report.critical_path_ticks {
        return Err(Error::Report(format!(
            "primitive breakdown sums to {primitive_sum} ticks, critical path is {}",
            report.critical_path_ticks
        )));
    }
    let physical_sum: u64 = report.by_physical.values().map(|u| u.ticks).sum();
    if physical_sum != report.critical_path_ticks {
        return Err(Error::Report(format!(
            "physical breakdown sums to {physical_sum} ticks, critical path is {}",
            report.critical_path_ticks
        )));
    }
    if report.serial_ticks < report.critical_path_ticks {
        return Err(Error::Report(
            "serial time is below the critical path".into(),
        ));
    }
    if report.physical_qubits != report.logical_qubits * u64::from(report.arch.d).pow(2) {
        return Err(Error::Report(
            "physical qubits do not equal logical qubits times d squared".into(),
        ));
    }
    Ok(report)
}

fn csv_error(e: impl std::fmt::Display) -> Error {
    Error::Report(format!("csv write failed: {e}"))
}

/// Write `report.json`, `breakdown_primitive.csv`, and
/// `breakdown_physical.csv` into `dir`. Breakdown rows are ordered by
/// descending time, ties alphabetical, with a running cumulative column on
/// the primitive file. Returns the written paths.
pub fn write_report_files(report: &ResourceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    let json_path = dir.join("report.json");
    std::fs::write(&json_path, emit_report(report)?).map_err(Error::from)?;

    let primitive_path = dir.join("breakdown_primitive.csv");
    let mut rows: Vec<(&String, &Usage)> = report.by_primitive.iter().collect();
    rows.sort_by(|a, b| b.1.ticks.cmp(&a.1.ticks).then_with(|| a.0.cmp(b.0)));
    let mut w = csv::Writer::from_path(&primitive_path).map_err(csv_error)?;
    w.write_record(["kind", "count", "us", "cumulative_us"])
        .map_err(csv_error)?;
    let mut cumulative_ticks = 0u64;
    for (kind, usage) in rows {
        cumulative_ticks += usage.ticks;
        w.write_record([
            kind.as_str(),
            &usage.count.to_string(),
            &usage.us.to_string(),
            &ticks_to_us(cumulative_ticks as u128).to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)?;

    let physical_path = dir.join("breakdown_physical.csv");
    let mut rows: Vec<(&String, &PhysUsage)> = report.by_physical.iter().collect();
    rows.sort_by(|a, b| b.1.ticks.cmp(&a.1.ticks).then_with(|| a.0.cmp(b.0)));
    let mut w = csv::Writer::from_path(&physical_path).map_err(csv_error)?;
    w.write_record(["class", "us"]).map_err(csv_error)?;
    for (class, usage) in rows {
        w.write_record([class.as_str(), &usage.us.to_string()])
            .map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)?;

    Ok(vec![json_path, primitive_path, physical_path])
}

/// Write `sweep.csv` with one row per evaluated point, in the given order.
pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    w.flush().map_err(csv_error)?;
    Ok(())
}
