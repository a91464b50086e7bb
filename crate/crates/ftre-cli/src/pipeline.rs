//! The estimate, sensitivity, and layout subcommands, plus the shared
//! circuit-to-report evaluation used by the sweep.

use std::path::Path;

use ftre::arch::PrimitiveSet;
use ftre::budget::{
    sensitivity_grid, solve_halving, GridSpec, SolverOptions, TeleportOverhead,
};
use ftre::compile::compile_to_primitive;
use ftre::ingest::{emit_native, read_circuit};
use ftre::layout::generate_layout;
use ftre::report::{analyze, write_report_files};
use ftre::stage1::to_clifford_rz;
use ftre::synthesis::expand_rz;
use ftre::{
    Architecture, BudgetSolution, Circuit, CompiledCircuit, CultivationTable, GateKind,
    NoiseModel, ReportOptions, ResourceReport, SynthModel,
};

use crate::resolve::{resolve_arch, resolve_layout};
use crate::{config_err, BudgetArg, CliResult, EstimateArgs, LayoutArgs, SensitivityArgs};

/// A circuit lowered to Clifford+Rz once, shared across evaluation points.
pub struct Prepared {
    pub c1: Circuit,
    /// Number of Rz rotations exposed to the budget solver.
    pub k: u64,
    /// Number of non-rotation logical operations exposed to logical noise.
    pub l: u64,
}

pub fn prepare(path: &Path) -> CliResult<Prepared> {
    let input = read_circuit(path)?;
    let c1 = to_clifford_rz(&input)?;
    let k = c1.ops.iter().filter(|op| op.kind == GateKind::Rz).count() as u64;
    let l = c1
        .ops
        .iter()
        .filter(|op| op.kind != GateKind::Rz && op.kind != GateKind::I)
        .count() as u64;
    Ok(Prepared { c1, k, l })
}

/// Everything one configuration point produces.
pub struct Evaluation {
    pub arch: Architecture,
    pub budget: BudgetSolution,
    pub c2: Circuit,
    pub compiled: CompiledCircuit,
    pub report: ResourceReport,
}

pub fn check_target_error(target: f64) -> CliResult<()> {
    if !(target > 0.0 && target < 1.0) {
        return Err(config_err(format!("--error must lie in (0,1), got {target}")));
    }
    Ok(())
}

pub fn solver_options(arch: &Architecture) -> SolverOptions {
    SolverOptions {
        folded: arch.folded_cultivation,
        overhead: if arch.primitive_set == PrimitiveSet::Lattice {
            TeleportOverhead::PerT
        } else {
            TeleportOverhead::Off
        },
        ..SolverOptions::default()
    }
}

/// Runs budget, synthesis, stage-2 compilation, and reporting for one
/// resolved architecture.
pub fn evaluate(
    prepared: &Prepared,
    mut arch: Architecture,
    layout_flags: &crate::LayoutFlags,
    target_error: f64,
    budget_mode: BudgetArg,
    d_override: Option<u32>,
) -> CliResult<Evaluation> {
    check_target_error(target_error)?;
    let noise = NoiseModel::default();
    let cult = CultivationTable::default();
    let model = SynthModel::default();
    let opts = solver_options(&arch);
    let budget = match budget_mode {
        BudgetArg::Halving => {
            solve_halving(prepared.k, prepared.l, target_error, &noise, &cult, &model, &opts)?
        }
        BudgetArg::Grid => {
            sensitivity_grid(
                prepared.k,
                prepared.l,
                target_error,
                &noise,
                &cult,
                &model,
                &GridSpec::default(),
                &opts,
            )?
            .0
        }
    };
    arch.d = d_override.unwrap_or(budget.d);
    arch.rep_t = budget.rep;
    // A rotation-free circuit gets eps_rz = 0 from the solver; expansion is
    // then a pure level change and any valid accuracy works.
    let eps_rz = if prepared.k == 0 { 1.0 } else { budget.eps_rz };
    let c2 = expand_rz(&prepared.c1, &model, eps_rz)?;
    let layout = resolve_layout(&arch, layout_flags, c2.qubits)?;
    let compiled = compile_to_primitive(&c2, &arch, &layout)?;
    let report = analyze(&compiled, &arch, &layout, Some(&budget), ReportOptions::default())?;
    Ok(Evaluation { arch, budget, c2, compiled, report })
}

/// Renders microseconds at human scale for the summary line.
pub fn human_us(us: f64) -> String {
    let secs = us / 1e6;
    if secs < 1.0 {
        format!("{us:.1} us")
    } else if secs < 60.0 {
        format!("{secs:.2} s")
    } else if secs < 3_600.0 {
        format!("{:.2} min", secs / 60.0)
    } else if secs < 86_400.0 {
        format!("{:.2} h", secs / 3_600.0)
    } else if secs < 30.0 * 86_400.0 {
        format!("{:.2} days", secs / 86_400.0)
    } else {
        format!("{:.2} months", secs / (30.0 * 86_400.0))
    }
}

pub fn run_estimate(args: &EstimateArgs) -> CliResult<()> {
    let prepared = prepare(&args.circuit)?;
    let arch = resolve_arch(&args.arch)?;
    let eval = evaluate(
        &prepared,
        arch,
        &args.layout,
        args.error,
        args.budget,
        args.arch.d,
    )?;
    std::fs::create_dir_all(&args.out)?;
    let mut written = write_report_files(&eval.report, &args.out)?;
    if args.emit_intermediate {
        for (name, circuit) in [
            ("c1.json", &prepared.c1),
            ("c2.json", &eval.c2),
            ("primitive.json", &eval.compiled.circuit),
        ] {
            let path = args.out.join(name);
            std::fs::write(&path, emit_native(circuit))?;
            written.push(path);
        }
    }

    let report = &eval.report;
    println!(
        "circuit: {} input ops -> k={} rotations, l={} cliffords",
        prepared.c1.ops.len(),
        prepared.k,
        prepared.l
    );
    println!("budget: {}", eval.budget);
    println!(
        "arch: {}@{} d={} rep_t={}",
        eval.arch.name,
        eval.arch.column.as_str(),
        eval.arch.d,
        eval.arch.rep_t
    );
    println!(
        "layout: {} {}x{} ({} data, {} T factories, {} S factories)",
        report.layout.strategy,
        report.layout.width,
        report.layout.height,
        report.layout.data,
        report.layout.t_factories,
        report.layout.s_factories
    );
    println!(
        "qubits: {} logical, {} physical",
        report.logical_qubits, report.physical_qubits
    );
    println!(
        "time: critical path {:.3} us ({}), serial {:.3} us ({})",
        report.critical_path_us,
        human_us(report.critical_path_us),
        report.serial_us,
        human_us(report.serial_us)
    );
    let names: Vec<String> = written
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    println!("wrote: {}", names.join(", "));
    Ok(())
}

pub fn run_sensitivity(args: &SensitivityArgs) -> CliResult<()> {
    check_target_error(args.error)?;
    let prepared = prepare(&args.circuit)?;
    let arch = resolve_arch(&args.arch)?;
    let grid = GridSpec {
        d_min: args.d_min,
        d_max: args.d_max,
        eps_rz_min: args.eps_rz_min,
        eps_rz_max: args.eps_rz_max,
        points_per_decade: args.points_per_decade,
    };
    let opts = solver_options(&arch);
    let noise = NoiseModel::default();
    let cult = CultivationTable::default();
    let model = SynthModel::default();
    let (chosen, surface) = sensitivity_grid(
        prepared.k,
        prepared.l,
        args.error,
        &noise,
        &cult,
        &model,
        &grid,
        &opts,
    )?;

    std::fs::create_dir_all(&args.out)?;
    let mut csv = String::from("d,eps_rz,eps_m,fidelity,rep,feasible,contour_best\n");
    for p in &surface {
        csv.push_str(&format!(
            "{},{:e},{:e},{},{},{},{}\n",
            p.d, p.eps_rz, p.eps_m, p.fidelity, p.rep, p.feasible, p.contour_best
        ));
    }
    let surface_path = args.out.join("surface.csv");
    std::fs::write(&surface_path, csv)?;
    let budget_path = args.out.join("budget.json");
    let mut budget_json = serde_json::to_string_pretty(&chosen)
        .map_err(|e| crate::CliError::Core(ftre::Error::Report(e.to_string())))?;
    budget_json.push('\n');
    std::fs::write(&budget_path, budget_json)?;

    println!("chosen: {chosen}");
    println!("surface: {} grid points", surface.len());
    println!("wrote: surface.csv, budget.json");
    Ok(())
}

pub fn run_layout(args: &LayoutArgs) -> CliResult<()> {
    let layout = generate_layout(
        args.layout.into(),
        args.data,
        args.factories_t,
        args.factories_s,
    )?;
    print!("{}", layout.render());
    println!(
        "{}x{} {}: {} data, {} T factories, {} S factories",
        layout.width,
        layout.height,
        layout.strategy.as_str(),
        layout.n_data(),
        layout.t_cells.len(),
        layout.s_cells.len()
    );
    std::fs::create_dir_all(&args.out)?;
    let mut text = serde_json::to_string_pretty(&layout)
        .map_err(|e| crate::CliError::Core(ftre::Error::Report(e.to_string())))?;
    text.push('\n');
    let path = args.out.join("layout.json");
    std::fs::write(&path, text)?;
    println!("wrote: layout.json");
    Ok(())
}
