//! Cartesian configuration sweeps over presets, cultivation folding,
//! decoding mode, speed column, and T-factory count.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use ftre::arch::{fold_variant, load_preset, SyndromeRounds};
use ftre::report::{write_sweep_csv, SweepRow};
use ftre::SpeedColumn;

use crate::pipeline::{check_target_error, evaluate, prepare, Prepared};
use crate::resolve::{apply_decoding, config_dir};
use crate::{
    config_err, ArchFlags, BudgetArg, CliResult, DecodingArg, LayoutFlags, OnOff,
};

#[derive(Args)]
pub struct SweepArgs {
    /// Input circuit (.qasm or native .json).
    #[arg(long)]
    pub circuit: PathBuf,

    #[command(flatten)]
    pub arch: ArchFlags,

    /// Total circuit error budget, in (0,1).
    #[arg(long)]
    pub error: f64,

    /// Budget selection procedure.
    #[arg(long, value_enum, default_value_t = BudgetArg::Halving)]
    pub budget: BudgetArg,

    #[command(flatten)]
    pub layout: LayoutFlags,

    /// Comma-separated T-factory counts, e.g. `1,5,10`.
    #[arg(long = "axis-factories")]
    pub axis_factories: Option<String>,

    /// Comma-separated preset names, e.g. `dsm,ssm`.
    #[arg(long = "axis-arch")]
    pub axis_arch: Option<String>,

    /// Comma-separated cultivation variants: `U` (unfolded) or `F` (folded).
    #[arg(long = "axis-folded")]
    pub axis_folded: Option<String>,

    /// Comma-separated decoding modes: `C` (correlated) or `S` (standard).
    #[arg(long = "axis-decoding")]
    pub axis_decoding: Option<String>,

    /// Comma-separated speed columns, e.g. `current,proposed`.
    #[arg(long = "axis-speeds")]
    pub axis_speeds: Option<String>,

    /// Worker threads for point evaluation.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,

    /// Output directory for sweep.csv.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// One point of the Cartesian product. `None` leaves the preset default in
/// force.
struct Point {
    family: String,
    column: SpeedColumn,
    folded: bool,
    decoding: Option<DecodingArg>,
    t_factories: Option<u32>,
}

fn parse_axis<T>(
    raw: Option<&str>,
    axis: &str,
    default: Vec<T>,
    parse: impl Fn(&str) -> CliResult<T>,
) -> CliResult<Vec<T>> {
    let Some(raw) = raw else { return Ok(default) };
    let values: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<CliResult<_>>()?;
    if values.is_empty() {
        return Err(config_err(format!("sweep axis {axis} has no values")));
    }
    Ok(values)
}

fn parse_folded(s: &str) -> CliResult<bool> {
    match s.to_ascii_lowercase().as_str() {
        "u" | "unfolded" => Ok(false),
        "f" | "folded" => Ok(true),
        other => Err(config_err(format!(
            "unknown folded marker {other:?}; expected U or F"
        ))),
    }
}

fn parse_decoding(s: &str) -> CliResult<DecodingArg> {
    match s.to_ascii_lowercase().as_str() {
        "c" | "correlated" => Ok(DecodingArg::Correlated),
        "s" | "standard" => Ok(DecodingArg::Standard),
        other => Err(config_err(format!(
            "unknown decoding marker {other:?}; expected C or S"
        ))),
    }
}

fn parse_column(s: &str) -> CliResult<SpeedColumn> {
    SpeedColumn::parse(&s.to_ascii_lowercase())
        .ok_or_else(|| config_err(format!("unknown speed column {s:?}")))
}

fn parse_count(s: &str) -> CliResult<u32> {
    s.parse::<u32>()
        .map_err(|_| config_err(format!("bad factory count {s:?}")))
}

fn decoding_label(rounds: SyndromeRounds) -> &'static str {
    match rounds {
        SyndromeRounds::One => "correlated",
        SyndromeRounds::PerDistance => "standard",
    }
}

/// Splits the base `--arch` flag into (family, fold state, column); the
/// sweep recombines these with the axis values.
fn base_point(args: &SweepArgs) -> CliResult<(String, bool, SpeedColumn)> {
    let Some(spec) = args.arch.arch.strip_prefix("preset:") else {
        return Err(config_err(
            "sweep axes combine presets; --arch must use the preset:NAME form",
        ));
    };
    let (raw_name, at_column) = match spec.split_once('@') {
        Some((name, col)) => {
            let parsed = parse_column(col)?;
            (name, Some(parsed))
        }
        None => (spec, None),
    };
    let column = match (at_column, args.arch.speeds.map(SpeedColumn::from)) {
        (Some(a), Some(b)) if a != b => {
            return Err(config_err(format!(
                "--arch names speed column {} but --speeds says {}",
                a.as_str(),
                b.as_str()
            )));
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => SpeedColumn::Current,
    };
    let name = raw_name.to_ascii_lowercase();
    let family = fold_variant(&name, false);
    let folded = match args.arch.folded {
        Some(f) => f == OnOff::On,
        None => name != family,
    };
    Ok((family, folded, column))
}

fn eval_point(
    prepared: &Prepared,
    point: &Point,
    args: &SweepArgs,
    dir: Option<&std::path::Path>,
) -> SweepRow {
    let preset_name = fold_variant(&point.family, point.folded);
    let attempt = || -> CliResult<SweepRow> {
        let mut arch = load_preset(&preset_name, point.column, dir)?;
        apply_decoding(&mut arch, point.decoding);
        let layout_flags = LayoutFlags {
            layout: args.layout.layout,
            factories_t: point.t_factories.or(args.layout.factories_t),
            factories_s: args.layout.factories_s,
        };
        let eval = evaluate(
            prepared,
            arch,
            &layout_flags,
            args.error,
            args.budget,
            args.arch.d,
        )?;
        let report = &eval.report;
        Ok(SweepRow {
            arch: point.family.clone(),
            column: eval.arch.column.as_str().to_string(),
            folded: eval.arch.folded_cultivation,
            decoding: decoding_label(eval.arch.syndrome_rounds).to_string(),
            layout: report.layout.strategy.as_str().to_string(),
            t_factories: report.layout.t_factories,
            s_factories: report.layout.s_factories,
            d: eval.arch.d,
            logical_qubits: report.logical_qubits,
            physical_qubits: report.physical_qubits,
            critical_path_us: report.critical_path_us,
            serial_us: report.serial_us,
            error: String::new(),
        })
    };
    attempt().unwrap_or_else(|e| SweepRow {
        arch: point.family.clone(),
        column: point.column.as_str().to_string(),
        folded: point.folded,
        decoding: point
            .decoding
            .map(|d| match d {
                DecodingArg::Correlated => "correlated",
                DecodingArg::Standard => "standard",
            })
            .unwrap_or("")
            .to_string(),
        layout: String::new(),
        t_factories: point.t_factories.unwrap_or(0),
        s_factories: 0,
        d: 0,
        logical_qubits: 0,
        physical_qubits: 0,
        critical_path_us: 0.0,
        serial_us: 0.0,
        error: e.to_string(),
    })
}

pub fn run_sweep(args: &SweepArgs) -> CliResult<()> {
    check_target_error(args.error)?;
    let (base_family, base_folded, base_column) = base_point(args)?;

    let families = parse_axis(
        args.axis_arch.as_deref(),
        "arch",
        vec![base_family],
        |s| Ok(fold_variant(&s.to_ascii_lowercase(), false)),
    )?;
    let columns = parse_axis(
        args.axis_speeds.as_deref(),
        "speeds",
        vec![base_column],
        parse_column,
    )?;
    let folds = parse_axis(
        args.axis_folded.as_deref(),
        "folded",
        vec![base_folded],
        parse_folded,
    )?;
    let decodings = parse_axis(
        args.axis_decoding.as_deref(),
        "decoding",
        vec![args.arch.decoding],
        |s| parse_decoding(s).map(Some),
    )?;
    let factories = parse_axis(
        args.axis_factories.as_deref(),
        "factories",
        vec![args.layout.factories_t],
        |s| parse_count(s).map(Some),
    )?;

    let mut points = Vec::new();
    for family in &families {
        for &column in &columns {
            for &folded in &folds {
                for &decoding in &decodings {
                    for &t_factories in &factories {
                        points.push(Point {
                            family: family.clone(),
                            column,
                            folded,
                            decoding,
                            t_factories,
                        });
                    }
                }
            }
        }
    }

    let prepared = prepare(&args.circuit)?;
    let dir = config_dir();
    let rows = evaluate_points(&prepared, &points, args, dir.as_deref());

    std::fs::create_dir_all(&args.out)?;
    let path = args.out.join("sweep.csv");
    write_sweep_csv(&rows, &path)?;
    let failed = rows.iter().filter(|r| !r.error.is_empty()).count();
    println!("wrote: sweep.csv ({} rows, {} failed)", rows.len(), failed);
    Ok(())
}

/// Evaluates every point, in parallel when `--jobs` exceeds one. Rows are
/// merged back by point index, so the output order never depends on thread
/// scheduling, and only the caller touches the filesystem.
fn evaluate_points(
    prepared: &Prepared,
    points: &[Point],
    args: &SweepArgs,
    dir: Option<&std::path::Path>,
) -> Vec<SweepRow> {
    let workers = args.jobs.max(1).min(points.len().max(1));
    if workers <= 1 {
        return points.iter().map(|p| eval_point(prepared, p, args, dir)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<SweepRow>>> = Mutex::new(vec![None; points.len()]);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= points.len() {
                    break;
                }
                let row = eval_point(prepared, &points[i], args, dir);
                slots.lock().expect("sweep worker panicked")[i] = Some(row);
            });
        }
    });
    slots
        .into_inner()
        .expect("sweep worker panicked")
        .into_iter()
        .map(|slot| slot.expect("sweep point not evaluated"))
        .collect()
}
