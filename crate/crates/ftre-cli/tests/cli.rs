//! End-to-end tests of the `ftre` binary: exit codes, file outputs,
//! determinism, and the sweep/sensitivity/layout surfaces.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ftre::arch::PRESETS;
use ftre::report::validate_report_json;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ftre"));
    cmd.env_remove("FTRE_CONFIG_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn ftre")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Small QASM fixture: two rotations, entanglement, one measurement.
fn write_qasm(dir: &Path) -> PathBuf {
    let path = dir.join("c.qasm");
    std::fs::write(
        &path,
        "OPENQASM 2.0;\n\
         qreg q[3];\n\
         creg c[3];\n\
         h q[0];\n\
         rz(0.37) q[0];\n\
         cx q[0], q[1];\n\
         rz(1.2) q[1];\n\
         cx q[1], q[2];\n\
         h q[2];\n\
         measure q[0] -> c[0];\n",
    )
    .unwrap();
    path
}

/// Rotation-heavy native fixture: `layers` rounds of per-qubit Rz followed
/// by a CNOT chain, so rotations cannot merge across layers.
fn write_rz_heavy(dir: &Path, qubits: u32, layers: u32) -> PathBuf {
    let mut ops = Vec::new();
    for layer in 0..layers {
        for q in 0..qubits {
            ops.push(serde_json::json!({
                "kind": "Rz",
                "qubits": [q],
                "angle": 0.1 + 0.01 * (layer * qubits + q) as f64,
            }));
        }
        for q in 0..qubits.saturating_sub(1) {
            ops.push(serde_json::json!({"kind": "CNOT", "qubits": [q, q + 1]}));
        }
    }
    let circuit = serde_json::json!({"qubits": qubits, "level": "input", "ops": ops});
    let path = dir.join("heavy.json");
    std::fs::write(&path, serde_json::to_string(&circuit).unwrap()).unwrap();
    path
}

#[test]
fn estimate_writes_a_valid_report() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "estimate",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm@current",
        "--error",
        "0.01",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    let report = validate_report_json(&text).unwrap();
    assert_eq!(report.arch.name, "DSM");
    assert!(report.budget.is_some(), "budget echoed into the report");
    assert!(out_dir.join("breakdown_primitive.csv").exists());
    assert!(out_dir.join("breakdown_physical.csv").exists());
    let console = stdout(&out);
    assert!(console.contains("critical path"), "summary printed: {console}");
}

#[test]
fn estimate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "estimate",
            "--circuit",
            circuit.to_str().unwrap(),
            "--arch",
            "preset:ssm@proposed",
            "--error",
            "0.02",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        bytes.push((
            std::fs::read(out_dir.join("report.json")).unwrap(),
            std::fs::read(out_dir.join("breakdown_primitive.csv")).unwrap(),
            std::fs::read(out_dir.join("breakdown_physical.csv")).unwrap(),
        ));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn emit_intermediate_writes_each_stage() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "estimate",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--out",
        out_dir.to_str().unwrap(),
        "--emit-intermediate",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    for (file, level) in [
        ("c1.json", ftre::Level::CliffordRz),
        ("c2.json", ftre::Level::CliffordT),
        ("primitive.json", ftre::Level::Primitive),
    ] {
        let text = std::fs::read_to_string(out_dir.join(file)).unwrap();
        let parsed = ftre::ingest::parse_native(&text).unwrap();
        assert_eq!(parsed.level, level, "{file}");
    }
}

#[test]
fn d_override_wins_over_the_budget_choice() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "estimate",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--d",
        "21",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    let report = validate_report_json(&text).unwrap();
    assert_eq!(report.arch.d, 21);
    assert_ne!(report.budget.as_ref().unwrap().d, 21, "budget picked its own d");
}

#[test]
fn grid_budget_mode_runs() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "estimate",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--budget",
        "grid",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
}

#[test]
fn infeasible_budget_exits_2_with_best_point() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_rz_heavy(dir.path(), 4, 15);
    let out = run(&[
        "estimate",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "1e-12",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
    let err = stderr(&out);
    assert!(err.contains("best infeasible point"), "{err}");
    assert!(err.contains("d="), "{err}");
}

#[test]
fn cli_error_codes_are_distinct() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let c = circuit.to_str().unwrap();
    let o = dir.path().join("out");
    let o = o.to_str().unwrap();

    let usage = run(&["estimate", "--circuit", c, "--arch", "preset:dsm", "--bogus"]);
    assert_eq!(code(&usage), 64);

    let bad_error = run(&["estimate", "--circuit", c, "--arch", "preset:dsm", "--error", "1.5", "--out", o]);
    assert_eq!(code(&bad_error), 1);

    let missing = dir.path().join("missing.qasm");
    let no_file = run(&[
        "estimate", "--circuit", missing.to_str().unwrap(), "--arch", "preset:dsm",
        "--error", "0.01", "--out", o,
    ]);
    assert_eq!(code(&no_file), 12);

    let malformed = dir.path().join("broken.qasm");
    std::fs::write(&malformed, "OPENQASM 2.0;\nqreg q[1];\nfrobnicate q[0];\n").unwrap();
    let bad_circuit = run(&[
        "estimate", "--circuit", malformed.to_str().unwrap(), "--arch", "preset:dsm",
        "--error", "0.01", "--out", o,
    ]);
    assert_eq!(code(&bad_circuit), 3);

    let bad_preset = run(&["estimate", "--circuit", c, "--arch", "preset:nope", "--error", "0.01", "--out", o]);
    assert_eq!(code(&bad_preset), 7);

    let help = run(&["--help"]);
    assert_eq!(code(&help), 0);
    let version = run(&["--version"]);
    assert_eq!(code(&version), 0);
}

#[test]
fn folded_and_speeds_flags_reject_file_configs() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let preset_file = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../ftre-core/presets/dsm.current.json");
    let o = dir.path().join("out");

    let folded = run(&[
        "estimate", "--circuit", circuit.to_str().unwrap(),
        "--arch", preset_file.to_str().unwrap(),
        "--folded", "on", "--error", "0.01", "--out", o.to_str().unwrap(),
    ]);
    assert_eq!(code(&folded), 1, "stderr: {}", stderr(&folded));

    let plain = run(&[
        "estimate", "--circuit", circuit.to_str().unwrap(),
        "--arch", preset_file.to_str().unwrap(),
        "--error", "0.01", "--out", o.to_str().unwrap(),
    ]);
    assert_eq!(code(&plain), 0, "stderr: {}", stderr(&plain));
}

#[test]
fn every_shipped_preset_is_addressable() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    for (name, column, _) in PRESETS {
        let spec = format!("preset:{name}@{column}");
        let out_dir = dir.path().join(format!("{name}.{column}"));
        let out = run(&[
            "estimate",
            "--circuit",
            circuit.to_str().unwrap(),
            "--arch",
            &spec,
            "--error",
            "0.01",
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "{spec} failed: {}", stderr(&out));
        assert!(out_dir.join("report.json").exists(), "{spec}");
    }
}

#[test]
fn config_dir_shadows_shipped_presets() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../ftre-core/presets/dsm.current.json");
    let mut config: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(shipped).unwrap()).unwrap();
    config["layout"]["t_factories"] = serde_json::json!(3);
    let config_dir = dir.path().join("overrides");
    std::fs::create_dir_all(&config_dir).unwrap();
    std::fs::write(
        config_dir.join("dsm.current.json"),
        serde_json::to_string(&config).unwrap(),
    )
    .unwrap();

    let out_dir = dir.path().join("out");
    let out = bin()
        .env("FTRE_CONFIG_DIR", &config_dir)
        .args([
            "estimate",
            "--circuit",
            circuit.to_str().unwrap(),
            "--arch",
            "preset:dsm",
            "--error",
            "0.01",
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("report.json")).unwrap();
    let report = validate_report_json(&text).unwrap();
    assert_eq!(report.layout.t_factories, 3, "override applied");
}

#[test]
fn factory_sweep_rows_are_ordered_and_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_rz_heavy(dir.path(), 4, 3);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--axis-factories",
        "1,5,10",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<ftre::report::SweepRow> =
        reader.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(
        rows.iter().map(|r| r.t_factories).collect::<Vec<_>>(),
        vec![1, 5, 10]
    );
    for pair in rows.windows(2) {
        assert!(
            pair[1].critical_path_us <= pair[0].critical_path_us,
            "more factories never slow the circuit"
        );
    }
    for row in &rows {
        assert!(row.error.is_empty(), "{}", row.error);
    }
}

#[test]
fn folded_decoding_grid_yields_four_labeled_rows() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_rz_heavy(dir.path(), 3, 2);
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sweep",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--axis-folded",
        "U,F",
        "--axis-decoding",
        "C,S",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<ftre::report::SweepRow> =
        reader.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 4);
    let labels: Vec<(bool, &str)> =
        rows.iter().map(|r| (r.folded, r.decoding.as_str())).collect();
    assert_eq!(
        labels,
        vec![
            (false, "correlated"),
            (false, "standard"),
            (true, "correlated"),
            (true, "standard"),
        ]
    );
    for row in &rows {
        assert_eq!(row.arch, "dsm");
        assert!(row.error.is_empty(), "{}", row.error);
    }
}

#[test]
fn parallel_sweep_matches_serial_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_rz_heavy(dir.path(), 3, 2);
    let mut outputs = Vec::new();
    for (sub, jobs) in [("serial", "1"), ("parallel", "4")] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "sweep",
            "--circuit",
            circuit.to_str().unwrap(),
            "--arch",
            "preset:dsm",
            "--error",
            "0.01",
            "--axis-factories",
            "1,2,5,10",
            "--axis-folded",
            "U,F",
            "--jobs",
            jobs,
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
        outputs.push(std::fs::read(out_dir.join("sweep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn sweep_records_per_point_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let out_dir = dir.path().join("out");
    // dsnm is a lattice architecture; a dense layout is incompatible with
    // it, so those points fail while the dsm points succeed.
    let out = run(&[
        "sweep",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--axis-arch",
        "dsm,dsnm",
        "--layout",
        "dense",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<ftre::report::SweepRow> =
        reader.deserialize().collect::<Result<_, _>>().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].error.is_empty(), "dsm point succeeds");
    assert!(!rows[1].error.is_empty(), "dsnm point records its failure");
    assert_eq!(rows[1].critical_path_us, 0.0);
}

#[test]
fn empty_axis_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let out = run(&[
        "sweep",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--axis-factories",
        " , ",
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("axis factories"), "{}", stderr(&out));
}

#[test]
fn sensitivity_emits_surface_and_chosen_point() {
    let dir = tempfile::tempdir().unwrap();
    let circuit = write_qasm(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "sensitivity",
        "--circuit",
        circuit.to_str().unwrap(),
        "--arch",
        "preset:dsm",
        "--error",
        "0.01",
        "--d-max",
        "11",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let surface = std::fs::read_to_string(out_dir.join("surface.csv")).unwrap();
    let mut lines = surface.lines();
    assert_eq!(
        lines.next().unwrap(),
        "d,eps_rz,eps_m,fidelity,rep,feasible,contour_best"
    );
    assert!(lines.count() > 10, "grid has many points");
    let budget: ftre::BudgetSolution =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("budget.json")).unwrap())
            .unwrap();
    assert!(budget.fidelity >= 0.99);
    assert!(stdout(&out).contains("chosen:"), "{}", stdout(&out));
}

#[test]
fn layout_renders_dense_packing_as_a_square() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "layout",
        "--layout",
        "dense",
        "--data",
        "20",
        "--factories-t",
        "5",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let grid: Vec<&str> = text.lines().take_while(|l| !l.contains(':')).collect();
    assert_eq!(grid.len(), 5, "5x5 grid: {text}");
    assert!(grid.iter().all(|row| row.len() == 5), "{text}");
    let cells: String = grid.concat();
    assert_eq!(cells.matches('D').count(), 20);
    assert_eq!(cells.matches('T').count(), 5);
    let layout: ftre::LayoutGrid = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("layout.json")).unwrap(),
    )
    .unwrap();
    assert_eq!((layout.width, layout.height), (5, 5));
}

#[test]
fn layout_renders_sandwich_highways_and_column_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let sandwich = run(&[
        "layout", "--layout", "sandwich", "--data", "4",
        "--factories-t", "2", "--factories-s", "2",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&sandwich), 0, "stderr: {}", stderr(&sandwich));
    let text = stdout(&sandwich);
    let ancilla_rows = text.lines().filter(|l| !l.is_empty() && l.chars().all(|c| c == 'A')).count();
    assert_eq!(ancilla_rows, 2, "two ancilla highways: {text}");

    let column = run(&[
        "layout", "--layout", "column", "--data", "4",
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&column), 0, "stderr: {}", stderr(&column));
    let text = stdout(&column);
    assert!(
        text.lines().any(|l| l.contains('T') && l.contains('S') && l.contains('D')),
        "each data qubit is flanked by its own factory pair: {text}"
    );
}
