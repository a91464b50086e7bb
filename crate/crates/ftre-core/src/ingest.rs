//! Circuit input and output: a QASM-2 subset and the native JSON format.
//!
//! The QASM parser accepts exactly the gate alphabet the pipeline is closed
//! under; everything else is a hard error with a source location. The native
//! format is the canonical on-disk representation and round-trips circuits at
//! every level, including matrix payloads and stage-2 duration overrides.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use serde_json::Value;

use crate::circuit::{Circuit, GateKind, Level, MatrixPayload, Op};
use crate::error::{Diagnostic, Error, Result};

/// Parse a circuit from the QASM-2 subset.
///
/// Supported statements: the `OPENQASM 2.0` header, `qreg`, `creg`, gate
/// applications over the input alphabet (with `+ - * /`, parentheses, and
/// `pi` in angle expressions), `measure q[i] -> c[j]`, `reset`, and
/// `if (creg == 1) <gate>` referring to a previously measured register.
pub fn parse_qasm(source: &str) -> Result<Circuit> {
    let tokens = lex(source)?;
    QasmParser::new(tokens).parse()
}

/// Parse a circuit from the native JSON format.
pub fn parse_native(text: &str) -> Result<Circuit> {
    let value: Value = serde_json::from_str(text).map_err(|e| {
        Error::Ingest(vec![Diagnostic::error(
            e.line(),
            e.column(),
            format!("invalid JSON: {}", e),
        )])
    })?;
    let mut diags = Vec::new();
    let circuit = walk_native(&value, &mut diags);
    if !diags.is_empty() {
        return Err(Error::Ingest(diags));
    }
    let circuit = circuit.expect("no diagnostics implies a circuit");
    circuit
        .validate()
        .map_err(|e| Error::Ingest(vec![Diagnostic::at_path("$", e.to_string())]))?;
    Ok(circuit)
}

/// Read a circuit file, dispatching on extension: `.qasm` or `.json`.
pub fn read_circuit(path: &Path) -> Result<Circuit> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("qasm") => parse_qasm(&text),
        Some("json") => parse_native(&text),
        other => Err(Error::Ingest(vec![Diagnostic::error(
            0,
            0,
            format!(
                "unrecognized circuit extension {:?} (expected .qasm or .json)",
                other.unwrap_or("")
            ),
        )])),
    }
}

// ---------------------------------------------------------------------------
// Native format
// ---------------------------------------------------------------------------

/// Serialize a circuit to the canonical native form: fixed key order, one op
/// per array element, floats at full (17 significant digit) precision.
///
/// Optional fields appear only when set, so `parse_native(emit_native(c))`
/// reproduces `c` exactly at every level.
pub fn emit_native(circuit: &Circuit) -> String {
    let mut out = String::new();
    let _ = write!(out, "{{\"qubits\":{},\"ops\":[", circuit.qubits);
    for (i, op) in circuit.ops.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"kind\":\"{}\",\"qubits\":[", op.kind.as_str());
        for (j, q) in op.qubits.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{q}");
        }
        out.push(']');
        if let Some(angle) = op.angle {
            let _ = write!(out, ",\"angle\":{}", fmt_f64(angle));
        }
        if let Some(ctrl) = op.ctrl {
            let _ = write!(out, ",\"ctrl\":{ctrl}");
        }
        if let Some(matrix) = &op.matrix {
            out.push_str(",\"matrix\":[");
            let entries: Vec<Complex64> = match matrix {
                MatrixPayload::One(m) => m.transpose().iter().copied().collect(),
                MatrixPayload::Two(m) => m.transpose().iter().copied().collect(),
            };
            for (j, z) in entries.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                let _ = write!(out, "[{},{}]", fmt_f64(z.re), fmt_f64(z.im));
            }
            out.push(']');
        }
        if let Some(ticks) = op.dur_ticks {
            let _ = write!(out, ",\"dur_ticks\":{ticks}");
        }
        out.push('}');
    }
    let _ = write!(out, "],\"level\":\"{}\"", circuit.level.as_str());
    if circuit.global_phase != 0.0 {
        let _ = write!(out, ",\"global_phase\":{}", fmt_f64(circuit.global_phase));
    }
    out.push('}');
    out
}

/// Shortest exact decimal form: 17 significant digits always reparse to the
/// same f64 bits.
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn walk_native(value: &Value, diags: &mut Vec<Diagnostic>) -> Option<Circuit> {
    let Some(root) = value.as_object() else {
        diags.push(Diagnostic::at_path("$", "expected a JSON object"));
        return None;
    };
    for key in root.keys() {
        if !matches!(key.as_str(), "qubits" | "ops" | "level" | "global_phase") {
            diags.push(Diagnostic::at_path(&format!("$.{key}"), "unknown field"));
        }
    }
    let qubits = match root.get("qubits").and_then(Value::as_u64) {
        Some(n) if n <= u32::MAX as u64 => n as u32,
        _ => {
            diags.push(Diagnostic::at_path(
                "$.qubits",
                "required nonnegative integer",
            ));
            0
        }
    };
    let level = match root.get("level") {
        None => Level::Input,
        Some(Value::String(s)) => match Level::parse(s) {
            Some(level) => level,
            None => {
                diags.push(Diagnostic::at_path(
                    "$.level",
                    format!("unknown level {s:?}"),
                ));
                Level::Input
            }
        },
        Some(_) => {
            diags.push(Diagnostic::at_path("$.level", "expected a string"));
            Level::Input
        }
    };
    let global_phase = match root.get("global_phase") {
        None => 0.0,
        Some(v) => match v.as_f64() {
            Some(x) if x.is_finite() => x,
            _ => {
                diags.push(Diagnostic::at_path("$.global_phase", "expected a finite number"));
                0.0
            }
        },
    };
    let Some(ops_value) = root.get("ops") else {
        diags.push(Diagnostic::at_path("$.ops", "required array"));
        return None;
    };
    let Some(ops_array) = ops_value.as_array() else {
        diags.push(Diagnostic::at_path("$.ops", "expected an array"));
        return None;
    };
    let mut ops = Vec::with_capacity(ops_array.len());
    for (i, op_value) in ops_array.iter().enumerate() {
        if let Some(op) = walk_op(op_value, i, &ops, diags) {
            ops.push(op);
        }
    }
    if !diags.is_empty() {
        return None;
    }
    Some(Circuit {
        qubits,
        ops,
        level,
        global_phase,
    })
}

fn walk_op(value: &Value, index: usize, prior: &[Op], diags: &mut Vec<Diagnostic>) -> Option<Op> {
    let path = format!("$.ops[{index}]");
    let Some(obj) = value.as_object() else {
        diags.push(Diagnostic::at_path(&path, "expected a JSON object"));
        return None;
    };
    for key in obj.keys() {
        if !matches!(
            key.as_str(),
            "kind" | "qubits" | "angle" | "ctrl" | "matrix" | "dur_ticks"
        ) {
            diags.push(Diagnostic::at_path(
                &format!("{path}.{key}"),
                "unknown field",
            ));
        }
    }
    let kind = match obj.get("kind").and_then(Value::as_str) {
        Some(s) => match GateKind::parse(s) {
            Some(kind) => kind,
            None => {
                diags.push(Diagnostic::at_path(
                    &format!("{path}.kind"),
                    format!("unknown gate kind {s:?}"),
                ));
                return None;
            }
        },
        None => {
            diags.push(Diagnostic::at_path(
                &format!("{path}.kind"),
                "required string",
            ));
            return None;
        }
    };
    let qubits = match obj.get("qubits").and_then(Value::as_array) {
        Some(arr) => {
            let mut qs = Vec::with_capacity(arr.len());
            for (j, q) in arr.iter().enumerate() {
                match q.as_u64() {
                    Some(n) if n <= u32::MAX as u64 => qs.push(n as u32),
                    _ => diags.push(Diagnostic::at_path(
                        &format!("{path}.qubits[{j}]"),
                        "expected a nonnegative integer",
                    )),
                }
            }
            qs
        }
        None => {
            diags.push(Diagnostic::at_path(
                &format!("{path}.qubits"),
                "required array of integers",
            ));
            return None;
        }
    };
    let angle = match obj.get("angle") {
        None => None,
        Some(v) => match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                diags.push(Diagnostic::at_path(
                    &format!("{path}.angle"),
                    "expected a finite number",
                ));
                None
            }
        },
    };
    if angle.is_some() && !kind.takes_angle() {
        diags.push(Diagnostic::at_path(
            &format!("{path}.angle"),
            format!("{kind} does not take an angle"),
        ));
    }
    if angle.is_none() && kind.takes_angle() {
        diags.push(Diagnostic::at_path(&path, format!("{kind} requires an angle")));
    }
    let ctrl = match obj.get("ctrl") {
        None => None,
        Some(v) => match v.as_u64() {
            Some(n) if n <= u32::MAX as u64 => Some(n as u32),
            _ => {
                diags.push(Diagnostic::at_path(
                    &format!("{path}.ctrl"),
                    "expected a nonnegative integer",
                ));
                None
            }
        },
    };
    if let Some(c) = ctrl {
        if c as usize >= index {
            diags.push(Diagnostic::at_path(
                &format!("{path}.ctrl"),
                "must reference an earlier op",
            ));
        } else if prior
            .get(c as usize)
            .is_some_and(|op| op.kind != GateKind::Measure)
        {
            diags.push(Diagnostic::at_path(
                &format!("{path}.ctrl"),
                format!("op {c} is not a Measure"),
            ));
        }
    }
    let matrix = match obj.get("matrix") {
        None => None,
        Some(v) => parse_matrix(v, kind, &path, diags),
    };
    if matrix.is_none() && kind.takes_matrix() {
        diags.push(Diagnostic::at_path(
            &path,
            format!("{kind} requires a matrix field"),
        ));
    }
    let dur_ticks = match obj.get("dur_ticks") {
        None => None,
        Some(v) => match v.as_u64() {
            Some(n) => Some(n),
            None => {
                diags.push(Diagnostic::at_path(
                    &format!("{path}.dur_ticks"),
                    "expected a nonnegative integer",
                ));
                None
            }
        },
    };
    Some(Op {
        kind,
        qubits,
        angle,
        ctrl,
        matrix,
        dur_ticks,
    })
}

fn parse_matrix(
    value: &Value,
    kind: GateKind,
    path: &str,
    diags: &mut Vec<Diagnostic>,
) -> Option<MatrixPayload> {
    let mpath = format!("{path}.matrix");
    if !kind.takes_matrix() {
        diags.push(Diagnostic::at_path(
            &mpath,
            format!("{kind} does not take a matrix"),
        ));
        return None;
    }
    let dim: usize = if kind == GateKind::U1q { 2 } else { 4 };
    let Some(rows) = value.as_array() else {
        diags.push(Diagnostic::at_path(&mpath, "expected an array"));
        return None;
    };
    if rows.len() != dim * dim {
        diags.push(Diagnostic::at_path(
            &mpath,
            format!("expected {} [re, im] entries", dim * dim),
        ));
        return None;
    }
    let mut entries = Vec::with_capacity(dim * dim);
    for (j, entry) in rows.iter().enumerate() {
        let pair = entry.as_array().filter(|p| p.len() == 2).and_then(|p| {
            let re = p[0].as_f64()?;
            let im = p[1].as_f64()?;
            (re.is_finite() && im.is_finite()).then(|| Complex64::new(re, im))
        });
        match pair {
            Some(z) => entries.push(z),
            None => {
                diags.push(Diagnostic::at_path(
                    &format!("{mpath}[{j}]"),
                    "expected [re, im] with finite numbers",
                ));
                return None;
            }
        }
    }
    Some(if dim == 2 {
        MatrixPayload::One(Box::new(Matrix2::from_row_slice(&entries)))
    } else {
        MatrixPayload::Two(Box::new(Matrix4::from_row_slice(&entries)))
    })
}

// ---------------------------------------------------------------------------
// QASM
// ---------------------------------------------------------------------------

/// Serialize an input-alphabet circuit as QASM 2.0. Each `Measure` at op
/// index `i` writes its own one-bit register `c<i>`, which classically
/// controlled ops reference by name, so a round trip through [`parse_qasm`]
/// reproduces the op list.
pub fn emit_qasm(circuit: &Circuit) -> Result<String> {
    let mut out = String::from("OPENQASM 2.0;\n");
    let _ = writeln!(out, "qreg q[{}];", circuit.qubits);
    for (i, op) in circuit.ops.iter().enumerate() {
        if op.kind == GateKind::Measure {
            let _ = writeln!(out, "creg c{i}[1];");
        }
    }
    for (i, op) in circuit.ops.iter().enumerate() {
        if let Some(c) = op.ctrl {
            let _ = write!(out, "if(c{c}==1) ");
        }
        let name = match op.kind {
            GateKind::I => "id",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::H => "h",
            GateKind::S => "s",
            GateKind::Sdg => "sdg",
            GateKind::T => "t",
            GateKind::Tdg => "tdg",
            GateKind::Rz => "rz",
            GateKind::Rx => "rx",
            GateKind::Ry => "ry",
            GateKind::Cnot => "cx",
            GateKind::Cz => "cz",
            GateKind::Swap => "swap",
            GateKind::Toffoli => "ccx",
            GateKind::Measure => {
                let _ = writeln!(out, "measure q[{}] -> c{i}[0];", op.qubits[0]);
                continue;
            }
            GateKind::Reset => {
                let _ = writeln!(out, "reset q[{}];", op.qubits[0]);
                continue;
            }
            other => {
                return Err(Error::Validation(format!(
                    "op {i}: {other} has no QASM spelling"
                )))
            }
        };
        out.push_str(name);
        if let Some(angle) = op.angle {
            let _ = write!(out, "({})", fmt_f64(angle));
        }
        out.push(' ');
        for (j, q) in op.qubits.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "q[{q}]");
        }
        out.push_str(";\n");
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Arrow,
    EqEq,
    Sym(char),
}

#[derive(Clone, Debug)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn lex(source: &str) -> std::result::Result<Vec<Token>, Error> {
    let mut tokens = Vec::new();
    let mut diags = Vec::new();
    let bytes = source.as_bytes();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);
    let bump = |i: &mut usize, line: &mut usize, col: &mut usize| {
        if bytes[*i] == b'\n' {
            *line += 1;
            *col = 1;
        } else {
            *col += 1;
        }
        *i += 1;
    };
    while i < bytes.len() {
        let (l, c) = (line, col);
        let ch = bytes[i] as char;
        match ch {
            ' ' | '\t' | '\r' | '\n' => bump(&mut i, &mut line, &mut col),
            '/' if bytes.get(i + 1) == Some(&b'/') => {
                while i < bytes.len() && bytes[i] != b'\n' {
                    bump(&mut i, &mut line, &mut col);
                }
            }
            'a'..='z' | 'A'..='Z' | '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    bump(&mut i, &mut line, &mut col);
                }
                tokens.push(Token {
                    tok: Tok::Ident(source[start..i].to_string()),
                    line: l,
                    col: c,
                });
            }
            '0'..='9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    bump(&mut i, &mut line, &mut col);
                }
                if i < bytes.len() && bytes[i] == b'.' {
                    bump(&mut i, &mut line, &mut col);
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        bump(&mut i, &mut line, &mut col);
                    }
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    bump(&mut i, &mut line, &mut col);
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        bump(&mut i, &mut line, &mut col);
                    }
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        bump(&mut i, &mut line, &mut col);
                    }
                }
                tokens.push(Token {
                    tok: Tok::Number(source[start..i].to_string()),
                    line: l,
                    col: c,
                });
            }
            '"' => {
                bump(&mut i, &mut line, &mut col);
                let start = i;
                while i < bytes.len() && bytes[i] != b'"' {
                    bump(&mut i, &mut line, &mut col);
                }
                if i >= bytes.len() {
                    diags.push(Diagnostic::error(l, c, "unterminated string"));
                    break;
                }
                let text = source[start..i].to_string();
                bump(&mut i, &mut line, &mut col);
                tokens.push(Token {
                    tok: Tok::Str(text),
                    line: l,
                    col: c,
                });
            }
            '-' if bytes.get(i + 1) == Some(&b'>') => {
                bump(&mut i, &mut line, &mut col);
                bump(&mut i, &mut line, &mut col);
                tokens.push(Token {
                    tok: Tok::Arrow,
                    line: l,
                    col: c,
                });
            }
            '=' if bytes.get(i + 1) == Some(&b'=') => {
                bump(&mut i, &mut line, &mut col);
                bump(&mut i, &mut line, &mut col);
                tokens.push(Token {
                    tok: Tok::EqEq,
                    line: l,
                    col: c,
                });
            }
            '(' | ')' | '[' | ']' | ',' | ';' | '+' | '-' | '*' | '/' => {
                bump(&mut i, &mut line, &mut col);
                tokens.push(Token {
                    tok: Tok::Sym(ch),
                    line: l,
                    col: c,
                });
            }
            other => {
                diags.push(Diagnostic::error(l, c, format!("unexpected character {other:?}")));
                bump(&mut i, &mut line, &mut col);
            }
        }
    }
    if diags.is_empty() {
        Ok(tokens)
    } else {
        Err(Error::Ingest(diags))
    }
}

struct Reg {
    name: String,
    offset: u32,
    size: u32,
}

struct Creg {
    name: String,
    last_measure: Option<u32>,
}

struct QasmParser {
    tokens: Vec<Token>,
    pos: usize,
    qregs: Vec<Reg>,
    cregs: Vec<Creg>,
    ops: Vec<Op>,
    diags: Vec<Diagnostic>,
}

impl QasmParser {
    fn new(tokens: Vec<Token>) -> Self {
        QasmParser {
            tokens,
            pos: 0,
            qregs: Vec::new(),
            cregs: Vec::new(),
            ops: Vec::new(),
            diags: Vec::new(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn here(&self) -> (usize, usize) {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or((1, 1), |t| (t.line, t.col))
    }

    fn error_here(&mut self, message: impl Into<String>) {
        let (line, col) = self.here();
        self.diags.push(Diagnostic::error(line, col, message));
    }

    /// Skip past the terminating semicolon of the current statement.
    fn recover(&mut self) {
        while let Some(t) = self.next() {
            if t.tok == Tok::Sym(';') {
                break;
            }
        }
    }

    fn expect_sym(&mut self, ch: char) -> bool {
        if self.peek().map(|t| &t.tok) == Some(&Tok::Sym(ch)) {
            self.pos += 1;
            true
        } else {
            self.error_here(format!("expected {ch:?}"));
            false
        }
    }

    fn expect_ident(&mut self) -> Option<String> {
        match self.next() {
            Some(Token {
                tok: Tok::Ident(name),
                ..
            }) => Some(name),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.error_here("expected an identifier");
                None
            }
        }
    }

    fn expect_uint(&mut self) -> Option<u32> {
        match self.next() {
            Some(Token {
                tok: Tok::Number(text),
                line,
                col,
            }) => match text.parse::<u32>() {
                Ok(n) => Some(n),
                Err(_) => {
                    self.diags
                        .push(Diagnostic::error(line, col, format!("invalid integer {text:?}")));
                    None
                }
            },
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.error_here("expected an integer");
                None
            }
        }
    }

    fn parse(mut self) -> Result<Circuit> {
        while self.peek().is_some() {
            if !self.statement() {
                self.recover();
            }
        }
        if !self.diags.is_empty() {
            return Err(Error::Ingest(self.diags));
        }
        let circuit = Circuit {
            qubits: self.qregs.iter().map(|r| r.size).sum(),
            ops: self.ops,
            level: Level::Input,
            global_phase: 0.0,
        };
        circuit
            .validate()
            .map_err(|e| Error::Ingest(vec![Diagnostic::error(0, 0, e.to_string())]))?;
        Ok(circuit)
    }

    /// One statement; returns false when the caller should resynchronize.
    fn statement(&mut self) -> bool {
        let before = self.diags.len();
        let token = self.next().expect("caller checked peek");
        let (line, col) = (token.line, token.col);
        match token.tok {
            Tok::Ident(name) => match name.as_str() {
                "OPENQASM" => {
                    match self.next() {
                        Some(Token {
                            tok: Tok::Number(v),
                            ..
                        }) if v == "2.0" => {}
                        _ => {
                            self.diags.push(Diagnostic::error(
                                line,
                                col,
                                "only OPENQASM 2.0 is supported",
                            ));
                            return false;
                        }
                    }
                    self.expect_sym(';');
                }
                "include" => {
                    self.diags.push(Diagnostic::error(
                        line,
                        col,
                        "include files are not supported; inline the circuit",
                    ));
                    return false;
                }
                "barrier" => {
                    self.diags
                        .push(Diagnostic::error(line, col, "barrier is not supported"));
                    return false;
                }
                "gate" | "opaque" => {
                    self.diags.push(Diagnostic::error(
                        line,
                        col,
                        "gate definitions are not supported; use the built-in alphabet",
                    ));
                    return false;
                }
                "qreg" | "creg" => {
                    let is_qreg = name == "qreg";
                    let Some(reg) = self.expect_ident() else {
                        return false;
                    };
                    if !self.expect_sym('[') {
                        return false;
                    }
                    let Some(size) = self.expect_uint() else {
                        return false;
                    };
                    if !self.expect_sym(']') || !self.expect_sym(';') {
                        return false;
                    }
                    if self.qregs.iter().any(|r| r.name == reg)
                        || self.cregs.iter().any(|r| r.name == reg)
                    {
                        self.diags.push(Diagnostic::error(
                            line,
                            col,
                            format!("register {reg:?} already declared"),
                        ));
                        return false;
                    }
                    if is_qreg {
                        let offset = self.qregs.iter().map(|r| r.size).sum();
                        self.qregs.push(Reg {
                            name: reg,
                            offset,
                            size,
                        });
                    } else {
                        self.cregs.push(Creg {
                            name: reg,
                            last_measure: None,
                        });
                    }
                }
                "measure" => {
                    let Some(qubit) = self.qubit_operand() else {
                        return false;
                    };
                    if self.peek().map(|t| &t.tok) != Some(&Tok::Arrow) {
                        self.error_here("expected -> after measure operand");
                        return false;
                    }
                    self.pos += 1;
                    let Some(creg_name) = self.expect_ident() else {
                        return false;
                    };
                    if !self.expect_sym('[') {
                        return false;
                    }
                    let Some(bit) = self.expect_uint() else {
                        return false;
                    };
                    let _ = bit;
                    if !self.expect_sym(']') || !self.expect_sym(';') {
                        return false;
                    }
                    let op_index = self.ops.len() as u32;
                    match self.cregs.iter_mut().find(|r| r.name == creg_name) {
                        Some(creg) => creg.last_measure = Some(op_index),
                        None => {
                            self.diags.push(Diagnostic::error(
                                line,
                                col,
                                format!("undeclared classical register {creg_name:?}"),
                            ));
                            return true;
                        }
                    }
                    self.ops.push(Op::new(GateKind::Measure, vec![qubit]));
                }
                "reset" => {
                    let Some(qubit) = self.qubit_operand() else {
                        return false;
                    };
                    if !self.expect_sym(';') {
                        return false;
                    }
                    self.ops.push(Op::new(GateKind::Reset, vec![qubit]));
                }
                "if" => {
                    if !self.expect_sym('(') {
                        return false;
                    }
                    let Some(creg_name) = self.expect_ident() else {
                        return false;
                    };
                    if self.peek().map(|t| &t.tok) != Some(&Tok::EqEq) {
                        self.error_here("expected == in if condition");
                        return false;
                    }
                    self.pos += 1;
                    let Some(value) = self.expect_uint() else {
                        return false;
                    };
                    if !self.expect_sym(')') {
                        return false;
                    }
                    if value != 1 {
                        self.diags.push(Diagnostic::error(
                            line,
                            col,
                            "only `if (reg == 1)` conditions are supported",
                        ));
                        return false;
                    }
                    let ctrl = match self.cregs.iter().find(|r| r.name == creg_name) {
                        Some(Creg {
                            last_measure: Some(m),
                            ..
                        }) => *m,
                        Some(_) => {
                            self.diags.push(Diagnostic::error(
                                line,
                                col,
                                format!("register {creg_name:?} has no prior measurement"),
                            ));
                            return false;
                        }
                        None => {
                            self.diags.push(Diagnostic::error(
                                line,
                                col,
                                format!("undeclared classical register {creg_name:?}"),
                            ));
                            return false;
                        }
                    };
                    let Some(gate) = self.expect_ident() else {
                        return false;
                    };
                    if !self.gate_application(&gate, line, col, Some(ctrl)) {
                        return false;
                    }
                }
                _ => {
                    if !self.gate_application(&name, line, col, None) {
                        return false;
                    }
                }
            },
            _ => {
                self.diags
                    .push(Diagnostic::error(line, col, "expected a statement"));
                return false;
            }
        }
        self.diags.len() == before
    }

    fn gate_application(&mut self, name: &str, line: usize, col: usize, ctrl: Option<u32>) -> bool {
        let (kind, arity, takes_angle) = match name {
            "id" => (GateKind::I, 1, false),
            "x" => (GateKind::X, 1, false),
            "y" => (GateKind::Y, 1, false),
            "z" => (GateKind::Z, 1, false),
            "h" => (GateKind::H, 1, false),
            "s" => (GateKind::S, 1, false),
            "sdg" => (GateKind::Sdg, 1, false),
            "t" => (GateKind::T, 1, false),
            "tdg" => (GateKind::Tdg, 1, false),
            "rx" => (GateKind::Rx, 1, true),
            "ry" => (GateKind::Ry, 1, true),
            "rz" => (GateKind::Rz, 1, true),
            "cx" => (GateKind::Cnot, 2, false),
            "cz" => (GateKind::Cz, 2, false),
            "swap" => (GateKind::Swap, 2, false),
            "ccx" => (GateKind::Toffoli, 3, false),
            other => {
                self.diags.push(Diagnostic::error(
                    line,
                    col,
                    format!("unsupported gate {other:?}"),
                ));
                return false;
            }
        };
        let mut angle = None;
        if self.peek().map(|t| &t.tok) == Some(&Tok::Sym('(')) {
            if !takes_angle {
                self.error_here(format!("gate {name:?} takes no parameter"));
                return false;
            }
            self.pos += 1;
            let Some(value) = self.expr() else {
                return false;
            };
            if !self.expect_sym(')') {
                return false;
            }
            angle = Some(value);
        } else if takes_angle {
            self.error_here(format!("gate {name:?} requires an angle parameter"));
            return false;
        }
        let mut qubits = Vec::with_capacity(arity);
        for j in 0..arity {
            if j > 0 && !self.expect_sym(',') {
                return false;
            }
            let Some(q) = self.qubit_operand() else {
                return false;
            };
            qubits.push(q);
        }
        if !self.expect_sym(';') {
            return false;
        }
        let mut op = Op {
            angle,
            ..Op::new(kind, qubits)
        };
        op.ctrl = ctrl;
        self.ops.push(op);
        true
    }

    /// An indexed qubit operand `name[i]`, resolved to a dense index.
    fn qubit_operand(&mut self) -> Option<u32> {
        let (line, col) = self.here();
        let name = self.expect_ident()?;
        if self.peek().map(|t| &t.tok) != Some(&Tok::Sym('[')) {
            self.diags.push(Diagnostic::error(
                line,
                col,
                "register broadcast is not supported; index the qubit",
            ));
            return None;
        }
        self.pos += 1;
        let index = self.expect_uint()?;
        if !self.expect_sym(']') {
            return None;
        }
        match self.qregs.iter().find(|r| r.name == name) {
            Some(reg) if index < reg.size => Some(reg.offset + index),
            Some(reg) => {
                self.diags.push(Diagnostic::error(
                    line,
                    col,
                    format!("index {index} out of range for {name}[{}]", reg.size),
                ));
                None
            }
            None => {
                self.diags.push(Diagnostic::error(
                    line,
                    col,
                    format!("undeclared quantum register {name:?}"),
                ));
                None
            }
        }
    }

    // Angle expressions: + - * / over floats and pi, with parentheses and
    // unary minus, evaluated in double precision.
    fn expr(&mut self) -> Option<f64> {
        let mut acc = self.term()?;
        loop {
            match self.peek().map(|t| &t.tok) {
                Some(Tok::Sym('+')) => {
                    self.pos += 1;
                    acc += self.term()?;
                }
                Some(Tok::Sym('-')) => {
                    self.pos += 1;
                    acc -= self.term()?;
                }
                _ => return Some(acc),
            }
        }
    }

    fn term(&mut self) -> Option<f64> {
        let mut acc = self.factor()?;
        loop {
            match self.peek().map(|t| &t.tok) {
                Some(Tok::Sym('*')) => {
                    self.pos += 1;
                    acc *= self.factor()?;
                }
                Some(Tok::Sym('/')) => {
                    self.pos += 1;
                    acc /= self.factor()?;
                }
                _ => return Some(acc),
            }
        }
    }

    fn factor(&mut self) -> Option<f64> {
        match self.next() {
            Some(Token {
                tok: Tok::Sym('-'), ..
            }) => Some(-self.factor()?),
            Some(Token {
                tok: Tok::Sym('('), ..
            }) => {
                let value = self.expr()?;
                if self.expect_sym(')') {
                    Some(value)
                } else {
                    None
                }
            }
            Some(Token {
                tok: Tok::Number(text),
                line,
                col,
            }) => match text.parse::<f64>() {
                Ok(x) => Some(x),
                Err(_) => {
                    self.diags
                        .push(Diagnostic::error(line, col, format!("invalid number {text:?}")));
                    None
                }
            },
            Some(Token {
                tok: Tok::Ident(name),
                line,
                col,
            }) => {
                if name == "pi" {
                    Some(std::f64::consts::PI)
                } else {
                    self.diags.push(Diagnostic::error(
                        line,
                        col,
                        format!("unknown symbol {name:?} in expression"),
                    ));
                    None
                }
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                self.error_here("expected an expression");
                None
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qasm_pi_over_four_rotation() {
        let c = parse_qasm("OPENQASM 2.0;\nqreg q[1];\nrz(pi/4) q[0];").unwrap();
        assert_eq!(c.qubits, 1);
        assert_eq!(c.ops.len(), 1);
        assert_eq!(c.ops[0].kind, GateKind::Rz);
        assert_eq!(c.ops[0].angle, Some(std::f64::consts::FRAC_PI_4));
    }

    #[test]
    fn qasm_cx_maps_to_cnot() {
        let c = parse_qasm("qreg q[2];\ncx q[0],q[1];").unwrap();
        assert_eq!(c.ops.len(), 1);
        assert_eq!(c.ops[0].kind, GateKind::Cnot);
        assert_eq!(c.ops[0].qubits, vec![0, 1]);
    }

    #[test]
    fn qasm_angle_arithmetic() {
        let c = parse_qasm("qreg q[1];\nrz(-3*pi/2 + 0.5) q[0];").unwrap();
        let expected = -3.0 * std::f64::consts::PI / 2.0 + 0.5;
        assert_eq!(c.ops[0].angle, Some(expected));
    }

    #[test]
    fn qasm_measure_and_conditioned_gate() {
        let src = "qreg q[2];\ncreg m[1];\nmeasure q[0] -> m[0];\nif(m==1) z q[1];";
        let c = parse_qasm(src).unwrap();
        assert_eq!(c.ops.len(), 2);
        assert_eq!(c.ops[0].kind, GateKind::Measure);
        assert_eq!(c.ops[1].kind, GateKind::Z);
        assert_eq!(c.ops[1].ctrl, Some(0));
    }

    #[test]
    fn qasm_include_is_a_located_error() {
        let err = parse_qasm("OPENQASM 2.0;\ninclude \"qelib1.inc\";\nqreg q[1];").unwrap_err();
        let Error::Ingest(diags) = err else {
            panic!("expected ingest diagnostics")
        };
        assert_eq!(diags[0].line, 2);
        assert!(diags[0].message.contains("include"));
    }

    #[test]
    fn qasm_collects_multiple_errors() {
        let err = parse_qasm("qreg q[1];\nfoo q[0];\nbar q[0];").unwrap_err();
        let Error::Ingest(diags) = err else {
            panic!("expected ingest diagnostics")
        };
        assert_eq!(diags.len(), 2);
    }

    #[test]
    fn qasm_rejects_barrier_and_gate_defs() {
        assert!(parse_qasm("qreg q[2];\nbarrier q[0];").is_err());
        assert!(parse_qasm("gate foo a { x a; }").is_err());
    }

    #[test]
    fn qasm_round_trip_is_identity() {
        let mut c = Circuit::new(3, Level::Input);
        c.push(Op::new(GateKind::H, vec![0]));
        c.push(Op::rz(1, 0.1));
        c.push(Op::rot(GateKind::Rx, 2, -1.75));
        c.push(Op::new(GateKind::Toffoli, vec![0, 1, 2]));
        c.push(Op::new(GateKind::Measure, vec![0]));
        c.push(Op::new(GateKind::S, vec![1]).with_ctrl(4));
        c.push(Op::new(GateKind::Reset, vec![0]));
        c.push(Op::new(GateKind::Swap, vec![0, 2]));
        let qasm = emit_qasm(&c).unwrap();
        let back = parse_qasm(&qasm).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn native_minimal_document() {
        let c = parse_native(r#"{"qubits":2,"ops":[{"kind":"CNOT","qubits":[0,1]}]}"#).unwrap();
        assert_eq!(c.level, Level::Input);
        assert_eq!(c.ops[0].kind, GateKind::Cnot);
    }

    #[test]
    fn native_angle_on_h_is_schema_error() {
        let err =
            parse_native(r#"{"qubits":1,"ops":[{"kind":"H","qubits":[0],"angle":0.5}]}"#)
                .unwrap_err();
        let Error::Ingest(diags) = err else {
            panic!("expected ingest diagnostics")
        };
        assert!(diags[0].message.contains("$.ops[0].angle"));
    }

    #[test]
    fn native_unknown_field_names_path() {
        let err = parse_native(r#"{"qubits":1,"ops":[],"bogus":3}"#).unwrap_err();
        assert!(err.to_string().contains("$.bogus"));
    }

    #[test]
    fn native_empty_circuit_canonical_form() {
        let c = Circuit::new(0, Level::Input);
        assert_eq!(emit_native(&c), r#"{"qubits":0,"ops":[],"level":"input"}"#);
    }

    #[test]
    fn native_round_trip_with_ctrl_and_level() {
        let mut c = Circuit::new(2, Level::CliffordT);
        c.push(Op::new(GateKind::T, vec![0]));
        c.push(Op::new(GateKind::Measure, vec![0]));
        c.push(Op::new(GateKind::S, vec![1]).with_ctrl(1));
        let text = emit_native(&c);
        assert_eq!(parse_native(&text).unwrap(), c);
        assert_eq!(emit_native(&parse_native(&text).unwrap()), text);
    }

    #[test]
    fn native_round_trip_matrix_payload() {
        use num_complex::Complex64;
        let m = Matrix2::new(
            Complex64::new(0.6, 0.0),
            Complex64::new(0.0, 0.8),
            Complex64::new(0.0, 0.8),
            Complex64::new(0.6, 0.0),
        );
        let mut c = Circuit::new(1, Level::Input);
        c.push(Op::u1q(0, m));
        c.global_phase = 0.25;
        let text = emit_native(&c);
        assert_eq!(parse_native(&text).unwrap(), c);
    }

    #[test]
    fn native_round_trip_primitive_durations() {
        let mut c = Circuit::new(2, Level::Primitive);
        let mut op = Op::new(GateKind::Se, vec![0, 1]);
        op.dur_ticks = Some(1_411_080);
        c.push(op);
        let text = emit_native(&c);
        assert_eq!(parse_native(&text).unwrap(), c);
    }

    #[test]
    fn native_full_precision_angles() {
        let mut c = Circuit::new(1, Level::Input);
        c.push(Op::rz(0, 0.1));
        let text = emit_native(&c);
        let back = parse_native(&text).unwrap();
        assert_eq!(back.ops[0].angle, Some(0.1));
        assert_eq!(emit_native(&back), text);
    }

    #[test]
    fn native_ctrl_must_point_at_measure() {
        let err = parse_native(
            r#"{"qubits":2,"ops":[{"kind":"H","qubits":[0]},{"kind":"S","qubits":[1],"ctrl":0}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("$.ops[1].ctrl"));
    }

    #[test]
    fn qasm_multiple_qregs_flatten_densely() {
        let c = parse_qasm("qreg a[2];\nqreg b[2];\nh b[1];\ncx a[1],b[0];").unwrap();
        assert_eq!(c.qubits, 4);
        assert_eq!(c.ops[0].qubits, vec![3]);
        assert_eq!(c.ops[1].qubits, vec![1, 2]);
    }

    #[test]
    fn parser_handles_arbitrary_bytes_without_panicking() {
        for garbage in ["\u{0}\u{1}\u{2}", "{{{{", "qreg [;", "rz(((", "\"", "9e", "if(x==2) h;"] {
            let _ = parse_qasm(garbage);
        }
    }
}
