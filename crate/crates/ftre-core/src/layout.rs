//! Procedural layout generation: placing data patches, factories, and
//! ancilla routing space on a rectangular grid of surface-code patches.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutStrategy {
    /// Near-square packing with no routing space; movement architectures.
    Dense,
    /// Two data columns, each qubit flanked by its own T and S factory.
    Column,
    /// Data block ringed by ancilla, factories on the perimeter.
    Embedded,
    /// Central data row between two ancilla highways with factory rows
    /// outside; the default for lattice architectures.
    Sandwich,
}

impl LayoutStrategy {
    pub fn as_str(self) -> &'static str {
        match self {
            LayoutStrategy::Dense => "dense",
            LayoutStrategy::Column => "column",
            LayoutStrategy::Embedded => "embedded",
            LayoutStrategy::Sandwich => "sandwich",
        }
    }

    pub fn parse(s: &str) -> Option<LayoutStrategy> {
        match s {
            "dense" => Some(LayoutStrategy::Dense),
            "column" => Some(LayoutStrategy::Column),
            "embedded" => Some(LayoutStrategy::Embedded),
            "sandwich" => Some(LayoutStrategy::Sandwich),
            _ => None,
        }
    }

    /// Dense layouts route by physical movement; the rest reserve ancilla
    /// patches for lattice surgery.
    pub fn uses_ancilla(self) -> bool {
        self != LayoutStrategy::Dense
    }
}

impl fmt::Display for LayoutStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Role of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRole {
    Data(u32),
    TFactory,
    SFactory,
    Ancilla,
    Empty,
}

/// A cell position as (row, column).
pub type Cell = (u32, u32);

/// Generated placement grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayoutGrid {
    pub width: u32,
    pub height: u32,
    pub strategy: LayoutStrategy,
    /// Row-major cell roles, `height * width` entries.
    pub cells: Vec<CellRole>,
    /// Data-qubit id to cell, dense in qubit id.
    pub data_cells: Vec<Cell>,
    /// T-factory cells in (row, column) order.
    pub t_cells: Vec<Cell>,
    /// S-factory cells in (row, column) order.
    pub s_cells: Vec<Cell>,
}

impl LayoutGrid {
    pub fn role(&self, cell: Cell) -> CellRole {
        self.cells[(cell.0 * self.width + cell.1) as usize]
    }

    pub fn in_bounds(&self, row: i64, col: i64) -> bool {
        row >= 0 && col >= 0 && (row as u32) < self.height && (col as u32) < self.width
    }

    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        const STEPS: [(i64, i64); 4] = [(-1, 0), (0, -1), (0, 1), (1, 0)];
        STEPS.iter().filter_map(move |&(dr, dc)| {
            let (r, c) = (cell.0 as i64 + dr, cell.1 as i64 + dc);
            self.in_bounds(r, c).then_some((r as u32, c as u32))
        })
    }

    /// Number of occupied patches: data, factories, and ancilla.
    pub fn logical_qubits(&self) -> u64 {
        self.cells
            .iter()
            .filter(|role| !matches!(role, CellRole::Empty))
            .count() as u64
    }

    pub fn physical_qubits(&self, d: u32) -> u64 {
        self.logical_qubits() * (d as u64).pow(2)
    }

    pub fn n_data(&self) -> u32 {
        self.data_cells.len() as u32
    }

    /// Qubit index space of the compiled circuit: data first, then T
    /// factories, then S factories.
    pub fn total_addressable(&self) -> u32 {
        (self.data_cells.len() + self.t_cells.len() + self.s_cells.len()) as u32
    }

    pub fn t_factory_qubit(&self, i: usize) -> u32 {
        (self.data_cells.len() + i) as u32
    }

    pub fn s_factory_qubit(&self, i: usize) -> u32 {
        (self.data_cells.len() + self.t_cells.len() + i) as u32
    }

    /// Cell of an addressable qubit: data, T factory, or S factory.
    pub fn qubit_cell(&self, qubit: u32) -> Cell {
        let q = qubit as usize;
        let nd = self.data_cells.len();
        let nt = self.t_cells.len();
        if q < nd {
            self.data_cells[q]
        } else if q < nd + nt {
            self.t_cells[q - nd]
        } else {
            self.s_cells[q - nd - nt]
        }
    }

    pub fn manhattan(a: Cell, b: Cell) -> u32 {
        a.0.abs_diff(b.0) + a.1.abs_diff(b.1)
    }

    /// ASCII rendering, one character per cell.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width as usize + 1) * self.height as usize);
        for row in 0..self.height {
            for col in 0..self.width {
                out.push(match self.role((row, col)) {
                    CellRole::Data(_) => 'D',
                    CellRole::TFactory => 'T',
                    CellRole::SFactory => 'S',
                    CellRole::Ancilla => 'A',
                    CellRole::Empty => '.',
                });
            }
            out.push('\n');
        }
        out
    }

    /// Structural checks shared by every strategy plus the family-specific
    /// routing invariants.
    pub fn validate(&self) -> Result<()> {
        if self.cells.len() != (self.width * self.height) as usize {
            return Err(Error::Layout("cell vector does not match grid dimensions".into()));
        }
        let mut seen = vec![false; self.data_cells.len()];
        for (i, &role) in self.cells.iter().enumerate() {
            if let CellRole::Data(q) = role {
                let q = q as usize;
                if q >= seen.len() || seen[q] {
                    return Err(Error::Layout(format!("data qubit {q} missing or duplicated")));
                }
                seen[q] = true;
                let cell = ((i as u32) / self.width, (i as u32) % self.width);
                if self.data_cells[q] != cell {
                    return Err(Error::Layout(format!("data index for qubit {q} is stale")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Layout("a data qubit has no cell".into()));
        }
        if self.strategy.uses_ancilla() {
            self.validate_lattice_routing()
        } else {
            if self.cells.iter().any(|r| matches!(r, CellRole::Ancilla)) {
                return Err(Error::Layout("movement layouts must not contain ancilla cells".into()));
            }
            Ok(())
        }
    }

    /// Every data and factory patch must border the ancilla network, and one
    /// connected ancilla component must reach all data patches so any pair
    /// can be merged.
    fn validate_lattice_routing(&self) -> Result<()> {
        let comp = self.ancilla_components();
        let mut shared: Option<BTreeSet<u32>> = None;
        for (label, cells) in [("data", &self.data_cells)] {
            for &cell in cells.iter() {
                let adj: BTreeSet<u32> = self
                    .neighbors(cell)
                    .filter(|&n| matches!(self.role(n), CellRole::Ancilla))
                    .map(|n| comp[(n.0 * self.width + n.1) as usize])
                    .collect();
                if adj.is_empty() {
                    return Err(Error::Layout(format!(
                        "{label} cell ({}, {}) has no adjacent ancilla",
                        cell.0, cell.1
                    )));
                }
                shared = Some(match shared {
                    None => adj,
                    Some(prev) => prev.intersection(&adj).copied().collect(),
                });
            }
        }
        if let Some(shared) = &shared {
            if shared.is_empty() {
                return Err(Error::Layout(
                    "no single ancilla component connects every data patch".into(),
                ));
            }
        }
        for cells in [&self.t_cells, &self.s_cells] {
            for &cell in cells.iter() {
                let mut adj = self
                    .neighbors(cell)
                    .filter(|&n| matches!(self.role(n), CellRole::Ancilla))
                    .map(|n| comp[(n.0 * self.width + n.1) as usize]);
                if adj.next().is_none() {
                    return Err(Error::Layout(format!(
                        "factory cell ({}, {}) has no adjacent ancilla",
                        cell.0, cell.1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Connected-component label per cell over the ancilla subgraph; non
    /// ancilla cells get `u32::MAX`.
    fn ancilla_components(&self) -> Vec<u32> {
        let mut comp = vec![u32::MAX; self.cells.len()];
        let mut next = 0u32;
        for row in 0..self.height {
            for col in 0..self.width {
                let idx = (row * self.width + col) as usize;
                if comp[idx] != u32::MAX || !matches!(self.role((row, col)), CellRole::Ancilla) {
                    continue;
                }
                let mut stack = vec![(row, col)];
                comp[idx] = next;
                while let Some(cell) = stack.pop() {
                    for n in self.neighbors(cell).collect::<Vec<_>>() {
                        let nidx = (n.0 * self.width + n.1) as usize;
                        if comp[nidx] == u32::MAX && matches!(self.role(n), CellRole::Ancilla) {
                            comp[nidx] = next;
                            stack.push(n);
                        }
                    }
                }
                next += 1;
            }
        }
        comp
    }
}

fn finish(
    width: u32,
    height: u32,
    strategy: LayoutStrategy,
    cells: Vec<CellRole>,
) -> Result<LayoutGrid> {
    let mut data_cells = Vec::new();
    let mut t_cells = Vec::new();
    let mut s_cells = Vec::new();
    for (i, &role) in cells.iter().enumerate() {
        let cell = ((i as u32) / width, (i as u32) % width);
        match role {
            CellRole::Data(q) => {
                let q = q as usize;
                if data_cells.len() <= q {
                    data_cells.resize(q + 1, (0, 0));
                }
                data_cells[q] = cell;
            }
            CellRole::TFactory => t_cells.push(cell),
            CellRole::SFactory => s_cells.push(cell),
            _ => {}
        }
    }
    let grid = LayoutGrid {
        width,
        height,
        strategy,
        cells,
        data_cells,
        t_cells,
        s_cells,
    };
    grid.validate()?;
    Ok(grid)
}

/// Generate a layout. Factory counts are respected exactly except by the
/// column strategy, which derives them from the data count.
pub fn generate_layout(
    strategy: LayoutStrategy,
    n_data: u32,
    n_t_factories: u32,
    n_s_factories: u32,
) -> Result<LayoutGrid> {
    if n_data == 0 {
        return Err(Error::Layout("layout needs at least one data qubit".into()));
    }
    if strategy.uses_ancilla() && strategy != LayoutStrategy::Column && n_t_factories == 0 {
        return Err(Error::Layout(format!(
            "{strategy} layout needs at least one T factory"
        )));
    }
    match strategy {
        LayoutStrategy::Dense => dense(n_data, n_t_factories, n_s_factories),
        LayoutStrategy::Column => column(n_data),
        LayoutStrategy::Embedded => embedded(n_data, n_t_factories, n_s_factories),
        LayoutStrategy::Sandwich => sandwich(n_data, n_t_factories, n_s_factories),
    }
}

fn dense(n_data: u32, n_t: u32, n_s: u32) -> Result<LayoutGrid> {
    let total = n_data + n_t + n_s;
    let width = (total as f64).sqrt().ceil() as u32;
    let height = total.div_ceil(width);
    let mut cells = Vec::with_capacity((width * height) as usize);
    for i in 0..width * height {
        cells.push(if i < n_data {
            CellRole::Data(i)
        } else if i < n_data + n_t {
            CellRole::TFactory
        } else if i < total {
            CellRole::SFactory
        } else {
            CellRole::Empty
        });
    }
    finish(width, height, LayoutStrategy::Dense, cells)
}

/// Per-row template: `T A D A S S A D A T`, under a full-width ancilla bus.
fn column(n_data: u32) -> Result<LayoutGrid> {
    const WIDTH: u32 = 10;
    let rows = n_data.div_ceil(2);
    let height = rows + 1;
    let mut cells = vec![CellRole::Ancilla; WIDTH as usize];
    for r in 0..rows {
        let left = 2 * r;
        let right = 2 * r + 1;
        let has_right = right < n_data;
        let mut row = [CellRole::Empty; WIDTH as usize];
        row[0] = CellRole::TFactory;
        row[1] = CellRole::Ancilla;
        row[2] = CellRole::Data(left);
        row[3] = CellRole::Ancilla;
        row[4] = CellRole::SFactory;
        row[6] = CellRole::Ancilla;
        row[8] = CellRole::Ancilla;
        if has_right {
            row[5] = CellRole::SFactory;
            row[7] = CellRole::Data(right);
            row[9] = CellRole::TFactory;
        }
        cells.extend_from_slice(&row);
    }
    finish(WIDTH, height, LayoutStrategy::Column, cells)
}

fn embedded(n_data: u32, n_t: u32, n_s: u32) -> Result<LayoutGrid> {
    // Interior data rows are interleaved with ancilla rows; grow the data
    // block width until the perimeter has room for every factory.
    let mut data_cols = (n_data as f64).sqrt().ceil() as u32;
    loop {
        let data_rows = n_data.div_ceil(data_cols);
        let width = data_cols + 4;
        let height = (2 * data_rows - 1) + 4;
        let perimeter = 2 * (width - 2) + 2 * (height - 2);
        if perimeter >= n_t + n_s {
            break;
        }
        data_cols += 1;
    }
    let data_rows = n_data.div_ceil(data_cols);
    let width = data_cols + 4;
    let height = (2 * data_rows - 1) + 4;

    let mut cells = vec![CellRole::Empty; (width * height) as usize];
    let set = |r: u32, c: u32, role: CellRole, cells: &mut Vec<CellRole>| {
        cells[(r * width + c) as usize] = role;
    };
    // Ancilla ring.
    for c in 1..width - 1 {
        set(1, c, CellRole::Ancilla, &mut cells);
        set(height - 2, c, CellRole::Ancilla, &mut cells);
    }
    for r in 1..height - 1 {
        set(r, 1, CellRole::Ancilla, &mut cells);
        set(r, width - 2, CellRole::Ancilla, &mut cells);
    }
    // Interior: alternating data and ancilla rows.
    let mut q = 0u32;
    for dr in 0..data_rows {
        let r = 2 + 2 * dr;
        for dc in 0..data_cols {
            if q < n_data {
                set(r, 2 + dc, CellRole::Data(q), &mut cells);
                q += 1;
            }
        }
        if dr + 1 < data_rows {
            for dc in 0..data_cols {
                set(r + 1, 2 + dc, CellRole::Ancilla, &mut cells);
            }
        }
    }
    // Factory ring on the outer perimeter, skipping corners, in scan order.
    let mut remaining_t = n_t;
    let mut remaining_s = n_s;
    for r in 0..height {
        for c in 0..width {
            let on_edge = r == 0 || r == height - 1 || c == 0 || c == width - 1;
            let corner = (r == 0 || r == height - 1) && (c == 0 || c == width - 1);
            if !on_edge || corner {
                continue;
            }
            let role = if remaining_t > 0 {
                remaining_t -= 1;
                CellRole::TFactory
            } else if remaining_s > 0 {
                remaining_s -= 1;
                CellRole::SFactory
            } else {
                continue;
            };
            set(r, c, role, &mut cells);
        }
    }
    finish(width, height, LayoutStrategy::Embedded, cells)
}

fn sandwich(n_data: u32, n_t: u32, n_s: u32) -> Result<LayoutGrid> {
    let width = n_data.max((n_t + n_s).div_ceil(2)).max(1);
    let height = 5;
    let mut cells = Vec::with_capacity((width * height) as usize);
    let mut factories = (0..n_t)
        .map(|_| CellRole::TFactory)
        .chain((0..n_s).map(|_| CellRole::SFactory));
    for c in 0..width {
        let _ = c;
        cells.push(factories.next().unwrap_or(CellRole::Empty));
    }
    cells.extend(std::iter::repeat_n(CellRole::Ancilla, width as usize));
    for c in 0..width {
        cells.push(if c < n_data { CellRole::Data(c) } else { CellRole::Empty });
    }
    cells.extend(std::iter::repeat_n(CellRole::Ancilla, width as usize));
    for _ in 0..width {
        cells.push(factories.next().unwrap_or(CellRole::Empty));
    }
    finish(width, height, LayoutStrategy::Sandwich, cells)
}

/// The not-busy factory of the requested kind closest to `from` by Manhattan
/// distance, ties broken toward the smallest (row, column).
pub fn nearest_available_factory(
    layout: &LayoutGrid,
    from: Cell,
    kind: FactoryKind,
    busy: &BTreeSet<Cell>,
) -> Option<Cell> {
    let pool = match kind {
        FactoryKind::T => &layout.t_cells,
        FactoryKind::S => &layout.s_cells,
    };
    let mut best: Option<(u32, Cell)> = None;
    for &cell in pool {
        if busy.contains(&cell) {
            continue;
        }
        let dist = LayoutGrid::manhattan(from, cell);
        if best.is_none_or(|(bd, _)| dist < bd) {
            best = Some((dist, cell));
        }
    }
    best.map(|(_, cell)| cell)
}

/// Resource-state species a factory produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactoryKind {
    T,
    S,
}
