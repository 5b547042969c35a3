//! Netlist model and the ISPD2005 bookshelf file family.
//!
//! A design is described by an `.aux` file that names its `.nodes`, `.nets`,
//! `.wts`, `.pl` and `.scl` siblings. Everything is parsed into a single
//! [`Netlist`]; cell positions follow the bookshelf convention (lower-left
//! corner) while pin offsets are relative to the owning cell's center.

mod parse;
mod pl;

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point, Rect};

pub use parse::{parse_aux, parse_aux_with};
pub use pl::{parse_pl, write_pl, write_pl_placed, PlEntry};

#[derive(Debug, Error)]
pub enum BookshelfError {
    #[error("missing file {}", .path.display())]
    MissingFile { path: PathBuf },
    #[error("{}:{line}:{column}: syntax error at `{token}`: {message}", .file.display())]
    Syntax {
        file: PathBuf,
        line: usize,
        column: usize,
        token: String,
        message: String,
    },
    #[error("{}:{line}: pin references unknown cell `{cell}`", .file.display())]
    DanglingPinReference {
        file: PathBuf,
        line: usize,
        cell: String,
    },
    #[error("{}:{line}: duplicate cell name `{name}`", .file.display())]
    DuplicateCell {
        file: PathBuf,
        line: usize,
        name: String,
    },
    #[error("{}: declared {what} = {declared} but found {found}", .file.display())]
    CountMismatch {
        file: PathBuf,
        what: &'static str,
        declared: usize,
        found: usize,
    },
    #[error("cell `{0}` has no position")]
    UnplacedCell(String),
    #[error("die area is empty: {0:?}")]
    DegenerateDie(Rect),
    #[error("invalid netlist: {0}")]
    Invalid(String),
    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Macro,
    Standard,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Orientation {
    #[default]
    N,
    S,
    E,
    W,
    FN,
    FS,
    FE,
    FW,
}

impl FromStr for Orientation {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "N" => Orientation::N,
            "S" => Orientation::S,
            "E" => Orientation::E,
            "W" => Orientation::W,
            "FN" => Orientation::FN,
            "FS" => Orientation::FS,
            "FE" => Orientation::FE,
            "FW" => Orientation::FW,
            _ => return Err(()),
        })
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Orientation::N => "N",
            Orientation::S => "S",
            Orientation::E => "E",
            Orientation::W => "W",
            Orientation::FN => "FN",
            Orientation::FS => "FS",
            Orientation::FE => "FE",
            Orientation::FW => "FW",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub name: String,
    pub width: f64,
    pub height: f64,
    pub kind: CellKind,
    pub movable: bool,
    /// Lower-left corner, as written in `.pl` files.
    pub position: Option<Point>,
    pub orientation: Orientation,
}

impl Cell {
    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn is_macro(&self) -> bool {
        self.kind == CellKind::Macro
    }

    pub fn is_movable_macro(&self) -> bool {
        self.kind == CellKind::Macro && self.movable
    }

    pub fn is_fixed_macro(&self) -> bool {
        self.kind == CellKind::Macro && !self.movable
    }

    pub fn is_movable_standard(&self) -> bool {
        self.kind == CellKind::Standard && self.movable
    }

    pub fn center(&self) -> Option<Point> {
        self.position
            .map(|p| p.translate(0.5 * self.width, 0.5 * self.height))
    }

    /// Footprint rectangle for a given center.
    pub fn rect_at(&self, center: Point) -> Rect {
        Rect::from_center(center, self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PinDirection {
    Input,
    Output,
    Bidirectional,
}

impl PinDirection {
    pub fn as_str(self) -> &'static str {
        match self {
            PinDirection::Input => "I",
            PinDirection::Output => "O",
            PinDirection::Bidirectional => "B",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pin {
    pub cell: usize,
    /// Offset from the owning cell's center.
    pub dx: f64,
    pub dy: f64,
    pub direction: PinDirection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub name: String,
    pub pins: Vec<Pin>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementRow {
    pub y: f64,
    pub height: f64,
    pub x: f64,
    pub num_sites: usize,
    pub site_width: f64,
    pub site_spacing: f64,
}

impl PlacementRow {
    pub fn rect(&self) -> Rect {
        Rect::new(self.x, self.y, self.num_sites as f64 * self.site_spacing, self.height)
    }
}

/// How movable and fixed cells are split into macros and the rest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyOptions {
    /// A cell is a macro iff its area is at least this multiple of the
    /// median movable-cell area.
    pub macro_area_threshold: f64,
    /// Treat large fixed cells that lie fully on the die as movable macros.
    pub unfix_terminal_macros: bool,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self {
            macro_area_threshold: 10.0,
            unfix_terminal_macros: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Netlist {
    pub name: String,
    pub cells: Vec<Cell>,
    pub nets: Vec<Net>,
    pub rows: Vec<PlacementRow>,
    pub die: Rect,
    index: HashMap<String, usize>,
}

/// Per-design counts in the layout of the benchmark statistics table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignStats {
    pub cells: usize,
    pub nets: usize,
    pub pins: usize,
    pub movable_macros: usize,
    pub fixed_macros: usize,
    pub standard_cells: usize,
    pub terminals: usize,
    pub design_density: f64,
}

impl Netlist {
    /// Assemble a netlist from already-linked parts, checking the model
    /// invariants. Cells are reclassified with `classify`.
    pub fn new(
        name: impl Into<String>,
        mut cells: Vec<Cell>,
        nets: Vec<Net>,
        rows: Vec<PlacementRow>,
        die: Option<Rect>,
        classify: &ClassifyOptions,
    ) -> Result<Self, BookshelfError> {
        let mut index = HashMap::with_capacity(cells.len());
        for (i, cell) in cells.iter().enumerate() {
            if index.insert(cell.name.clone(), i).is_some() {
                return Err(BookshelfError::Invalid(format!(
                    "duplicate cell name `{}`",
                    cell.name
                )));
            }
        }
        for net in &nets {
            if net.pins.is_empty() {
                return Err(BookshelfError::Invalid(format!("net `{}` has no pins", net.name)));
            }
            if let Some(pin) = net.pins.iter().find(|p| p.cell >= cells.len()) {
                return Err(BookshelfError::Invalid(format!(
                    "net `{}` references cell index {}",
                    net.name, pin.cell
                )));
            }
        }
        let die = match die {
            Some(d) => d,
            None => derive_die(&rows, &cells)?,
        };
        if !(die.w > 0.0 && die.h > 0.0) {
            return Err(BookshelfError::DegenerateDie(die));
        }
        classify_cells(&mut cells, die, classify);
        for cell in &cells {
            if !cell.movable && cell.position.is_none() {
                return Err(BookshelfError::UnplacedCell(cell.name.clone()));
            }
            if cell.kind != CellKind::Terminal && !(cell.width > 0.0 && cell.height > 0.0) {
                return Err(BookshelfError::Invalid(format!(
                    "cell `{}` has non-positive size",
                    cell.name
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            cells,
            nets,
            rows,
            die,
            index,
        })
    }

    pub fn cell_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn num_pins(&self) -> usize {
        self.nets.iter().map(|n| n.pins.len()).sum()
    }

    pub fn movable_macros(&self) -> Vec<usize> {
        self.indices_where(Cell::is_movable_macro)
    }

    pub fn fixed_macros(&self) -> Vec<usize> {
        self.indices_where(Cell::is_fixed_macro)
    }

    pub fn macros(&self) -> Vec<usize> {
        self.indices_where(Cell::is_macro)
    }

    pub fn movable_standard_cells(&self) -> Vec<usize> {
        self.indices_where(Cell::is_movable_standard)
    }

    fn indices_where(&self, pred: impl Fn(&Cell) -> bool) -> Vec<usize> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| pred(c))
            .map(|(i, _)| i)
            .collect()
    }

    /// Set a cell's position from its center.
    pub fn set_center(&mut self, cell: usize, center: Point) {
        let c = &mut self.cells[cell];
        c.position = Some(center.translate(-0.5 * c.width, -0.5 * c.height));
    }

    pub fn stats(&self) -> DesignStats {
        let mut stats = DesignStats {
            cells: self.cells.len(),
            nets: self.nets.len(),
            pins: self.num_pins(),
            movable_macros: 0,
            fixed_macros: 0,
            standard_cells: 0,
            terminals: 0,
            design_density: 0.0,
        };
        let mut area = 0.0;
        for cell in &self.cells {
            match (cell.kind, cell.movable) {
                (CellKind::Macro, true) => stats.movable_macros += 1,
                (CellKind::Macro, false) => stats.fixed_macros += 1,
                (CellKind::Standard, _) => stats.standard_cells += 1,
                (CellKind::Terminal, _) => stats.terminals += 1,
            }
            area += match (cell.movable, cell.position) {
                (false, Some(p)) => Rect::new(p.x, p.y, cell.width, cell.height).overlap_area(&self.die),
                _ => cell.area(),
            };
        }
        stats.design_density = area / self.die.area();
        stats
    }
}

fn derive_die(rows: &[PlacementRow], cells: &[Cell]) -> Result<Rect, BookshelfError> {
    let from_rows = rows.iter().map(PlacementRow::rect).reduce(|a, b| a.union(&b));
    let die = from_rows.or_else(|| {
        cells
            .iter()
            .filter_map(|c| c.position.map(|p| Rect::new(p.x, p.y, c.width, c.height)))
            .reduce(|a, b| a.union(&b))
    });
    die.ok_or(BookshelfError::DegenerateDie(Rect::default()))
}

fn classify_cells(cells: &mut [Cell], die: Rect, opts: &ClassifyOptions) {
    let mut movable_areas: Vec<f64> = cells.iter().filter(|c| c.movable).map(Cell::area).collect();
    let median = if movable_areas.is_empty() {
        None
    } else {
        movable_areas.sort_by(f64::total_cmp);
        let n = movable_areas.len();
        Some(if n % 2 == 1 {
            movable_areas[n / 2]
        } else {
            0.5 * (movable_areas[n / 2 - 1] + movable_areas[n / 2])
        })
    };
    for cell in cells.iter_mut() {
        let area = cell.area();
        let large = median.is_some_and(|m| area > 0.0 && area >= opts.macro_area_threshold * m);
        cell.kind = match (cell.movable, large) {
            (true, true) => CellKind::Macro,
            (true, false) => CellKind::Standard,
            (false, true) => CellKind::Macro,
            (false, false) => CellKind::Terminal,
        };
        if opts.unfix_terminal_macros && cell.kind == CellKind::Macro && !cell.movable {
            let on_die = cell
                .position
                .is_some_and(|p| die.contains_rect(&Rect::new(p.x, p.y, cell.width, cell.height)));
            if on_die {
                cell.movable = true;
            }
        }
    }
}
