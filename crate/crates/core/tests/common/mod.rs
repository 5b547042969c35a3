#![allow(dead_code)]

use std::path::PathBuf;

use macroplace::bookshelf::{Cell, CellKind, ClassifyOptions, Net, Netlist, Orientation, Pin, PinDirection};
use macroplace::geom::{Point, Rect};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn aux(name: &str) -> PathBuf {
    fixture(name).join(format!("{name}.aux"))
}

pub fn manifest(name: &str) -> serde_json::Value {
    let text = std::fs::read_to_string(fixture(name).join("manifest.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

pub fn cell(name: &str, w: f64, h: f64, movable: bool, lower_left: Option<Point>) -> Cell {
    Cell {
        name: name.to_string(),
        width: w,
        height: h,
        kind: CellKind::Standard,
        movable,
        position: lower_left,
        orientation: Orientation::N,
    }
}

pub fn pin(cell: usize, dx: f64, dy: f64) -> Pin {
    Pin { cell, dx, dy, direction: PinDirection::Input }
}

pub fn net(name: &str, pins: Vec<Pin>) -> Net {
    Net { name: name.to_string(), pins }
}

/// Netlist on an explicit die with the default macro threshold.
pub fn netlist(cells: Vec<Cell>, nets: Vec<Net>, die: Rect) -> Netlist {
    Netlist::new("t", cells, nets, Vec::new(), Some(die), &ClassifyOptions::default()).unwrap()
}
