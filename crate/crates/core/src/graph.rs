//! State encoding derived from a netlist: the macro adjacency graph, the
//! per-macro feature matrix and a fixed-length design metadata vector.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bookshelf::{Netlist, PinDirection};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("design has no movable macros")]
    NoMacros,
}

/// Number of feature columns per macro: width, height, pin count, input-pin fraction.
pub const NUM_FEATURES: usize = 4;
/// Length of [`NetlistMetadata`].
pub const METADATA_LEN: usize = 7;

/// How a multi-macro net contributes to adjacency entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetWeighting {
    /// Every net adds 1 to each macro pair it connects.
    #[default]
    Unit,
    /// A net touching k cells adds 1/(k-1).
    Clique,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroGraph {
    /// N x N, symmetric, zero diagonal.
    pub adjacency: Array2<f64>,
    /// N x 4, columns min-max normalized to [0, 1].
    pub features: Array2<f64>,
    /// Netlist cell index of each macro, in placement order.
    pub macro_cells: Vec<usize>,
}

impl MacroGraph {
    pub fn n_macros(&self) -> usize {
        self.macro_cells.len()
    }

    /// Position of a netlist cell in the macro ordering.
    pub fn macro_of_cell(&self, cell: usize) -> Option<usize> {
        self.macro_cells.iter().position(|&c| c == cell)
    }
}

/// Movable macros sorted by descending area, ties broken by name. This is
/// also the order in which macros are placed.
pub fn placement_order(netlist: &Netlist) -> Vec<usize> {
    let mut order = netlist.movable_macros();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&netlist.cells[a], &netlist.cells[b]);
        cb.area()
            .total_cmp(&ca.area())
            .then_with(|| ca.name.cmp(&cb.name))
    });
    order
}

pub fn build_macro_graph(netlist: &Netlist) -> Result<MacroGraph, GraphError> {
    build_macro_graph_with(netlist, NetWeighting::Unit)
}

pub fn build_macro_graph_with(netlist: &Netlist, weighting: NetWeighting) -> Result<MacroGraph, GraphError> {
    let order = placement_order(netlist);
    build_graph_for_order(netlist, order, weighting)
}

/// Build the graph for an explicit macro ordering.
pub fn build_graph_for_order(
    netlist: &Netlist,
    order: Vec<usize>,
    weighting: NetWeighting,
) -> Result<MacroGraph, GraphError> {
    let n = order.len();
    if n == 0 {
        return Err(GraphError::NoMacros);
    }
    let mut slot = vec![usize::MAX; netlist.cells.len()];
    for (i, &c) in order.iter().enumerate() {
        slot[c] = i;
    }

    let mut adjacency = Array2::<f64>::zeros((n, n));
    let mut pins = vec![0.0; n];
    let mut inputs = vec![0.0; n];
    let mut members: Vec<usize> = Vec::new();
    for net in &netlist.nets {
        members.clear();
        for pin in &net.pins {
            let m = slot[pin.cell];
            if m == usize::MAX {
                continue;
            }
            pins[m] += 1.0;
            if pin.direction == PinDirection::Input {
                inputs[m] += 1.0;
            }
            members.push(m);
        }
        members.sort_unstable();
        members.dedup();
        if members.len() < 2 {
            continue;
        }
        let w = match weighting {
            NetWeighting::Unit => 1.0,
            NetWeighting::Clique => {
                let mut cells: Vec<usize> = net.pins.iter().map(|p| p.cell).collect();
                cells.sort_unstable();
                cells.dedup();
                1.0 / (cells.len() as f64 - 1.0)
            }
        };
        for (k, &a) in members.iter().enumerate() {
            for &b in &members[k + 1..] {
                adjacency[[a, b]] += w;
                adjacency[[b, a]] += w;
            }
        }
    }

    let mut features = Array2::<f64>::zeros((n, NUM_FEATURES));
    for (i, &c) in order.iter().enumerate() {
        let cell = &netlist.cells[c];
        features[[i, 0]] = cell.width;
        features[[i, 1]] = cell.height;
        features[[i, 2]] = pins[i];
        features[[i, 3]] = if pins[i] > 0.0 { inputs[i] / pins[i] } else { 0.0 };
    }
    for mut col in features.columns_mut() {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = hi - lo;
        // constant columns carry no information; map them to 0
        col.mapv_inplace(|v| if range > 0.0 { (v - lo) / range } else { 0.0 });
    }

    Ok(MacroGraph { adjacency, features, macro_cells: order })
}

/// Fixed-length design summary:
/// `[cells, nets, movable macros, fixed macros, die width, die height, movable area / die area]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetlistMetadata(pub Array1<f64>);

/// Saturation points for the log-scaled count entries.
pub const CELL_COUNT_SCALE: f64 = 1.0e7;
pub const MACRO_COUNT_SCALE: f64 = 1.0e5;

fn log_scale(count: f64, cap: f64) -> f64 {
    ((1.0 + count).ln() / (1.0 + cap).ln()).clamp(0.0, 1.0)
}

pub fn build_metadata(netlist: &Netlist) -> NetlistMetadata {
    let stats = netlist.stats();
    let movable_area: f64 = netlist
        .cells
        .iter()
        .filter(|c| c.movable)
        .map(|c| c.area())
        .sum();
    let die = netlist.die;
    let extent = die.w.max(die.h);
    NetlistMetadata(Array1::from(vec![
        log_scale(stats.cells as f64, CELL_COUNT_SCALE),
        log_scale(stats.nets as f64, CELL_COUNT_SCALE),
        log_scale(stats.movable_macros as f64, MACRO_COUNT_SCALE),
        log_scale(stats.fixed_macros as f64, MACRO_COUNT_SCALE),
        die.w / extent,
        die.h / extent,
        (movable_area / die.area()).clamp(0.0, 1.0),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bookshelf::{Cell, CellKind, ClassifyOptions, Net, Orientation, Pin};
    use crate::geom::Rect;

    fn macro_cell(name: &str, w: f64, h: f64) -> Cell {
        Cell {
            name: name.into(),
            width: w,
            height: h,
            kind: CellKind::Macro,
            movable: true,
            position: None,
            orientation: Orientation::N,
        }
    }

    fn pin(cell: usize, direction: PinDirection) -> Pin {
        Pin { cell, dx: 0.0, dy: 0.0, direction }
    }

    fn design(cells: Vec<Cell>, nets: Vec<Net>) -> Netlist {
        // all cells are "large" relative to a median that includes them; use threshold 0
        let opts = ClassifyOptions { macro_area_threshold: 0.0, ..Default::default() };
        Netlist::new("t", cells, nets, vec![], Some(Rect::new(0.0, 0.0, 100.0, 100.0)), &opts).unwrap()
    }

    #[test]
    fn two_macros_one_net() {
        let n = design(
            vec![macro_cell("a", 2.0, 2.0), macro_cell("b", 1.0, 1.0)],
            vec![Net { name: "n".into(), pins: vec![pin(0, PinDirection::Output), pin(1, PinDirection::Input)] }],
        );
        let g = build_macro_graph(&n).unwrap();
        assert_eq!(g.adjacency, ndarray::arr2(&[[0.0, 1.0], [1.0, 0.0]]));
        assert_eq!(g.macro_cells, [0, 1]);
        // input fraction: a has 0/1, b has 1/1
        assert_eq!(g.features[[0, 3]], 0.0);
        assert_eq!(g.features[[1, 3]], 1.0);
    }

    #[test]
    fn single_macro() {
        let n = design(vec![macro_cell("a", 2.0, 2.0)], vec![]);
        let g = build_macro_graph(&n).unwrap();
        assert_eq!(g.adjacency.dim(), (1, 1));
        assert_eq!(g.adjacency[[0, 0]], 0.0);
        assert_eq!(g.features.dim(), (1, 4));
    }

    #[test]
    fn ordering_is_area_then_name() {
        let n = design(
            vec![macro_cell("b", 1.0, 1.0), macro_cell("a", 1.0, 1.0), macro_cell("c", 3.0, 1.0)],
            vec![],
        );
        assert_eq!(placement_order(&n), [2, 1, 0]);
    }

    #[test]
    fn repeated_pins_on_one_macro_count_once() {
        let n = design(
            vec![macro_cell("a", 2.0, 2.0), macro_cell("b", 1.0, 1.0)],
            vec![Net {
                name: "n".into(),
                pins: vec![pin(0, PinDirection::Output), pin(0, PinDirection::Input), pin(1, PinDirection::Input)],
            }],
        );
        let g = build_macro_graph(&n).unwrap();
        assert_eq!(g.adjacency[[0, 1]], 1.0);
        let g = build_macro_graph_with(&n, NetWeighting::Clique).unwrap();
        assert_eq!(g.adjacency[[0, 1]], 1.0);
    }

    #[test]
    fn no_macros_is_an_error() {
        let mut c = macro_cell("s", 1.0, 1.0);
        c.movable = false;
        c.position = Some(crate::geom::Point::new(0.0, 0.0));
        let n = Netlist::new("t", vec![c], vec![], vec![], Some(Rect::new(0.0, 0.0, 10.0, 10.0)), &Default::default()).unwrap();
        assert_eq!(build_macro_graph(&n).unwrap_err(), GraphError::NoMacros);
    }

    #[test]
    fn metadata_for_single_macro_design() {
        let n = design(vec![macro_cell("a", 10.0, 10.0)], vec![]);
        let m = build_metadata(&n).0;
        assert_eq!(m.len(), METADATA_LEN);
        assert!((m[0] - log_scale(1.0, CELL_COUNT_SCALE)).abs() < 1e-15);
        assert_eq!(m[1], 0.0);
        assert_eq!(m[3], 0.0);
        assert_eq!((m[4], m[5]), (1.0, 1.0));
        assert!((m[6] - 0.01).abs() < 1e-15);
    }
}
