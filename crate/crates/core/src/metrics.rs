//! Layout quality metrics: half-perimeter wirelength, grid congestion,
//! macro dispersion and overlap detection.

use std::fmt;

use ndarray::Array2;
use thiserror::Error;

use crate::bookshelf::{Net, Netlist};
use crate::geom::{Point, Rect};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("net endpoint on cell {0} has no position")]
    UnplacedEndpoint(usize),
    #[error("no placed macros")]
    NoPlacedMacros,
}

/// Bins per axis of the congestion estimate.
pub const CONGESTION_BINS: usize = 20;

/// Cell center coordinates, possibly partial.
#[derive(Debug, Clone, PartialEq)]
pub struct PlacementSnapshot {
    pub positions: Vec<Option<Point>>,
    pub die: Rect,
}

impl PlacementSnapshot {
    pub fn empty(num_cells: usize, die: Rect) -> Self {
        Self { positions: vec![None; num_cells], die }
    }

    /// Centers of every cell that has a position in the netlist.
    pub fn from_netlist(netlist: &Netlist) -> Self {
        Self {
            positions: netlist.cells.iter().map(|c| c.center()).collect(),
            die: netlist.die,
        }
    }

    /// Like [`from_netlist`](Self::from_netlist) but only for fixed cells.
    pub fn fixed_only(netlist: &Netlist) -> Self {
        Self {
            positions: netlist
                .cells
                .iter()
                .map(|c| if c.movable { None } else { c.center() })
                .collect(),
            die: netlist.die,
        }
    }

    pub fn get(&self, cell: usize) -> Option<Point> {
        self.positions[cell]
    }

    pub fn set(&mut self, cell: usize, center: Point) {
        self.positions[cell] = Some(center);
    }

    pub fn is_complete(&self) -> bool {
        self.positions.iter().all(Option::is_some)
    }

    /// Copy positions into the netlist (as lower-left corners).
    pub fn apply_to(&self, netlist: &mut Netlist) {
        for (i, p) in self.positions.iter().enumerate() {
            if let Some(p) = p {
                netlist.set_center(i, *p);
            }
        }
    }
}

fn pin_position(snapshot: &PlacementSnapshot, pin: &crate::bookshelf::Pin) -> Option<Point> {
    snapshot.positions[pin.cell].map(|c| c.translate(pin.dx, pin.dy))
}

/// Pin bounding box of a net as (x0, y0, x1, y1).
fn net_bbox(net: &Net, snapshot: &PlacementSnapshot) -> Result<(f64, f64, f64, f64), MetricsError> {
    let mut bb = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for pin in &net.pins {
        let p = pin_position(snapshot, pin).ok_or(MetricsError::UnplacedEndpoint(pin.cell))?;
        bb.0 = bb.0.min(p.x);
        bb.1 = bb.1.min(p.y);
        bb.2 = bb.2.max(p.x);
        bb.3 = bb.3.max(p.y);
    }
    Ok(bb)
}

/// Half-perimeter of the bounding box of the net's pin positions.
pub fn hpwl_net(net: &Net, snapshot: &PlacementSnapshot) -> Result<f64, MetricsError> {
    let (x0, y0, x1, y1) = net_bbox(net, snapshot)?;
    Ok((x1 - x0) + (y1 - y0))
}

/// Sum of net HPWLs. With `placed_only`, nets with any unplaced endpoint are
/// skipped; otherwise an unplaced endpoint is an error.
pub fn total_wl(snapshot: &PlacementSnapshot, netlist: &Netlist, placed_only: bool) -> Result<f64, MetricsError> {
    let mut total = 0.0;
    for net in &netlist.nets {
        match hpwl_net(net, snapshot) {
            Ok(v) => total += v,
            Err(_) if placed_only => {}
            Err(e) => return Err(e),
        }
    }
    Ok(total)
}

/// Per-bin routing demand and centroid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CongestionGrid {
    /// Indexed `[ix, iy]`.
    pub demand: Array2<f64>,
    pub weights: Array2<f64>,
}

impl CongestionGrid {
    pub fn weighted_sum(&self) -> f64 {
        self.demand
            .iter()
            .zip(self.weights.iter())
            .map(|(d, w)| d * w)
            .sum()
    }
}

/// Weights falling linearly (Euclidean) from the die center to zero at the
/// farthest bin center.
pub fn congestion_weights(die: Rect) -> Array2<f64> {
    let n = CONGESTION_BINS;
    let (bw, bh) = (die.w / n as f64, die.h / n as f64);
    let center = die.center();
    let bin_center = |ix: usize, iy: usize| {
        Point::new(die.x + (ix as f64 + 0.5) * bw, die.y + (iy as f64 + 0.5) * bh)
    };
    let dist_max = bin_center(0, 0).distance(center);
    Array2::from_shape_fn((n, n), |(ix, iy)| {
        if dist_max > 0.0 {
            (1.0 - bin_center(ix, iy).distance(center) / dist_max).max(0.0)
        } else {
            1.0
        }
    })
}

/// RUDY demand map. Each net spreads `(w + h) / (w * h)` per unit area over
/// its bounding box; a box with zero width or height deposits its
/// half-perimeter in the bin holding its center.
pub fn congestion_grid(snapshot: &PlacementSnapshot, netlist: &Netlist) -> Result<CongestionGrid, MetricsError> {
    let n = CONGESTION_BINS;
    let die = snapshot.die;
    let (bw, bh) = (die.w / n as f64, die.h / n as f64);
    let mut demand = Array2::<f64>::zeros((n, n));
    let bin_of = |v: f64, origin: f64, step: f64| -> usize {
        let i = ((v - origin) / step).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(n - 1)
        }
    };
    for net in &netlist.nets {
        let (x0, y0, x1, y1) = net_bbox(net, snapshot)?;
        let (w, h) = (x1 - x0, y1 - y0);
        if w <= 0.0 || h <= 0.0 {
            if w + h > 0.0 {
                let ix = bin_of(0.5 * (x0 + x1), die.x, bw);
                let iy = bin_of(0.5 * (y0 + y1), die.y, bh);
                demand[[ix, iy]] += w + h;
            }
            continue;
        }
        let per_area = (w + h) / (w * h);
        let bbox = Rect::new(x0, y0, w, h);
        let (ix0, ix1) = (bin_of(x0, die.x, bw), bin_of(x1, die.x, bw));
        let (iy0, iy1) = (bin_of(y0, die.y, bh), bin_of(y1, die.y, bh));
        for ix in ix0..=ix1 {
            for iy in iy0..=iy1 {
                let bin = Rect::new(die.x + ix as f64 * bw, die.y + iy as f64 * bh, bw, bh);
                let a = bin.overlap_area(&bbox);
                if a > 0.0 {
                    demand[[ix, iy]] += a * per_area;
                }
            }
        }
    }
    Ok(CongestionGrid { demand, weights: congestion_weights(die) })
}

/// Weighted routing-demand sum over the grid.
pub fn congestion(snapshot: &PlacementSnapshot, netlist: &Netlist) -> Result<f64, MetricsError> {
    Ok(congestion_grid(snapshot, netlist)?.weighted_sum())
}

/// Mean nearest-neighbour center distance among the given macros, divided
/// by the die diagonal. A single macro gives 0.
pub fn density(centers: &[Point], die: Rect) -> Result<f64, MetricsError> {
    match centers.len() {
        0 => return Err(MetricsError::NoPlacedMacros),
        1 => return Ok(0.0),
        _ => {}
    }
    let mut sorted: Vec<Point> = centers.to_vec();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x));
    let mut sum = 0.0;
    for i in 0..sorted.len() {
        let p = sorted[i];
        let mut best = f64::INFINITY;
        // walk outwards in x until the x gap alone exceeds the best distance
        for q in sorted[i + 1..].iter() {
            if q.x - p.x >= best {
                break;
            }
            best = best.min(p.distance(*q));
        }
        for q in sorted[..i].iter().rev() {
            if p.x - q.x >= best {
                break;
            }
            best = best.min(p.distance(*q));
        }
        sum += best;
    }
    Ok(sum / sorted.len() as f64 / die.diagonal())
}

/// Every pair of the given cells whose rectangles intersect with positive
/// area, as `(a, b)` with `a < b` in netlist index order. Cells without a
/// position are ignored.
pub fn check_overlaps(snapshot: &PlacementSnapshot, netlist: &Netlist, cells: &[usize]) -> Vec<(usize, usize)> {
    let mut rects: Vec<(usize, Rect)> = cells
        .iter()
        .filter_map(|&c| snapshot.get(c).map(|p| (c, netlist.cells[c].rect_at(p))))
        .collect();
    rects.sort_by(|a, b| a.1.x.total_cmp(&b.1.x).then(a.0.cmp(&b.0)));
    let mut pairs = Vec::new();
    for i in 0..rects.len() {
        let (ci, ri) = rects[i];
        for &(cj, rj) in &rects[i + 1..] {
            if rj.x >= ri.x1() {
                break;
            }
            if ri.intersects(&rj) {
                pairs.push((ci.min(cj), ci.max(cj)));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

/// The key = value report printed by the evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub hpwl: f64,
    pub congestion: f64,
    pub density: f64,
    pub overlap_count: usize,
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "hpwl = {}", self.hpwl)?;
        writeln!(f, "congestion = {}", self.congestion)?;
        writeln!(f, "density = {}", self.density)?;
        writeln!(f, "overlap_count = {}", self.overlap_count)
    }
}

/// Evaluate a complete layout. Density is taken over movable macros;
/// overlaps are counted among macro pairs that involve at least one
/// movable macro.
pub fn evaluate(netlist: &Netlist, snapshot: &PlacementSnapshot) -> Result<MetricsReport, MetricsError> {
    let hpwl = total_wl(snapshot, netlist, false)?;
    let congestion = congestion(snapshot, netlist)?;
    let centers: Vec<Point> = netlist
        .movable_macros()
        .into_iter()
        .filter_map(|c| snapshot.get(c))
        .collect();
    let density = if centers.is_empty() { 0.0 } else { density(&centers, snapshot.die)? };
    let overlap_count = check_overlaps(snapshot, netlist, &netlist.macros())
        .into_iter()
        .filter(|&(a, b)| netlist.cells[a].movable || netlist.cells[b].movable)
        .count();
    Ok(MetricsReport { hpwl, congestion, density, overlap_count })
}
