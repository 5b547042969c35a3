//! Standard-cell completion once all macros are fixed.
//!
//! The built-in placer minimizes a clique/star quadratic wirelength model
//! with conjugate gradient, diffuses overflow on a coarse bin grid, then
//! re-solves with the spread positions as anchors. [`ExternalPlacer`]
//! instead hands the layout to another tool through `.pl` files.

mod cg;
mod spread;
mod system;

use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bookshelf::{self, BookshelfError, Netlist};
use crate::geom::{Point, Rect};
use crate::metrics::PlacementSnapshot;
use crate::seed;

pub use cg::{conjugate_gradient, CgState, Diverged, SolveReport};
pub use spread::{SpreadError, SpreadGrid, SpreadReport};
pub use system::{build_system, CsrMatrix, QuadraticSystem, CLIQUE_MAX_PINS, REGULARIZATION};

#[derive(Debug, Error)]
pub enum StdPlaceError {
    #[error(transparent)]
    Diverged(#[from] Diverged),
    #[error(transparent)]
    Spread(#[from] SpreadError),
    #[error("external placer failed: {0}")]
    External(String),
    #[error(transparent)]
    Bookshelf(#[from] BookshelfError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadraticConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Spreading bins per axis; 0 picks a size from the cell count.
    pub bins: usize,
    pub max_overflow: f64,
    pub spread_iters: usize,
    /// Spring weight tying each cell to its spread position in the second solve.
    pub anchor_weight: f64,
}

impl Default for QuadraticConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            max_iters: 1000,
            bins: 0,
            max_overflow: 1.2,
            spread_iters: 100,
            anchor_weight: 1.0,
        }
    }
}

/// A completed layout plus one intermediate iterate sampled uniformly from
/// the optimization trajectory.
#[derive(Debug, Clone)]
pub struct StdPlacement {
    pub placement: PlacementSnapshot,
    pub sample: PlacementSnapshot,
    pub sample_index: usize,
    pub iterates: usize,
}

pub trait StandardCellPlacer: Send + Sync {
    /// `macros` holds positions for every macro and fixed cell; standard
    /// cells are placed around them.
    fn place(&self, netlist: &Netlist, macros: &PlacementSnapshot, seed: u64) -> Result<StdPlacement, StdPlaceError>;
}

/// Built-in quadratic placer.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticPlacer {
    pub config: QuadraticConfig,
}

impl QuadraticPlacer {
    pub fn new(config: QuadraticConfig) -> Self {
        Self { config }
    }
}

impl StandardCellPlacer for QuadraticPlacer {
    fn place(&self, netlist: &Netlist, macros: &PlacementSnapshot, seed: u64) -> Result<StdPlacement, StdPlaceError> {
        place_std_cells(netlist, macros, &self.config, seed)
    }
}

/// Keeps one item of a stream, each with equal probability.
struct Reservoir<R: Rng> {
    rng: R,
    seen: usize,
    index: usize,
    positions: Vec<Point>,
}

impl<R: Rng> Reservoir<R> {
    fn offer(&mut self, make: impl FnOnce() -> Vec<Point>) {
        self.seen += 1;
        if self.rng.gen_range(0..self.seen) == 0 {
            self.index = self.seen - 1;
            self.positions = make();
        }
    }
}

fn obstacles(netlist: &Netlist, macros: &PlacementSnapshot) -> Vec<Rect> {
    netlist
        .cells
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.is_movable_standard() && c.area() > 0.0)
        .filter_map(|(i, c)| macros.get(i).map(|p| c.rect_at(p)))
        .filter(|r| r.overlap_area(&netlist.die) > 0.0)
        .collect()
}

fn auto_bins(cells: usize) -> usize {
    ((cells as f64 / 4.0).sqrt().round() as usize).clamp(4, 256)
}

/// Lockstep x/y CG solve, offering each iterate to the reservoir.
fn solve_axes<R: Rng>(
    system: &QuadraticSystem,
    x0: Vec<f64>,
    y0: Vec<f64>,
    config: &QuadraticConfig,
    reservoir: &mut Reservoir<R>,
) -> Result<(Vec<f64>, Vec<f64>), StdPlaceError> {
    let a = &system.matrix;
    let ncells = system.cells.len();
    let mut sx = CgState::new(a, &system.rhs_x, x0);
    let mut sy = CgState::new(a, &system.rhs_y, y0);
    let mut iters = 0;
    loop {
        let done_x = sx.converged(config.tol);
        let done_y = sy.converged(config.tol);
        if (done_x && done_y) || iters >= config.max_iters {
            break;
        }
        if !done_x && !sx.step(a) {
            return Err(Diverged { iterations: sx.iterations }.into());
        }
        if !done_y && !sy.step(a) {
            return Err(Diverged { iterations: sy.iterations }.into());
        }
        iters += 1;
        reservoir.offer(|| (0..ncells).map(|i| Point::new(sx.x[i], sy.x[i])).collect());
    }
    Ok((sx.x, sy.x))
}

/// Place all movable standard cells around the fixed macros.
pub fn place_std_cells(
    netlist: &Netlist,
    macros: &PlacementSnapshot,
    config: &QuadraticConfig,
    seed: u64,
) -> Result<StdPlacement, StdPlaceError> {
    let system = build_system(netlist, macros);
    let ncells = system.cells.len();
    if ncells == 0 {
        return Ok(StdPlacement {
            placement: macros.clone(),
            sample: macros.clone(),
            sample_index: 0,
            iterates: 0,
        });
    }
    let die = netlist.die;
    let areas: Vec<f64> = system.cells.iter().map(|&c| netlist.cells[c].area()).collect();
    let bins = if config.bins == 0 { auto_bins(ncells) } else { config.bins };
    let grid = SpreadGrid::new(die, bins, bins, obstacles(netlist, macros));

    let nvars = system.num_vars();
    let mut reservoir = Reservoir {
        rng: seed::rng(seed, seed::stream::STD_PLACE, 0),
        seen: 0,
        index: 0,
        positions: vec![system.center; ncells],
    };
    // the starting layout (everything at the die center) is iterate 0
    reservoir.offer(|| vec![system.center; ncells]);

    let (x, y) = solve_axes(&system, vec![system.center.x; nvars], vec![system.center.y; nvars], config, &mut reservoir)?;
    let mut positions: Vec<Point> = (0..ncells).map(|i| die.clamp_point(Point::new(x[i], y[i]))).collect();
    grid.spread(&mut positions, &areas, config.max_overflow, config.spread_iters, |p| {
        reservoir.offer(|| p.to_vec())
    })?;

    let mut anchored = system.clone();
    anchored.add_anchors(&positions, config.anchor_weight);
    let mut x0 = x;
    let mut y0 = y;
    for (i, p) in positions.iter().enumerate() {
        x0[i] = p.x;
        y0[i] = p.y;
    }
    let (x, y) = solve_axes(&anchored, x0, y0, config, &mut reservoir)?;
    let mut positions: Vec<Point> = (0..ncells).map(|i| die.clamp_point(Point::new(x[i], y[i]))).collect();
    grid.evict(&mut positions)?;

    let mut placement = macros.clone();
    for (i, &c) in system.cells.iter().enumerate() {
        placement.set(c, positions[i]);
    }
    let mut sample = macros.clone();
    for (i, &c) in system.cells.iter().enumerate() {
        sample.set(c, reservoir.positions[i]);
    }
    Ok(StdPlacement {
        placement,
        sample,
        sample_index: reservoir.index,
        iterates: reservoir.seen,
    })
}

/// Delegates standard-cell placement to an external program.
///
/// The program runs in `work_dir` after `macros_fixed.pl` has been written
/// there (macros flagged `/FIXED`, unplaced standard cells at the die
/// center) and must leave its result in `out.pl`. The literal `{work}` in
/// any argument is replaced by the work directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalPlacer {
    pub command: Vec<String>,
    pub work_dir: PathBuf,
    pub timeout_secs: f64,
}

impl StandardCellPlacer for ExternalPlacer {
    fn place(&self, netlist: &Netlist, macros: &PlacementSnapshot, _seed: u64) -> Result<StdPlacement, StdPlaceError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| StdPlaceError::External("empty command".into()))?;
        std::fs::create_dir_all(&self.work_dir).map_err(|e| StdPlaceError::External(e.to_string()))?;
        let mut handoff = netlist.clone();
        let center = netlist.die.center();
        for (i, cell) in handoff.cells.iter_mut().enumerate() {
            let p = macros.get(i).unwrap_or(center);
            cell.position = Some(p.translate(-0.5 * cell.width, -0.5 * cell.height));
            if cell.is_macro() {
                cell.movable = false;
            }
        }
        bookshelf::write_pl(&handoff, self.work_dir.join("macros_fixed.pl"))?;
        let out_path = self.work_dir.join("out.pl");
        let _ = std::fs::remove_file(&out_path);

        let work = self.work_dir.to_string_lossy();
        let mut child = Command::new(program)
            .args(args.iter().map(|a| a.replace("{work}", &work)))
            .current_dir(&self.work_dir)
            .stdin(Stdio::null())
            .spawn()
            .map_err(|e| StdPlaceError::External(format!("cannot start `{program}`: {e}")))?;
        let deadline = Instant::now() + Duration::from_secs_f64(self.timeout_secs);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if Instant::now() >= deadline => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(StdPlaceError::External(format!("timed out after {} s", self.timeout_secs)));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
                Err(e) => return Err(StdPlaceError::External(e.to_string())),
            }
        };
        if !status.success() {
            return Err(StdPlaceError::External(format!("`{program}` exited with {status}")));
        }

        let mut placement = macros.clone();
        for entry in bookshelf::parse_pl(&out_path)? {
            let Some(i) = netlist.cell_index(&entry.name) else { continue };
            let cell = &netlist.cells[i];
            if cell.is_movable_standard() {
                placement.set(i, Point::new(entry.x + 0.5 * cell.width, entry.y + 0.5 * cell.height));
            }
        }
        if let Some(i) = placement.positions.iter().position(Option::is_none) {
            return Err(StdPlaceError::External(format!("out.pl lacks cell `{}`", netlist.cells[i].name)));
        }
        Ok(StdPlacement {
            sample: placement.clone(),
            placement,
            sample_index: 0,
            iterates: 1,
        })
    }
}
