//! Sequential macro-placement environment.
//!
//! The die is divided into a `W x W` action grid. Each step places the next
//! macro (in [`placement_order`](crate::graph::placement_order)) with the
//! lower-left cell of its footprint at the chosen grid cell. Once every
//! macro is down, [`PlacementEnv::finalize`] completes the standard cells
//! and scores the full layout.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bookshelf::Netlist;
use crate::geom::{Point, Rect};
use crate::graph::{self, GraphError, MacroGraph, NetlistMetadata};
use crate::metrics::{self, MetricsError, PlacementSnapshot};
use crate::seed;
use crate::stdplace::{StandardCellPlacer, StdPlaceError};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("macro {0} does not fit on the die")]
    MacroTooLarge(usize),
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("episode is not complete")]
    EpisodeIncomplete,
    #[error("action {0} is outside the {1}x{1} grid")]
    InvalidAction(usize, usize),
    #[error("macro overlaps remain: {0:?}")]
    OverlapRemains(Vec<(usize, usize)>),
    #[error("standard-cell placement failed: {0}")]
    StdPlacerFailure(#[from] StdPlaceError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    #[default]
    Gat,
    Gcn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    /// Action grid resolution per axis.
    pub grid_size: usize,
    pub alpha_t: f64,
    pub beta_t: f64,
    pub alpha_i: f64,
    pub beta_i: f64,
    pub illegal_penalty: f64,
    pub use_immediate_reward: bool,
    pub backbone: Backbone,
    pub seed: u64,
    /// Consecutive illegal actions tolerated before the episode aborts.
    pub max_illegal_streak: usize,
    /// Weight of the sampled-iterate wirelength bonus.
    pub exploration_weight: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            grid_size: 32,
            alpha_t: 1.0,
            beta_t: 0.5,
            alpha_i: 1.0,
            beta_i: 0.5,
            illegal_penalty: -1.0,
            use_immediate_reward: true,
            backbone: Backbone::Gat,
            seed: 0,
            max_illegal_streak: 10,
            exploration_weight: 0.1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidConfig(m.to_string()));
        if self.grid_size < 4 {
            return bad("grid_size must be at least 4");
        }
        if [self.alpha_t, self.beta_t, self.alpha_i, self.beta_i, self.exploration_weight]
            .iter()
            .any(|v| !(*v >= 0.0))
        {
            return bad("reward weights must be non-negative");
        }
        if !(self.illegal_penalty < 0.0) {
            return bad("illegal_penalty must be negative");
        }
        if self.max_illegal_streak == 0 {
            return bad("max_illegal_streak must be positive");
        }
        Ok(())
    }
}

/// One cell of the action grid; `ix` runs along x, `iy` along y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Action {
    pub ix: usize,
    pub iy: usize,
}

impl Action {
    /// Row-major index with rows along y.
    pub fn index(self, w: usize) -> usize {
        self.iy * w + self.ix
    }

    pub fn from_index(index: usize, w: usize) -> Self {
        Self { ix: index % w, iy: index / w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacedMacro {
    /// Position in the placement order.
    pub macro_id: usize,
    pub cell: usize,
    pub action: Action,
    pub center: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementState {
    pub grid_size: usize,
    /// Row-major `W x W`, true where a placed or fixed macro covers the cell.
    pub occupancy: Vec<bool>,
    pub placed: Vec<PlacedMacro>,
    /// Index into the placement order of the macro to place next.
    pub next_macro: usize,
    pub illegal_streak: usize,
    pub done: bool,
    pub aborted: bool,
    /// Immediate reward of the current partial layout, once a macro is placed.
    pub immediate_reward: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionMask {
    pub grid_size: usize,
    pub legal: Vec<bool>,
}

impl ActionMask {
    pub fn is_legal(&self, a: Action) -> bool {
        a.ix < self.grid_size && a.iy < self.grid_size && self.legal[a.index(self.grid_size)]
    }

    pub fn count(&self) -> usize {
        self.legal.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.legal.iter().any(|&b| b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    /// Immediate reward of the layout after the step (legal steps only).
    pub immediate_reward: Option<f64>,
    pub legal: bool,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: PlacementState,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

/// Scores of a completed episode.
#[derive(Debug, Clone)]
pub struct Finalized {
    pub snapshot: PlacementSnapshot,
    pub wirelength: f64,
    pub congestion: f64,
    /// `-alpha_t * WL - beta_t * C` on the complete layout.
    pub overall_reward: f64,
    pub sample_wirelength: f64,
    /// `-exploration_weight * alpha_t * WL(sample)`.
    pub exploration_bonus: f64,
}

/// One line of an episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub macro_id: usize,
    pub action: Action,
    pub reward: f64,
    pub immediate_reward: Option<f64>,
    pub legal: bool,
}

pub fn write_trace(records: &[TraceRecord], mut out: impl Write) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        writeln!(out)?;
    }
    Ok(())
}

pub struct PlacementEnv {
    netlist: Arc<Netlist>,
    graph: Arc<MacroGraph>,
    metadata: NetlistMetadata,
    config: EnvConfig,
    cell_w: f64,
    cell_h: f64,
    /// Footprint size in grid cells per macro (placement order).
    footprints: Vec<(usize, usize)>,
    base_occupancy: Vec<bool>,
    /// Nets with no movable standard-cell endpoint.
    macro_nets: Vec<usize>,
    fixed_snapshot: PlacementSnapshot,
    state: PlacementState,
    episode_seed: u64,
    steps: usize,
    trace: Option<Vec<TraceRecord>>,
}

/// Smallest number of grid cells of size `step` covering `size`.
fn footprint_cells(size: f64, step: f64) -> usize {
    let mut n = (size / step).ceil().max(1.0) as usize;
    while (n as f64) * step < size {
        n += 1;
    }
    while n > 1 && ((n - 1) as f64) * step >= size {
        n -= 1;
    }
    n
}

/// Center of a span `[lo, hi]` such that `[c - w/2, (c - w/2) + w]` stays
/// inside it in floating point, also after a round trip through the
/// lower-left corner (`x = c - w/2`, `c' = x + w/2`). When `w` fills the
/// span to the last ulp this may be unsatisfiable and the result can stick
/// out by one ulp.
fn snap_center(lo: f64, hi: f64, w: f64) -> f64 {
    let mut c = 0.5 * (lo + hi);
    for _ in 0..32 {
        let x = c - 0.5 * w;
        let x2 = (x + 0.5 * w) - 0.5 * w;
        if x < lo || x2 < lo {
            c = c.next_up();
        } else if x + w > hi || x2 + w > hi {
            c = c.next_down();
        } else {
            break;
        }
    }
    c
}

impl PlacementEnv {
    pub fn new(netlist: Arc<Netlist>, config: EnvConfig) -> Result<Self, EnvError> {
        let graph = graph::build_macro_graph(&netlist)?;
        Self::with_graph(netlist, Arc::new(graph), config)
    }

    /// Use a prebuilt graph (its ordering becomes the placement order).
    pub fn with_graph(netlist: Arc<Netlist>, graph: Arc<MacroGraph>, config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let w = config.grid_size;
        let die = netlist.die;
        let (cell_w, cell_h) = (die.w / w as f64, die.h / w as f64);
        let mut footprints = Vec::with_capacity(graph.n_macros());
        for (m, &c) in graph.macro_cells.iter().enumerate() {
            let cell = &netlist.cells[c];
            let fp = (footprint_cells(cell.width, cell_w), footprint_cells(cell.height, cell_h));
            if fp.0 > w || fp.1 > w {
                return Err(EnvError::MacroTooLarge(m));
            }
            footprints.push(fp);
        }
        let macro_nets = netlist
            .nets
            .iter()
            .enumerate()
            .filter(|(_, n)| n.pins.iter().all(|p| !netlist.cells[p.cell].is_movable_standard()))
            .map(|(i, _)| i)
            .collect();
        let fixed_snapshot = PlacementSnapshot::fixed_only(&netlist);
        let mut env = Self {
            metadata: graph::build_metadata(&netlist),
            netlist,
            graph,
            cell_w,
            cell_h,
            footprints,
            base_occupancy: vec![false; w * w],
            macro_nets,
            fixed_snapshot,
            state: PlacementState {
                grid_size: w,
                occupancy: Vec::new(),
                placed: Vec::new(),
                next_macro: 0,
                illegal_streak: 0,
                done: false,
                aborted: false,
                immediate_reward: None,
            },
            episode_seed: config.seed,
            config,
            steps: 0,
            trace: None,
        };
        let fixed: Vec<Rect> = env
            .netlist
            .fixed_macros()
            .into_iter()
            .filter_map(|c| {
                let cell = &env.netlist.cells[c];
                cell.center().map(|p| cell.rect_at(p))
            })
            .collect();
        let mut base = vec![false; w * w];
        for r in &fixed {
            env.rasterize(r, &mut base);
        }
        env.base_occupancy = base;
        env.reset(env.config.seed);
        Ok(env)
    }

    pub fn netlist(&self) -> &Arc<Netlist> {
        &self.netlist
    }

    pub fn graph(&self) -> &Arc<MacroGraph> {
        &self.graph
    }

    pub fn metadata(&self) -> &NetlistMetadata {
        &self.metadata
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn state(&self) -> &PlacementState {
        &self.state
    }

    pub fn grid_size(&self) -> usize {
        self.config.grid_size
    }

    pub fn n_macros(&self) -> usize {
        self.graph.n_macros()
    }

    pub fn footprint(&self, macro_id: usize) -> (usize, usize) {
        self.footprints[macro_id]
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    /// Lower-left corner of grid cell `(ix, iy)`; shared by every geometric test.
    pub fn cell_origin(&self, ix: usize, iy: usize) -> Point {
        let die = self.netlist.die;
        Point::new(die.x + ix as f64 * self.cell_w, die.y + iy as f64 * self.cell_h)
    }

    /// Layout region of the footprint anchored at `action` for `macro_id`.
    pub fn footprint_region(&self, macro_id: usize, action: Action) -> Rect {
        let (fw, fh) = self.footprints[macro_id];
        let lo = self.cell_origin(action.ix, action.iy);
        let hi = self.cell_origin(action.ix + fw, action.iy + fh);
        Rect::from_corners(lo.x, lo.y, hi.x, hi.y)
    }

    /// Mark every grid cell that `r` overlaps with positive area.
    fn rasterize(&self, r: &Rect, grid: &mut [bool]) {
        let w = self.config.grid_size;
        let die = self.netlist.die;
        let range = |lo: f64, hi: f64, origin: f64, step: f64| {
            let a = ((lo - origin) / step).floor().max(0.0) as usize;
            let b = (((hi - origin) / step).ceil().max(0.0) as usize).min(w);
            a.min(w)..b
        };
        for ix in range(r.x, r.x1(), die.x, self.cell_w) {
            let (x0, x1) = (self.cell_origin(ix, 0).x, self.cell_origin(ix + 1, 0).x);
            if !(x0 < r.x1() && r.x < x1) {
                continue;
            }
            for iy in range(r.y, r.y1(), die.y, self.cell_h) {
                let (y0, y1) = (self.cell_origin(0, iy).y, self.cell_origin(0, iy + 1).y);
                if y0 < r.y1() && r.y < y1 {
                    grid[iy * w + ix] = true;
                }
            }
        }
    }

    /// Start a new episode. Occupancy holds only fixed macros.
    pub fn reset(&mut self, seed: u64) -> &PlacementState {
        self.state = PlacementState {
            grid_size: self.config.grid_size,
            occupancy: self.base_occupancy.clone(),
            placed: Vec::with_capacity(self.n_macros()),
            next_macro: 0,
            illegal_streak: 0,
            done: false,
            aborted: false,
            immediate_reward: None,
        };
        self.episode_seed = seed;
        self.steps = 0;
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        &self.state
    }

    /// Cells where the current macro's footprint fits on-die over free cells.
    pub fn legal_mask(&self) -> ActionMask {
        let w = self.config.grid_size;
        let mut legal = vec![false; w * w];
        if self.state.done {
            return ActionMask { grid_size: w, legal };
        }
        let (fw, fh) = self.footprints[self.state.next_macro];
        let occ = &self.state.occupancy;
        // prefix sums over occupied cells make each footprint test O(1)
        let mut sum = vec![0u32; (w + 1) * (w + 1)];
        for iy in 0..w {
            for ix in 0..w {
                sum[(iy + 1) * (w + 1) + ix + 1] = occ[iy * w + ix] as u32
                    + sum[iy * (w + 1) + ix + 1]
                    + sum[(iy + 1) * (w + 1) + ix]
                    - sum[iy * (w + 1) + ix];
            }
        }
        for iy in 0..=(w - fh) {
            for ix in 0..=(w - fw) {
                let (x1, y1) = (ix + fw, iy + fh);
                let covered = sum[y1 * (w + 1) + x1] + sum[iy * (w + 1) + ix]
                    - sum[iy * (w + 1) + x1]
                    - sum[y1 * (w + 1) + ix];
                legal[iy * w + ix] = covered == 0;
            }
        }
        ActionMask { grid_size: w, legal }
    }

    /// Center at which `macro_id` lands for `action`.
    pub fn macro_center(&self, macro_id: usize, action: Action) -> Point {
        let region = self.footprint_region(macro_id, action);
        let cell = &self.netlist.cells[self.graph.macro_cells[macro_id]];
        Point::new(
            snap_center(region.x, region.x + region.w, cell.width),
            snap_center(region.y, region.y + region.h, cell.height),
        )
    }

    /// Fixed cells plus the macros placed so far.
    pub fn macro_snapshot(&self) -> PlacementSnapshot {
        let mut s = self.fixed_snapshot.clone();
        for p in &self.state.placed {
            s.set(p.cell, p.center);
        }
        s
    }

    /// Wirelength over nets whose endpoints are all placed, in units of the
    /// die half-perimeter.
    pub fn partial_wirelength(&self, snapshot: &PlacementSnapshot) -> f64 {
        let die = self.netlist.die;
        let wl: f64 = self
            .macro_nets
            .iter()
            .filter_map(|&n| metrics::hpwl_net(&self.netlist.nets[n], snapshot).ok())
            .sum();
        wl / (die.w + die.h)
    }

    /// `-alpha_i * WL(placed) - beta_i * D(placed)` for the current state.
    pub fn immediate_reward(&self) -> f64 {
        let snapshot = self.macro_snapshot();
        let centers: Vec<Point> = self.state.placed.iter().map(|p| p.center).collect();
        let d = if centers.is_empty() {
            0.0
        } else {
            metrics::density(&centers, self.netlist.die).unwrap_or(0.0)
        };
        -self.config.alpha_i * self.partial_wirelength(&snapshot) - self.config.beta_i * d
    }

    fn abort_penalty(&self) -> f64 {
        2.0 * self.config.illegal_penalty * (self.n_macros() - self.state.next_macro) as f64
    }

    fn record(&mut self, macro_id: usize, action: Action, reward: f64, info: &StepInfo) {
        let step = self.steps;
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceRecord {
                step,
                macro_id,
                action,
                reward,
                immediate_reward: info.immediate_reward,
                legal: info.legal,
            });
        }
        self.steps += 1;
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.state.done {
            return Err(EnvError::EpisodeFinished);
        }
        let w = self.config.grid_size;
        if action.ix >= w || action.iy >= w {
            return Err(EnvError::InvalidAction(action.index(w), w));
        }
        let m = self.state.next_macro;
        if !self.legal_mask().is_legal(action) {
            self.state.illegal_streak += 1;
            let aborted = self.state.illegal_streak >= self.config.max_illegal_streak;
            let reward = if aborted {
                self.state.done = true;
                self.state.aborted = true;
                self.abort_penalty()
            } else {
                self.config.illegal_penalty
            };
            let info = StepInfo { immediate_reward: None, legal: false, aborted };
            self.record(m, action, reward, &info);
            return Ok(StepOutcome { state: self.state.clone(), reward, done: aborted, info });
        }

        let (fw, fh) = self.footprints[m];
        for iy in action.iy..action.iy + fh {
            for ix in action.ix..action.ix + fw {
                self.state.occupancy[iy * w + ix] = true;
            }
        }
        let center = self.macro_center(m, action);
        self.state.placed.push(PlacedMacro {
            macro_id: m,
            cell: self.graph.macro_cells[m],
            action,
            center,
        });
        self.state.next_macro += 1;
        self.state.illegal_streak = 0;
        let after = self.immediate_reward();
        let reward = match self.state.immediate_reward {
            Some(before) if self.config.use_immediate_reward => {
                let delta = after - before;
                delta.signum() * delta * delta
            }
            _ => 0.0,
        };
        self.state.immediate_reward = Some(after);
        self.state.done = self.state.next_macro == self.n_macros();
        let info = StepInfo { immediate_reward: Some(after), legal: true, aborted: false };
        self.record(m, action, reward, &info);
        Ok(StepOutcome { state: self.state.clone(), reward, done: self.state.done, info })
    }

    /// End the episode at a dead end (no legal action). Returns the abort
    /// penalty.
    pub fn abort(&mut self) -> Result<f64, EnvError> {
        if self.state.done {
            return Err(EnvError::EpisodeFinished);
        }
        let penalty = self.abort_penalty();
        self.state.done = true;
        self.state.aborted = true;
        Ok(penalty)
    }

    /// Macro pairs that overlap, ignoring pairs of fixed macros.
    pub fn macro_overlaps(&self, snapshot: &PlacementSnapshot) -> Vec<(usize, usize)> {
        metrics::check_overlaps(snapshot, &self.netlist, &self.netlist.macros())
            .into_iter()
            .filter(|&(a, b)| self.netlist.cells[a].movable || self.netlist.cells[b].movable)
            .collect()
    }

    /// Place standard cells and score the complete layout.
    pub fn finalize(&self, placer: &dyn StandardCellPlacer) -> Result<Finalized, EnvError> {
        if !self.state.done || self.state.aborted {
            return Err(EnvError::EpisodeIncomplete);
        }
        let macros = self.macro_snapshot();
        let overlaps = self.macro_overlaps(&macros);
        if !overlaps.is_empty() {
            return Err(EnvError::OverlapRemains(overlaps));
        }
        let std = placer.place(&self.netlist, &macros, self.episode_seed)?;
        let wirelength = metrics::total_wl(&std.placement, &self.netlist, false)?;
        let congestion = metrics::congestion(&std.placement, &self.netlist)?;
        let sample_wirelength = metrics::total_wl(&std.sample, &self.netlist, false)?;
        let c = &self.config;
        Ok(Finalized {
            overall_reward: -c.alpha_t * wirelength - c.beta_t * congestion,
            exploration_bonus: -c.exploration_weight * c.alpha_t * sample_wirelength,
            snapshot: std.placement,
            wirelength,
            congestion,
            sample_wirelength,
        })
    }

    /// Total wirelength of a layout whose macros are placed uniformly at
    /// random among legal cells; used to normalize terminal rewards.
    pub fn random_baseline(&mut self, placer: &dyn StandardCellPlacer, seed: u64) -> Result<f64, EnvError> {
        let mut rng = seed::rng(seed, seed::stream::BASELINE, 0);
        self.reset(seed);
        while !self.state.done {
            let mask = self.legal_mask();
            let legal: Vec<usize> = (0..mask.legal.len()).filter(|&i| mask.legal[i]).collect();
            if legal.is_empty() {
                self.abort()?;
                break;
            }
            let a = legal[rng.gen_range(0..legal.len())];
            self.step(Action::from_index(a, self.config.grid_size))?;
        }
        let result = if self.state.aborted {
            // fall back to the die half-perimeter per net
            Ok(self.netlist.nets.len() as f64 * (self.netlist.die.w + self.netlist.die.h))
        } else {
            self.finalize(placer).map(|f| f.wirelength)
        };
        self.reset(self.config.seed);
        result
    }
}
