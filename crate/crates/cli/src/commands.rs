use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use macroplace::bookshelf::{self, BookshelfError, Netlist};
use macroplace::env::PlacementEnv;
use macroplace::metrics::{self, MetricsReport, PlacementSnapshot};
use macroplace::render;
use macroplace_rl::checkpoint;
use macroplace_rl::ppo::{greedy_episode, Actor, Trainer};
use macroplace_rl::GraphInput;
use serde::Serialize;

use crate::config::{existing, RunConfig};
use crate::error::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Other(format!("{}: {e}", path.display()))
}

fn out(w: &mut dyn Write, text: impl std::fmt::Display) -> Result<(), CliError> {
    write!(w, "{text}").map_err(|e| CliError::Other(e.to_string()))
}

pub fn load_netlist(config: &RunConfig) -> Result<Netlist, CliError> {
    Ok(bookshelf::parse_aux_with(config.aux()?, &config.classify)?)
}

fn make_env(config: &RunConfig, netlist: Netlist) -> Result<PlacementEnv, CliError> {
    PlacementEnv::new(Arc::new(netlist), config.env.clone()).map_err(|e| CliError::Config(e.to_string()))
}

fn out_dir(config: &RunConfig) -> Result<&Path, CliError> {
    let dir = config.paths.out_dir.as_path();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    Ok(dir)
}

pub fn checkpoint_path(config: &RunConfig) -> PathBuf {
    config.paths.checkpoint.clone().unwrap_or_else(|| config.paths.out_dir.join("policy.ckpt"))
}

/// Benchmark statistics as `key = value` lines.
pub fn cmd_stats(config: &RunConfig, w: &mut dyn Write) -> Result<(), CliError> {
    let netlist = load_netlist(config)?;
    let s = netlist.stats();
    out(
        w,
        format_args!(
            "design = {}\ncells = {}\nnets = {}\npins = {}\nmovable_macros = {}\nfixed_macros = {}\n\
             standard_cells = {}\nterminals = {}\ndesign_density = {}\n",
            netlist.name,
            s.cells,
            s.nets,
            s.pins,
            s.movable_macros,
            s.fixed_macros,
            s.standard_cells,
            s.terminals,
            s.design_density
        ),
    )
}

/// Overwrite cell positions from a `.pl` file and return the resulting
/// layout. Every movable cell must be listed.
pub fn load_placement(netlist: &mut Netlist, pl: &Path) -> Result<PlacementSnapshot, CliError> {
    let mut seen = vec![false; netlist.cells.len()];
    for e in bookshelf::parse_pl(existing(pl)?)? {
        let i = netlist
            .cell_index(&e.name)
            .ok_or_else(|| BookshelfError::Invalid(format!("{}: unknown cell `{}`", pl.display(), e.name)))?;
        netlist.cells[i].position = Some(macroplace::Point::new(e.x, e.y));
        seen[i] = true;
    }
    let missing: Vec<&str> = netlist
        .cells
        .iter()
        .zip(&seen)
        .filter(|(c, s)| c.movable && !**s)
        .map(|(c, _)| c.name.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(BookshelfError::UnplacedCell(missing.join(", ")).into());
    }
    Ok(PlacementSnapshot::from_netlist(netlist))
}

fn pl_path(config: &RunConfig) -> Result<&Path, CliError> {
    config
        .paths
        .pl
        .as_deref()
        .ok_or_else(|| CliError::Config("no placement given (pass PL or set paths.pl)".into()))
}

/// Metrics of a placement. Overlapping macros make this an error after the
/// report has been written.
pub fn cmd_evaluate(config: &RunConfig, w: &mut dyn Write) -> Result<MetricsReport, CliError> {
    let mut netlist = load_netlist(config)?;
    let snapshot = load_placement(&mut netlist, pl_path(config)?)?;
    let report = metrics::evaluate(&netlist, &snapshot).map_err(|e| CliError::Other(e.to_string()))?;
    out(w, report)?;
    if report.overlap_count > 0 {
        return Err(CliError::Illegal(format!("{} overlapping macro pairs", report.overlap_count)));
    }
    Ok(report)
}

#[derive(Serialize)]
struct RunMeta<'a> {
    design: &'a str,
    preset: Option<&'static str>,
    backbone: macroplace::env::Backbone,
    use_immediate_reward: bool,
    seed: u64,
    grid_size: usize,
    macros: usize,
    baseline_wl: f64,
    rounds_completed: usize,
    episodes: usize,
    config: &'a RunConfig,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Other(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

fn save_checkpoint(path: &Path, trainer: &Trainer) -> Result<(), CliError> {
    checkpoint::save(path, &trainer.params).map_err(|e| CliError::Training(format!("checkpoint {}: {e}", path.display())))
}

/// PPO training. The checkpoint is rewritten atomically after every round,
/// so a failure leaves the last good one in place.
pub fn cmd_train(config: &RunConfig, w: &mut dyn Write) -> Result<(), CliError> {
    let netlist = load_netlist(config)?;
    let name = netlist.name.clone();
    let env = make_env(config, netlist)?;
    let placer = config.stdplace.build()?;
    let dir = out_dir(config)?;
    let ckpt = checkpoint_path(config);
    let mut trainer = Trainer::new(env, config.policy.clone(), config.train.clone(), placer)
        .map_err(|e| CliError::Training(e.to_string()))?;
    save_checkpoint(&ckpt, &trainer)?;

    let meta = |t: &Trainer| RunMeta {
        design: &name,
        preset: config.preset.map(|p| p.name()),
        backbone: t.env.config().backbone,
        use_immediate_reward: t.env.config().use_immediate_reward,
        seed: config.seed,
        grid_size: t.env.grid_size(),
        macros: t.env.n_macros(),
        baseline_wl: t.baseline_wl,
        rounds_completed: t.round,
        episodes: t.terminal_returns.len(),
        config,
    };
    let meta_path = dir.join("run_meta.json");
    write_json(&meta_path, &meta(&trainer))?;

    let log_path = dir.join("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    while trainer.round < config.train.rounds {
        let stats = trainer.run_round().map_err(|e| CliError::Training(e.to_string()))?;
        save_checkpoint(&ckpt, &trainer)?;
        serde_json::to_writer(&mut log, &stats).map_err(|e| CliError::Other(e.to_string()))?;
        writeln!(log).and_then(|_| log.flush()).map_err(io_err(&log_path))?;
        write_json(&meta_path, &meta(&trainer))?;
        log::info!("round {} mean terminal return {:.4}", stats.round, stats.mean_terminal);
    }
    out(
        w,
        format_args!(
            "rounds = {}\nepisodes = {}\ncheckpoint = {}\nlog = {}\n",
            trainer.round,
            trainer.terminal_returns.len(),
            ckpt.display(),
            log_path.display()
        ),
    )
}

/// Copy movable-cell positions into `netlist` as lower-left corners.
/// Fixed cells keep the coordinates they were read with.
fn apply_movable(snapshot: &PlacementSnapshot, netlist: &mut Netlist) {
    for (i, p) in snapshot.positions.iter().enumerate() {
        if let (Some(p), true) = (p, netlist.cells[i].movable) {
            netlist.set_center(i, *p);
        }
    }
}

/// Paths written by [`cmd_place`].
#[derive(Debug, Clone)]
pub struct PlaceOutput {
    pub pl: PathBuf,
    pub svg: Option<PathBuf>,
    pub report: MetricsReport,
}

/// Greedy placement with a trained policy, then standard-cell completion.
///
/// The report is computed from the written lower-left coordinates, so
/// evaluating the emitted `.pl` gives identical numbers.
pub fn cmd_place(config: &RunConfig, svg: bool, w: &mut dyn Write) -> Result<PlaceOutput, CliError> {
    let mut netlist = load_netlist(config)?;
    let mut env = make_env(config, netlist.clone())?;
    let placer = config.stdplace.build()?;
    let ckpt = checkpoint_path(config);
    let params = checkpoint::load_compatible(existing(&ckpt)?, &config.policy)
        .map_err(|e| CliError::Config(format!("{}: {e}", ckpt.display())))?;
    let input = GraphInput::new(env.graph(), env.metadata());
    let actor = Actor { params: &params, input: &input, placer: placer.as_ref(), baseline_wl: 1.0 };
    let dir = out_dir(config)?;
    let pl = dir.join(format!("{}.pl", netlist.name));

    let (_, finalized) = greedy_episode(&mut env, &actor, config.seed).map_err(|e| CliError::Other(e.to_string()))?;
    let Some(fin) = finalized else {
        // dead end: dump what was placed
        for c in netlist.cells.iter_mut().filter(|c| c.movable) {
            c.position = None;
        }
        apply_movable(&env.macro_snapshot(), &mut netlist);
        bookshelf::write_pl_placed(&netlist, &pl)?;
        return Err(CliError::Illegal(format!(
            "no legal cell for macro {} of {}; partial layout in {}",
            env.state().next_macro,
            env.n_macros(),
            pl.display()
        )));
    };

    apply_movable(&fin.snapshot, &mut netlist);
    bookshelf::write_pl(&netlist, &pl)?;
    let snapshot = PlacementSnapshot::from_netlist(&netlist);
    let report = metrics::evaluate(&netlist, &snapshot).map_err(|e| CliError::Other(e.to_string()))?;
    let metrics_path = dir.join("metrics.txt");
    fs::write(&metrics_path, report.to_string()).map_err(io_err(&metrics_path))?;
    out(w, report)?;

    let svg_path = if svg {
        let path = dir.join(format!("{}.svg", netlist.name));
        let text = render::render_svg(&snapshot, &netlist, &config.render).map_err(|e| CliError::Other(e.to_string()))?;
        fs::write(&path, text).map_err(io_err(&path))?;
        Some(path)
    } else {
        None
    };
    if report.overlap_count > 0 {
        return Err(CliError::Illegal(format!("{} overlapping macro pairs", report.overlap_count)));
    }
    Ok(PlaceOutput { pl, svg: svg_path, report })
}

/// SVG of the benchmark's own layout, or of `paths.pl` when given.
pub fn cmd_render(config: &RunConfig, output: Option<&Path>, w: &mut dyn Write) -> Result<PathBuf, CliError> {
    let mut netlist = load_netlist(config)?;
    let snapshot = match config.paths.pl.as_deref() {
        Some(pl) => load_placement(&mut netlist, pl)?,
        None => PlacementSnapshot::from_netlist(&netlist),
    };
    let text = render::render_svg(&snapshot, &netlist, &config.render).map_err(|e| CliError::Other(e.to_string()))?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => out_dir(config)?.join(format!("{}.svg", netlist.name)),
    };
    fs::write(&path, text).map_err(io_err(&path))?;
    out(w, format_args!("svg = {}\n", path.display()))?;
    Ok(path)
}
