//! Writes the bundled `synth5` bookshelf design.
//!
//! Usage: `cargo run -p macroplace-core --example gen_synth -- <out_dir>`

use std::fmt::Write as _;
use std::path::PathBuf;

use macroplace::seed;
use rand::Rng;

const DIE: f64 = 200.0;
const ROW_HEIGHT: f64 = 2.0;
const STD_CELLS: usize = 200;
const MACROS: [(f64, f64); 5] = [(40.0, 30.0), (36.0, 36.0), (30.0, 24.0), (24.0, 24.0), (20.0, 16.0)];
/// Pads per macro cluster, placed along the die boundary.
const PADS: [(f64, f64); 12] = [
    (0.0, 20.0),
    (0.0, 60.0),
    (20.0, 0.0),
    (100.0, 0.0),
    (180.0, 0.0),
    (199.0, 40.0),
    (199.0, 120.0),
    (199.0, 180.0),
    (150.0, 199.0),
    (80.0, 199.0),
    (20.0, 199.0),
    (0.0, 140.0),
];

fn main() -> std::io::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "synth5".into()));
    std::fs::create_dir_all(&out)?;
    let mut rng = seed::rng(2024, 0, 0);
    let k = MACROS.len();

    let mut nodes = String::new();
    let n_nodes = k + STD_CELLS + PADS.len();
    writeln!(nodes, "UCLA nodes 1.0\n\nNumNodes : {n_nodes}\nNumTerminals : {}", PADS.len()).unwrap();
    for (i, (w, h)) in MACROS.iter().enumerate() {
        writeln!(nodes, "m{i} {w} {h}").unwrap();
    }
    for i in 0..STD_CELLS {
        writeln!(nodes, "c{i} 2 2").unwrap();
    }
    for i in 0..PADS.len() {
        writeln!(nodes, "p{i} 1 1 terminal").unwrap();
    }

    // std cell i belongs to cluster i % k; pad j to cluster j % k
    let cluster_cells = |c: usize| (0..STD_CELLS).filter(move |i| i % k == c);
    let mut nets: Vec<Vec<(String, char, f64, f64)>> = Vec::new();
    let macro_pin = |rng: &mut rand_chacha::ChaCha8Rng, m: usize, dir: char| {
        let (w, h) = MACROS[m];
        let dx = (rng.gen_range(-0.5..0.5f64) * w).round();
        let dy = (rng.gen_range(-0.5..0.5f64) * h).round();
        (format!("m{m}"), dir, dx, dy)
    };
    for c in 0..k {
        let members: Vec<usize> = cluster_cells(c).collect();
        // macro fans out to its cluster in small groups
        for chunk in members.chunks(4) {
            let mut net = vec![macro_pin(&mut rng, c, 'O')];
            net.extend(chunk.iter().map(|i| (format!("c{i}"), 'I', 0.0, 0.0)));
            nets.push(net);
        }
        // local std-cell chains
        for w in members.windows(2) {
            if rng.gen_bool(0.6) {
                nets.push(vec![(format!("c{}", w[0]), 'O', 0.0, 0.0), (format!("c{}", w[1]), 'I', 0.0, 0.0)]);
            }
        }
        // pads
        for (j, _) in PADS.iter().enumerate().filter(|(j, _)| j % k == c) {
            let i = members[rng.gen_range(0..members.len())];
            nets.push(vec![
                (format!("p{j}"), 'I', 0.0, 0.0),
                macro_pin(&mut rng, c, 'O'),
                (format!("c{i}"), 'I', 0.0, 0.0),
            ]);
        }
    }
    // ring of macro-to-macro buses plus a few cross-cluster std nets
    for c in 0..k {
        let d = (c + 1) % k;
        for _ in 0..3 {
            nets.push(vec![macro_pin(&mut rng, c, 'O'), macro_pin(&mut rng, d, 'I')]);
        }
    }
    for _ in 0..20 {
        let a = rng.gen_range(0..STD_CELLS);
        let b = rng.gen_range(0..STD_CELLS);
        if a != b {
            nets.push(vec![(format!("c{a}"), 'O', 0.0, 0.0), (format!("c{b}"), 'I', 0.0, 0.0)]);
        }
    }

    let pins: usize = nets.iter().map(Vec::len).sum();
    let mut nets_txt = String::new();
    writeln!(nets_txt, "UCLA nets 1.0\n\nNumNets : {}\nNumPins : {pins}\n", nets.len()).unwrap();
    for (n, net) in nets.iter().enumerate() {
        writeln!(nets_txt, "NetDegree : {} n{n}", net.len()).unwrap();
        for (cell, dir, dx, dy) in net {
            writeln!(nets_txt, "  {cell} {dir} : {dx} {dy}").unwrap();
        }
    }

    let mut pl = String::from("UCLA pl 1.0\n\n");
    for i in 0..k {
        writeln!(pl, "m{i} 0 0 : N").unwrap();
    }
    for i in 0..STD_CELLS {
        writeln!(pl, "c{i} 0 0 : N").unwrap();
    }
    for (j, (x, y)) in PADS.iter().enumerate() {
        writeln!(pl, "p{j} {x} {y} : N /FIXED").unwrap();
    }

    let rows = (DIE / ROW_HEIGHT) as usize;
    let mut scl = format!("UCLA scl 1.0\n\nNumRows : {rows}\n\n");
    for r in 0..rows {
        writeln!(
            scl,
            "CoreRow Horizontal\n  Coordinate : {}\n  Height : {ROW_HEIGHT}\n  Sitewidth : 1\n  Sitespacing : 1\n  Siteorient : N\n  Sitesymmetry : Y\n  SubrowOrigin : 0 NumSites : {}\nEnd",
            r as f64 * ROW_HEIGHT,
            DIE as usize
        )
        .unwrap();
    }

    std::fs::write(out.join("synth5.aux"), "RowBasedPlacement : synth5.nodes synth5.nets synth5.pl synth5.scl\n")?;
    std::fs::write(out.join("synth5.nodes"), nodes)?;
    std::fs::write(out.join("synth5.nets"), nets_txt)?;
    std::fs::write(out.join("synth5.pl"), pl)?;
    std::fs::write(out.join("synth5.scl"), scl)?;
    let manifest = serde_json::json!({
        "cells": n_nodes,
        "nets": nets.len(),
        "pins": pins,
        "movable_macros": k,
        "fixed_macros": 0,
        "standard_cells": STD_CELLS,
        "terminals": PADS.len(),
    });
    std::fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest).unwrap() + "\n")?;
    Ok(())
}
