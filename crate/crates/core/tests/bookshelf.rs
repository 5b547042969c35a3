mod common;

use std::fs;

use common::{aux, manifest};
use macroplace::bookshelf::{self, BookshelfError, ClassifyOptions};
use macroplace::geom::Rect;
use macroplace::metrics::{self, PlacementSnapshot};

fn check_manifest(name: &str) {
    let m = manifest(name);
    let n = bookshelf::parse_aux(aux(name)).unwrap();
    let s = n.stats();
    let get = |k: &str| m[k].as_u64().unwrap() as usize;
    assert_eq!(s.cells, get("cells"));
    assert_eq!(s.nets, get("nets"));
    assert_eq!(s.pins, get("pins"));
    assert_eq!(s.movable_macros, get("movable_macros"));
    assert_eq!(s.fixed_macros, get("fixed_macros"));
    assert_eq!(s.standard_cells, get("standard_cells"));
    assert_eq!(s.terminals, get("terminals"));
}

#[test]
fn tiny_matches_manifest() {
    check_manifest("tiny");
}

#[test]
fn synth5_matches_manifest() {
    check_manifest("synth5");
}

#[test]
fn tiny_die_and_hand_computed_hpwl() {
    let m = manifest("tiny");
    let n = bookshelf::parse_aux(aux("tiny")).unwrap();
    let d: Vec<f64> = m["die"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(n.die, Rect::from_corners(d[0], d[1], d[2], d[3]));
    let snap = PlacementSnapshot::from_netlist(&n);
    assert_eq!(metrics::total_wl(&snap, &n, false).unwrap(), m["hpwl"].as_f64().unwrap());
}

#[test]
fn pl_round_trip_preserves_positions() {
    let n = bookshelf::parse_aux(aux("synth5")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.pl");
    bookshelf::write_pl(&n, &path).unwrap();
    let entries = bookshelf::parse_pl(&path).unwrap();
    assert_eq!(entries.len(), n.cells.len());
    for e in entries {
        let c = &n.cells[n.cell_index(&e.name).unwrap()];
        let p = c.position.unwrap();
        assert_eq!((e.x, e.y), (p.x, p.y));
        assert_eq!(e.fixed, !c.movable);
    }
}

/// Copy a fixture into a temp dir, letting `edit` rewrite one file.
fn broken_tiny(file: &str, edit: impl Fn(&str) -> String) -> (tempfile::TempDir, std::path::PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    for e in fs::read_dir(common::fixture("tiny")).unwrap() {
        let p = e.unwrap().path();
        let name = p.file_name().unwrap().to_str().unwrap().to_string();
        let text = fs::read_to_string(&p).unwrap();
        let text = if name == file { edit(&text) } else { text };
        fs::write(dir.path().join(name), text).unwrap();
    }
    let aux = dir.path().join("tiny.aux");
    (dir, aux)
}

#[test]
fn missing_file_is_reported() {
    let (dir, aux) = broken_tiny("tiny.aux", |t| t.to_string());
    fs::remove_file(dir.path().join("tiny.nets")).unwrap();
    match bookshelf::parse_aux(&aux) {
        Err(BookshelfError::MissingFile { path }) => assert!(path.ends_with("tiny.nets")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn dangling_pin_reference_names_the_cell() {
    let (_dir, aux) = broken_tiny("tiny.nets", |t| t.replace("  b O\n", "  zz O\n"));
    match bookshelf::parse_aux(&aux) {
        Err(BookshelfError::DanglingPinReference { cell, line, .. }) => {
            assert_eq!(cell, "zz");
            assert_eq!(line, 15);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn count_mismatch_is_reported() {
    let (_dir, aux) = broken_tiny("tiny.nodes", |t| t.replace("NumNodes : 5", "NumNodes : 6"));
    match bookshelf::parse_aux(&aux) {
        Err(BookshelfError::CountMismatch { declared, found, .. }) => assert_eq!((declared, found), (6, 5)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_number_reports_line_and_column() {
    let (_dir, aux) = broken_tiny("tiny.nodes", |t| t.replace("  a 2 2", "  a 2 x2"));
    match bookshelf::parse_aux(&aux) {
        Err(BookshelfError::Syntax { line, column, token, .. }) => {
            assert_eq!((line, column), (7, 7));
            assert_eq!(token, "x2");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn threshold_controls_macro_count() {
    let opts = ClassifyOptions { macro_area_threshold: 13.0, ..Default::default() };
    let n = bookshelf::parse_aux_with(aux("tiny"), &opts).unwrap();
    // 48 < 13 * 4
    assert_eq!(n.stats().movable_macros, 0);
}
