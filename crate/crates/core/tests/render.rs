mod common;

use common::{aux, cell, netlist};
use macroplace::bookshelf;
use macroplace::geom::{Point, Rect};
use macroplace::metrics::PlacementSnapshot;
use macroplace::render::{render_svg, RenderError, RenderStyle};

fn count(doc: &roxmltree::Document, tag: &str) -> usize {
    doc.descendants().filter(|n| n.has_tag_name(tag)).count()
}

fn attr(node: roxmltree::Node, name: &str) -> f64 {
    node.attribute(name).unwrap().parse().unwrap()
}

#[test]
fn fixture_counts_match_cells() {
    let n = bookshelf::parse_aux(aux("synth5")).unwrap();
    let mut s = PlacementSnapshot::from_netlist(&n);
    for (k, c) in n.macros().into_iter().enumerate() {
        s.set(c, Point::new(30.0 + 35.0 * k as f64, 100.0));
    }
    let svg = render_svg(&s, &n, &RenderStyle::default()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().attribute("version"), Some("1.1"));
    assert_eq!(count(&doc, "rect"), n.macros().len());
    assert_eq!(count(&doc, "circle"), n.movable_standard_cells().len());
}

#[test]
fn empty_design_draws_only_the_die() {
    let n = netlist(Vec::new(), Vec::new(), Rect::new(0.0, 0.0, 10.0, 10.0));
    let svg = render_svg(&PlacementSnapshot::empty(0, n.die), &n, &RenderStyle::default()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(count(&doc, "rect"), 0);
    assert_eq!(count(&doc, "circle"), 0);
    assert_eq!(count(&doc, "path"), 1);
}

#[test]
fn centered_macro_maps_to_canvas_center() {
    let cells = vec![
        cell("m", 40.0, 20.0, true, None),
        cell("a", 1.0, 1.0, true, None),
        cell("b", 1.0, 1.0, true, None),
    ];
    // wide die: letterboxed vertically
    let n = netlist(cells, Vec::new(), Rect::new(-50.0, 10.0, 200.0, 100.0));
    let mut s = PlacementSnapshot::empty(3, n.die);
    s.set(0, n.die.center());
    s.set(1, Point::new(-50.0, 10.0));
    s.set(2, Point::new(150.0, 110.0));
    let style = RenderStyle { canvas_px: 400, ..Default::default() };
    let svg = render_svg(&s, &n, &style).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let r = doc.descendants().find(|n| n.has_tag_name("rect")).unwrap();
    let (x, y, w, h) = (attr(r, "x"), attr(r, "y"), attr(r, "width"), attr(r, "height"));
    assert!((x + 0.5 * w - 200.0).abs() < 1e-3 && (y + 0.5 * h - 200.0).abs() < 1e-3);
    // uniform scale: 200 units -> 400 px
    assert!((w - 80.0).abs() < 1e-3 && (h - 40.0).abs() < 1e-3);
    let dots: Vec<(f64, f64)> = doc
        .descendants()
        .filter(|n| n.has_tag_name("circle"))
        .map(|c| (attr(c, "cx"), attr(c, "cy")))
        .collect();
    // lower-left die corner lands bottom-left, upper-right top-right
    assert_eq!(dots, [(0.0, 300.0), (400.0, 100.0)]);
}

#[test]
fn unplaced_macro_is_an_error() {
    let n = bookshelf::parse_aux(aux("synth5")).unwrap();
    let s = PlacementSnapshot::fixed_only(&n);
    assert!(matches!(render_svg(&s, &n, &RenderStyle::default()), Err(RenderError::UnplacedCell(_))));
    let tiny = RenderStyle { canvas_px: 32, ..Default::default() };
    assert_eq!(render_svg(&s, &n, &tiny), Err(RenderError::CanvasTooSmall(32)));
}

#[test]
fn dense_designs_get_shading_and_points() {
    let n = bookshelf::parse_aux(aux("synth5")).unwrap();
    let mut s = PlacementSnapshot::from_netlist(&n);
    for (k, c) in n.macros().into_iter().enumerate() {
        s.set(c, Point::new(30.0 + 35.0 * k as f64, 100.0));
    }
    let style = RenderStyle { dense_threshold: 100, congestion_overlay: true, ..Default::default() };
    let svg = render_svg(&s, &n, &style).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(count(&doc, "rect"), 5);
    assert_eq!(count(&doc, "circle"), 200);
    assert!(doc.descendants().any(|n| n.attribute("class") == Some("density")));
    assert!(doc.descendants().any(|n| n.attribute("class") == Some("congestion")));
}
