mod common;

use common::{aux, cell, net, netlist};
use macroplace::bookshelf::{self, Netlist, Pin, PinDirection};
use macroplace::geom::Rect;
use macroplace::graph::{self, NetWeighting, METADATA_LEN};
use proptest::prelude::*;

/// `m` macros of distinct sizes followed by `s` unit standard cells, with
/// random nets over all of them.
fn design_strategy() -> impl Strategy<Value = Netlist> {
    (1usize..7, 13usize..25).prop_flat_map(|(m, s)| {
        let total = m + s;
        let pins = prop::collection::vec((0..total, any::<bool>()), 1..6);
        prop::collection::vec(pins, 0..25).prop_map(move |nets| {
            let mut cells = Vec::new();
            for i in 0..m {
                cells.push(cell(&format!("m{i}"), 10.0 + i as f64, 12.0 + (i % 3) as f64, true, None));
            }
            for i in 0..s {
                cells.push(cell(&format!("s{i}"), 1.0, 1.0, true, None));
            }
            let nets = nets
                .into_iter()
                .enumerate()
                .map(|(k, pins)| {
                    let pins = pins
                        .into_iter()
                        .map(|(c, input)| Pin {
                            cell: c,
                            dx: 0.0,
                            dy: 0.0,
                            direction: if input { PinDirection::Input } else { PinDirection::Output },
                        })
                        .collect();
                    net(&format!("n{k}"), pins)
                })
                .collect();
            netlist(cells, nets, Rect::new(0.0, 0.0, 200.0, 200.0))
        })
    })
}

proptest! {
    #[test]
    fn adjacency_counts_shared_nets(n in design_strategy()) {
        let g = graph::build_macro_graph(&n).unwrap();
        let k = g.n_macros();
        for i in 0..k {
            for j in 0..k {
                let expected = if i == j {
                    0.0
                } else {
                    n.nets
                        .iter()
                        .filter(|net| {
                            net.pins.iter().any(|p| p.cell == g.macro_cells[i])
                                && net.pins.iter().any(|p| p.cell == g.macro_cells[j])
                        })
                        .count() as f64
                };
                prop_assert_eq!(g.adjacency[[i, j]], expected);
            }
        }
    }

    #[test]
    fn features_are_min_max_normalized(n in design_strategy()) {
        let g = graph::build_macro_graph(&n).unwrap();
        let k = g.n_macros();
        let raw: Vec<[f64; 4]> = g
            .macro_cells
            .iter()
            .map(|&c| {
                let pins: Vec<&Pin> = n.nets.iter().flat_map(|net| &net.pins).filter(|p| p.cell == c).collect();
                let inputs = pins.iter().filter(|p| p.direction == PinDirection::Input).count() as f64;
                let frac = if pins.is_empty() { 0.0 } else { inputs / pins.len() as f64 };
                [n.cells[c].width, n.cells[c].height, pins.len() as f64, frac]
            })
            .collect();
        for f in 0..4 {
            let lo = raw.iter().map(|r| r[f]).fold(f64::INFINITY, f64::min);
            let hi = raw.iter().map(|r| r[f]).fold(f64::NEG_INFINITY, f64::max);
            for i in 0..k {
                let v = g.features[[i, f]];
                prop_assert!((0.0..=1.0).contains(&v));
                let expected = if hi > lo { (raw[i][f] - lo) / (hi - lo) } else { 0.0 };
                prop_assert!((v - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reordering_permutes_the_graph(n in design_strategy(), seed in any::<u64>()) {
        let g = graph::build_macro_graph(&n).unwrap();
        let k = g.n_macros();
        let mut perm: Vec<usize> = (0..k).collect();
        // Fisher-Yates with a tiny LCG so the permutation depends only on `seed`
        let mut state = seed | 1;
        for i in (1..k).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (state >> 33) as usize % (i + 1));
        }
        let order: Vec<usize> = perm.iter().map(|&p| g.macro_cells[p]).collect();
        let h = graph::build_graph_for_order(&n, order, NetWeighting::Unit).unwrap();
        for i in 0..k {
            for j in 0..k {
                prop_assert_eq!(h.adjacency[[i, j]], g.adjacency[[perm[i], perm[j]]]);
            }
            for f in 0..4 {
                prop_assert_eq!(h.features[[i, f]], g.features[[perm[i], f]]);
            }
        }
    }

    #[test]
    fn clique_weighting_divides_by_degree(n in design_strategy()) {
        let g = graph::build_macro_graph_with(&n, NetWeighting::Clique).unwrap();
        let k = g.n_macros();
        for i in 0..k {
            for j in (i + 1)..k {
                let expected: f64 = n
                    .nets
                    .iter()
                    .filter(|net| {
                        net.pins.iter().any(|p| p.cell == g.macro_cells[i])
                            && net.pins.iter().any(|p| p.cell == g.macro_cells[j])
                    })
                    .map(|net| {
                        let mut cells: Vec<usize> = net.pins.iter().map(|p| p.cell).collect();
                        cells.sort_unstable();
                        cells.dedup();
                        1.0 / (cells.len() - 1) as f64
                    })
                    .sum();
                prop_assert!((g.adjacency[[i, j]] - expected).abs() < 1e-12);
                prop_assert_eq!(g.adjacency[[i, j]], g.adjacency[[j, i]]);
            }
        }
    }
}

#[test]
fn synth5_order_is_by_descending_area() {
    let n = bookshelf::parse_aux(aux("synth5")).unwrap();
    let order = graph::placement_order(&n);
    let names: Vec<&str> = order.iter().map(|&c| n.cells[c].name.as_str()).collect();
    // 40x30, 36x36, 30x24, 24x24, 20x16
    assert_eq!(names, ["m1", "m0", "m2", "m3", "m4"]);
}

#[test]
fn metadata_is_bounded_on_fixtures() {
    for name in ["tiny", "synth5"] {
        let n = bookshelf::parse_aux(aux(name)).unwrap();
        let m = graph::build_metadata(&n);
        assert_eq!(m.0.len(), METADATA_LEN);
        assert!(m.0.iter().all(|v| (0.0..=1.0).contains(v)), "{name}: {:?}", m.0);
    }
}
