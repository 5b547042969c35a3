mod common;

use common::{cell, net, netlist, pin};
use macroplace::bookshelf::Netlist;
use macroplace::geom::{Point, Rect};
use macroplace::metrics::{self, PlacementSnapshot, CONGESTION_BINS};
use proptest::prelude::*;

/// `n` unit cells on a 100x100 die, all movable, with the given nets.
fn unit_design(n: usize, nets: Vec<Vec<(usize, f64, f64)>>) -> Netlist {
    let cells = (0..n).map(|i| cell(&format!("c{i}"), 1.0, 1.0, true, None)).collect();
    let nets = nets
        .into_iter()
        .enumerate()
        .map(|(k, pins)| net(&format!("n{k}"), pins.into_iter().map(|(c, dx, dy)| pin(c, dx, dy)).collect()))
        .collect();
    netlist(cells, nets, Rect::new(0.0, 0.0, 100.0, 100.0))
}

/// Widest pin pair per axis.
fn brute_hpwl(pins: &[Point]) -> f64 {
    let mut wx = 0.0f64;
    let mut wy = 0.0f64;
    for a in pins {
        for b in pins {
            wx = wx.max(b.x - a.x);
            wy = wy.max(b.y - a.y);
        }
    }
    wx + wy
}

fn net_strategy() -> impl Strategy<Value = (Vec<Point>, Vec<(f64, f64)>)> {
    (1usize..=12).prop_flat_map(|k| {
        (
            prop::collection::vec((0.0..100.0f64, 0.0..100.0f64).prop_map(|(x, y)| Point::new(x, y)), k),
            prop::collection::vec((-0.5..0.5f64, -0.5..0.5f64), k),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn hpwl_matches_pairwise_scan((centers, offsets) in net_strategy()) {
        let k = centers.len();
        let n = unit_design(k, vec![(0..k).map(|i| (i, offsets[i].0, offsets[i].1)).collect()]);
        let mut snap = PlacementSnapshot::empty(k, n.die);
        for (i, c) in centers.iter().enumerate() {
            snap.set(i, *c);
        }
        let pins: Vec<Point> = (0..k).map(|i| centers[i].translate(offsets[i].0, offsets[i].1)).collect();
        prop_assert_eq!(metrics::hpwl_net(&n.nets[0], &snap).unwrap(), brute_hpwl(&pins));
    }
}

proptest! {
    #[test]
    fn total_wl_is_translation_invariant(
        (centers, offsets) in net_strategy(),
        split in 0usize..12,
        tx in -1e3..1e3f64,
        ty in -1e3..1e3f64,
    ) {
        let k = centers.len();
        let cut = split.min(k);
        let nets = vec![
            (0..cut).map(|i| (i, offsets[i].0, offsets[i].1)).collect::<Vec<_>>(),
            (cut..k).map(|i| (i, offsets[i].0, offsets[i].1)).collect(),
        ]
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect();
        let n = unit_design(k, nets);
        let mut a = PlacementSnapshot::empty(k, n.die);
        let mut b = PlacementSnapshot::empty(k, n.die);
        for (i, c) in centers.iter().enumerate() {
            a.set(i, *c);
            b.set(i, c.translate(tx, ty));
        }
        let wa = metrics::total_wl(&a, &n, false).unwrap();
        let wb = metrics::total_wl(&b, &n, false).unwrap();
        prop_assert!((wa - wb).abs() <= 1e-9 * wa.abs().max(1.0));
    }

    #[test]
    fn density_matches_all_pairs(points in prop::collection::vec((0.0..50.0f64, 0.0..80.0f64), 2..40)) {
        let die = Rect::new(0.0, 0.0, 50.0, 80.0);
        let pts: Vec<Point> = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let mut sum = 0.0;
        for (i, p) in pts.iter().enumerate() {
            let nn = pts
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| p.distance(*q))
                .fold(f64::INFINITY, f64::min);
            sum += nn;
        }
        let expected = sum / pts.len() as f64 / die.diagonal();
        let got = metrics::density(&pts, die).unwrap();
        prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1e-300));
    }

    #[test]
    fn density_scales_inversely_with_die(points in prop::collection::vec((0.0..50.0f64, 0.0..50.0f64), 2..20), s in 0.1..10.0f64) {
        let die = Rect::new(0.0, 0.0, 50.0, 50.0);
        let pts: Vec<Point> = points.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let scaled: Vec<Point> = pts.iter().map(|p| Point::new(p.x * s, p.y * s)).collect();
        let a = metrics::density(&pts, die).unwrap();
        let b = metrics::density(&scaled, Rect::new(0.0, 0.0, 50.0 * s, 50.0 * s)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1e-12));
    }

    #[test]
    fn overlaps_match_all_pairs(rects in prop::collection::vec((0.0..90.0f64, 0.0..90.0f64, 1.0..20.0f64, 1.0..20.0f64), 1..25)) {
        let cells = rects
            .iter()
            .enumerate()
            .map(|(i, &(_, _, w, h))| cell(&format!("m{i}"), w, h, true, None))
            .collect();
        let n = netlist(cells, Vec::new(), Rect::new(0.0, 0.0, 100.0, 100.0));
        let mut snap = PlacementSnapshot::empty(rects.len(), n.die);
        for (i, &(x, y, w, h)) in rects.iter().enumerate() {
            snap.set(i, Point::new(x + 0.5 * w, y + 0.5 * h));
        }
        let mut expected = Vec::new();
        for i in 0..rects.len() {
            for j in i + 1..rects.len() {
                let a = n.cells[i].rect_at(snap.get(i).unwrap());
                let b = n.cells[j].rect_at(snap.get(j).unwrap());
                let ox = a.x1().min(b.x1()) - a.x.max(b.x);
                let oy = a.y1().min(b.y1()) - a.y.max(b.y);
                if ox > 0.0 && oy > 0.0 {
                    expected.push((i, j));
                }
            }
        }
        let all: Vec<usize> = (0..rects.len()).collect();
        prop_assert_eq!(metrics::check_overlaps(&snap, &n, &all), expected);
    }

    #[test]
    fn congestion_matches_sampled_rudy(
        nets in prop::collection::vec(prop::collection::vec((0.0..100.0f64, 0.0..100.0f64), 2..6), 1..6)
    ) {
        // one cell per pin, pins at cell centers
        let mut centers = Vec::new();
        let mut net_pins = Vec::new();
        for pins in &nets {
            let mut p = Vec::new();
            for &(x, y) in pins {
                p.push((centers.len(), 0.0, 0.0));
                centers.push(Point::new(x, y));
            }
            net_pins.push(p);
        }
        let n = unit_design(centers.len(), net_pins);
        let mut snap = PlacementSnapshot::empty(centers.len(), n.die);
        for (i, c) in centers.iter().enumerate() {
            snap.set(i, *c);
        }
        let grid = metrics::congestion_grid(&snap, &n).unwrap();
        // direct per-bin interval overlap, independent of the bin range walk
        let bins = CONGESTION_BINS;
        let step = 100.0 / bins as f64;
        let mut expected = vec![vec![0.0; bins]; bins];
        for pins in &nets {
            let x0 = pins.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
            let x1 = pins.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
            let y0 = pins.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
            let y1 = pins.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
            let (w, h) = (x1 - x0, y1 - y0);
            for (ix, col) in expected.iter_mut().enumerate() {
                for (iy, v) in col.iter_mut().enumerate() {
                    let ox = (x1.min((ix + 1) as f64 * step) - x0.max(ix as f64 * step)).max(0.0);
                    let oy = (y1.min((iy + 1) as f64 * step) - y0.max(iy as f64 * step)).max(0.0);
                    *v += ox * oy * (w + h) / (w * h);
                }
            }
        }
        for ix in 0..bins {
            for iy in 0..bins {
                let e = expected[ix][iy];
                prop_assert!((grid.demand[[ix, iy]] - e).abs() <= 1e-9 * e.max(1.0), "{} {}", ix, iy);
            }
        }
        // total demand of a fully on-die net is its half-perimeter
        let total: f64 = grid.demand.sum();
        let hp: f64 = nets.iter().map(|pins| {
            let xs = pins.iter().map(|p| p.0);
            let ys = pins.iter().map(|p| p.1);
            (xs.clone().fold(f64::NEG_INFINITY, f64::max) - xs.fold(f64::INFINITY, f64::min))
                + (ys.clone().fold(f64::NEG_INFINITY, f64::max) - ys.fold(f64::INFINITY, f64::min))
        }).sum();
        prop_assert!((total - hp).abs() <= 1e-9 * hp.max(1.0));
    }
}

#[test]
fn congestion_is_centroid_weighted() {
    // the same 2x2 net costs more near the die center than near a corner
    let n = unit_design(2, vec![vec![(0, 0.0, 0.0), (1, 0.0, 0.0)]]);
    let place = |x: f64, y: f64| {
        let mut s = PlacementSnapshot::empty(2, n.die);
        s.set(0, Point::new(x, y));
        s.set(1, Point::new(x + 2.0, y + 2.0));
        metrics::congestion(&s, &n).unwrap()
    };
    let center = place(49.0, 49.0);
    let corner = place(1.0, 1.0);
    assert!(center > corner);
    assert!(corner >= 0.0);
}

#[test]
fn evaluate_reports_overlaps_between_movable_macros() {
    let cells = vec![
        cell("m0", 10.0, 10.0, true, None),
        cell("m1", 10.0, 10.0, true, None),
        cell("s", 1.0, 1.0, true, None),
        cell("s2", 1.0, 1.0, true, None),
        cell("s3", 1.0, 1.0, true, None),
    ];
    let n = netlist(cells, vec![net("a", vec![pin(0, 0.0, 0.0), pin(2, 0.0, 0.0)])], Rect::new(0.0, 0.0, 100.0, 100.0));
    assert_eq!(n.stats().movable_macros, 2);
    let mut s = PlacementSnapshot::empty(5, n.die);
    for i in 2..5 {
        s.set(i, Point::new(50.0, 50.0));
    }
    s.set(0, Point::new(10.0, 10.0));
    s.set(1, Point::new(20.0, 10.0));
    assert_eq!(metrics::evaluate(&n, &s).unwrap().overlap_count, 0);
    s.set(1, Point::new(19.0, 10.0));
    let r = metrics::evaluate(&n, &s).unwrap();
    assert_eq!(r.overlap_count, 1);
    assert!((r.density - 9.0 / (100.0f64 * 2f64.sqrt())).abs() < 1e-15);
}

#[test]
fn unplaced_endpoint_is_an_error_unless_skipped() {
    let n = unit_design(3, vec![vec![(0, 0.0, 0.0), (1, 0.0, 0.0)], vec![(1, 0.0, 0.0), (2, 0.0, 0.0)]]);
    let mut s = PlacementSnapshot::empty(3, n.die);
    s.set(0, Point::new(0.0, 0.0));
    s.set(1, Point::new(3.0, 4.0));
    assert!(metrics::total_wl(&s, &n, false).is_err());
    assert_eq!(metrics::total_wl(&s, &n, true).unwrap(), 7.0);
}
