mod common;

use common::{aux, cell, net, netlist, pin};
use macroplace::bookshelf;
use macroplace::geom::{Point, Rect};
use macroplace::metrics::{self, PlacementSnapshot};
use macroplace::stdplace::{
    build_system, conjugate_gradient, place_std_cells, CsrMatrix, ExternalPlacer, QuadraticConfig, StandardCellPlacer,
    StdPlaceError, CLIQUE_MAX_PINS, REGULARIZATION,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting.
fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Random SPD matrix `M M^T + n I` scaled by random row/column factors,
/// kept sparse-ish by zeroing small entries of M.
fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let m: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..n)
                .map(|_| if rng.gen_bool(0.2) { rng.gen_range(-1.0..1.0) } else { 0.0 })
                .collect()
        })
        .collect();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = (0..n).map(|k| m[i][k] * m[j][k]).sum();
        }
        a[i][i] += rng.gen_range(0.1..2.0);
    }
    a
}

fn to_csr(a: &[Vec<f64>]) -> CsrMatrix {
    let n = a.len();
    let mut t = Vec::new();
    for (i, row) in a.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                t.push((i, j, v));
            }
        }
    }
    CsrMatrix::from_triplets(n, t)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn cg_matches_dense_solve(seed in any::<u64>(), n in 1usize..=100) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, n);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let expected = dense_solve(a.clone(), b.clone());
        let r = conjugate_gradient(&to_csr(&a), &b, vec![0.0; n], 1e-13, 10 * n).unwrap();
        let diff: Vec<f64> = r.x.iter().zip(&expected).map(|(x, e)| x - e).collect();
        prop_assert!(norm(&diff) <= 1e-8 * norm(&expected), "{} vs {}", norm(&diff), norm(&expected));
        for w in r.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
    }
}

/// Direct wirelength energy of one axis for the cells in `xs`, using the
/// same clique/star weights and regularization as the assembled system.
fn energy(netlist: &macroplace::bookshelf::Netlist, fixed: &PlacementSnapshot, xs: &[f64], stars: &[f64], cells: &[usize]) -> f64 {
    let var = |c: usize| cells.iter().position(|&v| v == c);
    let mut e = 0.0;
    let mut star = 0;
    for net in &netlist.nets {
        let mut pts = Vec::new();
        for p in &net.pins {
            if let Some(v) = var(p.cell) {
                pts.push(xs[v] + p.dx);
            } else if let Some(q) = fixed.get(p.cell) {
                pts.push(q.x + p.dx);
            }
        }
        let k = pts.len();
        if k < 2 || net.pins.iter().all(|p| var(p.cell).is_none()) {
            continue;
        }
        if k <= CLIQUE_MAX_PINS {
            let w = 1.0 / (k as f64 - 1.0);
            for a in 0..k {
                for b in a + 1..k {
                    e += 0.5 * w * (pts[a] - pts[b]).powi(2);
                }
            }
        } else {
            let w = k as f64 / (k as f64 - 1.0);
            let s = stars[star];
            star += 1;
            e += pts.iter().map(|p| 0.5 * w * (p - s).powi(2)).sum::<f64>();
        }
    }
    e
}

#[test]
fn assembled_system_is_the_wirelength_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let die = Rect::new(0.0, 0.0, 100.0, 100.0);
    let mut cells = vec![cell("M", 20.0, 20.0, false, Some(Point::new(10.0, 10.0)))];
    for i in 0..14 {
        cells.push(cell(&format!("s{i}"), 1.0, 1.0, true, None));
    }
    let mut nets = vec![net("big", (0..13).map(|c| pin(c, rng.gen_range(-0.5..0.5), 0.0)).collect())];
    for k in 0..10 {
        let deg = rng.gen_range(2..5);
        nets.push(net(&format!("n{k}"), (0..deg).map(|_| pin(rng.gen_range(0..15), rng.gen_range(-0.5..0.5), 0.0)).collect()));
    }
    let n = netlist(cells, nets, die);
    let fixed = PlacementSnapshot::fixed_only(&n);
    let sys = build_system(&n, &fixed);
    assert_eq!(sys.num_vars(), sys.cells.len() + 1);
    // every component touches the fixed macro through the 13-pin net
    let zero = vec![0.0; sys.num_vars()];
    let e0 = energy(&n, &fixed, &zero[..sys.cells.len()], &zero[sys.cells.len()..], &sys.cells);
    for _ in 0..5 {
        let x: Vec<f64> = (0..sys.num_vars()).map(|_| rng.gen_range(0.0..100.0)).collect();
        let e = energy(&n, &fixed, &x[..sys.cells.len()], &x[sys.cells.len()..], &sys.cells) - e0;
        let q = sys.objective(&x, &sys.rhs_x) - sys.objective(&zero, &sys.rhs_x);
        assert!((e - q).abs() < 1e-9 * e.abs().max(1.0), "{e} vs {q}");
    }
}

#[test]
fn floating_components_are_regularized_to_the_center() {
    let die = Rect::new(0.0, 0.0, 40.0, 20.0);
    let cells = vec![cell("a", 1.0, 1.0, true, None), cell("b", 1.0, 1.0, true, None)];
    let n = netlist(cells, vec![net("n", vec![pin(0, 0.0, 0.0), pin(1, 0.0, 0.0)])], die);
    let sys = build_system(&n, &PlacementSnapshot::fixed_only(&n));
    assert_eq!(sys.matrix.get(0, 0), 1.0 + REGULARIZATION);
    let r = conjugate_gradient(&sys.matrix, &sys.rhs_x, vec![0.0; 2], 1e-14, 100).unwrap();
    // condition number ~1e6, so only ~1e-10 relative accuracy is meaningful
    assert!((r.x[0] - 20.0).abs() < 1e-7 && (r.x[1] - 20.0).abs() < 1e-7, "{r:?}");
}

fn synth5_with_macros() -> (macroplace::bookshelf::Netlist, PlacementSnapshot) {
    let n = bookshelf::parse_aux(aux("synth5")).unwrap();
    let mut s = PlacementSnapshot::fixed_only(&n);
    let spots = [(30.0, 30.0), (150.0, 40.0), (40.0, 160.0), (160.0, 160.0), (100.0, 100.0)];
    for (&c, &(x, y)) in macroplace::graph::placement_order(&n).iter().zip(&spots) {
        s.set(c, Point::new(x, y));
    }
    (n, s)
}

#[test]
fn quadratic_placer_completes_a_legal_layout() {
    let (n, macros) = synth5_with_macros();
    let cfg = QuadraticConfig::default();
    let out = place_std_cells(&n, &macros, &cfg, 5).unwrap();
    assert!(out.placement.is_complete());
    let obstacles: Vec<Rect> = n.macros().into_iter().map(|c| n.cells[c].rect_at(macros.get(c).unwrap())).collect();
    for c in n.movable_standard_cells() {
        let p = out.placement.get(c).unwrap();
        assert!(n.die.contains(p), "{p:?}");
        assert!(!obstacles.iter().any(|r| r.contains_strictly(p)), "{} at {p:?}", n.cells[c].name);
    }
    for c in n.macros() {
        assert_eq!(out.placement.get(c), macros.get(c));
    }
    assert!(out.sample_index < out.iterates);
    // wirelength-driven: far better than leaving everything at the center
    let mut center = macros.clone();
    for c in n.movable_standard_cells() {
        center.set(c, n.die.center());
    }
    let wl = metrics::total_wl(&out.placement, &n, false).unwrap();
    let wl_center = metrics::total_wl(&center, &n, false).unwrap();
    assert!(wl < wl_center, "{wl} vs {wl_center}");
}

#[test]
fn quadratic_placer_is_deterministic_per_seed() {
    let (n, macros) = synth5_with_macros();
    let cfg = QuadraticConfig::default();
    let a = place_std_cells(&n, &macros, &cfg, 9).unwrap();
    let b = place_std_cells(&n, &macros, &cfg, 9).unwrap();
    assert_eq!(a.placement, b.placement);
    assert_eq!(a.sample_index, b.sample_index);
    let picks: std::collections::HashSet<usize> =
        (0..20).map(|s| place_std_cells(&n, &macros, &cfg, s).unwrap().sample_index).collect();
    assert!(picks.len() > 1);
}

#[test]
fn external_placer_round_trips_through_pl_files() {
    let (n, macros) = synth5_with_macros();
    let dir = tempfile::tempdir().unwrap();
    let placer = ExternalPlacer {
        command: vec!["sh".into(), "-c".into(), "cp {work}/macros_fixed.pl {work}/out.pl".into()],
        work_dir: dir.path().to_path_buf(),
        timeout_secs: 30.0,
    };
    let out = placer.place(&n, &macros, 0).unwrap();
    for c in n.movable_standard_cells() {
        assert_eq!(out.placement.get(c), Some(n.die.center()));
    }
    let fixed = std::fs::read_to_string(dir.path().join("macros_fixed.pl")).unwrap();
    assert!(fixed.lines().any(|l| l.starts_with("m0 ") && l.ends_with("/FIXED")));
}

#[test]
fn external_placer_failures_are_reported() {
    let (n, macros) = synth5_with_macros();
    let dir = tempfile::tempdir().unwrap();
    let run = |cmd: &str, timeout| {
        ExternalPlacer {
            command: vec!["sh".into(), "-c".into(), cmd.into()],
            work_dir: dir.path().to_path_buf(),
            timeout_secs: timeout,
        }
        .place(&n, &macros, 0)
    };
    assert!(matches!(run("exit 3", 10.0), Err(StdPlaceError::External(_))));
    assert!(matches!(run("true", 10.0), Err(StdPlaceError::Bookshelf(_))));
    match run("sleep 5", 0.2) {
        Err(StdPlaceError::External(m)) => assert!(m.contains("timed out")),
        other => panic!("{other:?}"),
    }
}
