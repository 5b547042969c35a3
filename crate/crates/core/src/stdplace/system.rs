use crate::bookshelf::Netlist;
use crate::geom::Point;
use crate::metrics::PlacementSnapshot;

/// Pins per net above which the star model replaces the clique.
pub const CLIQUE_MAX_PINS: usize = 10;
/// Diagonal regularization pulling unanchored components to the die center.
pub const REGULARIZATION: f64 = 1e-6;

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub cols: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, cols, values }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, (0..n).map(|i| (i, i, 1.0)).collect())
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn add_diagonal(&mut self, i: usize, v: f64) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].iter().position(|&c| c == i) {
            Some(k) => self.values[r.start + k] += v,
            None => {
                // rebuild with the new entry; rare (only rows without a diagonal)
                let mut t: Vec<(usize, usize, f64)> = (0..self.n)
                    .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
                    .collect();
                t.push((i, i, v));
                *self = Self::from_triplets(self.n, t);
            }
        }
    }
}

/// Quadratic wirelength model over the movable standard cells.
///
/// Variables `0..cells.len()` are cells; any further variables are star
/// nodes introduced for nets with more than [`CLIQUE_MAX_PINS`] pins.
#[derive(Debug, Clone)]
pub struct QuadraticSystem {
    pub matrix: CsrMatrix,
    pub rhs_x: Vec<f64>,
    pub rhs_y: Vec<f64>,
    /// Netlist cell index of each cell variable.
    pub cells: Vec<usize>,
    /// Die center, the initial guess and regularization target.
    pub center: Point,
}

impl QuadraticSystem {
    pub fn num_vars(&self) -> usize {
        self.matrix.n
    }

    /// Add a spring of weight `weight` from each cell variable to `targets[i]`.
    pub fn add_anchors(&mut self, targets: &[Point], weight: f64) {
        for (i, t) in targets.iter().enumerate() {
            self.matrix.add_diagonal(i, weight);
            self.rhs_x[i] += weight * t.x;
            self.rhs_y[i] += weight * t.y;
        }
    }

    /// Quadratic objective `0.5 x^T A x - b^T x` for one axis.
    pub fn objective(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let mut ax = vec![0.0; x.len()];
        self.matrix.mul_vec(x, &mut ax);
        x.iter().zip(&ax).zip(rhs).map(|((xi, ai), bi)| 0.5 * xi * ai - bi * xi).sum()
    }
}

enum End {
    Var(usize, Point),
    Fixed(Point),
}

struct Assembler {
    triplets: Vec<(usize, usize, f64)>,
    rhs_x: Vec<f64>,
    rhs_y: Vec<f64>,
    parent: Vec<usize>,
    anchored: Vec<bool>,
}

impl Assembler {
    fn new_var(&mut self) -> usize {
        let i = self.rhs_x.len();
        self.rhs_x.push(0.0);
        self.rhs_y.push(0.0);
        self.parent.push(i);
        self.anchored.push(false);
        i
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn spring(&mut self, a: &End, b: &End, w: f64) {
        match (a, b) {
            (End::Var(i, oi), End::Var(j, oj)) => {
                if i == j {
                    return;
                }
                let (i, j) = (*i, *j);
                self.triplets.extend([(i, i, w), (j, j, w), (i, j, -w), (j, i, -w)]);
                self.rhs_x[i] += w * (oj.x - oi.x);
                self.rhs_y[i] += w * (oj.y - oi.y);
                self.rhs_x[j] += w * (oi.x - oj.x);
                self.rhs_y[j] += w * (oi.y - oj.y);
                let (ri, rj) = (self.find(i), self.find(j));
                if ri != rj {
                    self.parent[ri] = rj;
                    self.anchored[rj] |= self.anchored[ri];
                }
            }
            (End::Var(i, o), End::Fixed(p)) | (End::Fixed(p), End::Var(i, o)) => {
                let i = *i;
                self.triplets.push((i, i, w));
                self.rhs_x[i] += w * (p.x - o.x);
                self.rhs_y[i] += w * (p.y - o.y);
                let r = self.find(i);
                self.anchored[r] = true;
            }
            (End::Fixed(_), End::Fixed(_)) => {}
        }
    }
}

/// Assemble the clique/star quadratic model. Movable standard cells are the
/// variables; every other cell with a position in `fixed` is an anchor.
/// Pins on cells that are neither are ignored.
pub fn build_system(netlist: &Netlist, fixed: &PlacementSnapshot) -> QuadraticSystem {
    let cells = netlist.movable_standard_cells();
    let mut var_of = vec![usize::MAX; netlist.cells.len()];
    for (v, &c) in cells.iter().enumerate() {
        var_of[c] = v;
    }
    let n = cells.len();
    let mut asm = Assembler {
        triplets: Vec::new(),
        rhs_x: vec![0.0; n],
        rhs_y: vec![0.0; n],
        parent: (0..n).collect(),
        anchored: vec![false; n],
    };
    let mut ends: Vec<End> = Vec::new();
    for net in &netlist.nets {
        ends.clear();
        for pin in &net.pins {
            let off = Point::new(pin.dx, pin.dy);
            if var_of[pin.cell] != usize::MAX {
                ends.push(End::Var(var_of[pin.cell], off));
            } else if let Some(c) = fixed.get(pin.cell) {
                ends.push(End::Fixed(c.translate(pin.dx, pin.dy)));
            }
        }
        let k = ends.len();
        if k < 2 || ends.iter().all(|e| matches!(e, End::Fixed(_))) {
            continue;
        }
        if k <= CLIQUE_MAX_PINS {
            let w = 1.0 / (k as f64 - 1.0);
            for a in 0..k {
                for b in a + 1..k {
                    asm.spring(&ends[a], &ends[b], w);
                }
            }
        } else {
            let w = k as f64 / (k as f64 - 1.0);
            let star = End::Var(asm.new_var(), Point::default());
            for e in &ends {
                asm.spring(e, &star, w);
            }
        }
    }
    let center = netlist.die.center();
    let total = asm.rhs_x.len();
    for i in 0..total {
        let r = asm.find(i);
        if !asm.anchored[r] {
            asm.triplets.push((i, i, REGULARIZATION));
            asm.rhs_x[i] += REGULARIZATION * center.x;
            asm.rhs_y[i] += REGULARIZATION * center.y;
        }
    }
    QuadraticSystem {
        matrix: CsrMatrix::from_triplets(total, asm.triplets),
        rhs_x: asm.rhs_x,
        rhs_y: asm.rhs_y,
        cells,
        center,
    }
}
