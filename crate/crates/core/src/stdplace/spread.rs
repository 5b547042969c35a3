//! Coarse bin-based overflow diffusion and obstacle eviction.

use std::collections::VecDeque;

use crate::geom::{Point, Rect};

/// Free area per bin plus the obstacles overlapping it.
#[derive(Debug, Clone)]
pub struct SpreadGrid {
    pub die: Rect,
    pub nx: usize,
    pub ny: usize,
    /// Free area per bin, indexed `ix * ny + iy`.
    pub capacity: Vec<f64>,
    obstacles: Vec<Rect>,
    bin_obstacles: Vec<Vec<usize>>,
}

/// Result of a spreading run.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadReport {
    pub iterations: usize,
    pub max_overflow: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpreadError {
    #[error("movable area {movable} exceeds free area {capacity}")]
    InfeasibleDensity { movable: f64, capacity: f64 },
}

impl SpreadGrid {
    pub fn new(die: Rect, nx: usize, ny: usize, obstacles: Vec<Rect>) -> Self {
        let (bw, bh) = (die.w / nx as f64, die.h / ny as f64);
        let mut capacity = vec![bw * bh; nx * ny];
        let mut bin_obstacles = vec![Vec::new(); nx * ny];
        let mut grid = Self { die, nx, ny, capacity: Vec::new(), obstacles: Vec::new(), bin_obstacles: Vec::new() };
        for (k, r) in obstacles.iter().enumerate() {
            let (ix0, iy0) = grid.bin_index(Point::new(r.x, r.y));
            let (ix1, iy1) = grid.bin_index(Point::new(r.x1(), r.y1()));
            for ix in ix0..=ix1 {
                for iy in iy0..=iy1 {
                    let a = grid.bin_rect(ix, iy).overlap_area(r);
                    if a > 0.0 {
                        capacity[ix * ny + iy] -= a;
                        bin_obstacles[ix * ny + iy].push(k);
                    }
                }
            }
        }
        for c in &mut capacity {
            // overlapping obstacles may subtract twice; tiny remnants are noise
            if *c < 1e-9 * bw * bh {
                *c = 0.0;
            }
        }
        grid.capacity = capacity;
        grid.obstacles = obstacles;
        grid.bin_obstacles = bin_obstacles;
        grid
    }

    pub fn bin_size(&self) -> (f64, f64) {
        (self.die.w / self.nx as f64, self.die.h / self.ny as f64)
    }

    pub fn bin_rect(&self, ix: usize, iy: usize) -> Rect {
        let (bw, bh) = self.bin_size();
        Rect::new(self.die.x + ix as f64 * bw, self.die.y + iy as f64 * bh, bw, bh)
    }

    pub fn bin_index(&self, p: Point) -> (usize, usize) {
        let (bw, bh) = self.bin_size();
        let clamp = |v: f64, n: usize| if v < 0.0 { 0 } else { (v as usize).min(n - 1) };
        (
            clamp(((p.x - self.die.x) / bw).floor(), self.nx),
            clamp(((p.y - self.die.y) / bh).floor(), self.ny),
        )
    }

    fn bin_of(&self, p: Point) -> usize {
        let (ix, iy) = self.bin_index(p);
        ix * self.ny + iy
    }

    pub fn total_capacity(&self) -> f64 {
        self.capacity.iter().sum()
    }

    /// Occupied area per bin for the given cell centers and areas.
    pub fn occupancy(&self, positions: &[Point], areas: &[f64]) -> Vec<f64> {
        let mut occ = vec![0.0; self.capacity.len()];
        for (p, a) in positions.iter().zip(areas) {
            occ[self.bin_of(*p)] += a;
        }
        occ
    }

    /// Largest occupancy / capacity ratio over bins holding any cell.
    pub fn max_overflow(&self, positions: &[Point], areas: &[f64]) -> f64 {
        let occ = self.occupancy(positions, areas);
        occ.iter()
            .zip(&self.capacity)
            .filter(|(o, _)| **o > 0.0)
            .map(|(o, c)| if *c > 0.0 { o / c } else { f64::INFINITY })
            .fold(0.0, f64::max)
    }

    /// Whether `p` lies strictly inside any obstacle.
    pub fn inside_obstacle(&self, p: Point) -> Option<Rect> {
        let b = self.bin_of(p);
        self.bin_obstacles[b]
            .iter()
            .map(|&k| self.obstacles[k])
            .find(|r| r.contains_strictly(p))
    }

    /// For every bin, the nearest bin with positive capacity (BFS over the
    /// 4-neighbourhood; itself when its capacity is positive).
    fn nearest_free_bins(&self) -> Vec<Option<usize>> {
        let mut nearest = vec![None; self.capacity.len()];
        let mut queue = VecDeque::new();
        for (b, &c) in self.capacity.iter().enumerate() {
            if c > 0.0 {
                nearest[b] = Some(b);
                queue.push_back(b);
            }
        }
        while let Some(b) = queue.pop_front() {
            let (ix, iy) = (b / self.ny, b % self.ny);
            for (dx, dy) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                if jx < 0 || jy < 0 || jx >= self.nx as i64 || jy >= self.ny as i64 {
                    continue;
                }
                let nb = jx as usize * self.ny + jy as usize;
                if nearest[nb].is_none() {
                    nearest[nb] = nearest[b];
                    queue.push_back(nb);
                }
            }
        }
        nearest
    }

    /// Diffuse cells out of overflowing bins until the largest
    /// occupancy/capacity ratio is at most `target` or `max_iters` passes
    /// have run. `observe` sees the positions after every pass.
    pub fn spread(
        &self,
        positions: &mut [Point],
        areas: &[f64],
        target: f64,
        max_iters: usize,
        mut observe: impl FnMut(&[Point]),
    ) -> Result<SpreadReport, SpreadError> {
        let movable: f64 = areas.iter().sum();
        let capacity = self.total_capacity();
        if movable > capacity {
            return Err(SpreadError::InfeasibleDensity { movable, capacity });
        }
        let (bw, bh) = self.bin_size();
        let nearest = self.nearest_free_bins();
        let nbins = self.capacity.len();
        let mut iterations = 0;
        loop {
            let mut members: Vec<Vec<usize>> = vec![Vec::new(); nbins];
            let mut occ = vec![0.0; nbins];
            for (i, p) in positions.iter().enumerate() {
                let b = self.bin_of(*p);
                members[b].push(i);
                occ[b] += areas[i];
            }
            let ratio = |b: usize, occ: &[f64]| {
                if self.capacity[b] > 0.0 {
                    occ[b] / self.capacity[b]
                } else if occ[b] > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            };
            let max_ratio = (0..nbins).map(|b| ratio(b, &occ)).fold(0.0, f64::max);
            if max_ratio <= target || iterations >= max_iters {
                return Ok(SpreadReport { iterations, max_overflow: max_ratio });
            }
            let mut order: Vec<usize> = (0..nbins).filter(|&b| ratio(b, &occ) > 1.0).collect();
            order.sort_by(|&a, &b| ratio(b, &occ).total_cmp(&ratio(a, &occ)).then(a.cmp(&b)));
            for b in order {
                let (ix, iy) = ((b / self.ny) as i64, (b % self.ny) as i64);
                let (dest, amount) = if self.capacity[b] == 0.0 {
                    match nearest[b] {
                        Some(d) => (d, f64::INFINITY),
                        None => continue,
                    }
                } else {
                    let mut best: Option<usize> = None;
                    for dx in -1i64..=1 {
                        for dy in -1i64..=1 {
                            let (jx, jy) = (ix + dx, iy + dy);
                            if (dx, dy) == (0, 0) || jx < 0 || jy < 0 || jx >= self.nx as i64 || jy >= self.ny as i64 {
                                continue;
                            }
                            let nb = jx as usize * self.ny + jy as usize;
                            if self.capacity[nb] > 0.0
                                && best.is_none_or(|cur| ratio(nb, &occ) < ratio(cur, &occ))
                            {
                                best = Some(nb);
                            }
                        }
                    }
                    let Some(nb) = best else { continue };
                    if ratio(nb, &occ) >= ratio(b, &occ) {
                        continue;
                    }
                    let (cb, cn) = (self.capacity[b], self.capacity[nb]);
                    // area that equalizes the two ratios
                    (nb, (occ[b] * cn - occ[nb] * cb) / (cb + cn))
                };
                let (jx, jy) = ((dest / self.ny) as i64, (dest % self.ny) as i64);
                let shift = Point::new((jx - ix) as f64 * bw, (jy - iy) as f64 * bh);
                // move the cells closest to the destination first
                let mut cells = std::mem::take(&mut members[b]);
                cells.sort_by(|&p, &q| {
                    let key = |i: usize| -(positions[i].x * shift.x + positions[i].y * shift.y);
                    key(p).total_cmp(&key(q)).then(p.cmp(&q))
                });
                let mut moved = 0.0;
                for i in cells {
                    if moved > 0.0 && moved + 0.5 * areas[i] > amount {
                        members[b].push(i);
                        continue;
                    }
                    let np = self.die.clamp_point(positions[i].translate(shift.x, shift.y));
                    positions[i] = np;
                    moved += areas[i];
                    let nb = self.bin_of(np);
                    occ[b] -= areas[i];
                    occ[nb] += areas[i];
                    members[nb].push(i);
                }
            }
            iterations += 1;
            observe(positions);
        }
    }

    /// Push every point that lies strictly inside an obstacle to the nearest
    /// free point just outside it (staying on the die).
    pub fn evict(&self, positions: &mut [Point]) -> Result<usize, SpreadError> {
        let (bw, bh) = self.bin_size();
        let eps = 1e-6 * bw.min(bh);
        let mut evicted = 0;
        for p in positions.iter_mut() {
            let Some(first) = self.inside_obstacle(*p) else { continue };
            let mut best: Option<(f64, Point)> = None;
            let mut frontier = vec![(*p, first)];
            let mut budget = 256;
            while let Some((q, rect)) = frontier.pop() {
                let candidates = [
                    Point::new(rect.x - eps, q.y),
                    Point::new(rect.x1() + eps, q.y),
                    Point::new(q.x, rect.y - eps),
                    Point::new(q.x, rect.y1() + eps),
                ];
                for c in candidates {
                    if !self.die.contains(c) {
                        continue;
                    }
                    let d = p.distance(c);
                    if best.is_some_and(|(bd, _)| bd <= d) {
                        continue;
                    }
                    match self.inside_obstacle(c) {
                        None => best = Some((d, c)),
                        Some(other) if budget > 0 => {
                            budget -= 1;
                            frontier.push((c, other));
                        }
                        Some(_) => {}
                    }
                }
            }
            let target = match best {
                Some((_, c)) => c,
                None => self.fallback_free_point(*p).ok_or(SpreadError::InfeasibleDensity {
                    movable: 0.0,
                    capacity: self.total_capacity(),
                })?,
            };
            *p = target;
            evicted += 1;
        }
        Ok(evicted)
    }

    /// Scan free bins by distance for a probe point outside every obstacle.
    fn fallback_free_point(&self, p: Point) -> Option<Point> {
        let mut bins: Vec<usize> = (0..self.capacity.len()).filter(|&b| self.capacity[b] > 0.0).collect();
        bins.sort_by(|&a, &b| {
            let ca = self.bin_rect(a / self.ny, a % self.ny).center();
            let cb = self.bin_rect(b / self.ny, b % self.ny).center();
            p.distance(ca).total_cmp(&p.distance(cb))
        });
        for b in bins {
            let r = self.bin_rect(b / self.ny, b % self.ny);
            for i in 0..8 {
                for j in 0..8 {
                    let q = Point::new(r.x + (i as f64 + 0.5) * r.w / 8.0, r.y + (j as f64 + 0.5) * r.h / 8.0);
                    if self.inside_obstacle(q).is_none() {
                        return Some(q);
                    }
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn capacity_subtracts_obstacles() {
        let g = SpreadGrid::new(Rect::new(0.0, 0.0, 4.0, 4.0), 2, 2, vec![Rect::new(0.0, 0.0, 2.0, 2.0), Rect::new(2.0, 2.0, 1.0, 1.0)]);
        assert_eq!(g.capacity, [0.0, 4.0, 4.0, 3.0]);
    }

    #[test]
    fn no_overflow_leaves_positions_alone() {
        let g = SpreadGrid::new(Rect::new(0.0, 0.0, 10.0, 10.0), 2, 2, vec![]);
        let mut pos = vec![Point::new(1.0, 1.0), Point::new(8.0, 8.0)];
        let before = pos.clone();
        let r = g.spread(&mut pos, &[1.0, 1.0], 1.2, 100, |_| {}).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(pos, before);
    }

    #[test]
    fn infeasible_density_is_reported() {
        let g = SpreadGrid::new(Rect::new(0.0, 0.0, 2.0, 2.0), 2, 2, vec![]);
        let mut pos = vec![Point::new(1.0, 1.0)];
        assert!(matches!(
            g.spread(&mut pos, &[5.0], 1.2, 10, |_| {}),
            Err(SpreadError::InfeasibleDensity { .. })
        ));
    }

    #[test]
    fn eviction_finds_nearest_edge() {
        let g = SpreadGrid::new(Rect::new(0.0, 0.0, 10.0, 10.0), 2, 2, vec![Rect::new(2.0, 2.0, 4.0, 4.0)]);
        let mut pos = vec![Point::new(2.5, 4.0), Point::new(9.0, 9.0)];
        assert_eq!(g.evict(&mut pos).unwrap(), 1);
        assert!(pos[0].x < 2.0 && (pos[0].x - 2.0).abs() < 1e-3);
        assert_eq!(pos[0].y, 4.0);
        assert_eq!(pos[1], Point::new(9.0, 9.0));
    }

    #[test]
    fn eviction_handles_abutting_obstacles() {
        let g = SpreadGrid::new(
            Rect::new(0.0, 0.0, 10.0, 10.0),
            4,
            4,
            vec![Rect::new(0.0, 0.0, 5.0, 10.0), Rect::new(5.0, 0.0, 3.0, 10.0)],
        );
        let mut pos = vec![Point::new(4.9, 5.0)];
        g.evict(&mut pos).unwrap();
        assert!(pos[0].x > 8.0);
        assert!(g.inside_obstacle(pos[0]).is_none());
    }
}
