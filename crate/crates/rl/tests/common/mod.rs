#![allow(dead_code)]

use macroplace::env::Backbone;
use macroplace_rl::tensor::Matrix;
use macroplace_rl::{GraphInput, PolicyConfig};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-scale..scale)).collect())
}

/// Symmetric weighted adjacency with zero diagonal and roughly half the
/// pairs connected.
pub fn random_adjacency(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(0.5) {
                let w = rng.gen_range(1..4) as f64;
                a.set(i, j, w);
                a.set(j, i, w);
            }
        }
    }
    a
}

pub fn random_input(rng: &mut ChaCha8Rng, n: usize) -> GraphInput {
    GraphInput {
        features: Matrix::from_vec(n, 4, (0..4 * n).map(|_| rng.gen_range(0.0..1.0)).collect()),
        adjacency: random_adjacency(rng, n),
        metadata: Matrix::from_vec(1, 7, (0..7).map(|_| rng.gen_range(0.0..1.0)).collect()),
    }
}

pub fn small_config(backbone: Backbone, grid_size: usize) -> PolicyConfig {
    PolicyConfig {
        backbone,
        layers: 2,
        heads: 2,
        head_dim: 3,
        meta_dim: 4,
        value_hidden: 5,
        grid_size,
        head_gain: 1.0,
    }
}

pub fn random_mask(rng: &mut ChaCha8Rng, len: usize) -> Vec<bool> {
    let mut m: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.6)).collect();
    let k = rng.gen_range(0..len);
    m[k] = true;
    m
}

pub fn random_permutation(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// `|a - b| / (max(|a|, |b|) + 1e-6)`
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs().max(b.abs()) + 1e-6)
}
