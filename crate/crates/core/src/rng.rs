//! Seeded randomness. Every stochastic routine takes an explicit seed; probe
//! `i` of a routine draws from its own sub-stream so results do not depend on
//! evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::numkernel::{Matrix, Vector};

/// One splitmix64 step.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for stream `index` of `seed`.
pub fn sub_seed(seed: u64, index: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    // row-major fill keeps streams stable if storage order ever changes
    let mut m = Matrix::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = StandardNormal.sample(rng);
        }
    }
    m
}

/// Gaussian direction normalized to the unit sphere.
pub fn unit_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    loop {
        let v = gaussian_vector(rng, n);
        let norm = v.norm();
        if norm > 1e-12 || n == 0 {
            return if n == 0 { v } else { v / norm };
        }
    }
}

/// Seeded unit probes followed by the canonical basis.
pub fn unit_probes(seed: u64, n: usize, count: usize) -> Vec<Vector> {
    let mut out: Vec<Vector> = (0..count)
        .map(|i| unit_vector(&mut rng(seed, i as u64), n))
        .collect();
    for k in 0..n {
        let mut e = Vector::zeros(n);
        e[k] = 1.0;
        out.push(e);
    }
    out
}
