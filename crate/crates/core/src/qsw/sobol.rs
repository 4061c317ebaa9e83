//! Sobol low-discrepancy sequence with optional digital scrambling.
//!
//! Direction numbers are the first 21 dimensions of Joe & Kuo's
//! `new-joe-kuo-6.21201` table. Points are emitted in Gray-code order
//! (Antonov–Saleev), so the unscrambled output equals
//! `scipy.stats.qmc.Sobol(dim, scramble=False)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Highest supported dimension.
pub const MAX_DIM: usize = 21;

const BITS: usize = 32;

/// (degree s, polynomial coefficients a, initial m_1..m_s) for dims 2..=21.
const JOE_KUO: [(u32, u32, &[u32]); MAX_DIM - 1] = [
    (1, 0, &[1]),
    (2, 1, &[1, 3]),
    (3, 1, &[1, 3, 1]),
    (3, 2, &[1, 1, 1]),
    (4, 1, &[1, 1, 3, 3]),
    (4, 4, &[1, 3, 5, 13]),
    (5, 2, &[1, 1, 5, 5, 17]),
    (5, 4, &[1, 1, 5, 5, 5]),
    (5, 7, &[1, 1, 7, 11, 19]),
    (5, 11, &[1, 1, 5, 1, 1]),
    (5, 13, &[1, 1, 1, 3, 11]),
    (5, 14, &[1, 3, 5, 5, 31]),
    (6, 1, &[1, 3, 3, 9, 7, 49]),
    (6, 13, &[1, 1, 1, 15, 21, 21]),
    (6, 16, &[1, 3, 1, 13, 27, 49]),
    (6, 19, &[1, 1, 1, 15, 7, 5]),
    (6, 22, &[1, 3, 1, 15, 13, 25]),
    (6, 25, &[1, 1, 5, 5, 19, 61]),
    (7, 1, &[1, 3, 7, 11, 23, 15, 103]),
    (7, 4, &[1, 3, 7, 13, 13, 15, 69]),
];

/// Digital scrambling flavour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScrambleKind {
    /// Random digital shift: each coordinate XORed with a per-dimension word.
    Xor,
    /// Nested uniform (Owen-style) scramble via a Laine–Karras hash on
    /// bit-reversed coordinates.
    #[default]
    Owen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scramble {
    pub seed: u64,
    pub kind: ScrambleKind,
}

fn direction_numbers(dim_index: usize) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    if dim_index == 0 {
        for (k, vk) in v.iter_mut().enumerate() {
            *vk = 1 << (BITS - 1 - k);
        }
        return v;
    }
    let (s, a, m) = JOE_KUO[dim_index - 1];
    let s = s as usize;
    for k in 0..s {
        v[k] = m[k] << (BITS - 1 - k);
    }
    for k in s..BITS {
        let mut x = v[k - s] ^ (v[k - s] >> s);
        for i in 1..s {
            if (a >> (s - 1 - i)) & 1 == 1 {
                x ^= v[k - i];
            }
        }
        v[k] = x;
    }
    v
}

fn laine_karras(mut x: u32, seed: u32) -> u32 {
    x ^= x.wrapping_mul(0x3d20_adea);
    x = x.wrapping_add(seed);
    x = x.wrapping_mul((seed >> 16) | 1);
    x ^= x.wrapping_mul(0x0552_6c56);
    x ^= x.wrapping_mul(0x53a2_2864);
    x
}

fn owen(x: u32, seed: u32) -> u32 {
    laine_karras(x.reverse_bits(), seed).reverse_bits()
}

/// First `n` points of the `dim`-dimensional Sobol sequence, each in [0,1)^dim.
pub fn sobol(n: usize, dim: usize, scramble: Option<Scramble>) -> Result<Vec<Vec<f64>>> {
    if !(2..=MAX_DIM).contains(&dim) {
        return Err(invalid(format!("Sobol dimension {dim} outside 2..={MAX_DIM}")));
    }
    if n == 0 {
        return Err(invalid("Sobol point count must be at least 1"));
    }
    if n as u64 > 1u64 << BITS {
        return Err(invalid("Sobol point count exceeds 2^32"));
    }
    let dirs: Vec<[u32; BITS]> = (0..dim).map(direction_numbers).collect();
    let words: Vec<u32> = match scramble {
        Some(s) => {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
            (0..dim).map(|_| rng.gen()).collect()
        }
        None => vec![0; dim],
    };

    let scale = 1.0 / (1u64 << BITS) as f64;
    let mut state = vec![0u32; dim];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            // Gray-code update: flip the direction number of the lowest zero bit of i-1.
            let c = (i - 1).trailing_ones() as usize;
            for (x, v) in state.iter_mut().zip(&dirs) {
                *x ^= v[c];
            }
        }
        let point = state
            .iter()
            .zip(&words)
            .map(|(&x, &w)| {
                let x = match scramble.map(|s| s.kind) {
                    None => x,
                    Some(ScrambleKind::Xor) => x ^ w,
                    Some(ScrambleKind::Owen) => owen(x, w),
                };
                x as f64 * scale
            })
            .collect();
        out.push(point);
    }
    Ok(out)
}

/// Centered L2 discrepancy (Hickernell) of a point set in [0,1)^s.
pub fn centered_l2_discrepancy(points: &[Vec<f64>]) -> f64 {
    let n = points.len() as f64;
    let s = points.first().map(Vec::len).unwrap_or(0) as i32;
    let term1 = (13.0f64 / 12.0).powi(s);
    let term2: f64 = points
        .iter()
        .map(|x| {
            x.iter()
                .map(|&xk| {
                    let c = (xk - 0.5).abs();
                    1.0 + 0.5 * c - 0.5 * c * c
                })
                .product::<f64>()
        })
        .sum();
    let mut term3 = 0.0;
    for x in points {
        for y in points {
            term3 += x
                .iter()
                .zip(y)
                .map(|(&a, &b)| 1.0 + 0.5 * (a - 0.5).abs() + 0.5 * (b - 0.5).abs() - 0.5 * (a - b).abs())
                .product::<f64>();
        }
    }
    (term1 - 2.0 / n * term2 + term3 / (n * n)).max(0.0).sqrt()
}
