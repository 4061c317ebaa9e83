//! Energy-optimized point sets on the sphere (Coulomb and distance designs).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sphere::{uniform_direction, Direction, DirectionSet};

const COINCIDENT: f64 = 1e-12;
const PERTURBATION: f64 = 1e-8;
const MAX_HALVINGS: usize = 60;
const STEP_GROWTH: f64 = 1.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyKind {
    /// E = Σ_{i<j} 1/‖θ_i − θ_j‖
    Coulomb,
    /// E = −Σ_{i<j} ‖θ_i − θ_j‖
    Distance,
}

/// Result of [`optimize_energy`]: the final set plus the energy after
/// every accepted step (the first entry is the initial energy).
#[derive(Debug, Clone)]
pub struct EnergyTrace {
    pub set: DirectionSet,
    pub energies: Vec<f64>,
}

fn pair_energy(kind: EnergyKind, r: f64) -> f64 {
    match kind {
        EnergyKind::Coulomb => 1.0 / r,
        EnergyKind::Distance => -r,
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Total energy, reduced in row order.
pub fn energy(points: &[Vec<f64>], kind: EnergyKind) -> f64 {
    let rows: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            (i + 1..points.len())
                .map(|j| pair_energy(kind, dist(&points[i], &points[j])))
                .sum()
        })
        .collect();
    rows.iter().sum()
}

/// Riemannian gradient (tangent projection of the Euclidean gradient).
fn tangent_gradient(points: &[Vec<f64>], kind: EnergyKind) -> Vec<Vec<f64>> {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            let pi = &points[i];
            let mut g = vec![0.0; pi.len()];
            for (j, pj) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let r = dist(pi, pj);
                // dE/dθ_i = w · (θ_i − θ_j)
                let w = match kind {
                    EnergyKind::Coulomb => -1.0 / (r * r * r),
                    EnergyKind::Distance => -1.0 / r,
                };
                for k in 0..g.len() {
                    g[k] += w * (pi[k] - pj[k]);
                }
            }
            let radial: f64 = g.iter().zip(pi).map(|(a, b)| a * b).sum();
            g.iter().zip(pi).map(|(gk, pk)| gk - radial * pk).collect()
        })
        .collect()
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
}

/// Nudges coincident points apart by 1e-8 along fixed pseudo-random
/// directions so that the energy is finite.
fn separate_coincident(points: &mut [Vec<f64>]) {
    let d = points.first().map(Vec::len).unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c01d);
    loop {
        let mut moved = false;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if dist(&points[i], &points[j]) < COINCIDENT {
                    let kick = uniform_direction(&mut rng, d);
                    for (x, k) in points[j].iter_mut().zip(kick.coords()) {
                        *x += PERTURBATION * k;
                    }
                    normalize(&mut points[j]);
                    moved = true;
                }
            }
        }
        if !moved {
            break;
        }
    }
}

/// Projected gradient descent on a pairwise energy.
///
/// Each iteration moves every point along its negative tangent gradient,
/// renormalizes, and accepts the move only if the energy does not
/// increase; otherwise the step is halved and retried. After an accepted
/// move the step grows by 1.2×. Coincident input points are first pushed
/// apart by 1e-8.
pub fn optimize_energy(init: &DirectionSet, kind: EnergyKind, iters: usize, step: f64) -> Result<EnergyTrace> {
    if iters == 0 {
        let pts: Vec<Vec<f64>> = init.iter().map(|d| d.coords().to_vec()).collect();
        return Ok(EnergyTrace {
            set: init.clone(),
            energies: vec![energy(&pts, kind)],
        });
    }
    let mut points: Vec<Vec<f64>> = init.iter().map(|d| d.coords().to_vec()).collect();
    separate_coincident(&mut points);
    let mut current = energy(&points, kind);
    let mut energies = vec![current];
    let mut step = step;

    'outer: for _ in 0..iters {
        let grad = tangent_gradient(&points, kind);
        let mut halvings = 0;
        loop {
            let candidate: Vec<Vec<f64>> = points
                .iter()
                .zip(&grad)
                .map(|(p, g)| {
                    let mut q: Vec<f64> = p.iter().zip(g).map(|(a, b)| a - step * b).collect();
                    normalize(&mut q);
                    q
                })
                .collect();
            let e = energy(&candidate, kind);
            if e.is_finite() && e <= current {
                points = candidate;
                current = e;
                energies.push(e);
                step *= STEP_GROWTH;
                break;
            }
            step *= 0.5;
            halvings += 1;
            if halvings >= MAX_HALVINGS {
                break 'outer;
            }
        }
    }

    let dirs = points
        .into_iter()
        .map(Direction::normalize)
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergyTrace {
        set: DirectionSet::new(dirs)?,
        energies,
    })
}
