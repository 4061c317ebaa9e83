//! Gaussian-process surrogate on the sphere.
//!
//! The kernel is a Gaussian of the arc length, k(a, b) = exp(−½ (d_S(a,b)/ℓ)²),
//! with unit prior variance. Targets are de-meaned before fitting and the
//! lengthscale comes from the median pairwise arc length of the inputs.

mod acquisition;

pub use acquisition::{expected_improvement, log_expected_improvement, Acquisition, AcquisitionKind};

use std::f64::consts::FRAC_PI_4;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::sphere::{geodesic, Direction, DirectionSet};

/// Lengthscale used when the median heuristic is undefined or degenerate.
pub const FALLBACK_LENGTHSCALE: f64 = FRAC_PI_4;
pub const JITTER_START: f64 = 1e-8;
pub const JITTER_MAX: f64 = 1e-2;
/// Smallest lengthscale the heuristic may be shrunk to.
const MIN_LENGTHSCALE: f64 = 1e-3;
/// Largest jitter accepted before a heuristic lengthscale is shrunk.
const ADAPTIVE_JITTER_CAP: f64 = 1e-6;

/// Angular RBF kernel exp(−½ (d_S(a,b)/ℓ)²).
pub fn angular_rbf(a: &Direction, b: &Direction, lengthscale: f64) -> Result<f64> {
    if !(lengthscale > 0.0) || !lengthscale.is_finite() {
        return Err(invalid(format!("lengthscale must be positive, got {lengthscale}")));
    }
    if a.dim() != b.dim() {
        return Err(invalid("kernel arguments differ in dimension"));
    }
    Ok(kernel(a, b, lengthscale))
}

fn kernel(a: &Direction, b: &Direction, lengthscale: f64) -> f64 {
    let r = geodesic(a, b) / lengthscale;
    (-0.5 * r * r).exp()
}

/// Median of all pairwise arc lengths, or π/4 when that median is below 1e-6.
pub fn median_lengthscale(dirs: &DirectionSet) -> Result<f64> {
    if dirs.len() < 2 {
        return Err(invalid("median lengthscale needs at least two directions"));
    }
    let s = dirs.as_slice();
    let mut dists = Vec::with_capacity(s.len() * (s.len() - 1) / 2);
    for i in 0..s.len() {
        for j in i + 1..s.len() {
            dists.push(geodesic(&s[i], &s[j]));
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let m = dists.len();
    let median = if m % 2 == 1 {
        dists[m / 2]
    } else {
        0.5 * (dists[m / 2 - 1] + dists[m / 2])
    };
    Ok(if median < 1e-6 { FALLBACK_LENGTHSCALE } else { median })
}

/// Fitting overrides; the defaults follow the median heuristic and the
/// 1e-8 → 1e-2 jitter ladder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpOptions {
    pub lengthscale: Option<f64>,
    pub jitter_start: f64,
}

impl Default for GpOptions {
    fn default() -> Self {
        Self {
            lengthscale: None,
            jitter_start: JITTER_START,
        }
    }
}

/// A fitted GP. Immutable after [`fit`].
#[derive(Debug, Clone)]
pub struct GpState {
    train_dirs: DirectionSet,
    train_vals: Vec<f64>,
    mean_offset: f64,
    lengthscale: f64,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
}

pub fn fit(dirs: &DirectionSet, vals: &[f64]) -> Result<GpState> {
    fit_with(dirs, vals, &GpOptions::default())
}

pub fn fit_with(dirs: &DirectionSet, vals: &[f64], opts: &GpOptions) -> Result<GpState> {
    if dirs.len() != vals.len() {
        return Err(invalid(format!(
            "{} training directions but {} values",
            dirs.len(),
            vals.len()
        )));
    }
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(invalid("training values must be finite"));
    }
    let (mut lengthscale, adaptive) = match opts.lengthscale {
        Some(l) if l > 0.0 && l.is_finite() => (l, false),
        Some(l) => return Err(invalid(format!("lengthscale must be positive, got {l}"))),
        None if dirs.len() >= 2 => (median_lengthscale(dirs)?, true),
        None => (FALLBACK_LENGTHSCALE, true),
    };
    let n = dirs.len();
    let mean_offset = vals.iter().sum::<f64>() / n as f64;
    let y = DVector::from_iterator(n, vals.iter().map(|v| v - mean_offset));

    // The geodesic Gaussian kernel is not positive definite on the sphere
    // for large ℓ, and a large jitter would smooth away the data. A
    // heuristic ℓ is halved until jitter ≤ ADAPTIVE_JITTER_CAP suffices;
    // at the ℓ floor the full ladder applies.
    let (chol, jitter) = loop {
        let k = kernel_matrix(dirs, lengthscale);
        if !adaptive || lengthscale < MIN_LENGTHSCALE {
            break factorize(&k, opts.jitter_start, JITTER_MAX)?;
        }
        match factorize(&k, opts.jitter_start, ADAPTIVE_JITTER_CAP.max(opts.jitter_start)) {
            Ok(found) => break found,
            Err(_) => lengthscale *= 0.5,
        }
    };
    let alpha = chol.solve(&y);
    Ok(GpState {
        train_dirs: dirs.clone(),
        train_vals: vals.to_vec(),
        mean_offset,
        lengthscale,
        jitter,
        chol,
        alpha,
    })
}

/// Cholesky of K + jitter·I, escalating jitter ×10 up to `jitter_max`.
fn factorize(k: &DMatrix<f64>, jitter_start: f64, jitter_max: f64) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut jitter = jitter_start;
    loop {
        let mut kj = k.clone();
        for i in 0..k.nrows() {
            kj[(i, i)] += jitter;
        }
        if let Some(c) = kj.cholesky() {
            return Ok((c, jitter));
        }
        if jitter >= jitter_max * (1.0 - 1e-9) {
            return Err(Error::IllConditioned { jitter });
        }
        jitter = (jitter * 10.0).min(jitter_max);
    }
}

/// Kernel matrix K_ij = k(θ_i, θ_j) (without jitter).
pub fn kernel_matrix(dirs: &DirectionSet, lengthscale: f64) -> DMatrix<f64> {
    let s = dirs.as_slice();
    let n = s.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = 1.0;
        for j in 0..i {
            let v = kernel(&s[i], &s[j], lengthscale);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Candidates per triangular-solve block when scoring pools.
const BLOCK: usize = 256;

impl GpState {
    pub fn train_dirs(&self) -> &DirectionSet {
        &self.train_dirs
    }

    pub fn train_vals(&self) -> &[f64] {
        &self.train_vals
    }

    pub fn mean_offset(&self) -> f64 {
        self.mean_offset
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor L with L·Lᵀ = K + jitter·I.
    pub fn chol_factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn best_observed(&self) -> f64 {
        self.train_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Posterior mean and standard deviation at `query`.
    pub fn posterior(&self, query: &Direction) -> Result<(f64, f64)> {
        if query.dim() != self.train_dirs.dim() {
            return Err(invalid("query dimension does not match training data"));
        }
        Ok(self.posterior_block(std::slice::from_ref(query))[0])
    }

    /// Posterior moments for many queries, in input order.
    pub fn posterior_many(&self, queries: &[Direction]) -> Result<Vec<(f64, f64)>> {
        if queries.iter().any(|q| q.dim() != self.train_dirs.dim()) {
            return Err(invalid("query dimension does not match training data"));
        }
        Ok(queries
            .par_chunks(BLOCK)
            .flat_map_iter(|chunk| self.posterior_block(chunk))
            .collect())
    }

    fn posterior_block(&self, queries: &[Direction]) -> Vec<(f64, f64)> {
        let train = self.train_dirs.as_slice();
        let kstar = DMatrix::from_fn(train.len(), queries.len(), |i, j| {
            kernel(&train[i], &queries[j], self.lengthscale)
        });
        let means = kstar.transpose() * &self.alpha;
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kstar)
            .expect("cholesky factor has a positive diagonal");
        (0..queries.len())
            .map(|j| {
                let var = (1.0 - v.column(j).norm_squared()).max(0.0);
                (means[j] + self.mean_offset, var.sqrt())
            })
            .collect()
    }

    /// Acquisition value at one query.
    pub fn acquisition<R: Rng + ?Sized>(
        &self,
        query: &Direction,
        kind: Acquisition,
        best_so_far: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let (m, s) = self.posterior(query)?;
        Ok(kind.score(m, s, best_so_far, rng))
    }

    /// Acquisition values over a pool. Thompson draws are taken from `rng`
    /// in pool order.
    pub fn score_pool<R: Rng + ?Sized>(
        &self,
        pool: &[Direction],
        kind: Acquisition,
        best_so_far: f64,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let moments = self.posterior_many(pool)?;
        Ok(moments
            .into_iter()
            .map(|(m, s)| kind.score(m, s, best_so_far, rng))
            .collect())
    }
}

/// Index of the largest score, ties resolved to the lowest index.
pub fn argmax(scores: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        match best {
            Some(b) if !(s > scores[b]) => {}
            _ if s.is_nan() => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Outcome of [`annealed_select`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnnealedPick {
    /// Index into the pool.
    pub index: usize,
    /// True when the acquisition branch fired.
    pub greedy: bool,
}

/// With probability ε_t = t^(−γ) return the acquisition argmax over the
/// pool, otherwise a uniformly random pool element.
pub fn annealed_select<R: Rng + ?Sized>(
    state: &GpState,
    pool: &[Direction],
    t: u64,
    gamma: f64,
    kind: Acquisition,
    rng: &mut R,
) -> Result<AnnealedPick> {
    if pool.is_empty() {
        return Err(invalid("annealed selection over an empty pool"));
    }
    if t == 0 {
        return Err(invalid("annealing step index starts at 1"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid(format!("annealing exponent must lie in (0,1), got {gamma}")));
    }
    let eps = (t as f64).powf(-gamma);
    let u: f64 = rng.gen();
    if u < eps {
        let scores = state.score_pool(pool, kind, state.best_observed(), rng)?;
        let index = argmax(&scores).unwrap_or(0);
        Ok(AnnealedPick { index, greedy: true })
    } else {
        Ok(AnnealedPick {
            index: rng.gen_range(0..pool.len()),
            greedy: false,
        })
    }
}
