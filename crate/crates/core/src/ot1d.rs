//! Exact one-dimensional optimal transport by sorting, the finite-slice
//! sliced-Wasserstein estimator, and its gradient with respect to the
//! source cloud.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sphere::{Direction, DirectionSet};

/// Below this SW₂ value the gradient of SW₂ is treated as undefined.
pub const DEGENERATE_SW2: f64 = 1e-12;

/// `n` points in R^d with implicit equal weights 1/n, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl PointCloud {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(invalid("point cloud needs at least one point and one coordinate"));
        }
        if data.len() != n * d {
            return Err(invalid(format!(
                "point cloud buffer has {} values, expected {n}x{d}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("non-finite coordinate in row {}", pos / d)));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(invalid("ragged rows"));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Applies `f` to every coordinate.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.n, self.d, self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn translate(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d {
            return Err(invalid("shift dimension mismatch"));
        }
        let data = self
            .data
            .chunks_exact(self.d)
            .flat_map(|row| row.iter().zip(shift).map(|(x, s)| x + s))
            .collect();
        Self::new(self.n, self.d, data)
    }

    /// Left-multiplies every point by `rot`.
    pub fn rotate(&self, rot: &DMatrix<f64>) -> Result<Self> {
        if rot.nrows() != self.d || rot.ncols() != self.d {
            return Err(invalid("rotation shape mismatch"));
        }
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            for r in 0..self.d {
                data.push((0..self.d).map(|c| rot[(r, c)] * row[c]).sum());
            }
        }
        Self::new(self.n, self.d, data)
    }

    /// `self - step * grad`, where `grad` is an n×d row-major matrix.
    pub fn descend(&self, grad: &[f64], step: f64) -> Result<Self> {
        if grad.len() != self.data.len() {
            return Err(invalid("gradient shape mismatch"));
        }
        let data = self.data.iter().zip(grad).map(|(z, g)| z - step * g).collect();
        Self::new(self.n, self.d, data)
    }
}

/// The estimated SW_p^p value over a slice set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwValue {
    pub value: f64,
    pub p: f64,
    pub slices: usize,
}

impl SwValue {
    /// SW_p = (SW_p^p)^(1/p).
    pub fn distance(&self) -> f64 {
        self.value.powf(1.0 / self.p)
    }
}

/// Gradient target for flows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    /// Gradient of SW₂ (not squared).
    #[default]
    Sw2,
    /// Gradient of SW₂², smooth at the optimum.
    Sw2Squared,
}

/// Projection of every point onto `theta`.
pub fn project(cloud: &PointCloud, theta: &Direction) -> Result<Vec<f64>> {
    if cloud.dim() != theta.dim() {
        return Err(invalid(format!(
            "cloud dimension {} does not match direction dimension {}",
            cloud.dim(),
            theta.dim()
        )));
    }
    Ok(project_unchecked(cloud, theta))
}

fn project_unchecked(cloud: &PointCloud, theta: &Direction) -> Vec<f64> {
    let t = theta.coords();
    cloud
        .rows()
        .map(|row| row.iter().zip(t).map(|(x, y)| x * y).sum())
        .collect()
}

fn check_order(p: f64) -> Result<()> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(invalid(format!("Wasserstein order p={p} must be >= 1")));
    }
    Ok(())
}

fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 1.0 {
        x.abs()
    } else if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

/// W_p^p between two equal-size 1-D empirical measures:
/// (1/n) Σ |x_(i) - y_(i)|^p over sorted values.
pub fn wasserstein_1d(xs: &[f64], ys: &[f64], p: f64) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(invalid(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.is_empty() {
        return Err(invalid("empty 1-D measure"));
    }
    check_order(p)?;
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    Ok(sorted_cost(&mut a, &mut b, p))
}

fn sorted_cost(a: &mut [f64], b: &mut [f64], p: f64) -> f64 {
    a.sort_unstable_by(f64::total_cmp);
    b.sort_unstable_by(f64::total_cmp);
    let total: f64 = a.iter().zip(b.iter()).map(|(x, y)| pow_abs(x - y, p)).sum();
    total / a.len() as f64
}

fn check_pair(mu: &PointCloud, nu: &PointCloud) -> Result<()> {
    if mu.dim() != nu.dim() {
        return Err(invalid(format!(
            "cloud dimensions differ: {} vs {}",
            mu.dim(),
            nu.dim()
        )));
    }
    if mu.len() != nu.len() {
        return Err(invalid(format!(
            "clouds must have equal size: {} vs {}",
            mu.len(),
            nu.len()
        )));
    }
    Ok(())
}

/// f(θ) = W_p^p of the projections of `mu` and `nu` onto `theta`.
pub fn slice_cost(mu: &PointCloud, nu: &PointCloud, theta: &Direction, p: f64) -> Result<f64> {
    check_pair(mu, nu)?;
    check_order(p)?;
    if theta.dim() != mu.dim() {
        return Err(invalid("direction dimension does not match clouds"));
    }
    let mut a = project_unchecked(mu, theta);
    let mut b = project_unchecked(nu, theta);
    Ok(sorted_cost(&mut a, &mut b, p))
}

/// Per-slice costs, in slice order.
pub fn slice_costs(mu: &PointCloud, nu: &PointCloud, thetas: &DirectionSet, p: f64) -> Result<Vec<f64>> {
    check_pair(mu, nu)?;
    check_order(p)?;
    if thetas.dim() != mu.dim() {
        return Err(invalid("direction dimension does not match clouds"));
    }
    Ok(thetas
        .as_slice()
        .par_iter()
        .map(|theta| {
            let mut a = project_unchecked(mu, theta);
            let mut b = project_unchecked(nu, theta);
            sorted_cost(&mut a, &mut b, p)
        })
        .collect())
}

/// Finite-slice estimate of SW_p^p: the mean of per-slice W_p^p.
///
/// Slices are evaluated in parallel but summed sequentially in slice
/// order, so the value does not depend on the thread count.
pub fn sw_estimate(mu: &PointCloud, nu: &PointCloud, thetas: &DirectionSet, p: f64) -> Result<SwValue> {
    let costs = slice_costs(mu, nu, thetas, p)?;
    let value = costs.iter().fold(0.0, |acc, c| acc + c) / costs.len() as f64;
    Ok(SwValue {
        value,
        p,
        slices: costs.len(),
    })
}

/// Indices sorting `values` ascending, ties broken by index.
fn argsort(values: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_unstable_by(|&i, &j| match values[i].total_cmp(&values[j]) {
        Ordering::Equal => i.cmp(&j),
        o => o,
    });
    idx
}

/// Gradient of the p=2 estimate with respect to `z`, as an n×d row-major
/// buffer, together with the SW₂² value it was computed at.
fn sw2_squared_gradient(z: &PointCloud, y: &PointCloud, thetas: &DirectionSet) -> (Vec<f64>, f64) {
    let n = z.len();
    let d = z.dim();
    let l = thetas.len();
    let per_slice: Vec<(Vec<f64>, f64)> = thetas
        .as_slice()
        .par_iter()
        .map(|theta| {
            let pz = project_unchecked(z, theta);
            let py = project_unchecked(y, theta);
            let oz = argsort(&pz);
            let oy = argsort(&py);
            // residual[i] = θᵀz_i − (rank-matched projected y)
            let mut residual = vec![0.0; n];
            let mut cost = 0.0;
            for (&iz, &iy) in oz.iter().zip(&oy) {
                let r = pz[iz] - py[iy];
                residual[iz] = r;
                cost += r * r;
            }
            (residual, cost / n as f64)
        })
        .collect();

    let scale = 2.0 / (n * l) as f64;
    let mut grad = vec![0.0; n * d];
    let mut value = 0.0;
    for (theta, (residual, cost)) in thetas.iter().zip(&per_slice) {
        value += cost;
        let t = theta.coords();
        for (i, r) in residual.iter().enumerate() {
            let g = &mut grad[i * d..(i + 1) * d];
            for (gk, tk) in g.iter_mut().zip(t) {
                *gk += scale * r * tk;
            }
        }
    }
    (grad, value / l as f64)
}

/// Gradient of SW₂ or SW₂² with respect to the points of `z`, returned as
/// an n×d row-major buffer.
///
/// At projection ties the rank matching is broken by point index, which
/// yields one element of the subdifferential.
pub fn sw_gradient(z: &PointCloud, y: &PointCloud, thetas: &DirectionSet, mode: GradientMode) -> Result<Vec<f64>> {
    check_pair(z, y)?;
    if thetas.dim() != z.dim() {
        return Err(invalid("direction dimension does not match clouds"));
    }
    let (mut grad, value) = sw2_squared_gradient(z, y, thetas);
    if mode == GradientMode::Sw2 {
        let sw2 = value.sqrt();
        if sw2 < DEGENERATE_SW2 {
            return Err(Error::DegenerateGradient(sw2));
        }
        let k = 1.0 / (2.0 * sw2);
        grad.iter_mut().for_each(|g| *g *= k);
    }
    Ok(grad)
}
