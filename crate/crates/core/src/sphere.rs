//! Geometry on the unit sphere S^(d-1): directions, direction sets,
//! uniform sampling, geodesic distance and Haar rotations.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Unit-norm tolerance for [`Direction`].
pub const UNIT_TOL: f64 = 1e-9;

/// A unit vector in R^d, d ≥ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    /// Normalizes `v` onto the sphere.
    pub fn normalize(mut v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(invalid(format!("direction dimension {} < 2", v.len())));
        }
        let norm = dot(&v, &v).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(invalid("cannot normalize a zero or non-finite vector"));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(Self(v))
    }

    /// Wraps coordinates that are already unit norm (within [`UNIT_TOL`]).
    pub fn from_unit(v: Vec<f64>) -> Result<Self> {
        if v.len() < 2 {
            return Err(invalid(format!("direction dimension {} < 2", v.len())));
        }
        let norm = dot(&v, &v).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(invalid(format!("vector norm {norm} is not 1")));
        }
        Ok(Self(v))
    }

    /// The i-th standard basis vector of R^d.
    pub fn basis(d: usize, i: usize) -> Result<Self> {
        if i >= d {
            return Err(invalid(format!("basis index {i} out of range for d={d}")));
        }
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        Self::from_unit(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Direction) -> f64 {
        dot(&self.0, &other.0)
    }

    pub fn neg(&self) -> Direction {
        Direction(self.0.iter().map(|x| -x).collect())
    }

    /// Applies an orthogonal matrix, renormalizing away roundoff.
    pub fn rotate(&self, rot: &DMatrix<f64>) -> Result<Direction> {
        if rot.nrows() != self.dim() || rot.ncols() != self.dim() {
            return Err(invalid("rotation shape does not match direction dimension"));
        }
        let v: Vec<f64> = (0..self.dim())
            .map(|r| (0..self.dim()).map(|c| rot[(r, c)] * self.0[c]).sum())
            .collect();
        Direction::normalize(v)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// An ordered, nonempty list of directions sharing one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSet {
    dim: usize,
    dirs: Vec<Direction>,
}

impl DirectionSet {
    pub fn new(dirs: Vec<Direction>) -> Result<Self> {
        let dim = dirs
            .first()
            .ok_or_else(|| invalid("direction set must be nonempty"))?
            .dim();
        if dirs.iter().any(|d| d.dim() != dim) {
            return Err(invalid("directions in a set must share a dimension"));
        }
        Ok(Self { dim, dirs })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.dirs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dirs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Direction> {
        self.dirs.iter()
    }

    pub fn as_slice(&self) -> &[Direction] {
        &self.dirs
    }

    pub fn get(&self, i: usize) -> Option<&Direction> {
        self.dirs.get(i)
    }

    pub fn into_vec(self) -> Vec<Direction> {
        self.dirs
    }

    pub fn push(&mut self, dir: Direction) -> Result<()> {
        if dir.dim() != self.dim {
            return Err(invalid("dimension mismatch when extending a direction set"));
        }
        self.dirs.push(dir);
        Ok(())
    }

    /// Replaces the direction at `index`, keeping every other position.
    pub fn replace(&mut self, index: usize, dir: Direction) -> Result<Direction> {
        if dir.dim() != self.dim {
            return Err(invalid("dimension mismatch when replacing a direction"));
        }
        let slot = self
            .dirs
            .get_mut(index)
            .ok_or_else(|| invalid(format!("index {index} out of range")))?;
        Ok(std::mem::replace(slot, dir))
    }

    pub fn truncate(&mut self, len: usize) {
        self.dirs.truncate(len.max(1));
    }

    /// Applies one rotation to every member.
    pub fn rotate(&self, rot: &DMatrix<f64>) -> Result<DirectionSet> {
        let dirs = self.dirs.iter().map(|d| d.rotate(rot)).collect::<Result<_>>()?;
        DirectionSet::new(dirs)
    }

    /// Smallest pairwise geodesic distance (π for a singleton).
    pub fn min_geodesic(&self) -> f64 {
        let mut best = std::f64::consts::PI;
        for i in 0..self.len() {
            for j in i + 1..self.len() {
                best = best.min(geodesic(&self.dirs[i], &self.dirs[j]));
            }
        }
        best
    }

    /// Largest |cos| between `dir` and any member.
    pub fn max_abs_cos(&self, dir: &Direction) -> f64 {
        self.dirs.iter().map(|d| d.dot(dir).abs()).fold(0.0, f64::max)
    }
}

impl<'a> IntoIterator for &'a DirectionSet {
    type Item = &'a Direction;
    type IntoIter = std::slice::Iter<'a, Direction>;

    fn into_iter(self) -> Self::IntoIter {
        self.dirs.iter()
    }
}

/// One uniformly distributed direction: a normalized standard-normal vector.
pub fn uniform_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Direction {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        if let Ok(dir) = Direction::normalize(v) {
            return dir;
        }
    }
}

/// `n` i.i.d. uniform directions on S^(d-1).
pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R, d: usize, n: usize) -> Result<DirectionSet> {
    if d < 2 {
        return Err(invalid(format!("sphere dimension d={d} must be at least 2")));
    }
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    DirectionSet::new((0..n).map(|_| uniform_direction(rng, d)).collect())
}

/// Arc length between two directions, in [0, π].
pub fn geodesic_distance(a: &Direction, b: &Direction) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(invalid(format!("dimension mismatch: {} vs {}", a.dim(), b.dim())));
    }
    Ok(geodesic(a, b))
}

pub(crate) fn geodesic(a: &Direction, b: &Direction) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

/// Haar-distributed rotation in SO(d).
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Result<DMatrix<f64>> {
    if d < 2 {
        return Err(invalid(format!("rotation dimension d={d} must be at least 2")));
    }
    let gauss = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample(StandardNormal));
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Q·diag(sign(R_ii)) makes the factorization unique, hence Haar on O(d).
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Ok(q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn e(d: usize, i: usize) -> Direction {
        Direction::basis(d, i).unwrap()
    }

    #[test]
    fn uniform_samples_are_unit_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = sample_uniform(&mut rng, 5, 200).unwrap();
        for dir in &a {
            assert!((dir.dot(dir).sqrt() - 1.0).abs() < 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert_eq!(a, sample_uniform(&mut rng, 5, 200).unwrap());
    }

    #[test]
    fn uniform_mean_is_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let set = sample_uniform(&mut rng, 3, 10_000).unwrap();
        let mut mean = [0.0; 3];
        for dir in &set {
            for k in 0..3 {
                mean[k] += dir.coords()[k] / 10_000.0;
            }
        }
        assert!(dot(&mean, &mean).sqrt() < 0.05);
    }

    #[test]
    fn sample_uniform_rejects_bad_arguments() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(sample_uniform(&mut rng, 1, 5).is_err());
        assert!(sample_uniform(&mut rng, 3, 0).is_err());
    }

    #[test]
    fn geodesic_basics() {
        assert_eq!(geodesic_distance(&e(3, 0), &e(3, 0)).unwrap(), 0.0);
        assert!((geodesic_distance(&e(3, 0), &e(3, 0).neg()).unwrap() - PI).abs() < 1e-15);
        assert!((geodesic_distance(&e(3, 0), &e(3, 1)).unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(geodesic_distance(&e(3, 0), &e(2, 0)).is_err());
    }

    #[test]
    fn geodesic_clamps_roundoff() {
        let a = Direction::normalize(vec![1.0, 1e-9, 0.0]).unwrap();
        let b = Direction::normalize(vec![1.0, 1e-9 + 1e-17, 0.0]).unwrap();
        assert!(geodesic_distance(&a, &b).unwrap().is_finite());
    }

    #[test]
    fn geodesic_is_a_metric_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let s = sample_uniform(&mut rng, 4, 3).unwrap();
            let (a, b, c) = (&s.as_slice()[0], &s.as_slice()[1], &s.as_slice()[2]);
            let ab = geodesic(a, b);
            assert_eq!(ab, geodesic(b, a));
            assert!(geodesic(a, c) <= ab + geodesic(b, c) + 1e-9);
        }
    }

    #[test]
    fn rotation_is_special_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for d in 2..7 {
            let r = random_rotation(&mut rng, d).unwrap();
            let err = (r.transpose() * &r - DMatrix::<f64>::identity(d, d)).abs().max();
            assert!(err < 1e-9);
            assert!((r.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_preserves_pairwise_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let set = sample_uniform(&mut rng, 3, 40).unwrap();
        let rot = random_rotation(&mut rng, 3).unwrap();
        let rotated = set.rotate(&rot).unwrap();
        for i in 0..set.len() {
            for j in i + 1..set.len() {
                let before = geodesic(&set.as_slice()[i], &set.as_slice()[j]);
                let after = geodesic(&rotated.as_slice()[i], &rotated.as_slice()[j]);
                assert!((before - after).abs() < 1e-9, "{before} vs {after}");
            }
        }
    }

    fn octant(v: &[f64]) -> usize {
        (v[0] > 0.0) as usize | ((v[1] > 0.0) as usize) << 1 | ((v[2] > 0.0) as usize) << 2
    }

    #[test]
    fn rotated_uniform_sample_passes_octant_chi_square() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let set = sample_uniform(&mut rng, 3, 30_000).unwrap();
        let rot = random_rotation(&mut rng, 3).unwrap();
        let mut counts = [0usize; 8];
        for dir in &set.rotate(&rot).unwrap() {
            counts[octant(dir.coords())] += 1;
        }
        let expected = 30_000.0 / 8.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // chi-square, 7 dof, alpha = 0.01
        assert!(chi2 < 18.475, "chi2 = {chi2}");
    }
}
