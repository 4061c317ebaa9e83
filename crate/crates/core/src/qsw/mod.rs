//! Quasi-Monte Carlo direction sets and their randomized versions.
//!
//! | kind               | construction                                   | d     |
//! |--------------------|------------------------------------------------|-------|
//! | `EqualAreaSobol`   | 2-D Sobol through the Lambert equal-area map   | 3     |
//! | `GaussianSobol`    | d-D Sobol through Φ⁻¹, then normalized         | 2..21 |
//! | `Spiral`           | generalized golden-angle spiral                | 3     |
//! | `DistanceOptimized`| spiral refined to maximize Σ‖θ_i − θ_j‖        | 3     |
//! | `CoulombOptimized` | spiral refined to minimize Σ 1/‖θ_i − θ_j‖     | 3     |
//!
//! Randomization either re-scrambles the Sobol net (Sobol kinds only) or
//! applies one Haar rotation to the whole set.

mod energy;
pub mod sobol;

pub use energy::{energy, optimize_energy, EnergyKind, EnergyTrace};
pub use sobol::{sobol, Scramble, ScrambleKind};

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::{Mutex, OnceLock};

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc_inv;

use crate::error::{invalid, Error, Result};
use crate::sphere::{random_rotation, Direction, DirectionSet};

const GAUSS_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QswKind {
    EqualAreaSobol,
    GaussianSobol,
    Spiral,
    DistanceOptimized,
    CoulombOptimized,
}

impl QswKind {
    pub const ALL: [QswKind; 5] = [
        QswKind::GaussianSobol,
        QswKind::EqualAreaSobol,
        QswKind::Spiral,
        QswKind::DistanceOptimized,
        QswKind::CoulombOptimized,
    ];

    pub fn supports_dim(self, d: usize) -> bool {
        match self {
            QswKind::GaussianSobol => (2..=sobol::MAX_DIM).contains(&d),
            _ => d == 3,
        }
    }

    pub fn is_sobol(self) -> bool {
        matches!(self, QswKind::EqualAreaSobol | QswKind::GaussianSobol)
    }

    /// Short method letter used in names such as `CQSW`.
    pub fn letter(self) -> &'static str {
        match self {
            QswKind::EqualAreaSobol => "E",
            QswKind::GaussianSobol => "G",
            QswKind::Spiral => "S",
            QswKind::DistanceOptimized => "D",
            QswKind::CoulombOptimized => "C",
        }
    }
}

impl fmt::Display for QswKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QswKind::EqualAreaSobol => "equal-area-sobol",
            QswKind::GaussianSobol => "gaussian-sobol",
            QswKind::Spiral => "spiral",
            QswKind::DistanceOptimized => "distance-optimized",
            QswKind::CoulombOptimized => "coulomb-optimized",
        };
        f.write_str(s)
    }
}

impl FromStr for QswKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        QswKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| invalid(format!("unknown QSW kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomizeMode {
    #[default]
    None,
    Scramble,
    Rotate,
}

/// Knobs for QSW generation that are not part of the kind itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct QswOptions {
    pub scramble: ScrambleKind,
    pub energy_iters: usize,
    pub energy_step: f64,
}

impl Default for QswOptions {
    fn default() -> Self {
        Self {
            scramble: ScrambleKind::Owen,
            energy_iters: 1000,
            energy_step: 0.01,
        }
    }
}

/// Lambert cylindrical equal-area map [0,1)² → S².
pub fn equal_area_map(u: [f64; 2]) -> Direction {
    let z = 2.0 * u[1] - 1.0;
    let phi = 2.0 * PI * u[0];
    let r = (1.0 - z * z).max(0.0).sqrt();
    Direction::normalize(vec![r * phi.cos(), r * phi.sin(), z]).expect("equal-area image is a unit vector")
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// Componentwise Φ⁻¹ followed by normalization.
///
/// Coordinates are clamped to [1e-12, 1 − 1e-12]. The center point
/// (0.5, …, 0.5) maps to the zero vector; it is perturbed by +1e-12 in the
/// first coordinate, which yields e₁.
pub fn gaussian_map(u: &[f64]) -> Result<Direction> {
    if u.len() < 2 {
        return Err(invalid("gaussian map needs at least two coordinates"));
    }
    let mut clamped: Vec<f64> = u.iter().map(|x| x.clamp(GAUSS_CLAMP, 1.0 - GAUSS_CLAMP)).collect();
    let mut g: Vec<f64> = clamped.iter().map(|&p| normal_quantile(p)).collect();
    if g.iter().all(|&x| x == 0.0) {
        clamped[0] += GAUSS_CLAMP;
        g[0] = normal_quantile(clamped[0]);
    }
    Direction::normalize(g).map_err(|_| Error::InvalidState("gaussian map produced a zero vector".into()))
}

/// Generalized spiral points on S²:
/// z_ℓ = 1 − (2ℓ−1)/n, φ_ℓ = ℓ·π·(3 − √5), ℓ = 1..n.
pub fn spiral(n: usize) -> Result<DirectionSet> {
    if n == 0 {
        return Err(invalid("spiral needs at least one point"));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let dirs = (1..=n)
        .map(|l| {
            let z = 1.0 - (2.0 * l as f64 - 1.0) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = l as f64 * golden;
            Direction::normalize(vec![r * phi.cos(), r * phi.sin(), z])
        })
        .collect::<Result<Vec<_>>>()?;
    DirectionSet::new(dirs)
}

/// The deterministic base set for `kind`.
pub fn base_set(kind: QswKind, d: usize, l: usize, opts: &QswOptions) -> Result<DirectionSet> {
    sobol_or_structured(kind, d, l, None, opts)
}

fn sobol_or_structured(
    kind: QswKind,
    d: usize,
    l: usize,
    scramble: Option<Scramble>,
    opts: &QswOptions,
) -> Result<DirectionSet> {
    if !kind.supports_dim(d) {
        return Err(invalid(format!("QSW kind {kind} does not support d={d}")));
    }
    if l == 0 {
        return Err(invalid("QSW set size must be at least 1"));
    }
    match kind {
        QswKind::EqualAreaSobol => {
            let pts = sobol(l, 2, scramble)?;
            DirectionSet::new(pts.iter().map(|u| equal_area_map([u[0], u[1]])).collect())
        }
        QswKind::GaussianSobol => {
            let pts = sobol(l, d, scramble)?;
            DirectionSet::new(pts.iter().map(|u| gaussian_map(u)).collect::<Result<_>>()?)
        }
        QswKind::Spiral => spiral(l),
        QswKind::DistanceOptimized | QswKind::CoulombOptimized => {
            let energy_kind = if kind == QswKind::CoulombOptimized {
                EnergyKind::Coulomb
            } else {
                EnergyKind::Distance
            };
            let key = (kind, l, opts.energy_iters, opts.energy_step.to_bits());
            if let Some(set) = energy_cache().lock().expect("cache lock").get(&key) {
                return Ok(set.clone());
            }
            let init = spiral(l)?;
            let set = optimize_energy(&init, energy_kind, opts.energy_iters, opts.energy_step)?.set;
            energy_cache().lock().expect("cache lock").insert(key, set.clone());
            Ok(set)
        }
    }
}

type EnergyKey = (QswKind, usize, usize, u64);

/// Energy-optimized sets are deterministic and expensive, so they are
/// memoized for the life of the process.
fn energy_cache() -> &'static Mutex<HashMap<EnergyKey, DirectionSet>> {
    static CACHE: OnceLock<Mutex<HashMap<EnergyKey, DirectionSet>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// Builds a QSW set of `l` directions in dimension `d`, optionally randomized.
pub fn make_qsw<R: Rng + ?Sized>(
    kind: QswKind,
    d: usize,
    l: usize,
    randomize: RandomizeMode,
    rng: &mut R,
    opts: &QswOptions,
) -> Result<DirectionSet> {
    match randomize {
        RandomizeMode::None => base_set(kind, d, l, opts),
        RandomizeMode::Scramble => {
            if !kind.is_sobol() {
                return Err(invalid(format!("scrambling requires a Sobol kind, got {kind}")));
            }
            let scramble = Scramble {
                seed: rng.gen(),
                kind: opts.scramble,
            };
            sobol_or_structured(kind, d, l, Some(scramble), opts)
        }
        RandomizeMode::Rotate => {
            let base = base_set(kind, d, l, opts)?;
            rotate_set(&base, rng)
        }
    }
}

/// Applies a single Haar rotation to a whole set.
pub fn rotate_set<R: Rng + ?Sized>(base: &DirectionSet, rng: &mut R) -> Result<DirectionSet> {
    let rot = random_rotation(rng, base.dim())?;
    base.rotate(&rot)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{geodesic, sample_uniform};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn octant_chi2(set: &DirectionSet) -> f64 {
        let mut counts = [0usize; 8];
        for d in set {
            let v = d.coords();
            counts[(v[0] > 0.0) as usize | ((v[1] > 0.0) as usize) << 1 | ((v[2] > 0.0) as usize) << 2] += 1;
        }
        let e = set.len() as f64 / 8.0;
        counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
    }

    #[test]
    fn equal_area_map_landmarks() {
        let d = equal_area_map([0.0, 0.5]);
        assert!((d.coords()[0] - 1.0).abs() < 1e-15 && d.coords()[1].abs() < 1e-15);
        let pole = equal_area_map([0.3, 1.0 - 1e-16]);
        assert!((pole.coords()[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equal_area_sobol_octants_are_balanced() {
        let pts = sobol(20_000, 2, None).unwrap();
        let set = DirectionSet::new(pts.iter().map(|u| equal_area_map([u[0], u[1]])).collect()).unwrap();
        let e = 20_000.0 / 8.0;
        let sigma = (e * (1.0f64 - 1.0 / 8.0)).sqrt();
        let mut counts = [0usize; 8];
        for d in &set {
            let v = d.coords();
            counts[(v[0] > 0.0) as usize | ((v[1] > 0.0) as usize) << 1 | ((v[2] > 0.0) as usize) << 2] += 1;
        }
        for c in counts {
            assert!((c as f64 - e).abs() < 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn gaussian_map_center_and_norm() {
        let d = gaussian_map(&[0.5, 0.5, 0.5]).unwrap();
        assert_eq!(d.coords(), &[1.0, 0.0, 0.0]);
        for u in [[0.0, 0.0, 0.0], [0.999, 0.1, 0.4], [1.0, 1.0, 0.2]] {
            let d = gaussian_map(&u).unwrap();
            assert!((d.dot(&d).sqrt() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn gaussian_sobol_scrambled_is_uniform_on_octants() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let set = make_qsw(
            QswKind::GaussianSobol,
            3,
            30_000,
            RandomizeMode::Scramble,
            &mut rng,
            &QswOptions::default(),
        )
        .unwrap();
        assert!(octant_chi2(&set) < 18.475);
    }

    #[test]
    fn spiral_formula() {
        let one = spiral(1).unwrap();
        assert!(one.as_slice()[0].coords()[2].abs() < 1e-15);
        let s = spiral(100).unwrap();
        for d in &s {
            assert!((d.dot(d).sqrt() - 1.0).abs() < 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let best_mc = (0..20)
            .map(|_| sample_uniform(&mut rng, 3, 100).unwrap().min_geodesic())
            .fold(0.0, f64::max);
        assert!(s.min_geodesic() > best_mc, "{} vs {best_mc}", s.min_geodesic());
    }

    #[test]
    fn deterministic_kinds_are_stable() {
        let opts = QswOptions {
            energy_iters: 50,
            ..QswOptions::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for kind in QswKind::ALL {
            let a = make_qsw(kind, 3, 40, RandomizeMode::None, &mut rng, &opts).unwrap();
            let b = make_qsw(kind, 3, 40, RandomizeMode::None, &mut rng, &opts).unwrap();
            assert_eq!(a, b, "{kind}");
            assert_eq!(a.len(), 40);
            for d in &a {
                assert!((d.dot(d).sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rotate_preserves_geometry() {
        let opts = QswOptions::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let base = base_set(QswKind::Spiral, 3, 50, &opts).unwrap();
        let rotated = make_qsw(QswKind::Spiral, 3, 50, RandomizeMode::Rotate, &mut rng, &opts).unwrap();
        assert_ne!(base, rotated);
        for i in 0..50 {
            for j in i + 1..50 {
                let a = geodesic(&base.as_slice()[i], &base.as_slice()[j]);
                let b = geodesic(&rotated.as_slice()[i], &rotated.as_slice()[j]);
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn incompatible_kind_and_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let opts = QswOptions::default();
        assert!(make_qsw(QswKind::Spiral, 3, 10, RandomizeMode::Scramble, &mut rng, &opts).is_err());
        assert!(make_qsw(QswKind::Spiral, 4, 10, RandomizeMode::None, &mut rng, &opts).is_err());
        assert!(make_qsw(QswKind::GaussianSobol, 7, 10, RandomizeMode::None, &mut rng, &opts).is_ok());
    }
}
