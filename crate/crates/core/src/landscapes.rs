//! Synthetic fitness landscapes on S² and a fixed-budget direction search.
//!
//! Constants live in `assets/landscapes-v1.toml` and are compiled in; a run
//! config may override them, and the resolved values go into `config.lock`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::qsw::make_qsw;
use crate::selectors::{bosw, SelectorConfig, SelectorKind, SliceOracle};
use crate::sphere::{dot, sample_uniform, Direction, UNIT_TOL};

/// The frozen parameter file.
pub const FROZEN_V1: &str = include_str!("../assets/landscapes-v1.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LandscapeKind {
    Peaks,
    Ridge,
    Quadratic,
}

impl LandscapeKind {
    pub const ALL: [LandscapeKind; 3] = [LandscapeKind::Peaks, LandscapeKind::Ridge, LandscapeKind::Quadratic];
}

impl fmt::Display for LandscapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LandscapeKind::Peaks => "peaks",
            LandscapeKind::Ridge => "ridge",
            LandscapeKind::Quadratic => "quadratic",
        })
    }
}

impl FromStr for LandscapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LandscapeKind::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown landscape `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peaks {
    pub weights: Vec<f64>,
    pub concentrations: Vec<f64>,
    pub centers: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ridge {
    pub axis: [f64; 3],
    pub height: f64,
    pub concentration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quadratic {
    pub target: [f64; 3],
    pub scale: f64,
}

/// All three landscapes with their constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandscapeSet {
    pub version: u32,
    pub peaks: Peaks,
    pub ridge: Ridge,
    pub quadratic: Quadratic,
}

impl Default for LandscapeSet {
    fn default() -> Self {
        Self::frozen()
    }
}

fn check_unit(v: &[f64; 3], what: &str) -> Result<()> {
    let n = dot(v, v).sqrt();
    if (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::Config(format!("{what} must be unit norm, has norm {n}")));
    }
    Ok(())
}

impl LandscapeSet {
    pub fn frozen() -> Self {
        Self::from_toml(FROZEN_V1).expect("bundled landscape file is valid")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let set: LandscapeSet = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.peaks;
        if p.weights.is_empty() || p.weights.len() != p.concentrations.len() || p.weights.len() != p.centers.len() {
            return Err(Error::Config(
                "peaks needs equally many weights, concentrations and centers".into(),
            ));
        }
        if p.weights.iter().chain(&p.concentrations).any(|&x| !(x > 0.0)) {
            return Err(Error::Config("peak weights and concentrations must be positive".into()));
        }
        for c in &p.centers {
            check_unit(c, "peak center")?;
        }
        check_unit(&self.ridge.axis, "ridge axis")?;
        check_unit(&self.quadratic.target, "quadratic target")?;
        if !(self.ridge.height > 0.0 && self.ridge.concentration > 0.0 && self.quadratic.scale > 0.0) {
            return Err(Error::Config("landscape scales must be positive".into()));
        }
        Ok(())
    }

    /// Fitness of θ; nonnegative and continuous on S².
    pub fn evaluate(&self, kind: LandscapeKind, theta: &Direction) -> Result<f64> {
        if theta.dim() != 3 {
            return Err(invalid(format!("landscapes are defined on S², got d={}", theta.dim())));
        }
        let t = theta.coords();
        Ok(match kind {
            LandscapeKind::Peaks => {
                let p = &self.peaks;
                p.centers
                    .iter()
                    .zip(&p.weights)
                    .zip(&p.concentrations)
                    .map(|((c, w), k)| w * (k * (dot(t, c) - 1.0)).exp())
                    .sum()
            }
            LandscapeKind::Ridge => {
                self.ridge.height * (self.ridge.concentration * (dot(t, &self.ridge.axis) - 1.0)).exp()
            }
            LandscapeKind::Quadratic => self.quadratic.scale * dot(t, &self.quadratic.target).powi(2),
        })
    }

    /// A counting oracle for one landscape.
    pub fn oracle(&self, kind: LandscapeKind) -> SliceOracle<'_> {
        SliceOracle::new(3, move |t| self.evaluate(kind, t))
    }
}

/// Best fitness found and the number of evaluations spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchOutcome {
    pub best: f64,
    pub evals: usize,
}

/// Evaluates exactly `l` directions chosen by `method` and returns the best.
///
/// BOSW runs with its init size capped at ⌈L/2⌉ and its batch at L. Methods
/// whose budget exceeds L by construction (ABOSW, RBOSW, ARBOSW) are rejected.
pub fn budgeted_search<R: Rng + ?Sized>(
    method: SelectorKind,
    landscapes: &LandscapeSet,
    kind: LandscapeKind,
    l: usize,
    cfg: &SelectorConfig,
    rng: &mut R,
) -> Result<SearchOutcome> {
    if l == 0 {
        return Err(invalid("budget L must be at least 1"));
    }
    let mut oracle = landscapes.oracle(kind);
    let values = match method {
        SelectorKind::Mc => oracle.evaluate_batch(sample_uniform(rng, 3, l)?.as_slice())?,
        SelectorKind::Qsw { kind: q, randomize } => {
            let set = make_qsw(q, 3, l, randomize, rng, &cfg.qsw)?;
            oracle.evaluate_batch(set.as_slice())?
        }
        SelectorKind::Bosw => {
            let cfg = SelectorConfig {
                l,
                init_size: cfg.init_size.min(l.div_ceil(2)),
                batch: cfg.batch.min(l),
                ..*cfg
            };
            bosw(&mut oracle, &cfg, rng)?.values
        }
        other => {
            return Err(invalid(format!(
                "{other} spends more than L evaluations and cannot run a fixed-budget search"
            )))
        }
    };
    debug_assert_eq!(oracle.count(), l);
    Ok(SearchOutcome {
        best: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        evals: oracle.count(),
    })
}
