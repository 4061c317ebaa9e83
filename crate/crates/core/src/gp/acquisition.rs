use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Error, Result};

/// Acquisition rule scoring a candidate from its posterior (mean, std).
/// All rules are oriented for maximization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Acquisition {
    Ucb { beta: f64 },
    Ei,
    LogEi,
    Thompson,
}

impl Acquisition {
    pub fn validate(&self) -> Result<()> {
        match self {
            Acquisition::Ucb { beta } if !(*beta >= 0.0) => Err(invalid(format!("UCB beta must be >= 0, got {beta}"))),
            _ => Ok(()),
        }
    }

    /// Score from posterior moments. Thompson draws one standard normal from `rng`.
    pub fn score<R: Rng + ?Sized>(&self, mean: f64, std: f64, best: f64, rng: &mut R) -> f64 {
        match *self {
            Acquisition::Ucb { beta } => mean + beta * std,
            Acquisition::Ei => expected_improvement(mean, std, best),
            Acquisition::LogEi => log_expected_improvement(mean, std, best),
            Acquisition::Thompson => {
                let xi: f64 = rng.sample(StandardNormal);
                mean + std * xi
            }
        }
    }
}

/// Acquisition family without its parameter, as named in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcquisitionKind {
    #[default]
    Ucb,
    Ei,
    LogEi,
    Thompson,
}

impl AcquisitionKind {
    pub fn with_beta(self, beta: f64) -> Acquisition {
        match self {
            AcquisitionKind::Ucb => Acquisition::Ucb { beta },
            AcquisitionKind::Ei => Acquisition::Ei,
            AcquisitionKind::LogEi => Acquisition::LogEi,
            AcquisitionKind::Thompson => Acquisition::Thompson,
        }
    }
}

impl fmt::Display for AcquisitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AcquisitionKind::Ucb => "ucb",
            AcquisitionKind::Ei => "ei",
            AcquisitionKind::LogEi => "log-ei",
            AcquisitionKind::Thompson => "thompson",
        })
    }
}

impl FromStr for AcquisitionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ucb" => Ok(AcquisitionKind::Ucb),
            "ei" => Ok(AcquisitionKind::Ei),
            "log-ei" | "logei" => Ok(AcquisitionKind::LogEi),
            "thompson" => Ok(AcquisitionKind::Thompson),
            other => Err(invalid(format!("unknown acquisition `{other}`"))),
        }
    }
}

const STD_FLOOR: f64 = 1e-12;

pub(crate) fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// h(z) = φ(z) + zΦ(z), so that EI = σ·h((μ − best)/σ).
fn h(z: f64) -> f64 {
    normal_pdf(z) + z * normal_cdf(z)
}

/// ln h(z), accurate far into the left tail.
pub(crate) fn log_h(z: f64) -> f64 {
    if z > -5.0 {
        return h(z).ln();
    }
    // h(z) = φ(z) / (1 + u·K(u)) with u = −z and the continued fraction
    // K(u) = u + 2/(u + 3/(u + 4/(u + …))).
    let u = -z;
    let mut k = u;
    for j in (2..=120).rev() {
        k = u + j as f64 / k;
    }
    -0.5 * z * z - 0.5 * (2.0 * PI).ln() - (1.0 + u * k).ln()
}

/// Closed-form expected improvement over `best` (maximization).
pub fn expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let imp = mean - best;
    if std < STD_FLOOR {
        return imp.max(0.0);
    }
    (std * h(imp / std)).max(0.0)
}

/// ln EI, finite wherever EI > 0 even when EI underflows.
pub fn log_expected_improvement(mean: f64, std: f64, best: f64) -> f64 {
    let imp = mean - best;
    if std < STD_FLOOR {
        return if imp > 0.0 { imp.ln() } else { f64::NEG_INFINITY };
    }
    std.ln() + log_h(imp / std)
}
