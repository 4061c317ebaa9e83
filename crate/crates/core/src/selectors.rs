//! Projection-direction selectors: Monte Carlo, QSW/RQSW, and the four
//! GP-driven selectors BOSW, RBOSW, ABOSW and ARBOSW.
//!
//! All selectors maximize the slice cost f(θ) = W_p^p(θ#μ, θ#ν) and spend
//! their evaluations through a [`SliceOracle`], whose counter is the single
//! source of truth for evaluation budgets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gp::{self, AcquisitionKind, GpState};
use crate::ot1d::{slice_cost, PointCloud};
use crate::qsw::{base_set, make_qsw, rotate_set, QswKind, QswOptions, RandomizeMode};
use crate::sphere::{dot, sample_uniform, uniform_direction, Direction, DirectionSet};

/// Default outer steps between RBOSW/ARBOSW refreshes.
pub const DEFAULT_REFRESH: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SelectorConfig {
    /// Slice budget L.
    #[serde(rename = "L")]
    pub l: usize,
    pub batch: usize,
    pub rounds: usize,
    pub pool_size: usize,
    pub beta: f64,
    pub cos_cutoff: f64,
    pub init_size: usize,
    /// Outer steps R between RBOSW/ARBOSW refreshes.
    pub refresh_period: usize,
    pub seed_kind: QswKind,
    pub acquisition: AcquisitionKind,
    /// Annealing exponent γ ∈ (0,1) for the ε_t = t^(−γ) acquisition mixture.
    pub anneal_gamma: Option<f64>,
    pub qsw: QswOptions,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        Self {
            l: 100,
            batch: 5,
            rounds: 2,
            pool_size: 4096,
            beta: 0.7,
            cos_cutoff: 0.98,
            init_size: 10,
            refresh_period: DEFAULT_REFRESH,
            seed_kind: QswKind::CoulombOptimized,
            acquisition: AcquisitionKind::Ucb,
            anneal_gamma: None,
            qsw: QswOptions::default(),
        }
    }
}

impl SelectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l == 0 {
            return Err(invalid("slice budget L must be at least 1"));
        }
        if self.batch == 0 || self.batch > self.l {
            return Err(invalid(format!(
                "batch size must lie in 1..={}, got {}",
                self.l, self.batch
            )));
        }
        if self.init_size == 0 || self.init_size > self.l {
            return Err(invalid(format!(
                "init_size must lie in 1..={}, got {}",
                self.l, self.init_size
            )));
        }
        if self.pool_size < self.batch {
            return Err(invalid("pool size must be at least the batch size"));
        }
        if !(self.cos_cutoff > 0.0 && self.cos_cutoff < 1.0) {
            return Err(invalid(format!(
                "cos_cutoff must lie in (0,1), got {}",
                self.cos_cutoff
            )));
        }
        if self.refresh_period == 0 {
            return Err(invalid("refresh period must be at least 1"));
        }
        if let Some(g) = self.anneal_gamma {
            if !(g > 0.0 && g < 1.0) {
                return Err(invalid(format!("anneal_gamma must lie in (0,1), got {g}")));
            }
        }
        self.acquisition().validate()
    }

    pub fn acquisition(&self) -> gp::Acquisition {
        self.acquisition.with_beta(self.beta)
    }
}

type SliceFn<'a> = dyn Fn(&Direction) -> Result<f64> + Sync + 'a;

/// Counting wrapper around f(θ).
pub struct SliceOracle<'a> {
    dim: usize,
    f: Box<SliceFn<'a>>,
    count: usize,
}

impl<'a> SliceOracle<'a> {
    pub fn new(dim: usize, f: impl Fn(&Direction) -> Result<f64> + Sync + 'a) -> Self {
        Self {
            dim,
            f: Box::new(f),
            count: 0,
        }
    }

    /// f(θ) = W_p^p between the projections of `mu` and `nu`.
    pub fn for_clouds(mu: &'a PointCloud, nu: &'a PointCloud, p: f64) -> Self {
        Self::new(mu.dim(), move |theta| slice_cost(mu, nu, theta, p))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn evaluate(&mut self, theta: &Direction) -> Result<f64> {
        Ok(self.evaluate_batch(std::slice::from_ref(theta))?[0])
    }

    /// Evaluates in parallel; results are in input order and the counter
    /// grows by `thetas.len()`.
    pub fn evaluate_batch(&mut self, thetas: &[Direction]) -> Result<Vec<f64>> {
        if thetas.iter().any(|t| t.dim() != self.dim) {
            return Err(invalid("direction dimension does not match the oracle"));
        }
        self.count += thetas.len();
        let vals = thetas.par_iter().map(|t| (self.f)(t)).collect::<Result<Vec<f64>>>()?;
        if let Some(v) = vals.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidState(format!("oracle returned non-finite value {v}")));
        }
        Ok(vals)
    }
}

fn max_abs_cos(dirs: &[Direction], theta: &Direction) -> f64 {
    dirs.iter()
        .map(|d| dot(d.coords(), theta.coords()).abs())
        .fold(0.0, f64::max)
}

/// Proposes up to `count` new directions by maximizing the acquisition over
/// a fresh uniform pool, skipping candidates whose |cos| to `current` or to
/// earlier picks exceeds the cutoff.
///
/// With annealing enabled, each pick is the best remaining candidate with
/// probability ε_t = t^(−γ) (t = `anneal_step` + pick index) and a uniform
/// remaining candidate otherwise.
pub fn propose_batch<R: Rng + ?Sized>(
    state: &GpState,
    current: &[Direction],
    cfg: &SelectorConfig,
    count: usize,
    anneal_step: u64,
    rng: &mut R,
) -> Result<Vec<Direction>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let dim = state.train_dirs().dim();
    let pool = sample_uniform(rng, dim, cfg.pool_size)?.into_vec();
    let scores = state.score_pool(&pool, cfg.acquisition(), state.best_observed(), rng)?;
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));

    let mut taken = vec![false; pool.len()];
    let mut picks: Vec<Direction> = Vec::with_capacity(count);
    let admissible = |i: usize, taken: &[bool], picks: &[Direction]| {
        !taken[i] && max_abs_cos(current, &pool[i]) <= cfg.cos_cutoff && max_abs_cos(picks, &pool[i]) <= cfg.cos_cutoff
    };

    match cfg.anneal_gamma {
        None => {
            for &i in &order {
                if picks.len() == count {
                    break;
                }
                if admissible(i, &taken, &picks) {
                    taken[i] = true;
                    picks.push(pool[i].clone());
                }
            }
        }
        Some(gamma) => {
            while picks.len() < count {
                let t = anneal_step.max(1) + picks.len() as u64;
                let eps = (t as f64).powf(-gamma);
                let remaining: Vec<usize> = order
                    .iter()
                    .copied()
                    .filter(|&i| admissible(i, &taken, &picks))
                    .collect();
                if remaining.is_empty() {
                    break;
                }
                let u: f64 = rng.gen();
                let i = if u < eps {
                    remaining[0]
                } else {
                    remaining[rng.gen_range(0..remaining.len())]
                };
                taken[i] = true;
                picks.push(pool[i].clone());
            }
        }
    }
    Ok(picks)
}

/// Evaluated directions and their values, in evaluation order.
#[derive(Debug, Clone, Default)]
struct History {
    dirs: Vec<Direction>,
    vals: Vec<f64>,
}

impl History {
    fn extend(&mut self, dirs: &[Direction], vals: &[f64]) {
        self.dirs.extend_from_slice(dirs);
        self.vals.extend_from_slice(vals);
    }

    fn fit(&self) -> Result<GpState> {
        gp::fit(&DirectionSet::new(self.dirs.clone())?, &self.vals)
    }
}

/// BOSW result with the value of every retained direction.
#[derive(Debug, Clone)]
pub struct Selection {
    pub set: DirectionSet,
    pub values: Vec<f64>,
}

impl Selection {
    pub fn best(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Grows a set from `init_size` uniform directions by GP batches until it
/// holds exactly L directions. Uses exactly L oracle evaluations.
///
/// If deduplication empties the pool, the shortfall is filled with uniform
/// directions so the budget is still met.
pub fn bosw<R: Rng + ?Sized>(oracle: &mut SliceOracle<'_>, cfg: &SelectorConfig, rng: &mut R) -> Result<Selection> {
    cfg.validate()?;
    let dim = oracle.dim();
    let init = sample_uniform(rng, dim, cfg.init_size)?.into_vec();
    let vals = oracle.evaluate_batch(&init)?;
    let mut hist = History::default();
    hist.extend(&init, &vals);

    while hist.dirs.len() < cfg.l {
        let need = cfg.batch.min(cfg.l - hist.dirs.len());
        let state = hist.fit()?;
        let step = hist.dirs.len() as u64 + 1;
        let mut props = propose_batch(&state, &hist.dirs, cfg, need, step, rng)?;
        while props.len() < need {
            props.push(uniform_direction(rng, dim));
        }
        let vals = oracle.evaluate_batch(&props)?;
        hist.extend(&props, &vals);
    }
    Ok(Selection {
        set: DirectionSet::new(hist.dirs)?,
        values: hist.vals,
    })
}

/// Refines `seed` with `rounds` GP batches. Each round pairs the k-th best
/// proposal with the k-th worst incumbent and swaps only on strict
/// improvement. Uses |seed| + b·r oracle evaluations when every batch is full.
pub fn abosw<R: Rng + ?Sized>(
    oracle: &mut SliceOracle<'_>,
    seed: &DirectionSet,
    cfg: &SelectorConfig,
    rng: &mut R,
) -> Result<Selection> {
    cfg.validate()?;
    if seed.len() != cfg.l {
        return Err(invalid(format!(
            "seed has {} directions, expected L = {}",
            seed.len(),
            cfg.l
        )));
    }
    if seed.dim() != oracle.dim() {
        return Err(invalid("seed dimension does not match the oracle"));
    }
    let mut current = seed.as_slice().to_vec();
    let mut values = oracle.evaluate_batch(&current)?;
    let mut hist = History::default();
    hist.extend(&current, &values);

    for _ in 0..cfg.rounds {
        let state = hist.fit()?;
        let step = hist.dirs.len() as u64 + 1;
        let props = propose_batch(&state, &current, cfg, cfg.batch, step, rng)?;
        if props.is_empty() {
            continue;
        }
        let prop_vals = oracle.evaluate_batch(&props)?;
        hist.extend(&props, &prop_vals);

        let mut best_first: Vec<usize> = (0..props.len()).collect();
        best_first.sort_by(|&a, &b| prop_vals[b].total_cmp(&prop_vals[a]).then(a.cmp(&b)));
        let mut worst_first: Vec<usize> = (0..current.len()).collect();
        worst_first.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        for (&p, &w) in best_first.iter().zip(&worst_first) {
            if prop_vals[p] > values[w] {
                current[w] = props[p].clone();
                values[w] = prop_vals[p];
            }
        }
    }
    Ok(Selection {
        set: DirectionSet::new(current)?,
        values,
    })
}

/// Which rule produces the directions at each flow step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SelectorKind {
    /// Fresh uniform directions every step.
    Mc,
    /// A QSW set; randomized kinds are re-randomized every step.
    Qsw {
        kind: QswKind,
        randomize: RandomizeMode,
    },
    Bosw,
    Rbosw,
    Abosw,
    Arbosw,
}

impl SelectorKind {
    /// Every selector accepted by [`FromStr`], by canonical name.
    pub fn all() -> Vec<SelectorKind> {
        let mut out = vec![SelectorKind::Mc];
        for kind in QswKind::ALL {
            out.push(SelectorKind::Qsw {
                kind,
                randomize: RandomizeMode::None,
            });
        }
        for kind in QswKind::ALL {
            if kind.is_sobol() {
                out.push(SelectorKind::Qsw {
                    kind,
                    randomize: RandomizeMode::Scramble,
                });
            }
        }
        for kind in QswKind::ALL {
            out.push(SelectorKind::Qsw {
                kind,
                randomize: RandomizeMode::Rotate,
            });
        }
        out.extend([
            SelectorKind::Bosw,
            SelectorKind::Rbosw,
            SelectorKind::Abosw,
            SelectorKind::Arbosw,
        ]);
        out
    }

    pub fn is_randomized_qsw(self) -> bool {
        matches!(self, SelectorKind::Qsw { randomize, .. } if randomize != RandomizeMode::None)
    }

    pub fn is_bo(self) -> bool {
        matches!(
            self,
            SelectorKind::Bosw | SelectorKind::Rbosw | SelectorKind::Abosw | SelectorKind::Arbosw
        )
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SelectorKind::Mc => f.write_str("MC"),
            SelectorKind::Qsw { kind, randomize } => {
                let prefix = match randomize {
                    RandomizeMode::None => "",
                    RandomizeMode::Scramble => "R",
                    RandomizeMode::Rotate if kind.is_sobol() => "RR",
                    RandomizeMode::Rotate => "R",
                };
                write!(f, "{prefix}{}QSW", kind.letter())
            }
            SelectorKind::Bosw => f.write_str("BOSW"),
            SelectorKind::Rbosw => f.write_str("RBOSW"),
            SelectorKind::Abosw => f.write_str("ABOSW"),
            SelectorKind::Arbosw => f.write_str("ARBOSW"),
        }
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let upper = s.trim().to_ascii_uppercase();
        if upper == "SW" {
            return Ok(SelectorKind::Mc);
        }
        SelectorKind::all()
            .into_iter()
            .find(|k| k.to_string() == upper)
            .ok_or_else(|| invalid(format!("unknown method `{s}` (see --list-methods)")))
    }
}

impl Serialize for SelectorKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SelectorKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Per-run selector state for a flow: caches the deterministic QSW base
/// set and the last selection, and tracks oracle evaluations.
#[derive(Debug, Clone)]
pub struct SelectorRun {
    kind: SelectorKind,
    cfg: SelectorConfig,
    dim: usize,
    base: Option<DirectionSet>,
    current: Option<DirectionSet>,
    evals: usize,
}

impl SelectorRun {
    pub fn new(kind: SelectorKind, cfg: SelectorConfig, dim: usize) -> Result<Self> {
        cfg.validate()?;
        if let SelectorKind::Qsw { kind: q, randomize } = kind {
            if !q.supports_dim(dim) {
                return Err(invalid(format!("{kind} does not support d={dim}")));
            }
            if randomize == RandomizeMode::Scramble && !q.is_sobol() {
                return Err(invalid(format!("{q} cannot be scrambled")));
            }
        }
        if matches!(kind, SelectorKind::Abosw | SelectorKind::Arbosw) && !cfg.seed_kind.supports_dim(dim) {
            return Err(invalid(format!("seed kind {} does not support d={dim}", cfg.seed_kind)));
        }
        Ok(Self {
            kind,
            cfg,
            dim,
            base: None,
            current: None,
            evals: 0,
        })
    }

    pub fn kind(&self) -> SelectorKind {
        self.kind
    }

    /// Oracle evaluations spent so far.
    pub fn evals(&self) -> usize {
        self.evals
    }

    fn base(&mut self, kind: QswKind) -> Result<&DirectionSet> {
        if self.base.is_none() {
            self.base = Some(base_set(kind, self.dim, self.cfg.l, &self.cfg.qsw)?);
        }
        Ok(self.base.as_ref().expect("base set was just built"))
    }

    fn reuse(&self, t: usize) -> Result<&DirectionSet> {
        self.current
            .as_ref()
            .ok_or_else(|| Error::InvalidState(format!("no previous selection to reuse at step {t}")))
    }

    /// Directions for outer step `t` (0-based). `oracle` must evaluate f on
    /// the current cloud pair; it is only called on (re)build steps.
    pub fn select_for_step<R: Rng + ?Sized>(
        &mut self,
        t: usize,
        oracle: &mut SliceOracle<'_>,
        rng: &mut R,
    ) -> Result<&DirectionSet> {
        if oracle.dim() != self.dim {
            return Err(invalid("oracle dimension does not match the selector"));
        }
        let l = self.cfg.l;
        let before = oracle.count();
        let rebuild = match self.kind {
            SelectorKind::Mc => Some(sample_uniform(rng, self.dim, l)?),
            SelectorKind::Qsw { kind, randomize } => match randomize {
                RandomizeMode::None if self.current.is_some() => None,
                RandomizeMode::None => Some(self.base(kind)?.clone()),
                RandomizeMode::Scramble => Some(make_qsw(
                    kind,
                    self.dim,
                    l,
                    RandomizeMode::Scramble,
                    rng,
                    &self.cfg.qsw,
                )?),
                RandomizeMode::Rotate => {
                    let base = self.base(kind)?.clone();
                    Some(rotate_set(&base, rng)?)
                }
            },
            SelectorKind::Bosw if t == 0 => Some(bosw(oracle, &self.cfg, rng)?.set),
            SelectorKind::Rbosw if t % self.cfg.refresh_period == 0 => Some(bosw(oracle, &self.cfg, rng)?.set),
            SelectorKind::Abosw if t == 0 => {
                let seed = self.base(self.cfg.seed_kind)?.clone();
                Some(abosw(oracle, &seed, &self.cfg, rng)?.set)
            }
            SelectorKind::Arbosw if t % self.cfg.refresh_period == 0 => {
                // A fresh rotation of the seed per refresh; re-running on the
                // unrotated seed would only revisit the same neighbourhood.
                let seed = rotate_set(&self.base(self.cfg.seed_kind)?.clone(), rng)?;
                Some(abosw(oracle, &seed, &self.cfg, rng)?.set)
            }
            _ => None,
        };
        self.evals += oracle.count() - before;
        if let Some(set) = rebuild {
            self.current = Some(set);
        }
        self.reuse(t)
    }
}
