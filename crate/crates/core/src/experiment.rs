//! Experiment runner: configuration, fixtures, sub-run scheduling and
//! output files (`results.csv`, `timings.csv`, `config.lock`, `*.svg`).
//!
//! Each (method, seed) pair is an independent sub-run with its own RNG, so
//! results do not depend on scheduling. Rows are sorted before writing and
//! wall-clock times go to `timings.csv`, which keeps `results.csv`
//! byte-identical across reruns of the same `config.lock`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{invalid, Error, Result};
use crate::flows::{euler_flow, histogram_tv, style_transfer, FlowConfig};
use crate::io::{load_image, load_point_cloud, save_image, Image};
use crate::landscapes::{budgeted_search, LandscapeKind, LandscapeSet};
use crate::ot1d::{sw_estimate, PointCloud};
use crate::selectors::{SelectorConfig, SelectorKind, SelectorRun, SliceOracle};
use crate::sphere::sample_uniform;
use crate::svg::{line_plot, Axes, Series};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "SLICEKIT_WORKERS";
/// Seed of the Monte Carlo reference slice set.
const REFERENCE_SEED: u64 = 0x00de_fa17;
/// RNG stream for method randomness; stream 0 builds fixtures.
const METHOD_STREAM: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Landscapes,
    ApproxError,
    Interpolate,
    StyleTransfer,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 4] = [
        ExperimentKind::Landscapes,
        ExperimentKind::ApproxError,
        ExperimentKind::Interpolate,
        ExperimentKind::StyleTransfer,
    ];
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Landscapes => "landscapes",
            ExperimentKind::ApproxError => "approx-error",
            ExperimentKind::Interpolate => "interpolate",
            ExperimentKind::StyleTransfer => "style-transfer",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.to_string() == s)
            .ok_or_else(|| invalid(format!("unknown experiment `{s}`")))
    }
}

/// Two anisotropic Gaussian clouds in R³.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct GaussianFixture {
    pub n: usize,
    pub source_mean: [f64; 3],
    pub source_scale: [f64; 3],
    pub target_mean: [f64; 3],
    pub target_scale: [f64; 3],
}

impl Default for GaussianFixture {
    fn default() -> Self {
        Self {
            n: 512,
            source_mean: [0.0; 3],
            source_scale: [0.03; 3],
            target_mean: [1.2, -0.8, 0.4],
            target_scale: [0.015, 0.036, 0.024],
        }
    }
}

impl GaussianFixture {
    /// Draws (source, target) from `seed`.
    pub fn sample(&self, seed: u64) -> Result<(PointCloud, PointCloud)> {
        if self.n == 0 {
            return Err(invalid("fixture needs at least one point"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |mean: &[f64; 3], scale: &[f64; 3]| {
            let data: Vec<f64> = (0..self.n)
                .flat_map(|_| {
                    let mut p = [0.0; 3];
                    for k in 0..3 {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        p[k] = mean[k] + scale[k] * z;
                    }
                    p
                })
                .collect();
            PointCloud::new(self.n, 3, data)
        };
        let x = draw(&self.source_mean, &self.source_scale)?;
        let y = draw(&self.target_mean, &self.target_scale)?;
        Ok((x, y))
    }
}

/// Synthetic colour-transfer pair: a grey diagonal ramp and a two-colour
/// 8-pixel checkerboard.
pub fn synthetic_image_pair(width: usize, height: usize) -> Result<(Image, Image)> {
    let mut src = Vec::with_capacity(3 * width * height);
    let mut tgt = Vec::with_capacity(3 * width * height);
    let span = (width + height).saturating_sub(2).max(1);
    for y in 0..height {
        for x in 0..width {
            let g = ((x + y) * 255 / span) as u8;
            src.extend([g, g, g]);
            if (x / 8 + y / 8) % 2 == 0 {
                tgt.extend([200, 40, 40]);
            } else {
                tgt.extend([30, 60, 220]);
            }
        }
    }
    Ok((Image::new(width, height, src)?, Image::new(width, height, tgt)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ApproxConfig {
    /// Slice budgets L on the x-axis.
    pub budgets: Vec<usize>,
    pub reference_slices: usize,
    pub p: f64,
    /// Directory for cached reference values; defaults to `<output>/cache`.
    pub cache_dir: Option<PathBuf>,
}

impl Default for ApproxConfig {
    fn default() -> Self {
        Self {
            budgets: vec![10, 100, 1000, 10_000],
            reference_slices: 100_000,
            p: 2.0,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct LandscapeConfig {
    pub kinds: Vec<LandscapeKind>,
    pub budgets: Vec<usize>,
    pub constants: LandscapeSet,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self {
            kinds: LandscapeKind::ALL.to_vec(),
            budgets: vec![5, 10, 15, 20],
            constants: LandscapeSet::frozen(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DataConfig {
    /// Source cloud (XYZ) or image (PPM); synthetic when absent.
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub fixture: GaussianFixture,
    /// Size of the synthetic image pair.
    pub image_size: [usize; 2],
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: None,
            target: None,
            fixture: GaussianFixture::default(),
            image_size: [64, 64],
        }
    }
}

/// Fully resolved run configuration; this is what `config.lock` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub methods: Vec<SelectorKind>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub selector: SelectorConfig,
    pub flow: FlowConfig,
    pub approx: ApproxConfig,
    pub landscapes: LandscapeConfig,
    pub data: DataConfig,
}

/// Config file as written by a user: everything except `experiment` is
/// optional, and `[flow]` keys override the experiment's flow defaults.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct RawConfig {
    experiment: ExperimentKind,
    #[serde(default)]
    methods: Vec<SelectorKind>,
    #[serde(default)]
    seeds: Vec<u64>,
    output: Option<PathBuf>,
    #[serde(default)]
    selector: SelectorConfig,
    #[serde(default)]
    flow: toml::Table,
    #[serde(default)]
    approx: ApproxConfig,
    #[serde(default)]
    landscapes: LandscapeConfig,
    #[serde(default)]
    data: DataConfig,
}

fn config_err(e: impl fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl RunConfig {
    /// Defaults for `experiment` with one seed (0) and method MC.
    pub fn defaults(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            methods: vec![SelectorKind::Mc],
            seeds: vec![0],
            output: PathBuf::from("out"),
            selector: SelectorConfig::default(),
            flow: default_flow(experiment),
            approx: ApproxConfig::default(),
            landscapes: LandscapeConfig::default(),
            data: DataConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(config_err)?;
        let mut flow = toml::Table::try_from(default_flow(raw.experiment)).map_err(config_err)?;
        flow.extend(raw.flow);
        let flow: FlowConfig = flow.try_into().map_err(config_err)?;
        let base = Self::defaults(raw.experiment);
        let cfg = Self {
            experiment: raw.experiment,
            methods: if raw.methods.is_empty() {
                base.methods
            } else {
                raw.methods
            },
            seeds: if raw.seeds.is_empty() { base.seeds } else { raw.seeds },
            output: raw.output.unwrap_or(base.output),
            selector: raw.selector,
            flow,
            approx: raw.approx,
            landscapes: raw.landscapes,
            data: raw.data,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_lock(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("method list is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        self.selector.validate()?;
        self.flow.validate()?;
        self.landscapes.constants.validate()?;
        for path in [&self.data.source, &self.data.target].into_iter().flatten() {
            if !path.exists() {
                return Err(Error::Config(format!("input file {} does not exist", path.display())));
            }
        }
        if self.data.source.is_some() != self.data.target.is_some() {
            return Err(Error::Config(
                "give both data.source and data.target, or neither".into(),
            ));
        }
        match self.experiment {
            ExperimentKind::ApproxError => {
                if self.approx.budgets.is_empty() || self.approx.budgets.contains(&0) {
                    return Err(Error::Config("approx.budgets must be nonempty and positive".into()));
                }
                if self.approx.reference_slices == 0 || !(self.approx.p >= 1.0) {
                    return Err(Error::Config("approx needs reference_slices ≥ 1 and p ≥ 1".into()));
                }
            }
            ExperimentKind::Landscapes => {
                if self.landscapes.budgets.is_empty() || self.landscapes.budgets.contains(&0) {
                    return Err(Error::Config("landscapes.budgets must be nonempty and positive".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Parses a config file and applies `key=value` overrides before resolving.
///
/// Keys are dotted paths (`selector.beta`, `flow.steps`). Values are TOML
/// literals; anything that does not parse as one is taken as a string.
/// `experiment` replaces the file's experiment when given.
pub fn resolve_config(
    text: Option<&str>,
    experiment: Option<ExperimentKind>,
    overrides: &[(String, String)],
) -> Result<RunConfig> {
    let mut table: toml::Table = toml::from_str(text.unwrap_or("")).map_err(config_err)?;
    if let Some(e) = experiment {
        table.insert("experiment".into(), toml::Value::String(e.to_string()));
    }
    for (key, raw) in overrides {
        let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| toml::Value::String(raw.clone()));
        let mut parts: Vec<&str> = key.split('.').collect();
        let leaf = parts
            .pop()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Config(format!("empty override key `{key}`")))?;
        let mut node = &mut table;
        for part in parts {
            node = node
                .entry(part)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
        }
        node.insert(leaf.into(), value);
    }
    if !table.contains_key("experiment") {
        return Err(Error::Config("no experiment given".into()));
    }
    RunConfig::from_toml(&toml::to_string(&table).map_err(config_err)?)
}

fn default_flow(experiment: ExperimentKind) -> FlowConfig {
    match experiment {
        ExperimentKind::StyleTransfer => FlowConfig::style_defaults(),
        _ => FlowConfig::default(),
    }
}

/// One measurement. `axis` names what `axis_value` counts ("L" or "step").
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: String,
    pub method: String,
    pub seed: u64,
    pub axis: &'static str,
    pub axis_value: usize,
    pub metric: f64,
    pub seconds: f64,
}

impl ResultRow {
    fn key(&self) -> (&str, &str, u64, &str, usize) {
        (&self.experiment, &self.method, self.seed, self.axis, self.axis_value)
    }
}

/// Outcome of [`run_experiment`]: rows of successful sub-runs plus a
/// diagnostic per failed one.
#[derive(Debug, Default)]
pub struct RunReport {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<String>,
}

impl RunReport {
    pub fn success(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn results_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("experiment,method,seed,axis,axis_value,metric\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.16e}\n",
            r.experiment, r.method, r.seed, r.axis, r.axis_value, r.metric
        ));
    }
    out
}

fn timings_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("experiment,method,seed,axis,axis_value,seconds\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{:.6}\n",
            r.experiment, r.method, r.seed, r.axis, r.axis_value, r.seconds
        ));
    }
    out
}

/// Worker count from `SLICEKIT_WORKERS`, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`"))),
        Err(_) => Ok(None),
    }
}

/// Runs every (method, seed) sub-run and writes the output directory.
///
/// Sub-runs execute on a pool of `workers` threads (all cores when `None`).
/// Failed sub-runs are reported, and the rows of the others are still
/// written.
pub fn run_experiment(cfg: &RunConfig, workers: Option<usize>) -> Result<RunReport> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.output)?;
    fs::write(cfg.output.join("config.lock"), cfg.to_lock())?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidState(e.to_string()))?;

    let jobs: Vec<(SelectorKind, u64)> = cfg
        .methods
        .iter()
        .flat_map(|&m| cfg.seeds.iter().map(move |&s| (m, s)))
        .collect();
    let outcomes: Vec<Result<Vec<ResultRow>>> =
        pool.install(|| jobs.par_iter().map(|&(m, s)| sub_run(cfg, m, s)).collect());

    let mut report = RunReport::default();
    for ((method, seed), outcome) in jobs.iter().zip(outcomes) {
        match outcome {
            Ok(rows) => report.rows.extend(rows),
            Err(e) => report.failures.push(format!("{method} seed {seed}: {e}")),
        }
    }
    report.rows.sort_by(|a, b| a.key().cmp(&b.key()));
    fs::write(cfg.output.join("results.csv"), results_csv(&report.rows))?;
    fs::write(cfg.output.join("timings.csv"), timings_csv(&report.rows))?;
    write_plots(cfg, &report.rows)?;
    Ok(report)
}

/// RNG for a method's own randomness, independent of the fixture stream.
pub fn method_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(METHOD_STREAM);
    rng
}

fn sub_run(cfg: &RunConfig, method: SelectorKind, seed: u64) -> Result<Vec<ResultRow>> {
    match cfg.experiment {
        ExperimentKind::Landscapes => landscape_rows(cfg, method, seed),
        ExperimentKind::ApproxError => approx_rows(cfg, method, seed),
        ExperimentKind::Interpolate => interpolate_rows(cfg, method, seed),
        ExperimentKind::StyleTransfer => style_rows(cfg, method, seed),
    }
}

fn landscape_rows(cfg: &RunConfig, method: SelectorKind, seed: u64) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for &kind in &cfg.landscapes.kinds {
        for &l in &cfg.landscapes.budgets {
            let mut rng = method_rng(seed);
            let clock = Instant::now();
            let out = budgeted_search(method, &cfg.landscapes.constants, kind, l, &cfg.selector, &mut rng)?;
            rows.push(ResultRow {
                experiment: format!("landscapes/{kind}"),
                method: method.to_string(),
                seed,
                axis: "L",
                axis_value: l,
                metric: out.best,
                seconds: clock.elapsed().as_secs_f64(),
            });
        }
    }
    Ok(rows)
}

fn load_clouds(cfg: &RunConfig, seed: u64) -> Result<(PointCloud, PointCloud)> {
    match (&cfg.data.source, &cfg.data.target) {
        (Some(s), Some(t)) => Ok((load_point_cloud(s)?, load_point_cloud(t)?)),
        _ => cfg.data.fixture.sample(seed),
    }
}

/// Seeded Monte Carlo reference for SW_p^p, cached on disk under a hash of
/// the clouds and reference settings.
pub fn reference_value(x: &PointCloud, y: &PointCloud, p: f64, slices: usize, cache_dir: Option<&Path>) -> Result<f64> {
    let mut h = Sha256::new();
    h.update(b"sw-reference-v1");
    for c in [x, y] {
        h.update((c.len() as u64).to_le_bytes());
        h.update((c.dim() as u64).to_le_bytes());
        for v in c.as_slice() {
            h.update(v.to_le_bytes());
        }
    }
    h.update(p.to_le_bytes());
    h.update((slices as u64).to_le_bytes());
    h.update(REFERENCE_SEED.to_le_bytes());
    let key = hex::encode(h.finalize());

    let file = cache_dir.map(|d| d.join(format!("{key}.ref")));
    if let Some(f) = &file {
        if let Ok(text) = fs::read_to_string(f) {
            if let Ok(v) = text.trim().parse::<f64>() {
                return Ok(v);
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(REFERENCE_SEED);
    let thetas = sample_uniform(&mut rng, x.dim(), slices)?;
    let value = sw_estimate(x, y, &thetas, p)?.value;
    if let (Some(f), Some(d)) = (&file, cache_dir) {
        fs::create_dir_all(d)?;
        // write-then-rename so concurrent sub-runs never read a partial file
        let tmp = f.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, format!("{value:e}\n"))?;
        fs::rename(&tmp, f)?;
    }
    Ok(value)
}

/// |SW_p^p estimate − reference| for each budget, using the directions the
/// method would produce at the first flow step.
pub fn approx_errors(
    x: &PointCloud,
    y: &PointCloud,
    method: SelectorKind,
    seed: u64,
    budgets: &[usize],
    reference: f64,
    p: f64,
    scfg: &SelectorConfig,
) -> Result<Vec<(usize, f64)>> {
    budgets
        .iter()
        .map(|&l| {
            let cfg = SelectorConfig {
                l,
                batch: scfg.batch.min(l),
                init_size: scfg.init_size.min(l),
                ..*scfg
            };
            let mut rng = method_rng(seed);
            let mut run = SelectorRun::new(method, cfg, x.dim())?;
            let mut oracle = SliceOracle::for_clouds(x, y, p);
            let thetas = run.select_for_step(0, &mut oracle, &mut rng)?;
            let est = sw_estimate(x, y, thetas, p)?.value;
            Ok((l, (est - reference).abs()))
        })
        .collect()
}

fn approx_rows(cfg: &RunConfig, method: SelectorKind, seed: u64) -> Result<Vec<ResultRow>> {
    let (x, y) = load_clouds(cfg, seed)?;
    let cache = cfg.approx.cache_dir.clone().unwrap_or_else(|| cfg.output.join("cache"));
    let reference = reference_value(&x, &y, cfg.approx.p, cfg.approx.reference_slices, Some(&cache))?;
    let clock = Instant::now();
    let errs = approx_errors(
        &x,
        &y,
        method,
        seed,
        &cfg.approx.budgets,
        reference,
        cfg.approx.p,
        &cfg.selector,
    )?;
    let seconds = clock.elapsed().as_secs_f64();
    Ok(errs
        .into_iter()
        .map(|(l, e)| ResultRow {
            experiment: "approx-error".into(),
            method: method.to_string(),
            seed,
            axis: "L",
            axis_value: l,
            metric: e,
            seconds,
        })
        .collect())
}

fn interpolate_rows(cfg: &RunConfig, method: SelectorKind, seed: u64) -> Result<Vec<ResultRow>> {
    let (x, y) = load_clouds(cfg, seed)?;
    let trace = euler_flow(&x, &y, method, &cfg.selector, &cfg.flow, &mut method_rng(seed))?;
    Ok(trace
        .records
        .iter()
        .map(|r| ResultRow {
            experiment: "interpolate".into(),
            method: method.to_string(),
            seed,
            axis: "step",
            axis_value: r.step,
            metric: r.metric,
            seconds: r.seconds,
        })
        .collect())
}

fn style_rows(cfg: &RunConfig, method: SelectorKind, seed: u64) -> Result<Vec<ResultRow>> {
    let (src, tgt) = match (&cfg.data.source, &cfg.data.target) {
        (Some(s), Some(t)) => (load_image(s)?, load_image(t)?),
        _ => synthetic_image_pair(cfg.data.image_size[0], cfg.data.image_size[1])?,
    };
    let (out, trace) = style_transfer(&src, &tgt, method, &cfg.selector, &cfg.flow, &mut method_rng(seed))?;
    save_image(&cfg.output.join(format!("{method}-seed{seed}.ppm")), &out)?;
    let mut rows: Vec<ResultRow> = trace
        .records
        .iter()
        .map(|r| ResultRow {
            experiment: "style-transfer".into(),
            method: method.to_string(),
            seed,
            axis: "step",
            axis_value: r.step,
            metric: r.metric,
            seconds: r.seconds,
        })
        .collect();
    rows.push(ResultRow {
        experiment: "style-transfer/histogram-tv".into(),
        method: method.to_string(),
        seed,
        axis: "step",
        axis_value: cfg.flow.steps,
        metric: histogram_tv(&out, &tgt),
        seconds: trace.records.last().map_or(0.0, |r| r.seconds),
    });
    Ok(rows)
}

/// Mean metric per (experiment, method, axis value), in row order.
fn mean_series(rows: &[ResultRow]) -> BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> {
    let mut acc: BTreeMap<(String, String, usize), (f64, usize)> = BTreeMap::new();
    for r in rows {
        let e = acc
            .entry((r.experiment.clone(), r.method.clone(), r.axis_value))
            .or_default();
        e.0 += r.metric;
        e.1 += 1;
    }
    let mut out: BTreeMap<String, BTreeMap<String, Vec<(f64, f64)>>> = BTreeMap::new();
    for ((exp, method, x), (sum, n)) in acc {
        out.entry(exp)
            .or_default()
            .entry(method)
            .or_default()
            .push((x as f64, sum / n as f64));
    }
    out
}

fn write_plots(cfg: &RunConfig, rows: &[ResultRow]) -> Result<()> {
    for (exp, by_method) in mean_series(rows) {
        let series: Vec<Series> = by_method
            .into_iter()
            .map(|(label, points)| Series { label, points })
            .collect();
        let (x_label, y_label, axes) = match cfg.experiment {
            ExperimentKind::ApproxError => (
                "L",
                "mean absolute error",
                Axes {
                    log_x: true,
                    log_y: true,
                },
            ),
            ExperimentKind::Landscapes => ("L", "best fitness", Axes::default()),
            _ => (
                "step",
                "metric",
                Axes {
                    log_x: false,
                    log_y: true,
                },
            ),
        };
        let svg = line_plot(&exp, x_label, y_label, axes, &series);
        fs::write(cfg.output.join(format!("{}.svg", exp.replace('/', "-"))), svg)?;
    }
    Ok(())
}

/// Least-squares slope of log(error) against log(L).
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
