//! Sliced-Wasserstein gradient flows between point clouds, colour transfer
//! between images, and the exact W₂ metric used to score them.

use std::time::Instant;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::io::Image;
use crate::ot1d::{sw_estimate, sw_gradient, GradientMode, PointCloud};
use crate::selectors::{SelectorConfig, SelectorKind, SelectorRun, SliceOracle};
use crate::sphere::sample_uniform;

/// Largest cloud the exact assignment solver accepts.
pub const EXACT_W2_LIMIT: usize = 4096;
/// Seed of the fixed slice set used by the sw-highL metric.
const EVAL_SEED: u64 = 0x5717_e7a1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMetric {
    /// Exact W₂ by optimal assignment.
    #[default]
    ExactW2,
    /// SW₂ over a fixed high-budget Monte Carlo slice set.
    #[serde(rename = "sw-highL")]
    SwHighL,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FlowConfig {
    pub steps: usize,
    pub step_size: f64,
    pub mode: GradientMode,
    /// 1-based step indices after which the metric is recorded.
    pub checkpoints: Vec<usize>,
    pub eval: EvalMetric,
    /// Slice count of the sw-highL metric.
    pub eval_slices: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            step_size: 0.01,
            mode: GradientMode::Sw2,
            checkpoints: vec![100, 200, 300, 400, 500],
            eval: EvalMetric::ExactW2,
            eval_slices: 10_000,
        }
    }
}

impl FlowConfig {
    /// Colour-transfer defaults: 1000 steps of size 1 on SW₂², SW₂ metric.
    ///
    /// SW₂ itself moves points a bounded distance per step regardless of the
    /// gap, which is too slow across the 0–255 range; SW₂² contracts the gap
    /// geometrically.
    pub fn style_defaults() -> Self {
        Self {
            steps: 1000,
            step_size: 1.0,
            mode: GradientMode::Sw2Squared,
            checkpoints: vec![250, 500, 750, 1000],
            eval: EvalMetric::SwHighL,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {}", self.step_size)));
        }
        if let Some(&c) = self.checkpoints.iter().find(|&&c| c == 0 || c > self.steps) {
            return Err(invalid(format!("checkpoint {c} outside 1..={}", self.steps)));
        }
        if self.eval_slices == 0 {
            return Err(invalid("eval_slices must be at least 1"));
        }
        Ok(())
    }

    fn sorted_checkpoints(&self) -> Vec<usize> {
        let mut c = self.checkpoints.clone();
        c.sort_unstable();
        c.dedup();
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub step: usize,
    pub metric: f64,
    /// Flow-loop wall-clock time up to this step, metric evaluation excluded.
    pub seconds: f64,
    /// Cumulative oracle evaluations spent by the selector.
    pub evals: usize,
}

#[derive(Debug, Clone)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub final_cloud: PointCloud,
    /// Step at which a degenerate gradient stopped the flow, if any.
    pub stopped_at: Option<usize>,
}

impl FlowTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,metric,seconds,evals\n");
        for r in &self.records {
            out.push_str(&format!("{},{:.17e},{:.6},{}\n", r.step, r.metric, r.seconds, r.evals));
        }
        out
    }

    pub fn metric_at(&self, step: usize) -> Option<f64> {
        self.records.iter().find(|r| r.step == step).map(|r| r.metric)
    }
}

/// Distance between the current cloud and the target under `eval`.
pub fn evaluate_metric(z: &PointCloud, y: &PointCloud, fcfg: &FlowConfig) -> Result<f64> {
    match fcfg.eval {
        EvalMetric::ExactW2 => exact_w2(z, y),
        EvalMetric::SwHighL => {
            let mut rng = ChaCha8Rng::seed_from_u64(EVAL_SEED);
            let thetas = sample_uniform(&mut rng, z.dim(), fcfg.eval_slices)?;
            Ok(sw_estimate(z, y, &thetas, 2.0)?.value.max(0.0).sqrt())
        }
    }
}

/// Euler scheme Z ← Z − η·n·∇SW(Z, Y) starting from Z = X.
///
/// Directions come from `kind` at every step. A degenerate SW₂ gradient
/// stops the flow; the remaining checkpoints repeat the final metric.
pub fn euler_flow<R: Rng + ?Sized>(
    x: &PointCloud,
    y: &PointCloud,
    kind: SelectorKind,
    scfg: &SelectorConfig,
    fcfg: &FlowConfig,
    rng: &mut R,
) -> Result<FlowTrace> {
    fcfg.validate()?;
    if x.len() != y.len() || x.dim() != y.dim() {
        return Err(invalid("flow endpoints must have equal size and dimension"));
    }
    let checkpoints = fcfg.sorted_checkpoints();
    let mut run = SelectorRun::new(kind, *scfg, x.dim())?;
    let scale = fcfg.step_size * x.len() as f64;
    let mut z = x.clone();
    let mut records = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    let mut elapsed = 0.0;
    let mut stopped_at = None;

    for t in 0..fcfg.steps {
        let clock = Instant::now();
        let grad = {
            let mut oracle = SliceOracle::for_clouds(&z, y, 2.0);
            let thetas = run.select_for_step(t, &mut oracle, rng)?;
            sw_gradient(&z, y, thetas, fcfg.mode)
        };
        let grad = match grad {
            Ok(g) => g,
            Err(Error::DegenerateGradient(_)) => {
                elapsed += clock.elapsed().as_secs_f64();
                stopped_at = Some(t);
                break;
            }
            Err(e) => return Err(e),
        };
        z = z.descend(&grad, scale)?;
        elapsed += clock.elapsed().as_secs_f64();

        if next.peek() == Some(&&(t + 1)) {
            next.next();
            records.push(FlowRecord {
                step: t + 1,
                metric: evaluate_metric(&z, y, fcfg)?,
                seconds: elapsed,
                evals: run.evals(),
            });
        }
    }
    if next.peek().is_some() {
        let metric = evaluate_metric(&z, y, fcfg)?;
        for &step in next {
            records.push(FlowRecord {
                step,
                metric,
                seconds: elapsed,
                evals: run.evals(),
            });
        }
    }
    Ok(FlowTrace {
        records,
        final_cloud: z,
        stopped_at,
    })
}

/// Exact 2-Wasserstein distance between equal-size uniform clouds.
pub fn exact_w2(x: &PointCloud, y: &PointCloud) -> Result<f64> {
    if x.len() != y.len() || x.dim() != y.dim() {
        return Err(invalid("exact W2 needs clouds of equal size and dimension"));
    }
    if x.len() > EXACT_W2_LIMIT {
        return Err(Error::TooLarge {
            what: "point cloud",
            size: x.len(),
            limit: EXACT_W2_LIMIT,
        });
    }
    let n = x.len();
    let cost: Vec<f64> = (0..n)
        .flat_map(|i| {
            (0..n).map(move |j| {
                x.row(i)
                    .iter()
                    .zip(y.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
            })
        })
        .collect();
    let assignment = hungarian(n, &cost);
    // summed in sorted order so that exact_w2(x, y) == exact_w2(y, x) bitwise
    let mut matched: Vec<f64> = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).collect();
    matched.sort_unstable_by(f64::total_cmp);
    let total: f64 = matched.iter().sum();
    Ok((total / n as f64).max(0.0).sqrt())
}

/// Minimum-cost perfect assignment on an n×n row-major cost matrix
/// (shortest augmenting paths with potentials, O(n³)). Returns the column
/// assigned to each row.
pub fn hungarian(n: usize, cost: &[f64]) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n×n");
    // 1-based arrays; column 0 is the virtual source
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut row_of = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![0; n];
    for j in 1..=n {
        col_of[row_of[j] - 1] = j - 1;
    }
    col_of
}

/// Resamples `cloud` to `n` rows: a uniform subset when shrinking, all rows
/// plus uniform duplicates when growing.
pub fn resample<R: Rng + ?Sized>(cloud: &PointCloud, n: usize, rng: &mut R) -> Result<PointCloud> {
    let m = cloud.len();
    if n == m {
        return Ok(cloud.clone());
    }
    let rows: Vec<usize> = if n < m {
        let mut picked = index::sample(rng, m, n).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..m).chain((m..n).map(|_| rng.gen_range(0..m))).collect()
    };
    let data = rows.iter().flat_map(|&i| cloud.row(i).iter().copied()).collect();
    PointCloud::new(n, cloud.dim(), data)
}

/// Moves the colours of `src` toward those of `tgt` with an SW flow in RGB
/// space. Coordinates are rounded to {0..255} only after the last step.
pub fn style_transfer<R: Rng + ?Sized>(
    src: &Image,
    tgt: &Image,
    kind: SelectorKind,
    scfg: &SelectorConfig,
    fcfg: &FlowConfig,
    rng: &mut R,
) -> Result<(Image, FlowTrace)> {
    let x = src.to_cloud();
    let y = resample(&tgt.to_cloud(), x.len(), rng)?;
    let trace = euler_flow(&x, &y, kind, scfg, fcfg, rng)?;
    let out = Image::from_cloud(src.width, src.height, &trace.final_cloud)?;
    Ok((out, trace))
}

/// Total-variation distance between per-channel 256-bin histograms,
/// maximized over the three channels.
pub fn histogram_tv(a: &Image, b: &Image) -> f64 {
    (0..3)
        .map(|c| {
            let hist = |img: &Image| {
                let mut h = [0.0f64; 256];
                let w = 1.0 / img.pixel_count() as f64;
                for px in img.data.chunks_exact(3) {
                    h[px[c] as usize] += w;
                }
                h
            };
            let (ha, hb) = (hist(a), hist(b));
            0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>()
        })
        .fold(0.0, f64::max)
}
