//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use slicekit::experiment::{
    approx_errors, loglog_slope, method_rng, reference_value, run_experiment, synthetic_image_pair, ExperimentKind,
    GaussianFixture, RunConfig,
};
use slicekit::flows::{euler_flow, histogram_tv, style_transfer, FlowConfig, FlowTrace};
use slicekit::gp::{self, angular_rbf, GpOptions};
use slicekit::landscapes::{budgeted_search, LandscapeKind, LandscapeSet};
use slicekit::ot1d::{sw_estimate, sw_gradient, wasserstein_1d, GradientMode, PointCloud};
use slicekit::qsw::{base_set, QswKind, RandomizeMode};
use slicekit::selectors::{abosw, SelectorConfig, SelectorKind, SelectorRun, SliceOracle};
use slicekit::sphere::{sample_uniform, uniform_direction, Direction, DirectionSet};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn method(name: &str) -> SelectorKind {
    name.parse().expect("known method name")
}

fn brute_force(xs: &[f64], ys: &[f64], p: f64) -> f64 {
    fn walk(xs: &[f64], ys: &[f64], used: &mut [bool], i: usize, acc: f64, p: f64, best: &mut f64) {
        if i == xs.len() {
            *best = best.min(acc);
            return;
        }
        for j in 0..ys.len() {
            if !used[j] {
                used[j] = true;
                walk(xs, ys, used, i + 1, acc + (xs[i] - ys[j]).abs().powf(p), p, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    walk(xs, ys, &mut vec![false; ys.len()], 0, 0.0, p, &mut best);
    best / xs.len() as f64
}

fn one_d_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let n = rng.gen_range(1..=6);
        let p = if case % 2 == 0 { 1.0 } else { 2.0 };
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-50i32..=50) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-50i32..=50) as f64).collect();
        let sorted = wasserstein_1d(&xs, &ys, p).map_err(|e| e.to_string())?;
        let brute = brute_force(&xs, &ys, p);
        if sorted != brute {
            return Err(format!("case {case}: sorted {sorted} vs brute force {brute}"));
        }
    }
    Ok("200/200 exact matches".into())
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> PointCloud {
    let data = (0..n * d)
        .map(|_| shift + Distribution::<f64>::sample(&StandardNormal, &mut *rng))
        .collect();
    PointCloud::new(n, d, data).unwrap()
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let x = gaussian(&mut rng, 32, 3, 0.0);
        let y = gaussian(&mut rng, 32, 3, 1.5);
        let thetas = sample_uniform(&mut rng, 3, 16).unwrap();
        let g = sw_gradient(&x, &y, &thetas, GradientMode::Sw2Squared).map_err(|e| e.to_string())?;
        let f = |z: &PointCloud| sw_estimate(z, &y, &thetas, 2.0).unwrap().value;
        let h = 1e-6;
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..x.as_slice().len() {
            let mut plus = x.as_slice().to_vec();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let fd =
                (f(&PointCloud::new(32, 3, plus).unwrap()) - f(&PointCloud::new(32, 3, minus).unwrap())) / (2.0 * h);
            num += (g[k] - fd).powi(2);
            den += fd * fd;
        }
        worst = worst.max((num / den).sqrt());
    }
    check(worst <= 1e-4, format!("worst relative error {worst:.2e} (limit 1e-4)"))
}

struct ApproxTable {
    /// (method, L, mean absolute error over seeds)
    rows: Vec<(String, usize, f64)>,
}

impl ApproxTable {
    fn mean(&self, m: &str, l: usize) -> f64 {
        self.rows
            .iter()
            .find(|r| r.0 == m && r.1 == l)
            .map(|r| r.2)
            .expect("row present")
    }
}

/// The approx-error protocol: 5 seeded fixtures, SW₂² error against the
/// 100 000-slice reference. QSW kinds use L ≤ 1000.
fn approx_table() -> ApproxTable {
    let cache = tempfile::tempdir().unwrap();
    let scfg = SelectorConfig::default();
    let plans: [(&str, &[usize]); 4] = [
        ("MC", &[10, 100, 1000, 10_000]),
        ("EQSW", &[100, 1000]),
        ("SQSW", &[100, 1000]),
        ("CQSW", &[100, 1000]),
    ];
    let mut sums: Vec<(String, usize, f64)> = Vec::new();
    for seed in 0..5 {
        let (x, y) = GaussianFixture::default().sample(seed).unwrap();
        let reference = reference_value(&x, &y, 2.0, 100_000, Some(cache.path())).unwrap();
        for (name, budgets) in plans {
            let errs = approx_errors(&x, &y, method(name), seed, budgets, reference, 2.0, &scfg).unwrap();
            for (l, e) in errs {
                match sums.iter_mut().find(|r| r.0 == name && r.1 == l) {
                    Some(r) => r.2 += e / 5.0,
                    None => sums.push((name.to_string(), l, e / 5.0)),
                }
            }
        }
    }
    ApproxTable { rows: sums }
}

fn mc_rate(table: &ApproxTable) -> Outcome {
    let pts: Vec<(f64, f64)> = [10, 100, 1000, 10_000]
        .iter()
        .map(|&l| (l as f64, table.mean("MC", l)))
        .collect();
    let slope = loglog_slope(&pts);
    let errs: Vec<String> = pts.iter().map(|p| format!("{:.2e}", p.1)).collect();
    check(
        (-0.65..=-0.35).contains(&slope),
        format!("slope {slope:.3} (errors {})", errs.join(", ")),
    )
}

fn qsw_beats_mc(table: &ApproxTable) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for l in [100, 1000] {
        let mc = table.mean("MC", l);
        for name in ["EQSW", "SQSW", "CQSW"] {
            let e = table.mean(name, l);
            ok &= e <= mc;
            parts.push(format!("{name}@{l} {e:.2e}"));
        }
        parts.push(format!("MC@{l} {mc:.2e}"));
    }
    check(ok, parts.join(", "))
}

fn flow(name: &str, seed: u64) -> FlowTrace {
    let (x, y) = GaussianFixture::default().sample(seed).unwrap();
    let scfg = SelectorConfig::default();
    euler_flow(
        &x,
        &y,
        method(name),
        &scfg,
        &FlowConfig::default(),
        &mut method_rng(seed),
    )
    .unwrap()
}

fn flow_convergence() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["MC", "CQSW", "ARBOSW"] {
        let t = flow(name, 0);
        let (a, b) = (t.metric_at(100).unwrap(), t.metric_at(500).unwrap());
        ok &= b <= 1e-2 * a;
        parts.push(format!("{name} {:.2e}", b / a));
    }
    check(ok, format!("step500/step100: {}", parts.join(", ")))
}

fn hybrid_competitiveness() -> Outcome {
    let mean_final = |name: &str| (0..3).map(|s| flow(name, s).metric_at(500).unwrap()).sum::<f64>() / 3.0;
    let arbosw = mean_final("ARBOSW");
    let bosw = mean_final("BOSW");
    let (best_name, best) = SelectorKind::all()
        .into_iter()
        .filter(|k| k.is_randomized_qsw())
        .map(|k| (k.to_string(), mean_final(&k.to_string())))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    check(
        arbosw <= 2.0 * best && bosw > arbosw,
        format!("ARBOSW {arbosw:.2e}, best RQSW {best_name} {best:.2e}, BOSW {bosw:.2e}"),
    )
}

fn abosw_builds(seeds: std::ops::Range<u64>) -> Vec<(DirectionSet, DirectionSet, usize)> {
    let cfg = SelectorConfig::default();
    let qseed = base_set(cfg.seed_kind, 3, cfg.l, &cfg.qsw).unwrap();
    seeds
        .map(|seed| {
            let (x, y) = GaussianFixture::default().sample(seed).unwrap();
            let mut oracle = SliceOracle::for_clouds(&x, &y, 2.0);
            let sel = abosw(&mut oracle, &qseed, &cfg, &mut method_rng(seed)).unwrap();
            (qseed.clone(), sel.set, oracle.count())
        })
        .collect()
}

fn abosw_perturbation() -> Outcome {
    let mut worst = 0;
    for (seed, out, _) in abosw_builds(0..20) {
        let changed = out.iter().filter(|d| !seed.iter().any(|e| e == *d)).count();
        worst = worst.max(changed);
    }
    check(
        worst <= 10,
        format!("at most {worst} of 100 directions changed over 20 builds"),
    )
}

fn budget_accounting() -> Outcome {
    let cfg = SelectorConfig::default();
    let (b, r, l) = (cfg.batch, cfg.rounds, cfg.l);
    for seed in 0..20 {
        let (x, y) = GaussianFixture::default().sample(seed).unwrap();
        for (name, per_build) in [("BOSW", l), ("ABOSW", l + b * r), ("RBOSW", l), ("ARBOSW", l + b * r)] {
            let mut run = SelectorRun::new(method(name), cfg, 3).unwrap();
            let mut oracle = SliceOracle::for_clouds(&x, &y, 2.0);
            let mut rng = method_rng(seed);
            let steps = 2 * cfg.refresh_period;
            for t in 0..steps {
                run.select_for_step(t, &mut oracle, &mut rng).unwrap();
            }
            let builds = match name {
                "BOSW" | "ABOSW" => 1,
                _ => steps.div_ceil(cfg.refresh_period),
            };
            if oracle.count() != per_build * builds || run.evals() != oracle.count() {
                return Err(format!(
                    "{name} seed {seed}: {} evaluations, expected {}",
                    oracle.count(),
                    per_build * builds
                ));
            }
        }
    }
    Ok(format!(
        "BOSW/RBOSW {l} and ABOSW/ARBOSW {} per build on 20 seeds",
        l + b * r
    ))
}

fn landscape_benchmark() -> Outcome {
    let lands = LandscapeSet::frozen();
    let cfg = SelectorConfig::default();
    let bosw = (0..5)
        .map(|s| {
            budgeted_search(
                SelectorKind::Bosw,
                &lands,
                LandscapeKind::Quadratic,
                20,
                &cfg,
                &mut method_rng(s),
            )
            .unwrap()
            .best
        })
        .sum::<f64>()
        / 5.0;
    let mut parts = vec![format!("BOSW {bosw:.4}")];
    let mut ok = true;
    for kind in QswKind::ALL {
        let q = SelectorKind::Qsw {
            kind,
            randomize: RandomizeMode::None,
        };
        let best = budgeted_search(q, &lands, LandscapeKind::Quadratic, 20, &cfg, &mut method_rng(0))
            .unwrap()
            .best;
        ok &= bosw >= best;
        parts.push(format!("{q} {best:.4}"));
    }
    check(ok, parts.join(", "))
}

fn kernel_suite() -> Outcome {
    let e = |i| Direction::basis(3, i).unwrap();
    let self_k = angular_rbf(&e(0), &e(0), 0.7).unwrap();
    let anti = angular_rbf(&e(0), &e(0).neg(), std::f64::consts::PI).unwrap();
    if self_k != 1.0 || (anti - (-0.5f64).exp()).abs() > 1e-12 {
        return Err(format!("k(θ,θ) = {self_k}, antipodal {anti}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let dirs = sample_uniform(&mut rng, 3, 20).unwrap();
    let vals: Vec<f64> = dirs
        .iter()
        .map(|d| (2.0 * d.coords()[0]).sin() + d.coords()[1])
        .collect();
    let state = gp::fit_with(
        &dirs,
        &vals,
        &GpOptions {
            lengthscale: Some(0.5),
            ..Default::default()
        },
    )
    .unwrap();
    let worst = dirs
        .iter()
        .zip(&vals)
        .map(|(d, v)| (state.posterior(d).unwrap().0 - v).abs())
        .fold(0.0, f64::max);
    if state.jitter() != 1e-8 || worst > 1e-4 {
        return Err(format!(
            "interpolation error {worst:.2e} at jitter {:.0e}",
            state.jitter()
        ));
    }

    let mut worst_recon: f64 = 0.0;
    for set in 0..100 {
        let mut dirs = sample_uniform(&mut rng, 3, 30).unwrap().into_vec();
        // near-duplicate pairs at cos 0.98
        for k in 0..5 {
            let a = dirs[k].clone();
            let u = uniform_direction(&mut rng, 3);
            let tangent: Vec<f64> = u
                .coords()
                .iter()
                .zip(a.coords())
                .map(|(ui, ai)| ui - u.dot(&a) * ai)
                .collect();
            let t = Direction::normalize(tangent).unwrap();
            let c = 0.98f64;
            let s = (1.0 - c * c).sqrt();
            let b: Vec<f64> = a
                .coords()
                .iter()
                .zip(t.coords())
                .map(|(ai, ti)| c * ai + s * ti)
                .collect();
            dirs.push(Direction::normalize(b).unwrap());
        }
        let dirs = DirectionSet::new(dirs).unwrap();
        let vals: Vec<f64> = (0..dirs.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let state = gp::fit(&dirs, &vals).map_err(|e| format!("set {set}: {e}"))?;
        let l = state.chol_factor();
        let mut k = gp::kernel_matrix(&dirs, state.lengthscale());
        k += DMatrix::identity(dirs.len(), dirs.len()) * state.jitter();
        worst_recon = worst_recon.max((&l * l.transpose() - k).amax());
    }
    check(
        worst_recon < 1e-10,
        format!("kernel values exact, interpolation error {worst:.1e}, 100/100 sets factorized (LLᵀ residual {worst_recon:.1e})"),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut parts = Vec::new();
    for experiment in ExperimentKind::ALL {
        let mut cfg = RunConfig::defaults(experiment);
        cfg.output = dir.path().join(experiment.to_string());
        cfg.seeds = vec![0, 1];
        cfg.selector.l = 10;
        cfg.data.fixture.n = 64;
        match experiment {
            ExperimentKind::Landscapes => cfg.methods = vec![method("MC"), method("RCQSW"), method("BOSW")],
            ExperimentKind::ApproxError => {
                cfg.methods = vec![method("MC"), method("RSQSW"), method("ARBOSW")];
                cfg.approx.budgets = vec![10, 40];
                cfg.approx.reference_slices = 2000;
            }
            ExperimentKind::Interpolate => {
                cfg.methods = vec![method("MC"), method("ARBOSW")];
                cfg.flow.steps = 60;
                cfg.flow.checkpoints = vec![30, 60];
            }
            ExperimentKind::StyleTransfer => {
                cfg.methods = vec![method("REQSW"), method("RBOSW")];
                cfg.flow.steps = 30;
                cfg.flow.checkpoints = vec![30];
                cfg.flow.eval_slices = 500;
                cfg.data.image_size = [16, 16];
            }
        }
        let first = run_experiment(&cfg, None).map_err(|e| e.to_string())?;
        if !first.success() {
            return Err(format!("{experiment}: {:?}", first.failures));
        }
        let csv = cfg.output.join("results.csv");
        let a = fs::read(&csv).unwrap();
        // rerun from the lock file alone, on a different worker count
        let locked = RunConfig::load(&cfg.output.join("config.lock")).map_err(|e| e.to_string())?;
        run_experiment(&locked, Some(1)).map_err(|e| e.to_string())?;
        let b = fs::read(&csv).unwrap();
        if a != b {
            return Err(format!("{experiment}: results.csv differs between runs"));
        }
        parts.push(format!("{experiment} {} bytes", a.len()));
    }
    Ok(format!("byte-identical reruns: {}", parts.join(", ")))
}

fn style_smoke() -> Outcome {
    let (src, tgt) = synthetic_image_pair(64, 64).unwrap();
    let scfg = SelectorConfig {
        l: 10,
        ..Default::default()
    };
    let fcfg = FlowConfig {
        steps: 200,
        checkpoints: vec![200],
        ..FlowConfig::style_defaults()
    };
    let mut parts = Vec::new();
    let mut ok = true;
    for name in ["MC", "RCQSW", "ARBOSW"] {
        let (out, trace) = style_transfer(&src, &tgt, method(name), &scfg, &fcfg, &mut method_rng(0)).unwrap();
        let tv = histogram_tv(&out, &tgt);
        let in_range = trace.final_cloud.as_slice().iter().all(|v| v.is_finite())
            && out.data.len() == 3 * 64 * 64
            && out
                .to_cloud()
                .as_slice()
                .iter()
                .all(|&v| v.fract() == 0.0 && (0.0..=255.0).contains(&v));
        ok &= tv < 0.05 && in_range;
        parts.push(format!("{name} TV {tv:.4}"));
    }
    check(ok, parts.join(", "))
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |id: usize, name: &str, limit: u64, run: &mut dyn FnMut() -> Outcome| {
        let clock = Instant::now();
        let outcome = run();
        let took = clock.elapsed();
        let slow = took > Duration::from_secs(limit);
        let (tag, detail) = match &outcome {
            Ok(d) if !slow => ("PASS", d.clone()),
            Ok(d) => ("FAIL", format!("{d}; took longer than {limit} s")),
            Err(d) => ("FAIL", d.clone()),
        };
        if tag == "FAIL" {
            failed += 1;
        }
        println!("{tag} {id:>2} {name}: {detail} [{:.1} s]", took.as_secs_f64());
    };

    report(1, "1-D OT oracle equivalence", 5, &mut one_d_oracle);
    report(2, "SW gradient vs finite differences", 30, &mut gradient_check);
    // criteria 3 and 4 share one protocol run; its cost counts against both
    let clock = Instant::now();
    let table = approx_table();
    let shared = clock.elapsed().as_secs();
    let within = |limit: u64, outcome: Outcome| match outcome {
        Ok(d) if shared <= limit => Ok(format!("{d}; protocol {shared} s")),
        Ok(d) => Err(format!("{d}; protocol took {shared} s, limit {limit} s")),
        err => err,
    };
    report(3, "MC rate", 120, &mut || within(120, mc_rate(&table)));
    report(4, "QSW beats MC", 180, &mut || within(180, qsw_beats_mc(&table)));
    report(5, "flow convergence", 300, &mut flow_convergence);
    report(6, "hybrid competitiveness", 600, &mut hybrid_competitiveness);
    report(7, "ABOSW perturbation bound", 60, &mut abosw_perturbation);
    report(8, "evaluation-budget accounting", 60, &mut budget_accounting);
    report(9, "landscape benchmark", 60, &mut landscape_benchmark);
    report(10, "kernel and GP suite", 30, &mut kernel_suite);
    report(11, "determinism", 600, &mut determinism);
    report(12, "style transfer smoke", 120, &mut style_smoke);

    println!("{} of 12 criteria passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
