use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::Parser;
use slicekit::experiment::{resolve_config, run_experiment, workers_from_env, ExperimentKind, WORKERS_ENV};
use slicekit::qsw::QswKind;
use slicekit::selectors::SelectorKind;

/// Runs sliced-Wasserstein experiments and writes results.csv, timings.csv,
/// config.lock and SVG plots to the output directory.
#[derive(Parser, Debug)]
#[command(name = "slicekit", version)]
struct Cli {
    /// landscapes, approx-error, interpolate or style-transfer.
    #[arg(required_unless_present = "list_methods")]
    experiment: Option<String>,

    /// TOML config file; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Method name, repeatable or comma-separated (see --list-methods).
    #[arg(long = "method", value_delimiter = ',')]
    methods: Vec<String>,

    /// Number of slices L.
    #[arg(long = "L")]
    l: Option<usize>,

    /// Seed, repeatable or comma-separated.
    #[arg(long = "seed", value_delimiter = ',')]
    seeds: Vec<u64>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Override any config key, e.g. `--set selector.beta=1.0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Print every selector and QSW kind name, then exit.
    #[arg(long)]
    list_methods: bool,
}

fn list_methods() {
    println!("selectors:");
    for kind in SelectorKind::all() {
        println!("  {kind}");
    }
    println!("qsw kinds (selector.seed-kind):");
    for kind in QswKind::ALL {
        println!("  {kind} ({}QSW)", kind.letter());
    }
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    if cli.list_methods {
        list_methods();
        return Ok(true);
    }
    let experiment: ExperimentKind = cli.experiment.as_deref().unwrap_or_default().parse()?;
    let text = cli
        .config
        .as_ref()
        .map(|p| std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;

    let mut overrides = Vec::new();
    for set in &cli.sets {
        let Some((k, v)) = set.split_once('=') else {
            bail!("--set expects KEY=VALUE, got `{set}`");
        };
        overrides.push((k.trim().to_string(), v.trim().to_string()));
    }
    if !cli.methods.is_empty() {
        for m in &cli.methods {
            m.parse::<SelectorKind>()?;
        }
        let quoted: Vec<String> = cli.methods.iter().map(|m| format!("{m:?}")).collect();
        overrides.push(("methods".into(), format!("[{}]", quoted.join(", "))));
    }
    if let Some(l) = cli.l {
        overrides.push(("selector.L".into(), l.to_string()));
    }
    if !cli.seeds.is_empty() {
        let seeds: Vec<String> = cli.seeds.iter().map(u64::to_string).collect();
        overrides.push(("seeds".into(), format!("[{}]", seeds.join(", "))));
    }
    if let Some(out) = &cli.out {
        overrides.push(("output".into(), format!("{:?}", out.display().to_string())));
    }

    let cfg = resolve_config(text.as_deref(), Some(experiment), &overrides)?;
    let workers = workers_from_env().with_context(|| format!("reading {WORKERS_ENV}"))?;
    let report = run_experiment(&cfg, workers)?;
    for failure in &report.failures {
        eprintln!("sub-run failed: {failure}");
    }
    println!(
        "{} rows written to {}",
        report.rows.len(),
        cfg.output.join("results.csv").display()
    );
    Ok(report.success())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
