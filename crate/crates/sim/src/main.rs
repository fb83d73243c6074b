use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use fedcode::coding::lambda_table;
use fedcode::harness::emit::{aggregate_rows, trial_rows};
use fedcode::harness::experiment::run_experiment_with;
use fedcode::harness::{emit, DatasetSpec, ExperimentConfig, Format, Manifest, TrialData, ValidationConfig};
use fedcode::hetero::PartitionKind;
use fedcode::sharing::{distance_contraction, expected_distance_after_sharing};

#[derive(Parser)]
#[command(name = "sim", version, about = "Federated learning with stragglers and privacy-flexible data sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expected heterogeneity after sharing and the second-moment coefficients.
    Theory {
        #[arg(long = "N")]
        n: usize,
        #[arg(long = "K")]
        k: usize,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        d: usize,
        /// Straggling probability for the coefficient table.
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Initial squared distance to uniform; defaults to (N−1)/N.
        #[arg(long)]
        dist0: Option<f64>,
    },
    /// Compare every closed form against its oracle. Exit code 1 on any failure.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Perturb every overlap coefficient (mutation check).
        #[arg(long)]
        lambda_perturbation: Option<f64>,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run one experiment and write results.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write one row per trial.
        #[arg(long)]
        per_trial: bool,
        #[arg(long, value_delimiter = ',', default_value = "csv,json-lines")]
        format: Vec<FormatArg>,
    },
    /// Run the cartesian product of parameter values (key=v1,v2,...).
    Sweep {
        #[arg(long, num_args = 1.., required = true)]
        grid: Vec<String>,
        /// Base config; defaults to the desk MNIST setup under --data-dir.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "data/mnist")]
        data_dir: PathBuf,
        #[arg(long, default_value = "sweep-out")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "csv,json-lines")]
        format: Vec<FormatArg>,
    },
}

#[derive(Clone, Copy, Debug, clap::ValueEnum)]
enum FormatArg {
    Csv,
    JsonLines,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::JsonLines => Format::JsonLines,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Theory { n, k, c, d, p, dist0 } => theory(n, k, c, d, p, dist0),
        Command::Validate {
            config,
            lambda_perturbation,
            json,
        } => validate(config.as_deref(), lambda_perturbation, json),
        Command::Train {
            config,
            out,
            per_trial,
            format,
        } => train(&config, &out, per_trial, &format),
        Command::Sweep {
            grid,
            config,
            data_dir,
            out,
            format,
        } => sweep(&grid, config.as_deref(), &data_dir, &out, &format),
    }
}

fn theory(n: usize, k: usize, c: f64, d: usize, p: f64, dist0: Option<f64>) -> Result<ExitCode> {
    let dist0 = dist0.unwrap_or((n as f64 - 1.0) / n as f64);
    let value: f64 = expected_distance_after_sharing(dist0, n, k, c, d)?;
    let table = lambda_table(d, p)?;
    println!("N={n} K={k} c={c} d={d} p={p}");
    println!("initial distance        {dist0}");
    println!("expected distance       {value}");
    println!("contraction factor      {}", distance_contraction(n, c, d));
    println!("lambda same p-p         {}", table.same_pp);
    println!("lambda diff p-p         {}", table.diff_pp);
    println!("lambda same np-p        {}", table.same_npp);
    println!("lambda diff np-p        [{}, {}]", table.diff_npp.lower, table.diff_npp.upper);
    println!("lambda same np-np       [{}, {}]", table.same_npnp.lower, table.same_npnp.upper);
    println!("lambda diff np-np       [{}, {}]", table.diff_npnp.lower, table.diff_npnp.upper);
    Ok(ExitCode::SUCCESS)
}

fn validate(config: Option<&Path>, perturbation: Option<f64>, json: bool) -> Result<ExitCode> {
    let mut cfg: ValidationConfig = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => ValidationConfig::default(),
    };
    if let Ok(v) = std::env::var(fedcode::harness::config::SEED_ENV) {
        cfg.seed = v.trim().parse().context("SIM_SEED")?;
    }
    if let Some(delta) = perturbation {
        cfg.lambda_perturbation = delta;
    }
    let report = fedcode::harness::validate_closed_forms(&cfg)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        for c in &report.checks {
            println!(
                "{} {:<45} value={:.6e} reference={:.6e} tol={:.1e}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.value,
                c.reference,
                c.tolerance,
                c.detail
            );
        }
    }
    Ok(if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let cfg = ExperimentConfig::from_file(path)
        .with_context(|| format!("loading {}", path.display()))?
        .with_env_overrides()?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_data(cfg: &ExperimentConfig) -> Result<TrialData> {
    if let DatasetSpec::Mnist { train_images, .. } = &cfg.dataset {
        if !train_images.exists() {
            bail!(
                "{} not found. Run `python3 scripts/make_mnist_subset.py` to build the bundled subset, \
                 or download the four MNIST IDX files and point the config at them.",
                train_images.display()
            );
        }
    }
    Ok(TrialData::load(cfg)?)
}

fn train(config: &Path, out: &Path, per_trial: bool, formats: &[FormatArg]) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let data = load_data(&cfg)?;
    let (agg, trials) = run_experiment_with(&cfg, &data)?;
    let mut rows = aggregate_rows(&agg);
    if per_trial {
        for t in &trials {
            rows.extend(trial_rows(&cfg.name, t));
        }
    }
    let formats: Vec<Format> = formats.iter().map(|&f| f.into()).collect();
    let written = emit(&rows, &Manifest::new(vec![cfg]), out, &formats)?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// `key=v1,v2,...` pairs; the product is taken in the order given.
fn parse_grid(grid: &[String]) -> Result<Vec<(String, Vec<String>)>> {
    grid.iter()
        .map(|g| {
            let (k, vs) = g.split_once('=').with_context(|| format!("`{g}` is not key=values"))?;
            let vals: Vec<String> = vs.split(',').map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
            if vals.is_empty() {
                bail!("no values for `{k}`");
            }
            Ok((k.trim().to_string(), vals))
        })
        .collect()
}

fn set_param(cfg: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    let f = || value.parse::<f64>().with_context(|| format!("{key}={value}"));
    let u = || value.parse::<usize>().with_context(|| format!("{key}={value}"));
    match key {
        "c" => cfg.share.c = f()?,
        "d" => cfg.share.d = u()?,
        "p" => cfg.p = f()?,
        "alpha" => cfg.partition = PartitionKind::Dirichlet { alpha: f()? },
        "partition" => {
            cfg.partition = match value {
                "iid" => PartitionKind::Iid,
                "single_class" => PartitionKind::SingleClass,
                other => bail!("unknown partition `{other}` (use alpha=... for Dirichlet)"),
            }
        }
        "eta0" => cfg.eta0 = f()?,
        "gamma" => cfg.gamma = f()?,
        "rounds" => cfg.rounds = u()?,
        "trials" => cfg.trials = u()?,
        other => bail!("unknown sweep key `{other}`"),
    }
    Ok(())
}

fn sweep(grid: &[String], config: Option<&Path>, data_dir: &Path, out: &Path, formats: &[FormatArg]) -> Result<ExitCode> {
    let base = match config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::desk(DatasetSpec::mnist_dir(data_dir), PartitionKind::Dirichlet { alpha: 0.1 })
            .with_env_overrides()?,
    };
    let axes = parse_grid(grid)?;
    let mut configs = vec![(base.clone(), Vec::<String>::new())];
    for (key, vals) in &axes {
        let mut next = Vec::new();
        for (cfg, label) in &configs {
            for v in vals {
                let mut c = cfg.clone();
                set_param(&mut c, key, v)?;
                let mut l = label.clone();
                l.push(format!("{key}={v}"));
                next.push((c, l));
            }
        }
        configs = next;
    }
    let data = load_data(&base)?;
    let mut rows = Vec::new();
    let mut ran = Vec::new();
    for (mut cfg, label) in configs {
        cfg.name = label.join(",");
        if let Err(e) = cfg.validate() {
            eprintln!("skipping {}: {e}", cfg.name);
            continue;
        }
        let (agg, _) = run_experiment_with(&cfg, &data)?;
        println!(
            "{:<32} round-{} accuracy {:.4}",
            cfg.name,
            cfg.rounds,
            agg.mean_at("accuracy", cfg.rounds).unwrap_or(f64::NAN)
        );
        rows.extend(aggregate_rows(&agg));
        ran.push(cfg);
    }
    let formats: Vec<Format> = formats.iter().map(|&f| f.into()).collect();
    for p in emit(&rows, &Manifest::new(ran), out, &formats)? {
        println!("wrote {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}
