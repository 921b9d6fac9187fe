use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bose::diagnostics::{
    check_estimator_confidence, check_matrix_freedman, check_potential_and_det,
    check_self_normalized_general, check_self_normalized_shifted, check_self_normalized_symmetric,
    ols_bias_demo, ConfidenceCheck, FreedmanCheck, SelfNormalizedCheck,
};
use bose::environments::{EnvConfig, EnvKind};
use bose::harness::{
    emit_outputs, run_single, run_single_recorded, run_sweep, AlgorithmName, AlgorithmSpec,
    ExperimentConfig,
};
use bose::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(
    name = "bose",
    version,
    about = "Semiparametric contextual bandit experiments"
)]
struct Cli {
    /// Worker threads; defaults to one per core.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every replicate of a single parameter value.
    Run {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Exploration parameter; defaults to 1 (0.1 for epsgreedy).
        #[arg(long)]
        param: Option<f64>,
    },
    /// Sweep the exploration parameter and keep the best value.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
    },
    /// Run the diagnostics and write one JSON report per check.
    Diagnose {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long = "T", default_value_t = 2000)]
        horizon: u64,
        #[arg(long, default_value_t = 5)]
        d: usize,
        #[arg(long = "K", default_value_t = 5)]
        k: usize,
        #[arg(long, default_value = "confounded_sphere")]
        env: String,
    },
    /// Play a deterministic learner against the two adversarial instances.
    Lowerbound {
        #[arg(long, default_value = "oful")]
        algorithm: String,
        #[arg(long = "T", default_value_t = 1000)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare plain ridge, optimistic ridge and BOSE on the biasing stream.
    Olsdemo {
        #[arg(long = "T", default_value_t = 10_000)]
        horizon: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// Flags override values from `--config`.
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long = "T")]
    horizon: Option<u64>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long = "K")]
    k: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Also write every replicate's trace.
    #[arg(long)]
    raw: bool,
}

fn parse_algorithm(s: &str) -> Result<AlgorithmName> {
    AlgorithmName::from_name(s).ok_or_else(|| Error::Config(format!("unknown algorithm '{s}'")))
}

fn parse_env(s: &str) -> Result<EnvKind> {
    EnvKind::from_name(s).ok_or_else(|| Error::Config(format!("unknown environment '{s}'")))
}

impl ExperimentArgs {
    fn build(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e,
                })?;
                serde_json::from_str(&text)?
            }
            None => ExperimentConfig::new(
                EnvConfig::new(EnvKind::ConfoundedSphere, 10, 2),
                AlgorithmSpec::new(AlgorithmName::Bose),
                10_000,
            ),
        };
        if let Some(a) = &self.algorithm {
            cfg.algorithm.name = parse_algorithm(a)?;
        }
        if self.env.is_some() || self.d.is_some() || self.k.is_some() {
            let kind = match &self.env {
                Some(e) => parse_env(e)?,
                None => cfg.env.kind,
            };
            let mut env = EnvConfig::new(
                kind,
                self.d.unwrap_or(cfg.env.d),
                self.k.unwrap_or(cfg.env.k),
            );
            if kind == cfg.env.kind {
                env.noise_sigma = cfg.env.noise_sigma;
                env.theta_index = cfg.env.theta_index;
            }
            cfg.env = env;
        }
        if let Some(t) = self.horizon {
            cfg.horizon = t;
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(r) = self.replicates {
            cfg.replicates = r;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        cfg.raw |= self.raw;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn sweep(cfg: ExperimentConfig) -> Result<Vec<PathBuf>> {
    let summary = run_sweep(&cfg)?;
    let failed: usize = summary.cells.iter().map(|c| c.failures.len()).sum();
    if failed > 0 {
        log::warn!("{failed} replicates failed; see summary.json");
    }
    if let Some(best) = summary.best_cell() {
        log::info!(
            "best {} = {} with mean final regret {}",
            cfg.algorithm.name.name(),
            best.param_value,
            best.aggregate.as_ref().map_or(f64::NAN, |a| a.final_mean())
        );
    }
    emit_outputs(&summary, &cfg.output_dir)
}

fn write_json(dir: &Path, name: &str, value: &Value) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(path)
}

fn diagnose(
    seed: u64,
    out: &Path,
    trials: usize,
    horizon: u64,
    d: usize,
    k: usize,
    env: EnvKind,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();

    let conf = ConfidenceCheck::new(env, d, k, horizon, 0.1, trials);
    let report = check_estimator_confidence(&conf, seed)?;
    written.push(write_json(
        out,
        "confidence.json",
        &json!({ "check": conf, "report": report }),
    )?);

    let sn = SelfNormalizedCheck::new(d, horizon as usize, trials);
    for (name, reports) in [
        (
            "self_normalized_symmetric.json",
            check_self_normalized_symmetric(&sn, seed)?,
        ),
        (
            "self_normalized_general.json",
            check_self_normalized_general(&sn, 0.9, seed)?,
        ),
        // Violates the symmetry assumption; reported, not expected to pass.
        (
            "self_normalized_shifted.json",
            check_self_normalized_shifted(&sn, 0.5, seed)?,
        ),
    ] {
        written.push(write_json(
            out,
            name,
            &json!({ "check": sn, "reports": reports }),
        )?);
    }

    let fr = FreedmanCheck::new(d, horizon as usize, 0.1, trials);
    let report = check_matrix_freedman(&fr, seed)?;
    written.push(write_json(
        out,
        "freedman.json",
        &json!({ "check": fr, "report": report }),
    )?);

    let cfg = ExperimentConfig::new(
        EnvConfig::new(env, d, k),
        AlgorithmSpec::new(AlgorithmName::Bose),
        horizon,
    )
    .with_seed(seed);
    let (_, trace) = run_single_recorded(&cfg, 0, 1.0, 0)?;
    let report = check_potential_and_det(&trace)?;
    written.push(write_json(out, "potential.json", &json!(report))?);
    Ok(written)
}

fn lowerbound(name: AlgorithmName, horizon: u64, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    let base = ExperimentConfig::new(
        EnvConfig::new(EnvKind::DeterminismAdversary, 2, 2),
        AlgorithmSpec::new(name),
        horizon,
    )
    .with_seed(seed);
    let grid = match name {
        AlgorithmName::Oful => base.sweep_values(),
        _ => vec![0.0],
    };
    let base = base.with_sweep(grid.clone());
    base.validate()?;
    let mut rows = Vec::new();
    let mut worst = f64::INFINITY;
    for (i, &p) in grid.iter().enumerate() {
        let mut finals = Vec::new();
        for idx in 0..2 {
            let mut cfg = base.clone();
            cfg.env = cfg.env.with_theta_index(idx);
            finals.push(run_single(&cfg, i, p, 0)?.final_regret());
        }
        worst = worst.min(finals[0].max(finals[1]));
        rows.push(json!({ "param": p, "final_regret": finals }));
    }
    let report = json!({
        "algorithm": name.name(),
        "horizon": horizon,
        "half_horizon": horizon as f64 / 2.0,
        "min_over_params_of_max_regret": worst,
        "holds": worst >= horizon as f64 / 2.0,
        "params": rows,
    });
    Ok(vec![write_json(out, "lowerbound.json", &report)?])
}

fn execute(cli: Cli) -> Result<Vec<PathBuf>> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    }
    match cli.command {
        Command::Run { exp, param } => {
            let cfg = exp.build()?;
            let p = param.unwrap_or(match cfg.algorithm.name {
                AlgorithmName::Epsgreedy => 0.1,
                _ => 1.0,
            });
            sweep(cfg.with_sweep(vec![p]))
        }
        Command::Sweep { exp } => sweep(exp.build()?),
        Command::Diagnose {
            seed,
            out,
            trials,
            horizon,
            d,
            k,
            env,
        } => diagnose(seed, &out, trials, horizon, d, k, parse_env(&env)?),
        Command::Lowerbound {
            algorithm,
            horizon,
            seed,
            out,
        } => lowerbound(parse_algorithm(&algorithm)?, horizon, seed, &out),
        Command::Olsdemo { horizon, seed, out } => {
            let report = ols_bias_demo(horizon, seed)?;
            Ok(vec![write_json(&out, "olsdemo.json", &json!(report))?])
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.category().exit_code() as u8)
        }
    }
}
