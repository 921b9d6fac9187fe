use std::time::Instant;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, BaselinePolicy};
use crate::diagnostics::PotentialTrace;
use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::estimation::{ConfidenceConfig, NORM_TOLERANCE};
use crate::policy::BosePolicy;
use crate::SimRng;

use super::config::{randomized_on_adversary, replicate_seeds, ExperimentConfig};

/// Deterministic audit of a finished BOSE run.
///
/// `potential` is `sum_t ||Z_t||_{Gamma_t^{-1}}` with `Gamma_t` the Gram
/// matrix before round `t`'s update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialAudit {
    pub potential: f64,
    pub potential_bound: f64,
    pub log_det: f64,
    pub log_det_bound: f64,
}

impl PotentialAudit {
    pub fn holds(&self) -> bool {
        self.potential <= self.potential_bound * NORM_TOLERANCE
            && self.log_det <= self.log_det_bound + 1e-9 * self.log_det_bound.abs().max(1.0)
    }
}

/// `sqrt(d T (1 + 1/lambda) ln(1 + T/(d lambda)))`.
pub fn potential_bound(d: usize, rounds: u64, lambda: f64) -> f64 {
    let (d, t) = (d as f64, rounds as f64);
    (d * t * (1.0 + 1.0 / lambda) * (1.0 + t / (d * lambda)).ln()).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    /// Cumulative regret after rounds `1..=T`.
    pub cum_regret: Vec<f64>,
    pub env_seed: u64,
    pub learner_seed: u64,
    pub param_value: f64,
    /// Rounds where the exploration program was not solved to tolerance.
    pub unsolved_rounds: u64,
    pub potential: Option<PotentialAudit>,
    /// Not written to any output file, which must be reproducible.
    pub wallclock_secs: f64,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.cum_regret.last().copied().unwrap_or(0.0)
    }
}

enum Learner {
    Bose(BosePolicy),
    Baseline(BaselinePolicy),
}

fn build_learner(cfg: &ExperimentConfig, env: &Environment, param: f64) -> Result<Learner> {
    let a = &cfg.algorithm;
    let d = cfg.env.d;
    match a.name.baseline_kind() {
        None => {
            let mut conf =
                ConfidenceConfig::new(cfg.horizon, d, a.delta, a.resolved_mode(cfg.env.k))?;
            if let Some(l) = a.lambda {
                conf = conf.with_lambda(l)?;
            }
            let policy = BosePolicy::new(conf, a.solver)?
                .with_width(param)?
                .with_feature_bound(env.feature_bound())?;
            Ok(Learner::Bose(policy))
        }
        Some(kind) => {
            let bc = BaselineConfig {
                kind,
                explore_param: param,
                lambda_prime: a.lambda_prime,
            };
            let policy = BaselinePolicy::new(bc, d)?.with_feature_bound(env.feature_bound())?;
            Ok(Learner::Baseline(policy))
        }
    }
}

/// Plays one replicate for `cfg.horizon` rounds with sweep value `param`.
pub fn run_single(
    cfg: &ExperimentConfig,
    param_index: usize,
    param: f64,
    replicate: usize,
) -> Result<RegretTrace> {
    play(cfg, param_index, param, replicate, None)
}

/// Like [`run_single`], also returning every centered feature BOSE learned
/// from. Baselines leave the trace empty.
pub fn run_single_recorded(
    cfg: &ExperimentConfig,
    param_index: usize,
    param: f64,
    replicate: usize,
) -> Result<(RegretTrace, PotentialTrace)> {
    let mut trace = PotentialTrace::default();
    let regret = play(cfg, param_index, param, replicate, Some(&mut trace))?;
    Ok((regret, trace))
}

fn play(
    cfg: &ExperimentConfig,
    param_index: usize,
    param: f64,
    replicate: usize,
    mut record: Option<&mut PotentialTrace>,
) -> Result<RegretTrace> {
    cfg.env.validate()?;
    let start = Instant::now();
    let seeds = replicate_seeds(cfg.master_seed, param_index, replicate);
    let mut env = Environment::new(cfg.env, seeds.env)?;
    let mut rng = SimRng::seed_from_u64(seeds.learner);
    let mut learner = build_learner(cfg, &env, param)?;

    if env.requires_deterministic_learner() {
        let deterministic = match &learner {
            Learner::Bose(_) => false,
            Learner::Baseline(p) => p.is_deterministic(),
        };
        if !deterministic {
            return Err(randomized_on_adversary(cfg.algorithm.name));
        }
    }

    if let (Some(trace), Learner::Bose(p)) = (record.as_deref_mut(), &learner) {
        *trace = PotentialTrace::new(cfg.env.d, p.lambda());
    }

    let horizon = cfg.horizon as usize;
    let mut cum_regret = Vec::with_capacity(horizon);
    let mut total = 0.0;
    let mut potential = 0.0;
    let mut unsolved_rounds = 0;
    for t in 0..cfg.horizon {
        let outcome = env.sample_context(t)?;
        let ctx = &outcome.context;
        let action = match &mut learner {
            Learner::Bose(p) => {
                let (action, dist) = p.choose(ctx, &mut rng)?;
                if !dist.is_feasible() {
                    unsolved_rounds += 1;
                }
                let centered = ctx.feature(action) - &dist.mu;
                potential += p
                    .estimator()
                    .gram()
                    .inv_quadratic(&centered)
                    .max(0.0)
                    .sqrt();
                if let Some(trace) = record.as_deref_mut() {
                    trace.push(centered);
                }
                p.learn(ctx, action, &dist, outcome.reward(action))?;
                action
            }
            Learner::Baseline(p) => {
                let action = p.choose(ctx, &mut rng)?;
                p.learn(ctx, action, outcome.reward(action))?;
                action
            }
        };
        total += outcome.instantaneous_regret(action)?;
        cum_regret.push(total);
    }

    let potential = match &learner {
        Learner::Bose(p) => {
            let gram = p.estimator().gram();
            Some(PotentialAudit {
                potential,
                potential_bound: potential_bound(cfg.env.d, cfg.horizon, gram.lambda()),
                log_det: gram.log_det()?,
                log_det_bound: gram.log_det_ceiling(),
            })
        }
        Learner::Baseline(_) => None,
    };
    if let Some(audit) = &potential {
        if !audit.holds() {
            log::warn!("potential audit failed: {audit:?}");
        }
    }

    Ok(RegretTrace {
        cum_regret,
        env_seed: seeds.env,
        learner_seed: seeds.learner,
        param_value: param,
        unsolved_rounds,
        potential,
        wallclock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Per-round mean and sample standard deviation over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub n_replicates: usize,
}

impl Aggregate {
    pub fn from_traces<'a>(traces: impl IntoIterator<Item = &'a RegretTrace>) -> Result<Self> {
        let traces: Vec<&RegretTrace> = traces.into_iter().collect();
        let Some(first) = traces.first() else {
            return Err(Error::Empty("no completed replicates"));
        };
        let len = first.cum_regret.len();
        let n = traces.len();
        let mut mean = vec![0.0; len];
        let mut std = vec![0.0; len];
        for t in 0..len {
            let m = traces.iter().map(|tr| tr.cum_regret[t]).sum::<f64>() / n as f64;
            mean[t] = m;
            if n > 1 {
                let ss: f64 = traces.iter().map(|tr| (tr.cum_regret[t] - m).powi(2)).sum();
                std[t] = (ss / (n - 1) as f64).sqrt();
            }
        }
        Ok(Self {
            mean,
            std,
            n_replicates: n,
        })
    }

    pub fn final_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_std(&self) -> f64 {
        self.std.last().copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: String,
}

/// All replicates for one sweep value.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub param_index: usize,
    pub param_value: f64,
    pub traces: Vec<(usize, RegretTrace)>,
    pub failures: Vec<ReplicateFailure>,
    pub aggregate: Option<Aggregate>,
}

impl SweepCell {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty() && self.aggregate.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct SweepSummary {
    pub config: ExperimentConfig,
    pub cells: Vec<SweepCell>,
    /// Index into `cells` of the complete cell with the lowest mean final
    /// regret; the earliest wins ties.
    pub best: Option<usize>,
}

impl SweepSummary {
    pub fn best_cell(&self) -> Option<&SweepCell> {
        self.best.map(|i| &self.cells[i])
    }

    pub fn potential_audits_hold(&self) -> bool {
        self.cells
            .iter()
            .flat_map(|c| &c.traces)
            .filter_map(|(_, t)| t.potential)
            .all(|a| a.holds())
    }
}

/// Runs every (sweep value, replicate) pair in parallel on the current rayon
/// pool. The result does not depend on scheduling.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepSummary> {
    cfg.validate()?;
    let sweep = cfg.sweep_values();
    let jobs: Vec<(usize, usize)> = (0..sweep.len())
        .flat_map(|p| (0..cfg.replicates).map(move |r| (p, r)))
        .collect();
    let results: Vec<Result<RegretTrace>> = jobs
        .par_iter()
        .map(|&(p, r)| run_single(cfg, p, sweep[p], r))
        .collect();

    let mut cells: Vec<SweepCell> = sweep
        .iter()
        .enumerate()
        .map(|(i, &v)| SweepCell {
            param_index: i,
            param_value: v,
            traces: Vec::new(),
            failures: Vec::new(),
            aggregate: None,
        })
        .collect();
    for (&(p, r), res) in jobs.iter().zip(results) {
        match res {
            Ok(trace) => cells[p].traces.push((r, trace)),
            Err(e) => {
                log::error!("param {} replicate {r}: {e}", sweep[p]);
                cells[p].failures.push(ReplicateFailure {
                    replicate: r,
                    error: e.to_string(),
                });
            }
        }
    }
    for cell in &mut cells {
        if !cell.traces.is_empty() {
            cell.aggregate = Some(Aggregate::from_traces(cell.traces.iter().map(|(_, t)| t))?);
        }
    }

    let mut best: Option<(usize, f64)> = None;
    for (i, cell) in cells.iter().enumerate() {
        if !cell.is_complete() {
            continue;
        }
        let m = cell
            .aggregate
            .as_ref()
            .map_or(f64::INFINITY, Aggregate::final_mean);
        if best.is_none_or(|(_, b)| m < b) {
            best = Some((i, m));
        }
    }
    Ok(SweepSummary {
        config: cfg.clone(),
        cells,
        best: best.map(|(i, _)| i),
    })
}
