//! Experiment runner: expands a config into a grid of paired runs, executes
//! them in parallel and aggregates win rates against Monte Carlo.

mod config;
mod output;
mod winrate;

use std::collections::BTreeMap;

use rayon::prelude::*;

pub use config::{
    ExperimentConfig, ExternalExpertConfig, MethodSpec, SeedConfig, SimBankConfig, TraceKey, DEFAULT_CONFIG_JSON,
};
pub use output::{emit_results, write_runs_csv, write_winrates_csv, RUNS_HEADER, WEALTH_HEADER, WINRATES_HEADER};
pub use winrate::{win_rate, WinRateCell};

use crate::baselines::{build_optimal_proposal, is_estimate, rejection_sample_n, IsMode, OptimalProposal};
use crate::betting::{run_round, Ledger, RoundOutcome, WealthProcess};
use crate::diagnostics::evalue_from_final;
use crate::distlib::{make_bank, DistributionSpec};
use crate::error::{Error, Result};
use crate::experts::{Expert, ExpertBank};
use crate::rng::{mix_seed, RandomStream};
use crate::strategies::{KellyParams, StrategyKind};

pub const THREADS_ENV: &str = "BETWISE_THREADS";
pub const EXPERT_SEED_ENV: &str = "BETWISE_EXPERT_SEED";

/// One concrete method: a config entry with its Kelly fraction bound.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    MonteCarlo,
    IdealKelly { lambda: f64 },
    ApproxKelly { bank: String, lambda: f64 },
    OptimalIs { mode: IsMode },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::MonteCarlo => "mc".into(),
            Method::IdealKelly { lambda } => format!("ideal-kelly:lambda={lambda}"),
            Method::ApproxKelly { bank, lambda } => format!("approx-kelly:{bank}:lambda={lambda}"),
            Method::OptimalIs { mode: IsMode::SelfNormalized } => "optimal-is".into(),
            Method::OptimalIs { mode: IsMode::Plain } => "optimal-is:plain".into(),
        }
    }

    pub fn lambda(&self) -> Option<f64> {
        match self {
            Method::IdealKelly { lambda } | Method::ApproxKelly { lambda, .. } => Some(*lambda),
            _ => None,
        }
    }

    pub fn uses_eta(&self) -> bool {
        matches!(self, Method::ApproxKelly { .. })
    }
}

/// Expands config method entries over the lambda grid. Monte Carlo always
/// comes first because every other method is paired against it.
pub fn expand_methods(cfg: &ExperimentConfig) -> Vec<Method> {
    let mut out = vec![Method::MonteCarlo];
    for m in &cfg.methods {
        match m {
            MethodSpec::Mc => {}
            MethodSpec::IdealKelly => out.extend(cfg.lambda.iter().map(|&lambda| Method::IdealKelly { lambda })),
            MethodSpec::ApproxKelly { bank } => out.extend(cfg.lambda.iter().map(|&lambda| Method::ApproxKelly {
                bank: bank.clone(),
                lambda,
            })),
            MethodSpec::OptimalIs { plain } => out.push(Method::OptimalIs {
                mode: if *plain { IsMode::Plain } else { IsMode::SelfNormalized },
            }),
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|m| seen.insert(m.label()));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub task: usize,
    pub method: Method,
    pub eta: Option<f64>,
    pub rounds: usize,
    pub seed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_id: usize,
    pub task: String,
    pub method: String,
    pub eta: Option<f64>,
    pub lambda: Option<f64>,
    pub rounds: usize,
    pub seed: usize,
    pub estimate: f64,
    pub true_mean: f64,
    pub abs_error: f64,
    /// `None` for methods that do not bet.
    pub final_wealth: Option<f64>,
    pub alpha: f64,
    pub threshold: f64,
    pub exceeds: Option<bool>,
    pub acceptance_rate: Option<f64>,
    pub failed_experts: usize,
    /// Wealth `W_0..W_T`, kept only for allowlisted runs.
    pub wealth: Option<Vec<f64>>,
}

/// Everything shared by all runs of one experiment.
pub struct Context {
    pub config: ExperimentConfig,
    pub tasks: Vec<DistributionSpec>,
    pub methods: Vec<Method>,
    sim_specs: BTreeMap<String, Vec<DistributionSpec>>,
    proposals: Vec<Option<OptimalProposal>>,
}

impl Context {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let tasks = config.real_specs()?;
        let methods = expand_methods(&config);
        let mut sim_specs = BTreeMap::new();
        for (name, bank) in &config.sim_banks {
            if let SimBankConfig::Analytic { bank } | SimBankConfig::Sampled { bank, .. } = bank {
                sim_specs.insert(name.clone(), make_bank(bank)?);
            }
        }
        let wants_is = methods.iter().any(|m| matches!(m, Method::OptimalIs { .. }));
        let proposals = tasks
            .iter()
            .map(|t| {
                if !wants_is {
                    return Ok(None);
                }
                match build_optimal_proposal(t) {
                    Ok(p) => Ok(Some(p)),
                    Err(Error::UnsupportedDensity(_)) => {
                        log::info!("optimal-is skipped for discrete task `{}`", t.label());
                        Ok(None)
                    }
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            tasks,
            methods,
            sim_specs,
            proposals,
        })
    }

    /// The run grid in output order: method, eta, task, T, seed.
    pub fn jobs(&self) -> Vec<Job> {
        let cfg = &self.config;
        let mut jobs = Vec::new();
        for method in &self.methods {
            let etas: Vec<Option<f64>> = if method.uses_eta() {
                cfg.eta_grid.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for eta in etas {
                for task in 0..self.tasks.len() {
                    if matches!(method, Method::OptimalIs { .. }) && self.proposals[task].is_none() {
                        continue;
                    }
                    for &rounds in &cfg.t_grid {
                        for seed in 0..cfg.seeds.count {
                            jobs.push(Job {
                                task,
                                method: method.clone(),
                                eta,
                                rounds,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        jobs
    }

    fn traced(&self, job: &Job) -> bool {
        let label = job.method.label();
        self.config
            .trace_allowlist
            .iter()
            .any(|k| k.seed == job.seed && k.method == label && k.task == self.tasks[job.task].label())
    }

    /// Real outcomes for `(task, seed)`; every method reads the same sequence.
    pub fn real_stream(&self, task: usize, seed: usize) -> RandomStream {
        RandomStream::derive(
            self.config.seeds.base,
            &["real", self.tasks[task].label(), &seed.to_string()],
        )
    }

    fn build_bank(&self, name: &str, task: usize, seed: usize, eta: f64) -> Result<ExpertBank<f64>> {
        let cfg = &self.config;
        let floor = cfg.variance_floor;
        let task_label = self.tasks[task].label();
        let seed_str = seed.to_string();
        let experts = match cfg.sim_banks.get(name) {
            None => return Err(Error::Config(format!("unknown sim bank `{name}`"))),
            Some(SimBankConfig::Analytic { .. }) => self.sim_specs[name]
                .iter()
                .map(|s| Expert::analytic(s.clone(), floor))
                .collect(),
            Some(SimBankConfig::Sampled { n_sim, .. }) => self.sim_specs[name]
                .iter()
                .map(|s| {
                    let stream = RandomStream::derive(cfg.seeds.base, &["sim", name, s.label(), task_label, &seed_str]);
                    Expert::sampled(s.clone(), *n_sim, stream, floor)
                })
                .collect(),
            Some(SimBankConfig::External { experts }) => experts
                .iter()
                .map(|e| {
                    let mut cmd = e.command.clone();
                    let key = mix_seed(cfg.seeds.base, &["ext", name, &e.id, task_label, &seed_str]);
                    cmd.env.push((EXPERT_SEED_ENV.into(), key.to_string()));
                    Expert::external(e.id.clone(), cmd, floor)
                })
                .collect(),
        };
        ExpertBank::new(experts, eta, floor)
    }

    fn strategy(&self, job: &Job) -> Result<StrategyKind<f64>> {
        let cfg = &self.config;
        let params = |lambda: f64| KellyParams::new(lambda, cfg.stake_floor, cfg.variance_floor);
        match &job.method {
            Method::MonteCarlo => Ok(StrategyKind::MonteCarlo),
            Method::IdealKelly { lambda } => {
                let m = self.tasks[job.task].moments();
                StrategyKind::ideal_kelly(m.mean, m.variance, params(*lambda)?)
            }
            Method::ApproxKelly { bank, lambda } => {
                let eta = job.eta.expect("approx-kelly jobs carry an eta");
                let bank = self.build_bank(bank, job.task, job.seed, eta)?;
                Ok(StrategyKind::approx_kelly(bank, params(*lambda)?))
            }
            Method::OptimalIs { .. } => Err(Error::Config("optimal-is does not bet".into())),
        }
    }

    /// Plays one betting run and returns every round.
    pub fn play(&self, job: &Job) -> Result<(Vec<RoundOutcome<f64>>, Ledger<f64>, WealthProcess<f64>, usize)> {
        let mut strategy = self.strategy(job)?;
        let task = &self.tasks[job.task];
        let mut real = self.real_stream(job.task, job.seed);
        let mut draw = || Ok(task.sample(&mut real));
        let mut ledger = Ledger::new(self.config.tau0)?;
        let mut wealth = WealthProcess::new();
        let mut rounds = Vec::with_capacity(job.rounds);
        for _ in 0..job.rounds {
            let decision = strategy.decide(ledger.tau())?;
            let r = run_round(decision, &mut draw, &mut ledger, &mut wealth)?;
            strategy.observe(r.outcome)?;
            rounds.push(r);
        }
        let failed = strategy
            .bank()
            .map_or(0, |b| b.experts().iter().filter(|e| e.is_failed()).count());
        Ok((rounds, ledger, wealth, failed))
    }

    pub fn execute(&self, run_id: usize, job: &Job) -> Result<RunRecord> {
        let cfg = &self.config;
        let task = &self.tasks[job.task];
        let true_mean = task.moments().mean;
        let mut rec = RunRecord {
            run_id,
            task: task.label().to_string(),
            method: job.method.label(),
            eta: job.eta,
            lambda: job.method.lambda(),
            rounds: job.rounds,
            seed: job.seed,
            estimate: f64::NAN,
            true_mean,
            abs_error: f64::NAN,
            final_wealth: None,
            alpha: cfg.alpha,
            threshold: 1.0 / cfg.alpha,
            exceeds: None,
            acceptance_rate: None,
            failed_experts: 0,
            wealth: None,
        };
        if let Method::OptimalIs { mode } = job.method {
            let proposal = self.proposals[job.task]
                .as_ref()
                .ok_or_else(|| Error::UnsupportedDensity(task.label().to_string()))?;
            let mut s = RandomStream::derive(cfg.seeds.base, &["is", task.label(), &job.seed.to_string()]);
            let (draws, rate) = rejection_sample_n(proposal, job.rounds, &mut s)?;
            rec.estimate = is_estimate(&draws, proposal, mode)?;
            rec.acceptance_rate = Some(rate);
        } else {
            let (_, ledger, wealth, failed) = self.play(job)?;
            rec.estimate = ledger.estimate()?;
            let report = evalue_from_final(wealth.current(), cfg.alpha)?;
            rec.final_wealth = Some(report.final_wealth);
            rec.exceeds = Some(report.exceeds);
            rec.failed_experts = failed;
            if self.traced(job) {
                rec.wealth = Some(wealth.trajectory().to_vec());
            }
        }
        rec.abs_error = (rec.estimate - true_mean).abs();
        Ok(rec)
    }
}

/// Worker count from `BETWISE_THREADS`, if set.
pub fn thread_override() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Runs every job of the grid. Records come back in grid order regardless
/// of scheduling.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    let ctx = Context::new(config.clone())?;
    let jobs = ctx.jobs();
    log::info!("running {} jobs", jobs.len());
    let work = || {
        jobs.par_iter()
            .enumerate()
            .map(|(i, job)| ctx.execute(i, job))
            .collect::<Result<Vec<_>>>()
    };
    match thread_override()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Round-by-round trace of one betting run.
pub fn trace_run(
    config: &ExperimentConfig,
    task: &str,
    method: &str,
    seed: usize,
    eta: Option<f64>,
    rounds: Option<usize>,
) -> Result<Vec<RoundOutcome<f64>>> {
    let ctx = Context::new(config.clone())?;
    let task_idx = ctx
        .tasks
        .iter()
        .position(|t| t.label() == task)
        .ok_or_else(|| Error::Config(format!("unknown task `{task}`")))?;
    let m = ctx
        .methods
        .iter()
        .find(|m| m.label() == method)
        .cloned()
        .ok_or_else(|| {
            let known: Vec<String> = ctx.methods.iter().map(Method::label).collect();
            Error::Config(format!("unknown method `{method}` (known: {})", known.join(", ")))
        })?;
    if matches!(m, Method::OptimalIs { .. }) {
        return Err(Error::Config("optimal-is has no betting trace".into()));
    }
    let eta = if m.uses_eta() {
        Some(eta.or_else(|| config.eta_grid.first().copied()).expect("validated non-empty"))
    } else {
        None
    };
    let rounds = rounds.unwrap_or_else(|| *config.t_grid.iter().max().expect("validated non-empty"));
    let job = Job {
        task: task_idx,
        method: m,
        eta,
        rounds,
        seed,
    };
    Ok(ctx.play(&job)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn small_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "real_bank": {"kind": "explicit", "specs": [
                    {"label": "b", "family": "beta", "a": 2, "b": 5},
                    {"label": "coin", "family": "bernoulli", "p": 0.3}
                ]},
                "sim_banks": {
                    "exact": {"source": "analytic", "bank": {"kind": "explicit", "specs": [
                        {"label": "same", "family": "beta", "a": 2, "b": 5}
                    ]}},
                    "drawn": {"source": "sampled", "n_sim": 5, "bank": {"kind": "beta_grid", "a": [1, 2], "b": [3, 5]}}
                },
                "methods": [
                    {"method": "ideal-kelly"},
                    {"method": "approx-kelly", "bank": "exact"},
                    {"method": "approx-kelly", "bank": "drawn"},
                    {"method": "optimal-is"}
                ],
                "eta_grid": [1.0],
                "t_grid": [20],
                "lambda": [1.0],
                "seeds": {"count": 3, "base": 7},
                "trace_allowlist": [{"task": "b", "method": "ideal-kelly:lambda=1", "seed": 1}]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn grid_count_with_implicit_mc() {
        let cfg = ExperimentConfig::from_json(
            r#"{"real_bank": {"kind": "explicit", "specs": [{"label": "u", "family": "beta", "a": 1, "b": 1}]},
                "methods": [{"method": "ideal-kelly"}], "t_grid": [10], "seeds": {"count": 3}}"#,
        )
        .unwrap();
        let recs = run_experiment(&cfg).unwrap();
        assert_eq!(recs.len(), 6);
        assert_eq!(recs.iter().filter(|r| r.method == "mc").count(), 3);
    }

    #[test]
    fn method_labels() {
        let ms = expand_methods(&ExperimentConfig::default_config());
        let labels: Vec<String> = ms.iter().map(Method::label).collect();
        assert_eq!(labels[0], "mc");
        assert!(labels.contains(&"ideal-kelly:lambda=0.5".to_string()));
        assert!(labels.contains(&"approx-kelly:sim_172:lambda=1".to_string()));
        assert!(labels.contains(&"optimal-is".to_string()));
        assert_eq!(labels.iter().filter(|l| *l == "mc").count(), 1);
    }

    #[test]
    fn runs_are_paired_on_real_draws() {
        let cfg = small_config();
        let ctx = Context::new(cfg).unwrap();
        let jobs = ctx.jobs();
        let pick = |label: &str| jobs.iter().find(|j| j.method.label() == label && j.seed == 2 && j.task == 0).unwrap();
        let outcomes = |j: &Job| ctx.play(j).unwrap().0.iter().map(|r| r.outcome).collect::<Vec<_>>();
        let mc = outcomes(pick("mc"));
        assert_eq!(mc, outcomes(pick("ideal-kelly:lambda=1")));
        assert_eq!(mc, outcomes(pick("approx-kelly:drawn:lambda=1")));
        assert_eq!(mc.len(), 20);
    }

    #[test]
    fn is_skips_discrete_task_and_records_acceptance() {
        let recs = run_experiment(&small_config()).unwrap();
        let is: Vec<_> = recs.iter().filter(|r| r.method == "optimal-is").collect();
        assert_eq!(is.len(), 3);
        assert!(is.iter().all(|r| r.task == "b" && r.acceptance_rate.is_some() && r.final_wealth.is_none()));
        // 2 tasks x 3 seeds for each of mc, ideal, two approx banks; IS on one task
        assert_eq!(recs.len(), 4 * 6 + 3);
        assert!(recs.iter().enumerate().all(|(i, r)| r.run_id == i));
    }

    #[test]
    fn only_allowlisted_runs_keep_wealth() {
        let recs = run_experiment(&small_config()).unwrap();
        let traced: Vec<_> = recs.iter().filter(|r| r.wealth.is_some()).collect();
        assert_eq!(traced.len(), 1);
        assert_eq!(traced[0].wealth.as_ref().unwrap().len(), 21);
        assert_eq!((traced[0].task.as_str(), traced[0].seed), ("b", 1));
    }

    #[test]
    fn mc_estimate_is_sample_mean() {
        let ctx = Context::new(small_config()).unwrap();
        let job = ctx.jobs().into_iter().find(|j| j.method == Method::MonteCarlo).unwrap();
        let mut s = ctx.real_stream(job.task, job.seed);
        let ys: Vec<f64> = (0..job.rounds).map(|_| ctx.tasks[job.task].sample(&mut s)).collect();
        let rec = ctx.execute(0, &job).unwrap();
        assert_eq!(rec.estimate, ys.iter().sum::<f64>() / ys.len() as f64);
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let cfg = small_config();
        let a = run_experiment(&cfg).unwrap();
        let ctx = Context::new(cfg).unwrap();
        let serial: Vec<RunRecord> = ctx.jobs().iter().enumerate().map(|(i, j)| ctx.execute(i, j).unwrap()).collect();
        assert_eq!(a, serial);
    }

    #[test]
    fn trace_lookup_errors() {
        let cfg = small_config();
        assert!(trace_run(&cfg, "nope", "mc", 0, None, None).unwrap_err().is_config_error());
        assert!(trace_run(&cfg, "b", "kelly", 0, None, None).unwrap_err().is_config_error());
        assert!(trace_run(&cfg, "b", "optimal-is", 0, None, None).unwrap_err().is_config_error());
        let t = trace_run(&cfg, "b", "approx-kelly:exact:lambda=1", 0, None, Some(7)).unwrap();
        assert_eq!(t.len(), 7);
    }
}
