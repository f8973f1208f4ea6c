//! KPIs (hit ratio, storage fraction, effective contents, latency), scenario
//! tables, and report writers.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::cache::{CacheEnv, LatencyModel};
use crate::error::{Error, Result};
use crate::policies::{baseline, Policy, PolicyKind};
use crate::rng::{SimRng, STREAM_POLICY};
use crate::sac::{train, AgentPolicy, TrainConfig, TrainWorld};
use crate::workload::{
    calibrate_zipf, effective_contents, generate_trace, ContentId, PopularityModel, ShiftSchedule,
};

/// Offset between a run seed and the seed of its evaluation trace, so the
/// evaluation requests never coincide with the training requests.
pub const EVAL_SEED_OFFSET: u64 = 1 << 32;

pub fn eval_seed(seed: u64) -> u64 {
    seed.wrapping_add(EVAL_SEED_OFFSET)
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CacheConfig {
    pub capacity: usize,
    pub window: usize,
    pub latency: LatencyModel,
}

/// Per-step outcomes of one run.
#[derive(Clone, Debug, Default)]
pub struct RunRecord {
    pub hits: Vec<bool>,
    /// Windowed hit ratio after each step.
    pub rewards: Vec<f64>,
    pub latencies: Vec<f64>,
}

impl RunRecord {
    /// Index of the first step counted as steady state.
    pub fn steady_start(&self) -> usize {
        self.rewards.len() / 2
    }

    /// Mean windowed hit ratio over the second half of the run.
    pub fn steady_hit_ratio(&self) -> Result<f64> {
        let tail = &self.rewards[self.steady_start()..];
        if tail.is_empty() {
            return Err(Error::UndefinedMetric("hit ratio of an empty run"));
        }
        Ok(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Run `policy` over `requests` from an empty cache.
pub fn run_policy(
    policy: &mut dyn Policy,
    requests: &[ContentId],
    cache: &CacheConfig,
    seed: u64,
) -> Result<RunRecord> {
    let mut env = CacheEnv::new(cache.capacity, cache.window, cache.latency, seed)?;
    run_policy_in(policy, requests, &mut env)
}

/// Run `policy` over `requests` in an existing environment.
pub fn run_policy_in(policy: &mut dyn Policy, requests: &[ContentId], env: &mut CacheEnv) -> Result<RunRecord> {
    let mut rec = RunRecord {
        hits: Vec::with_capacity(requests.len()),
        rewards: Vec::with_capacity(requests.len()),
        latencies: Vec::with_capacity(requests.len()),
    };
    for &r in requests {
        let out = env.step(r, |d| policy.decide(d))?;
        rec.hits.push(out.hit);
        rec.rewards.push(out.reward);
        rec.latencies.push(out.latency_ms);
    }
    Ok(rec)
}

/// KPIs of one evaluation run.
#[derive(Clone, Debug, PartialEq)]
pub struct KpiReport {
    pub policy: PolicyKind,
    pub storage_fraction: f64,
    pub effective_contents: f64,
    pub hit_ratio: f64,
    pub hit_ratio_final: f64,
    pub latency_mean_ms: f64,
    pub latency_p95_ms: f64,
    pub seed: u64,
    pub n_steps: usize,
}

/// Nearest-rank percentile.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Turn a finished run into a report. Hit ratio and latency cover the
/// second half of the run.
pub fn report_from_run(
    run: &RunRecord,
    policy: PolicyKind,
    model: &PopularityModel,
    capacity: usize,
    traffic_share: f64,
    seed: u64,
) -> Result<KpiReport> {
    let start = run.steady_start();
    let lat = &run.latencies[start..];
    Ok(KpiReport {
        policy,
        storage_fraction: capacity as f64 / model.catalog_size() as f64,
        effective_contents: effective_contents(model, traffic_share)?,
        hit_ratio: run.steady_hit_ratio()?,
        hit_ratio_final: *run
            .rewards
            .last()
            .ok_or(Error::UndefinedMetric("hit ratio of an empty run"))?,
        latency_mean_ms: lat.iter().sum::<f64>() / lat.len() as f64,
        latency_p95_ms: percentile(lat, 0.95),
        seed,
        n_steps: run.rewards.len(),
    })
}

/// Run a policy over a trace from an empty cache and report its KPIs.
pub fn evaluate(
    policy: &mut dyn Policy,
    requests: &[ContentId],
    model: &PopularityModel,
    cache: &CacheConfig,
    traffic_share: f64,
    seed: u64,
) -> Result<KpiReport> {
    if requests.len() < cache.window {
        return Err(Error::InsufficientData(format!(
            "trace has {} requests, the window needs {}",
            requests.len(),
            cache.window
        )));
    }
    let run = run_policy(policy, requests, cache, seed)?;
    report_from_run(&run, policy.kind(), model, cache.capacity, traffic_share, seed)
}

/// One row of the scenario table: a storage fraction and an
/// effective-contents target, optionally with a reference hit ratio.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Scenario {
    pub storage_fraction: f64,
    pub effective_target: f64,
    pub reference_hit_ratio: Option<f64>,
}

/// The four standard scenarios with their reference hit ratios.
pub const TABLE1: [Scenario; 4] = [
    Scenario {
        storage_fraction: 0.10,
        effective_target: 0.05,
        reference_hit_ratio: Some(0.74),
    },
    Scenario {
        storage_fraction: 0.20,
        effective_target: 0.05,
        reference_hit_ratio: Some(0.82),
    },
    Scenario {
        storage_fraction: 0.20,
        effective_target: 0.10,
        reference_hit_ratio: Some(0.75),
    },
    Scenario {
        storage_fraction: 0.30,
        effective_target: 0.10,
        reference_hit_ratio: Some(0.81),
    },
];

/// Calibrated workload for a scenario.
#[derive(Clone, Debug)]
pub struct ScenarioWorld {
    pub scenario: Scenario,
    pub model: PopularityModel,
    pub capacity: usize,
    /// Analytic hit ratio of the best static cache (top-C mass).
    pub oracle_mass: f64,
}

impl ScenarioWorld {
    pub fn build(scenario: Scenario, catalog_size: usize, traffic_share: f64) -> Result<Self> {
        if !(scenario.storage_fraction > 0.0 && scenario.storage_fraction <= 1.0) {
            return Err(Error::invalid("storage fraction must be in (0, 1]"));
        }
        let s = calibrate_zipf(catalog_size, scenario.effective_target, traffic_share)?;
        let model = PopularityModel::new(catalog_size, s)?;
        let capacity = ((scenario.storage_fraction * catalog_size as f64).round() as usize).max(1);
        Ok(ScenarioWorld {
            scenario,
            oracle_mass: model.top_mass(capacity),
            model,
            capacity,
        })
    }
}

/// Produces the per-seed reports for one calibrated scenario.
pub trait ScenarioRunner {
    fn run(&self, world: &ScenarioWorld) -> Result<Vec<KpiReport>>;
}

#[derive(Clone, Debug)]
pub struct ScenarioRow {
    pub world: ScenarioWorld,
    pub reports: Vec<KpiReport>,
}

/// Calibrate, then run every scenario in order.
pub fn scenario_table(
    scenarios: &[Scenario],
    catalog_size: usize,
    traffic_share: f64,
    runner: &dyn ScenarioRunner,
) -> Result<Vec<ScenarioRow>> {
    if scenarios.is_empty() {
        return Err(Error::invalid("no scenarios given"));
    }
    scenarios
        .iter()
        .map(|&sc| {
            let world = ScenarioWorld::build(sc, catalog_size, traffic_share)?;
            let reports = runner.run(&world)?;
            Ok(ScenarioRow { world, reports })
        })
        .collect()
}

/// Train an agent per seed on the scenario's stationary workload, then
/// evaluate it and every baseline on the same evaluation trace.
#[derive(Clone, Debug)]
pub struct TrainEvalRunner {
    pub window: usize,
    pub traffic_share: f64,
    pub latency: LatencyModel,
    pub seeds: Vec<u64>,
    pub train_steps: usize,
    pub episode_length: usize,
    /// Length of the greedy evaluations on the training curve.
    pub curve_eval_steps: usize,
    /// Length of the final KPI evaluation trace.
    pub eval_steps: usize,
    pub train: TrainConfig,
    pub baselines: Vec<PolicyKind>,
}

impl TrainEvalRunner {
    pub fn cache_config(&self, capacity: usize) -> CacheConfig {
        CacheConfig {
            capacity,
            window: self.window,
            latency: self.latency,
        }
    }
}

impl ScenarioRunner for TrainEvalRunner {
    fn run(&self, world: &ScenarioWorld) -> Result<Vec<KpiReport>> {
        let cache = self.cache_config(world.capacity);
        let mut reports = Vec::new();
        for &seed in &self.seeds {
            let trace = generate_trace(&world.model, &ShiftSchedule::empty(), self.eval_steps, eval_seed(seed))?;
            let tw = TrainWorld {
                model: world.model.clone(),
                schedule: ShiftSchedule::empty(),
                cache,
                train_steps: self.train_steps,
                episode_length: self.episode_length,
                eval_steps: self.curve_eval_steps,
                eval_seed: eval_seed(seed).wrapping_add(1),
            };
            let config = TrainConfig {
                seed,
                ..self.train.clone()
            };
            let outcome = train(&tw, &config)?;
            let mut rl = AgentPolicy::greedy(&outcome.agent.params);
            reports.push(evaluate(&mut rl, &trace.requests, &world.model, &cache, self.traffic_share, seed)?);
            for &kind in &self.baselines {
                let mut policy = baseline(kind, &world.model, SimRng::with_stream(seed, STREAM_POLICY))?;
                reports.push(evaluate(
                    policy.as_mut(),
                    &trace.requests,
                    &world.model,
                    &cache,
                    self.traffic_share,
                    seed,
                )?);
            }
        }
        Ok(reports)
    }
}

pub const REPORT_COLUMNS: [&str; 9] = [
    "policy",
    "storage_pct",
    "effective_pct",
    "hit_ratio",
    "hit_ratio_final",
    "latency_mean_ms",
    "latency_p95_ms",
    "seed",
    "n_steps",
];

#[derive(Serialize)]
struct ReportRow<'a> {
    policy: &'a str,
    storage_pct: f64,
    effective_pct: f64,
    hit_ratio: f64,
    hit_ratio_final: f64,
    latency_mean_ms: f64,
    latency_p95_ms: f64,
    seed: u64,
    n_steps: usize,
}

fn pct(x: f64) -> f64 {
    // Two decimals keep 10% from printing as 10.000000000000002.
    (x * 10_000.0).round() / 100.0
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

pub fn report_csv(table: &[KpiReport]) -> Result<String> {
    if table.is_empty() {
        return Err(Error::InsufficientData("empty report table".into()));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in table {
        w.serialize(ReportRow {
            policy: r.policy.name(),
            storage_pct: pct(r.storage_fraction),
            effective_pct: pct(r.effective_contents),
            hit_ratio: r.hit_ratio,
            hit_ratio_final: r.hit_ratio_final,
            latency_mean_ms: r.latency_mean_ms,
            latency_p95_ms: r.latency_p95_ms,
            seed: r.seed,
            n_steps: r.n_steps,
        })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

pub fn report_markdown(table: &[KpiReport]) -> Result<String> {
    if table.is_empty() {
        return Err(Error::InsufficientData("empty report table".into()));
    }
    let mut out = String::new();
    out.push_str(
        "| Policy | Storage (% of total) | Cache hit ratio | Final hit ratio | Effective contents \
         | Latency mean (ms) | Latency p95 (ms) | Seed | Steps |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|\n");
    for r in table {
        writeln!(
            out,
            "| {} | {}% | {:.4} | {:.4} | {}% | {:.2} | {:.2} | {} | {} |",
            r.policy,
            pct(r.storage_fraction),
            r.hit_ratio,
            r.hit_ratio_final,
            pct(r.effective_contents),
            r.latency_mean_ms,
            r.latency_p95_ms,
            r.seed,
            r.n_steps
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn write_report(table: &[KpiReport], path: &Path, format: ReportFormat) -> Result<()> {
    let text = match format {
        ReportFormat::Csv => report_csv(table)?,
        ReportFormat::Markdown => report_markdown(table)?,
    };
    fs::write(path, text)?;
    Ok(())
}

/// Mean and sample standard deviation of a policy's hit ratio in a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scenario: Scenario,
    pub exponent: f64,
    pub oracle_mass: f64,
    pub policy: PolicyKind,
    pub mean_hit_ratio: f64,
    pub std_hit_ratio: f64,
    pub runs: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn summarize(rows: &[ScenarioRow]) -> Vec<SummaryRow> {
    let mut out = Vec::new();
    for row in rows {
        let mut kinds: Vec<PolicyKind> = Vec::new();
        for r in &row.reports {
            if !kinds.contains(&r.policy) {
                kinds.push(r.policy);
            }
        }
        for kind in kinds {
            let values: Vec<f64> = row
                .reports
                .iter()
                .filter(|r| r.policy == kind)
                .map(|r| r.hit_ratio)
                .collect();
            let (mean, std) = mean_std(&values);
            out.push(SummaryRow {
                scenario: row.world.scenario,
                exponent: row.world.model.exponent(),
                oracle_mass: row.world.oracle_mass,
                policy: kind,
                mean_hit_ratio: mean,
                std_hit_ratio: std,
                runs: values.len(),
            });
        }
    }
    out
}

/// Table 1 style summary: one line per scenario and policy with mean and
/// spread over seeds, the reference hit ratio, and the static-oracle ceiling.
pub fn summary_markdown(summary: &[SummaryRow]) -> String {
    let mut out = String::from(
        "| Scenario | Storage (% of total) | Effective contents | Zipf s | Policy | Cache hit ratio (mean ± std) | Runs | Reference | Oracle ceiling |\n\
         |---|---|---|---|---|---|---|---|---|\n",
    );
    let mut scenario_index = 0;
    let mut last: Option<Scenario> = None;
    for s in summary {
        if last != Some(s.scenario) {
            scenario_index += 1;
            last = Some(s.scenario);
        }
        let reference = match (s.policy, s.scenario.reference_hit_ratio) {
            (PolicyKind::RlAgent, Some(r)) => format!("{r:.2}"),
            _ => "-".into(),
        };
        writeln!(
            out,
            "| {} | {}% | {}% | {:.4} | {} | {:.4} ± {:.4} | {} | {} | {:.4} |",
            scenario_index,
            pct(s.scenario.storage_fraction),
            pct(s.scenario.effective_target),
            s.exponent,
            s.policy,
            s.mean_hit_ratio,
            s.std_hit_ratio,
            s.runs,
            reference,
            s.oracle_mass
        )
        .expect("writing to a String cannot fail");
    }
    out
}
