//! RL vs window-LFU under a popularity shift: windowed hit-ratio time series
//! on identical traces plus recovery statistics.

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::metrics::{eval_seed, run_policy, CacheConfig};
use crate::policies::{LfuWindow, PolicyKind};
use crate::sac::{train, AgentParams, AgentPolicy, TrainConfig, TrainWorld};
use crate::workload::{generate_trace, PopularityModel, RequestTrace, Shift, ShiftEvent, ShiftSchedule};

/// Fraction of the pre-shift level a curve must regain to count as recovered.
pub const RECOVERY_FRACTION: f64 = 0.9;

/// A random permutation every `every` steps in `(0, total)`.
pub fn periodic_random_schedule(every: usize, total: usize) -> Result<ShiftSchedule> {
    if every == 0 {
        return Err(Error::invalid("shift period must be >= 1"));
    }
    let events = (1..)
        .map(|k| k * every)
        .take_while(|&s| s < total)
        .map(|step| ShiftEvent {
            step: step as u64,
            shift: Shift::Random,
        })
        .collect();
    ShiftSchedule::new(events)
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct RecoveryStats {
    pub shift_step: usize,
    /// Mean windowed hit ratio over the `L` steps before the shift.
    pub pre_shift: f64,
    /// Steps after the shift until the curve, having dropped below
    /// `RECOVERY_FRACTION * pre_shift`, climbs back above it. Zero when it
    /// never drops; `None` when it never comes back.
    pub recovery_steps: Option<usize>,
    /// Mean windowed hit ratio from the shift to the next shift or the end.
    pub post_mean: f64,
}

/// Recovery statistics of a windowed hit-ratio series around `shift_step`.
pub fn recovery_stats(series: &[f64], shift_step: usize, segment_end: usize, window: usize) -> Result<RecoveryStats> {
    if shift_step == 0 || shift_step >= series.len() || segment_end <= shift_step || segment_end > series.len() {
        return Err(Error::InsufficientData(format!(
            "shift at {shift_step} needs data on both sides in a series of {}",
            series.len()
        )));
    }
    let pre = &series[shift_step.saturating_sub(window)..shift_step];
    let pre_shift = pre.iter().sum::<f64>() / pre.len() as f64;
    let threshold = RECOVERY_FRACTION * pre_shift;
    let post = &series[shift_step..segment_end];
    let recovery_steps = match post.iter().position(|&h| h < threshold) {
        None => Some(0),
        Some(dip) => post[dip..]
            .iter()
            .position(|&h| h >= threshold)
            .map(|k| dip + k),
    };
    Ok(RecoveryStats {
        shift_step,
        pre_shift,
        recovery_steps,
        post_mean: post.iter().sum::<f64>() / post.len() as f64,
    })
}

/// Everything needed to train per seed and replay both policies.
#[derive(Clone, Debug)]
pub struct ShiftDemoConfig {
    pub model: PopularityModel,
    /// Schedule of the demo trace; must contain at least one shift.
    pub schedule: ShiftSchedule,
    pub cache: CacheConfig,
    pub trace_length: usize,
    /// Schedule of the training stream.
    pub train_schedule: ShiftSchedule,
    pub train_steps: usize,
    pub episode_length: usize,
    pub curve_eval_steps: usize,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
}

impl ShiftDemoConfig {
    /// Demo settings from an experiment config. The training stream gets a
    /// random permutation at every episode boundary.
    pub fn from_experiment(config: &ExperimentConfig, schedule: ShiftSchedule) -> Result<Self> {
        Ok(ShiftDemoConfig {
            model: config.model()?,
            schedule,
            cache: config.cache_config(),
            trace_length: config.trace_length,
            train_schedule: periodic_random_schedule(config.episode_length, config.train_steps)?,
            train_steps: config.train_steps,
            episode_length: config.episode_length,
            curve_eval_steps: config.curve_eval_steps,
            train: config.train.clone(),
            seeds: config.seeds.clone(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct SeedDemo {
    pub seed: u64,
    pub rl: Vec<f64>,
    pub lfu: Vec<f64>,
    pub rl_stats: RecoveryStats,
    pub lfu_stats: RecoveryStats,
}

impl SeedDemo {
    pub fn stats(&self) -> [(PolicyKind, &RecoveryStats); 2] {
        [(PolicyKind::RlAgent, &self.rl_stats), (PolicyKind::LfuWindow, &self.lfu_stats)]
    }
}

fn first_shift(schedule: &ShiftSchedule, len: usize) -> Result<(usize, usize)> {
    let events = schedule.events();
    let first = events
        .iter()
        .find(|e| e.step > 0)
        .ok_or_else(|| Error::config("shift_schedule", "the demo needs at least one shift after step 0"))?;
    let start = first.step as usize;
    let end = events
        .iter()
        .map(|e| e.step as usize)
        .find(|&s| s > start)
        .unwrap_or(len)
        .min(len);
    if start >= len {
        return Err(Error::config("shift_schedule", "first shift lies beyond the trace"));
    }
    Ok((start, end))
}

/// Replay a trained agent (greedy) and window-LFU over the same trace.
pub fn replay_pair(params: &AgentParams, trace: &RequestTrace, schedule: &ShiftSchedule, cache: &CacheConfig, seed: u64) -> Result<SeedDemo> {
    let (start, end) = first_shift(schedule, trace.len())?;
    let rl = run_policy(&mut AgentPolicy::greedy(params), &trace.requests, cache, seed)?.rewards;
    let lfu = run_policy(&mut LfuWindow, &trace.requests, cache, seed)?.rewards;
    Ok(SeedDemo {
        seed,
        rl_stats: recovery_stats(&rl, start, end, cache.window)?,
        lfu_stats: recovery_stats(&lfu, start, end, cache.window)?,
        rl,
        lfu,
    })
}

/// Train one agent per seed, then replay it against window-LFU on the demo
/// trace for that seed.
pub fn shift_demo(config: &ShiftDemoConfig) -> Result<Vec<SeedDemo>> {
    first_shift(&config.schedule, config.trace_length)?;
    config
        .seeds
        .iter()
        .map(|&seed| {
            let world = TrainWorld {
                model: config.model.clone(),
                schedule: config.train_schedule.clone(),
                cache: config.cache,
                train_steps: config.train_steps,
                episode_length: config.episode_length,
                eval_steps: config.curve_eval_steps,
                eval_seed: eval_seed(seed).wrapping_add(1),
            };
            let outcome = train(
                &world,
                &TrainConfig {
                    seed,
                    ..config.train.clone()
                },
            )?;
            let trace = generate_trace(&config.model, &config.schedule, config.trace_length, eval_seed(seed))?;
            replay_pair(&outcome.agent.params, &trace, &config.schedule, &config.cache, seed)
        })
        .collect()
}

#[derive(Serialize)]
struct SeriesRow {
    seed: u64,
    step: usize,
    rl_hit_ratio: f64,
    lfu_hit_ratio: f64,
}

/// `seed,step,rl_hit_ratio,lfu_hit_ratio`, one row every `stride` steps.
pub fn write_series<W: std::io::Write>(demos: &[SeedDemo], stride: usize, out: W) -> Result<()> {
    let stride = stride.max(1);
    let mut w = csv::Writer::from_writer(out);
    for d in demos {
        for step in (0..d.rl.len()).step_by(stride) {
            w.serialize(SeriesRow {
                seed: d.seed,
                step: step + 1,
                rl_hit_ratio: d.rl[step],
                lfu_hit_ratio: d.lfu[step],
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StatsRow<'a> {
    seed: u64,
    policy: &'a str,
    shift_step: usize,
    pre_shift: f64,
    recovery_steps: Option<usize>,
    post_mean: f64,
}

/// `seed,policy,shift_step,pre_shift,recovery_steps,post_mean`; an empty
/// `recovery_steps` means the curve never recovered.
pub fn write_stats<W: std::io::Write>(demos: &[SeedDemo], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for d in demos {
        for (kind, s) in d.stats() {
            w.serialize(StatsRow {
                seed: d.seed,
                policy: kind.name(),
                shift_step: s.shift_step,
                pre_shift: s.pre_shift,
                recovery_steps: s.recovery_steps,
                post_mean: s.post_mean,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// RL vs LFU averaged over seeds. A curve that never recovers counts as the
/// full remaining segment.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DemoSummary {
    pub rl_recovery: f64,
    pub lfu_recovery: f64,
    pub rl_post_mean: f64,
    pub lfu_post_mean: f64,
}

impl DemoSummary {
    pub fn over(demos: &[SeedDemo]) -> Result<Self> {
        if demos.is_empty() {
            return Err(Error::InsufficientData("no demo runs".into()));
        }
        let n = demos.len() as f64;
        let rec = |s: &RecoveryStats, len: usize| s.recovery_steps.unwrap_or(len - s.shift_step) as f64;
        let mean = |f: &dyn Fn(&SeedDemo) -> f64| demos.iter().map(f).sum::<f64>() / n;
        Ok(DemoSummary {
            rl_recovery: mean(&|d| rec(&d.rl_stats, d.rl.len())),
            lfu_recovery: mean(&|d| rec(&d.lfu_stats, d.lfu.len())),
            rl_post_mean: mean(&|d| d.rl_stats.post_mean),
            lfu_post_mean: mean(&|d| d.lfu_stats.post_mean),
        })
    }

    /// RL recovers no later than LFU and its post-shift mean is at least
    /// LFU's minus `margin`.
    pub fn rl_not_worse(&self, margin: f64) -> bool {
        self.rl_recovery <= self.lfu_recovery && self.rl_post_mean >= self.lfu_post_mean - margin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_schedule_steps() {
        let s = periodic_random_schedule(10, 35).unwrap();
        let steps: Vec<u64> = s.events().iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![10, 20, 30]);
        assert!(periodic_random_schedule(0, 10).is_err());
    }

    #[test]
    fn recovery_of_a_dip() {
        // pre level 1.0, dips to 0.5 for 3 steps, back to 0.95.
        let series = [1.0, 1.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.95, 0.95, 0.95];
        let s = recovery_stats(&series, 4, 10, 4).unwrap();
        assert_eq!(s.pre_shift, 1.0);
        assert_eq!(s.recovery_steps, Some(3));
        assert!((s.post_mean - (1.5 + 2.85) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn no_dip_means_zero_and_no_return_means_none() {
        let flat = [0.8; 10];
        assert_eq!(recovery_stats(&flat, 5, 10, 3).unwrap().recovery_steps, Some(0));
        let dead = [0.8, 0.8, 0.8, 0.1, 0.1, 0.1];
        assert_eq!(recovery_stats(&dead, 3, 6, 3).unwrap().recovery_steps, None);
        assert!(recovery_stats(&dead, 0, 6, 3).is_err());
        assert!(recovery_stats(&dead, 6, 6, 3).is_err());
    }
}
