//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comment
//! catalog_size = 1000
//! cache_capacity = 100
//! effective_target = 0.05
//! seeds = 1,2,3
//! ```
//!
//! `M`, `C`, `L` and `s` are accepted as aliases of `catalog_size`,
//! `cache_capacity`, `window` and `zipf_exponent`. Unknown and repeated keys
//! are errors. [`ExperimentConfig::to_text`] writes every key with defaults
//! expanded, and parsing that text gives back the same config.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cache::LatencyModel;
use crate::error::{Error, Result};
use crate::metrics::{CacheConfig, TrainEvalRunner};
use crate::policies::PolicyKind;
use crate::sac::TrainConfig;
use crate::workload::{calibrate_zipf, PopularityModel, ShiftSchedule};

/// Base config of the four-scenario table. Capacity and popularity are
/// replaced per scenario.
pub const TABLE1_CONFIG: &str = "\
catalog_size = 1000
cache_capacity = 100
window = 1000
effective_target = 0.05
trace_length = 100000
train_steps = 30000
episode_length = 10000
curve_eval_steps = 10000
seeds = 1,2,3
out = results/table1
";

/// How the Zipf exponent is chosen.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Popularity {
    Exponent(f64),
    EffectiveTarget(f64),
}

/// Where the popularity-shift schedule comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum ScheduleSource {
    None,
    /// Events separated by `;`, each in the schedule-file line syntax.
    Inline(String),
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub catalog_size: usize,
    pub cache_capacity: usize,
    pub window: usize,
    pub popularity: Popularity,
    pub traffic_share: f64,
    /// Requests in each evaluation trace.
    pub trace_length: usize,
    pub train_steps: usize,
    pub episode_length: usize,
    pub curve_eval_steps: usize,
    pub schedule: ScheduleSource,
    pub policy: PolicyKind,
    pub train: TrainConfig,
    pub latency: LatencyModel,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
}

const KEYS: &[&str] = &[
    "catalog_size",
    "cache_capacity",
    "window",
    "zipf_exponent",
    "effective_target",
    "traffic_share",
    "trace_length",
    "train_steps",
    "episode_length",
    "curve_eval_steps",
    "shift_schedule",
    "shift_schedule_file",
    "policy",
    "seeds",
    "out",
    "edge_ms",
    "remote_base_ms",
    "remote_jitter_ms",
    "gamma",
    "tau",
    "lr_actor",
    "lr_critic",
    "lr_alpha",
    "batch_size",
    "buffer_capacity",
    "warmup_steps",
    "updates_per_step",
    "target_entropy",
    "hidden_sizes",
];

fn canonical_key(key: &str) -> Option<&'static str> {
    let key = match key {
        "M" => "catalog_size",
        "C" => "cache_capacity",
        "L" => "window",
        "s" => "zipf_exponent",
        other => other,
    };
    KEYS.iter().copied().find(|k| *k == key)
}

/// Raw key/value pairs, each remembering its source line (0 for overrides).
#[derive(Clone, Debug, Default)]
pub struct RawConfig {
    entries: BTreeMap<&'static str, (String, usize)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line_no = n + 1;
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::parse(line_no, format!("expected `key = value`, got `{body}`")))?;
            let key = key.trim();
            let canon = canonical_key(key)
                .ok_or_else(|| Error::parse(line_no, format!("unknown key `{key}`")))?;
            if let Some((_, first)) = raw.entries.get(canon) {
                return Err(Error::parse(
                    line_no,
                    format!("`{canon}` already set on line {first}"),
                ));
            }
            raw.entries.insert(canon, (value.trim().to_string(), line_no));
        }
        Ok(raw)
    }

    /// Apply a `key=value` override, replacing any file value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let canon = canonical_key(key.trim())
            .ok_or_else(|| Error::config(key, "unknown key"))?;
        if canon == "zipf_exponent" {
            self.entries.remove("effective_target");
        } else if canon == "effective_target" {
            self.entries.remove("zipf_exponent");
        }
        if canon == "shift_schedule" {
            self.entries.remove("shift_schedule_file");
        } else if canon == "shift_schedule_file" {
            self.entries.remove("shift_schedule");
        }
        self.entries.insert(canon, (value.trim().to_string(), 0));
        Ok(())
    }

    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must be `key=value`"))?;
        self.set(k, v)
    }

    fn get(&self, key: &str) -> Option<(&str, usize)> {
        self.entries.get(key).map(|(v, l)| (v.as_str(), *l))
    }

    fn field_error(&self, key: &str, msg: impl Into<String>) -> Error {
        let msg = msg.into();
        match self.get(key) {
            Some((_, line)) if line > 0 => Error::config(key, format!("line {line}: {msg}")),
            _ => Error::config(key, msg),
        }
    }

    fn parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, _)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.field_error(key, format!("cannot parse `{v}`"))),
        }
    }

    fn or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    fn required<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.parsed(key)?
            .ok_or_else(|| Error::config(key, "required field is missing"))
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        match self.get(key) {
            None => Ok(None),
            Some((v, _)) => v
                .split(',')
                .map(|x| x.trim().parse())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| self.field_error(key, format!("cannot parse list `{v}`"))),
        }
    }
}

impl ExperimentConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self> {
        let defaults = TrainConfig::default();
        let popularity = match (raw.parsed::<f64>("zipf_exponent")?, raw.parsed::<f64>("effective_target")?) {
            (Some(s), None) => Popularity::Exponent(s),
            (None, Some(t)) => Popularity::EffectiveTarget(t),
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "zipf_exponent",
                    "give either zipf_exponent or effective_target, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config(
                    "zipf_exponent",
                    "one of zipf_exponent or effective_target is required",
                ))
            }
        };
        let schedule = match (raw.get("shift_schedule"), raw.get("shift_schedule_file")) {
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "shift_schedule",
                    "give either shift_schedule or shift_schedule_file, not both",
                ))
            }
            (Some((v, _)), None) if v.is_empty() || v == "none" => ScheduleSource::None,
            (Some((v, _)), None) => ScheduleSource::Inline(v.to_string()),
            (None, Some((v, _))) => ScheduleSource::File(PathBuf::from(v)),
            (None, None) => ScheduleSource::None,
        };
        let target_entropy = match raw.get("target_entropy") {
            None => None,
            Some(("auto", _)) => None,
            Some(_) => raw.parsed("target_entropy")?,
        };
        let policy = match raw.get("policy") {
            None => PolicyKind::RlAgent,
            Some((v, _)) => v
                .parse()
                .map_err(|_| raw.field_error("policy", format!("unknown policy `{v}`")))?,
        };
        let seeds: Vec<u64> = raw.list("seeds")?.unwrap_or_else(|| vec![1, 2, 3]);
        let config = ExperimentConfig {
            catalog_size: raw.required("catalog_size")?,
            cache_capacity: raw.required("cache_capacity")?,
            window: raw.or("window", 1000)?,
            popularity,
            traffic_share: raw.or("traffic_share", 0.8)?,
            trace_length: raw.or("trace_length", 100_000)?,
            train_steps: raw.or("train_steps", 50_000)?,
            episode_length: raw.or("episode_length", 5_000)?,
            curve_eval_steps: raw.or("curve_eval_steps", 10_000)?,
            schedule,
            policy,
            train: TrainConfig {
                gamma: raw.or("gamma", defaults.gamma)?,
                tau: raw.or("tau", defaults.tau)?,
                lr_actor: raw.or("lr_actor", defaults.lr_actor)?,
                lr_critic: raw.or("lr_critic", defaults.lr_critic)?,
                lr_alpha: raw.or("lr_alpha", defaults.lr_alpha)?,
                batch_size: raw.or("batch_size", defaults.batch_size)?,
                buffer_capacity: raw.or("buffer_capacity", defaults.buffer_capacity)?,
                warmup_steps: raw.or("warmup_steps", defaults.warmup_steps)?,
                updates_per_step: raw.or("updates_per_step", defaults.updates_per_step)?,
                target_entropy,
                hidden_sizes: raw.list("hidden_sizes")?.unwrap_or(defaults.hidden_sizes),
                seed: seeds.first().copied().unwrap_or(0),
            },
            latency: LatencyModel {
                edge_ms: raw.or("edge_ms", 5.0)?,
                remote_base_ms: raw.or("remote_base_ms", 50.0)?,
                remote_jitter_ms: raw.or("remote_jitter_ms", 20.0)?,
            },
            seeds,
            out: PathBuf::from(raw.get("out").map_or("results", |(v, _)| v)),
        };
        config.validate(raw)?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_raw(&RawConfig::parse(text)?)
    }

    fn validate(&self, raw: &RawConfig) -> Result<()> {
        let err = |k: &str, m: &str| raw.field_error(k, m);
        if self.catalog_size == 0 || self.catalog_size > u32::MAX as usize / 2 {
            return Err(err("catalog_size", "M must be >= 1"));
        }
        if self.cache_capacity == 0 {
            return Err(err("cache_capacity", "C must be >= 1"));
        }
        if self.cache_capacity > self.catalog_size {
            return Err(err("cache_capacity", "C must not exceed M"));
        }
        if self.window == 0 {
            return Err(err("window", "L must be >= 1"));
        }
        match self.popularity {
            Popularity::Exponent(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(err("zipf_exponent", "must be > 0"))
            }
            Popularity::EffectiveTarget(t) if !(t > 0.0 && t <= 1.0) => {
                return Err(err("effective_target", "must be in (0, 1]"))
            }
            _ => {}
        }
        if !(self.traffic_share > 0.0 && self.traffic_share <= 1.0) {
            return Err(err("traffic_share", "must be in (0, 1]"));
        }
        if self.trace_length < self.window {
            return Err(err("trace_length", "must be >= the window size L"));
        }
        if self.curve_eval_steps < self.window {
            return Err(err("curve_eval_steps", "must be >= the window size L"));
        }
        if self.train_steps == 0 {
            return Err(err("train_steps", "must be >= 1"));
        }
        if self.episode_length == 0 {
            return Err(err("episode_length", "must be >= 1"));
        }
        if self.seeds.is_empty() {
            return Err(err("seeds", "at least one seed is required"));
        }
        self.latency
            .validate()
            .map_err(|e| err("remote_base_ms", &e.to_string()))?;
        self.train.validate()?;
        if let ScheduleSource::Inline(text) = &self.schedule {
            parse_inline_schedule(text)
                .map_err(|e| err("shift_schedule", &e.to_string()))?
                .validate_for(self.catalog_size)
                .map_err(|e| err("shift_schedule", &e.to_string()))?;
        }
        Ok(())
    }

    /// Zipf exponent, calibrating when an effective-contents target is given.
    pub fn exponent(&self) -> Result<f64> {
        match self.popularity {
            Popularity::Exponent(s) => Ok(s),
            Popularity::EffectiveTarget(t) => calibrate_zipf(self.catalog_size, t, self.traffic_share),
        }
    }

    pub fn model(&self) -> Result<PopularityModel> {
        PopularityModel::new(self.catalog_size, self.exponent()?)
    }

    /// Load the shift schedule; relative file paths resolve against `base`.
    pub fn load_schedule(&self, base: Option<&Path>) -> Result<ShiftSchedule> {
        let schedule = match &self.schedule {
            ScheduleSource::None => ShiftSchedule::empty(),
            ScheduleSource::Inline(text) => parse_inline_schedule(text)?,
            ScheduleSource::File(path) => {
                let full = match base {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                ShiftSchedule::parse(&std::fs::read_to_string(&full)?)?
            }
        };
        schedule.validate_for(self.catalog_size)?;
        Ok(schedule)
    }

    pub fn cache_config(&self) -> CacheConfig {
        CacheConfig {
            capacity: self.cache_capacity,
            window: self.window,
            latency: self.latency,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }

    /// Runner for the four-scenario table: trains per seed, then evaluates
    /// the agent and every baseline except NEVER_REPLACE on the same trace.
    pub fn table1_runner(&self) -> TrainEvalRunner {
        TrainEvalRunner {
            window: self.window,
            traffic_share: self.traffic_share,
            latency: self.latency,
            seeds: self.seeds.clone(),
            train_steps: self.train_steps,
            episode_length: self.episode_length,
            curve_eval_steps: self.curve_eval_steps,
            eval_steps: self.trace_length,
            train: self.train.clone(),
            baselines: vec![
                PolicyKind::LfuWindow,
                PolicyKind::Lru,
                PolicyKind::Fifo,
                PolicyKind::Random,
                PolicyKind::StaticOracle,
            ],
        }
    }

    /// Every key with defaults expanded, in a stable order.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            "# resolved experiment config".to_string(),
            format!("catalog_size = {}", self.catalog_size),
            format!("cache_capacity = {}", self.cache_capacity),
            format!("window = {}", self.window),
        ];
        match self.popularity {
            Popularity::Exponent(s) => lines.push(format!("zipf_exponent = {s}")),
            Popularity::EffectiveTarget(t) => lines.push(format!("effective_target = {t}")),
        }
        lines.push(format!("traffic_share = {}", self.traffic_share));
        lines.push(format!("trace_length = {}", self.trace_length));
        lines.push(format!("train_steps = {}", self.train_steps));
        lines.push(format!("episode_length = {}", self.episode_length));
        lines.push(format!("curve_eval_steps = {}", self.curve_eval_steps));
        match &self.schedule {
            ScheduleSource::None => lines.push("shift_schedule = none".into()),
            ScheduleSource::Inline(s) => lines.push(format!("shift_schedule = {s}")),
            ScheduleSource::File(p) => lines.push(format!("shift_schedule_file = {}", p.display())),
        }
        lines.push(format!("policy = {}", self.policy));
        lines.push(format!("seeds = {}", join(&self.seeds)));
        lines.push(format!("out = {}", self.out.display()));
        lines.push(format!("edge_ms = {}", self.latency.edge_ms));
        lines.push(format!("remote_base_ms = {}", self.latency.remote_base_ms));
        lines.push(format!("remote_jitter_ms = {}", self.latency.remote_jitter_ms));
        let t = &self.train;
        lines.push(format!("gamma = {}", t.gamma));
        lines.push(format!("tau = {}", t.tau));
        lines.push(format!("lr_actor = {}", t.lr_actor));
        lines.push(format!("lr_critic = {}", t.lr_critic));
        lines.push(format!("lr_alpha = {}", t.lr_alpha));
        lines.push(format!("batch_size = {}", t.batch_size));
        lines.push(format!("buffer_capacity = {}", t.buffer_capacity));
        lines.push(format!("warmup_steps = {}", t.warmup_steps));
        lines.push(format!("updates_per_step = {}", t.updates_per_step));
        lines.push(match t.target_entropy {
            Some(v) => format!("target_entropy = {v}"),
            None => "target_entropy = auto".into(),
        });
        lines.push(format!("hidden_sizes = {}", join(&t.hidden_sizes)));
        let mut text = lines.join("\n");
        text.push('\n');
        text
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Inline schedules use `;` between events: `50000 random; 80000 random`.
pub fn parse_inline_schedule(text: &str) -> Result<ShiftSchedule> {
    ShiftSchedule::parse(&text.replace(';', "\n"))
}
