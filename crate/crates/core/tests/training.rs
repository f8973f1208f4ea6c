use edgecache::metrics::{eval_seed, evaluate, CacheConfig};
use edgecache::policies::baseline;
use edgecache::rng::{SimRng, STREAM_POLICY};
use edgecache::sac::{load_agent, save_agent, train, AgentPolicy, TrainConfig, TrainWorld};
use edgecache::workload::{generate_trace, ShiftSchedule};
use edgecache::{Error, LatencyModel, PolicyKind, PopularityModel};

fn world(m: usize, c: usize, s: f64, steps: usize) -> TrainWorld {
    TrainWorld {
        model: PopularityModel::new(m, s).unwrap(),
        schedule: ShiftSchedule::empty(),
        cache: CacheConfig {
            capacity: c,
            window: 200,
            latency: LatencyModel::default(),
        },
        train_steps: steps,
        episode_length: 5_000,
        eval_steps: 10_000,
        eval_seed: eval_seed(7),
    }
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        seed,
        warmup_steps: 200,
        hidden_sizes: vec![32, 32],
        ..TrainConfig::default()
    }
}

#[test]
fn toy_agent_approaches_static_oracle() {
    let w = world(20, 2, 1.3, 30_000);
    let oracle = w.model.top_mass(2);
    let out = train(&w, &small_config(3)).unwrap();
    let last = out.curve.last().unwrap().greedy_hit_ratio;
    assert!((last - oracle).abs() <= 0.05, "greedy {last:.4} vs oracle {oracle:.4}");
}

#[test]
fn training_is_bit_reproducible() {
    let w = world(30, 3, 1.1, 4_000);
    let a = train(&w, &small_config(11)).unwrap();
    let b = train(&w, &small_config(11)).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.agent.params, b.agent.params);
    let c = train(&w, &small_config(12)).unwrap();
    assert_ne!(a.losses, c.losses);
}

#[test]
fn full_capacity_world_hits_everything() {
    let w = world(5, 5, 0.8, 2_000);
    let out = train(&w, &small_config(1)).unwrap();
    assert!(out.curve.iter().all(|p| p.greedy_hit_ratio > 0.99));
    assert!(out.losses.is_empty(), "no misses with a full cache means no updates");
}

#[test]
fn checkpoint_file_round_trip_and_mismatch() {
    let w = world(20, 2, 1.3, 2_000);
    let cfg = small_config(5);
    let out = train(&w, &cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("agent.json");
    save_agent(&out.agent.params, &cfg.hash(2), &path).unwrap();
    let ckpt = load_agent(&path).unwrap();
    assert_eq!(ckpt.params, out.agent.params);
    assert!(ckpt.check_compatible(2, Some(&cfg.hash(2))).unwrap());
    assert!(!ckpt.check_compatible(2, Some("other")).unwrap());
    assert!(matches!(ckpt.check_compatible(3, None), Err(Error::IncompatibleCheckpoint(_))));
}

#[test]
fn no_policy_beats_the_oracle_on_stationary_traffic() {
    let model = PopularityModel::new(200, 1.0).unwrap();
    let cache = CacheConfig {
        capacity: 20,
        window: 500,
        latency: LatencyModel::default(),
    };
    let trace = generate_trace(&model, &ShiftSchedule::empty(), 40_000, 9).unwrap();
    let run = |kind| {
        let mut p = baseline(kind, &model, SimRng::with_stream(9, STREAM_POLICY)).unwrap();
        evaluate(p.as_mut(), &trace.requests, &model, &cache, 0.8, 9).unwrap().hit_ratio
    };
    let oracle = run(PolicyKind::StaticOracle);
    for kind in [PolicyKind::LfuWindow, PolicyKind::Lru, PolicyKind::Fifo, PolicyKind::Random, PolicyKind::NeverReplace] {
        let h = run(kind);
        assert!(h <= oracle + 0.03, "{kind} {h:.4} > oracle {oracle:.4}");
    }

    let w = world(200, 20, 1.0, 3_000);
    let out = train(&w, &small_config(2)).unwrap();
    let mut rl = AgentPolicy::greedy(&out.agent.params);
    let h = evaluate(&mut rl, &trace.requests, &model, &cache, 0.8, 9).unwrap().hit_ratio;
    assert!(h <= oracle + 0.03, "RL {h:.4} > oracle {oracle:.4}");
}

#[test]
fn rejects_divergent_or_invalid_setups() {
    let mut w = world(10, 11, 1.0, 100);
    assert!(matches!(train(&w, &small_config(1)), Err(Error::Config { .. })));
    w.cache.capacity = 2;
    w.eval_steps = 10;
    assert!(train(&w, &small_config(1)).is_err());
    let w = world(10, 2, 1.0, 100);
    let bad = TrainConfig {
        gamma: 1.0,
        ..small_config(1)
    };
    assert!(matches!(train(&w, &bad), Err(Error::Config { .. })));
}
