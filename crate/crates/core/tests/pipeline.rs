use sugar::evaluation::{boundary_profile, extract_latent_codes, gate_stats, run_model, test_episodes};
use sugar::model::{GatePolicy, SugarVariant};
use sugar::task::{generate_episode, EbVariant};
use sugar::training::{train, Checkpoint, ExperimentConfig};

fn small(variant: SugarVariant) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.variant = variant;
    c.seed = 11;
    c.train.windows = 150;
    c.train.log_every = 50;
    c
}

#[test]
fn checkpoint_survives_disk_and_reproduces_inference() {
    let dir = tempfile::tempdir().unwrap();
    for variant in [SugarVariant::A, SugarVariant::B, SugarVariant::C] {
        let config = small(variant);
        let outcome = train(&config).unwrap();
        assert_eq!(outcome.log.len(), 3);
        let path = dir.path().join(format!("{variant}.txt"));
        outcome.checkpoint.save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        loaded.check_compatible(&config).unwrap();
        assert_eq!(loaded.to_text(), outcome.checkpoint.to_text());

        let episodes = test_episodes(&config).unwrap();
        let before = run_model(&outcome.checkpoint.model, &episodes).unwrap();
        let after = run_model(&loaded.model, &episodes).unwrap();
        assert_eq!(before, after);
    }
}

#[test]
fn analyses_run_on_a_trained_model() {
    let config = small(SugarVariant::C);
    let model = train(&config).unwrap().checkpoint.model;
    let traces = run_model(&model, &test_episodes(&config).unwrap()).unwrap();
    let profile = boundary_profile(&traces).unwrap();
    assert!(profile.switches >= 100);
    assert!(profile.mean_error.iter().all(|e| e.is_finite()));
    let gates = gate_stats(&traces);
    assert_eq!(gates.switches, profile.switches);
    let codes = extract_latent_codes(&traces).unwrap();
    assert_eq!(codes.problems.iter().map(|p| p.problem_id).collect::<Vec<_>>(), vec![1, 2]);
}

#[test]
fn baseline_training_schedules_differ_from_learned() {
    let mut config = small(SugarVariant::A);
    let learned = train(&config).unwrap().checkpoint;
    config.train.gate = GatePolicy::Oracle;
    let oracle = train(&config).unwrap().checkpoint;
    assert_ne!(learned.config_hash, oracle.config_hash);
    assert_ne!(learned.model, oracle.model);
}

#[test]
fn config_round_trips_with_every_field() {
    let mut c = ExperimentConfig::default();
    c.task.problems = vec![1, 2, 3];
    c.task.eb = EbVariant::Ramp {
        channels: 4,
        ramp_len: 5,
    };
    c.train.gate = GatePolicy::Closed;
    let text = c.to_toml();
    for key in ["variant", "seed", "out_dir", "problems", "start_index", "ramp_len", "learning_rate", "gate", "theta0", "episodes"] {
        assert!(text.contains(key), "{key} missing from\n{text}");
    }
    assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), c);

    let mut moved = c.clone();
    moved.out_dir = "elsewhere".into();
    assert_eq!(moved.hash(), c.hash());
}

#[test]
fn episode_csv_is_reproducible() {
    let config = ExperimentConfig::default();
    let csv = |seed| {
        let mut buf = Vec::new();
        generate_episode(&config.task, 300, seed).unwrap().write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(csv(5), csv(5));
    assert_ne!(csv(5), csv(6));
}
