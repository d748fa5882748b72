use cropmgmt::baselines::{ExpertPolicy, ExpertSchedule, NullPolicy};
use cropmgmt::harness::{
    compare, compare_by_task, evaluate, load_policy, ComparisonTable, EvalOptions, EvalReport, HarnessError,
    Histogram2d,
};
use cropmgmt::rng::TRAINING_SEED_FLAG;
use cropmgmt::{SimConfig, TaskMode};

fn opts(episodes: usize, seed_base: u64, workers: usize) -> EvalOptions {
    EvalOptions { workers, ..EvalOptions::new(episodes, seed_base) }
}

fn report(policy: &str, task: TaskMode, mean: f64) -> EvalReport {
    EvalReport {
        schema_version: cropmgmt::harness::SCHEMA_VERSION,
        policy: policy.into(),
        task,
        episodes: 1,
        seed_base: 0,
        rewards: vec![mean],
        mean,
        std: 0.0,
        inputs: Vec::new(),
        histograms: Vec::new(),
    }
}

#[test]
fn null_policy_histograms_are_empty() {
    let cfg = SimConfig::default();
    for mode in TaskMode::ALL {
        let r = evaluate(&NullPolicy::new(mode), mode, &cfg, &opts(5, 100, 1)).unwrap();
        assert_eq!(r.histograms.len(), mode.action_dim());
        for h in &r.histograms {
            assert_eq!(h.total(), 0);
            assert!(h.to_svg("null").contains("empty: 0 nonzero applications"));
        }
        assert!(r.inputs.iter().all(|i| i.nitrogen == 0.0 && i.water == 0.0));
    }
}

#[test]
fn report_independent_of_worker_count() {
    let cfg = SimConfig::default();
    let p = ExpertPolicy::new(TaskMode::Mixed, ExpertSchedule::default(), &cfg).unwrap();
    let a = evaluate(&p, TaskMode::Mixed, &cfg, &opts(12, 40, 1)).unwrap();
    let b = evaluate(&p, TaskMode::Mixed, &cfg, &opts(12, 40, 4)).unwrap();
    let c = evaluate(&p, TaskMode::Mixed, &cfg, &opts(12, 40, 4)).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(b.to_json().unwrap(), c.to_json().unwrap());
}

#[test]
fn expert_applies_whole_schedule() {
    let cfg = SimConfig::default();
    let schedule = ExpertSchedule::default();
    let total: f64 = schedule.fert_events.iter().map(|e| e.1).sum();
    assert_eq!(total, 112.0);
    let p = ExpertPolicy::new(TaskMode::Fertilization, schedule.clone(), &cfg).unwrap();
    let r = evaluate(&p, TaskMode::Fertilization, &cfg, &opts(6, 7, 2)).unwrap();
    for i in &r.inputs {
        assert!((i.nitrogen - total).abs() < 1e-9, "applied {}", i.nitrogen);
        assert_eq!(i.nitrogen_events as usize, schedule.fert_events.len());
    }
    let h = r.histogram("nitrogen").unwrap();
    assert_eq!(h.total(), 12);
    // 56 kg/ha falls in the 50-60 amount bin, day 0 in bin 0 and day 45 in bin 9
    assert_eq!(h.counts[5][0], 6);
    assert_eq!(h.counts[5][9], 6);
}

#[test]
fn reported_std_is_population_std() {
    let cfg = SimConfig::default();
    let p = ExpertPolicy::new(TaskMode::Irrigation, ExpertSchedule::default(), &cfg).unwrap();
    let r = evaluate(&p, TaskMode::Irrigation, &cfg, &opts(9, 3, 3)).unwrap();
    let n = r.rewards.len() as f64;
    let m = r.rewards.iter().sum::<f64>() / n;
    let var = r.rewards.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    assert!((r.mean - m).abs() <= 1e-9 * m.abs().max(1.0));
    assert!((r.std - var.sqrt()).abs() <= 1e-9 * var.sqrt().max(1.0));
    assert!(r.std > 0.0);
}

#[test]
fn report_json_round_trip() {
    let cfg = SimConfig::default();
    let r = evaluate(&NullPolicy::new(TaskMode::Mixed), TaskMode::Mixed, &cfg, &opts(3, 0, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    r.save(&path).unwrap();
    assert_eq!(EvalReport::load(&path).unwrap(), r);
    let bumped = r.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
    assert!(matches!(EvalReport::from_json(&bumped), Err(HarnessError::Schema(99))));
}

#[test]
fn compare_breaks_ties_to_lower_index() {
    let t = compare(&[
        report("A", TaskMode::Irrigation, 5.0),
        report("B", TaskMode::Irrigation, 7.0),
        report("C", TaskMode::Irrigation, 7.0),
    ])
    .unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].best, Some(1));
    let text = t.to_text();
    assert_eq!(text.matches('*').count(), 1);
    assert!(text.contains("*7.00 ± 0.00"));

    let mut buf = Vec::new();
    t.write_csv(&mut buf).unwrap();
    assert_eq!(ComparisonTable::read_csv(buf.as_slice()).unwrap(), t);
}

#[test]
fn compare_rejects_mixed_tasks() {
    let rs = [report("A", TaskMode::Irrigation, 1.0), report("A", TaskMode::Mixed, 1.0)];
    assert!(matches!(compare(&rs), Err(HarnessError::MixedModes(..))));
    assert!(matches!(compare(&[]), Err(HarnessError::NoReports)));
    let t = compare_by_task(&rs).unwrap();
    assert_eq!(t.rows.len(), 2);
    assert_eq!(t.rows[0].task, TaskMode::Irrigation);
}

#[test]
fn single_application_shades_one_cell() {
    let mut h = Histogram2d::nitrogen(200.0);
    h.record(60.0, 40.0);
    let svg = h.to_svg("one");
    assert_eq!(svg.matches("fill=\"black\"").count(), 1);
    assert!(!svg.contains("empty:"));
    let nonzero: Vec<(usize, usize)> = (0..h.n_amount_bins())
        .flat_map(|a| (0..h.n_day_bins()).map(move |d| (a, d)))
        .filter(|&(a, d)| h.counts[a][d] > 0)
        .collect();
    assert_eq!(nonzero, vec![(4, 12)]);
}

#[test]
fn histogram_csv_round_trip() {
    let mut h = Histogram2d::water(40.0);
    for (d, a) in [(0.0, 1.0), (33.3, 12.0), (33.3, 12.5), (159.9, 39.0), (200.0, 80.0), (-3.0, 5.0)] {
        h.record(d, a);
    }
    assert_eq!(h.pre_plant, 1);
    assert_eq!(h.total(), 6);
    let mut buf = Vec::new();
    h.write_csv(&mut buf).unwrap();
    assert_eq!(Histogram2d::read_csv_counts(buf.as_slice()).unwrap(), h.counts);
}

#[test]
fn seed_range_is_guarded() {
    let cfg = SimConfig::default();
    let p = NullPolicy::new(TaskMode::Fertilization);
    let bad = opts(2, TRAINING_SEED_FLAG - 1, 1);
    assert!(matches!(evaluate(&p, TaskMode::Fertilization, &cfg, &bad), Err(HarnessError::SeedRange { .. })));
    assert!(evaluate(&p, TaskMode::Fertilization, &cfg, &opts(1, TRAINING_SEED_FLAG - 1, 1)).is_ok());
    assert!(matches!(evaluate(&p, TaskMode::Fertilization, &cfg, &opts(0, 0, 1)), Err(HarnessError::NoEpisodes)));
}

#[test]
fn load_policy_resolves_baselines() {
    let cfg = SimConfig::default();
    assert_eq!(load_policy("null", TaskMode::Mixed, &cfg, None).unwrap().name(), "Null");
    assert_eq!(load_policy("expert", TaskMode::Mixed, &cfg, None).unwrap().name(), "Expert");
    assert!(load_policy("/definitely/not/here", TaskMode::Mixed, &cfg, None).is_err());
}
