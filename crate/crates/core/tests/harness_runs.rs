mod common;

use std::fs;

use llmpc::harness::*;

fn small(kind: ExperimentKind, out: &std::path::Path) -> ExperimentConfig {
    let mut c = ExperimentConfig::new(kind);
    c.output_dir = out.to_path_buf();
    c.trip.sizes = vec![3, 4];
    c.trip.per_size = 2;
    c.meeting.sizes = vec![2, 3];
    c.meeting.per_size = 2;
    c.spring.ratio_states = 6;
    c
}

fn outputs(summary: &ExperimentSummary) -> Vec<(String, String)> {
    summary
        .files
        .iter()
        .filter(|p| p.file_name().unwrap() != "log.jsonl")
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn mock_runs_are_reproducible() {
    for kind in [
        ExperimentKind::SpringTrajectory,
        ExperimentKind::SpringRatio,
        ExperimentKind::Trip,
        ExperimentKind::Meeting,
    ] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let first = run_experiment(&small(kind, a.path())).unwrap();
        let mut other = small(kind, b.path());
        other.workers = 1;
        let second = run_experiment(&other).unwrap();
        assert_eq!(outputs(&first), outputs(&second), "{}", kind.as_str());
        assert!(a.path().join("summary.csv").exists());
    }
}

#[test]
fn oracle_sampler_solves_every_task() {
    for kind in [ExperimentKind::Trip, ExperimentKind::Meeting] {
        let out = tempfile::tempdir().unwrap();
        let mut c = small(kind, out.path());
        c.sampler = SamplerKind::Oracle;
        let summary = run_experiment(&c).unwrap();
        let ExperimentResults::Tasks { results, .. } = summary.results else {
            panic!("task results expected");
        };
        assert_eq!(results.len(), 4);
        assert!(results.iter().all(|r| r.success && r.rounds_used == 1));
    }
}

#[test]
fn log_lines_snapshot_the_config() {
    let out = tempfile::tempdir().unwrap();
    let c = small(ExperimentKind::Meeting, out.path());
    run_experiment(&c).unwrap();
    let log = fs::read_to_string(out.path().join("log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 4);
    for line in log.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["config"]["experiment"], "meeting");
        assert_eq!(v["metric_name"], "success");
        assert!(v["rounds"].as_array().is_some_and(|r| !r.is_empty()));
    }
}

#[test]
fn generated_tasks_verify_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    for domain in [TaskDomain::Trip, TaskDomain::Meeting] {
        let records = generate_task_records(domain, &[3, 4], 3, 9);
        let path = dir.path().join("tasks.jsonl");
        write_task_file(&path, &records).unwrap();
        assert_eq!(load_task_file(&path).unwrap(), records);
        for r in &records {
            let report = verify_plan(domain, &r.prompt, r.golden_plan.as_deref().unwrap()).unwrap();
            assert!(report.success, "{}: {:?}", r.id, report.violations);
        }
    }
}

#[test]
fn verify_reports_fixture_mutations() {
    let report = verify_plan(TaskDomain::Trip, common::TRIP_EXAMPLE, common::trip_solution_text()).unwrap();
    assert!(report.success);
    let bad = common::meeting_mutations().remove(0);
    let report = verify_plan(TaskDomain::Meeting, common::MEETING_EXAMPLE, &bad.plan_text).unwrap();
    assert!(!report.success);
    assert_eq!(report.meetings_satisfied, Some(4));
    let garbage = verify_plan(TaskDomain::Trip, common::TRIP_EXAMPLE, "no plan").unwrap();
    assert!(!garbage.parsed && !garbage.success);
}

#[test]
fn config_file_round_trip_and_overrides() {
    let mut c = ExperimentConfig::new(ExperimentKind::Trip);
    c.apply(&Overrides {
        rounds: Some(7),
        samples: Some(2),
        seed: Some(3),
        ..Overrides::default()
    });
    let back = ExperimentConfig::from_toml_str(&c.to_toml_string()).unwrap();
    assert_eq!(back, c);
    assert_eq!((back.rounds(), back.samples(), back.seed), (7, 2, 3));
    let err = ExperimentConfig::from_toml_str("experiment = \"trip\"\n[mpc]\nrounds = 0\n")
        .and_then(|c| c.validate().map(|_| c))
        .unwrap_err();
    assert!(err.to_string().contains("mpc.rounds"), "{err}");
}
