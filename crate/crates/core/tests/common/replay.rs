//! Committed replay fixtures: task files, response caches and expected outputs.

use std::fs;
use std::path::{Path, PathBuf};

use llmpc::gateway::{Gateway, GatewayMode, ResponseCache, ScriptedTransport};
use llmpc::harness::{
    generate_task_records, run_experiment, task_statement, write_task_file, ExperimentConfig, ExperimentKind,
    LlmSection, SamplerKind, TaskDomain, TaskRecord,
};
use llmpc::meeting::{parse_meeting_plan, parse_meeting_task, run_meeting_llmpc, MeetingPlan, Step};
use llmpc::trip::{parse_trip_plan, parse_trip_task, run_trip_llmpc, TripPlan};
use serde_json::Value;

use super::*;

/// Files compared byte-for-byte after a replay run.
pub const EXPECTED_FILES: [&str; 4] = ["summary.csv", "success_by_size.csv", "results.jsonl", "rounds.jsonl"];

const NO_PLAN: &str = "I could not find a plan that satisfies every constraint.";

pub fn fixture_dir(domain: TaskDomain) -> PathBuf {
    let name = match domain {
        TaskDomain::Trip => "trip",
        TaskDomain::Meeting => "meeting",
    };
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures/replay")
        .join(name)
}

pub fn replay_config(domain: TaskDomain, output_dir: &Path) -> ExperimentConfig {
    let dir = fixture_dir(domain);
    let (kind, rounds, samples) = match domain {
        TaskDomain::Trip => (ExperimentKind::Trip, 3, 1),
        TaskDomain::Meeting => (ExperimentKind::Meeting, 3, 3),
    };
    let mut c = ExperimentConfig::new(kind);
    c.sampler = SamplerKind::Replay;
    c.mpc.rounds = Some(rounds);
    c.mpc.samples = Some(samples);
    c.output_dir = output_dir.to_path_buf();
    c.llm.cache_dir = Some(dir.join("cache"));
    match domain {
        TaskDomain::Trip => c.trip.tasks = Some(dir.join("tasks.jsonl")),
        TaskDomain::Meeting => c.meeting.tasks = Some(dir.join("tasks.jsonl")),
    }
    c
}

/// Per-task round logs from `log.jsonl`, without timings or config.
pub fn rounds_jsonl(log: &str) -> String {
    let mut out = String::new();
    for line in log.lines() {
        let v: Value = serde_json::from_str(line).expect("log line is JSON");
        let slim = serde_json::json!({ "run_id": v["run_id"], "metric": v["metric"], "rounds": v["rounds"] });
        out.push_str(&slim.to_string());
        out.push('\n');
    }
    out
}

/// Run the replay experiment into `out` and return `(name, actual, expected)`
/// for every compared file.
pub fn replay_and_collect(domain: TaskDomain, out: &Path) -> Vec<(String, String, String)> {
    run_experiment(&replay_config(domain, out)).expect("replay run");
    let log = fs::read_to_string(out.join("log.jsonl")).unwrap();
    fs::write(out.join("rounds.jsonl"), rounds_jsonl(&log)).unwrap();
    let expected = fixture_dir(domain).join("expected");
    EXPECTED_FILES
        .iter()
        .map(|name| {
            let actual = fs::read_to_string(out.join(name)).unwrap();
            let wanted = fs::read_to_string(expected.join(name))
                .unwrap_or_else(|e| panic!("{}: {e}", expected.join(name).display()));
            (name.to_string(), actual, wanted)
        })
        .collect()
}

fn trip_visits_shuffled(plan: &TripPlan) -> String {
    let mut v: Vec<(String, u32)> = plan.stays().map(|(c, s, e)| (c.to_string(), e - s + 1)).collect();
    let last = v.len() - 1;
    assert!(v[last].1 > 1);
    v[0].1 += 1;
    v[last].1 -= 1;
    TripPlan::from_visits(&v).to_text()
}

fn without_last_meeting(plan: &MeetingPlan) -> String {
    let at = plan.steps.iter().rposition(|s| matches!(s, Step::Meet { .. })).unwrap();
    let mut steps = plan.steps.clone();
    steps.truncate(at);
    MeetingPlan { steps }.to_text()
}

fn meeting_reply(blocks: &[&str]) -> String {
    format!("SOLUTION:\n{}", blocks.join("\n---\n"))
}

fn record(domain: TaskDomain, dir: &Path, tasks: &[TaskRecord], scripts: &[Vec<String>]) {
    let cache_dir = dir.join("cache");
    let _ = fs::remove_dir_all(&cache_dir);
    fs::create_dir_all(&cache_dir).unwrap();
    write_task_file(&dir.join("tasks.jsonl"), tasks).unwrap();
    let llm = LlmSection::default();
    let settings = llm.settings();
    for (task, script) in tasks.iter().zip(scripts) {
        let gateway = Gateway::new(
            GatewayMode::LiveWithCache,
            Some(Box::new(ScriptedTransport::from_texts(script))),
            Some(ResponseCache::new(&cache_dir)),
        )
        .unwrap();
        let text = task_statement(&task.prompt);
        match domain {
            TaskDomain::Trip => {
                run_trip_llmpc(&parse_trip_task(text).unwrap(), text, 3, 1, &mut &gateway, &settings).unwrap();
            }
            TaskDomain::Meeting => {
                run_meeting_llmpc(&parse_meeting_task(text).unwrap(), text, 3, 3, &mut &gateway, &settings).unwrap();
            }
        }
    }
}

fn trip_fixture() -> (Vec<TaskRecord>, Vec<Vec<String>>) {
    let mut tasks = vec![TaskRecord {
        id: "trip-example".into(),
        prompt: TRIP_EXAMPLE.split("SOLUTION").next().unwrap().trim().to_string(),
        golden_plan: None,
    }];
    tasks.extend(generate_task_records(TaskDomain::Trip, &[3, 4], 1, 7));
    let short = trip_mutations()
        .into_iter()
        .find(|m| m.name == "shorten_vienna")
        .unwrap()
        .plan
        .to_text();
    let plan = |i: usize| parse_trip_plan(tasks[i].golden_plan.as_deref().unwrap()).unwrap();
    let scripts = vec![
        vec![short, NO_PLAN.to_string(), trip_solution_text().to_string()],
        vec![plan(1).to_text()],
        vec![trip_visits_shuffled(&plan(2)); 3],
    ];
    (tasks, scripts)
}

fn meeting_fixture() -> (Vec<TaskRecord>, Vec<Vec<String>>) {
    let mut tasks = vec![TaskRecord {
        id: "meeting-example".into(),
        prompt: meeting_task_text().trim().to_string(),
        golden_plan: None,
    }];
    tasks.extend(generate_task_records(TaskDomain::Meeting, &[3, 4], 1, 7));
    let m = meeting_mutations();
    let mutation = |name: &str| m.iter().find(|x| x.name == name).unwrap().plan_text.clone();
    let plan = |i: usize| parse_meeting_plan(tasks[i].golden_plan.as_deref().unwrap()).unwrap();
    let (p1, p2) = (plan(1).to_text(), without_last_meeting(&plan(2)));
    let scripts = vec![
        vec![
            meeting_reply(&[&mutation("drop_deborah"), NO_PLAN, &mutation("betty_short")]),
            meeting_reply(&[meeting_solution_text(), &mutation("drop_deborah"), NO_PLAN]),
        ],
        vec![meeting_reply(&[&p1, &p1, &p1])],
        vec![meeting_reply(&[&p2, NO_PLAN, &p2]); 3],
    ];
    (tasks, scripts)
}

/// Rebuild task files, caches and expected outputs for both domains.
pub fn regenerate() {
    for domain in [TaskDomain::Trip, TaskDomain::Meeting] {
        let dir = fixture_dir(domain);
        let (tasks, scripts) = match domain {
            TaskDomain::Trip => trip_fixture(),
            TaskDomain::Meeting => meeting_fixture(),
        };
        record(domain, &dir, &tasks, &scripts);
        let out = tempfile::tempdir().unwrap();
        run_experiment(&replay_config(domain, out.path())).expect("replay of fresh recording");
        let log = fs::read_to_string(out.path().join("log.jsonl")).unwrap();
        fs::write(out.path().join("rounds.jsonl"), rounds_jsonl(&log)).unwrap();
        let expected = dir.join("expected");
        fs::create_dir_all(&expected).unwrap();
        for name in EXPECTED_FILES {
            fs::copy(out.path().join(name), expected.join(name)).unwrap();
        }
    }
}
