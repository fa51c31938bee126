//! Experiment configuration, orchestration and output files.
//!
//! A run reads an [`ExperimentConfig`] (TOML), dispatches to the spring,
//! trip or meeting runner, and writes into `output_dir`:
//!
//! | file | contents |
//! |------|----------|
//! | `log.jsonl` | one [`RunLogRecord`] per run or task |
//! | `summary.csv` | headline table |
//! | `results.jsonl` | per-task outcomes (trip, meeting) |
//! | `trajectory.csv` | exact MPC vs sampled MPC, per step |
//! | `ratio_rows.csv`, `ratio_bars.csv` | ratio experiment data |
//! | `success_by_size.csv` | success rate per city or friend count |
//!
//! Every CSV depends only on the configuration, so mock, oracle and replay
//! runs are byte-for-byte reproducible.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    ChatRequest, Gateway, GatewayConfig, GatewayError, GatewayMode, RequestSettings, RetryPolicy, TextSampler,
};
use crate::meeting::{
    evaluate_meeting, generate_meeting_instance, parse_meeting_plan, parse_meeting_task, run_meeting_llmpc,
    solve_meeting_oracle, success_target, MeetingDomain, MeetingPlan, MeetingTask, Step,
};
use crate::mpc::{MpcError, PlanningProblem};
use crate::refine::{RefinementDomain, RefinementRun, RoundLog, ViolationRecord};
use crate::sampling::{LlmSpringSampler, MockNoisySampler, OracleSampler};
use crate::spring::{
    ratio_experiment, run_spring_mpc, sample_states, CostWeights, Disturbance, RatioTable, SpringError, SpringParams,
    SpringRun, SpringState,
};
use crate::trip::{
    evaluate_trip, generate_trip_instance, parse_trip_plan, parse_trip_task, run_trip_llmpc, solve_trip_oracle,
    Segment, TripPlan, TripTask,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config field `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("task {id}: {message}")]
    Task { id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config syntax: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Spring(#[from] SpringError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

fn config_error(path: &str, message: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    SpringTrajectory,
    SpringRatio,
    Trip,
    Meeting,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SpringTrajectory => "spring-trajectory",
            Self::SpringRatio => "spring-ratio",
            Self::Trip => "trip",
            Self::Meeting => "meeting",
        }
    }

    /// Default `(rounds, samples)`.
    fn default_budget(self) -> (usize, usize) {
        match self {
            Self::SpringTrajectory => (20, 15),
            Self::SpringRatio => (1, 15),
            Self::Trip => (5, 1),
            Self::Meeting => (9, 3),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Llm,
    #[default]
    MockNoisy,
    Oracle,
    Replay,
}

impl SamplerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Llm => "llm",
            Self::MockNoisy => "mock-noisy",
            Self::Oracle => "oracle",
            Self::Replay => "replay",
        }
    }
}

/// Planning budget. Unset `rounds` / `samples` fall back to
/// per-experiment defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcSection {
    pub rounds: Option<usize>,
    pub samples: Option<usize>,
    pub horizon: usize,
    pub execute_steps: usize,
}

impl Default for MpcSection {
    fn default() -> Self {
        Self {
            rounds: None,
            samples: None,
            horizon: 3,
            execute_steps: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringSection {
    pub params: SpringParams,
    pub weights: CostWeights,
    pub x0: f64,
    pub v0: f64,
    /// Standard deviation of the mock sampler's perturbations.
    pub noise_scale: f64,
    /// Whether the mock sampler's first sample is the exact optimum.
    pub include_optimum: bool,
    /// Velocity noise per step; 0 disables it.
    pub disturbance_std: f64,
    pub ratio_states: usize,
    pub ratio_k: Vec<usize>,
    pub x_range: [f64; 2],
    pub v_range: [f64; 2],
}

impl Default for SpringSection {
    fn default() -> Self {
        Self {
            params: SpringParams::default(),
            weights: CostWeights::default(),
            x0: 1.0,
            v0: 0.0,
            noise_scale: 2.0,
            include_optimum: false,
            disturbance_std: 0.0,
            ratio_states: 20,
            ratio_k: vec![1, 5, 10, 15],
            x_range: [-2.0, 4.0],
            v_range: [-2.0, 2.0],
        }
    }
}

/// Where trip or meeting tasks come from: a JSONL task file, or the
/// generator when no file is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSection {
    pub tasks: Option<PathBuf>,
    pub sizes: Vec<usize>,
    pub per_size: usize,
    /// Chance that a mock reply is the reference plan unchanged.
    pub clean_probability: f64,
}

impl Default for TaskSection {
    fn default() -> Self {
        Self {
            tasks: None,
            sizes: vec![3, 4, 5, 6],
            per_size: 5,
            clean_probability: 0.3,
        }
    }
}

fn meeting_tasks_default() -> TaskSection {
    TaskSection {
        sizes: vec![2, 3, 4, 5],
        ..TaskSection::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSection {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub endpoint: String,
    pub timeout_secs: u64,
    pub mode: GatewayMode,
    pub cache_dir: Option<PathBuf>,
    pub api_key_env: String,
}

impl Default for LlmSection {
    fn default() -> Self {
        let settings = RequestSettings::default();
        let gateway = GatewayConfig::default();
        Self {
            model_id: settings.model_id,
            temperature: settings.temperature,
            max_output_tokens: settings.max_output_tokens,
            endpoint: gateway.endpoint,
            timeout_secs: gateway.timeout_secs,
            mode: gateway.mode,
            cache_dir: gateway.cache_dir,
            api_key_env: gateway.api_key_env,
        }
    }
}

impl LlmSection {
    pub fn settings(&self) -> RequestSettings {
        RequestSettings {
            model_id: self.model_id.clone(),
            temperature: self.temperature,
            max_output_tokens: self.max_output_tokens,
        }
    }

    pub fn gateway_config(&self) -> GatewayConfig {
        GatewayConfig {
            endpoint: self.endpoint.clone(),
            timeout_secs: self.timeout_secs,
            mode: self.mode,
            cache_dir: self.cache_dir.clone(),
            api_key_env: self.api_key_env.clone(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub sampler: SamplerKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Tasks run concurrently up to this many at a time.
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub mpc: MpcSection,
    #[serde(default)]
    pub spring: SpringSection,
    #[serde(default)]
    pub trip: TaskSection,
    #[serde(default = "meeting_tasks_default")]
    pub meeting: TaskSection,
    #[serde(default)]
    pub llm: LlmSection,
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub sampler: Option<SamplerKind>,
    pub rounds: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub tasks: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            sampler: SamplerKind::default(),
            seed: 0,
            output_dir: default_output_dir(),
            workers: default_workers(),
            mpc: MpcSection::default(),
            spring: SpringSection::default(),
            trip: TaskSection::default(),
            meeting: meeting_tasks_default(),
            llm: LlmSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(io_error(path))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.sampler {
            self.sampler = s;
        }
        if o.rounds.is_some() {
            self.mpc.rounds = o.rounds;
        }
        if o.samples.is_some() {
            self.mpc.samples = o.samples;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.output_dir = dir.clone();
        }
        if let Some(dir) = &o.cache_dir {
            self.llm.cache_dir = Some(dir.clone());
        }
        if let Some(tasks) = &o.tasks {
            match self.experiment {
                ExperimentKind::Meeting => self.meeting.tasks = Some(tasks.clone()),
                _ => self.trip.tasks = Some(tasks.clone()),
            }
        }
    }

    pub fn rounds(&self) -> usize {
        self.mpc.rounds.unwrap_or(self.experiment.default_budget().0)
    }

    pub fn samples(&self) -> usize {
        self.mpc.samples.unwrap_or(self.experiment.default_budget().1)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.rounds() == 0 {
            return Err(config_error("mpc.rounds", "must be at least 1"));
        }
        if self.samples() == 0 {
            return Err(config_error("mpc.samples", "must be at least 1"));
        }
        if self.mpc.horizon == 0 {
            return Err(config_error("mpc.horizon", "must be at least 1"));
        }
        if self.mpc.execute_steps == 0 || self.mpc.execute_steps > self.mpc.horizon {
            return Err(config_error("mpc.execute_steps", "must lie in 1..=mpc.horizon"));
        }
        if self.workers == 0 {
            return Err(config_error("workers", "must be at least 1"));
        }
        let s = &self.spring;
        s.params
            .validate()
            .map_err(|e| config_error("spring.params", e.to_string()))?;
        s.weights
            .validate()
            .map_err(|e| config_error("spring.weights", e.to_string()))?;
        if !(s.x0.is_finite() && s.v0.is_finite()) {
            return Err(config_error("spring.x0", "initial state must be finite"));
        }
        if !(s.noise_scale.is_finite() && s.noise_scale >= 0.0) {
            return Err(config_error("spring.noise_scale", "must be finite and non-negative"));
        }
        if !(s.disturbance_std.is_finite() && s.disturbance_std >= 0.0) {
            return Err(config_error(
                "spring.disturbance_std",
                "must be finite and non-negative",
            ));
        }
        if s.ratio_states == 0 {
            return Err(config_error("spring.ratio_states", "must be at least 1"));
        }
        if s.ratio_k.is_empty() || s.ratio_k.contains(&0) {
            return Err(config_error("spring.ratio_k", "needs at least one entry, all positive"));
        }
        for (name, r) in [("spring.x_range", s.x_range), ("spring.v_range", s.v_range)] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] <= r[1]) {
                return Err(config_error(name, "must be [lo, hi] with lo <= hi"));
            }
        }
        for (name, t) in [("trip", &self.trip), ("meeting", &self.meeting)] {
            if t.tasks.is_none() && (t.sizes.is_empty() || t.sizes.contains(&0)) {
                return Err(config_error(
                    &format!("{name}.sizes"),
                    "needs at least one entry, all positive",
                ));
            }
            if t.per_size == 0 {
                return Err(config_error(&format!("{name}.per_size"), "must be at least 1"));
            }
            if !(0.0..=1.0).contains(&t.clean_probability) {
                return Err(config_error(&format!("{name}.clean_probability"), "must lie in [0, 1]"));
            }
        }
        if !(0.0..=2.0).contains(&self.llm.temperature) {
            return Err(config_error("llm.temperature", "must lie in [0, 2]"));
        }
        if self.llm.model_id.trim().is_empty() {
            return Err(config_error("llm.model_id", "must not be empty"));
        }
        match self.sampler {
            SamplerKind::Llm => {
                if self.llm.endpoint.trim().is_empty() {
                    return Err(config_error("llm.endpoint", "required when sampler = \"llm\""));
                }
                if self.llm.mode == GatewayMode::ReplayOnly {
                    return Err(config_error("llm.mode", "sampler = \"llm\" needs a live mode"));
                }
                if self.llm.mode == GatewayMode::LiveWithCache && self.llm.cache_dir.is_none() {
                    return Err(config_error(
                        "llm.cache_dir",
                        "required when llm.mode = \"live-with-cache\"",
                    ));
                }
            }
            SamplerKind::Replay => {
                if self.llm.cache_dir.is_none() {
                    return Err(config_error("llm.cache_dir", "required when sampler = \"replay\""));
                }
            }
            SamplerKind::MockNoisy | SamplerKind::Oracle => {}
        }
        Ok(())
    }
}

/// One task of a task file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub golden_plan: Option<String>,
}

pub fn load_task_file(path: &Path) -> Result<Vec<TaskRecord>, HarnessError> {
    let file = fs::File::open(path).map_err(io_error(path))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_error(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: TaskRecord = serde_json::from_str(&line).map_err(|e| HarnessError::Task {
            id: format!("{}:{}", path.display(), n + 1),
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

pub fn write_task_file(path: &Path, records: &[TaskRecord]) -> Result<(), HarnessError> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_file(path, &text)
}

/// The task statement inside a prompt: the text after the last `TASK:`
/// marker and before any `SOLUTION`.
pub fn task_statement(prompt: &str) -> &str {
    let text = match prompt.rfind("TASK:") {
        Some(at) => &prompt[at + "TASK:".len()..],
        None => prompt,
    };
    let text = match text.find("SOLUTION") {
        Some(at) => &text[..at],
        None => text,
    };
    text.trim()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskDomain {
    Trip,
    Meeting,
}

fn instance_seed(seed: u64, size: usize, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((size as u64) << 32 | index as u64)
}

/// Generated tasks with their reference plans, `per_size` of each size.
pub fn generate_task_records(domain: TaskDomain, sizes: &[usize], per_size: usize, seed: u64) -> Vec<TaskRecord> {
    let mut out = Vec::new();
    for &size in sizes {
        for i in 0..per_size {
            let s = instance_seed(seed, size, i);
            let (id, prompt, plan) = match domain {
                TaskDomain::Trip => {
                    let (task, plan) = generate_trip_instance(size, s);
                    (format!("trip-{size}-{i}"), task.to_text(), plan.to_text())
                }
                TaskDomain::Meeting => {
                    let (task, plan) = generate_meeting_instance(size, s);
                    (format!("meeting-{size}-{i}"), task.to_text(), plan.to_text())
                }
            };
            out.push(TaskRecord {
                id,
                prompt,
                golden_plan: Some(plan),
            });
        }
    }
    out
}

/// Result of checking one plan against one task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub parsed: bool,
    pub success: bool,
    pub violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meetings_satisfied: Option<usize>,
}

pub fn verify_plan(domain: TaskDomain, task_prompt: &str, plan_text: &str) -> Result<VerifyReport, HarnessError> {
    let statement = task_statement(task_prompt);
    let task_err = |e: String| HarnessError::Task {
        id: "task".into(),
        message: e,
    };
    match domain {
        TaskDomain::Trip => {
            let task = parse_trip_task(statement).map_err(|e| task_err(e.to_string()))?;
            Ok(match parse_trip_plan(plan_text) {
                Ok(plan) => {
                    let v = evaluate_trip(&task, &plan);
                    VerifyReport {
                        parsed: true,
                        success: v.is_empty(),
                        violations: v.iter().map(ToString::to_string).collect(),
                        meetings_satisfied: None,
                    }
                }
                Err(e) => VerifyReport {
                    parsed: false,
                    success: false,
                    violations: vec![format!("[parse_failure] {e}")],
                    meetings_satisfied: None,
                },
            })
        }
        TaskDomain::Meeting => {
            let task = parse_meeting_task(statement).map_err(|e| task_err(e.to_string()))?;
            Ok(match parse_meeting_plan(plan_text) {
                Ok(plan) => {
                    let e = evaluate_meeting(&task, &plan);
                    let domain = MeetingDomain {
                        task: &task,
                        task_text: statement,
                        target: success_target(&task),
                    };
                    VerifyReport {
                        parsed: true,
                        success: domain.is_success(&e.violations),
                        violations: e.violations.iter().map(ToString::to_string).collect(),
                        meetings_satisfied: Some(e.meetings_satisfied),
                    }
                }
                Err(e) => VerifyReport {
                    parsed: false,
                    success: false,
                    violations: vec![format!("[parse_failure] {e}")],
                    meetings_satisfied: Some(0),
                },
            })
        }
    }
}

/// A header row plus data rows, all pre-formatted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<I, S>(headers: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push<I, S>(&mut self, row: I)
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }

    pub fn to_csv(&self) -> Result<String, HarnessError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        let bytes = w.into_inner().map_err(|e| HarnessError::Csv(e.into_error().into()))?;
        Ok(String::from_utf8(bytes).expect("csv of utf-8 fields is utf-8"))
    }

    /// Columns padded to equal width, numbers right-aligned.
    pub fn to_aligned(&self) -> String {
        let cols = self.headers.len();
        let mut widths: Vec<usize> = self.headers.iter().map(|h| h.len()).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate().take(cols) {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    if c.parse::<f64>().is_ok() {
                        format!("{c:>w$}", w = widths[i])
                    } else {
                        format!("{c:<w$}", w = widths[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = line(&self.headers);
        out.push('\n');
        out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
        for row in &self.rows {
            out.push('\n');
            out.push_str(&line(row));
        }
        out
    }
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        v.to_string()
    }
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub x: f64,
    pub v: f64,
    /// Control applied from this state; empty for the final state.
    pub u: Option<f64>,
    /// Planning cost of the plan this step came from.
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySeries {
    pub label: String,
    pub rows: Vec<TrajectoryRow>,
    pub accumulated_cost: f64,
    pub final_state: SpringState,
}

impl TrajectorySeries {
    pub fn from_run(label: &str, run: &SpringRun, execute_steps: usize, initial: SpringState) -> Self {
        let mut rows = Vec::new();
        let mut applied = run.applied.iter();
        for (record, n) in run.records.iter().zip(run.steps_per_round(execute_steps)) {
            for _ in 0..n {
                let (s, u) = applied.next().expect("one applied pair per executed step");
                rows.push(TrajectoryRow {
                    step: rows.len(),
                    x: s.x,
                    v: s.v,
                    u: Some(*u),
                    objective: Some(record.selected.cost),
                });
            }
        }
        let last = if run.records.is_empty() {
            initial
        } else {
            run.final_state
        };
        rows.push(TrajectoryRow {
            step: rows.len(),
            x: last.x,
            v: last.v,
            u: None,
            objective: None,
        });
        Self {
            label: label.to_string(),
            rows,
            accumulated_cost: run.accumulated_cost,
            final_state: last,
        }
    }
}

/// Outcome of one trip or meeting task.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaskResult {
    pub task_id: String,
    /// City count or friend count.
    pub size: usize,
    pub rounds: usize,
    pub samples: usize,
    pub success: bool,
    pub rounds_used: usize,
    /// Violation count of the best plan after each round.
    pub violation_history: Vec<Option<usize>>,
    pub final_violations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExperimentResults {
    Trajectory {
        mpc: TrajectorySeries,
        llmpc: TrajectorySeries,
    },
    Ratio(RatioTable),
    Tasks {
        experiment: ExperimentKind,
        sampler: SamplerKind,
        rounds: usize,
        samples: usize,
        results: Vec<TaskResult>,
    },
}

/// Headline table of an experiment.
pub fn emit_table(results: &ExperimentResults) -> Table {
    match results {
        ExperimentResults::Trajectory { mpc, llmpc } => {
            let mut t = Table::new(["run", "accumulated_cost", "final_x", "final_v", "steps"]);
            for s in [mpc, llmpc] {
                t.push([
                    s.label.clone(),
                    num(s.accumulated_cost),
                    num(s.final_state.x),
                    num(s.final_state.v),
                    (s.rows.len() - 1).to_string(),
                ]);
            }
            t
        }
        ExperimentResults::Ratio(table) => {
            let mut t = Table::new(
                std::iter::once("states".to_string()).chain(table.k_values.iter().map(|k| format!("K={k}"))),
            );
            let used = table
                .rows
                .iter()
                .map(|r| r.state_index)
                .collect::<std::collections::BTreeSet<_>>();
            t.push(std::iter::once(used.len().to_string()).chain(table.means.iter().map(|m| num(*m))));
            t
        }
        ExperimentResults::Tasks {
            experiment,
            sampler,
            rounds,
            samples,
            results,
        } => {
            let successes = results.iter().filter(|r| r.success).count();
            let mut t = Table::new(["experiment", "sampler", "T", "K", "n", "successes", "success_rate"]);
            t.push([
                experiment.as_str().to_string(),
                sampler.as_str().to_string(),
                rounds.to_string(),
                samples.to_string(),
                results.len().to_string(),
                successes.to_string(),
                rate(successes, results.len()),
            ]);
            t
        }
    }
}

fn rate(successes: usize, n: usize) -> String {
    if n == 0 {
        String::new()
    } else {
        format!("{:.4}", successes as f64 / n as f64)
    }
}

/// Figure data files, as `(file name, table)`.
pub fn emit_plotdata(results: &ExperimentResults) -> Vec<(String, Table)> {
    match results {
        ExperimentResults::Trajectory { mpc, llmpc } => {
            let mut t = Table::new([
                "step",
                "mpc_x",
                "mpc_v",
                "mpc_u",
                "mpc_objective",
                "llmpc_x",
                "llmpc_v",
                "llmpc_u",
                "llmpc_objective",
            ]);
            let len = mpc.rows.len().max(llmpc.rows.len());
            for i in 0..len {
                let mut row = vec![i.to_string()];
                for s in [mpc, llmpc] {
                    match s.rows.get(i) {
                        Some(r) => row.extend([num(r.x), num(r.v), opt_num(r.u), opt_num(r.objective)]),
                        None => row.extend(std::iter::repeat_n(String::new(), 4)),
                    }
                }
                t.push(row);
            }
            vec![("trajectory.csv".to_string(), t)]
        }
        ExperimentResults::Ratio(table) => {
            let mut bars = Table::new(["k", "mean_ratio"]);
            for (k, m) in table.k_values.iter().zip(&table.means) {
                bars.push([k.to_string(), num(*m)]);
            }
            let mut rows = Table::new(["state_index", "x", "v", "k", "llmpc_cost", "mpc_cost", "ratio"]);
            for r in &table.rows {
                rows.push([
                    r.state_index.to_string(),
                    num(r.x),
                    num(r.v),
                    r.k.to_string(),
                    num(r.llmpc_cost),
                    num(r.mpc_cost),
                    num(r.ratio),
                ]);
            }
            vec![
                ("ratio_bars.csv".to_string(), bars),
                ("ratio_rows.csv".to_string(), rows),
            ]
        }
        ExperimentResults::Tasks { results, .. } => {
            let mut groups: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
            for r in results {
                let g = groups.entry(r.size).or_default();
                g.0 += 1;
                g.1 += usize::from(r.success);
            }
            let mut t = Table::new(["size", "n", "successes", "success_rate"]);
            for (size, (n, s)) in groups {
                t.push([size.to_string(), n.to_string(), s.to_string(), rate(s, n)]);
            }
            vec![("success_by_size.csv".to_string(), t)]
        }
    }
}

/// One line of `log.jsonl`.
#[derive(Debug, Clone, Serialize)]
pub struct RunLogRecord {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub elapsed_ms: u128,
    pub metric_name: String,
    pub metric: f64,
    pub rounds: serde_json::Value,
}

#[derive(Debug, Clone, Serialize)]
struct SpringRoundLog {
    round: usize,
    requested: usize,
    candidate_costs: Vec<Option<f64>>,
    selected_index: usize,
    selected_cost: Option<f64>,
    controls: Option<Vec<f64>>,
    x_after: f64,
    v_after: f64,
}

fn spring_round_logs(run: &SpringRun) -> Vec<SpringRoundLog> {
    run.records
        .iter()
        .map(|r| SpringRoundLog {
            round: r.round_index,
            requested: r.requested,
            candidate_costs: r
                .all_scored
                .iter()
                .map(|c| c.cost.is_finite().then_some(c.cost))
                .collect(),
            selected_index: r.selected.sample_index,
            selected_cost: r.selected.cost.is_finite().then_some(r.selected.cost),
            controls: r.selected.plan.as_ref().map(|p| p.0.clone()),
            x_after: r.state_after.x,
            v_after: r.state_after.v,
        })
        .collect()
}

/// What [`run_experiment`] wrote.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub results: ExperimentResults,
    pub headline: Table,
    pub files: Vec<PathBuf>,
}

/// Validate, run, and write all outputs of one experiment.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary, HarnessError> {
    config.validate()?;
    let gateway = match config.sampler {
        SamplerKind::Llm => Some(Gateway::from_config(&config.llm.gateway_config())?),
        SamplerKind::Replay => Some(Gateway::replay(config.llm.cache_dir.clone().expect("validated"))),
        SamplerKind::MockNoisy | SamplerKind::Oracle => None,
    };
    let gateway = gateway.map(|g| g.with_retry(RetryPolicy::default()));

    let (results, logs) = match config.experiment {
        ExperimentKind::SpringTrajectory => run_spring_trajectory(config, gateway.as_ref())?,
        ExperimentKind::SpringRatio => run_spring_ratio(config, gateway.as_ref())?,
        ExperimentKind::Trip => run_tasks(config, gateway.as_ref(), TaskDomain::Trip)?,
        ExperimentKind::Meeting => run_tasks(config, gateway.as_ref(), TaskDomain::Meeting)?,
    };

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(io_error(dir))?;
    let mut files = Vec::new();

    let mut log_text = String::new();
    for record in &logs {
        log_text.push_str(&serde_json::to_string(record)?);
        log_text.push('\n');
    }
    files.push(write_in(dir, "log.jsonl", &log_text)?);

    let headline = emit_table(&results);
    files.push(write_in(dir, "summary.csv", &headline.to_csv()?)?);
    for (name, table) in emit_plotdata(&results) {
        files.push(write_in(dir, &name, &table.to_csv()?)?);
    }
    if let ExperimentResults::Tasks { results: tasks, .. } = &results {
        let mut text = String::new();
        for r in tasks {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        files.push(write_in(dir, "results.jsonl", &text)?);
    }
    Ok(ExperimentSummary {
        results,
        headline,
        files,
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    let mut f = fs::File::create(path).map_err(io_error(path))?;
    f.write_all(text.as_bytes()).map_err(io_error(path))
}

fn write_in(dir: &Path, name: &str, text: &str) -> Result<PathBuf, HarnessError> {
    let path = dir.join(name);
    write_file(&path, text)?;
    Ok(path)
}

fn spring_problem(config: &ExperimentConfig, samples: usize) -> Result<PlanningProblem, MpcError> {
    PlanningProblem::new(config.mpc.horizon, config.mpc.execute_steps, config.rounds(), samples)
}

fn run_spring_trajectory(
    config: &ExperimentConfig,
    gateway: Option<&Gateway>,
) -> Result<(ExperimentResults, Vec<RunLogRecord>), HarnessError> {
    let s = &config.spring;
    let h = config.mpc.horizon;
    let initial = SpringState::new(s.x0, s.v0);
    let disturbance = || (s.disturbance_std > 0.0).then(|| Disturbance::gaussian(s.disturbance_std, config.seed));

    let started = Instant::now();
    let mut oracle = OracleSampler {
        params: s.params,
        weights: s.weights,
        horizon: h,
    };
    let mpc = run_spring_mpc(
        &spring_problem(config, 1)?,
        &mut oracle,
        &s.params,
        &s.weights,
        initial,
        disturbance(),
    )?;
    let mpc_ms = started.elapsed().as_millis();

    let started = Instant::now();
    let problem = spring_problem(config, config.samples())?;
    let llmpc = match config.sampler {
        SamplerKind::MockNoisy => {
            let mut sampler = MockNoisySampler {
                params: s.params,
                weights: s.weights,
                horizon: h,
                noise_scale: s.noise_scale,
                seed: config.seed,
                include_optimum: s.include_optimum,
            };
            run_spring_mpc(&problem, &mut sampler, &s.params, &s.weights, initial, disturbance())?
        }
        SamplerKind::Oracle => run_spring_mpc(&problem, &mut oracle, &s.params, &s.weights, initial, disturbance())?,
        SamplerKind::Llm | SamplerKind::Replay => {
            let mut sampler = LlmSpringSampler::new(
                gateway.expect("gateway built"),
                s.params,
                s.weights,
                h,
                config.llm.settings(),
            );
            run_spring_mpc(&problem, &mut sampler, &s.params, &s.weights, initial, disturbance())?
        }
    };
    let llmpc_ms = started.elapsed().as_millis();

    let m = config.mpc.execute_steps;
    let logs = vec![
        RunLogRecord {
            run_id: format!("spring-trajectory-mpc-s{}", config.seed),
            config: config.clone(),
            elapsed_ms: mpc_ms,
            metric_name: "accumulated_cost".into(),
            metric: mpc.accumulated_cost,
            rounds: serde_json::to_value(spring_round_logs(&mpc))?,
        },
        RunLogRecord {
            run_id: format!("spring-trajectory-llmpc-s{}", config.seed),
            config: config.clone(),
            elapsed_ms: llmpc_ms,
            metric_name: "accumulated_cost".into(),
            metric: llmpc.accumulated_cost,
            rounds: serde_json::to_value(spring_round_logs(&llmpc))?,
        },
    ];
    Ok((
        ExperimentResults::Trajectory {
            mpc: TrajectorySeries::from_run("mpc", &mpc, m, initial),
            llmpc: TrajectorySeries::from_run("llmpc", &llmpc, m, initial),
        },
        logs,
    ))
}

fn run_spring_ratio(
    config: &ExperimentConfig,
    gateway: Option<&Gateway>,
) -> Result<(ExperimentResults, Vec<RunLogRecord>), HarnessError> {
    let s = &config.spring;
    let h = config.mpc.horizon;
    let states = sample_states(
        s.ratio_states,
        (s.x_range[0], s.x_range[1]),
        (s.v_range[0], s.v_range[1]),
        config.seed,
    );
    let started = Instant::now();
    let table = match config.sampler {
        SamplerKind::MockNoisy => {
            let mut sampler = MockNoisySampler {
                params: s.params,
                weights: s.weights,
                horizon: h,
                noise_scale: s.noise_scale,
                seed: config.seed,
                include_optimum: s.include_optimum,
            };
            ratio_experiment(&states, &s.ratio_k, &mut sampler, &s.params, &s.weights, h)?
        }
        SamplerKind::Oracle => {
            let mut sampler = OracleSampler {
                params: s.params,
                weights: s.weights,
                horizon: h,
            };
            ratio_experiment(&states, &s.ratio_k, &mut sampler, &s.params, &s.weights, h)?
        }
        SamplerKind::Llm | SamplerKind::Replay => {
            let mut sampler = LlmSpringSampler::new(
                gateway.expect("gateway built"),
                s.params,
                s.weights,
                h,
                config.llm.settings(),
            );
            ratio_experiment(&states, &s.ratio_k, &mut sampler, &s.params, &s.weights, h)?
        }
    };
    let log = RunLogRecord {
        run_id: format!("spring-ratio-s{}", config.seed),
        config: config.clone(),
        elapsed_ms: started.elapsed().as_millis(),
        metric_name: format!("mean_ratio_k{}", s.ratio_k.last().expect("validated")),
        metric: *table.means.last().expect("one mean per k"),
        rounds: serde_json::to_value(&table.rows)?,
    };
    Ok((ExperimentResults::Ratio(table), vec![log]))
}

struct Instance<T, P> {
    id: String,
    size: usize,
    text: String,
    task: T,
    reference: Option<P>,
}

fn instances<T, P>(
    config: &ExperimentConfig,
    section: &TaskSection,
    domain: TaskDomain,
    parse_task: impl Fn(&str) -> Result<T, String>,
    parse_plan: impl Fn(&str) -> Result<P, String>,
    size_of: impl Fn(&T) -> usize,
) -> Result<Vec<Instance<T, P>>, HarnessError> {
    let records = match &section.tasks {
        Some(path) => load_task_file(path)?,
        None => generate_task_records(domain, &section.sizes, section.per_size, config.seed),
    };
    records
        .into_iter()
        .map(|r| {
            let text = task_statement(&r.prompt).to_string();
            let task = parse_task(&text).map_err(|message| HarnessError::Task {
                id: r.id.clone(),
                message,
            })?;
            let reference = match &r.golden_plan {
                Some(p) => Some(
                    parse_plan(task_statement_plan(p)).map_err(|message| HarnessError::Task {
                        id: r.id.clone(),
                        message: format!("golden plan: {message}"),
                    })?,
                ),
                None => None,
            };
            Ok(Instance {
                id: r.id,
                size: size_of(&task),
                text,
                task,
                reference,
            })
        })
        .collect()
}

fn task_statement_plan(plan: &str) -> &str {
    match plan.rfind("SOLUTION:") {
        Some(at) => &plan[at + "SOLUTION:".len()..],
        None => plan,
    }
}

/// Text source used by the task runners.
enum TaskSampler<'a> {
    Gateway(&'a Gateway),
    Scripted(Box<dyn FnMut(usize) -> Vec<String> + Send + 'a>),
}

impl TextSampler for TaskSampler<'_> {
    fn sample_texts(&mut self, request: &ChatRequest, count: usize) -> Result<Vec<String>, GatewayError> {
        match self {
            TaskSampler::Gateway(g) => g.sample_texts(request, count),
            TaskSampler::Scripted(f) => Ok(f(count)),
        }
    }

    fn sample_texts_from(
        &mut self,
        request: &ChatRequest,
        first: usize,
        count: usize,
    ) -> Result<Vec<String>, GatewayError> {
        match self {
            TaskSampler::Gateway(g) => g.sample_texts_from(request, first, count),
            TaskSampler::Scripted(f) => Ok(f(count)),
        }
    }
}

const GARBLED_REPLY: &str = "I am sorry, but I could not come up with a plan for this request.";

fn perturb_trip(plan: &TripPlan, rng: &mut ChaCha8Rng) -> String {
    let mut p = plan.clone();
    let stays: Vec<usize> = p
        .segments
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Segment::Stay { .. }))
        .map(|(i, _)| i)
        .collect();
    match rng.random_range(0..4) {
        0 => {
            let i = *stays.choose(rng).expect("plans have stays");
            if let Segment::Stay { start, end, .. } = &mut p.segments[i] {
                *end = (*end).saturating_sub(1).max(*start);
                if *end == *start {
                    *end += 2;
                }
            }
        }
        1 if stays.len() > 1 => {
            let i = *stays.choose(rng).expect("plans have stays");
            let lo = i.saturating_sub(1);
            p.segments.drain(lo..=i);
            if lo == 0 && !p.segments.is_empty() {
                p.segments.remove(0);
            }
        }
        2 if stays.len() > 1 => {
            let ia = rng.random_range(0..stays.len());
            let ib = (ia + rng.random_range(1..stays.len())) % stays.len();
            let (a, b) = (stays[ia], stays[ib]);
            let city = |s: &Segment| match s {
                Segment::Stay { city, .. } => city.clone(),
                Segment::Fly { .. } => unreachable!(),
            };
            let (ca, cb) = (city(&p.segments[a]), city(&p.segments[b]));
            if let Segment::Stay { city, .. } = &mut p.segments[a] {
                *city = cb;
            }
            if let Segment::Stay { city, .. } = &mut p.segments[b] {
                *city = ca;
            }
        }
        _ => return GARBLED_REPLY.to_string(),
    }
    if p.segments.is_empty() {
        return GARBLED_REPLY.to_string();
    }
    p.to_text()
}

fn perturb_meeting(plan: &MeetingPlan, rng: &mut ChaCha8Rng) -> String {
    let mut p = plan.clone();
    let meets: Vec<usize> = p
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Step::Meet { .. }))
        .map(|(i, _)| i)
        .collect();
    let travels: Vec<usize> = p
        .steps
        .iter()
        .enumerate()
        .filter(|(_, s)| matches!(s, Step::Travel { .. }))
        .map(|(i, _)| i)
        .collect();
    match rng.random_range(0..4) {
        0 if !meets.is_empty() => {
            let i = *meets.choose(rng).expect("non-empty");
            if let Step::Meet { minutes, to, .. } = &mut p.steps[i] {
                let cut = 15.min(*minutes);
                *minutes -= cut;
                *to -= cut;
            }
        }
        1 if !meets.is_empty() => {
            let last = *meets.last().expect("non-empty");
            p.steps.truncate(last);
        }
        2 if !travels.is_empty() => {
            let i = *travels.choose(rng).expect("non-empty");
            if let Step::Travel { arrive, .. } = &mut p.steps[i] {
                *arrive += 5;
            }
        }
        _ => return p.to_text().replacen("You travel to", "You travel back to", 1) + " " + GARBLED_REPLY,
    }
    p.to_text()
}

fn trip_sampler<'a>(
    config: &ExperimentConfig,
    gateway: Option<&'a Gateway>,
    inst: &Instance<TripTask, TripPlan>,
    index: usize,
) -> Result<TaskSampler<'a>, HarnessError> {
    if let Some(g) = gateway {
        return Ok(TaskSampler::Gateway(g));
    }
    let reference = match &inst.reference {
        Some(p) => p.clone(),
        None => solve_trip_oracle(&inst.task, 8)
            .map_err(|e| HarnessError::Task {
                id: inst.id.clone(),
                message: e.to_string(),
            })?
            .ok_or_else(|| HarnessError::Task {
                id: inst.id.clone(),
                message: "no reference plan and the oracle found none".into(),
            })?,
    };
    let text = reference.to_text();
    Ok(match config.sampler {
        SamplerKind::Oracle => TaskSampler::Scripted(Box::new(move |n| vec![text.clone(); n])),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(config.seed, 0, index));
            let clean = config.trip.clean_probability;
            TaskSampler::Scripted(Box::new(move |n| {
                (0..n)
                    .map(|_| {
                        if rng.random_bool(clean) {
                            text.clone()
                        } else {
                            perturb_trip(&reference, &mut rng)
                        }
                    })
                    .collect()
            }))
        }
    })
}

fn meeting_sampler<'a>(
    config: &ExperimentConfig,
    gateway: Option<&'a Gateway>,
    inst: &Instance<MeetingTask, MeetingPlan>,
    index: usize,
) -> Result<TaskSampler<'a>, HarnessError> {
    if let Some(g) = gateway {
        return Ok(TaskSampler::Gateway(g));
    }
    let reference = match &inst.reference {
        Some(p) => p.clone(),
        None => {
            solve_meeting_oracle(&inst.task, 6)
                .map_err(|e| HarnessError::Task {
                    id: inst.id.clone(),
                    message: e.to_string(),
                })?
                .plan
        }
    };
    let k = config.samples();
    let text = reference.to_text();
    Ok(match config.sampler {
        SamplerKind::Oracle => TaskSampler::Scripted(Box::new(move |n| {
            vec![format!("SOLUTION:\n{}", vec![text.clone(); k].join("\n---\n")); n]
        })),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(instance_seed(config.seed, 1, index));
            let clean = config.meeting.clean_probability;
            TaskSampler::Scripted(Box::new(move |n| {
                (0..n)
                    .map(|_| {
                        let blocks: Vec<String> = (0..k)
                            .map(|_| {
                                if rng.random_bool(clean) {
                                    text.clone()
                                } else {
                                    perturb_meeting(&reference, &mut rng)
                                }
                            })
                            .collect();
                        format!("SOLUTION:\n{}", blocks.join("\n---\n"))
                    })
                    .collect()
            }))
        }
    })
}

fn task_result<P, V: ViolationRecord>(
    id: &str,
    size: usize,
    config: &ExperimentConfig,
    run: &RefinementRun<P, V>,
) -> TaskResult {
    TaskResult {
        task_id: id.to_string(),
        size,
        rounds: config.rounds(),
        samples: config.samples(),
        success: run.success,
        rounds_used: run.rounds_used,
        violation_history: run.rounds.iter().map(|r| r.best_violation_count).collect(),
        final_violations: run
            .best
            .as_ref()
            .map(|b| b.violations.iter().map(|v| v.kind_name().to_string()).collect())
            .unwrap_or_default(),
    }
}

fn task_log(config: &ExperimentConfig, result: &TaskResult, rounds: &[RoundLog], elapsed: Duration) -> RunLogRecord {
    RunLogRecord {
        run_id: result.task_id.clone(),
        config: config.clone(),
        elapsed_ms: elapsed.as_millis(),
        metric_name: "success".into(),
        metric: f64::from(u8::from(result.success)),
        rounds: serde_json::to_value(rounds).expect("round logs serialize"),
    }
}

fn run_tasks(
    config: &ExperimentConfig,
    gateway: Option<&Gateway>,
    domain: TaskDomain,
) -> Result<(ExperimentResults, Vec<RunLogRecord>), HarnessError> {
    let settings = config.llm.settings();
    let (t, k) = (config.rounds(), config.samples());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build()?;
    let outcomes: Vec<Result<(TaskResult, RunLogRecord), HarnessError>> = match domain {
        TaskDomain::Trip => {
            let list = instances(
                config,
                &config.trip,
                domain,
                |s| parse_trip_task(s).map_err(|e| e.to_string()),
                |s| parse_trip_plan(s).map_err(|e| e.to_string()),
                |t: &TripTask| t.cities.len(),
            )?;
            pool.install(|| {
                list.par_iter()
                    .enumerate()
                    .map(|(i, inst)| {
                        let started = Instant::now();
                        let mut sampler = trip_sampler(config, gateway, inst, i)?;
                        let run = run_trip_llmpc(&inst.task, &inst.text, t, k, &mut sampler, &settings)?;
                        let result = task_result(&inst.id, inst.size, config, &run);
                        let log = task_log(config, &result, &run.rounds, started.elapsed());
                        Ok((result, log))
                    })
                    .collect()
            })
        }
        TaskDomain::Meeting => {
            let list = instances(
                config,
                &config.meeting,
                domain,
                |s| parse_meeting_task(s).map_err(|e| e.to_string()),
                |s| parse_meeting_plan(s).map_err(|e| e.to_string()),
                |t: &MeetingTask| t.friends.len(),
            )?;
            pool.install(|| {
                list.par_iter()
                    .enumerate()
                    .map(|(i, inst)| {
                        let started = Instant::now();
                        let mut sampler = meeting_sampler(config, gateway, inst, i)?;
                        let run = run_meeting_llmpc(&inst.task, &inst.text, t, k, &mut sampler, &settings)?;
                        let result = task_result(&inst.id, inst.size, config, &run);
                        let log = task_log(config, &result, &run.rounds, started.elapsed());
                        Ok((result, log))
                    })
                    .collect()
            })
        }
    };
    let mut results = Vec::new();
    let mut logs = Vec::new();
    for outcome in outcomes {
        let (r, l) = outcome?;
        results.push(r);
        logs.push(l);
    }
    Ok((
        ExperimentResults::Tasks {
            experiment: config.experiment,
            sampler: config.sampler,
            rounds: t,
            samples: k,
            results,
        },
        logs,
    ))
}
