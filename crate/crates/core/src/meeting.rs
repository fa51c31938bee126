//! Meeting planning: meet as many friends as possible in one day.
//!
//! Times are minutes since midnight and print as `9:00AM`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatRequest, RequestSettings, TextSampler};
use crate::mpc::{Evaluation, MpcError};
use crate::refine::{run_refinement, BestPlan, RefinementDomain, RefinementRun, ViolationRecord};
use crate::sampling::{render_meeting_prompt, split_meeting_response, FeedbackReport};
use crate::trip::{sentences, unescape_newlines};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeetingError {
    #[error("unrecognized sentence: {0:?}")]
    UnrecognizedSentence(String),
    #[error("task text has no arrival sentence")]
    MissingStart,
    #[error("no minimum meeting time given for {0}")]
    MissingMinimum(String),
    #[error("bad time {0:?}")]
    BadTime(String),
    #[error("the plan must begin with exactly one start step")]
    StartPosition,
    #[error("empty plan")]
    EmptyPlan,
    #[error("{friends} friends exceed the search limit of {limit}")]
    TooLarge { friends: usize, limit: usize },
}

/// `735` prints as `12:15PM`.
pub fn format_time(minutes: u32) -> String {
    let h = (minutes / 60) % 24;
    let m = minutes % 60;
    let suffix = if h < 12 { "AM" } else { "PM" };
    let h12 = if h.is_multiple_of(12) { 12 } else { h % 12 };
    format!("{h12}:{m:02}{suffix}")
}

pub fn parse_time(text: &str) -> Result<u32, MeetingError> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"^(\d{1,2}):(\d{2})\s*([AaPp])\.?[Mm]\.?$").expect("static regex"));
    let bad = || MeetingError::BadTime(text.to_string());
    let c = re.captures(text.trim()).ok_or_else(bad)?;
    let h: u32 = c[1].parse().map_err(|_| bad())?;
    let m: u32 = c[2].parse().map_err(|_| bad())?;
    if !(1..=12).contains(&h) || m > 59 {
        return Err(bad());
    }
    let pm = c[3].eq_ignore_ascii_case("p");
    Ok((h % 12 + if pm { 12 } else { 0 }) * 60 + m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Friend {
    pub name: String,
    pub location: String,
    pub avail_lo: u32,
    pub avail_hi: u32,
    pub min_duration: u32,
}

impl Friend {
    pub fn meetable(&self) -> bool {
        self.avail_lo + self.min_duration <= self.avail_hi
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeetingTask {
    pub locations: Vec<String>,
    /// Directed; `(from, to)`.
    pub travel: BTreeMap<(String, String), u32>,
    pub start_location: String,
    pub start_time: u32,
    pub friends: Vec<Friend>,
}

const INTRO: &str = "You are visiting San Francisco for the day and want to meet as many friends as possible. Solve the problem by considering various different schedules and picking the best one to optimize your goals.";

impl MeetingTask {
    pub fn travel_minutes(&self, from: &str, to: &str) -> Option<u32> {
        self.travel.get(&(from.to_string(), to.to_string())).copied()
    }

    pub fn friend(&self, name: &str) -> Option<&Friend> {
        self.friends.iter().find(|f| f.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{INTRO}\n\nTravel distances (in minutes):\n");
        for from in &self.locations {
            for to in &self.locations {
                if let Some(m) = self.travel_minutes(from, to) {
                    out.push_str(&format!("{from} to {to}: {m}.\n"));
                }
            }
        }
        out.push_str(&format!(
            "\nCONSTRAINTS: You arrive at {} at {}.",
            self.start_location,
            format_time(self.start_time)
        ));
        for f in &self.friends {
            out.push_str(&format!(
                " {} will be at {} from {} to {}. You'd like to meet {} for a minimum of {} minutes.",
                f.name,
                f.location,
                format_time(f.avail_lo),
                format_time(f.avail_hi),
                f.name,
                f.min_duration
            ));
        }
        out
    }
}

struct TaskPatterns {
    travel: Regex,
    arrive: Regex,
    window: Regex,
    minimum: Regex,
}

fn task_patterns() -> &'static TaskPatterns {
    static P: OnceLock<TaskPatterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static regex");
        const T: &str = r"(\d{1,2}:\d{2}\s*[AaPp]\.?[Mm]\.?)";
        TaskPatterns {
            travel: re(r"^(.+?) to (.+?):\s*(\d+)\.?$"),
            arrive: re(&format!(r"(?i)^you arrive at (.+?) at {T}\.?$")),
            window: re(&format!(r"^(.+?) will be at (.+?) from {T} to {T}\.?$")),
            minimum: re(r"^You'd like to meet (.+?) for a minimum of (\d+) minutes\.?$"),
        }
    })
}

/// Parse a task in the benchmark phrasing. Text before the travel table is
/// free-form; every constraint sentence must be recognized.
pub fn parse_meeting_task(text: &str) -> Result<MeetingTask, MeetingError> {
    let text = unescape_newlines(text);
    let text = match text.find("SOLUTION") {
        Some(at) => &text[..at],
        None => text.as_str(),
    };
    let p = task_patterns();
    let (table, constraints) = match text.find("CONSTRAINTS:") {
        Some(at) => (&text[..at], &text[at + "CONSTRAINTS:".len()..]),
        None => (text, ""),
    };

    let mut locations: Vec<String> = Vec::new();
    let mut travel = BTreeMap::new();
    let seen = |name: &str, locations: &mut Vec<String>| {
        if !locations.iter().any(|l| l == name) {
            locations.push(name.to_string());
        }
    };
    let table = table.find("Travel distances").map_or("", |at| &table[at..]);
    for line in table.lines().skip(1) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let c = p
            .travel
            .captures(line)
            .ok_or_else(|| MeetingError::UnrecognizedSentence(line.to_string()))?;
        let (from, to) = (c[1].trim().to_string(), c[2].trim().to_string());
        seen(&from, &mut locations);
        seen(&to, &mut locations);
        travel.insert((from, to), c[3].parse().expect("digits"));
    }

    let mut start = None;
    let mut friends: Vec<Friend> = Vec::new();
    let mut minimums: BTreeMap<String, u32> = BTreeMap::new();
    for sentence in sentences(constraints) {
        if let Some(c) = p.arrive.captures(&sentence) {
            start = Some((c[1].trim().to_string(), parse_time(&c[2])?));
        } else if let Some(c) = p.window.captures(&sentence) {
            friends.push(Friend {
                name: c[1].trim().to_string(),
                location: c[2].trim().to_string(),
                avail_lo: parse_time(&c[3])?,
                avail_hi: parse_time(&c[4])?,
                min_duration: 0,
            });
        } else if let Some(c) = p.minimum.captures(&sentence) {
            minimums.insert(c[1].trim().to_string(), c[2].parse().expect("digits"));
        } else {
            return Err(MeetingError::UnrecognizedSentence(sentence));
        }
    }
    let (start_location, start_time) = start.ok_or(MeetingError::MissingStart)?;
    seen(&start_location, &mut locations);
    for f in &mut friends {
        f.min_duration = *minimums
            .get(&f.name)
            .ok_or_else(|| MeetingError::MissingMinimum(f.name.clone()))?;
        seen(&f.location, &mut locations);
    }
    Ok(MeetingTask {
        locations,
        travel,
        start_location,
        start_time,
        friends,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Step {
    Start {
        location: String,
        time: u32,
    },
    Travel {
        to: String,
        minutes: u32,
        arrive: u32,
    },
    Wait {
        until: u32,
    },
    Meet {
        friend: String,
        minutes: u32,
        from: u32,
        to: u32,
    },
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Start { location, time } => write!(f, "You start at {location} at {}.", format_time(*time)),
            Step::Travel { to, minutes, arrive } => write!(
                f,
                "You travel to {to} in {minutes} minutes and arrive at {}.",
                format_time(*arrive)
            ),
            Step::Wait { until } => write!(f, "You wait until {}.", format_time(*until)),
            Step::Meet {
                friend,
                minutes,
                from,
                to,
            } => write!(
                f,
                "You meet {friend} for {minutes} minutes from {} to {}.",
                format_time(*from),
                format_time(*to)
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingPlan {
    pub steps: Vec<Step>,
}

impl MeetingPlan {
    pub fn to_text(&self) -> String {
        self.steps.iter().map(Step::to_string).collect::<Vec<_>>().join(" ")
    }

    pub fn meetings(&self) -> impl Iterator<Item = &str> {
        self.steps.iter().filter_map(|s| match s {
            Step::Meet { friend, .. } => Some(friend.as_str()),
            _ => None,
        })
    }
}

struct PlanPatterns {
    start: Regex,
    travel: Regex,
    wait: Regex,
    meet: Regex,
}

fn plan_patterns() -> &'static PlanPatterns {
    static P: OnceLock<PlanPatterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static regex");
        const T: &str = r"(\d{1,2}:\d{2}\s*[AaPp]\.?[Mm]\.?)";
        PlanPatterns {
            start: re(&format!(r"^You start at (.+?) at {T}\.?$")),
            travel: re(&format!(r"^You travel to (.+?) in (\d+) minutes and arrive at {T}\.?$")),
            wait: re(&format!(r"^You wait until {T}\.?$")),
            meet: re(&format!(r"^You meet (.+?) for (\d+) minutes from {T} to {T}\.?$")),
        }
    })
}

/// Parse a plan, one step per sentence. Only the four canonical step forms
/// are accepted; anything else (including "You travel back to") fails.
pub fn parse_meeting_plan(text: &str) -> Result<MeetingPlan, MeetingError> {
    let p = plan_patterns();
    let text = text.trim();
    let text = text
        .strip_prefix("SOLUTION:")
        .or_else(|| text.strip_prefix("SOLUTION"))
        .unwrap_or(text);
    let mut steps = Vec::new();
    for sentence in sentences(text) {
        let step = if let Some(c) = p.start.captures(&sentence) {
            Step::Start {
                location: c[1].trim().to_string(),
                time: parse_time(&c[2])?,
            }
        } else if let Some(c) = p.travel.captures(&sentence) {
            Step::Travel {
                to: c[1].trim().to_string(),
                minutes: c[2]
                    .parse()
                    .map_err(|_| MeetingError::UnrecognizedSentence(sentence.clone()))?,
                arrive: parse_time(&c[3])?,
            }
        } else if let Some(c) = p.wait.captures(&sentence) {
            Step::Wait {
                until: parse_time(&c[1])?,
            }
        } else if let Some(c) = p.meet.captures(&sentence) {
            Step::Meet {
                friend: c[1].trim().to_string(),
                minutes: c[2]
                    .parse()
                    .map_err(|_| MeetingError::UnrecognizedSentence(sentence.clone()))?,
                from: parse_time(&c[3])?,
                to: parse_time(&c[4])?,
            }
        } else {
            return Err(MeetingError::UnrecognizedSentence(sentence));
        };
        steps.push(step);
    }
    if steps.is_empty() {
        return Err(MeetingError::EmptyPlan);
    }
    let starts = steps.iter().filter(|s| matches!(s, Step::Start { .. })).count();
    if starts != 1 || !matches!(steps[0], Step::Start { .. }) {
        return Err(MeetingError::StartPosition);
    }
    Ok(MeetingPlan { steps })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeetingViolationKind {
    TravelTimeWrong,
    ArithmeticInconsistent,
    OutsideWindow,
    BelowMinDuration,
    UnknownFriend,
    DuplicateFriend,
    MissedFriend,
    ParseFailure,
}

impl MeetingViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TravelTimeWrong => "travel_time_wrong",
            Self::ArithmeticInconsistent => "arithmetic_inconsistent",
            Self::OutsideWindow => "outside_window",
            Self::BelowMinDuration => "below_min_duration",
            Self::UnknownFriend => "unknown_friend",
            Self::DuplicateFriend => "duplicate_friend",
            Self::MissedFriend => "missed_friend",
            Self::ParseFailure => "parse_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeetingViolation {
    pub kind: MeetingViolationKind,
    pub message: String,
}

impl MeetingViolation {
    fn new(kind: MeetingViolationKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for MeetingViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.kind.as_str(), self.message)
    }
}

impl ViolationRecord for MeetingViolation {
    fn kind_name(&self) -> &'static str {
        self.kind.as_str()
    }

    fn message(&self) -> &str {
        &self.message
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MeetingEvaluation {
    pub violations: Vec<MeetingViolation>,
    pub meetings_satisfied: usize,
}

/// Replay the plan's timeline and check every step against the task.
pub fn evaluate_meeting(task: &MeetingTask, plan: &MeetingPlan) -> MeetingEvaluation {
    use MeetingViolationKind::*;
    let mut out = Vec::new();
    let mut location = task.start_location.clone();
    let mut clock = task.start_time;
    let mut met: BTreeSet<&str> = BTreeSet::new();
    let mut mentioned: BTreeSet<&str> = BTreeSet::new();
    let mut satisfied = 0;

    for step in &plan.steps {
        match step {
            Step::Start { location: l, time } => {
                if *l != task.start_location || *time != task.start_time {
                    out.push(MeetingViolation::new(
                        ArithmeticInconsistent,
                        format!(
                            "The plan starts at {l} at {} but you arrive at {} at {}.",
                            format_time(*time),
                            task.start_location,
                            format_time(task.start_time)
                        ),
                    ));
                }
            }
            Step::Travel { to, minutes, arrive } => {
                let actual = task.travel_minutes(&location, to);
                match actual {
                    Some(m) if m == *minutes => {}
                    Some(m) => out.push(MeetingViolation::new(
                        TravelTimeWrong,
                        format!("Travel from {location} to {to} takes {m} minutes, not {minutes}."),
                    )),
                    None => out.push(MeetingViolation::new(
                        TravelTimeWrong,
                        format!("There is no known travel time from {location} to {to}."),
                    )),
                }
                if *arrive != clock + minutes {
                    out.push(MeetingViolation::new(
                        ArithmeticInconsistent,
                        format!(
                            "Leaving at {} and travelling {minutes} minutes arrives at {}, not {}.",
                            format_time(clock),
                            format_time(clock + minutes),
                            format_time(*arrive)
                        ),
                    ));
                }
                let true_arrival = clock + actual.unwrap_or(*minutes);
                clock = true_arrival.max(*arrive);
                location = to.clone();
            }
            Step::Wait { until } => {
                if *until < clock {
                    out.push(MeetingViolation::new(
                        ArithmeticInconsistent,
                        format!(
                            "You cannot wait until {}; it is already {}.",
                            format_time(*until),
                            format_time(clock)
                        ),
                    ));
                } else {
                    clock = *until;
                }
            }
            Step::Meet {
                friend,
                minutes,
                from,
                to,
            } => {
                let before = out.len();
                let Some(f) = task.friend(friend) else {
                    out.push(MeetingViolation::new(
                        UnknownFriend,
                        format!("{friend} is not one of the friends in the task."),
                    ));
                    clock = clock.max(*to);
                    continue;
                };
                mentioned.insert(f.name.as_str());
                if met.contains(f.name.as_str()) {
                    out.push(MeetingViolation::new(
                        DuplicateFriend,
                        format!("{friend} is met more than once."),
                    ));
                }
                if to.checked_sub(*from) != Some(*minutes) {
                    out.push(MeetingViolation::new(
                        ArithmeticInconsistent,
                        format!(
                            "The meeting with {friend} from {} to {} does not last {minutes} minutes.",
                            format_time(*from),
                            format_time(*to)
                        ),
                    ));
                }
                if *from != clock {
                    let detail = if *from < clock {
                        "before you are available"
                    } else {
                        "without a wait step"
                    };
                    out.push(MeetingViolation::new(
                        ArithmeticInconsistent,
                        format!(
                            "The meeting with {friend} starts at {} but the current time is {} ({detail}).",
                            format_time(*from),
                            format_time(clock)
                        ),
                    ));
                }
                if location != f.location {
                    out.push(MeetingViolation::new(
                        OutsideWindow,
                        format!("{friend} is at {}, but you are at {location}.", f.location),
                    ));
                }
                if *from < f.avail_lo || *to > f.avail_hi {
                    out.push(MeetingViolation::new(
                        OutsideWindow,
                        format!(
                            "{friend} is only available from {} to {}, but the meeting is from {} to {}.",
                            format_time(f.avail_lo),
                            format_time(f.avail_hi),
                            format_time(*from),
                            format_time(*to)
                        ),
                    ));
                }
                if *minutes < f.min_duration || to.saturating_sub(*from) < f.min_duration {
                    out.push(MeetingViolation::new(
                        BelowMinDuration,
                        format!(
                            "The meeting with {friend} must last at least {} minutes, but lasts {minutes}.",
                            f.min_duration
                        ),
                    ));
                }
                if out.len() == before {
                    satisfied += 1;
                    met.insert(f.name.as_str());
                }
                clock = clock.max(*to);
            }
        }
    }
    for f in &task.friends {
        if !mentioned.contains(f.name.as_str()) {
            out.push(MeetingViolation::new(
                MissedFriend,
                format!(
                    "You do not meet {} (at {} from {} to {}, at least {} minutes).",
                    f.name,
                    f.location,
                    format_time(f.avail_lo),
                    format_time(f.avail_hi),
                    f.min_duration
                ),
            ));
        }
    }
    MeetingEvaluation {
        violations: out,
        meetings_satisfied: satisfied,
    }
}

pub fn feedback_from(
    violations: &[MeetingViolation],
    meetings_satisfied: usize,
    total_friends: usize,
) -> FeedbackReport {
    let mut report = FeedbackReport::from_lines(violations.iter().map(|v| v.message.clone()));
    report.summary = vec![format!(
        "The current plan meets {meetings_satisfied} of {total_friends} friends."
    )];
    report
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OracleSchedule {
    pub best_count: usize,
    pub plan: MeetingPlan,
}

/// Exhaustive search over friend orders with earliest-feasible timing.
pub fn solve_meeting_oracle(task: &MeetingTask, max_friends: usize) -> Result<OracleSchedule, MeetingError> {
    if task.friends.len() > max_friends {
        return Err(MeetingError::TooLarge {
            friends: task.friends.len(),
            limit: max_friends,
        });
    }
    let start = Step::Start {
        location: task.start_location.clone(),
        time: task.start_time,
    };
    let mut best = vec![start.clone()];
    let mut best_count = 0;
    let mut used = vec![false; task.friends.len()];
    let mut steps = vec![start];
    dfs(
        task,
        &task.start_location,
        task.start_time,
        0,
        &mut used,
        &mut steps,
        &mut best,
        &mut best_count,
    );
    Ok(OracleSchedule {
        best_count,
        plan: MeetingPlan { steps: best },
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    task: &MeetingTask,
    location: &str,
    clock: u32,
    count: usize,
    used: &mut [bool],
    steps: &mut Vec<Step>,
    best: &mut Vec<Step>,
    best_count: &mut usize,
) {
    if count > *best_count {
        *best_count = count;
        *best = steps.clone();
    }
    if *best_count == task.friends.len() {
        return;
    }
    for i in 0..task.friends.len() {
        if used[i] {
            continue;
        }
        let f = &task.friends[i];
        let mark = steps.len();
        let mut t = clock;
        if f.location != location {
            let Some(m) = task.travel_minutes(location, &f.location) else {
                continue;
            };
            t += m;
            steps.push(Step::Travel {
                to: f.location.clone(),
                minutes: m,
                arrive: t,
            });
        }
        let begin = t.max(f.avail_lo);
        if begin + f.min_duration > f.avail_hi {
            steps.truncate(mark);
            continue;
        }
        if begin > t {
            steps.push(Step::Wait { until: begin });
        }
        steps.push(Step::Meet {
            friend: f.name.clone(),
            minutes: f.min_duration,
            from: begin,
            to: begin + f.min_duration,
        });
        used[i] = true;
        dfs(
            task,
            &f.location,
            begin + f.min_duration,
            count + 1,
            used,
            steps,
            best,
            best_count,
        );
        used[i] = false;
        steps.truncate(mark);
        if *best_count == task.friends.len() {
            return;
        }
    }
}

const LOCATION_POOL: &[&str] = &[
    "Marina District",
    "Alamo Square",
    "Fisherman's Wharf",
    "Union Square",
    "Embarcadero",
    "Financial District",
    "Nob Hill",
    "Haight-Ashbury",
    "Mission District",
    "Chinatown",
    "North Beach",
    "Presidio",
    "Richmond District",
    "Sunset District",
    "Golden Gate Park",
    "Russian Hill",
    "Pacific Heights",
    "Bayview",
    "Castro",
    "Soma",
];

const NAME_POOL: &[&str] = &[
    "Mary", "Deborah", "Jason", "Betty", "Anthony", "Daniel", "Jessica", "Kevin", "Laura", "Joseph", "Sarah", "Thomas",
    "Emily", "Robert", "Karen", "Brian", "Nancy", "Steven", "Rebecca", "Matthew",
];

/// A random task and a schedule that meets every friend in it.
pub fn generate_meeting_instance(n_friends: usize, seed: u64) -> (MeetingTask, MeetingPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_friends.min(NAME_POOL.len()).min(LOCATION_POOL.len() - 1);
    let mut locs: Vec<&str> = LOCATION_POOL.to_vec();
    locs.shuffle(&mut rng);
    let locations: Vec<String> = locs[..=n].iter().map(|s| s.to_string()).collect();
    let mut names: Vec<&str> = NAME_POOL.to_vec();
    names.shuffle(&mut rng);

    let mut travel = BTreeMap::new();
    for a in &locations {
        for b in &locations {
            if a != b {
                travel.insert((a.clone(), b.clone()), rng.random_range(5..=25));
            }
        }
    }
    let start_location = locations[0].clone();
    let start_time = 9 * 60;

    let mut steps = vec![Step::Start {
        location: start_location.clone(),
        time: start_time,
    }];
    let mut friends = Vec::new();
    let mut here = start_location.clone();
    let mut clock = start_time;
    for (i, name) in names[..n].iter().enumerate() {
        let location = locations[i + 1].clone();
        let minutes = travel[&(here.clone(), location.clone())];
        clock += minutes;
        steps.push(Step::Travel {
            to: location.clone(),
            minutes,
            arrive: clock,
        });
        let wait = rng.random_range(0..=2) * 15;
        if wait > 0 {
            clock += wait;
            steps.push(Step::Wait { until: clock });
        }
        let min_duration = rng.random_range(1..=5) * 15;
        steps.push(Step::Meet {
            friend: name.to_string(),
            minutes: min_duration,
            from: clock,
            to: clock + min_duration,
        });
        let lo = (clock / 15) * 15;
        let slack = rng.random_range(0..=4) * 15;
        let hi = ((clock + min_duration + slack).div_ceil(15) * 15).min(23 * 60 + 45);
        // open the window no earlier than the meeting so waits stay meaningful
        let avail_lo = if wait > 0 { clock } else { lo.max(start_time) };
        friends.push(Friend {
            name: name.to_string(),
            location: location.clone(),
            avail_lo,
            avail_hi: hi,
            min_duration,
        });
        clock += min_duration;
        here = location;
    }
    friends.shuffle(&mut rng);
    (
        MeetingTask {
            locations,
            travel,
            start_location,
            start_time,
            friends,
        },
        MeetingPlan { steps },
    )
}

/// Meeting planning as a refinement domain: one completion per round that
/// carries several plans separated by `---`.
pub struct MeetingDomain<'a> {
    pub task: &'a MeetingTask,
    pub task_text: &'a str,
    /// Clean meetings needed for success.
    pub target: usize,
}

/// Cost weight that makes meeting count dominate violation count.
pub const MEETING_WEIGHT: f64 = 1e6;

impl RefinementDomain for MeetingDomain<'_> {
    type Plan = MeetingPlan;
    type Violation = MeetingViolation;

    fn render(
        &self,
        best: Option<&BestPlan<MeetingPlan, MeetingViolation>>,
        round: usize,
        total_rounds: usize,
        samples: usize,
        settings: &RequestSettings,
    ) -> ChatRequest {
        let feedback = best
            .map(|b| {
                let met = evaluate_meeting(self.task, &b.plan).meetings_satisfied;
                feedback_from(&b.violations, met, self.task.friends.len())
            })
            .unwrap_or_default();
        render_meeting_prompt(
            self.task_text,
            best.map(|b| &b.plan),
            &feedback,
            round + 1,
            total_rounds,
            samples,
            settings,
        )
    }

    fn completions_per_round(&self, _samples: usize) -> usize {
        1
    }

    fn split_replies(&self, replies: Vec<String>, samples: usize) -> Vec<String> {
        replies
            .iter()
            .flat_map(|r| split_meeting_response(r))
            .take(samples)
            .collect()
    }

    fn parse(&self, text: &str) -> Result<MeetingPlan, String> {
        parse_meeting_plan(text).map_err(|e| e.to_string())
    }

    fn evaluate(&self, plan: &MeetingPlan) -> Evaluation<MeetingViolation> {
        let e = evaluate_meeting(self.task, plan);
        let missing = self.task.friends.len().saturating_sub(e.meetings_satisfied);
        Evaluation {
            cost: missing as f64 * MEETING_WEIGHT + e.violations.len() as f64,
            violations: e.violations,
        }
    }

    fn parse_failure(&self, reason: &str) -> MeetingViolation {
        MeetingViolation::new(
            MeetingViolationKind::ParseFailure,
            format!("The plan could not be read: {reason}"),
        )
    }

    fn is_success(&self, violations: &[MeetingViolation]) -> bool {
        let missed = violations
            .iter()
            .filter(|v| v.kind == MeetingViolationKind::MissedFriend)
            .count();
        violations.len() == missed && self.task.friends.len() - missed.min(self.task.friends.len()) >= self.target
    }
}

/// Largest friend count for which the success bar comes from the oracle.
pub const ORACLE_TARGET_LIMIT: usize = 6;

/// Clean meetings a plan must reach to count as a success: the oracle's
/// maximum when the task is small enough, otherwise every friend.
pub fn success_target(task: &MeetingTask) -> usize {
    solve_meeting_oracle(task, ORACLE_TARGET_LIMIT)
        .map(|o| o.best_count)
        .unwrap_or(task.friends.len())
}

pub type MeetingRun = RefinementRun<MeetingPlan, MeetingViolation>;

/// Feedback-driven meeting planning with `samples` plans per round.
pub fn run_meeting_llmpc<T: TextSampler>(
    task: &MeetingTask,
    task_text: &str,
    rounds: usize,
    samples: usize,
    sampler: &mut T,
    settings: &RequestSettings,
) -> Result<MeetingRun, MpcError> {
    let domain = MeetingDomain {
        task,
        task_text,
        target: success_target(task),
    };
    run_refinement(&domain, rounds, samples, sampler, settings, true)
}
