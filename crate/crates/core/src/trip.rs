//! Multi-city trip planning.
//!
//! A task fixes the total trip length, how many days to spend in each city,
//! day windows for events, and which city pairs have direct flights. A plan
//! is a chain of stays joined by flights. The flight day counts for both
//! cities, so a clean plan satisfies
//! `sum(stay lengths) = total_days + (stays - 1)`.

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
use crate::sampling::{render_trip_prompt, FeedbackReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TripError {
    #[error("unrecognized sentence: {0:?}")]
    UnrecognizedSentence(String),
    #[error("task text has no direct-flight section")]
    MissingFlights,
    #[error("task text does not state the total number of days")]
    MissingTotalDays,
    #[error("event refers to unknown city {0:?}")]
    UnknownEventCity(String),
    #[error("unrecognized flight entry: {0:?}")]
    UnrecognizedFlight(String),
    #[error("plan line not understood: {0:?}")]
    PlanLine(String),
    #[error("no itinerary lines found")]
    EmptyPlan,
    #[error("{cities} cities exceed the search limit of {limit}")]
    TooLarge { cities: usize, limit: usize },
}

/// Unordered city pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlightPair(String, String);

impl FlightPair {
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Self {
        let (a, b) = (a.into(), b.into());
        if a <= b {
            Self(a, b)
        } else {
            Self(b, a)
        }
    }

    pub fn cities(&self) -> (&str, &str) {
        (&self.0, &self.1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CityRequirement {
    pub city: String,
    pub days: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripEvent {
    pub city: String,
    pub day_lo: u32,
    pub day_hi: u32,
    /// The sentence that stated the event.
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripTask {
    pub total_days: u32,
    /// In the order the task mentions them.
    pub cities: Vec<CityRequirement>,
    pub events: Vec<TripEvent>,
    pub direct_flights: BTreeSet<FlightPair>,
}

impl TripTask {
    pub fn required_days(&self, city: &str) -> Option<u32> {
        self.cities.iter().find(|c| c.city == city).map(|c| c.days)
    }

    pub fn has_flight(&self, a: &str, b: &str) -> bool {
        self.direct_flights.contains(&FlightPair::new(a, b))
    }

    /// `sum(required days) - (cities - 1) == total_days`.
    pub fn satisfies_day_identity(&self) -> bool {
        let sum: i64 = self.cities.iter().map(|c| i64::from(c.days)).sum();
        sum - (self.cities.len() as i64 - 1) == i64::from(self.total_days)
    }

    /// Task statement in the phrasing [`parse_trip_task`] reads.
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "You plan to visit {} European cities for {} days in total. You only take direct flights to commute between cities.",
            self.cities.len(),
            self.total_days
        );
        for req in &self.cities {
            out.push_str(&format!(" You plan to stay in {} for {} days.", req.city, req.days));
            for ev in self.events.iter().filter(|e| e.city == req.city) {
                out.push(' ');
                out.push_str(&ev.description);
            }
        }
        let flights: Vec<String> = self
            .direct_flights
            .iter()
            .map(|FlightPair(a, b)| format!("{a} and {b}"))
            .collect();
        out.push_str("\n\nHere are the cities that have direct flights:\n");
        out.push_str(&flights.join(", "));
        out.push_str(&format!(
            ".\n\nFind a trip plan of visiting the cities for {} days by taking direct flights to commute between them.",
            self.total_days
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Segment {
    Stay { city: String, start: u32, end: u32 },
    Fly { from: String, to: String, day: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripPlan {
    pub segments: Vec<Segment>,
}

impl TripPlan {
    pub fn stays(&self) -> impl Iterator<Item = (&str, u32, u32)> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Stay { city, start, end } => Some((city.as_str(), *start, *end)),
            Segment::Fly { .. } => None,
        })
    }

    pub fn flights(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.segments.iter().filter_map(|s| match s {
            Segment::Fly { from, to, day } => Some((from.as_str(), to.as_str(), *day)),
            Segment::Stay { .. } => None,
        })
    }

    /// Build the canonical stay / fly / stay chain for an ordered visit list.
    pub fn from_visits(visits: &[(String, u32)]) -> Self {
        let mut segments = Vec::new();
        let mut day = 1;
        for (i, (city, days)) in visits.iter().enumerate() {
            if i > 0 {
                segments.push(Segment::Fly {
                    from: visits[i - 1].0.clone(),
                    to: city.clone(),
                    day,
                });
            }
            let end = day + days - 1;
            segments.push(Segment::Stay {
                city: city.clone(),
                start: day,
                end,
            });
            day = end;
        }
        Self { segments }
    }

    pub fn to_text(&self) -> String {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Stay { city, start, end } => format!(
                    "**Day {start}-{end}:** Visit {city} for {} days.",
                    i64::from(*end) - i64::from(*start) + 1
                ),
                Segment::Fly { from, to, day } => format!("**Day {day}:** Fly from {from} to {to}."),
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripViolationKind {
    DurationMismatch,
    MissingCity,
    EventMissed,
    NoDirectFlight,
    Discontinuity,
    TotalDaysWrong,
    ParseFailure,
}

impl TripViolationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DurationMismatch => "duration_mismatch",
            Self::MissingCity => "missing_city",
            Self::EventMissed => "event_missed",
            Self::NoDirectFlight => "no_direct_flight",
            Self::Discontinuity => "discontinuity",
            Self::TotalDaysWrong => "total_days_wrong",
            Self::ParseFailure => "parse_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripViolation {
    pub kind: TripViolationKind,
    pub message: String,
}

impl TripViolation {
    fn new(kind: TripViolationKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for TripViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}", self.kind.as_str(), self.message)
    }
}

impl ViolationRecord for TripViolation {
    fn kind_name(&self) -> &'static str {
        self.kind.as_str()
    }

    fn message(&self) -> &str {
        &self.message
    }
}

struct TaskPatterns {
    total: Regex,
    stay_in: Regex,
    spend_in: Regex,
    visit_for: Regex,
    between: Regex,
    from_to: Regex,
    on_day: Regex,
    ignored: Regex,
    flight_and: Regex,
    flight_from: Regex,
}

fn task_patterns() -> &'static TaskPatterns {
    static P: OnceLock<TaskPatterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static regex");
        TaskPatterns {
            total: re(r"(?i)^you plan to visit (?:\d+ )?(?:[a-z]+ )?cities for (\d+) days(?: in total)?\.?$"),
            stay_in: re(r"(?i)^you (?:plan|want|would like|need) to stay in (.+?) for (\d+) days?\.?$"),
            spend_in: re(r"(?i)^you (?:plan|want|would like|need) to spend (\d+) days? in (.+?)\.?$"),
            visit_for: re(r"(?i)^you (?:plan|want|would like|need) to visit (.+?) for (\d+) days?\.?$"),
            between: re(r"(?i)^.*? (?:in|at) (.+?) between day (\d+) and day (\d+)\b.*$"),
            from_to: re(r"(?i)^from day (\d+) to day (\d+), .* (?:in|at) (.+?)\.?$"),
            on_day: re(r"(?i)^.*? (?:in|at) (.+?) on day (\d+)\b.*$"),
            ignored: re(r"(?i)^(?:you only take direct flights.*|find a trip plan.*|task:?|you have been asked to solve the following trip planning task:?)$"),
            flight_and: re(r"(?i)^(.+?) and (.+)$"),
            flight_from: re(r"(?i)^from (.+?) to (.+)$"),
        }
    })
}

/// Sentences of a paragraph, split after `.`, `!` or `?` followed by whitespace.
pub(crate) fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            let s = current.trim().to_string();
            if !s.is_empty() {
                out.push(s);
            }
            current.clear();
        }
    }
    let s = current.trim().to_string();
    if !s.is_empty() {
        out.push(s);
    }
    out
}

/// Real newlines for the literal `\n` escapes some dataset dumps contain.
pub(crate) fn unescape_newlines(text: &str) -> String {
    text.replace("\\n", "\n")
}

const FLIGHTS_HEADER: &str = "Here are the cities that have direct flights:";

/// Parse a task statement in the benchmark's phrasing.
pub fn parse_trip_task(text: &str) -> Result<TripTask, TripError> {
    let text = unescape_newlines(text);
    let text = match text.find("SOLUTION") {
        Some(at) => &text[..at],
        None => text.as_str(),
    };
    let header = text.find(FLIGHTS_HEADER).ok_or(TripError::MissingFlights)?;
    let description = text[..header].trim_start();
    let description = description.strip_prefix("TASK:").unwrap_or(description);
    let flight_text = &text[header + FLIGHTS_HEADER.len()..];
    let p = task_patterns();

    let mut total_days = None;
    let mut cities: Vec<CityRequirement> = Vec::new();
    let mut events: Vec<TripEvent> = Vec::new();
    let add_city = |cities: &mut Vec<CityRequirement>, city: &str, days: u32| {
        cities.push(CityRequirement {
            city: city.trim().to_string(),
            days,
        })
    };

    for sentence in sentences(description) {
        if p.ignored.is_match(&sentence) {
            continue;
        }
        if let Some(c) = p.total.captures(&sentence) {
            total_days = Some(c[1].parse().expect("digits"));
        } else if let Some(c) = p.stay_in.captures(&sentence) {
            add_city(&mut cities, &c[1], c[2].parse().expect("digits"));
        } else if let Some(c) = p.spend_in.captures(&sentence) {
            add_city(&mut cities, &c[2], c[1].parse().expect("digits"));
        } else if let Some(c) = p.visit_for.captures(&sentence) {
            add_city(&mut cities, &c[1], c[2].parse().expect("digits"));
        } else if let Some(c) = p.between.captures(&sentence) {
            events.push(TripEvent {
                city: c[1].trim().to_string(),
                day_lo: c[2].parse().expect("digits"),
                day_hi: c[3].parse().expect("digits"),
                description: sentence.clone(),
            });
        } else if let Some(c) = p.from_to.captures(&sentence) {
            events.push(TripEvent {
                city: c[3].trim().to_string(),
                day_lo: c[1].parse().expect("digits"),
                day_hi: c[2].parse().expect("digits"),
                description: sentence.clone(),
            });
        } else if let Some(c) = p.on_day.captures(&sentence) {
            let day = c[2].parse().expect("digits");
            events.push(TripEvent {
                city: c[1].trim().to_string(),
                day_lo: day,
                day_hi: day,
                description: sentence.clone(),
            });
        } else {
            return Err(TripError::UnrecognizedSentence(sentence));
        }
    }
    let total_days = total_days.ok_or(TripError::MissingTotalDays)?;
    for ev in &events {
        if !cities.iter().any(|c| c.city == ev.city) {
            return Err(TripError::UnknownEventCity(ev.city.clone()));
        }
    }

    // The flight list runs until the first sentence end.
    let list_end = flight_text
        .find(".\n")
        .or_else(|| flight_text.find(". "))
        .or_else(|| flight_text.trim_end().strip_suffix('.').map(|s| s.len()))
        .unwrap_or(flight_text.len());
    let mut direct_flights = BTreeSet::new();
    for item in flight_text[..list_end].split(',') {
        let item = item.trim().trim_end_matches('.').trim();
        if item.is_empty() {
            continue;
        }
        let pair = if let Some(c) = p.flight_from.captures(item) {
            FlightPair::new(c[1].trim(), c[2].trim())
        } else if let Some(c) = p.flight_and.captures(item) {
            FlightPair::new(c[1].trim(), c[2].trim())
        } else {
            return Err(TripError::UnrecognizedFlight(item.to_string()));
        };
        direct_flights.insert(pair);
    }
    if direct_flights.is_empty() {
        return Err(TripError::MissingFlights);
    }

    Ok(TripTask {
        total_days,
        cities,
        events,
        direct_flights,
    })
}

struct PlanPatterns {
    day_line: Regex,
    fly: Regex,
    visit: Regex,
    arriving: Regex,
}

fn plan_patterns() -> &'static PlanPatterns {
    static P: OnceLock<PlanPatterns> = OnceLock::new();
    P.get_or_init(|| {
        let re = |s: &str| Regex::new(s).expect("static regex");
        PlanPatterns {
            day_line: re(r"(?i)^[*\s-]*day\s+(\d+)(?:\s*-\s*(\d+))?\s*:?\s*\**\s*:?\s*(.*)$"),
            fly: re(r"(?i)\bfly from (.+?) to (.+?)\.?$"),
            visit: re(r"(?i)\bvisit (.+?) for \d+ days?\b"),
            arriving: re(r"(?i)\barriving in (.+?)(?:\s+and\b|[.,]|$)"),
        }
    })
}

/// Parse an itinerary. Lines that do not start with `Day` are ignored;
/// a `Day` line that cannot be read fails the whole plan.
pub fn parse_trip_plan(text: &str) -> Result<TripPlan, TripError> {
    let p = plan_patterns();
    let mut segments = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        let looks_like_day = trimmed
            .trim_start_matches(['*', '-', ' '])
            .get(..3)
            .is_some_and(|s| s.eq_ignore_ascii_case("day"));
        if !looks_like_day {
            continue;
        }
        let caps = p
            .day_line
            .captures(trimmed)
            .ok_or_else(|| TripError::PlanLine(trimmed.to_string()))?;
        let first: u32 = caps[1].parse().map_err(|_| TripError::PlanLine(trimmed.to_string()))?;
        let second: Option<u32> = match caps.get(2) {
            Some(m) => Some(
                m.as_str()
                    .parse()
                    .map_err(|_| TripError::PlanLine(trimmed.to_string()))?,
            ),
            None => None,
        };
        let rest = caps[3].trim();
        let stay_city = || {
            p.visit
                .captures(rest)
                .or_else(|| p.arriving.captures(rest))
                .map(|c| c[1].trim().to_string())
        };
        match second {
            Some(end) => {
                let city = stay_city().ok_or_else(|| TripError::PlanLine(trimmed.to_string()))?;
                segments.push(Segment::Stay {
                    city,
                    start: first,
                    end,
                });
            }
            None => {
                if let Some(c) = p.fly.captures(rest) {
                    segments.push(Segment::Fly {
                        from: c[1].trim().to_string(),
                        to: c[2].trim().to_string(),
                        day: first,
                    });
                } else if let Some(city) = stay_city() {
                    segments.push(Segment::Stay {
                        city,
                        start: first,
                        end: first,
                    });
                } else {
                    return Err(TripError::PlanLine(trimmed.to_string()));
                }
            }
        }
    }
    if segments.is_empty() {
        return Err(TripError::EmptyPlan);
    }
    Ok(TripPlan { segments })
}

/// Every unmet constraint of `plan`; empty means the plan solves the task.
pub fn evaluate_trip(task: &TripTask, plan: &TripPlan) -> Vec<TripViolation> {
    use TripViolationKind::*;
    let mut out = Vec::new();
    let stays: Vec<(&str, u32, u32)> = plan.stays().collect();
    if stays.is_empty() {
        out.push(TripViolation::new(TotalDaysWrong, "The plan contains no stays."));
        for req in &task.cities {
            out.push(TripViolation::new(
                MissingCity,
                format!("{} is never visited.", req.city),
            ));
        }
        return out;
    }

    // Chaining: stay (fly stay)*
    let mut prev: Option<&Segment> = None;
    for seg in &plan.segments {
        match (prev, seg) {
            (None, Segment::Fly { from, to, day }) => out.push(TripViolation::new(
                Discontinuity,
                format!("The plan starts with a flight from {from} to {to} on day {day} instead of a stay."),
            )),
            (Some(Segment::Stay { city: a, .. }), Segment::Stay { city: b, start, .. }) => {
                out.push(TripViolation::new(
                    Discontinuity,
                    format!("There is no flight between the stay in {a} and the stay in {b} starting day {start}."),
                ))
            }
            (Some(Segment::Fly { day: d1, .. }), Segment::Fly { from, to, day }) => out.push(TripViolation::new(
                Discontinuity,
                format!("Two flights in a row: the flight on day {d1} is followed by a flight from {from} to {to} on day {day}."),
            )),
            (Some(Segment::Stay { city, end, .. }), Segment::Fly { from, day, .. }) => {
                if from != city {
                    out.push(TripViolation::new(
                        Discontinuity,
                        format!("The flight on day {day} leaves from {from} but you are in {city}."),
                    ));
                }
                if day != end {
                    out.push(TripViolation::new(
                        Discontinuity,
                        format!("The stay in {city} ends on day {end} but the flight out of {city} is on day {day}."),
                    ));
                }
            }
            (Some(Segment::Fly { to, day, .. }), Segment::Stay { city, start, .. }) => {
                if to != city {
                    out.push(TripViolation::new(
                        Discontinuity,
                        format!("The flight on day {day} goes to {to} but the next stay is in {city}."),
                    ));
                }
                if start != day {
                    out.push(TripViolation::new(
                        Discontinuity,
                        format!("The flight to {city} is on day {day} but the stay in {city} starts on day {start}."),
                    ));
                }
            }
            (None, Segment::Stay { .. }) => {}
        }
        prev = Some(seg);
    }
    if matches!(prev, Some(Segment::Fly { .. })) {
        out.push(TripViolation::new(
            Discontinuity,
            "The plan ends with a flight instead of a stay.",
        ));
    }
    for (from, to, _) in plan.flights() {
        if !task.has_flight(from, to) {
            out.push(TripViolation::new(
                NoDirectFlight,
                format!("There is no direct flight between {from} and {to}."),
            ));
        }
    }

    let (first_start, last_end) = (stays[0].1, stays[stays.len() - 1].2);
    if first_start != 1 {
        out.push(TripViolation::new(
            TotalDaysWrong,
            format!("The trip must start on day 1 but starts on day {first_start}."),
        ));
    }
    if last_end != task.total_days {
        out.push(TripViolation::new(
            TotalDaysWrong,
            format!(
                "The trip must end on day {} but ends on day {last_end}.",
                task.total_days
            ),
        ));
    }

    let mut visits: BTreeMap<&str, Vec<(u32, u32)>> = BTreeMap::new();
    for &(city, start, end) in &stays {
        visits.entry(city).or_default().push((start, end));
    }
    for req in &task.cities {
        match visits.get(req.city.as_str()).map(Vec::as_slice) {
            None => out.push(TripViolation::new(
                MissingCity,
                format!("{} is never visited.", req.city),
            )),
            Some([(start, end)]) => {
                let planned = i64::from(*end) - i64::from(*start) + 1;
                if planned != i64::from(req.days) {
                    out.push(TripViolation::new(
                        DurationMismatch,
                        format!(
                            "{} must be visited for {} days but the plan spends {planned} days there (day {start} to day {end}).",
                            req.city, req.days
                        ),
                    ));
                }
            }
            Some(many) => out.push(TripViolation::new(
                DurationMismatch,
                format!(
                    "{} is visited {} times; each city must be visited exactly once for {} days.",
                    req.city,
                    many.len(),
                    req.days
                ),
            )),
        }
    }
    for city in visits.keys() {
        if task.required_days(city).is_none() {
            out.push(TripViolation::new(
                DurationMismatch,
                format!("{city} is not one of the cities to visit."),
            ));
        }
    }

    for ev in &task.events {
        let covered = visits
            .get(ev.city.as_str())
            .is_some_and(|v| v.iter().any(|&(s, e)| s <= ev.day_lo && ev.day_hi <= e));
        if !covered {
            out.push(TripViolation::new(
                EventMissed,
                format!(
                    "You must be in {} between day {} and day {} ({}).",
                    ev.city,
                    ev.day_lo,
                    ev.day_hi,
                    ev.description.trim_end_matches('.')
                ),
            ));
        }
    }
    out
}

pub fn feedback_from(violations: &[TripViolation]) -> FeedbackReport {
    FeedbackReport::from_lines(violations.iter().map(|v| v.message.clone()))
}

const CITY_POOL: &[&str] = &[
    "Amsterdam",
    "Athens",
    "Barcelona",
    "Berlin",
    "Brussels",
    "Bucharest",
    "Budapest",
    "Copenhagen",
    "Dublin",
    "Dubrovnik",
    "Edinburgh",
    "Florence",
    "Frankfurt",
    "Geneva",
    "Hamburg",
    "Helsinki",
    "Istanbul",
    "Krakow",
    "Lisbon",
    "London",
    "Lyon",
    "Madrid",
    "Manchester",
    "Milan",
    "Munich",
    "Naples",
    "Nice",
    "Oslo",
    "Paris",
    "Porto",
    "Prague",
    "Reykjavik",
    "Riga",
    "Rome",
    "Salzburg",
    "Santorini",
    "Seville",
    "Split",
    "Stockholm",
    "Stuttgart",
    "Tallinn",
    "Valencia",
    "Venice",
    "Vienna",
    "Vilnius",
    "Warsaw",
    "Zurich",
];

/// A random task together with an itinerary that solves it.
///
/// The itinerary is drawn first (stays of 2 to 5 days, an event inside
/// roughly every third stay); the task is then written to fit it, with
/// extra distractor flights.
pub fn generate_trip_instance(n_cities: usize, seed: u64) -> (TripTask, TripPlan) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_cities.clamp(1, CITY_POOL.len());
    let mut pool: Vec<&str> = CITY_POOL.to_vec();
    pool.shuffle(&mut rng);
    let visits: Vec<(String, u32)> = pool[..n]
        .iter()
        .map(|c| (c.to_string(), rng.random_range(2..=5)))
        .collect();
    let plan = TripPlan::from_visits(&visits);

    let mut events = Vec::new();
    for (city, start, end) in plan.stays() {
        if rng.random_bool(1.0 / 3.0) {
            let lo = rng.random_range(start..=end);
            let hi = rng.random_range(lo..=end);
            let description = match rng.random_range(0..3) {
                0 => format!("You want to meet a friend in {city} between day {lo} and day {hi}."),
                1 => format!("You are going to attend a conference in {city} between day {lo} and day {hi}."),
                _ => format!("You plan to visit relatives in {city} between day {lo} and day {hi}."),
            };
            events.push(TripEvent {
                city: city.to_string(),
                day_lo: lo,
                day_hi: hi,
                description,
            });
        }
    }

    let mut direct_flights: BTreeSet<FlightPair> = plan.flights().map(|(a, b, _)| FlightPair::new(a, b)).collect();
    let distractors = n;
    for _ in 0..distractors * 4 {
        if direct_flights.len() >= (n - 1) + distractors || n < 3 {
            break;
        }
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b {
            direct_flights.insert(FlightPair::new(visits[a].0.clone(), visits[b].0.clone()));
        }
    }
    if n == 1 {
        // a task needs at least one flight entry to be well formed
        direct_flights.insert(FlightPair::new(visits[0].0.clone(), pool[n % pool.len()].to_string()));
    }

    let total_days = visits.iter().map(|(_, d)| d).sum::<u32>() - (n as u32 - 1);
    let mut shuffled = visits.clone();
    shuffled.shuffle(&mut rng);
    // task text lists each event right after its city
    events.sort_by_key(|e: &TripEvent| shuffled.iter().position(|(c, _)| *c == e.city));
    let cities = shuffled
        .into_iter()
        .map(|(city, days)| CityRequirement { city, days })
        .collect();
    (
        TripTask {
            total_days,
            cities,
            events,
            direct_flights,
        },
        plan,
    )
}

/// Depth-first search over city orders. Returns a clean plan, or `None`
/// when no order works.
pub fn solve_trip_oracle(task: &TripTask, max_cities: usize) -> Result<Option<TripPlan>, TripError> {
    if task.cities.len() > max_cities {
        return Err(TripError::TooLarge {
            cities: task.cities.len(),
            limit: max_cities,
        });
    }
    if !task.satisfies_day_identity() || task.cities.is_empty() {
        return Ok(None);
    }
    let n = task.cities.len();
    let mut order = Vec::with_capacity(n);
    let mut used = vec![false; n];
    if search(task, 1, &mut order, &mut used) {
        let visits: Vec<(String, u32)> = order
            .iter()
            .map(|&i| (task.cities[i].city.clone(), task.cities[i].days))
            .collect();
        Ok(Some(TripPlan::from_visits(&visits)))
    } else {
        Ok(None)
    }
}

fn search(task: &TripTask, start: u32, order: &mut Vec<usize>, used: &mut [bool]) -> bool {
    if order.len() == task.cities.len() {
        return start == task.total_days;
    }
    for i in 0..task.cities.len() {
        if used[i] {
            continue;
        }
        let req = &task.cities[i];
        if let Some(&prev) = order.last() {
            if !task.has_flight(&task.cities[prev].city, &req.city) {
                continue;
            }
        }
        let end = start + req.days - 1;
        if end > task.total_days {
            continue;
        }
        let events_fit = task
            .events
            .iter()
            .filter(|e| e.city == req.city)
            .all(|e| start <= e.day_lo && e.day_hi <= end);
        if !events_fit {
            continue;
        }
        used[i] = true;
        order.push(i);
        if search(task, end, order, used) {
            return true;
        }
        order.pop();
        used[i] = false;
    }
    false
}

/// Trip planning as a refinement domain. One plan per completion.
pub struct TripDomain<'a> {
    pub task: &'a TripTask,
    pub task_text: &'a str,
}

impl RefinementDomain for TripDomain<'_> {
    type Plan = TripPlan;
    type Violation = TripViolation;

    fn render(
        &self,
        best: Option<&BestPlan<TripPlan, TripViolation>>,
        _round: usize,
        _total_rounds: usize,
        _samples: usize,
        settings: &RequestSettings,
    ) -> ChatRequest {
        let feedback = best.map(|b| feedback_from(&b.violations)).unwrap_or_default();
        render_trip_prompt(self.task_text, best.map(|b| &b.plan), &feedback, settings)
    }

    fn completions_per_round(&self, samples: usize) -> usize {
        samples
    }

    fn split_replies(&self, replies: Vec<String>, samples: usize) -> Vec<String> {
        replies.into_iter().take(samples).collect()
    }

    fn parse(&self, text: &str) -> Result<TripPlan, String> {
        parse_trip_plan(text).map_err(|e| e.to_string())
    }

    fn evaluate(&self, plan: &TripPlan) -> Evaluation<TripViolation> {
        let violations = evaluate_trip(self.task, plan);
        Evaluation {
            cost: violations.len() as f64,
            violations,
        }
    }

    fn parse_failure(&self, reason: &str) -> TripViolation {
        TripViolation::new(
            TripViolationKind::ParseFailure,
            format!("The plan could not be read: {reason}"),
        )
    }

    fn is_success(&self, violations: &[TripViolation]) -> bool {
        violations.is_empty()
    }
}

pub type TripRun = RefinementRun<TripPlan, TripViolation>;

/// Feedback-driven trip planning: an unguided first round, then up to
/// `rounds - 1` rounds that show the best plan so far and its unmet
/// constraints. Stops at the first clean plan.
pub fn run_trip_llmpc<T: TextSampler>(
    task: &TripTask,
    task_text: &str,
    rounds: usize,
    samples: usize,
    sampler: &mut T,
    settings: &RequestSettings,
) -> Result<TripRun, MpcError> {
    let domain = TripDomain { task, task_text };
    run_refinement(&domain, rounds, samples, sampler, settings, true)
}
