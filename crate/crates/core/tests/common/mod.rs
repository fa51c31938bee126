#![allow(dead_code)]

use std::collections::BTreeMap;

use itertools::Itertools;
use llmpc::meeting::{
    evaluate_meeting, generate_meeting_instance, parse_meeting_plan, parse_meeting_task, MeetingPlan, MeetingTask,
    MeetingViolationKind, Step,
};
use llmpc::trip::{parse_trip_plan, parse_trip_task, FlightPair, TripPlan, TripTask, TripViolationKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod replay;
pub mod strategies;

pub const TRIP_EXAMPLE: &str = include_str!("../fixtures/trip_example.txt");
pub const MEETING_EXAMPLE: &str = include_str!("../fixtures/meeting_example.txt");

fn after_last_solution(text: &str) -> &str {
    let at = text.rfind("SOLUTION:").expect("fixture has a solution");
    &text[at + "SOLUTION:".len()..]
}

pub fn trip_task() -> TripTask {
    parse_trip_task(TRIP_EXAMPLE).expect("trip fixture parses")
}

pub fn trip_solution_text() -> &'static str {
    after_last_solution(TRIP_EXAMPLE).trim()
}

pub fn trip_solution() -> TripPlan {
    parse_trip_plan(trip_solution_text()).expect("trip solution parses")
}

pub fn meeting_task_text() -> &'static str {
    &MEETING_EXAMPLE[..MEETING_EXAMPLE.find("SOLUTION:").expect("fixture has a solution")]
}

pub fn meeting_task() -> MeetingTask {
    parse_meeting_task(MEETING_EXAMPLE).expect("meeting fixture parses")
}

pub fn meeting_solution_text() -> &'static str {
    after_last_solution(MEETING_EXAMPLE).trim()
}

pub fn meeting_solution() -> MeetingPlan {
    parse_meeting_plan(meeting_solution_text()).expect("meeting solution parses")
}

fn replace_once(text: &str, from: &str, to: &str) -> String {
    assert!(text.contains(from), "mutation anchor {from:?} missing");
    text.replacen(from, to, 1)
}

fn visits(plan: &TripPlan) -> Vec<(String, u32)> {
    plan.stays().map(|(c, s, e)| (c.to_string(), e - s + 1)).collect()
}

/// A mutated trip fixture and the violation kind it must trigger.
pub struct TripMutation {
    pub name: &'static str,
    pub task: TripTask,
    pub plan: TripPlan,
    pub expected: TripViolationKind,
}

pub fn trip_mutations() -> Vec<TripMutation> {
    let task = trip_task();
    let plan = trip_solution();
    let mut out = Vec::new();

    let shortened = replace_once(
        trip_solution_text(),
        "**Day 10-12:** Visit Vienna for 3 days.",
        "**Day 10-11:** Visit Vienna for 2 days.",
    );
    out.push(TripMutation {
        name: "shorten_vienna",
        task: task.clone(),
        plan: parse_trip_plan(&shortened).unwrap(),
        expected: TripViolationKind::DurationMismatch,
    });

    // Dubrovnik and London both last 2 days; swapping them leaves
    // Dubrovnik -> Budapest, which has no direct flight.
    let mut v = visits(&plan);
    let d = v.iter().position(|(c, _)| c == "Dubrovnik").unwrap();
    let l = v.iter().position(|(c, _)| c == "London").unwrap();
    v.swap(d, l);
    out.push(TripMutation {
        name: "swap_unconnected",
        task: task.clone(),
        plan: TripPlan::from_visits(&v),
        expected: TripViolationKind::NoDirectFlight,
    });

    let mut dropped = plan.clone();
    dropped.segments.truncate(dropped.segments.len() - 2);
    out.push(TripMutation {
        name: "drop_last_city",
        task: task.clone(),
        plan: dropped,
        expected: TripViolationKind::MissingCity,
    });

    let mut moved = task.clone();
    let wedding = moved.events.iter_mut().find(|e| e.city == "Oslo").unwrap();
    wedding.day_lo = 1;
    wedding.day_hi = 2;
    out.push(TripMutation {
        name: "move_wedding",
        task: moved,
        plan: plan.clone(),
        expected: TripViolationKind::EventMissed,
    });

    let mut shifted = plan.clone();
    for s in &mut shifted.segments {
        match s {
            llmpc::trip::Segment::Stay { start, end, .. } => {
                *start += 1;
                *end += 1;
            }
            llmpc::trip::Segment::Fly { day, .. } => *day += 1,
        }
    }
    out.push(TripMutation {
        name: "shift_days",
        task: task.clone(),
        plan: shifted,
        expected: TripViolationKind::TotalDaysWrong,
    });

    let mut no_flight = task.clone();
    assert!(no_flight
        .direct_flights
        .remove(&FlightPair::new("Edinburgh", "Frankfurt")));
    out.push(TripMutation {
        name: "remove_used_flight",
        task: no_flight,
        plan,
        expected: TripViolationKind::NoDirectFlight,
    });
    out
}

/// A mutated meeting solution text and the violation kind it must trigger.
pub struct MeetingMutation {
    pub name: &'static str,
    pub plan_text: String,
    pub expected: MeetingViolationKind,
}

pub fn meeting_mutations() -> Vec<MeetingMutation> {
    let s = meeting_solution_text();
    vec![
        MeetingMutation {
            name: "jason_early",
            plan_text: replace_once(s, "from 11:00AM to 12:15PM", "from 10:45AM to 12:00PM"),
            expected: MeetingViolationKind::OutsideWindow,
        },
        MeetingMutation {
            name: "betty_short",
            plan_text: replace_once(
                s,
                "You meet Betty for 90 minutes from 4:32PM to 6:02PM.",
                "You meet Betty for 80 minutes from 4:32PM to 5:52PM.",
            ),
            expected: MeetingViolationKind::BelowMinDuration,
        },
        MeetingMutation {
            name: "travel_time",
            plan_text: replace_once(
                s,
                "You travel to Union Square in 16 minutes and arrive at 9:16AM.",
                "You travel to Union Square in 12 minutes and arrive at 9:12AM.",
            ),
            expected: MeetingViolationKind::TravelTimeWrong,
        },
        MeetingMutation {
            name: "unknown_friend",
            plan_text: replace_once(s, "You meet Mary", "You meet Zelda"),
            expected: MeetingViolationKind::UnknownFriend,
        },
        MeetingMutation {
            name: "duplicate_friend",
            plan_text: format!("{s} You meet Deborah for 45 minutes from 8:47PM to 9:32PM."),
            expected: MeetingViolationKind::DuplicateFriend,
        },
        MeetingMutation {
            name: "drop_deborah",
            plan_text: replace_once(
                s,
                " You travel to Fisherman's Wharf in 10 minutes and arrive at 8:02PM. You meet Deborah for 45 minutes from 8:02PM to 8:47PM.",
                "",
            ),
            expected: MeetingViolationKind::MissedFriend,
        },
        MeetingMutation {
            name: "wrong_arrival",
            plan_text: replace_once(s, "and arrive at 9:16AM", "and arrive at 9:20AM"),
            expected: MeetingViolationKind::ArithmeticInconsistent,
        },
    ]
}

/// Largest number of friends any schedule meets cleanly, found by trying
/// every ordered subset with earliest-start timing and asking the
/// evaluator to judge each resulting plan.
pub fn enumerate_best_count(task: &MeetingTask) -> usize {
    let n = task.friends.len();
    let mut best = 0;
    for k in (1..=n).rev() {
        for order in (0..n).permutations(k) {
            let mut steps = vec![Step::Start {
                location: task.start_location.clone(),
                time: task.start_time,
            }];
            let mut here = task.start_location.clone();
            let mut clock = task.start_time;
            let mut ok = true;
            for &i in &order {
                let f = &task.friends[i];
                if f.location != here {
                    let Some(m) = task.travel_minutes(&here, &f.location) else {
                        ok = false;
                        break;
                    };
                    clock += m;
                    steps.push(Step::Travel {
                        to: f.location.clone(),
                        minutes: m,
                        arrive: clock,
                    });
                    here = f.location.clone();
                }
                if f.avail_lo > clock {
                    clock = f.avail_lo;
                    steps.push(Step::Wait { until: clock });
                }
                steps.push(Step::Meet {
                    friend: f.name.clone(),
                    minutes: f.min_duration,
                    from: clock,
                    to: clock + f.min_duration,
                });
                clock += f.min_duration;
            }
            if !ok {
                continue;
            }
            let e = evaluate_meeting(task, &MeetingPlan { steps });
            let only_missed = e
                .violations
                .iter()
                .all(|v| v.kind == MeetingViolationKind::MissedFriend);
            if only_missed && e.meetings_satisfied == k {
                best = k;
                break;
            }
        }
        if best > 0 {
            break;
        }
    }
    best
}

/// Count violation kinds, for readable assertion messages.
pub fn kind_counts<K: Ord + Copy>(kinds: impl IntoIterator<Item = K>) -> BTreeMap<K, usize> {
    let mut m = BTreeMap::new();
    for k in kinds {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Generated task with some windows moved so not everyone can be met.
pub fn scrambled_instance(n: usize, seed: u64) -> MeetingTask {
    let (mut task, _) = generate_meeting_instance(n, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for f in &mut task.friends {
        if rng.random_bool(0.5) {
            let width = f.avail_hi - f.avail_lo;
            f.avail_lo = rng.random_range(9 * 60..20 * 60) / 15 * 15;
            f.avail_hi = f.avail_lo + width;
        }
    }
    task
}
