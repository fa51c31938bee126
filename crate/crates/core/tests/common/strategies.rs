//! Random plan generators shared by round-trip properties.

use llmpc::meeting::{MeetingPlan, Step};
use llmpc::trip::{Segment, TripPlan};
use proptest::prelude::*;

pub fn place_name() -> impl Strategy<Value = String> {
    "[A-Z][a-z]{2,9}( [A-Z][a-z]{2,7})?"
}

prop_compose! {
    pub fn arb_trip_plan()(cities in prop::collection::vec((place_name(), 1u32..8), 1..9), start in 1u32..4) -> TripPlan {
        let mut plan = TripPlan::from_visits(&cities);
        for s in &mut plan.segments {
            match s {
                Segment::Stay { start: a, end: b, .. } => { *a += start - 1; *b += start - 1; }
                Segment::Fly { day, .. } => *day += start - 1,
            }
        }
        plan
    }
}

fn meeting_step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (place_name(), 1u32..200, 0u32..1440).prop_map(|(to, minutes, arrive)| Step::Travel { to, minutes, arrive }),
        (0u32..1440).prop_map(|until| Step::Wait { until }),
        (place_name(), 1u32..300, 0u32..1440, 0u32..1440).prop_map(|(friend, minutes, from, to)| Step::Meet {
            friend,
            minutes,
            from,
            to
        }),
    ]
}

prop_compose! {
    pub fn arb_meeting_plan()(location in place_name(), time in 0u32..1440, rest in prop::collection::vec(meeting_step(), 0..12)) -> MeetingPlan {
        let mut steps = vec![Step::Start { location, time }];
        steps.extend(rest);
        MeetingPlan { steps }
    }
}
