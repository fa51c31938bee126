//! Prompt rendering for all three domains and decoding of a spring reply.

use llmpc::gateway::RequestSettings;
use llmpc::meeting::generate_meeting_instance;
use llmpc::sampling::{
    decode_spring_response, render_meeting_prompt, render_spring_prompt, render_trip_prompt, FeedbackReport,
};
use llmpc::spring::{CostWeights, SpringParams, SpringState};
use llmpc::trip::generate_trip_instance;

fn show(title: &str, system: &str, user: &str) {
    println!("===== {title} / system =====\n{system}\n===== {title} / user =====\n{user}\n");
}

fn main() -> anyhow::Result<()> {
    let settings = RequestSettings::default();
    let params = SpringParams::default();

    let spring = render_spring_prompt(
        &SpringState::new(1.0, 0.0),
        &params,
        &CostWeights::default(),
        3,
        5,
        &settings,
    )?;
    show("spring", &spring.system_prompt, &spring.user_prompt);

    let (trip, plan) = generate_trip_instance(3, 1);
    let feedback = FeedbackReport::from_lines(["Stay in the second city is one day short."]);
    let r = render_trip_prompt(&trip.to_text(), Some(&plan), &feedback, &settings);
    show("trip", &r.system_prompt, &r.user_prompt);

    let (meeting, _) = generate_meeting_instance(2, 1);
    let r = render_meeting_prompt(&meeting.to_text(), None, &FeedbackReport::default(), 1, 9, 3, &settings);
    show("meeting", &r.system_prompt, &r.user_prompt);

    let reply =
        "Sure! ```python\n{'sequence_1': [4.0, 6.5, 30], 'sequence_2': [1, 2],\n 'sequence_3': [5, 5, 5],}\n```";
    let decoded = decode_spring_response(reply, 3, &params)?;
    println!("decoded {:?}", decoded.sequences);
    println!("warnings {:?}", decoded.warnings);
    Ok(())
}
