//! Feedback-driven trip planning on a generated task.
//!
//! The "model" here is scripted: a plan with the stay lengths shuffled,
//! then an unusable reply, then the reference plan. Each round's prompt
//! carries the evaluator's feedback on the best plan so far.

use llmpc::gateway::{RequestSettings, ScriptedSampler};
use llmpc::trip::{evaluate_trip, feedback_from, generate_trip_instance, run_trip_llmpc, TripPlan};

fn main() -> anyhow::Result<()> {
    let (task, reference) = generate_trip_instance(5, 42);
    let task_text = task.to_text();
    println!("{task_text}\n");

    let mut visits: Vec<(String, u32)> = reference.stays().map(|(c, s, e)| (c.to_string(), e - s + 1)).collect();
    visits.swap(0, 1);
    let first_try = TripPlan::from_visits(&visits);
    println!("first attempt:\n{}", first_try.to_text());
    for line in feedback_from(&evaluate_trip(&task, &first_try)).violations {
        println!("  - {line}");
    }

    let mut sampler = ScriptedSampler::new([
        first_try.to_text(),
        "Let me think about this differently.".to_string(),
        reference.to_text(),
    ]);
    let run = run_trip_llmpc(&task, &task_text, 5, 1, &mut sampler, &RequestSettings::default())?;

    println!();
    for round in &run.rounds {
        let parsed = round.candidates.iter().filter(|c| c.parsed).count();
        println!(
            "round {}: {parsed}/{} parsed, best violations {:?}",
            round.round, round.received, round.best_violation_count
        );
    }
    println!("success {} after {} rounds", run.success, run.rounds_used);
    println!("\nlast prompt sent:\n{}", sampler.requests.last().unwrap().user_prompt);
    Ok(())
}
