//! Meeting scheduling: exhaustive oracle, then the refinement loop with a
//! scripted sampler that proposes three schedules per reply.

use llmpc::gateway::{RequestSettings, ScriptedSampler};
use llmpc::meeting::{
    evaluate_meeting, generate_meeting_instance, run_meeting_llmpc, solve_meeting_oracle, MeetingPlan, Step,
};

fn main() -> anyhow::Result<()> {
    let (task, _) = generate_meeting_instance(4, 3);
    let task_text = task.to_text();
    println!("{task_text}\n");

    let oracle = solve_meeting_oracle(&task, 6)?;
    println!("oracle meets {} of {} friends:", oracle.best_count, task.friends.len());
    for step in &oracle.plan.steps {
        println!("  {step}");
    }

    let last_meet = oracle
        .plan
        .steps
        .iter()
        .rposition(|s| matches!(s, Step::Meet { .. }))
        .unwrap();
    let partial = MeetingPlan {
        steps: oracle.plan.steps[..last_meet].to_vec(),
    };
    let e = evaluate_meeting(&task, &partial);
    println!("\npartial plan meets {}; violations:", e.meetings_satisfied);
    for v in &e.violations {
        println!("  - {}", v.message);
    }

    let p = partial.to_text();
    let full = oracle.plan.to_text();
    let mut sampler = ScriptedSampler::new([
        format!("SOLUTION:\n{p}\n---\nno idea\n---\n{p}"),
        format!("SOLUTION:\n{p}\n---\n{full}\n---\nno idea"),
    ]);
    let run = run_meeting_llmpc(&task, &task_text, 9, 3, &mut sampler, &RequestSettings::default())?;
    println!();
    for round in &run.rounds {
        let kinds: Vec<_> = round.candidates.iter().map(|c| c.violation_kinds.join("+")).collect();
        println!(
            "round {}: candidates {:?}, selected #{}",
            round.round, kinds, round.selected_index
        );
    }
    println!("success {} after {} rounds", run.success, run.rounds_used);
    Ok(())
}
