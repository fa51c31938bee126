//! The spring loop driven through the text path: prompt, reply, decode.
//!
//! A stand-in model answers each prompt with K jittered guesses around a
//! constant push, formatted the way the prompt asks. Swap the closure for
//! a `Gateway` to use a real endpoint.

use llmpc::gateway::{ChatRequest, GatewayError, RequestSettings};
use llmpc::mpc::PlanningProblem;
use llmpc::sampling::LlmSpringSampler;
use llmpc::spring::{run_spring_mpc, CostWeights, SpringParams, SpringState};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> anyhow::Result<()> {
    let params = SpringParams::default();
    let weights = CostWeights::default();
    let k = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut last_prompt = String::new();

    let model = |req: &ChatRequest, n: usize| -> Result<Vec<String>, GatewayError> {
        last_prompt = req.user_prompt.clone();
        let replies = (0..n)
            .map(|_| {
                let body: Vec<String> = (1..=k)
                    .map(|i| {
                        let seq: Vec<String> = (0..3).map(|_| format!("{:.2}", rng.random_range(5.0..15.0))).collect();
                        format!("\"sequence_{i}\": [{}]", seq.join(", "))
                    })
                    .collect();
                format!("Here are my proposals:\n{{{}}}", body.join(",\n"))
            })
            .collect();
        Ok(replies)
    };

    let mut sampler = LlmSpringSampler::new(model, params, weights, 3, RequestSettings::default());
    let problem = PlanningProblem::new(3, 2, 15, k)?;
    let run = run_spring_mpc(
        &problem,
        &mut sampler,
        &params,
        &weights,
        SpringState::new(1.0, 0.0),
        None,
    )?;

    for r in &run.records {
        let s = r.state_after;
        println!(
            "round {:>2}: picked #{:<2} cost {:>9.3}  -> x={:.3} v={:.3}",
            r.round_index, r.selected.sample_index, r.selected.cost, s.x, s.v
        );
    }
    println!("accumulated cost {:.3}", run.accumulated_cost);
    drop(sampler);
    println!("\nlast prompt:\n{last_prompt}");
    Ok(())
}
