//! Closed-loop spring control: exact MPC next to best-of-K sampled plans.
//!
//! cargo run --example spring_mpc -- [K] [noise]

use llmpc::mpc::PlanningProblem;
use llmpc::sampling::{MockNoisySampler, OracleSampler};
use llmpc::spring::{run_spring_mpc, CostWeights, SpringParams, SpringRun, SpringState};

fn print_run(label: &str, run: &SpringRun) {
    println!("{label}: accumulated cost {:.3}", run.accumulated_cost);
    for (i, (s, u)) in run.applied.iter().enumerate().step_by(4) {
        println!("  step {i:>2}  x={:>7.4}  v={:>7.4}  u={:>7.3}", s.x, s.v, u);
    }
    let f = run.final_state;
    println!("  final    x={:>7.4}  v={:>7.4}", f.x, f.v);
}

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let k: usize = args.next().map(|a| a.parse()).transpose()?.unwrap_or(15);
    let noise: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(2.0);

    let params = SpringParams::default();
    let weights = CostWeights::default();
    let start = SpringState::new(1.0, 0.0);

    let problem = PlanningProblem::new(3, 2, 20, 1)?;
    let mut exact = OracleSampler {
        params,
        weights,
        horizon: 3,
    };
    let mpc = run_spring_mpc(&problem, &mut exact, &params, &weights, start, None)?;
    print_run("exact MPC", &mpc);

    let problem = PlanningProblem::new(3, 2, 20, k)?;
    let mut noisy = MockNoisySampler {
        params,
        weights,
        horizon: 3,
        noise_scale: noise,
        seed: 7,
        include_optimum: false,
    };
    let sampled = run_spring_mpc(&problem, &mut noisy, &params, &weights, start, None)?;
    print_run(&format!("best of {k} noisy samples"), &sampled);
    println!("cost ratio {:.3}", sampled.accumulated_cost / mpc.accumulated_cost);
    Ok(())
}
