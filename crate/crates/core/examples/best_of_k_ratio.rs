//! Mean best-of-K cost over exact cost as K grows.

use llmpc::sampling::MockNoisySampler;
use llmpc::spring::{ratio_experiment, sample_states, CostWeights, SpringParams};

fn main() -> anyhow::Result<()> {
    let params = SpringParams::default();
    let weights = CostWeights::default();
    let states = sample_states(20, (-2.0, 4.0), (-2.0, 2.0), 0);
    let ks = [1, 2, 5, 10, 15, 30];

    println!("{:>6} {:>10} {:>10}", "noise", "K", "mean ratio");
    for noise in [0.5, 2.0, 5.0] {
        let mut sampler = MockNoisySampler {
            params,
            weights,
            horizon: 3,
            noise_scale: noise,
            seed: 0,
            include_optimum: false,
        };
        let table = ratio_experiment(&states, &ks, &mut sampler, &params, &weights, 3)?;
        for (k, mean) in table.k_values.iter().zip(&table.means) {
            println!("{noise:>6.1} {k:>10} {mean:>10.4}");
        }
        if !table.skipped.is_empty() {
            println!("skipped states {:?}", table.skipped);
        }
    }
    Ok(())
}
