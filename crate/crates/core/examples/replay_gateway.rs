//! Offline replay of a recorded trip experiment from the committed cache.
//!
//! Every completion is served from tests/fixtures/replay/trip/cache; an
//! unseen prompt would be a cache-miss error, never a network call.

use std::path::Path;

use llmpc::gateway::{Gateway, GatewayError, RequestSettings};
use llmpc::harness::{run_experiment, ExperimentConfig, ExperimentKind, SamplerKind};
use llmpc::sampling::{render_trip_prompt, FeedbackReport};

fn main() -> anyhow::Result<()> {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/replay/trip");
    let out = std::env::temp_dir().join("llmpc-replay-example");

    let mut config = ExperimentConfig::new(ExperimentKind::Trip);
    config.sampler = SamplerKind::Replay;
    config.mpc.rounds = Some(3);
    config.mpc.samples = Some(1);
    config.trip.tasks = Some(fixture.join("tasks.jsonl"));
    config.llm.cache_dir = Some(fixture.join("cache"));
    config.output_dir = out.clone();

    let summary = run_experiment(&config)?;
    println!("{}", summary.headline.to_aligned());
    for f in &summary.files {
        println!("wrote {}", f.display());
    }

    let gateway = Gateway::replay(fixture.join("cache"));
    let unseen = render_trip_prompt(
        "Visit nowhere.",
        None,
        &FeedbackReport::default(),
        &RequestSettings::default(),
    );
    match gateway.complete(&unseen, 0) {
        Err(e @ GatewayError::CacheMiss { .. }) => println!("unseen prompt: {e}"),
        other => println!("unexpected: {other:?}"),
    }
    println!("network calls: {}", gateway.network_calls());
    Ok(())
}
