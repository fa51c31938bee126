//! Generate a task file and check plans against its tasks.

use llmpc::harness::{generate_task_records, load_task_file, verify_plan, write_task_file, TaskDomain};

fn main() -> anyhow::Result<()> {
    let path = std::env::temp_dir().join("llmpc-trip-tasks.jsonl");
    let records = generate_task_records(TaskDomain::Trip, &[3, 4], 2, 11);
    write_task_file(&path, &records)?;
    let records = load_task_file(&path)?;
    println!("{} tasks in {}", records.len(), path.display());

    for r in &records {
        let golden = r.golden_plan.as_deref().unwrap_or_default();
        let ok = verify_plan(TaskDomain::Trip, &r.prompt, golden)?;
        let truncated: String = golden
            .lines()
            .take(golden.lines().count() - 1)
            .collect::<Vec<_>>()
            .join("\n");
        let bad = verify_plan(TaskDomain::Trip, &r.prompt, &truncated)?;
        println!(
            "{:<10} reference ok={}  truncated ok={} {:?}",
            r.id, ok.success, bad.success, bad.violations
        );
    }

    let meetings = generate_task_records(TaskDomain::Meeting, &[3], 1, 11);
    let m = &meetings[0];
    let report = verify_plan(
        TaskDomain::Meeting,
        &m.prompt,
        m.golden_plan.as_deref().unwrap_or_default(),
    )?;
    println!("\n{}\n{}", m.prompt, serde_json::to_string_pretty(&report)?);
    Ok(())
}
