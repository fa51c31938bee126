//! Plan sources: prompt rendering, reply decoding, and offline samplers.

mod spring;
pub mod template;

pub use spring::{
    decode_spring_response, format_spring_sequences, mock_noisy_optimum_sampler, render_spring_prompt,
    LlmSpringSampler, MockNoisySampler, OracleSampler, SpringDecode, SpringDecodeError,
};
pub use template::{template, PromptTemplate, TemplateError};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{ChatRequest, RequestSettings};
use crate::meeting::MeetingPlan;
use crate::trip::TripPlan;

/// Shown in place of the current plan before any plan exists.
pub const NO_PLAN_YET: &str = "None yet";

/// Unmet constraints of the previous plan, one human-readable line each.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackReport {
    pub violations: Vec<String>,
    /// Context lines printed before the violations (only when there are any).
    pub summary: Vec<String>,
}

impl FeedbackReport {
    pub fn from_lines<I, S>(lines: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            violations: lines.into_iter().map(Into::into).collect(),
            summary: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    /// Feedback block for the instruction prompt; empty when there is nothing to report.
    pub fn to_prompt_section(&self) -> String {
        if self.is_empty() {
            return String::new();
        }
        let mut out = String::from("FEEDBACK:\n");
        for line in &self.summary {
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("The current plan does not satisfy the following constraints:\n");
        for v in &self.violations {
            out.push_str("- ");
            out.push_str(v);
            out.push('\n');
        }
        out.push_str("Propose a new plan that fixes these problems.");
        out
    }
}

fn render(name: &str, values: &BTreeMap<&str, String>) -> String {
    template(name)
        .and_then(|t| t.render(values))
        .unwrap_or_else(|e| panic!("bundled template {name}: {e}"))
}

/// System prompt plus instruction prompt for one trip-planning round.
/// Without a current plan the feedback section is left out.
pub fn render_trip_prompt(
    task_text: &str,
    current_plan: Option<&TripPlan>,
    feedback: &FeedbackReport,
    settings: &RequestSettings,
) -> ChatRequest {
    let (plan_text, feedback_text) = match current_plan {
        Some(plan) => (plan.to_text(), feedback.to_prompt_section()),
        None => (NO_PLAN_YET.to_string(), String::new()),
    };
    let values = BTreeMap::from([
        ("task", task_text.trim().to_string()),
        ("current_plan", plan_text),
        ("feedback_string", feedback_text),
    ]);
    let user = render("trip_user", &values).trim_end().to_string();
    ChatRequest::new(render("trip_system", &BTreeMap::new()), user, settings)
}

/// Prompts for one meeting-planning round requesting `plans` candidates.
pub fn render_meeting_prompt(
    task_text: &str,
    current_plan: Option<&MeetingPlan>,
    feedback: &FeedbackReport,
    step: usize,
    total_steps: usize,
    plans: usize,
    settings: &RequestSettings,
) -> ChatRequest {
    let (plan_text, feedback_text) = match current_plan {
        Some(plan) => (plan.to_text(), feedback.to_prompt_section()),
        None => (NO_PLAN_YET.to_string(), String::new()),
    };
    let user_values = BTreeMap::from([
        ("step", step.to_string()),
        ("total_steps", total_steps.to_string()),
        ("task", task_text.trim().to_string()),
        ("current_plan", plan_text),
        ("feedback_string", feedback_text),
        ("num_plans", plans.to_string()),
    ]);
    let system_values = BTreeMap::from([("PLANS_PER_ITERATION", plans.to_string())]);
    ChatRequest::new(
        render("meeting_system", &system_values),
        render("meeting_user", &user_values),
        settings,
    )
}

/// Split a multi-plan meeting reply into plan blocks.
///
/// Drops everything up to and including the first `SOLUTION` keyword (and
/// its colon), splits on lines made only of dashes, trims, and discards
/// empty blocks.
pub fn split_meeting_response(text: &str) -> Vec<String> {
    let body = match text.find("SOLUTION") {
        Some(at) => {
            let rest = &text[at + "SOLUTION".len()..];
            rest.strip_prefix(':').unwrap_or(rest)
        }
        None => text,
    };
    let mut blocks = Vec::new();
    let mut current = String::new();
    for line in body.lines() {
        let trimmed = line.trim();
        if trimmed.len() >= 3 && trimmed.chars().all(|c| c == '-') {
            blocks.push(std::mem::take(&mut current));
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    blocks.push(current);
    blocks
        .into_iter()
        .map(|b| b.trim().to_string())
        .filter(|b| !b.is_empty())
        .collect()
}
