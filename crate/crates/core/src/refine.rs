//! Feedback-driven plan refinement for text domains.
//!
//! Each round renders a prompt from the best plan so far and its unmet
//! constraints, samples replies, parses and scores every candidate, and
//! keeps the overall best. It is the receding-horizon loop with a
//! one-step horizon whose "state" is the current best plan.

use serde::Serialize;

use crate::gateway::{ChatRequest, RequestSettings, TextSampler};
use crate::mpc::{
    receding_horizon_run, Evaluation, Evaluator, MpcError, PlanSampler, PlanningProblem, SamplerError, ScoredPlan,
    Simulator,
};

/// A structured, human-readable constraint violation.
pub trait ViolationRecord {
    fn kind_name(&self) -> &'static str;
    fn message(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BestPlan<P, V> {
    pub plan: P,
    pub cost: f64,
    pub violations: Vec<V>,
    pub round: usize,
}

/// A planning domain driven through text prompts.
pub trait RefinementDomain: Sync {
    type Plan: Clone + Send + Sync;
    type Violation: Clone + Send + Sync + ViolationRecord;

    fn render(
        &self,
        best: Option<&BestPlan<Self::Plan, Self::Violation>>,
        round: usize,
        total_rounds: usize,
        samples: usize,
        settings: &RequestSettings,
    ) -> ChatRequest;

    /// Completions to request per round for `samples` candidate plans.
    fn completions_per_round(&self, samples: usize) -> usize;

    /// Turn the raw replies of one round into at most `samples` plan texts.
    fn split_replies(&self, replies: Vec<String>, samples: usize) -> Vec<String>;

    fn parse(&self, text: &str) -> Result<Self::Plan, String>;

    fn evaluate(&self, plan: &Self::Plan) -> Evaluation<Self::Violation>;

    fn parse_failure(&self, reason: &str) -> Self::Violation;

    fn is_success(&self, violations: &[Self::Violation]) -> bool;
}

#[derive(Debug, Clone)]
pub struct RefineState<P, V> {
    pub best: Option<BestPlan<P, V>>,
}

struct DomainEvaluator<'a, D>(&'a D);

impl<D: RefinementDomain> Evaluator<RefineState<D::Plan, D::Violation>, D::Plan> for DomainEvaluator<'_, D> {
    type Violation = D::Violation;

    fn evaluate(&self, _state: &RefineState<D::Plan, D::Violation>, plan: &D::Plan) -> Evaluation<D::Violation> {
        self.0.evaluate(plan)
    }

    fn unparseable(&self, reason: &str) -> D::Violation {
        self.0.parse_failure(reason)
    }

    fn goal_reached(&self, state: &RefineState<D::Plan, D::Violation>) -> bool {
        state.best.as_ref().is_some_and(|b| self.0.is_success(&b.violations))
    }
}

struct DomainSampler<'a, D, T> {
    domain: &'a D,
    text: &'a mut T,
    settings: &'a RequestSettings,
    total_rounds: usize,
    received: Vec<usize>,
}

impl<D: RefinementDomain, T: TextSampler> PlanSampler<RefineState<D::Plan, D::Violation>> for DomainSampler<'_, D, T> {
    type Plan = D::Plan;

    fn sample(
        &mut self,
        state: &RefineState<D::Plan, D::Violation>,
        round: usize,
        count: usize,
    ) -> Result<Vec<Result<D::Plan, String>>, SamplerError> {
        let request = self
            .domain
            .render(state.best.as_ref(), round, self.total_rounds, count, self.settings);
        let n = self.domain.completions_per_round(count);
        let replies = self.text.sample_texts_from(&request, round * n, n)?;
        let texts = self.domain.split_replies(replies, count);
        self.received.push(texts.len());
        Ok(texts.iter().map(|t| self.domain.parse(t)).collect())
    }
}

struct KeepBest {
    round: usize,
}

impl<P: Clone, V: Clone> Simulator<RefineState<P, V>, P, V> for KeepBest {
    fn advance(&mut self, state: &RefineState<P, V>, selected: &ScoredPlan<P, V>, _steps: usize) -> RefineState<P, V> {
        let round = self.round;
        self.round += 1;
        let Some(plan) = &selected.plan else {
            return state.clone();
        };
        let improves = state.best.as_ref().is_none_or(|b| selected.cost < b.cost);
        if improves {
            RefineState {
                best: Some(BestPlan {
                    plan: plan.clone(),
                    cost: selected.cost,
                    violations: selected.violations.clone(),
                    round,
                }),
            }
        } else {
            state.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateLog {
    pub sample_index: usize,
    pub parsed: bool,
    /// `None` for infinite cost.
    pub cost: Option<f64>,
    pub violation_kinds: Vec<&'static str>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundLog {
    pub round: usize,
    pub requested: usize,
    pub received: usize,
    pub candidates: Vec<CandidateLog>,
    pub selected_index: usize,
    pub selected_violations: Vec<String>,
    pub best_cost: Option<f64>,
    pub best_violation_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementRun<P, V> {
    pub success: bool,
    pub rounds_used: usize,
    pub best: Option<BestPlan<P, V>>,
    pub rounds: Vec<RoundLog>,
}

fn finite(cost: f64) -> Option<f64> {
    cost.is_finite().then_some(cost)
}

/// Run up to `rounds` refinement rounds with `samples` candidates each.
/// With `stop_on_success` the loop ends at the first successful best plan.
pub fn run_refinement<D, T>(
    domain: &D,
    rounds: usize,
    samples: usize,
    text: &mut T,
    settings: &RequestSettings,
    stop_on_success: bool,
) -> Result<RefinementRun<D::Plan, D::Violation>, MpcError>
where
    D: RefinementDomain,
    T: TextSampler,
{
    let problem = PlanningProblem::new(1, 1, rounds, samples)?.with_stop_on_goal(stop_on_success);
    let mut sampler = DomainSampler {
        domain,
        text,
        settings,
        total_rounds: rounds,
        received: Vec::new(),
    };
    let records = receding_horizon_run(
        &problem,
        &mut sampler,
        &DomainEvaluator(domain),
        &mut KeepBest { round: 0 },
        RefineState { best: None },
    )?;

    let logs = records
        .iter()
        .zip(&sampler.received)
        .map(|(r, &received)| RoundLog {
            round: r.round_index,
            requested: r.requested,
            received,
            candidates: r
                .all_scored
                .iter()
                .map(|c| CandidateLog {
                    sample_index: c.sample_index,
                    parsed: !c.is_sentinel(),
                    cost: finite(c.cost),
                    violation_kinds: c.violations.iter().map(|v| v.kind_name()).collect(),
                })
                .collect(),
            selected_index: r.selected.sample_index,
            selected_violations: r.selected.violations.iter().map(|v| v.message().to_string()).collect(),
            best_cost: r.state_after.best.as_ref().and_then(|b| finite(b.cost)),
            best_violation_count: r.state_after.best.as_ref().map(|b| b.violations.len()),
        })
        .collect();
    let best = records.last().and_then(|r| r.state_after.best.clone());
    let success = best.as_ref().is_some_and(|b| domain.is_success(&b.violations));
    Ok(RefinementRun {
        success,
        rounds_used: records.len(),
        best,
        rounds: logs,
    })
}
