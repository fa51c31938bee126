//! Domain-agnostic receding-horizon planning.
//!
//! A round samples `K` candidate plans from a [`PlanSampler`], scores every
//! candidate with an [`Evaluator`], keeps the cheapest one, and advances the
//! state with a [`Simulator`] by executing a prefix of that plan. Candidates
//! that could not be decoded are kept in the round as sentinels with an
//! infinite cost, so every round sees a fixed sampling budget.

use log::warn;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid planning problem: {0}")]
    InvalidProblem(String),
    #[error("no candidate plans to select from")]
    NoCandidates,
    #[error("sampler failed in round {round}: {source}")]
    Sampler {
        round: usize,
        #[source]
        source: SamplerError,
    },
}

/// Failure of a plan source that survived its own retry policy.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("{0}")]
pub struct SamplerError(pub String);

/// Budget and protocol of a receding-horizon run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PlanningProblem {
    /// Plan length in steps.
    pub horizon: usize,
    /// Steps of the selected plan applied before replanning.
    pub execute_steps: usize,
    /// Number of replanning rounds.
    pub max_rounds: usize,
    /// Plans sampled per round.
    pub samples: usize,
    /// Stop as soon as the evaluator reports the goal as reached.
    pub stop_on_goal: bool,
}

impl PlanningProblem {
    pub fn new(horizon: usize, execute_steps: usize, max_rounds: usize, samples: usize) -> Result<Self, MpcError> {
        let problem = Self {
            horizon,
            execute_steps,
            max_rounds,
            samples,
            stop_on_goal: false,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_stop_on_goal(mut self, stop: bool) -> Self {
        self.stop_on_goal = stop;
        self
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        if self.horizon == 0 {
            return Err(MpcError::InvalidProblem("horizon must be at least 1".into()));
        }
        if self.execute_steps == 0 || self.execute_steps > self.horizon {
            return Err(MpcError::InvalidProblem(format!(
                "execute_steps must be in 1..={} (got {})",
                self.horizon, self.execute_steps
            )));
        }
        if self.max_rounds == 0 {
            return Err(MpcError::InvalidProblem("max_rounds must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(MpcError::InvalidProblem("samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Result of scoring one plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation<V> {
    pub cost: f64,
    pub violations: Vec<V>,
}

/// A candidate plan together with its evaluated cost.
///
/// `plan` is `None` for sentinel candidates (unparseable sampler output);
/// those always carry `cost == f64::INFINITY` and at least one violation.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ScoredPlan<P, V> {
    pub plan: Option<P>,
    pub cost: f64,
    pub violations: Vec<V>,
    pub sample_index: usize,
}

impl<P, V> ScoredPlan<P, V> {
    pub fn sentinel(sample_index: usize, violation: V) -> Self {
        Self {
            plan: None,
            cost: f64::INFINITY,
            violations: vec![violation],
            sample_index,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.plan.is_none()
    }
}

/// Everything that happened in one replanning round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<S, P, V> {
    pub round_index: usize,
    pub requested: usize,
    pub all_scored: Vec<ScoredPlan<P, V>>,
    pub selected: ScoredPlan<P, V>,
    pub state_after: S,
}

impl<S, P, V> RoundRecord<S, P, V> {
    /// The selected plan is the minimum-cost candidate with the lowest index among ties.
    pub fn selection_is_consistent(&self) -> bool {
        match select_best(&self.all_scored) {
            Ok(best) => {
                best.sample_index == self.selected.sample_index && best.cost.total_cmp(&self.selected.cost).is_eq()
            }
            Err(_) => false,
        }
    }
}

/// A source of candidate plans. `Err` entries are candidates that could not
/// be decoded; the loop turns them into sentinels.
pub trait PlanSampler<S> {
    type Plan;

    fn sample(
        &mut self,
        state: &S,
        round: usize,
        count: usize,
    ) -> Result<Vec<Result<Self::Plan, String>>, SamplerError>;
}

/// Scores a plan from a state. Must be a pure function of its inputs.
pub trait Evaluator<S, P> {
    type Violation;

    fn evaluate(&self, state: &S, plan: &P) -> Evaluation<Self::Violation>;

    /// Violation record attached to a candidate that could not be decoded.
    fn unparseable(&self, reason: &str) -> Self::Violation;

    fn goal_reached(&self, _state: &S) -> bool {
        false
    }
}

/// Advances the state by executing `steps` actions of the selected plan.
pub trait Simulator<S, P, V> {
    fn advance(&mut self, state: &S, selected: &ScoredPlan<P, V>, steps: usize) -> S;
}

/// Minimum-cost candidate; ties go to the lowest `sample_index`.
pub fn select_best<P, V>(candidates: &[ScoredPlan<P, V>]) -> Result<&ScoredPlan<P, V>, MpcError> {
    candidates
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost).then(a.sample_index.cmp(&b.sample_index)))
        .ok_or(MpcError::NoCandidates)
}

/// Score a batch of decoded candidates. Indices follow sampler order.
pub fn score_candidates<S, P, E>(
    evaluator: &E,
    state: &S,
    candidates: Vec<Result<P, String>>,
) -> Vec<ScoredPlan<P, E::Violation>>
where
    S: Sync,
    P: Send + Sync,
    E: Evaluator<S, P> + Sync,
    E::Violation: Send,
{
    candidates
        .into_par_iter()
        .enumerate()
        .map(|(index, candidate)| match candidate {
            Ok(plan) => {
                let Evaluation { cost, violations } = evaluator.evaluate(state, &plan);
                ScoredPlan {
                    plan: Some(plan),
                    cost,
                    violations,
                    sample_index: index,
                }
            }
            Err(reason) => ScoredPlan::sentinel(index, evaluator.unparseable(&reason)),
        })
        .collect()
}

/// Run the sample / score / select / execute loop.
///
/// A round whose candidates are all sentinels selects the sentinel; the
/// simulator decides what executing it means (usually: nothing changes).
pub fn receding_horizon_run<S, P, V, Sa, E, Si>(
    problem: &PlanningProblem,
    sampler: &mut Sa,
    evaluator: &E,
    simulator: &mut Si,
    initial: S,
) -> Result<Vec<RoundRecord<S, P, V>>, MpcError>
where
    S: Clone + Sync,
    P: Send + Sync + Clone,
    V: Send + Clone,
    Sa: PlanSampler<S, Plan = P>,
    E: Evaluator<S, P, Violation = V> + Sync,
    Si: Simulator<S, P, V>,
{
    problem.validate()?;
    let mut state = initial;
    let mut records = Vec::with_capacity(problem.max_rounds);

    for round in 0..problem.max_rounds {
        if problem.stop_on_goal && evaluator.goal_reached(&state) {
            break;
        }
        let candidates = sampler
            .sample(&state, round, problem.samples)
            .map_err(|source| MpcError::Sampler { round, source })?;
        if candidates.len() < problem.samples {
            warn!(
                "round {round}: sampler returned {} of {} requested plans",
                candidates.len(),
                problem.samples
            );
        }

        let mut all_scored = score_candidates(evaluator, &state, candidates);
        if all_scored.is_empty() {
            all_scored.push(ScoredPlan::sentinel(
                0,
                evaluator.unparseable("sampler returned no candidates"),
            ));
        }

        let selected = select_best(&all_scored)?.clone();
        let state_after = simulator.advance(&state, &selected, problem.execute_steps);
        records.push(RoundRecord {
            round_index: round,
            requested: problem.samples,
            all_scored,
            selected,
            state_after: state_after.clone(),
        });
        state = state_after;
    }
    Ok(records)
}

/// Sum of selected-plan costs over a run.
pub fn accumulated_cost<S, P, V>(records: &[RoundRecord<S, P, V>]) -> f64 {
    records.iter().map(|r| r.selected.cost).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scored(costs: &[f64]) -> Vec<ScoredPlan<(), String>> {
        costs
            .iter()
            .enumerate()
            .map(|(i, &cost)| ScoredPlan {
                plan: Some(()),
                cost,
                violations: vec![],
                sample_index: i,
            })
            .collect()
    }

    #[test]
    fn selects_minimum() {
        let c = scored(&[8.2, 3.1, 5.0]);
        assert_eq!(select_best(&c).unwrap().cost, 3.1);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let c = scored(&[4.0, 4.0]);
        assert_eq!(select_best(&c).unwrap().sample_index, 0);
        let mut rev = scored(&[4.0, 4.0]);
        rev.reverse();
        assert_eq!(select_best(&rev).unwrap().sample_index, 0);
    }

    #[test]
    fn sentinel_loses_to_any_finite_cost() {
        let mut c = scored(&[f64::INFINITY, 7.3]);
        c[0] = ScoredPlan::sentinel(0, "bad".to_string());
        assert_eq!(select_best(&c).unwrap().cost, 7.3);
    }

    #[test]
    fn empty_candidates_error() {
        let c: Vec<ScoredPlan<(), String>> = vec![];
        assert_eq!(select_best(&c).unwrap_err(), MpcError::NoCandidates);
    }

    #[test]
    fn problem_validation() {
        assert!(PlanningProblem::new(3, 2, 1, 1).is_ok());
        assert!(PlanningProblem::new(3, 4, 1, 1).is_err());
        assert!(PlanningProblem::new(3, 0, 1, 1).is_err());
        assert!(PlanningProblem::new(0, 0, 1, 1).is_err());
        assert!(PlanningProblem::new(3, 3, 0, 1).is_err());
        assert!(PlanningProblem::new(3, 3, 1, 0).is_err());
    }

    // Integer-line toy domain: state is a position, a plan is a list of
    // increments, cost is the distance of the final position to 10.
    struct Line;
    impl Evaluator<i64, Vec<i64>> for Line {
        type Violation = String;
        fn evaluate(&self, state: &i64, plan: &Vec<i64>) -> Evaluation<String> {
            let end = state + plan.iter().sum::<i64>();
            Evaluation {
                cost: (end - 10).abs() as f64,
                violations: vec![],
            }
        }
        fn unparseable(&self, reason: &str) -> String {
            reason.to_string()
        }
        fn goal_reached(&self, state: &i64) -> bool {
            *state == 10
        }
    }
    struct Apply {
        applied: usize,
    }
    impl Simulator<i64, Vec<i64>, String> for Apply {
        fn advance(&mut self, state: &i64, selected: &ScoredPlan<Vec<i64>, String>, steps: usize) -> i64 {
            match &selected.plan {
                Some(plan) => {
                    let prefix = &plan[..steps.min(plan.len())];
                    self.applied += prefix.len();
                    state + prefix.iter().sum::<i64>()
                }
                None => *state,
            }
        }
    }
    struct Fixed(Vec<Result<Vec<i64>, String>>);
    impl PlanSampler<i64> for Fixed {
        type Plan = Vec<i64>;
        fn sample(&mut self, _: &i64, _: usize, _: usize) -> Result<Vec<Result<Vec<i64>, String>>, SamplerError> {
            Ok(self.0.clone())
        }
    }

    #[test]
    fn protocol_applies_rounds_times_execute_steps() {
        let problem = PlanningProblem::new(3, 2, 3, 1).unwrap();
        let mut sim = Apply { applied: 0 };
        let records = receding_horizon_run(&problem, &mut Fixed(vec![Ok(vec![1, 1, 1])]), &Line, &mut sim, 0).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(sim.applied, 6);
        assert_eq!(records.last().unwrap().state_after, 6);
    }

    #[test]
    fn all_unparseable_round_selects_sentinel_and_continues() {
        let problem = PlanningProblem::new(1, 1, 4, 2).unwrap();
        let mut sampler = Fixed(vec![Err("garbage".into()), Err("junk".into())]);
        let records = receding_horizon_run(&problem, &mut sampler, &Line, &mut Apply { applied: 0 }, 0).unwrap();
        assert_eq!(records.len(), 4);
        for r in &records {
            assert!(r.selected.is_sentinel());
            assert_eq!(r.selected.sample_index, 0);
            assert_eq!(r.state_after, 0);
        }
    }

    #[test]
    fn fewer_than_requested_is_tolerated() {
        let problem = PlanningProblem::new(1, 1, 1, 5).unwrap();
        let records = receding_horizon_run(
            &problem,
            &mut Fixed(vec![Ok(vec![3])]),
            &Line,
            &mut Apply { applied: 0 },
            0,
        )
        .unwrap();
        assert_eq!(records[0].all_scored.len(), 1);
        assert_eq!(records[0].requested, 5);
    }

    #[test]
    fn empty_batch_becomes_sentinel_round() {
        let problem = PlanningProblem::new(1, 1, 2, 3).unwrap();
        let records = receding_horizon_run(&problem, &mut Fixed(vec![]), &Line, &mut Apply { applied: 0 }, 0).unwrap();
        assert_eq!(records.len(), 2);
        assert!(records.iter().all(|r| r.selected.is_sentinel()));
    }

    #[test]
    fn goal_stop_is_opt_in() {
        let sampler = || Fixed(vec![Ok(vec![10])]);
        let problem = PlanningProblem::new(1, 1, 5, 1).unwrap();
        let full = receding_horizon_run(&problem, &mut sampler(), &Line, &mut Apply { applied: 0 }, 0).unwrap();
        assert_eq!(full.len(), 5);
        let early = receding_horizon_run(
            &problem.with_stop_on_goal(true),
            &mut sampler(),
            &Line,
            &mut Apply { applied: 0 },
            0,
        )
        .unwrap();
        assert_eq!(early.len(), 1);
    }

    #[test]
    fn sampler_errors_propagate() {
        struct Broken;
        impl PlanSampler<i64> for Broken {
            type Plan = Vec<i64>;
            fn sample(&mut self, _: &i64, _: usize, _: usize) -> Result<Vec<Result<Vec<i64>, String>>, SamplerError> {
                Err(SamplerError("connection refused".into()))
            }
        }
        let problem = PlanningProblem::new(1, 1, 3, 1).unwrap();
        let err = receding_horizon_run(&problem, &mut Broken, &Line, &mut Apply { applied: 0 }, 0).unwrap_err();
        assert!(matches!(err, MpcError::Sampler { round: 0, .. }));
    }

    proptest! {
        #[test]
        fn superset_never_selects_worse(costs in prop::collection::vec(0.0f64..100.0, 1..20), cut in 1usize..20) {
            let all = scored(&costs);
            let cut = cut.min(all.len());
            let subset = &all[..cut];
            prop_assert!(select_best(&all).unwrap().cost <= select_best(subset).unwrap().cost);
        }

        #[test]
        fn argmin_invariant_under_increasing_transform(costs in prop::collection::vec(-50.0f64..50.0, 1..20)) {
            let plain = scored(&costs);
            let transformed: Vec<f64> = costs.iter().map(|c| (c / 10.0).exp() * 3.0 + 1.0).collect();
            let mapped = scored(&transformed);
            prop_assert_eq!(
                select_best(&plain).unwrap().sample_index,
                select_best(&mapped).unwrap().sample_index
            );
        }

        #[test]
        fn selected_is_minimum_in_every_round(plans in prop::collection::vec(prop::collection::vec(-5i64..5, 1..3), 1..6)) {
            let problem = PlanningProblem::new(2, 1, 4, plans.len()).unwrap();
            let mut sampler = Fixed(plans.into_iter().map(Ok).collect());
            let records = receding_horizon_run(&problem, &mut sampler, &Line, &mut Apply { applied: 0 }, 0).unwrap();
            for r in &records {
                prop_assert!(r.selection_is_consistent());
            }
        }
    }
}
