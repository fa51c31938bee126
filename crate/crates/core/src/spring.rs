//! Spring-mass control domain.
//!
//! Explicit-Euler dynamics with force `u - k x`, a terminal quadratic goal
//! cost with control regularisation, an exact box-constrained solver and an
//! exhaustive grid search used to cross-check it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mpc::{
    accumulated_cost, receding_horizon_run, Evaluation, Evaluator, MpcError, PlanSampler, PlanningProblem, RoundRecord,
    SamplerError, ScoredPlan, Simulator,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpringError {
    #[error("invalid spring parameters: {0}")]
    InvalidParams(String),
    #[error("trajectory has {states} states but {controls} controls (expected controls + 1)")]
    LengthMismatch { states: usize, controls: usize },
    #[error("grid search would enumerate {count} sequences (limit {limit})")]
    GridTooLarge { count: f64, limit: f64 },
    #[error("solver stopped after {iterations} iterations with residual {residual:e}")]
    NotConverged {
        best: ControlSequence,
        residual: f64,
        iterations: usize,
    },
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpringParams {
    pub mass: f64,
    pub stiffness: f64,
    pub dt: f64,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for SpringParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            stiffness: 5.0,
            dt: 0.1,
            u_min: 0.0,
            u_max: 20.0,
        }
    }
}

impl SpringParams {
    pub fn validate(&self) -> Result<(), SpringError> {
        let all_finite = [self.mass, self.stiffness, self.dt, self.u_min, self.u_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(SpringError::InvalidParams("parameters must be finite".into()));
        }
        if self.mass <= 0.0 || self.stiffness <= 0.0 || self.dt <= 0.0 {
            return Err(SpringError::InvalidParams(
                "mass, stiffness and dt must be positive".into(),
            ));
        }
        if self.u_min >= self.u_max {
            return Err(SpringError::InvalidParams("u_min must be below u_max".into()));
        }
        Ok(())
    }

    pub fn clamp(&self, u: f64) -> f64 {
        u.clamp(self.u_min, self.u_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpringState {
    pub x: f64,
    pub v: f64,
}

impl SpringState {
    pub fn new(x: f64, v: f64) -> Self {
        Self { x, v }
    }
}

/// Terminal-state weights, control penalty and goal of the planning cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub qx: f64,
    pub qv: f64,
    pub qu: f64,
    pub x_goal: f64,
    pub v_goal: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            qx: 100.0,
            qv: 10.0,
            qu: 0.01,
            x_goal: 2.0,
            v_goal: 0.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<(), SpringError> {
        if self.qx < 0.0 || self.qv < 0.0 || self.qu < 0.0 {
            return Err(SpringError::InvalidParams("weights must be nonnegative".into()));
        }
        if self.qx <= 0.0 && self.qv <= 0.0 {
            return Err(SpringError::InvalidParams(
                "at least one of qx, qv must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlSequence(pub Vec<f64>);

impl ControlSequence {
    pub fn zeros(horizon: usize) -> Self {
        Self(vec![0.0; horizon])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn clamped(&self, params: &SpringParams) -> Self {
        Self(self.0.iter().map(|&u| params.clamp(u)).collect())
    }

    pub fn within_bounds(&self, params: &SpringParams) -> bool {
        self.0.iter().all(|&u| u >= params.u_min && u <= params.u_max)
    }
}

/// One explicit-Euler step. The position update uses the velocity from
/// before the step.
pub fn step(state: SpringState, u: f64, params: &SpringParams) -> SpringState {
    let accel = (u - params.stiffness * state.x) / params.mass;
    SpringState {
        x: state.x + params.dt * state.v,
        v: state.v + params.dt * accel,
    }
}

/// States visited under `controls`, starting with `state` (length `H + 1`).
pub fn rollout(state: SpringState, controls: &[f64], params: &SpringParams) -> Vec<SpringState> {
    let mut traj = Vec::with_capacity(controls.len() + 1);
    traj.push(state);
    let mut s = state;
    for &u in controls {
        s = step(s, u, params);
        traj.push(s);
    }
    traj
}

/// Planning cost of a trajectory: weighted squared terminal error plus
/// `qu * sum(u^2)`.
pub fn cost(traj: &[SpringState], controls: &[f64], w: &CostWeights) -> Result<f64, SpringError> {
    if traj.len() != controls.len() + 1 {
        return Err(SpringError::LengthMismatch {
            states: traj.len(),
            controls: controls.len(),
        });
    }
    let end = traj[traj.len() - 1];
    let effort: f64 = controls.iter().map(|u| u * u).sum();
    Ok(w.qx * (end.x - w.x_goal).powi(2) + w.qv * (end.v - w.v_goal).powi(2) + w.qu * effort)
}

/// `cost(rollout(state, u), u)` in one call.
pub fn plan_cost(state: SpringState, controls: &[f64], params: &SpringParams, w: &CostWeights) -> f64 {
    let traj = rollout(state, controls, params);
    cost(&traj, controls, w).expect("rollout length is controls + 1")
}

/// The planning cost as an explicit quadratic in the control vector.
///
/// The dynamics are affine, so the terminal state is `c + G u` with `c`
/// the zero-control response and the rows of `G` the unit-impulse
/// responses from rest.
#[derive(Debug, Clone)]
pub struct QuadraticObjective {
    x_free: f64,
    v_free: f64,
    x_gain: Vec<f64>,
    v_gain: Vec<f64>,
    weights: CostWeights,
}

impl QuadraticObjective {
    pub fn new(state: SpringState, params: &SpringParams, weights: &CostWeights, horizon: usize) -> Self {
        let zero = vec![0.0; horizon];
        let free = *rollout(state, &zero, params).last().unwrap();
        let rest = SpringState::new(0.0, 0.0);
        let mut x_gain = Vec::with_capacity(horizon);
        let mut v_gain = Vec::with_capacity(horizon);
        let mut impulse = zero;
        for j in 0..horizon {
            impulse[j] = 1.0;
            let end = *rollout(rest, &impulse, params).last().unwrap();
            x_gain.push(end.x);
            v_gain.push(end.v);
            impulse[j] = 0.0;
        }
        Self {
            x_free: free.x,
            v_free: free.v,
            x_gain,
            v_gain,
            weights: *weights,
        }
    }

    pub fn horizon(&self) -> usize {
        self.x_gain.len()
    }

    fn terminal_errors(&self, u: &[f64]) -> (f64, f64) {
        let x = self.x_free + dot(&self.x_gain, u);
        let v = self.v_free + dot(&self.v_gain, u);
        (x - self.weights.x_goal, v - self.weights.v_goal)
    }

    pub fn value(&self, u: &[f64]) -> f64 {
        let (ex, ev) = self.terminal_errors(u);
        let w = &self.weights;
        w.qx * ex * ex + w.qv * ev * ev + w.qu * dot(u, u)
    }

    pub fn gradient(&self, u: &[f64]) -> Vec<f64> {
        let (ex, ev) = self.terminal_errors(u);
        let w = &self.weights;
        (0..u.len())
            .map(|j| 2.0 * (w.qx * ex * self.x_gain[j] + w.qv * ev * self.v_gain[j] + w.qu * u[j]))
            .collect()
    }

    /// Upper bound on the largest Hessian eigenvalue (trace of the rank-2 part).
    pub fn lipschitz(&self) -> f64 {
        let w = &self.weights;
        2.0 * (w.qx * dot(&self.x_gain, &self.x_gain) + w.qv * dot(&self.v_gain, &self.v_gain) + w.qu)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

/// Exact minimiser of the planning cost over `[u_min, u_max]^H`.
pub fn solve_exact(
    state: SpringState,
    params: &SpringParams,
    weights: &CostWeights,
    horizon: usize,
) -> Result<ControlSequence, SpringError> {
    solve_exact_with(state, params, weights, horizon, SolverOptions::default())
}

/// Projected gradient descent with step `1/L`; stops when the gradient
/// mapping norm `L * |u - P(u - grad/L)|` falls below the tolerance.
pub fn solve_exact_with(
    state: SpringState,
    params: &SpringParams,
    weights: &CostWeights,
    horizon: usize,
    options: SolverOptions,
) -> Result<ControlSequence, SpringError> {
    params.validate()?;
    weights.validate()?;
    if horizon == 0 {
        return Err(SpringError::InvalidParams("horizon must be at least 1".into()));
    }
    let objective = QuadraticObjective::new(state, params, weights, horizon);
    let lipschitz = objective.lipschitz();
    let mut u = vec![params.clamp(0.0); horizon];
    let mut residual = f64::INFINITY;
    for _ in 0..options.max_iterations {
        let grad = objective.gradient(&u);
        let next: Vec<f64> = u
            .iter()
            .zip(&grad)
            .map(|(ui, gi)| params.clamp(ui - gi / lipschitz))
            .collect();
        residual = lipschitz * u.iter().zip(&next).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        u = next;
        if residual < options.tolerance {
            return Ok(ControlSequence(u));
        }
    }
    Err(SpringError::NotConverged {
        best: ControlSequence(u),
        residual,
        iterations: options.max_iterations,
    })
}

/// Upper limit on the number of sequences `grid_oracle` enumerates.
pub const GRID_LIMIT: f64 = 1e7;

/// Exhaustive minimum of the planning cost over a uniform control grid.
pub fn grid_oracle(
    state: SpringState,
    params: &SpringParams,
    weights: &CostWeights,
    horizon: usize,
    grid_step: f64,
) -> Result<ControlSequence, SpringError> {
    params.validate()?;
    if grid_step.is_nan() || grid_step <= 0.0 {
        return Err(SpringError::InvalidParams("grid_step must be positive".into()));
    }
    let points = ((params.u_max - params.u_min) / grid_step + 1e-9).floor() as usize + 1;
    let count = (points as f64).powi(horizon as i32);
    if count > GRID_LIMIT {
        return Err(SpringError::GridTooLarge {
            count,
            limit: GRID_LIMIT,
        });
    }
    let grid: Vec<f64> = (0..points)
        .map(|i| (params.u_min + i as f64 * grid_step).min(params.u_max))
        .collect();

    let mut digits = vec![0usize; horizon];
    let mut candidate = vec![grid[0]; horizon];
    let mut best = candidate.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        for (slot, &d) in candidate.iter_mut().zip(&digits) {
            *slot = grid[d];
        }
        let c = plan_cost(state, &candidate, params, weights);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&candidate);
        }
        // odometer increment
        let mut pos = 0;
        loop {
            if pos == horizon {
                return Ok(ControlSequence(best));
            }
            digits[pos] += 1;
            if digits[pos] < points {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Scores control sequences with the planning cost. Sequences of the wrong
/// length or outside the control bounds are infeasible.
#[derive(Debug, Clone)]
pub struct SpringEvaluator {
    pub params: SpringParams,
    pub weights: CostWeights,
    pub horizon: usize,
    /// When set, the goal counts as reached once both position and velocity
    /// errors are below this tolerance.
    pub goal_tolerance: Option<f64>,
}

impl SpringEvaluator {
    pub fn new(params: SpringParams, weights: CostWeights, horizon: usize) -> Self {
        Self {
            params,
            weights,
            horizon,
            goal_tolerance: None,
        }
    }
}

impl Evaluator<SpringState, ControlSequence> for SpringEvaluator {
    type Violation = String;

    fn evaluate(&self, state: &SpringState, plan: &ControlSequence) -> Evaluation<String> {
        let mut violations = Vec::new();
        if plan.len() != self.horizon {
            violations.push(format!(
                "sequence has {} controls, expected {}",
                plan.len(),
                self.horizon
            ));
        }
        if !plan.within_bounds(&self.params) {
            violations.push(format!(
                "controls must lie in [{}, {}]",
                self.params.u_min, self.params.u_max
            ));
        }
        if plan.0.iter().any(|u| !u.is_finite()) {
            violations.push("controls must be finite".to_string());
        }
        let cost = if violations.is_empty() {
            plan_cost(*state, plan.as_slice(), &self.params, &self.weights)
        } else {
            f64::INFINITY
        };
        Evaluation { cost, violations }
    }

    fn unparseable(&self, reason: &str) -> String {
        format!("unparseable control sequence: {reason}")
    }

    fn goal_reached(&self, state: &SpringState) -> bool {
        self.goal_tolerance.is_some_and(|tol| {
            (state.x - self.weights.x_goal).abs() < tol && (state.v - self.weights.v_goal).abs() < tol
        })
    }
}

/// Additive Gaussian velocity disturbance applied after every step.
#[derive(Debug, Clone)]
pub struct Disturbance {
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl Disturbance {
    pub fn gaussian(std_dev: f64, seed: u64) -> Self {
        Self {
            noise: Normal::new(0.0, std_dev.abs()).expect("finite std dev"),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

/// Applies the executed prefix of the selected plan. A sentinel leaves the
/// state unchanged.
#[derive(Debug, Clone)]
pub struct SpringSimulator {
    pub params: SpringParams,
    pub disturbance: Option<Disturbance>,
    /// Every applied `(state_before, u)` pair, in order.
    pub applied: Vec<(SpringState, f64)>,
}

impl SpringSimulator {
    pub fn new(params: SpringParams) -> Self {
        Self {
            params,
            disturbance: None,
            applied: Vec::new(),
        }
    }

    pub fn with_disturbance(mut self, disturbance: Disturbance) -> Self {
        self.disturbance = Some(disturbance);
        self
    }
}

impl<V> Simulator<SpringState, ControlSequence, V> for SpringSimulator {
    fn advance(&mut self, state: &SpringState, selected: &ScoredPlan<ControlSequence, V>, steps: usize) -> SpringState {
        let Some(plan) = &selected.plan else {
            return *state;
        };
        let mut s = *state;
        for &u in plan.as_slice().iter().take(steps) {
            self.applied.push((s, u));
            s = step(s, u, &self.params);
            if let Some(d) = self.disturbance.as_mut() {
                s.v += d.noise.sample(&mut d.rng);
            }
        }
        s
    }
}

/// One closed-loop run.
#[derive(Debug, Clone)]
pub struct SpringRun {
    pub records: Vec<RoundRecord<SpringState, ControlSequence, String>>,
    /// Every applied `(state_before, u)` pair, in order.
    pub applied: Vec<(SpringState, f64)>,
    pub final_state: SpringState,
    /// Sum of the selected plans' planning costs.
    pub accumulated_cost: f64,
}

impl SpringRun {
    /// Applied steps grouped by the round that produced them.
    pub fn steps_per_round(&self, execute_steps: usize) -> Vec<usize> {
        self.records
            .iter()
            .map(|r| r.selected.plan.as_ref().map_or(0, |p| p.len().min(execute_steps)))
            .collect()
    }
}

/// Receding-horizon control of the spring from `initial`.
pub fn run_spring_mpc<Sa>(
    problem: &PlanningProblem,
    sampler: &mut Sa,
    params: &SpringParams,
    weights: &CostWeights,
    initial: SpringState,
    disturbance: Option<Disturbance>,
) -> Result<SpringRun, SpringError>
where
    Sa: PlanSampler<SpringState, Plan = ControlSequence>,
{
    params.validate()?;
    weights.validate()?;
    let evaluator = SpringEvaluator::new(*params, *weights, problem.horizon);
    let mut simulator = SpringSimulator::new(*params);
    simulator.disturbance = disturbance;
    let records = receding_horizon_run(problem, sampler, &evaluator, &mut simulator, initial)?;
    let final_state = records.last().map_or(initial, |r| r.state_after);
    Ok(SpringRun {
        accumulated_cost: accumulated_cost(&records),
        records,
        applied: simulator.applied,
        final_state,
    })
}

/// Uniformly sampled states for the ratio experiment.
pub fn sample_states(count: usize, x_range: (f64, f64), v_range: (f64, f64), seed: u64) -> Vec<SpringState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            SpringState::new(
                rng.random_range(x_range.0..=x_range.1),
                rng.random_range(v_range.0..=v_range.1),
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioRow {
    pub state_index: usize,
    pub x: f64,
    pub v: f64,
    pub k: usize,
    pub llmpc_cost: f64,
    pub mpc_cost: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatioTable {
    pub k_values: Vec<usize>,
    pub rows: Vec<RatioRow>,
    /// Mean ratio per entry of `k_values`.
    pub means: Vec<f64>,
    /// States skipped because the exact cost was numerically zero.
    pub skipped: Vec<usize>,
}

/// Exact costs below this are treated as zero and the state is skipped.
pub const RATIO_DIVISION_GUARD: f64 = 1e-12;

/// Best-of-K cost over exact cost, per state and per K.
///
/// The sampler is called with the state index as its round, so a seeded
/// sampler sees the same stream for a state regardless of K.
pub fn ratio_experiment<Sa>(
    states: &[SpringState],
    k_values: &[usize],
    sampler: &mut Sa,
    params: &SpringParams,
    weights: &CostWeights,
    horizon: usize,
) -> Result<RatioTable, SpringError>
where
    Sa: PlanSampler<SpringState, Plan = ControlSequence>,
{
    let evaluator = SpringEvaluator::new(*params, *weights, horizon);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for (index, state) in states.iter().enumerate() {
        let exact = solve_exact(*state, params, weights, horizon)?;
        let mpc_cost = plan_cost(*state, exact.as_slice(), params, weights);
        if mpc_cost < RATIO_DIVISION_GUARD {
            skipped.push(index);
            continue;
        }
        for &k in k_values {
            let candidates = sampler.sample(state, index, k)?;
            let scored = crate::mpc::score_candidates(&evaluator, state, candidates);
            let llmpc_cost = crate::mpc::select_best(&scored)
                .map(|s| s.cost)
                .unwrap_or(f64::INFINITY);
            rows.push(RatioRow {
                state_index: index,
                x: state.x,
                v: state.v,
                k,
                llmpc_cost,
                mpc_cost,
                ratio: llmpc_cost / mpc_cost,
            });
        }
    }
    let means = k_values
        .iter()
        .map(|&k| {
            let ratios: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.ratio).collect();
            if ratios.is_empty() {
                f64::NAN
            } else {
                ratios.iter().sum::<f64>() / ratios.len() as f64
            }
        })
        .collect();
    Ok(RatioTable {
        k_values: k_values.to_vec(),
        rows,
        means,
        skipped,
    })
}
