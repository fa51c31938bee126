use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use regex::Regex;
use thiserror::Error;

use super::template::{template, TemplateError};
use crate::gateway::{ChatRequest, RequestSettings, TextSampler};
use crate::mpc::{PlanSampler, SamplerError};
use crate::spring::{solve_exact, ControlSequence, CostWeights, SpringError, SpringParams, SpringState};

/// Numbers as a Python f-string would show them for integral values, and
/// never as `-0`.
fn fmt_num(v: f64) -> String {
    format!("{}", v + 0.0)
}

/// Control-domain prompt asking for `samples` candidate sequences.
pub fn render_spring_prompt(
    state: &SpringState,
    params: &SpringParams,
    weights: &CostWeights,
    horizon: usize,
    samples: usize,
    settings: &RequestSettings,
) -> Result<ChatRequest, TemplateError> {
    let values = BTreeMap::from([
        ("m", fmt_num(params.mass)),
        ("k_spring", fmt_num(params.stiffness)),
        ("dt", fmt_num(params.dt)),
        ("x_init", fmt_num(state.x)),
        ("v_init", fmt_num(state.v)),
        ("x_goal", fmt_num(weights.x_goal)),
        ("H", horizon.to_string()),
        ("spring_force", fmt_num(-params.stiffness * state.x)),
        ("last_index", horizon.saturating_sub(1).to_string()),
        ("K", samples.to_string()),
        ("u_min", fmt_num(params.u_min)),
        ("u_max", fmt_num(params.u_max)),
    ]);
    let user = template("spring_user")?.render(&values)?;
    let system = template("spring_system")?.render(&BTreeMap::new())?;
    Ok(ChatRequest::new(system, user, settings))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpringDecodeError {
    #[error("no brace-delimited object in reply")]
    NoObject,
    #[error("object is not parseable: {0}")]
    Invalid(String),
    #[error("no usable sequence in reply ({0})")]
    NoSequences(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpringDecode {
    pub sequences: Vec<ControlSequence>,
    /// Entries that were dropped or adjusted.
    pub warnings: Vec<String>,
}

fn suffix_number(key: &str) -> Option<u64> {
    key.rsplit('_').next().and_then(|s| s.parse().ok())
}

/// Decode a `{"sequence_1": [...], ...}` reply.
///
/// Takes the text between the first `{` and the last `}`, so code fences
/// and surrounding prose are ignored; Python-style single quotes and
/// trailing commas are tolerated. Sequences of the wrong length are
/// dropped with a warning; entries are clamped to the control bounds.
pub fn decode_spring_response(
    text: &str,
    horizon: usize,
    params: &SpringParams,
) -> Result<SpringDecode, SpringDecodeError> {
    let start = text.find('{').ok_or(SpringDecodeError::NoObject)?;
    let end = text.rfind('}').ok_or(SpringDecodeError::NoObject)?;
    if end < start {
        return Err(SpringDecodeError::NoObject);
    }
    let block = &text[start..=end];
    let object: serde_json::Map<String, serde_json::Value> = match serde_json::from_str(block) {
        Ok(o) => o,
        Err(first) => {
            let trailing = Regex::new(r",\s*([}\]])").expect("static regex");
            let relaxed = trailing.replace_all(&block.replace('\'', "\""), "$1").into_owned();
            serde_json::from_str(&relaxed).map_err(|_| SpringDecodeError::Invalid(first.to_string()))?
        }
    };

    let mut entries: Vec<(String, serde_json::Value)> = object.into_iter().collect();
    entries.sort_by(|(a, _), (b, _)| match (suffix_number(a), suffix_number(b)) {
        (Some(x), Some(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(b),
    });

    let mut sequences = Vec::new();
    let mut warnings = Vec::new();
    for (key, value) in entries {
        let Some(items) = value.as_array() else {
            warnings.push(format!("{key}: not a list"));
            continue;
        };
        let numbers: Option<Vec<f64>> = items.iter().map(|v| v.as_f64()).collect();
        let Some(numbers) = numbers else {
            warnings.push(format!("{key}: non-numeric entry"));
            continue;
        };
        if numbers.len() != horizon {
            warnings.push(format!("{key}: length {} instead of {horizon}", numbers.len()));
            continue;
        }
        let seq = ControlSequence(numbers);
        if !seq.within_bounds(params) {
            warnings.push(format!("{key}: clamped to [{}, {}]", params.u_min, params.u_max));
        }
        sequences.push(seq.clamped(params));
    }
    if sequences.is_empty() {
        return Err(SpringDecodeError::NoSequences(warnings.join("; ")));
    }
    Ok(SpringDecode { sequences, warnings })
}

/// Inverse of [`decode_spring_response`] for in-bounds sequences.
pub fn format_spring_sequences(sequences: &[ControlSequence]) -> String {
    let body: Vec<String> = sequences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            format!(
                "  \"sequence_{}\": {}",
                i + 1,
                serde_json::to_string(&s.0).expect("finite floats serialize")
            )
        })
        .collect();
    format!("{{\n{}\n}}", body.join(",\n"))
}

/// Exact optimum plus Gaussian perturbations of it, clamped to bounds.
///
/// Sample `i` depends only on `seed` and `i`, so the batch for a larger
/// count extends the batch for a smaller one. With `include_optimum` the
/// first sample is the unperturbed optimum.
#[allow(clippy::too_many_arguments)]
pub fn mock_noisy_optimum_sampler(
    state: &SpringState,
    params: &SpringParams,
    weights: &CostWeights,
    horizon: usize,
    count: usize,
    noise_scale: f64,
    seed: u64,
    include_optimum: bool,
) -> Result<Vec<ControlSequence>, SpringError> {
    let exact = solve_exact(*state, params, weights, horizon)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        if i == 0 && include_optimum {
            out.push(exact.clone());
            continue;
        }
        let perturbed = exact
            .0
            .iter()
            .map(|&u| {
                let z: f64 = StandardNormal.sample(&mut rng);
                params.clamp(u + noise_scale * z)
            })
            .collect();
        out.push(ControlSequence(perturbed));
    }
    Ok(out)
}

fn round_seed(seed: u64, round: usize) -> u64 {
    seed ^ (round as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Offline stand-in for a stochastic plan source.
#[derive(Debug, Clone)]
pub struct MockNoisySampler {
    pub params: SpringParams,
    pub weights: CostWeights,
    pub horizon: usize,
    pub noise_scale: f64,
    pub seed: u64,
    pub include_optimum: bool,
}

impl PlanSampler<SpringState> for MockNoisySampler {
    type Plan = ControlSequence;

    fn sample(
        &mut self,
        state: &SpringState,
        round: usize,
        count: usize,
    ) -> Result<Vec<Result<ControlSequence, String>>, SamplerError> {
        mock_noisy_optimum_sampler(
            state,
            &self.params,
            &self.weights,
            self.horizon,
            count,
            self.noise_scale,
            round_seed(self.seed, round),
            self.include_optimum,
        )
        .map(|seqs| seqs.into_iter().map(Ok).collect())
        .map_err(|e| SamplerError(e.to_string()))
    }
}

/// Always proposes the exact optimum.
#[derive(Debug, Clone)]
pub struct OracleSampler {
    pub params: SpringParams,
    pub weights: CostWeights,
    pub horizon: usize,
}

impl PlanSampler<SpringState> for OracleSampler {
    type Plan = ControlSequence;

    fn sample(
        &mut self,
        state: &SpringState,
        _round: usize,
        count: usize,
    ) -> Result<Vec<Result<ControlSequence, String>>, SamplerError> {
        let exact =
            solve_exact(*state, &self.params, &self.weights, self.horizon).map_err(|e| SamplerError(e.to_string()))?;
        Ok(vec![Ok(exact); count])
    }
}

/// Prompts a text model for `K` sequences in one reply and decodes them.
pub struct LlmSpringSampler<T> {
    pub text: T,
    pub params: SpringParams,
    pub weights: CostWeights,
    pub horizon: usize,
    pub settings: RequestSettings,
    /// Decoder warnings per round.
    pub warnings: Vec<(usize, Vec<String>)>,
}

impl<T: TextSampler> LlmSpringSampler<T> {
    pub fn new(text: T, params: SpringParams, weights: CostWeights, horizon: usize, settings: RequestSettings) -> Self {
        Self {
            text,
            params,
            weights,
            horizon,
            settings,
            warnings: Vec::new(),
        }
    }
}

impl<T: TextSampler> PlanSampler<SpringState> for LlmSpringSampler<T> {
    type Plan = ControlSequence;

    fn sample(
        &mut self,
        state: &SpringState,
        round: usize,
        count: usize,
    ) -> Result<Vec<Result<ControlSequence, String>>, SamplerError> {
        let request = render_spring_prompt(state, &self.params, &self.weights, self.horizon, count, &self.settings)
            .map_err(|e| SamplerError(e.to_string()))?;
        let replies = self.text.sample_texts(&request, 1)?;
        let Some(reply) = replies.first() else {
            return Ok(vec![Err("empty reply".to_string())]);
        };
        match decode_spring_response(reply, self.horizon, &self.params) {
            Ok(decoded) => {
                if !decoded.warnings.is_empty() {
                    self.warnings.push((round, decoded.warnings));
                }
                Ok(decoded.sequences.into_iter().take(count).map(Ok).collect())
            }
            Err(e) => Ok(vec![Err(e.to_string())]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spring::plan_cost;
    use proptest::prelude::*;

    fn reference_request(k: usize) -> ChatRequest {
        render_spring_prompt(
            &SpringState::new(1.0, 0.0),
            &SpringParams::default(),
            &CostWeights::default(),
            3,
            k,
            &RequestSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn prompt_carries_bounds_force_and_keys() {
        let r = reference_request(5);
        assert!(r.user_prompt.contains("Controls should be between 0 and 20"));
        assert!(r.user_prompt.contains("The current spring force is -5"));
        assert!(r.user_prompt.contains("Parameters: m=1, k_spring=5, dt=0.1"));
        assert!(r.user_prompt.contains("Current state: x=1, v=0"));
        assert!(r.user_prompt.contains("Please propose 5 candidate control sequences"));
        assert!(r
            .user_prompt
            .contains("\"sequence_1\", \"sequence_2\", ..., \"sequence_5\""));
        assert!(r.user_prompt.contains("u = [u_0, u_1, ..., u_2]"));
        assert!(r.user_prompt.contains("[u_0, u_1, ..., u_{H-1}]"));
        assert!(!r.user_prompt.contains("{K}"));
    }

    #[test]
    fn zero_position_force_has_no_sign() {
        let r = render_spring_prompt(
            &SpringState::new(0.0, 0.0),
            &SpringParams::default(),
            &CostWeights::default(),
            3,
            1,
            &RequestSettings::default(),
        )
        .unwrap();
        assert!(r.user_prompt.contains("spring force is 0\n"));
    }

    #[test]
    fn decodes_plain_object() {
        let d = decode_spring_response(
            r#"{"sequence_1":[1,2,3],"sequence_2":[0,0,0]}"#,
            3,
            &SpringParams::default(),
        )
        .unwrap();
        assert_eq!(
            d.sequences,
            vec![ControlSequence(vec![1.0, 2.0, 3.0]), ControlSequence(vec![0.0; 3])]
        );
    }

    #[test]
    fn fenced_reply_with_commentary_matches_bare() {
        let bare = "{\"sequence_1\": [10.5, 8, 4], \"sequence_2\": [12, 6.25, 3]}";
        let fenced = format!("Here are my proposals:\n```python\n{bare}\n```\nThese should move the mass toward x=2.");
        let p = SpringParams::default();
        assert_eq!(
            decode_spring_response(bare, 3, &p).unwrap(),
            decode_spring_response(&fenced, 3, &p).unwrap()
        );
    }

    #[test]
    fn python_quotes_and_trailing_commas() {
        let d = decode_spring_response("{'sequence_1': [1, 2, 3],}", 3, &SpringParams::default()).unwrap();
        assert_eq!(d.sequences.len(), 1);
    }

    #[test]
    fn clamps_and_drops() {
        let d = decode_spring_response(
            r#"{"sequence_1":[25,1,-3],"sequence_2":[1,2],"sequence_3":["a",1,2]}"#,
            3,
            &SpringParams::default(),
        )
        .unwrap();
        assert_eq!(d.sequences, vec![ControlSequence(vec![20.0, 1.0, 0.0])]);
        assert_eq!(d.warnings.len(), 3);
    }

    #[test]
    fn numeric_key_order() {
        let body = (1..=11)
            .map(|i| format!("\"sequence_{i}\": [{i}, 0, 0]"))
            .collect::<Vec<_>>()
            .join(", ");
        let d = decode_spring_response(&format!("{{{body}}}"), 3, &SpringParams::default()).unwrap();
        let firsts: Vec<f64> = d.sequences.iter().map(|s| s.0[0]).collect();
        assert_eq!(firsts, (1..=11).map(f64::from).collect::<Vec<_>>());
    }

    #[test]
    fn unparseable_replies() {
        let p = SpringParams::default();
        assert_eq!(
            decode_spring_response("no dict here", 3, &p),
            Err(SpringDecodeError::NoObject)
        );
        assert!(matches!(
            decode_spring_response("{not json at all}", 3, &p),
            Err(SpringDecodeError::Invalid(_))
        ));
        assert!(matches!(
            decode_spring_response(r#"{"sequence_1":[1]}"#, 3, &p),
            Err(SpringDecodeError::NoSequences(_))
        ));
    }

    #[test]
    fn mock_noise_zero_gives_identical_optima() {
        let s = SpringState::new(1.0, 0.0);
        let (p, w) = (SpringParams::default(), CostWeights::default());
        let seqs = mock_noisy_optimum_sampler(&s, &p, &w, 3, 4, 0.0, 1, false).unwrap();
        let exact = solve_exact(s, &p, &w, 3).unwrap();
        assert!(seqs.iter().all(|q| *q == exact));
        let one = mock_noisy_optimum_sampler(&s, &p, &w, 3, 1, 3.0, 1, true).unwrap();
        assert_eq!(one, vec![exact]);
    }

    #[test]
    fn mock_is_seeded() {
        let s = SpringState::new(-1.0, 0.5);
        let (p, w) = (SpringParams::default(), CostWeights::default());
        let a = mock_noisy_optimum_sampler(&s, &p, &w, 3, 5, 2.0, 42, true).unwrap();
        let b = mock_noisy_optimum_sampler(&s, &p, &w, 3, 5, 2.0, 42, true).unwrap();
        let c = mock_noisy_optimum_sampler(&s, &p, &w, 3, 5, 2.0, 43, true).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn llm_sampler_turns_garbage_into_sentinel_candidate() {
        let mut sampler = LlmSpringSampler::new(
            crate::gateway::ScriptedSampler::new(["I cannot help with that."]),
            SpringParams::default(),
            CostWeights::default(),
            3,
            RequestSettings::default(),
        );
        let out = sampler.sample(&SpringState::new(1.0, 0.0), 0, 5).unwrap();
        assert_eq!(out.len(), 1);
        assert!(out[0].is_err());
    }

    proptest! {
        #[test]
        fn format_then_decode_is_identity(seqs in prop::collection::vec(prop::collection::vec(0.0f64..=20.0, 3), 1..12)) {
            let seqs: Vec<ControlSequence> = seqs.into_iter().map(ControlSequence).collect();
            let text = format_spring_sequences(&seqs);
            let decoded = decode_spring_response(&text, 3, &SpringParams::default()).unwrap();
            prop_assert!(decoded.warnings.is_empty());
            prop_assert_eq!(decoded.sequences, seqs);
        }

        #[test]
        fn nested_batches_best_cost_non_increasing(seed in 0u64..1000, x in -2.0f64..4.0, v in -2.0f64..2.0) {
            let s = SpringState::new(x, v);
            let (p, w) = (SpringParams::default(), CostWeights::default());
            let big = mock_noisy_optimum_sampler(&s, &p, &w, 3, 15, 2.0, seed, false).unwrap();
            let mut last = f64::INFINITY;
            for k in 1..=15 {
                let small = mock_noisy_optimum_sampler(&s, &p, &w, 3, k, 2.0, seed, false).unwrap();
                prop_assert_eq!(&small[..], &big[..k]);
                let best = small.iter().map(|q| plan_cost(s, q.as_slice(), &p, &w)).fold(f64::INFINITY, f64::min);
                prop_assert!(best <= last);
                last = best;
            }
        }
    }
}
