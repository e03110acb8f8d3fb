//! Clipped policy-gradient fine-tuning with n-step advantages.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::controllers::{rule_expert, RuleParams};
use crate::encode::{encode_phase, encode_state, PhaseMatrix, StateTensor};
use crate::error::{config_err, Error, Result};
use crate::nn::{clamp_mask, clamp_prob, Adam, NetOutput, Network, Optimizer, Real, Tape};
use crate::sim::{MetricRow, Simulation};

#[derive(Debug, Clone, PartialEq)]
pub struct RlConfig {
    pub gamma: f64,
    /// Value-loss weight.
    pub alpha1: f64,
    /// Entropy weight.
    pub alpha2: f64,
    pub eps_clip: f64,
    /// Steps collected between updates.
    pub n_max: usize,
    /// Gradient steps per collected batch.
    pub epochs: usize,
    pub lr: f64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.6,
            alpha1: 1.0,
            alpha2: 0.1,
            eps_clip: 0.2,
            n_max: 8,
            epochs: 1,
            lr: 1e-4,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(config_err("gamma must lie in [0, 1]"));
        }
        if !(self.eps_clip > 0.0 && self.eps_clip < 1.0) {
            return Err(config_err("eps_clip must lie in (0, 1)"));
        }
        if self.n_max == 0 || self.epochs == 0 {
            return Err(config_err("n_max and epochs must be positive"));
        }
        if self.lr < 0.0 || self.alpha1 < 0.0 || self.alpha2 < 0.0 {
            return Err(config_err("lr and loss weights must be non-negative"));
        }
        Ok(())
    }
}

/// Drop in the total low-speed vehicle count across one step.
pub fn reward(before: u64, after: u64) -> f64 {
    before as f64 - after as f64
}

/// n-step returns for every buffered step.
///
/// `rewards[t]` follows the action at `t`; `values` holds `v(s_t)` for each
/// buffered step plus the bootstrap value of the state after the last one.
/// Row `t` holds `G_1 .. G_{L-t}`.
pub fn n_step_returns(rewards: &[f64], values: &[f64], gamma: f64) -> Result<Vec<Vec<f64>>> {
    let len = rewards.len();
    if values.len() != len + 1 {
        return Err(Error::Shape {
            expected: format!("{} values", len + 1),
            actual: values.len().to_string(),
        });
    }
    Ok((0..len)
        .map(|t| {
            let mut discounted = 0.0;
            let mut g = 1.0;
            (1..=len - t)
                .map(|n| {
                    discounted += g * rewards[t + n - 1];
                    g *= gamma;
                    discounted + g * values[t + n]
                })
                .collect()
        })
        .collect())
}

/// `A_n(t) = G_n(t) - v(s_t)` for every horizon.
pub fn n_step_advantages(rewards: &[f64], values: &[f64], gamma: f64) -> Result<Vec<Vec<f64>>> {
    let returns = n_step_returns(rewards, values, gamma)?;
    Ok(returns
        .into_iter()
        .enumerate()
        .map(|(t, row)| row.into_iter().map(|g| g - values[t]).collect())
        .collect())
}

/// Log-probability of a joint action under independent Bernoulli units.
pub fn log_prob(probs: &[f64], action: &[bool]) -> f64 {
    probs
        .iter()
        .zip(action)
        .map(|(&p, &a)| {
            let p = clamp_prob(p);
            if a {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

pub fn joint_ratio(new: &[f64], old: &[f64], action: &[bool]) -> f64 {
    (log_prob(new, action) - log_prob(old, action)).exp()
}

pub fn clipped_term(ratio: f64, adv: f64, eps: f64) -> f64 {
    (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv)
}

/// Derivative of [`clipped_term`] with respect to the ratio.
pub fn clipped_term_grad(ratio: f64, adv: f64, eps: f64) -> f64 {
    if ratio * adv <= ratio.clamp(1.0 - eps, 1.0 + eps) * adv {
        adv
    } else {
        0.0
    }
}

/// Batch mean of the clipped surrogate.
pub fn ppo_surrogate(ratios: &[f64], advantages: &[f64], eps: f64) -> Result<f64> {
    if ratios.is_empty() || ratios.len() != advantages.len() {
        return Err(Error::Shape {
            expected: "equal non-empty ratio and advantage lists".into(),
            actual: format!("{} vs {}", ratios.len(), advantages.len()),
        });
    }
    Ok(ratios
        .iter()
        .zip(advantages)
        .map(|(&r, &a)| clipped_term(r, a, eps))
        .sum::<f64>()
        / ratios.len() as f64)
}

/// Mean squared advantage over the horizons of one step.
pub fn value_loss(advantages: &[f64]) -> Result<f64> {
    if advantages.is_empty() {
        return Err(Error::Empty("advantage list"));
    }
    Ok(advantages.iter().map(|a| a * a).sum::<f64>() / advantages.len() as f64)
}

pub fn bernoulli_entropy(p: f64) -> f64 {
    let p = clamp_prob(p);
    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
}

/// Entropy of the joint switch distribution.
pub fn entropy_bonus(probs: &[f64]) -> f64 {
    probs.iter().map(|&p| bernoulli_entropy(p)).sum()
}

/// The maximised objective.
pub fn total_objective(cfg: &RlConfig, surrogate: f64, vloss: f64, entropy: f64) -> f64 {
    surrogate - cfg.alpha1 * vloss + cfg.alpha2 * entropy
}

/// One buffered step prepared for the update. Targets and advantage are
/// computed from values recorded at acting time and treated as constants.
#[derive(Debug, Clone)]
pub struct PpoSample {
    pub state: StateTensor,
    pub phase: PhaseMatrix,
    pub action: Vec<bool>,
    pub old_probs: Vec<f64>,
    /// `G_n` for every available horizon.
    pub returns: Vec<f64>,
    /// Mean of `A_n` over horizons.
    pub advantage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ObjectiveParts {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub objective: f64,
}

/// Objective terms and the gradient of `-objective / batch` with respect to
/// the sample's outputs.
fn sample_terms(out: &NetOutput, s: &PpoSample, cfg: &RlConfig, batch: usize) -> (ObjectiveParts, Vec<f64>, f64) {
    let ratio = joint_ratio(&out.probs, &s.old_probs, &s.action);
    let surrogate = clipped_term(ratio, s.advantage, cfg.eps_clip);
    let dsurr_dr = clipped_term_grad(ratio, s.advantage, cfg.eps_clip);
    let vloss = s.returns.iter().map(|g| (g - out.value).powi(2)).sum::<f64>() / s.returns.len() as f64;
    let dv = -2.0 * s.returns.iter().map(|g| g - out.value).sum::<f64>() / s.returns.len() as f64;
    let entropy = entropy_bonus(&out.probs);
    let scale = 1.0 / batch as f64;
    let d_probs = out
        .probs
        .iter()
        .zip(&s.action)
        .map(|(&p, &a)| {
            let pc = clamp_prob(p);
            let mask = clamp_mask(p);
            let dlog = if a { 1.0 / pc } else { -1.0 / (1.0 - pc) };
            let dent = ((1.0 - pc) / pc).ln();
            -scale * mask * (dsurr_dr * ratio * dlog + cfg.alpha2 * dent)
        })
        .collect();
    let d_value = scale * cfg.alpha1 * dv;
    let parts = ObjectiveParts {
        surrogate,
        value_loss: vloss,
        entropy,
        objective: total_objective(cfg, surrogate, vloss, entropy),
    };
    (parts, d_probs, d_value)
}

fn mean_parts(parts: &[ObjectiveParts]) -> ObjectiveParts {
    let n = parts.len() as f64;
    let mut m = ObjectiveParts::default();
    for p in parts {
        m.surrogate += p.surrogate / n;
        m.value_loss += p.value_loss / n;
        m.entropy += p.entropy / n;
        m.objective += p.objective / n;
    }
    m
}

/// Batch-mean objective terms (forward only).
pub fn ppo_objective<T: Real>(net: &Network<T>, batch: &[PpoSample], cfg: &RlConfig) -> Result<ObjectiveParts> {
    if batch.is_empty() {
        return Err(Error::Empty("update batch"));
    }
    let mut parts = Vec::with_capacity(batch.len());
    for s in batch {
        let out = net.forward(&s.state, &s.phase)?;
        parts.push(sample_terms(&out, s, cfg, batch.len()).0);
    }
    Ok(mean_parts(&parts))
}

/// Accumulates the gradient of the minimised loss `-objective`. `tapes`, when
/// given, must come from the current parameters.
pub fn ppo_backward<T: Real>(
    net: &mut Network<T>,
    batch: &[PpoSample],
    tapes: Option<&[Tape<T>]>,
    cfg: &RlConfig,
) -> Result<ObjectiveParts> {
    if batch.is_empty() {
        return Err(Error::Empty("update batch"));
    }
    let mut parts = Vec::with_capacity(batch.len());
    for (k, s) in batch.iter().enumerate() {
        let fresh;
        let tape = match tapes {
            Some(t) => &t[k],
            None => {
                fresh = net.forward_tape(&s.state, &s.phase)?;
                &fresh
            }
        };
        let (p, d_probs, d_value) = sample_terms(&tape.output, s, cfg, batch.len());
        net.backward(tape, &d_probs, d_value)?;
        parts.push(p);
    }
    Ok(mean_parts(&parts))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RlEpisodeReport {
    pub cumulative_reward: f64,
    pub mean_objective: f64,
    pub mean_value_loss: f64,
    pub mean_entropy: f64,
    /// Agreement of the sampled actions with the rule expert.
    pub acc_vs_expert: f64,
    pub updates: usize,
    pub metrics: MetricRow,
}

struct Buffered {
    sample: PpoSample,
    tape: Tape<f32>,
    value: f64,
    reward: f64,
}

/// Runs one episode, updating the network every `cfg.n_max` steps and at the
/// end of the episode. Old-policy probabilities are the ones recorded while
/// acting, which equal the synchronised copy's outputs.
pub fn rl_episode(
    sim: &mut Simulation,
    net: &mut Network<f32>,
    opt: &mut Adam,
    cfg: &RlConfig,
    rule: &RuleParams,
    rng: &mut ChaCha8Rng,
) -> Result<RlEpisodeReport> {
    let mut report = sim.observe();
    let mut buffer: Vec<Buffered> = Vec::with_capacity(cfg.n_max);
    let mut cumulative = 0.0;
    let mut agree = 0usize;
    let mut decisions = 0usize;
    let mut updates = Vec::new();
    while !sim.done() {
        let state = encode_state(sim);
        let phase = encode_phase(sim);
        let tape = net.forward_tape(&state, &phase)?;
        let action: Vec<bool> = tape.output.probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
        let expert = rule_expert(&report.groups, rule)?;
        agree += action.iter().zip(&expert).filter(|(a, e)| a == e).count();
        decisions += action.len();
        let before = report.total_low_speed();
        report = sim.step(&action)?;
        let r = reward(before, report.total_low_speed());
        cumulative += r;
        buffer.push(Buffered {
            sample: PpoSample {
                state,
                phase,
                action,
                old_probs: tape.output.probs.clone(),
                returns: Vec::new(),
                advantage: 0.0,
            },
            value: tape.output.value,
            tape,
            reward: r,
        });
        if buffer.len() == cfg.n_max || sim.done() {
            let bootstrap = net.forward(&encode_state(sim), &encode_phase(sim))?.value;
            updates.push(update(net, opt, cfg, std::mem::take(&mut buffer), bootstrap)?);
        }
    }
    let parts = mean_parts(&updates);
    Ok(RlEpisodeReport {
        cumulative_reward: cumulative,
        mean_objective: parts.objective,
        mean_value_loss: parts.value_loss,
        mean_entropy: parts.entropy,
        acc_vs_expert: if decisions > 0 {
            agree as f64 / decisions as f64
        } else {
            1.0
        },
        updates: updates.len(),
        metrics: sim.metrics_snapshot(),
    })
}

fn update(
    net: &mut Network<f32>,
    opt: &mut Adam,
    cfg: &RlConfig,
    buffer: Vec<Buffered>,
    bootstrap: f64,
) -> Result<ObjectiveParts> {
    let rewards: Vec<f64> = buffer.iter().map(|b| b.reward).collect();
    let mut values: Vec<f64> = buffer.iter().map(|b| b.value).collect();
    values.push(bootstrap);
    let returns = n_step_returns(&rewards, &values, cfg.gamma)?;
    let mut tapes = Vec::with_capacity(buffer.len());
    let mut batch = Vec::with_capacity(buffer.len());
    for ((b, g), v) in buffer.into_iter().zip(returns).zip(&values) {
        let mut sample = b.sample;
        sample.advantage = g.iter().map(|x| x - v).sum::<f64>() / g.len() as f64;
        sample.returns = g;
        batch.push(sample);
        tapes.push(b.tape);
    }
    let mut first = ObjectiveParts::default();
    for epoch in 0..cfg.epochs {
        net.params.zero_grad();
        let parts = if epoch == 0 {
            ppo_backward(net, &batch, Some(&tapes), cfg)?
        } else {
            ppo_backward(net, &batch, None, cfg)?
        };
        if !parts.objective.is_finite() {
            return Err(Error::NonFinite("policy objective".into()));
        }
        opt.step(&mut net.params)?;
        if epoch == 0 {
            first = parts;
        }
    }
    net.params.zero_grad();
    Ok(first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_examples() {
        assert_eq!(reward(10, 7), 3.0);
        assert_eq!(reward(5, 5), 0.0);
        assert_eq!(reward(5, 8), -3.0);
    }

    #[test]
    fn advantage_examples() {
        let a = n_step_advantages(&[1.0, 1.0], &[0.0, 0.0, 10.0], 0.6).unwrap();
        assert!((a[0][1] - 5.2).abs() < 1e-12);
        let a = n_step_advantages(&[2.0], &[3.0, 5.0], 0.0).unwrap();
        assert!((a[0][0] + 1.0).abs() < 1e-12);
        let a = n_step_advantages(&[1.0, 2.0, 3.0], &[0.5, 0.25, 0.125, 4.0], 0.9).unwrap();
        assert_eq!(a.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 2, 1]);
        assert!(n_step_advantages(&[1.0], &[1.0], 0.5).is_err());
    }

    #[test]
    fn surrogate_examples() {
        assert!((ppo_surrogate(&[1.5], &[2.0], 0.2).unwrap() - 2.4).abs() < 1e-12);
        assert!((ppo_surrogate(&[0.5], &[-1.0], 0.2).unwrap() + 0.8).abs() < 1e-12);
        assert!((ppo_surrogate(&[1.0], &[3.0], 0.2).unwrap() - 3.0).abs() < 1e-12);
        assert!(ppo_surrogate(&[], &[], 0.2).is_err());
    }

    #[test]
    fn value_and_entropy_examples() {
        assert_eq!(value_loss(&[1.0, -1.0]).unwrap(), 1.0);
        assert_eq!(value_loss(&[0.0, 0.0]).unwrap(), 0.0);
        assert!((entropy_bonus(&[0.5]) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(entropy_bonus(&[1.0 - 1e-6]) < 2e-5);
        let cfg = RlConfig::default();
        assert!((total_objective(&cfg, 1.0, 0.5, 2.0) - 0.7).abs() < 1e-12);
        assert!((total_objective(&cfg, 1.0, 0.5, 0.7) - 0.57).abs() < 1e-12);
    }

    #[test]
    fn identical_policies_give_unit_ratio() {
        let p = [0.3, 0.9, 0.5];
        assert_eq!(joint_ratio(&p, &p, &[true, false, true]), 1.0);
    }

    #[test]
    fn clipped_grad_matches_difference() {
        let eps = 0.2;
        for &(r, a) in &[(1.1, 2.0), (1.5, 2.0), (0.5, 2.0), (0.5, -1.0), (1.5, -1.0), (0.9, -1.0)] {
            let h = 1e-7;
            let fd = (clipped_term(r + h, a, eps) - clipped_term(r - h, a, eps)) / (2.0 * h);
            assert!((fd - clipped_term_grad(r, a, eps)).abs() < 1e-6, "r={r} a={a}");
        }
    }
}
