//! DAgger pre-training: the learner drives the simulator, every visited
//! state goes into a trajectory pool, and minibatches drawn from the pool are
//! labelled by the rule expert at training time.

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::controllers::{rule_expert, RuleParams};
use crate::encode::{encode_phase, encode_state, PhaseMatrix, StateTensor};
use crate::error::{config_err, Error, Result};
use crate::nn::{clamp_mask, clamp_prob, Network, Optimizer, Real, Sgd};
use crate::sim::{MetricRow, PhaseCounts, Simulation};

#[derive(Debug, Clone, PartialEq)]
pub struct ImitationConfig {
    /// Weight of the squared parameter norm.
    pub c: f64,
    /// Minibatch updates per round.
    pub iterations: usize,
    pub batch: usize,
    /// Accuracy threshold ending the imitation stage.
    pub xi: f64,
    pub pool_capacity: usize,
    pub lr: f64,
    /// Upper bound on rounds before giving up on the threshold.
    pub max_rounds: usize,
}

impl Default for ImitationConfig {
    fn default() -> Self {
        Self {
            c: 1e-4,
            iterations: 500,
            batch: 100,
            xi: 0.9,
            pool_capacity: 50_000,
            lr: 1e-3,
            max_rounds: 20,
        }
    }
}

impl ImitationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c < 0.0 {
            return Err(config_err("imitation c must be >= 0"));
        }
        if self.batch == 0 || self.pool_capacity == 0 || self.max_rounds == 0 {
            return Err(config_err("imitation batch, pool capacity and round limit must be positive"));
        }
        if !(0.0..=1.0).contains(&self.xi) {
            return Err(config_err("xi must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// One visited state. The phase groupings are stored so labels can be
/// recomputed from the entry alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub state: StateTensor,
    pub phase: PhaseMatrix,
    pub groups: Vec<PhaseCounts>,
}

/// FIFO-bounded store of visited states.
#[derive(Debug, Clone)]
pub struct TrajectoryPool {
    entries: VecDeque<PoolEntry>,
    capacity: usize,
}

impl TrajectoryPool {
    pub fn new(capacity: usize) -> Self {
        Self {
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
            capacity,
        }
    }

    pub fn push(&mut self, entry: PoolEntry) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn get(&self, idx: usize) -> &PoolEntry {
        &self.entries[idx]
    }

    /// Uniform sampling with replacement.
    pub fn sample<'a, R: Rng>(&'a self, rng: &mut R, n: usize) -> Result<Vec<&'a PoolEntry>> {
        if self.entries.is_empty() {
            return Err(Error::Empty("trajectory pool"));
        }
        Ok((0..n)
            .map(|_| &self.entries[rng.gen_range(0..self.entries.len())])
            .collect())
    }
}

/// Cross-entropy summed over samples and intersections plus `c * l2_sq`.
pub fn imitation_loss(probs: &[Vec<f64>], labels: &[Vec<bool>], c: f64, l2_sq: f64) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::Shape {
            expected: format!("{} label rows", probs.len()),
            actual: labels.len().to_string(),
        });
    }
    let mut total = 0.0;
    for (p_row, y_row) in probs.iter().zip(labels) {
        if p_row.len() != y_row.len() {
            return Err(Error::Shape {
                expected: format!("{} labels", p_row.len()),
                actual: y_row.len().to_string(),
            });
        }
        total += p_row
            .iter()
            .zip(y_row)
            .map(|(&p, &y)| cross_entropy(p, y))
            .sum::<f64>();
    }
    Ok(total + c * l2_sq)
}

pub fn cross_entropy(p: f64, y: bool) -> f64 {
    let p = clamp_prob(p);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`cross_entropy`] with respect to the unclamped `p`.
pub fn cross_entropy_grad(p: f64, y: bool) -> f64 {
    let pc = clamp_prob(p);
    let g = if y { -1.0 / pc } else { 1.0 / (1.0 - pc) };
    g * clamp_mask(p)
}

/// Fraction of (step, intersection) pairs where the action matches the label.
pub fn accuracy(actions: &[Vec<bool>], labels: &[Vec<bool>]) -> Result<f64> {
    if actions.is_empty() {
        return Err(Error::Empty("accuracy input"));
    }
    if actions.len() != labels.len() || actions.iter().zip(labels).any(|(a, y)| a.len() != y.len()) {
        return Err(Error::Shape {
            expected: "equal action and label shapes".into(),
            actual: format!("{} vs {} rows", actions.len(), labels.len()),
        });
    }
    let total: usize = actions.iter().map(|a| a.len()).sum();
    if total == 0 {
        return Err(Error::Empty("accuracy input"));
    }
    let mismatches: usize = actions
        .iter()
        .zip(labels)
        .map(|(a, y)| a.iter().zip(y).filter(|(x, z)| x != z).count())
        .sum();
    Ok(1.0 - mismatches as f64 / total as f64)
}

/// Labelled minibatch sample for the imitation objective.
pub struct LabelledSample<'a> {
    pub state: &'a StateTensor,
    pub phase: &'a PhaseMatrix,
    pub labels: Vec<bool>,
}

/// Imitation objective of a minibatch (forward only).
pub fn imitation_objective<T: Real>(net: &Network<T>, batch: &[LabelledSample<'_>], c: f64) -> Result<f64> {
    let mut probs = Vec::with_capacity(batch.len());
    for s in batch {
        probs.push(net.forward(s.state, s.phase)?.probs);
    }
    let labels: Vec<Vec<bool>> = batch.iter().map(|s| s.labels.clone()).collect();
    imitation_loss(&probs, &labels, c, net.params.l2_norm_sq())
}

/// Accumulates the gradient of [`imitation_objective`] and returns its value.
pub fn imitation_backward<T: Real>(net: &mut Network<T>, batch: &[LabelledSample<'_>], c: f64) -> Result<f64> {
    let mut loss = 0.0;
    for s in batch {
        let tape = net.forward_tape(s.state, s.phase)?;
        let probs = &tape.output.probs;
        if probs.len() != s.labels.len() {
            return Err(Error::Shape {
                expected: format!("{} labels", probs.len()),
                actual: s.labels.len().to_string(),
            });
        }
        loss += probs
            .iter()
            .zip(&s.labels)
            .map(|(&p, &y)| cross_entropy(p, y))
            .sum::<f64>();
        let d: Vec<f64> = probs
            .iter()
            .zip(&s.labels)
            .map(|(&p, &y)| cross_entropy_grad(p, y))
            .collect();
        net.backward(&tape, &d, 0.0)?;
    }
    net.params.add_l2_grad(c);
    Ok(loss + c * net.params.l2_norm_sq())
}

/// Who drives the simulator during a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    /// Bernoulli samples from the network's switch probabilities.
    Learner,
    /// The rule expert itself.
    Expert,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// Accuracy of the thresholded policy on the acting episode's states.
    pub acc: f64,
    /// Same comparison using the sampled actions that drove the episode.
    pub sampled_acc: f64,
    /// Mean minibatch loss over the round's training iterations.
    pub loss: f64,
    pub metrics: MetricRow,
}

/// Rolls one episode with the learner, stores the visited states in the pool
/// and trains for `cfg.iterations` minibatches on freshly relabelled samples.
pub fn dagger_round(
    sim: &mut Simulation,
    net: &mut Network<f32>,
    pool: &mut TrajectoryPool,
    rule: &RuleParams,
    cfg: &ImitationConfig,
    actor: Actor,
    rng: &mut ChaCha8Rng,
) -> Result<RoundReport> {
    let mut report = sim.observe();
    let mut greedy = Vec::with_capacity(sim.episode_steps() as usize);
    let mut sampled = Vec::with_capacity(sim.episode_steps() as usize);
    let mut labels = Vec::with_capacity(sim.episode_steps() as usize);
    while !sim.done() {
        let state = encode_state(sim);
        let phase = encode_phase(sim);
        let expert = rule_expert(&report.groups, rule)?;
        let (action, thresholded) = match actor {
            Actor::Expert => (expert.clone(), expert.clone()),
            Actor::Learner => {
                let out = net.forward(&state, &phase)?;
                let a: Vec<bool> = out.probs.iter().map(|&p| rng.gen::<f64>() < p).collect();
                (a, out.probs.iter().map(|&p| p > 0.5).collect())
            }
        };
        pool.push(PoolEntry {
            state,
            phase,
            groups: report.groups.clone(),
        });
        report = sim.step(&action)?;
        sampled.push(action);
        greedy.push(thresholded);
        labels.push(expert);
    }
    let acc = accuracy(&greedy, &labels)?;
    let sampled_acc = accuracy(&sampled, &labels)?;

    let mut opt = Sgd { lr: cfg.lr };
    let mut loss_sum = 0.0;
    for _ in 0..cfg.iterations {
        let batch: Vec<LabelledSample<'_>> = pool
            .sample(rng, cfg.batch)?
            .into_iter()
            .map(|e| {
                Ok(LabelledSample {
                    state: &e.state,
                    phase: &e.phase,
                    labels: rule_expert(&e.groups, rule)?,
                })
            })
            .collect::<Result<_>>()?;
        net.params.zero_grad();
        let loss = imitation_backward(net, &batch, cfg.c)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("imitation loss".into()));
        }
        opt.step(&mut net.params)?;
        loss_sum += loss;
    }
    net.params.zero_grad();
    Ok(RoundReport {
        acc,
        sampled_acc,
        loss: if cfg.iterations > 0 {
            loss_sum / cfg.iterations as f64
        } else {
            0.0
        },
        metrics: sim.metrics_snapshot(),
    })
}
