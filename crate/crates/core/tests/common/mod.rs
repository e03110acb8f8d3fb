//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use gsrl::config::RunConfig;
use gsrl::encode::{PhaseMatrix, StateTensor};
use gsrl::nn::{ConvMode, NetShape, Network};
use gsrl::rl::PpoSample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DESK: &str = include_str!("../../presets/desk.cfg");

pub fn desk_config(extra: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.apply_str(DESK).unwrap();
    cfg.apply_str(extra).unwrap();
    cfg
}

/// Per-step signal observation: `Some(phase)` while green, `None` in amber.
pub fn check_phase_sequence(obs: &[Option<usize>], amber: usize) -> Result<(), String> {
    let mut runs: Vec<(Option<usize>, usize)> = Vec::new();
    for &o in obs {
        match runs.last_mut() {
            Some((p, n)) if *p == o => *n += 1,
            _ => runs.push((o, 1)),
        }
    }
    for (k, w) in runs.windows(2).enumerate() {
        match (w[0].0, w[1].0) {
            (Some(a), None) => {
                if let Some((Some(b), _)) = runs.get(k + 2) {
                    if *b != (a + 1) % 4 {
                        return Err(format!("green {a} followed by green {b}"));
                    }
                }
                // the final amber run may be cut off by the end of the record
                if k + 2 < runs.len() && w[1].1 != amber {
                    return Err(format!("amber lasted {} steps", w[1].1));
                }
            }
            (None, Some(_)) => {}
            (Some(a), Some(b)) if amber == 0 => {
                if b != (a + 1) % 4 {
                    return Err(format!("green {a} followed by green {b}"));
                }
            }
            other => return Err(format!("illegal transition {other:?}")),
        }
    }
    Ok(())
}

pub fn random_input(rng: &mut ChaCha8Rng, shape: NetShape) -> (StateTensor, PhaseMatrix) {
    let mut s = StateTensor::zeros(shape.intersections, shape.lanes, shape.cells);
    for i in 0..shape.intersections {
        for j in 0..shape.lanes {
            for k in 0..shape.cells {
                s.set(i, j, k, rng.gen_bool(0.3));
            }
        }
    }
    let phases: Vec<usize> = (0..shape.intersections).map(|_| rng.gen_range(0..shape.phases)).collect();
    (s, PhaseMatrix::from_phases(&phases))
}

pub fn net(intersections: usize, seed: u64) -> (Network<f64>, ChaCha8Rng) {
    net_with(intersections, seed, ConvMode::Channels)
}

pub fn net_with(intersections: usize, seed: u64, conv: ConvMode) -> (Network<f64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = NetShape::new(intersections, 24, 20, 4).unwrap().with_conv(conv);
    let mut net = Network::init(shape, &mut rng);
    // zero biases put exactly-zero pre-activations on the ReLU kink
    for p in net.params.iter_mut().filter(|p| p.name.ends_with(".b")) {
        p.fill_uniform(&mut rng, 0.05);
    }
    (net, rng)
}

pub fn ppo_batch(net: &Network<f64>, rng: &mut ChaCha8Rng, n: usize) -> Vec<PpoSample> {
    let ni = net.shape().intersections;
    (0..n)
        .map(|_| {
            let (state, phase) = random_input(rng, net.shape());
            let out = net.forward(&state, &phase).unwrap();
            // old probabilities away from the current ones so that some
            // ratios land outside the clip range
            let old_probs = out
                .probs
                .iter()
                .map(|p| (p * rng.gen_range(0.6..1.4)).clamp(0.05, 0.95))
                .collect();
            PpoSample {
                state,
                phase,
                action: (0..ni).map(|_| rng.gen_bool(0.5)).collect(),
                old_probs,
                returns: (0..rng.gen_range(1..5)).map(|_| rng.gen_range(-3.0..3.0)).collect(),
                advantage: rng.gen_range(-2.0..2.0),
            }
        })
        .collect()
}

