//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! real stdout (not the captured test output) and then asserts. Tests take a
//! shared lock so that their wall-clock budgets are measured without
//! contention.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use gsrl::controllers::{FixedTime, RuleController};
use gsrl::encode::{encode_phase, encode_state};
use gsrl::flow::{FlowName, FlowProgram};
use gsrl::harness::{evaluate_controller, run_imitation, train, ControllerKind, Experiment, PolicyController};
use gsrl::imitation::{imitation_backward, imitation_objective, LabelledSample};
use gsrl::nn::gradcheck::check_gradients;
use gsrl::nn::{read_checkpoint, write_checkpoint, Adam, NetShape, Network};
use gsrl::rl::{clipped_term, joint_ratio, ppo_backward, ppo_objective, ppo_surrogate, reward, rl_episode, RlConfig};
use gsrl::sim::{EpisodeConfig, Simulation};
use gsrl::topology::{Network as RoadNetwork, NetworkConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{check_phase_sequence, desk_config, ppo_batch, random_input};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "criterion {n:>2} [{name}]: {verdict} ({detail})");
    let _ = out.flush();
}

fn within(start: Instant, budget: Duration) -> (bool, String) {
    let t = start.elapsed();
    (t < budget, format!("{:.1}s of {}s", t.as_secs_f64(), budget.as_secs()))
}

fn desk(extra: &str) -> Experiment {
    Experiment::new(desk_config(extra)).unwrap()
}

#[test]
fn criterion_01_conservation_and_legality() {
    let _g = serial();
    let start = Instant::now();
    let mut problems = Vec::new();
    for (side, seed) in [(1, 11u64), (2, 12)] {
        let net = Arc::new(RoadNetwork::build(NetworkConfig::grid(side, side)).unwrap());
        let mut sim =
            Simulation::new(net, EpisodeConfig::new(20_000.0, FlowProgram::preset(FlowName::High)), seed).unwrap();
        let n = sim.network().intersections();
        let amber = sim.network().config().amber_steps as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut obs = vec![Vec::with_capacity(10_000); n];
        for _ in 0..10_000 {
            let action: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.15)).collect();
            sim.step(&action).unwrap();
            if let Err(e) = sim.check_invariants() {
                problems.push(e);
                break;
            }
            for (i, ph) in sim.phases().iter().enumerate() {
                obs[i].push(ph.green());
            }
        }
        for o in &obs {
            if let Err(e) = check_phase_sequence(o, amber) {
                problems.push(format!("{side}x{side}: {e}"));
            }
        }
    }
    let (fast, t) = within(start, Duration::from_secs(10));
    let pass = problems.is_empty() && fast;
    report(1, "conservation and legality", pass, &format!("10^4 steps on 1x1 and 2x2, {t}, {problems:?}"));
    assert!(pass);
}

#[test]
fn criterion_02_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let preset = Path::new(env!("CARGO_MANIFEST_DIR")).join("presets/desk.cfg");
    let run = |out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_gsrl"))
            .args(["train", "--config", preset.to_str().unwrap()])
            .args(["--grid", "1x1", "--flow", "low", "--controller", "dri", "--seed", "7", "--episodes", "3"])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    let mut names: Vec<String> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    let differing: Vec<&String> = names
        .iter()
        .filter(|n| fs::read(a.join(n)).ok() != fs::read(b.join(n)).ok())
        .collect();
    let pass = differing.is_empty() && names.iter().any(|n| n == "rl.csv") && names.iter().any(|n| n == "checkpoint.gsrl");
    report(2, "determinism", pass, &format!("compared {names:?}, differing {differing:?}"));
    assert!(pass);
}

#[test]
fn criterion_03_gradient_oracle() {
    let _g = serial();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for intersections in [1usize, 2] {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + intersections as u64);
        let shape = NetShape::new(intersections, 24, 20, 4).unwrap();
        let mut net = Network::<f64>::init(shape, &mut rng);
        for p in net.params.iter_mut().filter(|p| p.name.ends_with(".b")) {
            p.fill_uniform(&mut rng, 0.05);
        }

        let inputs: Vec<_> = (0..3).map(|_| random_input(&mut rng, shape)).collect();
        let labelled: Vec<LabelledSample> = inputs
            .iter()
            .map(|(s, h)| LabelledSample {
                state: s,
                phase: h,
                labels: (0..intersections).map(|_| rng.gen_bool(0.5)).collect(),
            })
            .collect();
        let refs: Vec<_> = inputs.iter().map(|(s, h)| (s, h)).collect();
        let c = 1e-3;
        let r = check_gradients(
            &mut net,
            &refs,
            200,
            1e-5,
            1e-7,
            &mut rng,
            |n| imitation_objective(n, &labelled, c),
            |n| imitation_backward(n, &labelled, c).map(|_| ()),
        )
        .unwrap();
        worst = worst.max(r.max_rel_err);
        checked += r.checked;

        let cfg = RlConfig::default();
        let batch = ppo_batch(&net, &mut rng, 4);
        let refs: Vec<_> = batch.iter().map(|s| (&s.state, &s.phase)).collect();
        let r = check_gradients(
            &mut net,
            &refs,
            200,
            1e-5,
            1e-7,
            &mut rng,
            |n| ppo_objective(n, &batch, &cfg).map(|p| -p.objective),
            |n| ppo_backward(n, &batch, None, &cfg).map(|_| ()),
        )
        .unwrap();
        worst = worst.max(r.max_rel_err);
        checked += r.checked;
    }
    let (fast, t) = within(start, Duration::from_secs(120));
    let pass = worst < 1e-4 && fast;
    report(3, "gradient oracle", pass, &format!("{checked} parameters, max rel err {worst:.2e}, {t}"));
    assert!(pass);
}

#[test]
fn criterion_04_clip_property() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..10_000 {
        let r: f64 = rng.gen_range(0.0..4.0);
        let a: f64 = rng.gen_range(-5.0..5.0);
        let eps: f64 = rng.gen_range(0.0..1.0);
        let t = clipped_term(r, a, eps);
        let c = r.clamp(1.0 - eps, 1.0 + eps);
        let bound = if a > 0.0 { t <= r * a } else { t <= c * a };
        let exact = if a >= 0.0 { t == r.min(1.0 + eps) * a } else { t == r.max(1.0 - eps) * a };
        if !(bound && exact) {
            violations += 1;
        }
    }
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.gen_range(1..50);
        let probs: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let actions: Vec<Vec<bool>> = (0..n).map(|_| (0..4).map(|_| rng.gen()).collect()).collect();
        let advs: Vec<f64> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let ratios: Vec<f64> = probs.iter().zip(&actions).map(|(p, a)| joint_ratio(p, p, a)).collect();
        let mean = advs.iter().sum::<f64>() / n as f64;
        worst = worst.max((ppo_surrogate(&ratios, &advs, 0.2).unwrap() - mean).abs());
    }
    let pass = violations == 0 && worst <= 1e-12;
    report(4, "clip property", pass, &format!("{violations} violations in 10^4 triples, ratio identity error {worst:.1e}"));
    assert!(pass);
}

#[test]
fn criterion_05_reward_telescoping() {
    let _g = serial();
    let mut mismatches = Vec::new();
    for (flow, seed) in [("low", 1u64), ("high", 2), ("mutable", 3)] {
        let exp = desk(&format!("flow.name = {flow}\nseed = {seed}\n"));
        let mut net = exp.init_policy().unwrap();
        let mut sim = exp.simulation(seed).unwrap();
        let initial = sim.observe().total_low_speed();
        let mut opt = Adam::new(exp.cfg.rl.lr);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rep = rl_episode(&mut sim, &mut net, &mut opt, &exp.cfg.rl, &exp.cfg.rule, &mut rng).unwrap();
        let expected = reward(initial, sim.observe().total_low_speed());
        if rep.cumulative_reward != expected {
            mismatches.push((flow, rep.cumulative_reward, expected));
        }
    }
    let pass = mismatches.is_empty();
    report(5, "reward telescoping", pass, &format!("3 full episodes, mismatches {mismatches:?}"));
    assert!(pass);
}

#[test]
fn criterion_06_imitation_convergence() {
    let _g = serial();
    let start = Instant::now();
    let mut rounds = Vec::new();
    for seed in 1..=5u64 {
        let mut cfg = desk_config(&format!("seed = {seed}\nimitation.max_rounds = 20\n"));
        cfg.probe_episodes = 0;
        assert_eq!(cfg.resolved_xi(), 0.9);
        let o = run_imitation(&Experiment::new(cfg).unwrap(), None).unwrap();
        rounds.push(o.reached.then_some(o.rounds.len()));
    }
    let reached = rounds.iter().flatten().count();
    let (fast, t) = within(start, Duration::from_secs(600));
    let pass = reached >= 4 && fast;
    report(6, "imitation convergence", pass, &format!("rounds to Acc > 0.9 per seed {rounds:?}, {reached}/5, {t}"));
    assert!(pass);
}

#[test]
fn criterion_07_rule_beats_fixed_time() {
    let _g = serial();
    let start = Instant::now();
    let mut pairs = Vec::new();
    for seed in 1..=5u64 {
        let exp = desk(&format!("seed = {seed}\n"));
        let mut rule = RuleController {
            params: exp.cfg.rule,
        };
        let mut fixed = FixedTime::new(20.0).unwrap();
        let q_rule = evaluate_controller(&exp, &mut rule, 1, None).unwrap().queue.mean;
        let q_fixed = evaluate_controller(&exp, &mut fixed, 1, None).unwrap().queue.mean;
        pairs.push((q_rule, q_fixed));
    }
    let (fast, t) = within(start, Duration::from_secs(300));
    let pass = pairs.iter().all(|(r, f)| r < f) && fast;
    let shown: Vec<String> = pairs.iter().map(|(r, f)| format!("{r:.1}<{f:.1}")).collect();
    report(7, "rule vs fixed20", pass, &format!("queue m per seed {shown:?}, {t}"));
    assert!(pass);
}

/// 1-based index of the first probe at or below `target`; `len + 1` if none.
fn episodes_to(target: f64, probes: &[Option<f64>]) -> usize {
    probes
        .iter()
        .position(|p| p.is_some_and(|q| q <= target))
        .map_or(probes.len() + 1, |k| k + 1)
}

fn median(v: &[usize]) -> f64 {
    let mut s = v.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    }
}

#[test]
fn criterion_08_co_training_acceleration() {
    let _g = serial();
    let start = Instant::now();
    let mut dri = Vec::new();
    let mut dr = Vec::new();
    let mut detail = Vec::new();
    for seed in 1..=5u64 {
        let exp = desk(&format!("seed = {seed}\n"));
        let mut rule = RuleController {
            params: exp.cfg.rule,
        };
        let q_star = evaluate_controller(&exp, &mut rule, exp.cfg.probe_episodes, None)
            .unwrap()
            .queue
            .mean;
        let dir = tempfile::tempdir().unwrap();
        let a = train(&exp, ControllerKind::Dri, &dir.path().join("dri"), None).unwrap();
        let b = train(&exp, ControllerKind::Dr, &dir.path().join("dr"), None).unwrap();
        let best = |p: &[Option<f64>]| p.iter().flatten().fold(f64::INFINITY, |m, &q| m.min(q));
        dri.push(episodes_to(q_star, &a.probes));
        dr.push(episodes_to(q_star, &b.probes));
        detail.push(format!(
            "seed {seed}: Q*={q_star:.1} dri {} (best {:.1}, {} imitation rounds) dr {} (best {:.1})",
            dri.last().unwrap(),
            best(&a.probes),
            a.stage_boundary,
            dr.last().unwrap(),
            best(&b.probes)
        ));
    }
    let (fast, t) = within(start, Duration::from_secs(3600));
    let (m_dri, m_dr) = (median(&dri), median(&dr));
    let pass = m_dri < m_dr && fast;
    report(
        8,
        "co-training acceleration",
        pass,
        &format!("median episodes to Q*: dri {m_dri} vs dr {m_dr}; {}; {t}", detail.join("; ")),
    );
    assert!(pass);
}

#[test]
fn criterion_09_policy_sanity() {
    let _g = serial();
    let mut cfg = desk_config("seed = 1\n");
    cfg.probe_episodes = 0;
    let exp = Experiment::new(cfg.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let trained = train(&exp, ControllerKind::Dri, dir.path(), None).unwrap();
    let durations = |flow: &str| {
        let mut c = cfg.clone();
        c.apply_str(&format!("flow.name = {flow}\n")).unwrap();
        let exp = Experiment::new(c).unwrap();
        let mut ctrl = PolicyController {
            net: trained.net.clone(),
            label: "dri".into(),
        };
        let r = evaluate_controller(&exp, &mut ctrl, exp.cfg.eval_episodes, None).unwrap();
        r.phase_durations.map(|s| s.mean)
    };
    let low = durations("low");
    let high = durations("high");
    let mean = |d: &[f64; 4]| {
        let seen: Vec<f64> = d.iter().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
        seen.iter().sum::<f64>() / seen.len().max(1) as f64
    };
    let through = (low[0] + low[2]) / 2.0;
    let left = (low[1] + low[3]) / 2.0;
    let pass = mean(&high) > mean(&low) && through >= left;
    report(
        9,
        "policy sanity",
        pass,
        &format!(
            "mean green high {:.1}s vs low {:.1}s; low-flow through {through:.1}s vs left {left:.1}s; low {low:.1?} high {high:.1?}",
            mean(&high),
            mean(&low)
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_10_checkpoint_round_trip() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut bad = 0;
    let mut total = 0;
    for (intersections, cells) in [(1usize, 100usize), (4, 20)] {
        let shape = NetShape::new(intersections, 24, cells, 4).unwrap();
        let net = Network::<f32>::init(shape, &mut rng);
        let mut bytes = Vec::new();
        write_checkpoint(&net, &mut bytes).unwrap();
        let back = read_checkpoint(bytes.as_slice()).unwrap();
        for _ in 0..100 {
            let (s, h) = random_input(&mut rng, shape);
            let (a, b) = (net.forward(&s, &h).unwrap(), back.forward(&s, &h).unwrap());
            let same = a.value.to_bits() == b.value.to_bits()
                && a.probs.iter().zip(&b.probs).all(|(x, y)| x.to_bits() == y.to_bits());
            if !same {
                bad += 1;
            }
            total += 1;
        }
    }
    // also through a live simulation state rather than random bits
    let exp = desk("");
    let net = exp.init_policy().unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&net, &mut bytes).unwrap();
    let back = read_checkpoint(bytes.as_slice()).unwrap();
    let mut sim = exp.simulation(1).unwrap();
    for _ in 0..120 {
        sim.step(&[false]).unwrap();
    }
    let live_same = net.forward(&encode_state(&sim), &encode_phase(&sim)).unwrap()
        == back.forward(&encode_state(&sim), &encode_phase(&sim)).unwrap();
    let pass = bad == 0 && live_same && back == net;
    report(10, "checkpoint round trip", pass, &format!("{total} random inputs, {bad} mismatches"));
    assert!(pass);
}
