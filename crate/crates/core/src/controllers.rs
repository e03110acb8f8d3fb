//! Non-learning controllers: fixed-time plans and the low-speed rule used to
//! label imitation data.

use crate::error::{config_err, Error, Result};
use crate::sim::{PhaseCounts, Simulation, StepReport};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleParams {
    pub beta: f64,
    pub low_speed_kmh: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self {
            beta: 0.13,
            low_speed_kmh: 30.0,
        }
    }
}

impl RuleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(config_err("rule beta must be positive"));
        }
        Ok(())
    }
}

/// Switch label for one intersection: 1 when the weighted low-speed mass on
/// red approaches exceeds the low-speed count on the green approaches.
pub fn rule_label(counts: &PhaseCounts, params: &RuleParams) -> bool {
    counts.red() as f64 * params.beta - counts.green() as f64 > 0.0
}

pub fn rule_expert(groups: &[PhaseCounts], params: &RuleParams) -> Result<Vec<bool>> {
    if groups.is_empty() {
        return Err(Error::Empty("phase groupings"));
    }
    Ok(groups.iter().map(|g| rule_label(g, params)).collect())
}

/// Anything that picks a switch vector from the current simulation state.
pub trait Controller {
    fn decide(&mut self, sim: &Simulation, report: &StepReport) -> Result<Vec<bool>>;

    fn name(&self) -> String;
}

/// Switches every intersection after a fixed number of green seconds.
#[derive(Debug, Clone)]
pub struct FixedTime {
    period_s: f64,
}

impl FixedTime {
    pub fn new(period_s: f64) -> Result<Self> {
        if !(period_s >= 1.0) {
            return Err(config_err(format!("fixed-time period must be >= 1 s, got {period_s}")));
        }
        Ok(Self { period_s })
    }
}

impl Controller for FixedTime {
    fn decide(&mut self, sim: &Simulation, _report: &StepReport) -> Result<Vec<bool>> {
        let step_s = sim.network().config().step_s;
        let period_steps = (self.period_s / step_s).round() as u64;
        Ok(sim
            .phases()
            .iter()
            .enumerate()
            .map(|(i, ph)| ph.amber_remaining == 0 && sim.green_elapsed(i) >= period_steps)
            .collect())
    }

    fn name(&self) -> String {
        format!("fixed{}", self.period_s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleController {
    pub params: RuleParams,
}

impl Controller for RuleController {
    fn decide(&mut self, _sim: &Simulation, report: &StepReport) -> Result<Vec<bool>> {
        rule_expert(&report.groups, &self.params)
    }

    fn name(&self) -> String {
        "rule".into()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::flow::{FlowName, FlowProgram};
    use crate::sim::EpisodeConfig;
    use crate::topology::{Network, NetworkConfig};
    use proptest::prelude::*;

    fn counts(green: u32, red: u32) -> PhaseCounts {
        PhaseCounts {
            current: 0,
            by_phase: [green, red, 0, 0],
        }
    }

    #[test]
    fn rule_examples() {
        let p = RuleParams::default();
        // 0.13 * 100 - 10 = 3 > 0
        assert!(rule_label(&counts(10, 100), &p));
        assert!(!rule_label(&counts(0, 0), &p));
        // exact tie: 13 - 13 = 0 keeps the phase
        assert!(!rule_label(&counts(13, 100), &p));
        assert!(rule_expert(&[], &p).is_err());
    }

    #[test]
    fn rule_uses_current_phase_as_green() {
        let p = RuleParams::default();
        let c = PhaseCounts {
            current: 2,
            by_phase: [40, 0, 1, 0],
        };
        assert!(rule_label(&c, &p));
        let c = PhaseCounts { current: 0, ..c };
        assert!(!rule_label(&c, &p));
    }

    proptest! {
        #[test]
        fn rule_is_scale_invariant(
            by_phase in prop::array::uniform4(0u32..500),
            current in 0usize..4,
            scale in 1u32..50,
        ) {
            let p = RuleParams::default();
            let c = PhaseCounts { current, by_phase };
            let scaled = PhaseCounts { current, by_phase: by_phase.map(|v| v * scale) };
            prop_assert_eq!(rule_label(&c, &p), rule_label(&scaled, &p));
        }
    }

    fn run_fixed(period: f64, n: usize, steps: usize) -> (Simulation, Vec<Vec<usize>>) {
        let net = Arc::new(Network::build(NetworkConfig::grid(1, n)).unwrap());
        let mut sim = Simulation::new(
            net,
            EpisodeConfig::new(steps as f64, FlowProgram::preset(FlowName::Low)),
            3,
        )
        .unwrap();
        let mut ctl = FixedTime::new(period).unwrap();
        let mut report = sim.observe();
        let mut trace = vec![Vec::new(); n];
        for _ in 0..steps {
            let a = ctl.decide(&sim, &report).unwrap();
            report = sim.step(&a).unwrap();
            for (i, ph) in sim.phases().iter().enumerate() {
                trace[i].push(if ph.amber_remaining > 0 { 9 } else { ph.current });
            }
        }
        (sim, trace)
    }

    #[test]
    fn fixed_time_cycle_is_period_plus_amber() {
        let (sim, trace) = run_fixed(20.0, 1, 21 * 8);
        let first_p1 = trace[0].iter().position(|&p| p == 1).unwrap();
        let first_p2 = trace[0].iter().position(|&p| p == 2).unwrap();
        assert_eq!(first_p2 - first_p1, 21);
        assert_eq!(trace[0].iter().take(20).filter(|&&p| p == 0).count(), 20);
        assert_eq!(trace[0][20], 9);
        let m = sim.metrics_snapshot();
        for p in 0..4 {
            assert_eq!(m.phase_durations[0][p], 20.0);
        }
    }

    #[test]
    fn fixed_forty_mean_green() {
        let (sim, _) = run_fixed(40.0, 1, 41 * 9);
        let m = sim.metrics_snapshot();
        for p in 0..4 {
            assert_eq!(m.phase_durations[0][p], 40.0);
        }
    }

    #[test]
    fn fixed_time_synchronises_intersections() {
        let (_, trace) = run_fixed(20.0, 2, 300);
        assert_eq!(trace[0], trace[1]);
    }

    #[test]
    fn zero_period_rejected() {
        assert!(FixedTime::new(0.0).is_err());
    }
}
