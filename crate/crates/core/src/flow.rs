//! Demand programs: per-route vehicle counts per episode, optionally
//! changing at fixed fractions of the episode.

use std::fmt;
use std::str::FromStr;

use crate::error::{config_err, Error, Result};
use crate::topology::ROUTES;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowName {
    Low,
    Middle,
    High,
    Mutable,
    Unbalanced,
}

impl FlowName {
    pub const ALL: [FlowName; 5] = [
        FlowName::Low,
        FlowName::Middle,
        FlowName::High,
        FlowName::Mutable,
        FlowName::Unbalanced,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FlowName::Low => "low",
            FlowName::Middle => "middle",
            FlowName::High => "high",
            FlowName::Mutable => "mutable",
            FlowName::Unbalanced => "unbalanced",
        }
    }
}

impl fmt::Display for FlowName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FlowName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FlowName::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| config_err(format!("unknown flow '{s}'")))
    }
}

/// A slice of the episode with constant per-route demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub fraction: f64,
    /// Vehicles per episode for routes 1..=6 if this rate were held for a
    /// whole episode.
    pub per_episode: [f64; ROUTES],
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowProgram {
    pub name: FlowName,
    pub segments: Vec<Segment>,
}

const THIRD: f64 = 1.0 / 3.0;

impl FlowProgram {
    pub fn preset(name: FlowName) -> Self {
        let uniform = |v: f64| [v; ROUTES];
        let segments = match name {
            FlowName::Low => vec![seg(1.0, uniform(600.0))],
            FlowName::Middle => vec![seg(1.0, uniform(800.0))],
            FlowName::High => vec![seg(1.0, uniform(1000.0))],
            FlowName::Mutable => vec![
                seg(THIRD, uniform(600.0)),
                seg(THIRD, uniform(900.0)),
                seg(THIRD, uniform(720.0)),
            ],
            FlowName::Unbalanced => vec![
                seg(THIRD, [600.0, 900.0, 600.0, 900.0, 600.0, 600.0]),
                seg(THIRD, [900.0, 600.0, 600.0, 600.0, 900.0, 600.0]),
                seg(THIRD, [900.0, 900.0, 600.0, 600.0, 900.0, 600.0]),
            ],
        };
        Self { name, segments }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.segments.iter().map(|s| s.fraction).sum();
        if self.segments.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(config_err(format!(
                "flow '{}' segment fractions sum to {total}, expected 1",
                self.name
            )));
        }
        if self
            .segments
            .iter()
            .any(|s| s.fraction <= 0.0 || s.per_episode.iter().any(|v| *v < 0.0))
        {
            return Err(config_err("flow segments must be positive"));
        }
        Ok(())
    }

    /// Expected vehicles per episode summed over all six routes.
    pub fn total_per_episode(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.fraction * s.per_episode.iter().sum::<f64>())
            .sum()
    }

    /// Segment active at `step` of an episode of `episode_steps`. Segment
    /// boundaries fall on exact fractions of the episode.
    pub fn segment_at(&self, step: u64, episode_steps: u64) -> &Segment {
        let mut end = 0.0;
        for s in &self.segments {
            end += s.fraction;
            if (step as f64) < (end * episode_steps as f64).round() {
                return s;
            }
        }
        self.segments.last().expect("validated program has segments")
    }

    /// Insertion rates in vehicles per second for each route at `step`.
    /// Values count vehicles per `period_s` seconds.
    pub fn rates_at(&self, step: u64, episode_steps: u64, period_s: f64) -> [f64; ROUTES] {
        let seg = self.segment_at(step, episode_steps);
        seg.per_episode.map(|v| v / period_s)
    }
}

fn seg(fraction: f64, per_episode: [f64; ROUTES]) -> Segment {
    Segment {
        fraction,
        per_episode,
    }
}
