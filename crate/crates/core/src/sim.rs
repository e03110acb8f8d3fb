//! Deterministic cellular-automaton traffic simulation under signal control.
//!
//! Each step runs, in order:
//! 1. signal update (amber countdown, switch requests),
//! 2. car following on every lane (Nagel-Schreckenberg without the random
//!    slowdown, parallel update),
//! 3. conflict-zone exits onto cell 0 of the receiving lane,
//! 4. stop-line entries into conflict zones and the left-turn holding cells,
//! 5. insertion at the network boundary.
//!
//! Every vehicle has its speed, waiting time and fuel updated exactly once
//! per step.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::flow::FlowProgram;
use crate::topology::{phase_of, LaneId, Movement, Network, Side, PHASES};

/// Length of road attributed to one queued vehicle.
pub const QUEUE_SLOT_M: f64 = 7.5;
/// Steps a vehicle spends inside the junction.
pub const CROSSING_STEPS: u8 = 2;
/// Fuel proxy: units per idling step.
pub const FUEL_IDLE: f64 = 0.3;
/// Fuel proxy: units per cell of speed per step.
pub const FUEL_PER_SPEED: f64 = 0.1;
/// Fuel proxy: units per acceleration event.
pub const FUEL_ACCEL: f64 = 0.5;
/// Default speed threshold of a low-speed vehicle.
pub const LOW_SPEED_KMH: f64 = 30.0;
/// Period over which the flow presets count their vehicles.
pub const DEFAULT_FLOW_PERIOD_S: f64 = 4000.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    /// Index into [`Network::paths`].
    pub path: u16,
    /// Index of the next junction on the path; equals the hop count once the
    /// vehicle is on its sink link.
    pub hop: u16,
    pub speed: u8,
    pub wait_s: f64,
    pub fuel: f64,
}

impl Vehicle {
    fn account(&mut self, speed: u8, step_s: f64) {
        if speed == 0 {
            self.wait_s += step_s;
            self.fuel += FUEL_IDLE;
        } else {
            self.fuel += FUEL_PER_SPEED * speed as f64;
        }
        if speed > self.speed {
            self.fuel += FUEL_ACCEL;
        }
        self.speed = speed;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseState {
    pub current: usize,
    pub amber_remaining: u32,
}

impl PhaseState {
    /// Phase with right of way, `None` during amber.
    pub fn green(&self) -> Option<usize> {
        (self.amber_remaining == 0).then_some(self.current)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct ZoneSlot {
    vehicle: Vehicle,
    remaining: u8,
}

#[derive(Debug, Clone, PartialEq)]
struct Origin {
    path: usize,
    accumulator: f64,
    waiting: u64,
}

/// Low-speed vehicles on the entry lanes of one intersection, grouped by the
/// phase that serves them. Right-turn lanes are excluded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PhaseCounts {
    pub current: usize,
    pub by_phase: [u32; PHASES],
}

impl PhaseCounts {
    /// Low-speed vehicles served by the current phase.
    pub fn green(&self) -> u32 {
        self.by_phase[self.current]
    }

    /// Low-speed vehicles waiting for the other phases.
    pub fn red(&self) -> u32 {
        self.by_phase.iter().sum::<u32>() - self.green()
    }
}

/// Observation produced after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub step: u64,
    /// Low-speed vehicles per lane, indexed by [`LaneId`].
    pub low_speed: Vec<u32>,
    pub groups: Vec<PhaseCounts>,
    pub queue_m: f64,
}

impl StepReport {
    pub fn total_low_speed(&self) -> u64 {
        self.low_speed.iter().map(|&c| c as u64).sum()
    }
}

/// Aggregate metrics of a run so far.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub queue_m: f64,
    /// Mean queue length over all completed steps.
    pub mean_queue_m: f64,
    pub awt_s: f64,
    pub afc: f64,
    /// False when no vehicle has left the network yet; `awt_s` and `afc`
    /// are then reported as 0.
    pub has_exited: bool,
    /// Mean green duration in seconds per intersection and phase, 0 when a
    /// phase has not completed a green yet.
    pub phase_durations: Vec<[f64; PHASES]>,
    pub inserted: u64,
    pub exited: u64,
    pub present: u64,
}

/// Full mutable world state.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: u64,
    cells: Vec<Option<Vehicle>>,
    zones: Vec<Option<ZoneSlot>>,
    holding: Vec<Option<Vehicle>>,
    pub phases: Vec<PhaseState>,
    green_elapsed: Vec<u64>,
    green_sum_s: Vec<[f64; PHASES]>,
    green_count: Vec<[u64; PHASES]>,
    origins: Vec<Origin>,
    rng: ChaCha8Rng,
    next_id: u64,
    pub inserted: u64,
    pub exited: u64,
    wait_sum: f64,
    fuel_sum: f64,
    queue_sum: f64,
}

/// Episode timing and demand.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub episode_s: f64,
    pub flow: FlowProgram,
    /// Demand values are vehicles per this many seconds, independent of the
    /// episode length.
    pub flow_period_s: f64,
    /// Vehicles strictly slower than this count as low-speed.
    pub low_speed_kmh: f64,
}

impl EpisodeConfig {
    pub fn new(episode_s: f64, flow: FlowProgram) -> Self {
        Self {
            episode_s,
            flow,
            flow_period_s: DEFAULT_FLOW_PERIOD_S,
            low_speed_kmh: LOW_SPEED_KMH,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Simulation {
    net: Arc<Network>,
    episode: EpisodeConfig,
    episode_steps: u64,
    v_max: u8,
    low_speed_max: u8,
    state: SimState,
}

impl Simulation {
    pub fn new(net: Arc<Network>, episode: EpisodeConfig, seed: u64) -> Result<Self> {
        episode.flow.validate()?;
        let cfg = net.config();
        if !(episode.flow_period_s > 0.0) {
            return Err(crate::error::config_err("flow period must be positive"));
        }
        if !(episode.episode_s >= cfg.step_s) {
            return Err(crate::error::config_err("episode shorter than one step"));
        }
        let episode_steps = (episode.episode_s / cfg.step_s).round() as u64;
        let v_max = cfg.v_max();
        let low_speed_max = (0..=v_max)
            .take_while(|&v| cfg.speed_kmh(v) < episode.low_speed_kmh)
            .last()
            .unwrap_or(0);
        let n = net.intersections();
        let lanes = net.lane_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let origins = (0..net.paths().len())
            .map(|path| Origin {
                path,
                accumulator: rng.gen::<f64>(),
                waiting: 0,
            })
            .collect();
        let state = SimState {
            step: 0,
            cells: vec![None; lanes * net.cells()],
            zones: vec![None; lanes],
            holding: vec![None; lanes],
            phases: vec![
                PhaseState {
                    current: 0,
                    amber_remaining: 0
                };
                n
            ],
            green_elapsed: vec![0; n],
            green_sum_s: vec![[0.0; PHASES]; n],
            green_count: vec![[0; PHASES]; n],
            origins,
            rng,
            next_id: 0,
            inserted: 0,
            exited: 0,
            wait_sum: 0.0,
            fuel_sum: 0.0,
            queue_sum: 0.0,
        };
        Ok(Self {
            net,
            episode,
            episode_steps,
            v_max,
            low_speed_max,
            state,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_arc(&self) -> &Arc<Network> {
        &self.net
    }

    pub fn state(&self) -> &SimState {
        &self.state
    }

    pub fn episode_steps(&self) -> u64 {
        self.episode_steps
    }

    pub fn done(&self) -> bool {
        self.state.step >= self.episode_steps
    }

    pub fn v_max(&self) -> u8 {
        self.v_max
    }

    /// Largest speed in cells per step still counted as low speed.
    pub fn low_speed_max(&self) -> u8 {
        self.low_speed_max
    }

    pub fn phases(&self) -> &[PhaseState] {
        &self.state.phases
    }

    /// Green steps completed by the current phase of intersection `i`.
    pub fn green_elapsed(&self, i: usize) -> u64 {
        self.state.green_elapsed[i]
    }

    pub fn vehicle_at(&self, lane: LaneId, cell: usize) -> Option<&Vehicle> {
        self.state.cells[lane * self.net.cells() + cell].as_ref()
    }

    pub fn holding(&self, lane: LaneId) -> Option<&Vehicle> {
        self.state.holding[lane].as_ref()
    }

    pub fn in_zone(&self, lane: LaneId) -> Option<&Vehicle> {
        self.state.zones[lane].as_ref().map(|z| &z.vehicle)
    }

    /// Vehicles currently on lanes, in conflict zones or in holding cells.
    pub fn present(&self) -> u64 {
        let s = &self.state;
        (s.cells.iter().filter(|c| c.is_some()).count()
            + s.zones.iter().filter(|c| c.is_some()).count()
            + s.holding.iter().filter(|c| c.is_some()).count()) as u64
    }

    /// Vehicles generated by the demand but not yet placed on the network.
    pub fn waiting_outside(&self) -> u64 {
        self.state.origins.iter().map(|o| o.waiting).sum()
    }

    /// Places a vehicle directly on a lane; for tests and scenario set-up.
    pub fn place_vehicle(&mut self, lane: LaneId, cell: usize, path: usize, hop: usize, speed: u8) -> Result<()> {
        let k = self.net.cells();
        if lane >= self.net.lane_count() || cell >= k || path >= self.net.paths().len() {
            return Err(Error::Config("vehicle placement out of range".into()));
        }
        let idx = lane * k + cell;
        if self.state.cells[idx].is_some() {
            return Err(Error::Config(format!("cell {cell} of lane {lane} is occupied")));
        }
        let v = self.new_vehicle(path, hop, speed.min(self.v_max));
        self.state.cells[idx] = Some(v);
        self.state.inserted += 1;
        Ok(())
    }

    /// Removes all scheduled demand so tests can run on a hand-built scene.
    pub fn clear_demand(&mut self) {
        self.episode.flow = FlowProgram {
            name: self.episode.flow.name,
            segments: vec![crate::flow::Segment {
                fraction: 1.0,
                per_episode: [0.0; crate::topology::ROUTES],
            }],
        };
        for o in &mut self.state.origins {
            o.accumulator = 0.0;
            o.waiting = 0;
        }
    }

    fn new_vehicle(&mut self, path: usize, hop: usize, speed: u8) -> Vehicle {
        let id = self.state.next_id;
        self.state.next_id += 1;
        Vehicle {
            id,
            path: path as u16,
            hop: hop as u16,
            speed,
            wait_s: 0.0,
            fuel: 0.0,
        }
    }

    /// Advances the world by one step under `action` (one switch request per
    /// intersection).
    pub fn step(&mut self, action: &[bool]) -> Result<StepReport> {
        let n = self.net.intersections();
        if action.len() != n {
            return Err(Error::ActionLength {
                expected: n,
                actual: action.len(),
            });
        }
        self.update_signals(action);
        self.follow();
        self.exit_zones();
        self.enter_junctions();
        self.insert();
        for i in 0..n {
            if self.state.phases[i].amber_remaining == 0 {
                self.state.green_elapsed[i] += 1;
            }
        }
        self.state.step += 1;
        let report = self.observe();
        self.state.queue_sum += report.queue_m;
        Ok(report)
    }

    fn update_signals(&mut self, action: &[bool]) {
        let amber_steps = self.net.config().amber_steps;
        let step_s = self.net.config().step_s;
        let s = &mut self.state;
        for (i, &switch) in action.iter().enumerate() {
            let ph = &mut s.phases[i];
            if ph.amber_remaining > 0 {
                ph.amber_remaining -= 1;
                if ph.amber_remaining == 0 {
                    ph.current = (ph.current + 1) % PHASES;
                    s.green_elapsed[i] = 0;
                }
            } else if switch {
                s.green_sum_s[i][ph.current] += s.green_elapsed[i] as f64 * step_s;
                s.green_count[i][ph.current] += 1;
                s.green_elapsed[i] = 0;
                if amber_steps == 0 {
                    ph.current = (ph.current + 1) % PHASES;
                } else {
                    ph.amber_remaining = amber_steps;
                }
            }
        }
    }

    fn follow(&mut self) {
        let k = self.net.cells();
        let step_s = self.net.config().step_s;
        let v_max = self.v_max;
        for link_id in 0..self.net.links().len() {
            let sink = self.net.links()[link_id].to.is_none();
            for idx in 0..3 {
                let lane = Network::lane(link_id, idx);
                let base = lane * k;
                // front boundary: sink lanes run off the end, junction lanes stop at K-1
                let mut ahead: isize = if sink { isize::MAX } else { k as isize };
                for p in (0..k).rev() {
                    let Some(mut v) = self.state.cells[base + p].take() else {
                        continue;
                    };
                    let gap = (ahead - p as isize - 1).max(0);
                    let speed = (v.speed as isize + 1).min(v_max as isize).min(gap) as u8;
                    v.account(speed, step_s);
                    let target = p + speed as usize;
                    if target >= k {
                        self.state.exited += 1;
                        self.state.wait_sum += v.wait_s;
                        self.state.fuel_sum += v.fuel;
                    } else {
                        self.state.cells[base + target] = Some(v);
                    }
                    ahead = p as isize;
                }
            }
        }
        for slot in self.state.holding.iter_mut().flatten() {
            slot.account(0, step_s);
        }
    }

    /// Lane a vehicle should take on the link after crossing `hop`.
    fn receiving_lane(&self, v: &Vehicle) -> LaneId {
        let path = &self.net.paths()[v.path as usize];
        let hop = v.hop as usize;
        let out = path.hops[hop].out_link;
        let idx = path
            .hops
            .get(hop + 1)
            .map(|h| h.movement.lane())
            .unwrap_or(Movement::Through.lane());
        Network::lane(out, idx)
    }

    fn exit_zones(&mut self) {
        let k = self.net.cells();
        let step_s = self.net.config().step_s;
        for lane in 0..self.state.zones.len() {
            let Some(mut slot) = self.state.zones[lane].take() else {
                continue;
            };
            slot.remaining = slot.remaining.saturating_sub(1);
            let target = self.receiving_lane(&slot.vehicle) * k;
            if slot.remaining == 0 && self.state.cells[target].is_none() {
                slot.vehicle.account(1, step_s);
                slot.vehicle.hop += 1;
                self.state.cells[target] = Some(slot.vehicle);
            } else {
                let speed = if slot.remaining == 0 { 0 } else { 1 };
                slot.vehicle.account(speed, step_s);
                self.state.zones[lane] = Some(slot);
            }
        }
    }

    fn enter_junctions(&mut self) {
        let k = self.net.cells();
        for i in 0..self.net.intersections() {
            let green = self.state.phases[i].green();
            for side in Side::ALL {
                let link = self.net.entry_link(i, side);
                for movement in [Movement::Right, Movement::Through, Movement::Left] {
                    let lane = Network::lane(link, movement.lane());
                    let served = match phase_of(side, movement) {
                        None => true,
                        Some(p) => green == Some(p),
                    };
                    let head = lane * k + k - 1;
                    if served {
                        if self.state.zones[lane].is_some() {
                            continue;
                        }
                        let from_holding = self.state.holding[lane].is_some();
                        let candidate = if from_holding {
                            self.state.holding[lane].as_ref()
                        } else {
                            self.state.cells[head].as_ref()
                        };
                        let Some(v) = candidate else { continue };
                        // a moving occupant clears the entry cell before the crossing ends
                        let target = self.receiving_lane(v) * k;
                        if self.state.cells[target].as_ref().is_some_and(|o| o.speed == 0) {
                            continue;
                        }
                        let vehicle = if from_holding {
                            self.state.holding[lane].take()
                        } else {
                            self.state.cells[head].take()
                        }
                        .expect("candidate present");
                        self.state.zones[lane] = Some(ZoneSlot {
                            vehicle,
                            remaining: CROSSING_STEPS,
                        });
                    } else if movement == Movement::Left
                        && green == phase_of(side, Movement::Through)
                        && self.state.holding[lane].is_none()
                        && self.state.cells[head].is_some()
                    {
                        self.state.holding[lane] = self.state.cells[head].take();
                    }
                }
            }
        }
    }

    fn insert(&mut self) {
        let k = self.net.cells();
        let step_s = self.net.config().step_s;
        let rates = self
            .episode
            .flow
            .rates_at(self.state.step, self.episode_steps, self.episode.flow_period_s);
        for o in 0..self.state.origins.len() {
            let path_idx = self.state.origins[o].path;
            let path = &self.net.paths()[path_idx];
            let lane = Network::lane(path.source_link(), path.hops[0].movement.lane());
            let rate = rates[path.route - 1];
            let origin = &mut self.state.origins[o];
            origin.accumulator += rate * step_s;
            while origin.accumulator >= 1.0 {
                origin.accumulator -= 1.0;
                origin.waiting += 1;
            }
            if origin.waiting > 0 && self.state.cells[lane * k].is_none() {
                self.state.origins[o].waiting -= 1;
                let v = self.new_vehicle(path_idx, 0, self.v_max);
                self.state.cells[lane * k] = Some(v);
                self.state.inserted += 1;
            }
        }
    }

    /// Low-speed vehicles per lane, including a left-turner parked in the
    /// lane's holding cell.
    pub fn low_speed_counts(&self) -> Vec<u32> {
        let k = self.net.cells();
        let mut counts = vec![0u32; self.net.lane_count()];
        for (lane, count) in counts.iter_mut().enumerate() {
            let cells = &self.state.cells[lane * k..(lane + 1) * k];
            *count = cells
                .iter()
                .flatten()
                .filter(|v| v.speed <= self.low_speed_max)
                .count() as u32;
            if self.state.holding[lane].is_some() {
                *count += 1;
            }
        }
        counts
    }

    /// Per-intersection low-speed counts on entry lanes grouped by the phase
    /// serving them.
    pub fn phase_counts(&self, low_speed: &[u32]) -> Vec<PhaseCounts> {
        (0..self.net.intersections())
            .map(|i| {
                let mut by_phase = [0u32; PHASES];
                for side in Side::ALL {
                    let link = self.net.entry_link(i, side);
                    for movement in [Movement::Through, Movement::Left] {
                        let phase = phase_of(side, movement).expect("non-right movement");
                        by_phase[phase] += low_speed[Network::lane(link, movement.lane())];
                    }
                }
                PhaseCounts {
                    current: self.state.phases[i].current,
                    by_phase,
                }
            })
            .collect()
    }

    /// Queue length in metres: contiguous stopped vehicles back from each
    /// stop line, summed over all junction entry lanes.
    pub fn queue_length_m(&self) -> f64 {
        let k = self.net.cells();
        let mut slots = 0usize;
        for (link_id, link) in self.net.links().iter().enumerate() {
            if link.to.is_none() {
                continue;
            }
            for idx in 0..3 {
                let base = Network::lane(link_id, idx) * k;
                slots += (0..k)
                    .rev()
                    .map_while(|p| self.state.cells[base + p].as_ref().filter(|v| v.speed == 0))
                    .count();
            }
        }
        slots as f64 * QUEUE_SLOT_M
    }

    /// Observation of the current state.
    pub fn observe(&self) -> StepReport {
        let low_speed = self.low_speed_counts();
        let groups = self.phase_counts(&low_speed);
        StepReport {
            step: self.state.step,
            low_speed,
            groups,
            queue_m: self.queue_length_m(),
        }
    }

    pub fn metrics_snapshot(&self) -> MetricRow {
        let s = &self.state;
        let has_exited = s.exited > 0;
        let mean = |sum: f64| if has_exited { sum / s.exited as f64 } else { 0.0 };
        let phase_durations = s
            .green_sum_s
            .iter()
            .zip(&s.green_count)
            .map(|(sum, count)| {
                let mut out = [0.0; PHASES];
                for p in 0..PHASES {
                    if count[p] > 0 {
                        out[p] = sum[p] / count[p] as f64;
                    }
                }
                out
            })
            .collect();
        MetricRow {
            queue_m: self.queue_length_m(),
            mean_queue_m: if s.step > 0 {
                s.queue_sum / s.step as f64
            } else {
                0.0
            },
            awt_s: mean(s.wait_sum),
            afc: mean(s.fuel_sum),
            has_exited,
            phase_durations,
            inserted: s.inserted,
            exited: s.exited,
            present: self.present(),
        }
    }

    /// Checks the structural invariants: conservation, one vehicle per cell
    /// (by construction of the storage) and no duplicated ids.
    pub fn check_invariants(&self) -> Result<(), String> {
        let s = &self.state;
        let present = self.present();
        if s.inserted != s.exited + present {
            return Err(format!(
                "conservation violated at step {}: inserted {} exited {} present {}",
                s.step, s.inserted, s.exited, present
            ));
        }
        let mut ids: Vec<u64> = s
            .cells
            .iter()
            .flatten()
            .chain(s.holding.iter().flatten())
            .map(|v| v.id)
            .chain(s.zones.iter().flatten().map(|z| z.vehicle.id))
            .collect();
        let total = ids.len();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != total {
            return Err(format!("duplicate vehicle id at step {}", s.step));
        }
        if let Some(v) = s.cells.iter().flatten().find(|v| v.speed > self.v_max) {
            return Err(format!("vehicle {} exceeds v_max", v.id));
        }
        for ph in &s.phases {
            if ph.current >= PHASES || ph.amber_remaining > self.net.config().amber_steps {
                return Err(format!("illegal phase state {ph:?}"));
            }
        }
        Ok(())
    }

    /// Draws from the simulation's generator; kept for scenario randomisation.
    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.state.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowName;
    use crate::topology::NetworkConfig;

    fn sim(rows: usize, cols: usize, flow: FlowName) -> Simulation {
        let net = Arc::new(Network::build(NetworkConfig::grid(rows, cols)).unwrap());
        Simulation::new(net, EpisodeConfig::new(4000.0, FlowProgram::preset(flow)), 1)
        .unwrap()
    }

    fn empty_sim() -> Simulation {
        let mut s = sim(1, 1, FlowName::Low);
        s.clear_demand();
        s
    }

    /// Path and lane of southbound through traffic entering from the north.
    fn southbound(s: &Simulation) -> (usize, LaneId) {
        let p = s.network().paths().iter().position(|p| p.route == 3).unwrap();
        let link = s.network().paths()[p].source_link();
        (p, Network::lane(link, Movement::Through.lane()))
    }

    #[test]
    fn single_vehicle_accelerates_by_one() {
        let mut s = empty_sim();
        let (path, lane) = southbound(&s);
        s.place_vehicle(lane, 10, path, 0, 0).unwrap();
        s.step(&[false]).unwrap();
        let v = s.vehicle_at(lane, 11).expect("moved one cell");
        assert_eq!(v.speed, 1);
        assert!(s.vehicle_at(lane, 10).is_none());
    }

    #[test]
    fn red_head_stops_and_waits() {
        let mut s = empty_sim();
        // eastbound traffic is red while phase 0 (NS through) is green
        let p = s.network().paths().iter().position(|p| p.route == 2).unwrap();
        let lane = Network::lane(s.network().paths()[p].source_link(), 1);
        let k = s.network().cells();
        s.place_vehicle(lane, k - 1, p, 0, 2).unwrap();
        s.step(&[false]).unwrap();
        let v = s.vehicle_at(lane, k - 1).unwrap();
        assert_eq!(v.speed, 0);
        assert_eq!(v.wait_s, 1.0);
    }

    #[test]
    fn green_head_crosses_in_two_steps() {
        let mut s = empty_sim();
        let (path, lane) = southbound(&s);
        let k = s.network().cells();
        s.place_vehicle(lane, k - 1, path, 0, 0).unwrap();
        s.step(&[false]).unwrap();
        assert!(s.in_zone(lane).is_some());
        s.step(&[false]).unwrap();
        assert!(s.in_zone(lane).is_some());
        s.step(&[false]).unwrap();
        assert!(s.in_zone(lane).is_none());
        let out = s.network().paths()[path].sink_link();
        let exit_lane = Network::lane(out, 1);
        assert!(s.vehicle_at(exit_lane, 0).is_some());
        s.check_invariants().unwrap();
    }

    #[test]
    fn zero_action_keeps_phases() {
        let mut s = sim(2, 2, FlowName::Middle);
        let before = s.phases().to_vec();
        for _ in 0..50 {
            s.step(&[false; 4]).unwrap();
        }
        assert_eq!(s.phases(), &before[..]);
    }

    #[test]
    fn switch_inserts_one_amber_step() {
        let mut s = empty_sim();
        s.step(&[true]).unwrap();
        assert_eq!(s.phases()[0], PhaseState { current: 0, amber_remaining: 1 });
        // ignored during amber
        s.step(&[true]).unwrap();
        assert_eq!(s.phases()[0], PhaseState { current: 1, amber_remaining: 0 });
        s.step(&[true]).unwrap();
        s.step(&[false]).unwrap();
        assert_eq!(s.phases()[0].current, 2);
    }

    #[test]
    fn rejects_wrong_action_length() {
        let mut s = sim(2, 2, FlowName::Low);
        assert!(matches!(
            s.step(&[false; 3]),
            Err(Error::ActionLength { expected: 4, actual: 3 })
        ));
    }

    #[test]
    fn low_speed_threshold() {
        let s = empty_sim();
        // 1 cell/step = 18 km/h, 2 cells/step = 36 km/h
        assert_eq!(s.low_speed_max(), 1);
    }

    #[test]
    fn low_speed_counts_per_lane() {
        let mut s = empty_sim();
        let (path, lane) = southbound(&s);
        for (cell, speed) in [(10, 0), (20, 1), (30, 2), (40, 3)] {
            s.place_vehicle(lane, cell, path, 0, speed).unwrap();
        }
        let counts = s.low_speed_counts();
        assert_eq!(counts[lane], 2);
        assert_eq!(counts.iter().sum::<u32>(), 2);
    }

    #[test]
    fn queue_of_four_is_thirty_metres() {
        let mut s = empty_sim();
        let p = s.network().paths().iter().position(|p| p.route == 2).unwrap();
        let lane = Network::lane(s.network().paths()[p].source_link(), 1);
        let k = s.network().cells();
        for c in 0..4 {
            s.place_vehicle(lane, k - 1 - c, p, 0, 0).unwrap();
        }
        // a stopped vehicle behind a gap is not part of the queue
        s.place_vehicle(lane, k - 7, p, 0, 0).unwrap();
        assert_eq!(s.queue_length_m(), 30.0);
    }

    #[test]
    fn empty_metrics_flag_no_exits() {
        let s = empty_sim();
        let m = s.metrics_snapshot();
        assert!(!m.has_exited);
        assert_eq!(m.awt_s, 0.0);
        assert_eq!(m.afc, 0.0);
    }

    #[test]
    fn left_turner_uses_holding_cell() {
        let mut s = empty_sim();
        let p = s.network().paths().iter().position(|p| p.route == 5).unwrap();
        let lane = Network::lane(s.network().paths()[p].source_link(), Movement::Left.lane());
        let k = s.network().cells();
        s.place_vehicle(lane, k - 1, p, 0, 0).unwrap();
        s.place_vehicle(lane, k - 2, p, 0, 0).unwrap();
        // phase 0 is NS through: first left-turner moves into the holding cell
        s.step(&[false]).unwrap();
        assert!(s.holding(lane).is_some());
        assert!(s.in_zone(lane).is_none());
        assert_eq!(s.low_speed_counts()[lane], 2);
        // NS-left green: the held vehicle crosses first
        s.step(&[true]).unwrap();
        s.step(&[false]).unwrap();
        assert!(s.holding(lane).is_none());
        assert!(s.in_zone(lane).is_some());
        s.check_invariants().unwrap();
    }

    #[test]
    fn demand_inserts_vehicles() {
        let mut s = sim(1, 1, FlowName::High);
        for _ in 0..400 {
            s.step(&[false]).unwrap();
            s.check_invariants().unwrap();
        }
        // 6 routes at 0.25 veh/s, minus what is still held outside
        assert_eq!(s.state().inserted + s.waiting_outside(), 600);
        assert!(s.state().exited > 0);
    }
}
