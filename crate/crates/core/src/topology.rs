//! Static description of a grid road network: intersections, directed links,
//! lanes and the six demand routes.
//!
//! Intersections are numbered row-major, row 0 being the northern edge. Every
//! intersection has four approaches with three entry and three exit lanes
//! each. A link between two neighbouring intersections is a single object:
//! it is an exit link of the upstream junction and an entry link of the
//! downstream one.

use crate::error::{config_err, Result};

/// Static parameters of a grid network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub rows: usize,
    pub cols: usize,
    pub lane_length_m: f64,
    pub cell_m: f64,
    pub lanes_per_approach: usize,
    pub max_speed_kmh: f64,
    pub amber_steps: u32,
    pub step_s: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            rows: 1,
            cols: 1,
            lane_length_m: 500.0,
            cell_m: 5.0,
            lanes_per_approach: 3,
            max_speed_kmh: 50.0,
            amber_steps: 1,
            step_s: 1.0,
        }
    }
}

impl NetworkConfig {
    pub fn grid(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(config_err(format!(
                "grid must have at least one intersection, got {}x{}",
                self.rows, self.cols
            )));
        }
        if !(self.cell_m > 0.0) || !(self.lane_length_m > 0.0) {
            return Err(config_err("lane and cell lengths must be positive"));
        }
        let ratio = self.lane_length_m / self.cell_m;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return Err(config_err(format!(
                "lane length {} m is not a multiple of the cell length {} m",
                self.lane_length_m, self.cell_m
            )));
        }
        if self.lanes_per_approach != 3 {
            return Err(config_err(
                "only three lanes per approach (right, through, left) are supported",
            ));
        }
        if !(self.step_s > 0.0) {
            return Err(config_err("step length must be positive"));
        }
        if self.max_speed_kmh <= 0.0 {
            return Err(config_err("maximum speed must be positive"));
        }
        if self.v_max() == 0 {
            return Err(config_err("maximum speed is below one cell per step"));
        }
        Ok(())
    }

    pub fn intersections(&self) -> usize {
        self.rows * self.cols
    }

    /// Cells per lane.
    pub fn cells(&self) -> usize {
        (self.lane_length_m / self.cell_m).round() as usize
    }

    /// Lanes per intersection slice: entry and exit lanes on all four sides.
    pub fn lanes_per_slice(&self) -> usize {
        2 * 4 * self.lanes_per_approach
    }

    /// Closest integer number of cells per step to the speed limit.
    pub fn v_max(&self) -> u8 {
        let cells = self.max_speed_kmh / 3.6 * self.step_s / self.cell_m;
        cells.round().clamp(0.0, u8::MAX as f64) as u8
    }

    /// Speed of `cells_per_step` in km/h.
    pub fn speed_kmh(&self, cells_per_step: u8) -> f64 {
        cells_per_step as f64 * self.cell_m / self.step_s * 3.6
    }
}

/// Compass side of an intersection, also used as a travel heading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    North = 0,
    East = 1,
    South = 2,
    West = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::North, Side::East, Side::South, Side::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn opposite(self) -> Side {
        Side::ALL[(self.index() + 2) % 4]
    }

    /// Heading after a left turn when travelling towards `self`.
    pub fn left(self) -> Side {
        Side::ALL[(self.index() + 3) % 4]
    }

    pub fn right(self) -> Side {
        Side::ALL[(self.index() + 1) % 4]
    }

    fn is_north_south(self) -> bool {
        matches!(self, Side::North | Side::South)
    }
}

/// Turning movement through a junction. The discriminant is the lane index
/// within an approach: rightmost lane turns right, the middle one goes
/// straight, the leftmost turns left.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Movement {
    Right = 0,
    Through = 1,
    Left = 2,
}

impl Movement {
    pub fn lane(self) -> usize {
        self as usize
    }

    pub fn from_lane(lane: usize) -> Option<Movement> {
        match lane {
            0 => Some(Movement::Right),
            1 => Some(Movement::Through),
            2 => Some(Movement::Left),
            _ => None,
        }
    }

    pub fn heading_after(self, heading: Side) -> Side {
        match self {
            Movement::Right => heading.right(),
            Movement::Through => heading,
            Movement::Left => heading.left(),
        }
    }
}

/// Number of signal phases per intersection.
pub const PHASES: usize = 4;

/// Fixed cyclic phase order: NS-through, NS-left, EW-through, EW-left.
pub fn phase_serves(phase: usize, approach: Side, movement: Movement) -> bool {
    match movement {
        Movement::Right => true,
        Movement::Through => {
            (phase == 0 && approach.is_north_south()) || (phase == 2 && !approach.is_north_south())
        }
        Movement::Left => {
            (phase == 1 && approach.is_north_south()) || (phase == 3 && !approach.is_north_south())
        }
    }
}

/// The signal phase giving green to a non-right movement on `approach`.
pub fn phase_of(approach: Side, movement: Movement) -> Option<usize> {
    let axis = if approach.is_north_south() { 0 } else { 2 };
    match movement {
        Movement::Right => None,
        Movement::Through => Some(axis),
        Movement::Left => Some(axis + 1),
    }
}

/// Directed road segment carrying three lanes in one heading.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    /// Upstream junction, `None` for a boundary source.
    pub from: Option<usize>,
    /// Downstream junction, `None` for a boundary sink.
    pub to: Option<usize>,
    pub heading: Side,
}

/// Lane identifier: `link * 3 + lane index`.
pub type LaneId = usize;

/// One junction traversal along a route.
#[derive(Debug, Clone, PartialEq)]
pub struct Hop {
    pub junction: usize,
    pub approach: Side,
    pub movement: Movement,
    pub in_link: usize,
    pub out_link: usize,
}

/// A concrete path of one demand route from one boundary origin.
#[derive(Debug, Clone, PartialEq)]
pub struct RoutePath {
    /// Demand route 1..=6.
    pub route: usize,
    pub hops: Vec<Hop>,
}

impl RoutePath {
    pub fn source_link(&self) -> usize {
        self.hops[0].in_link
    }

    pub fn sink_link(&self) -> usize {
        self.hops[self.hops.len() - 1].out_link
    }
}

/// Number of demand routes.
pub const ROUTES: usize = 6;

/// Immutable grid network built from a [`NetworkConfig`].
#[derive(Debug, Clone)]
pub struct Network {
    cfg: NetworkConfig,
    links: Vec<Link>,
    entry: Vec<[usize; 4]>,
    exit: Vec<[usize; 4]>,
    paths: Vec<RoutePath>,
}

impl Network {
    pub fn build(cfg: NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let (rows, cols) = (cfg.rows, cfg.cols);
        let n = rows * cols;
        let neighbour = |i: usize, side: Side| -> Option<usize> {
            let (r, c) = (i / cols, i % cols);
            match side {
                Side::North if r > 0 => Some(i - cols),
                Side::South if r + 1 < rows => Some(i + cols),
                Side::West if c > 0 => Some(i - 1),
                Side::East if c + 1 < cols => Some(i + 1),
                _ => None,
            }
        };

        let mut links = Vec::new();
        let mut exit = vec![[usize::MAX; 4]; n];
        let mut entry = vec![[usize::MAX; 4]; n];
        for i in 0..n {
            for side in Side::ALL {
                let to = neighbour(i, side);
                exit[i][side.index()] = links.len();
                if let Some(j) = to {
                    entry[j][side.opposite().index()] = links.len();
                }
                links.push(Link {
                    from: Some(i),
                    to,
                    heading: side,
                });
            }
        }
        for i in 0..n {
            for side in Side::ALL {
                if neighbour(i, side).is_none() {
                    entry[i][side.index()] = links.len();
                    links.push(Link {
                        from: None,
                        to: Some(i),
                        heading: side.opposite(),
                    });
                }
            }
        }

        let trace = |route: usize, start: usize, heading: Side, first: Movement| -> RoutePath {
            let mut hops = Vec::new();
            let mut junction = start;
            let mut heading = heading;
            let mut movement = first;
            loop {
                let approach = heading.opposite();
                let out_heading = movement.heading_after(heading);
                hops.push(Hop {
                    junction,
                    approach,
                    movement,
                    in_link: entry[junction][approach.index()],
                    out_link: exit[junction][out_heading.index()],
                });
                heading = out_heading;
                movement = Movement::Through;
                match neighbour(junction, heading) {
                    Some(next) => junction = next,
                    None => break,
                }
            }
            RoutePath { route, hops }
        };

        let mut paths = Vec::new();
        for r in 0..rows {
            paths.push(trace(1, r * cols + cols - 1, Side::West, Movement::Through));
        }
        for r in 0..rows {
            paths.push(trace(2, r * cols, Side::East, Movement::Through));
        }
        for c in 0..cols {
            paths.push(trace(3, c, Side::South, Movement::Through));
        }
        for c in 0..cols {
            paths.push(trace(4, (rows - 1) * cols + c, Side::North, Movement::Through));
        }
        for c in 0..cols {
            paths.push(trace(5, c, Side::South, Movement::Left));
        }
        for c in 0..cols {
            paths.push(trace(6, (rows - 1) * cols + c, Side::North, Movement::Left));
        }

        Ok(Self {
            cfg,
            links,
            entry,
            exit,
            paths,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn intersections(&self) -> usize {
        self.cfg.intersections()
    }

    pub fn lanes_per_slice(&self) -> usize {
        self.cfg.lanes_per_slice()
    }

    pub fn cells(&self) -> usize {
        self.cfg.cells()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn lane_count(&self) -> usize {
        self.links.len() * 3
    }

    pub fn lane(link: usize, index: usize) -> LaneId {
        link * 3 + index
    }

    pub fn link_of(lane: LaneId) -> usize {
        lane / 3
    }

    pub fn lane_index(lane: LaneId) -> usize {
        lane % 3
    }

    /// Link arriving at junction `i` from `side`.
    pub fn entry_link(&self, i: usize, side: Side) -> usize {
        self.entry[i][side.index()]
    }

    /// Link leaving junction `i` towards `side`.
    pub fn exit_link(&self, i: usize, side: Side) -> usize {
        self.exit[i][side.index()]
    }

    pub fn paths(&self) -> &[RoutePath] {
        &self.paths
    }

    /// Undirected adjacencies between intersections, each carried by a pair
    /// of opposing links.
    pub fn interior_links(&self) -> usize {
        self.links
            .iter()
            .filter(|l| l.from.is_some() && l.to.is_some())
            .count()
            / 2
    }

    /// Slice row of a lane inside intersection `i`'s tensor slice, or `None`
    /// if the lane does not touch `i`. Rows are grouped per side (N, E, S, W),
    /// three entry lanes followed by three exit lanes.
    pub fn slice_row(&self, i: usize, lane: LaneId) -> Option<(usize, bool)> {
        let link = &self.links[Self::link_of(lane)];
        let idx = Self::lane_index(lane);
        if link.to == Some(i) {
            let side = link.heading.opposite();
            Some((side.index() * 6 + idx, true))
        } else if link.from == Some(i) {
            let side = link.heading;
            Some((side.index() * 6 + 3 + idx, false))
        } else {
            None
        }
    }
}
