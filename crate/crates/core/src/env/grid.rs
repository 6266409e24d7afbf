//! Rectangular pickup-and-delivery grid with depots and interior walls.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_action, Action, EnvError, EnvKind, Environment, Outcome, StateFeatures, StepResult, SubGoal};

pub type Cell = (usize, usize);

/// A wall blocks movement between two orthogonally adjacent cells. Stored
/// with the smaller cell first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Wall(pub Cell, pub Cell);

impl Wall {
    pub fn new(a: Cell, b: Cell) -> Self {
        if a <= b {
            Wall(a, b)
        } else {
            Wall(b, a)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub rows: usize,
    pub cols: usize,
    pub depots: Vec<Cell>,
    pub walls: BTreeSet<Wall>,
    pub reward_step: f64,
    pub reward_dropoff: f64,
    pub reward_illegal: f64,
    pub max_steps_per_episode: u32,
}

const GRID_ACTIONS: [Action; 6] = [
    Action::MoveNorth,
    Action::MoveSouth,
    Action::MoveEast,
    Action::MoveWest,
    Action::Pickup,
    Action::Dropoff,
];

const GRID_ACTION_NODES: [&str; 6] = [
    "action_north",
    "action_south",
    "action_east",
    "action_west",
    "action_pickup",
    "action_dropoff",
];

impl GridConfig {
    /// Empty `rows`×`cols` grid with default rewards and no depots.
    pub fn blank(rows: usize, cols: usize) -> Self {
        GridConfig {
            rows,
            cols,
            depots: Vec::new(),
            walls: BTreeSet::new(),
            reward_step: -1.0,
            reward_dropoff: 20.0,
            reward_illegal: -10.0,
            max_steps_per_episode: (10 * (rows + cols)) as u32,
        }
    }

    /// The classic 5×5 taxi map: depots R, G, Y, B and six wall segments.
    pub fn taxi_v3() -> Self {
        let mut cfg = GridConfig::blank(5, 5);
        cfg.depots = vec![(0, 0), (0, 4), (4, 0), (4, 3)];
        for (r, c) in [(0, 1), (1, 1), (3, 0), (4, 0), (3, 2), (4, 2)] {
            cfg.walls.insert(Wall::new((r, c), (r, c + 1)));
        }
        cfg
    }

    /// Seeded `rows`×`cols` instance: depots on the corners and
    /// ⌊rows·cols/25⌋ two-cell vertical wall segments that never disconnect
    /// the grid.
    pub fn generated(rows: usize, cols: usize, seed: u64) -> Result<Self, EnvError> {
        if rows == 0 || cols == 0 {
            return Err(EnvError::Config("grid dimensions must be positive".into()));
        }
        let mut cfg = GridConfig::blank(rows, cols);
        let mut depots = vec![(0, 0), (0, cols - 1), (rows - 1, 0), (rows - 1, cols - 1)];
        let mut seen = HashSet::new();
        depots.retain(|d| seen.insert(*d));
        if depots.len() < 2 {
            return Err(EnvError::Config(format!("a {rows}x{cols} grid cannot hold two distinct depots")));
        }
        cfg.depots = depots;
        if cols < 2 {
            return Ok(cfg);
        }
        let target = rows * cols / 25;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut placed = 0;
        let mut attempts = 0;
        while placed < target && attempts < target * 20 + 20 {
            attempts += 1;
            let r = rng.random_range(0..rows);
            let c = rng.random_range(0..cols - 1);
            let mut segment = vec![Wall::new((r, c), (r, c + 1))];
            if r + 1 < rows {
                segment.push(Wall::new((r + 1, c), (r + 1, c + 1)));
            }
            if segment.iter().any(|w| cfg.walls.contains(w)) {
                continue;
            }
            for w in &segment {
                cfg.walls.insert(*w);
            }
            if cfg.is_connected() {
                placed += 1;
            } else {
                for w in &segment {
                    cfg.walls.remove(w);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(EnvError::Config("grid dimensions must be positive".into()));
        }
        if self.depots.len() < 2 {
            return Err(EnvError::Config("at least two depots are required".into()));
        }
        let mut seen = HashSet::new();
        for &(r, c) in &self.depots {
            if r >= self.rows || c >= self.cols {
                return Err(EnvError::Config(format!("depot ({r}, {c}) lies outside the grid")));
            }
            if !seen.insert((r, c)) {
                return Err(EnvError::Config(format!("duplicate depot ({r}, {c})")));
            }
        }
        for w in &self.walls {
            let Wall((r1, c1), (r2, c2)) = *w;
            if r1 >= self.rows || r2 >= self.rows || c1 >= self.cols || c2 >= self.cols {
                return Err(EnvError::Config(format!("wall {w:?} references a cell outside the grid")));
            }
            if r1.abs_diff(r2) + c1.abs_diff(c2) != 1 {
                return Err(EnvError::Config(format!("wall {w:?} does not join adjacent cells")));
            }
        }
        if self.max_steps_per_episode == 0 {
            return Err(EnvError::Config("max_steps_per_episode must be positive".into()));
        }
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_blocked(&self, from: Cell, to: Cell) -> bool {
        self.walls.contains(&Wall::new(from, to))
    }

    /// Neighbouring cell reached by a compass move, or `None` when the move
    /// hits the boundary or a wall.
    pub fn neighbor(&self, cell: Cell, action: Action) -> Option<Cell> {
        let (r, c) = cell;
        let to = match action {
            Action::MoveNorth if r > 0 => (r - 1, c),
            Action::MoveSouth if r + 1 < self.rows => (r + 1, c),
            Action::MoveEast if c + 1 < self.cols => (r, c + 1),
            Action::MoveWest if c > 0 => (r, c - 1),
            _ => return None,
        };
        if self.is_blocked(cell, to) {
            None
        } else {
            Some(to)
        }
    }

    fn is_connected(&self) -> bool {
        let n = self.cell_count();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([(0usize, 0usize)]);
        seen[0] = true;
        let mut count = 1;
        while let Some(cell) = queue.pop_front() {
            for a in &GRID_ACTIONS[..4] {
                if let Some(next) = self.neighbor(cell, *a) {
                    let id = next.0 * self.cols + next.1;
                    if !seen[id] {
                        seen[id] = true;
                        count += 1;
                        queue.push_back(next);
                    }
                }
            }
        }
        count == n
    }

    /// Parses the plain-text map format: a `rows cols` header followed by
    /// `depot r c` and `wall r1 c1 r2 c2` lines. `#` starts a comment.
    pub fn parse_map(text: &str) -> Result<Self, EnvError> {
        let mut cfg: Option<GridConfig> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| EnvError::Parse { line: i + 1, message };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let nums = |from: usize, count: usize| -> Result<Vec<usize>, EnvError> {
                if fields.len() != from + count {
                    return Err(err(format!("expected {count} numbers, found {}", fields.len() - from)));
                }
                fields[from..]
                    .iter()
                    .map(|f| f.parse::<usize>().map_err(|e| err(format!("{f}: {e}"))))
                    .collect()
            };
            match (&mut cfg, fields[0]) {
                (None, _) => {
                    let v = nums(0, 2)?;
                    cfg = Some(GridConfig::blank(v[0], v[1]));
                }
                (Some(c), "depot") => {
                    let v = nums(1, 2)?;
                    c.depots.push((v[0], v[1]));
                }
                (Some(c), "wall") => {
                    let v = nums(1, 4)?;
                    c.walls.insert(Wall::new((v[0], v[1]), (v[2], v[3])));
                }
                (Some(_), other) => return Err(err(format!("unknown directive `{other}`"))),
            }
        }
        let cfg = cfg.ok_or(EnvError::Parse { line: 0, message: "empty map file".into() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_map_string(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for (r, c) in &self.depots {
            let _ = writeln!(out, "depot {r} {c}");
        }
        for Wall((r1, c1), (r2, c2)) in &self.walls {
            let _ = writeln!(out, "wall {r1} {c1} {r2} {c2}");
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Passenger {
    At(usize),
    InTaxi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub taxi_row: usize,
    pub taxi_col: usize,
    pub passenger: Passenger,
    pub destination: usize,
    pub done: bool,
    pub steps: u32,
}

impl GridState {
    pub fn taxi(&self) -> Cell {
        (self.taxi_row, self.taxi_col)
    }
}

/// A validated grid configuration.
#[derive(Debug, Clone)]
pub struct GridEnv {
    config: GridConfig,
}

impl GridEnv {
    pub fn new(config: GridConfig) -> Result<Self, EnvError> {
        config.validate()?;
        Ok(GridEnv { config })
    }

    pub fn taxi_v3() -> Self {
        GridEnv::new(GridConfig::taxi_v3()).expect("built-in map is valid")
    }

    pub fn config(&self) -> &GridConfig {
        &self.config
    }

    pub fn depot_count(&self) -> usize {
        self.config.depots.len()
    }

    /// Fresh episode state from an explicit seed.
    pub fn reset_seeded(&self, seed: u64) -> GridState {
        self.reset(&mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Builds a start state, rejecting out-of-range components.
    pub fn state(&self, taxi: Cell, passenger: Passenger, destination: usize) -> Result<GridState, EnvError> {
        let d = self.depot_count();
        if taxi.0 >= self.config.rows || taxi.1 >= self.config.cols {
            return Err(EnvError::Config(format!("taxi cell {taxi:?} outside the grid")));
        }
        if destination >= d || matches!(passenger, Passenger::At(p) if p >= d) {
            return Err(EnvError::Config("depot index out of range".into()));
        }
        Ok(GridState { taxi_row: taxi.0, taxi_col: taxi.1, passenger, destination, done: false, steps: 0 })
    }

    /// Number of codes produced by [`GridEnv::encode`].
    pub fn num_codes(&self) -> usize {
        let d = self.depot_count();
        self.config.cell_count() * (d + 1) * d
    }

    /// Mixed-radix code over (cell, passenger, destination); the passenger
    /// digit uses `depots` for "in taxi".
    pub fn encode(&self, s: &GridState) -> u64 {
        let d = self.depot_count();
        let cell = s.taxi_row * self.config.cols + s.taxi_col;
        let pax = match s.passenger {
            Passenger::At(p) => p,
            Passenger::InTaxi => d,
        };
        (((cell * (d + 1)) + pax) * d + s.destination) as u64
    }

    pub fn decode(&self, code: u64) -> Option<GridState> {
        if code as usize >= self.num_codes() {
            return None;
        }
        let d = self.depot_count();
        let code = code as usize;
        let destination = code % d;
        let rest = code / d;
        let pax = rest % (d + 1);
        let cell = rest / (d + 1);
        Some(GridState {
            taxi_row: cell / self.config.cols,
            taxi_col: cell % self.config.cols,
            passenger: if pax == d { Passenger::InTaxi } else { Passenger::At(pax) },
            destination,
            done: false,
            steps: 0,
        })
    }

    /// Every state reachable from some reset state, by breadth-first search
    /// over the deterministic transition function (step budget ignored).
    pub fn reachable_codes(&self) -> BTreeSet<u64> {
        let d = self.depot_count();
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::new();
        for r in 0..self.config.rows {
            for c in 0..self.config.cols {
                for p in 0..d {
                    for dest in (0..d).filter(|&x| x != p) {
                        let s = GridState {
                            taxi_row: r,
                            taxi_col: c,
                            passenger: Passenger::At(p),
                            destination: dest,
                            done: false,
                            steps: 0,
                        };
                        if seen.insert(self.encode(&s)) {
                            queue.push_back(s);
                        }
                    }
                }
            }
        }
        while let Some(s) = queue.pop_front() {
            for a in 0..GRID_ACTIONS.len() {
                let out = self.transition(&s, a);
                let mut next = out.next_state;
                if seen.insert(self.encode(&next)) && !out.done {
                    next.steps = 0;
                    queue.push_back(next);
                }
            }
        }
        seen
    }

    fn depot_at(&self, cell: Cell) -> Option<usize> {
        self.config.depots.iter().position(|&d| d == cell)
    }

    // Transition ignoring the step budget.
    fn transition(&self, s: &GridState, action: usize) -> StepResult<GridState> {
        let cfg = &self.config;
        let mut next = *s;
        let taxi = s.taxi();
        let (reward, outcome, subgoal, distance) = match GRID_ACTIONS[action] {
            Action::Pickup => match s.passenger {
                Passenger::At(p) if cfg.depots[p] == taxi => {
                    next.passenger = Passenger::InTaxi;
                    (cfg.reward_step, Outcome::PickedUp, Some(SubGoal::PaxInTaxi), 0.0)
                }
                _ => (cfg.reward_illegal, Outcome::Illegal, None, 0.0),
            },
            Action::Dropoff => {
                if s.passenger == Passenger::InTaxi && self.depot_at(taxi) == Some(s.destination) {
                    next.passenger = Passenger::At(s.destination);
                    next.done = true;
                    (cfg.reward_dropoff, Outcome::DroppedOff, Some(SubGoal::Dropoff), 0.0)
                } else {
                    (cfg.reward_illegal, Outcome::Illegal, None, 0.0)
                }
            }
            mv => match cfg.neighbor(taxi, mv) {
                Some((r, c)) => {
                    next.taxi_row = r;
                    next.taxi_col = c;
                    (cfg.reward_step, Outcome::Moved, None, 1.0)
                }
                None => (cfg.reward_step, Outcome::Blocked, None, 0.0),
            },
        };
        next.steps = s.steps.saturating_add(1);
        StepResult { done: next.done, next_state: next, reward, outcome, subgoal_achieved: subgoal, distance }
    }
}

impl Environment for GridEnv {
    type State = GridState;

    fn id(&self) -> String {
        format!("grid{}x{}d{}w{}", self.config.rows, self.config.cols, self.depot_count(), self.config.walls.len())
    }

    fn kind(&self) -> EnvKind {
        EnvKind::Grid
    }

    fn actions(&self) -> &[Action] {
        &GRID_ACTIONS
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> GridState {
        let cfg = &self.config;
        let d = cfg.depots.len();
        let cell = rng.random_range(0..cfg.cell_count());
        let pax = rng.random_range(0..d);
        let mut dest = rng.random_range(0..d - 1);
        if dest >= pax {
            dest += 1;
        }
        GridState {
            taxi_row: cell / cfg.cols,
            taxi_col: cell % cfg.cols,
            passenger: Passenger::At(pax),
            destination: dest,
            done: false,
            steps: 0,
        }
    }

    fn step(&self, state: &GridState, action: usize) -> Result<StepResult<GridState>, EnvError> {
        if state.done {
            return Err(EnvError::SteppingDoneState);
        }
        check_action(action, GRID_ACTIONS.len())?;
        let mut out = self.transition(state, action);
        if out.next_state.steps >= self.config.max_steps_per_episode {
            out.next_state.done = true;
            out.done = true;
        }
        Ok(out)
    }

    fn state_key(&self, state: &GridState) -> u64 {
        self.encode(state)
    }

    fn features(&self, s: &GridState) -> StateFeatures {
        let taxi = s.taxi();
        StateFeatures {
            taxi_on_pax_loc: matches!(s.passenger, Passenger::At(p) if self.config.depots[p] == taxi),
            taxi_on_dest: self.config.depots[s.destination] == taxi,
            pax_in_taxi: s.passenger == Passenger::InTaxi,
            delivered: s.passenger == Passenger::At(s.destination),
            position: Some(taxi),
        }
    }

    fn is_done(&self, state: &GridState) -> bool {
        state.done
    }

    fn action_node(&self, index: usize) -> &'static str {
        GRID_ACTION_NODES[index]
    }

    fn position_domains(&self) -> Option<(usize, usize)> {
        Some((self.config.rows, self.config.cols))
    }
}

/// Shuffled list of every valid reset state; handy for exhaustive evaluation.
pub fn all_start_states(env: &GridEnv, seed: u64) -> Vec<GridState> {
    let cfg = env.config();
    let d = env.depot_count();
    let mut out = Vec::new();
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            for p in 0..d {
                for dest in (0..d).filter(|&x| x != p) {
                    out.push(env.state((r, c), Passenger::At(p), dest).expect("in range"));
                }
            }
        }
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    out
}
