use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::{GridLayout, MdpDef, Outcome, RewardDist, TabularMdp, TABULAR_EPISODE_CAP};
use crate::{Error, Result};

/// `(row, col)`, row 0 at the top.
pub type Cell = (usize, usize);

/// Up, down, left, right.
const MOVES: [(isize, isize); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Declarative gridworld with a high-variance reward region and a rewarding
/// absorbing goal.
///
/// Rewards are attached to transitions: leaving a risky cell adds a draw
/// from `risky_reward`; entering the goal adds `goal_reward`. Every other
/// transition pays 0. Moving into a wall or off the grid leaves the agent in
/// place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default)]
    pub walls: Vec<Cell>,
    #[serde(default)]
    pub risky: Vec<Cell>,
    pub risky_reward: RewardDist,
    pub goal: Cell,
    pub goal_reward: f64,
    /// Episodes start uniformly in one of these cells.
    pub start: Vec<Cell>,
    /// Probability that the chosen move is replaced by a uniformly random one.
    #[serde(default)]
    pub slip: f64,
    pub discount: f64,
    #[serde(default = "default_cap")]
    pub max_steps: usize,
}

fn default_cap() -> usize {
    TABULAR_EPISODE_CAP
}

/// Layout knobs for [`four_rooms`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourRoomsOptions {
    pub discount: f64,
    pub slip: f64,
    pub frozen: Vec<Cell>,
    pub start: Vec<Cell>,
    pub goal: Cell,
}

impl Default for FourRoomsOptions {
    fn default() -> Self {
        // 2x4 frozen patch just inside the upper hallway of the top-right room.
        let frozen = (3..5).flat_map(|r| (7..11).map(move |c| (r, c))).collect();
        FourRoomsOptions { discount: 0.99, slip: 0.0, frozen, start: vec![(2, 2)], goal: (9, 9) }
    }
}

/// Layout knobs for [`puddle_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PuddleGridOptions {
    pub size: usize,
    pub puddle_size: usize,
    pub discount: f64,
    pub slip: f64,
    pub start: Vec<Cell>,
}

impl Default for PuddleGridOptions {
    fn default() -> Self {
        PuddleGridOptions { size: 10, puddle_size: 4, discount: 0.99, slip: 0.0, start: vec![(9, 0)] }
    }
}

const FOUR_ROOMS: [&str; 13] = [
    "#############",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#     #     #",
    "## ####     #",
    "#     ### ###",
    "#     #     #",
    "#     #     #",
    "#           #",
    "#     #     #",
    "#############",
];

impl GridSpec {
    /// 13x13 four-rooms gridworld with hallways at (3,6), (6,2), (7,9) and
    /// (10,6).
    pub fn four_rooms(opts: &FourRoomsOptions) -> GridSpec {
        let walls = FOUR_ROOMS
            .iter()
            .enumerate()
            .flat_map(|(r, line)| line.bytes().enumerate().filter(|&(_, b)| b == b'#').map(move |(c, _)| (r, c)))
            .collect();
        GridSpec {
            width: 13,
            height: 13,
            walls,
            risky: opts.frozen.clone(),
            risky_reward: RewardDist::normal(0.0, 8.0),
            goal: opts.goal,
            goal_reward: 50.0,
            start: opts.start.clone(),
            slip: opts.slip,
            discount: opts.discount,
            max_steps: TABULAR_EPISODE_CAP,
        }
    }

    /// Open square grid with a centred square puddle and the goal in the
    /// top-right corner.
    pub fn puddle(opts: &PuddleGridOptions) -> GridSpec {
        let n = opts.size;
        let lo = (n - opts.puddle_size) / 2;
        let hi = lo + opts.puddle_size;
        GridSpec {
            width: n,
            height: n,
            walls: Vec::new(),
            risky: (lo..hi).flat_map(|r| (lo..hi).map(move |c| (r, c))).collect(),
            risky_reward: RewardDist::normal(0.0, 8.0),
            goal: (0, n - 1),
            goal_reward: 50.0,
            start: opts.start.clone(),
            slip: opts.slip,
            discount: opts.discount,
            max_steps: TABULAR_EPISODE_CAP,
        }
    }

    fn in_bounds(&self, (r, c): Cell) -> bool {
        r < self.height && c < self.width
    }

    fn is_wall(&self, cell: Cell) -> bool {
        self.walls.contains(&cell)
    }

    fn open_cells(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|r| (0..self.width).map(move |c| (r, c)))
            .filter(|&cell| !self.is_wall(cell))
            .collect()
    }

    fn move_from(&self, (r, c): Cell, action: usize) -> Cell {
        let (dr, dc) = MOVES[action];
        let (nr, nc) = (r as isize + dr, c as isize + dc);
        if nr < 0 || nc < 0 {
            return (r, c);
        }
        let next = (nr as usize, nc as usize);
        if !self.in_bounds(next) || self.is_wall(next) {
            (r, c)
        } else {
            next
        }
    }

    /// Checks the layout invariants, including that the goal is reachable from
    /// every open cell.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidModel(m));
        let all = self.walls.iter().chain(&self.risky).chain(&self.start).chain(std::iter::once(&self.goal));
        if let Some(cell) = all.clone().find(|&&c| !self.in_bounds(c)) {
            return bad(format!("cell {cell:?} outside {}x{} grid", self.height, self.width));
        }
        if self.is_wall(self.goal) {
            return bad("goal is a wall".into());
        }
        if let Some(c) = self.risky.iter().chain(&self.start).find(|&&c| self.is_wall(c)) {
            return bad(format!("cell {c:?} is a wall"));
        }
        if self.start.is_empty() {
            return bad("no start cells".into());
        }
        if !(0.0..=1.0).contains(&self.slip) {
            return bad(format!("slip {} outside [0, 1]", self.slip));
        }
        let dist = self.distances_to_goal();
        if let Some(cell) = self.open_cells().into_iter().find(|c| !dist.contains_key(c)) {
            return bad(format!("goal unreachable from {cell:?}"));
        }
        Ok(())
    }

    /// Shortest-path step counts to the goal (BFS over reversed moves).
    pub fn distances_to_goal(&self) -> std::collections::HashMap<Cell, usize> {
        let open = self.open_cells();
        let mut dist = std::collections::HashMap::new();
        dist.insert(self.goal, 0usize);
        let mut queue = VecDeque::from([self.goal]);
        while let Some(cell) = queue.pop_front() {
            let d = dist[&cell];
            for &prev in &open {
                if dist.contains_key(&prev) {
                    continue;
                }
                if (0..4).any(|a| self.move_from(prev, a) == cell && prev != cell) {
                    dist.insert(prev, d + 1);
                    queue.push_back(prev);
                }
            }
        }
        dist
    }

    pub fn to_mdp(&self) -> Result<TabularMdp> {
        self.validate()?;
        let cells = self.open_cells();
        let index = |cell: Cell| cells.iter().position(|&c| c == cell).expect("open cell");
        let n_states = cells.len();
        let n_actions = MOVES.len();
        let goal = index(self.goal);

        let mut outcomes = Vec::with_capacity(n_states * n_actions);
        for (s, &cell) in cells.iter().enumerate() {
            for a in 0..n_actions {
                if s == goal {
                    outcomes.push(vec![Outcome { next: s, prob: 1.0, reward: RewardDist::constant(0.0) }]);
                    continue;
                }
                let mut row: Vec<Outcome> = Vec::new();
                let mut add = |next_cell: Cell, prob: f64| {
                    if prob == 0.0 {
                        return;
                    }
                    let next = index(next_cell);
                    if let Some(o) = row.iter_mut().find(|o| o.next == next) {
                        o.prob += prob;
                    } else {
                        row.push(Outcome { next, prob, reward: self.reward_for(cell, next_cell) });
                    }
                };
                add(self.move_from(cell, a), 1.0 - self.slip);
                for b in 0..n_actions {
                    add(self.move_from(cell, b), self.slip / n_actions as f64);
                }
                outcomes.push(row);
            }
        }

        let mut initial_dist = vec![0.0; n_states];
        for &c in &self.start {
            initial_dist[index(c)] += 1.0 / self.start.len() as f64;
        }
        let mut terminal = vec![false; n_states];
        terminal[goal] = true;
        let risky = cells.iter().map(|c| self.risky.contains(c)).collect();
        TabularMdp::new(MdpDef {
            n_states,
            n_actions,
            discount: self.discount,
            initial_dist,
            terminal,
            outcomes,
            max_steps: self.max_steps,
            layout: Some(GridLayout { width: self.width, height: self.height, cells, risky }),
        })
    }

    fn reward_for(&self, from: Cell, to: Cell) -> RewardDist {
        let base = if to == self.goal { self.goal_reward } else { 0.0 };
        if self.risky.contains(&from) {
            match self.risky_reward {
                RewardDist::Constant { value } => RewardDist::constant(base + value),
                RewardDist::Normal { mean, std } => RewardDist::normal(base + mean, std),
            }
        } else {
            RewardDist::constant(base)
        }
    }

    /// `#` wall, `F` risky, `S` start, `G` goal, `.` open.
    pub fn ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = (r, c);
                let ch = if self.is_wall(cell) {
                    '#'
                } else if cell == self.goal {
                    'G'
                } else if self.start.contains(&cell) {
                    'S'
                } else if self.risky.contains(&cell) {
                    'F'
                } else {
                    '.'
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }
}

/// Four-rooms gridworld with a frozen patch of `N(0, 8)` rewards.
pub fn four_rooms(opts: &FourRoomsOptions) -> Result<TabularMdp> {
    GridSpec::four_rooms(opts).to_mdp()
}

/// Discrete puddle world with a central `N(0, 8)` puddle.
pub fn puddle_grid(opts: &PuddleGridOptions) -> Result<TabularMdp> {
    GridSpec::puddle(opts).to_mdp()
}
