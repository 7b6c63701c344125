use super::grid::{arrow, GridSpec};
use super::TabularEnv;
use crate::domain::{ActionId, StateId};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub const LEGEND: &str = "SFHG";

/// The four evaluation maps, from open to maze-like.
pub const MAPS: [[&str; 5]; 4] = [
    ["SFFHFFFF", "FHFFFHFG", "FFHHFFFH", "FFFFFHFF", "HFHFFHFF"],
    ["SFFHHHFF", "FFFFHHFG", "FFFFFFFF", "FFFFHHFF", "FFFHHHFF"],
    ["SFHFFHHF", "FFHFFHFG", "FFHFFFFF", "FFHFFHFF", "FFFFFHHF"],
    ["SFHFFFFH", "HFHHFHHG", "HFHFFFHF", "HFHFHFHF", "FFFFHFFF"],
];

pub fn builtin_map(variant: usize) -> Result<GridSpec> {
    let rows = MAPS
        .get(variant)
        .ok_or_else(|| Error::InvalidMap(format!("unknown frozen lake variant {variant}")))?;
    GridSpec::parse(rows, LEGEND)
}

/// Gridworld where the agent walks on ice to a goal while avoiding holes.
///
/// Actions: 0 left, 1 down, 2 right, 3 up. Reaching `G` pays 1 and ends the
/// episode, falling into `H` pays 0 and ends it. With `slippery` the agent
/// moves in the intended or either perpendicular direction with equal odds.
#[derive(Debug, Clone)]
pub struct FrozenLake {
    grid: GridSpec,
    start: usize,
    slippery: bool,
    max_steps: usize,
}

impl FrozenLake {
    pub fn new(grid: GridSpec, slippery: bool, max_steps: usize) -> Result<Self> {
        // maps without an explicit start begin in the top-left corner
        let start = grid.find_unique(b'S')?.unwrap_or(0);
        Ok(Self {
            grid,
            start,
            slippery,
            max_steps,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn start_cell(&self) -> usize {
        self.start
    }

    pub fn goal_reachable(&self) -> bool {
        if self.grid.at(self.start) == b'G' {
            return true;
        }
        let seen = self.grid.reachable(self.start, |c| c != b'H');
        self.grid.find_all(b'G').iter().any(|&g| seen[g])
    }
}

impl TabularEnv for FrozenLake {
    fn num_states(&self) -> usize {
        self.grid.num_cells()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn start(&self, _rng: &mut RngStream) -> StateId {
        StateId(self.start)
    }

    fn transition(&self, s: StateId, a: ActionId, rng: &mut RngStream) -> (StateId, f64, bool) {
        let dir = if self.slippery {
            (a.0 + 3 + rng.below(3)) % 4
        } else {
            a.0
        };
        let next = self.grid.neighbour(s.0, dir);
        match self.grid.at(next) {
            b'G' => (StateId(next), 1.0, true),
            b'H' => (StateId(next), 0.0, true),
            _ => (StateId(next), 0.0, false),
        }
    }

    fn is_success(&self, s: StateId) -> bool {
        self.grid.at(s.0) == b'G'
    }

    fn is_terminal_state(&self, s: StateId) -> bool {
        matches!(self.grid.at(s.0), b'G' | b'H')
    }

    fn render(&self, s: StateId, proposed: Option<ActionId>) -> String {
        let mut rows: Vec<Vec<char>> = self
            .grid
            .row_strings()
            .into_iter()
            .map(|r| r.chars().collect())
            .collect();
        let (r, c) = self.grid.coords(s.0);
        rows[r][c] = proposed.map(|a| arrow(a.0)).unwrap_or('@');
        rows.into_iter()
            .map(|r| r.into_iter().collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }
}
