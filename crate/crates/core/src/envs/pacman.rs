use super::grid::{arrow, GridSpec};
use super::TabularEnv;
use crate::domain::{ActionId, StateId};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// `.` floor, `#` wall, `A` agent start, `G` ghost start, `o` pellet.
pub const LEGEND: &str = ".#AGo";

/// Agent bottom-left, ghost top-right, one pellet beside the ghost's corner.
pub const DEFAULT_LAYOUT: [&str; 5] = ["....G", "...o.", ".....", ".o...", "A...."];

pub const STEP_REWARD: f64 = -1.0;
pub const PELLET_REWARD: f64 = 10.0;
pub const CLEAR_BONUS: f64 = 100.0;
pub const CAUGHT_REWARD: f64 = -100.0;

const MAX_PELLETS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacmanView {
    pub agent: usize,
    pub ghost: usize,
    /// Bit `i` set while pellet `i` is still on the board.
    pub pellets: u32,
}

/// Small pursuit gridworld: collect every pellet before the ghost catches you.
///
/// Each step the agent moves first (walls and borders block), then the ghost
/// moves: with probability `chase_p` greedily toward the agent (ties broken by
/// action order), otherwise in a uniformly random direction. An ordinary move
/// costs 1, eating a pellet pays 10 instead, eating the last pellet adds a
/// 100 bonus and ends the episode, and being caught pays −100 and ends it.
#[derive(Debug, Clone)]
pub struct Pacman {
    grid: GridSpec,
    agent_start: usize,
    ghost_start: usize,
    pellet_cells: Vec<usize>,
    chase_p: f64,
    max_steps: usize,
}

impl Pacman {
    pub fn new(grid: GridSpec, chase_p: f64, max_steps: usize) -> Result<Self> {
        let agent_start = grid
            .find_unique(b'A')?
            .ok_or_else(|| Error::InvalidMap("pacman layout needs an 'A' start".into()))?;
        let ghost_start = grid
            .find_unique(b'G')?
            .ok_or_else(|| Error::InvalidMap("pacman layout needs a 'G' ghost".into()))?;
        let pellet_cells = grid.find_all(b'o');
        if pellet_cells.is_empty() || pellet_cells.len() > MAX_PELLETS {
            return Err(Error::InvalidMap(format!(
                "pacman layout needs 1..={MAX_PELLETS} pellets, found {}",
                pellet_cells.len()
            )));
        }
        if !(0.0..=1.0).contains(&chase_p) {
            return Err(Error::InvalidConfig(format!(
                "ghost chase probability {chase_p} outside [0, 1]"
            )));
        }
        Ok(Self {
            grid,
            agent_start,
            ghost_start,
            pellet_cells,
            chase_p,
            max_steps,
        })
    }

    pub fn default_layout() -> GridSpec {
        GridSpec::parse(&DEFAULT_LAYOUT, LEGEND).expect("default layout is valid")
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn num_pellets(&self) -> usize {
        self.pellet_cells.len()
    }

    pub fn encode(&self, v: PacmanView) -> StateId {
        let cells = self.grid.num_cells();
        StateId(((v.agent * cells + v.ghost) << self.pellet_cells.len()) | v.pellets as usize)
    }

    pub fn decode(&self, s: StateId) -> PacmanView {
        let k = self.pellet_cells.len();
        let cells = self.grid.num_cells();
        let pos = s.0 >> k;
        PacmanView {
            agent: pos / cells,
            ghost: pos % cells,
            pellets: (s.0 & ((1 << k) - 1)) as u32,
        }
    }

    fn step_cell(&self, cell: usize, dir: usize) -> usize {
        let next = self.grid.neighbour(cell, dir);
        if self.grid.at(next) == b'#' {
            cell
        } else {
            next
        }
    }

    fn manhattan(&self, a: usize, b: usize) -> usize {
        let (ar, ac) = self.grid.coords(a);
        let (br, bc) = self.grid.coords(b);
        ar.abs_diff(br) + ac.abs_diff(bc)
    }

    fn ghost_move(&self, ghost: usize, agent: usize, rng: &mut RngStream) -> usize {
        if rng.bernoulli(self.chase_p) {
            (0..4)
                .map(|d| self.step_cell(ghost, d))
                .min_by_key(|&c| self.manhattan(c, agent))
                .unwrap_or(ghost)
        } else {
            self.step_cell(ghost, rng.below(4))
        }
    }

    pub fn all_pellets_reachable(&self) -> bool {
        let seen = self.grid.reachable(self.agent_start, |c| c != b'#');
        self.pellet_cells.iter().all(|&p| seen[p])
    }
}

impl TabularEnv for Pacman {
    fn num_states(&self) -> usize {
        let cells = self.grid.num_cells();
        (cells * cells) << self.pellet_cells.len()
    }

    fn num_actions(&self) -> usize {
        4
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn start(&self, _rng: &mut RngStream) -> StateId {
        self.encode(PacmanView {
            agent: self.agent_start,
            ghost: self.ghost_start,
            pellets: (1u32 << self.pellet_cells.len()) - 1,
        })
    }

    fn transition(&self, s: StateId, a: ActionId, rng: &mut RngStream) -> (StateId, f64, bool) {
        let mut v = self.decode(s);
        v.agent = self.step_cell(v.agent, a.0);
        if v.agent == v.ghost {
            return (self.encode(v), CAUGHT_REWARD, true);
        }
        let mut reward = STEP_REWARD;
        if let Some(i) = self.pellet_cells.iter().position(|&c| c == v.agent) {
            if v.pellets & (1 << i) != 0 {
                v.pellets &= !(1 << i);
                reward = PELLET_REWARD;
                if v.pellets == 0 {
                    return (self.encode(v), PELLET_REWARD + CLEAR_BONUS, true);
                }
            }
        }
        v.ghost = self.ghost_move(v.ghost, v.agent, rng);
        if v.ghost == v.agent {
            return (self.encode(v), CAUGHT_REWARD, true);
        }
        (self.encode(v), reward, false)
    }

    fn is_success(&self, s: StateId) -> bool {
        let v = self.decode(s);
        v.pellets == 0 && v.agent != v.ghost
    }

    fn is_terminal_state(&self, s: StateId) -> bool {
        let v = self.decode(s);
        v.pellets == 0 || v.agent == v.ghost
    }

    fn render(&self, s: StateId, proposed: Option<ActionId>) -> String {
        let v = self.decode(s);
        let mut rows: Vec<Vec<char>> = self
            .grid
            .row_strings()
            .into_iter()
            .map(|r| {
                r.chars()
                    .map(|c| if matches!(c, 'A' | 'G' | 'o') { '.' } else { c })
                    .collect()
            })
            .collect();
        for (i, &cell) in self.pellet_cells.iter().enumerate() {
            if v.pellets & (1 << i) != 0 {
                let (r, c) = self.grid.coords(cell);
                rows[r][c] = 'o';
            }
        }
        let (gr, gc) = self.grid.coords(v.ghost);
        rows[gr][gc] = 'G';
        let (ar, ac) = self.grid.coords(v.agent);
        rows[ar][ac] = proposed.map(|a| arrow(a.0)).unwrap_or('A');
        rows.into_iter()
            .map(|r| r.into_iter().collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn env(chase_p: f64) -> Pacman {
        Pacman::new(Pacman::default_layout(), chase_p, 500).unwrap()
    }

    #[test]
    fn encoding_round_trips() {
        let e = env(0.8);
        for i in 0..e.num_states() {
            assert_eq!(e.encode(e.decode(StateId(i))), StateId(i));
        }
        assert_eq!(e.num_states(), 25 * 25 * 4);
    }

    #[test]
    fn reset_has_two_pellets() {
        let e = env(0.8);
        let s = e.start(&mut derive_stream(0, "e", 0));
        let v = e.decode(s);
        assert_eq!(v.pellets.count_ones(), 2);
        assert_eq!(e.grid().coords(v.agent), (4, 0));
        assert_eq!(e.grid().coords(v.ghost), (0, 4));
    }

    #[test]
    fn pellet_clear_and_caught_rewards() {
        let e = env(1.0);
        let mut rng = derive_stream(0, "e", 0);
        let g = e.grid();
        // agent right below the pellet at (3,1), ghost far away, both pellets left
        let s = e.encode(PacmanView {
            agent: g.cell(4, 1),
            ghost: g.cell(0, 4),
            pellets: 0b11,
        });
        let (n, r, done) = e.transition(s, ActionId(3), &mut rng);
        assert_eq!((r, done), (PELLET_REWARD, false));
        assert_eq!(e.decode(n).pellets.count_ones(), 1);
        // last pellet: +10 and the +100 clear bonus
        let p_near_ghost = g.cell(1, 3);
        let s = e.encode(PacmanView {
            agent: g.cell(2, 3),
            ghost: g.cell(4, 4),
            pellets: 0b01,
        });
        let idx = e.pellet_cells.iter().position(|&c| c == p_near_ghost).unwrap();
        assert_eq!(idx, 0);
        let (n, r, done) = e.transition(s, ActionId(3), &mut rng);
        assert_eq!((r, done), (PELLET_REWARD + CLEAR_BONUS, true));
        assert!(e.is_success(n));
        // walking into the ghost
        let s = e.encode(PacmanView {
            agent: g.cell(2, 2),
            ghost: g.cell(2, 3),
            pellets: 0b11,
        });
        assert_eq!(e.transition(s, ActionId(2), &mut rng).1, CAUGHT_REWARD);
    }

    #[test]
    fn greedy_ghost_chases() {
        let e = env(1.0);
        let mut rng = derive_stream(0, "e", 0);
        let g = e.grid();
        let s = e.encode(PacmanView {
            agent: g.cell(4, 0),
            ghost: g.cell(0, 4),
            pellets: 0b11,
        });
        let (n, r, _) = e.transition(s, ActionId(0), &mut rng);
        assert_eq!(r, STEP_REWARD);
        // left and down both shorten the distance; left comes first in action order
        assert_eq!(e.decode(n).ghost, g.cell(0, 3));
    }

    #[test]
    fn layout_validation() {
        let no_ghost = GridSpec::parse(&["A.o"], LEGEND).unwrap();
        assert!(Pacman::new(no_ghost, 0.8, 10).is_err());
        let walled = GridSpec::parse(&["A#o", "##G"], LEGEND).unwrap();
        let p = Pacman::new(walled, 0.8, 10).unwrap();
        assert!(!p.all_pellets_reachable());
        assert!(env(0.8).all_pellets_reachable());
    }
}
