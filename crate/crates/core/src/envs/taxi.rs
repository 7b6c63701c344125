use super::TabularEnv;
use crate::domain::{ActionId, StateId};
use crate::rng::RngStream;

const DESC: [&str; 7] = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
];

/// Pickup / drop-off landmarks R, G, Y, B as (row, col).
pub const LOCS: [(usize, usize); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];

pub const SOUTH: usize = 0;
pub const NORTH: usize = 1;
pub const EAST: usize = 2;
pub const WEST: usize = 3;
pub const PICKUP: usize = 4;
pub const DROPOFF: usize = 5;

/// Decoded taxi state. `passenger == 4` means the passenger is in the taxi.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaxiView {
    pub row: usize,
    pub col: usize,
    pub passenger: usize,
    pub destination: usize,
}

impl TaxiView {
    pub fn encode(self) -> StateId {
        StateId(((self.row * 5 + self.col) * 5 + self.passenger) * 4 + self.destination)
    }

    pub fn decode(s: StateId) -> Self {
        let mut i = s.0;
        let destination = i % 4;
        i /= 4;
        let passenger = i % 5;
        i /= 5;
        Self {
            row: i / 5,
            col: i % 5,
            passenger,
            destination,
        }
    }
}

/// The classic 5×5 taxi task: 500 states, 6 actions, −1 per step, +20 for a
/// correct drop-off (terminal), −10 for an illegal pickup or drop-off.
#[derive(Debug, Clone)]
pub struct Taxi {
    max_steps: usize,
    starts: Vec<StateId>,
}

impl Taxi {
    pub fn new(max_steps: usize) -> Self {
        let mut starts = Vec::new();
        for row in 0..5 {
            for col in 0..5 {
                for passenger in 0..4 {
                    for destination in 0..4 {
                        if passenger != destination {
                            starts.push(
                                TaxiView {
                                    row,
                                    col,
                                    passenger,
                                    destination,
                                }
                                .encode(),
                            );
                        }
                    }
                }
            }
        }
        Self { max_steps, starts }
    }

    /// All states an episode can begin in.
    pub fn start_states(&self) -> &[StateId] {
        &self.starts
    }

    fn desc(row: usize, col: usize) -> u8 {
        DESC[row].as_bytes()[col]
    }
}

impl TabularEnv for Taxi {
    fn num_states(&self) -> usize {
        500
    }

    fn num_actions(&self) -> usize {
        6
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn start(&self, rng: &mut RngStream) -> StateId {
        self.starts[rng.below(self.starts.len())]
    }

    fn transition(&self, s: StateId, a: ActionId, _rng: &mut RngStream) -> (StateId, f64, bool) {
        let mut v = TaxiView::decode(s);
        let mut reward = -1.0;
        let mut done = false;
        let here = (v.row, v.col);
        match a.0 {
            SOUTH => v.row = (v.row + 1).min(4),
            NORTH => v.row = v.row.saturating_sub(1),
            EAST => {
                if Self::desc(1 + v.row, 2 * v.col + 2) == b':' {
                    v.col = (v.col + 1).min(4);
                }
            }
            WEST => {
                if Self::desc(1 + v.row, 2 * v.col) == b':' {
                    v.col = v.col.saturating_sub(1);
                }
            }
            PICKUP => {
                if v.passenger < 4 && here == LOCS[v.passenger] {
                    v.passenger = 4;
                } else {
                    reward = -10.0;
                }
            }
            _ => {
                if v.passenger == 4 && here == LOCS[v.destination] {
                    v.passenger = v.destination;
                    done = true;
                    reward = 20.0;
                } else if v.passenger == 4 && LOCS.contains(&here) {
                    v.passenger = LOCS.iter().position(|&l| l == here).unwrap();
                } else {
                    reward = -10.0;
                }
            }
        }
        (v.encode(), reward, done)
    }

    fn is_success(&self, s: StateId) -> bool {
        let v = TaxiView::decode(s);
        v.passenger == v.destination
    }

    fn is_terminal_state(&self, s: StateId) -> bool {
        self.is_success(s)
    }

    fn render(&self, s: StateId, proposed: Option<ActionId>) -> String {
        let v = TaxiView::decode(s);
        let mut rows: Vec<Vec<char>> = DESC.iter().map(|r| r.chars().collect()).collect();
        let letters = ['R', 'G', 'Y', 'B'];
        let (dr, dc) = LOCS[v.destination];
        rows[1 + dr][2 * dc + 1] = letters[v.destination].to_ascii_lowercase();
        if v.passenger < 4 {
            let (pr, pc) = LOCS[v.passenger];
            rows[1 + pr][2 * pc + 1] = 'P';
        }
        let mark = match proposed.map(|a| a.0) {
            Some(SOUTH) => 'v',
            Some(NORTH) => '^',
            Some(EAST) => '>',
            Some(WEST) => '<',
            Some(PICKUP) => '+',
            Some(DROPOFF) => '-',
            _ => {
                if v.passenger == 4 {
                    'T'
                } else {
                    't'
                }
            }
        };
        rows[1 + v.row][2 * v.col + 1] = mark;
        rows.into_iter()
            .map(|r| r.into_iter().collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }
}
