//! Seedable tabular environments: PACMAN-style pursuit, Taxi and FrozenLake.

pub mod frozen_lake;
pub mod grid;
pub mod pacman;
pub mod taxi;

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::domain::{ActionId, StateId, Transition};
use crate::error::{Error, Result};
use crate::rng::RngStream;

pub use frozen_lake::FrozenLake;
pub use grid::GridSpec;
pub use pacman::{Pacman, PacmanView};
pub use taxi::{Taxi, TaxiView};

/// Dynamics of a finite environment with dense state and action indices.
pub trait TabularEnv: Send + Sync + std::fmt::Debug {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn max_steps(&self) -> usize;
    fn start(&self, rng: &mut RngStream) -> StateId;
    /// Returns `(next_state, reward, terminal)`.
    fn transition(&self, s: StateId, a: ActionId, rng: &mut RngStream) -> (StateId, f64, bool);
    /// Whether `s` is a solved end state (goal reached, passenger delivered, board cleared).
    fn is_success(&self, s: StateId) -> bool;
    fn is_terminal_state(&self, s: StateId) -> bool;
    /// Ascii board with the agent marked, using the proposed action's glyph when given.
    fn render(&self, s: StateId, proposed: Option<ActionId>) -> String;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Pacman,
    Taxi,
    FrozenLake,
}

impl std::str::FromStr for EnvKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pacman" => Ok(Self::Pacman),
            "taxi" => Ok(Self::Taxi),
            "frozen_lake" | "frozenlake" => Ok(Self::FrozenLake),
            other => Err(Error::InvalidConfig(format!("unknown environment kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for EnvKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pacman => "pacman",
            Self::Taxi => "taxi",
            Self::FrozenLake => "frozen_lake",
        })
    }
}

fn default_chase_p() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub kind: EnvKind,
    /// Built-in FrozenLake map index (0..=3).
    #[serde(default)]
    pub map_variant: Option<usize>,
    /// Inline ascii map; overrides `map_variant` and the PACMAN default layout.
    #[serde(default)]
    pub map: Option<Vec<String>>,
    /// Ascii map file; overrides `map`.
    #[serde(default)]
    pub map_file: Option<PathBuf>,
    /// Defaults to 500 for PACMAN and Taxi, 1000 for FrozenLake.
    #[serde(default)]
    pub max_steps: Option<usize>,
    #[serde(default = "default_chase_p")]
    pub ghost_chase_p: f64,
    #[serde(default)]
    pub slippery: bool,
}

impl EnvConfig {
    pub fn new(kind: EnvKind) -> Self {
        Self {
            kind,
            map_variant: None,
            map: None,
            map_file: None,
            max_steps: None,
            ghost_chase_p: default_chase_p(),
            slippery: false,
        }
    }

    pub fn pacman() -> Self {
        Self::new(EnvKind::Pacman)
    }

    pub fn taxi() -> Self {
        Self::new(EnvKind::Taxi)
    }

    pub fn frozen_lake(variant: usize) -> Self {
        Self {
            map_variant: Some(variant),
            ..Self::new(EnvKind::FrozenLake)
        }
    }

    pub fn effective_max_steps(&self) -> usize {
        self.max_steps.unwrap_or(match self.kind {
            EnvKind::Pacman | EnvKind::Taxi => 500,
            EnvKind::FrozenLake => 1000,
        })
    }

    /// Short human-readable name, e.g. `frozen_lake(3)`.
    pub fn label(&self) -> String {
        match (self.kind, self.map_variant) {
            (EnvKind::FrozenLake, Some(v)) => format!("frozen_lake({v})"),
            (k, _) => k.to_string(),
        }
    }

    fn custom_grid(&self, legend: &str) -> Result<Option<GridSpec>> {
        if let Some(path) = &self.map_file {
            return GridSpec::from_file(path, legend).map(Some);
        }
        match &self.map {
            Some(rows) => GridSpec::parse(rows, legend).map(Some),
            None => Ok(None),
        }
    }

    pub fn build(&self) -> Result<Environment> {
        let max_steps = self.effective_max_steps();
        if max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be positive".into()));
        }
        let dynamics = match self.kind {
            EnvKind::FrozenLake => {
                let grid = match self.custom_grid(frozen_lake::LEGEND)? {
                    Some(g) => g,
                    None => frozen_lake::builtin_map(
                        self.map_variant
                            .ok_or_else(|| Error::InvalidConfig("frozen lake needs map_variant or a map".into()))?,
                    )?,
                };
                Dynamics::FrozenLake(FrozenLake::new(grid, self.slippery, max_steps)?)
            }
            EnvKind::Taxi => Dynamics::Taxi(Taxi::new(max_steps)),
            EnvKind::Pacman => {
                let grid = self.custom_grid(pacman::LEGEND)?.unwrap_or_else(Pacman::default_layout);
                Dynamics::Pacman(Pacman::new(grid, self.ghost_chase_p, max_steps)?)
            }
        };
        Ok(Environment {
            config: self.clone(),
            dynamics: Arc::new(dynamics),
        })
    }
}

/// Position of a running episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnvState {
    pub state: StateId,
    pub step_count: usize,
    pub done: bool,
}

/// Decoded view of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StateView {
    Pacman(PacmanView),
    Taxi(TaxiView),
    FrozenLake { row: usize, col: usize },
}

#[derive(Debug)]
enum Dynamics {
    Pacman(Pacman),
    Taxi(Taxi),
    FrozenLake(FrozenLake),
}

/// A configured environment. Cheap to clone; dynamics are shared and immutable.
#[derive(Debug, Clone)]
pub struct Environment {
    config: EnvConfig,
    dynamics: Arc<Dynamics>,
}

impl Environment {
    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn dynamics(&self) -> &dyn TabularEnv {
        match self.dynamics.as_ref() {
            Dynamics::Pacman(e) => e,
            Dynamics::Taxi(e) => e,
            Dynamics::FrozenLake(e) => e,
        }
    }

    pub fn num_states(&self) -> usize {
        self.dynamics().num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.dynamics().num_actions()
    }

    pub fn max_steps(&self) -> usize {
        self.dynamics().max_steps()
    }

    pub fn reset(&self, rng: &mut RngStream) -> EnvState {
        EnvState {
            state: self.dynamics().start(rng),
            step_count: 0,
            done: false,
        }
    }

    /// Advances `state` by one action. The episode is forced to end at `max_steps`.
    pub fn step(&self, state: &mut EnvState, action: ActionId, rng: &mut RngStream) -> Result<Transition> {
        if state.done {
            return Err(Error::EpisodeTerminated);
        }
        let n = self.num_actions();
        if action.0 >= n {
            return Err(Error::ActionOutOfRange { index: action.0, n });
        }
        let (next, reward, terminal) = self.dynamics().transition(state.state, action, rng);
        state.step_count += 1;
        let terminal = terminal || state.step_count >= self.max_steps();
        let t = Transition {
            state: state.state,
            action,
            reward,
            next_state: next,
            terminal,
        };
        state.state = next;
        state.done = terminal;
        Ok(t)
    }

    pub fn is_success(&self, s: StateId) -> bool {
        self.dynamics().is_success(s)
    }

    pub fn render(&self, s: StateId, proposed: Option<ActionId>) -> String {
        self.dynamics().render(s, proposed)
    }

    pub fn decode(&self, s: StateId) -> StateView {
        match self.dynamics.as_ref() {
            Dynamics::Pacman(e) => StateView::Pacman(e.decode(s)),
            Dynamics::Taxi(_) => StateView::Taxi(TaxiView::decode(s)),
            Dynamics::FrozenLake(e) => {
                let (row, col) = e.grid().coords(s.0);
                StateView::FrozenLake { row, col }
            }
        }
    }
}

/// Whether the goal can be reached from the start, ignoring stochastic hazards.
pub fn optimal_reachable(config: &EnvConfig) -> Result<bool> {
    Ok(match config.kind {
        EnvKind::Taxi => true,
        EnvKind::FrozenLake => {
            let grid = match config.custom_grid(frozen_lake::LEGEND)? {
                Some(g) => g,
                None => frozen_lake::builtin_map(config.map_variant.unwrap_or(0))?,
            };
            FrozenLake::new(grid, false, 1)?.goal_reachable()
        }
        EnvKind::Pacman => {
            let grid = config
                .custom_grid(pacman::LEGEND)?
                .unwrap_or_else(Pacman::default_layout);
            Pacman::new(grid, config.ghost_chase_p, 1)?.all_pellets_reachable()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    #[test]
    fn counts_match_reference_sizes() {
        let taxi = EnvConfig::taxi().build().unwrap();
        assert_eq!((taxi.num_states(), taxi.num_actions()), (500, 6));
        let lake = EnvConfig::frozen_lake(2).build().unwrap();
        assert_eq!((lake.num_states(), lake.num_actions()), (40, 4));
        assert_eq!(lake.max_steps(), 1000);
        assert_eq!(EnvConfig::pacman().build().unwrap().max_steps(), 500);
    }

    #[test]
    fn reachability_checks() {
        for v in 0..4 {
            assert!(optimal_reachable(&EnvConfig::frozen_lake(v)).unwrap());
        }
        let mut holes = EnvConfig::new(EnvKind::FrozenLake);
        holes.map = Some(vec!["SHF".into(), "HHG".into()]);
        assert!(!optimal_reachable(&holes).unwrap());
        let mut single = EnvConfig::new(EnvKind::FrozenLake);
        single.map = Some(vec!["G".into()]);
        assert!(optimal_reachable(&single).unwrap());
    }

    #[test]
    fn step_forces_termination_at_max_steps() {
        let mut cfg = EnvConfig::frozen_lake(1);
        cfg.max_steps = Some(3);
        let env = cfg.build().unwrap();
        let mut rng = derive_stream(0, "env", 0);
        let mut st = env.reset(&mut rng);
        // bump into the left wall repeatedly
        for i in 0..3 {
            let t = env.step(&mut st, ActionId(0), &mut rng).unwrap();
            assert_eq!(t.reward, 0.0);
            assert_eq!(t.terminal, i == 2);
        }
        assert!(matches!(
            env.step(&mut st, ActionId(0), &mut rng),
            Err(Error::EpisodeTerminated)
        ));
    }

    #[test]
    fn rejects_out_of_range_action() {
        let env = EnvConfig::frozen_lake(0).build().unwrap();
        let mut rng = derive_stream(0, "env", 0);
        let mut st = env.reset(&mut rng);
        assert!(matches!(
            env.step(&mut st, ActionId(4), &mut rng),
            Err(Error::ActionOutOfRange { index: 4, n: 4 })
        ));
    }

    #[test]
    fn kind_parses_from_cli_spelling() {
        assert_eq!("frozen-lake".parse::<EnvKind>().unwrap(), EnvKind::FrozenLake);
        assert_eq!("PACMAN".parse::<EnvKind>().unwrap(), EnvKind::Pacman);
        assert!("atari".parse::<EnvKind>().is_err());
    }
}
