use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Action, Cell, MapConfig};

pub const INITIAL_FUEL: i32 = 30;
pub const MOVE_COST: i32 = 1;
pub const OBSTACLE_PENALTY: i32 = 1;
pub const ENEMY_PENALTY: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ongoing,
    Won,
    Lost,
}

impl TrialStatus {
    pub fn is_terminal(self) -> bool {
        self != TrialStatus::Ongoing
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GameError {
    #[error("trial {trial} has already ended ({status:?})")]
    Terminated { trial: usize, status: TrialStatus },
    #[error("trial {0} has not ended")]
    Unterminated(usize),
}

/// Full state of one Explorer Game trial.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GameState {
    pub map: MapConfig,
    pub trial_index: usize,
    pub player: Cell,
    pub enemy_positions: Vec<Cell>,
    /// Where each enemy will be after the next step. Drawn one turn ahead
    /// so hints can reveal them truthfully.
    pub committed_enemy_moves: Vec<Action>,
    pub fuel: i32,
    pub moves_made: u32,
    pub obstacle_collisions: u32,
    pub enemy_collisions: u32,
    pub status: TrialStatus,
}

/// What happened during one `step`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub action: Action,
    pub from: Cell,
    pub to: Cell,
    /// The move hit an obstacle or the grid edge.
    pub blocked: bool,
    /// Number of enemies sharing the player's cell after they moved.
    pub enemy_hits: u32,
    pub fuel_spent: i32,
    pub fuel: i32,
    pub status: TrialStatus,
}

impl GameState {
    /// Places the player and enemies at their map starts and commits the
    /// enemies' first moves.
    pub fn new(map: MapConfig, trial_index: usize, rng: &mut impl Rng) -> Self {
        let enemies = map.enemies.clone();
        let mut state = GameState {
            player: map.start,
            committed_enemy_moves: vec![Action::Skip; enemies.len()],
            enemy_positions: enemies,
            map,
            trial_index,
            fuel: INITIAL_FUEL,
            moves_made: 0,
            obstacle_collisions: 0,
            enemy_collisions: 0,
            status: TrialStatus::Ongoing,
        };
        state.commit_enemy_moves(rng);
        state
    }

    /// Cells the enemies will occupy after the next step.
    pub fn predicted_enemy_cells(&self) -> Vec<Cell> {
        self.enemy_positions
            .iter()
            .zip(&self.committed_enemy_moves)
            .map(|(&c, &a)| c.offset(a))
            .collect()
    }

    /// Moves an entity at `from` may legally make, in `Action::ALL` order.
    pub fn legal_moves(&self, from: Cell) -> Vec<Action> {
        Action::ALL
            .into_iter()
            .filter(|&a| a == Action::Skip || self.map.is_open(from.offset(a)))
            .collect()
    }

    /// Draws each enemy's next move uniformly from its legal moves.
    pub fn commit_enemy_moves(&mut self, rng: &mut impl Rng) {
        self.committed_enemy_moves = self
            .enemy_positions
            .iter()
            .map(|&pos| {
                let legal = self.legal_moves(pos);
                legal[rng.random_range(0..legal.len())]
            })
            .collect();
    }

    pub fn step(&mut self, action: Action, rng: &mut impl Rng) -> Result<StepOutcome, GameError> {
        if self.status.is_terminal() {
            return Err(GameError::Terminated {
                trial: self.trial_index,
                status: self.status,
            });
        }
        let from = self.player;
        let fuel_before = self.fuel;

        self.fuel -= MOVE_COST;
        self.moves_made += 1;

        let target = from.offset(action);
        let blocked = action != Action::Skip && !self.map.is_open(target);
        if blocked {
            self.fuel -= OBSTACLE_PENALTY;
            self.obstacle_collisions += 1;
        } else {
            self.player = target;
        }

        self.enemy_positions = self.predicted_enemy_cells();

        let enemy_hits = self
            .enemy_positions
            .iter()
            .filter(|&&e| e == self.player)
            .count() as u32;
        self.fuel -= ENEMY_PENALTY * enemy_hits as i32;
        self.enemy_collisions += enemy_hits;

        self.commit_enemy_moves(rng);

        // Running out of fuel on the goal cell still loses.
        self.status = if self.fuel <= 0 {
            TrialStatus::Lost
        } else if self.player == self.map.goal {
            TrialStatus::Won
        } else {
            TrialStatus::Ongoing
        };

        Ok(StepOutcome {
            action,
            from,
            to: self.player,
            blocked,
            enemy_hits,
            fuel_spent: fuel_before - self.fuel,
            fuel: self.fuel,
            status: self.status,
        })
    }

    /// Fuel this trial contributes to the session score.
    pub fn score(&self) -> i64 {
        match self.status {
            TrialStatus::Won => i64::from(self.fuel.max(0)),
            _ => 0,
        }
    }

    /// `30 - moves - obstacle collisions - 3 × enemy collisions`.
    pub fn expected_fuel(&self) -> i32 {
        INITIAL_FUEL
            - MOVE_COST * self.moves_made as i32
            - OBSTACLE_PENALTY * self.obstacle_collisions as i32
            - ENEMY_PENALTY * self.enemy_collisions as i32
    }
}

/// Sum of remaining fuel over won trials; lost trials add nothing.
pub fn session_score(trials: &[GameState]) -> Result<i64, GameError> {
    trials.iter().try_fold(0, |acc, t| {
        if t.status.is_terminal() {
            Ok(acc + t.score())
        } else {
            Err(GameError::Unterminated(t.trial_index))
        }
    })
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, BTreeSet};

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::game::generate_map;

    fn open_map(enemies: Vec<Cell>, obstacles: &[(i32, i32)]) -> MapConfig {
        MapConfig {
            id: "test".into(),
            width: 10,
            height: 10,
            seed: None,
            start: Cell::new(0, 0),
            goal: Cell::new(9, 9),
            enemies,
            obstacles: obstacles.iter().map(|&(x, y)| Cell::new(x, y)).collect(),
        }
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn clean_winning_step() {
        let mut s = GameState::new(open_map(vec![], &[]), 0, &mut rng(0));
        s.player = Cell::new(8, 9);
        let out = s.step(Action::Right, &mut rng(1)).unwrap();
        assert_eq!(out.status, TrialStatus::Won);
        assert_eq!(s.fuel, INITIAL_FUEL - 1);
        assert_eq!(out.fuel_spent, 1);
        assert_eq!(s.score(), 29);
    }

    #[test]
    fn obstacle_collision_can_lose() {
        let mut s = GameState::new(open_map(vec![], &[(1, 0)]), 0, &mut rng(0));
        s.fuel = 2;
        s.moves_made = 27;
        s.obstacle_collisions = 1;
        let out = s.step(Action::Right, &mut rng(0)).unwrap();
        assert!(out.blocked);
        assert_eq!(s.player, Cell::new(0, 0));
        assert_eq!(s.fuel, 0);
        assert_eq!(s.obstacle_collisions, 2);
        assert_eq!(s.status, TrialStatus::Lost);
        assert_eq!(s.fuel, s.expected_fuel());
    }

    #[test]
    fn grid_edge_counts_as_obstacle() {
        let mut s = GameState::new(open_map(vec![], &[]), 0, &mut rng(0));
        let out = s.step(Action::Up, &mut rng(0)).unwrap();
        assert!(out.blocked);
        assert_eq!(out.fuel_spent, 2);
        assert_eq!(s.obstacle_collisions, 1);
    }

    #[test]
    fn skip_into_incoming_enemy() {
        let mut s = GameState::new(open_map(vec![Cell::new(5, 5)], &[]), 0, &mut rng(0));
        s.player = Cell::new(5, 4);
        s.committed_enemy_moves = vec![Action::Up];
        let out = s.step(Action::Skip, &mut rng(0)).unwrap();
        assert_eq!(out.enemy_hits, 1);
        assert_eq!(out.fuel_spent, 4);
        assert_eq!(s.enemy_collisions, 1);
        assert_eq!(s.fuel, 26);
    }

    #[test]
    fn swap_is_not_a_collision() {
        let mut s = GameState::new(open_map(vec![Cell::new(5, 5)], &[]), 0, &mut rng(0));
        s.player = Cell::new(5, 4);
        s.committed_enemy_moves = vec![Action::Up];
        let out = s.step(Action::Down, &mut rng(0)).unwrap();
        assert_eq!(out.enemy_hits, 0);
        assert_eq!(s.player, Cell::new(5, 5));
        assert_eq!(s.enemy_positions, vec![Cell::new(5, 4)]);
    }

    #[test]
    fn two_enemies_on_one_cell_cost_six() {
        let enemies = vec![Cell::new(4, 4), Cell::new(6, 4)];
        let mut s = GameState::new(open_map(enemies, &[]), 0, &mut rng(0));
        s.player = Cell::new(5, 3);
        s.committed_enemy_moves = vec![Action::Right, Action::Left];
        let out = s.step(Action::Down, &mut rng(0)).unwrap();
        assert_eq!(out.enemy_hits, 2);
        assert_eq!(out.fuel_spent, 7);
    }

    #[test]
    fn stepping_a_finished_trial_fails() {
        let mut s = GameState::new(open_map(vec![], &[]), 3, &mut rng(0));
        s.status = TrialStatus::Lost;
        assert!(matches!(
            s.step(Action::Skip, &mut rng(0)),
            Err(GameError::Terminated { trial: 3, .. })
        ));
    }

    #[test]
    fn boxed_in_enemy_always_skips() {
        let map = open_map(vec![Cell::new(5, 5)], &[(5, 4), (5, 6), (4, 5), (6, 5)]);
        let mut s = GameState::new(map, 0, &mut rng(0));
        let mut r = rng(9);
        for _ in 0..200 {
            s.commit_enemy_moves(&mut r);
            assert_eq!(s.committed_enemy_moves, vec![Action::Skip]);
        }
    }

    #[test]
    fn open_field_enemy_moves_are_uniform() {
        let mut s = GameState::new(open_map(vec![Cell::new(5, 5)], &[]), 0, &mut rng(0));
        let mut r = rng(42);
        let mut counts: BTreeMap<Action, u32> = BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            s.commit_enemy_moves(&mut r);
            *counts.entry(s.committed_enemy_moves[0]).or_default() += 1;
        }
        assert_eq!(counts.len(), 5);
        for (a, n) in counts {
            let freq = f64::from(n) / f64::from(draws);
            assert!((freq - 0.2).abs() <= 0.02, "{a}: {freq}");
        }
    }

    #[test]
    fn seeded_commits_repeat() {
        let map = generate_map(10, 10, 16, 3, 5).unwrap();
        let run = || {
            let mut r = rng(77);
            let mut s = GameState::new(map.clone(), 0, &mut r);
            (0..20)
                .map(|_| {
                    s.commit_enemy_moves(&mut r);
                    s.committed_enemy_moves.clone()
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn scoring() {
        let base = GameState::new(open_map(vec![], &[]), 0, &mut rng(0));
        let with = |status, fuel| GameState {
            status,
            fuel,
            ..base.clone()
        };
        assert_eq!(
            session_score(&vec![with(TrialStatus::Won, 10); 9]).unwrap(),
            90
        );
        assert_eq!(
            session_score(&vec![with(TrialStatus::Lost, 0); 9]).unwrap(),
            0
        );
        let mixed = [
            with(TrialStatus::Won, 12),
            with(TrialStatus::Lost, -2),
            with(TrialStatus::Won, 5),
        ];
        assert_eq!(session_score(&mixed).unwrap(), 17);
        assert_eq!(
            session_score(&[with(TrialStatus::Ongoing, 5)]),
            Err(GameError::Unterminated(0))
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn fuel_accounting_and_occupancy(map_seed in 0u64..50, seed: u64, actions in prop::collection::vec(0usize..5, 1..40)) {
                let map = generate_map(10, 10, 16, 3, map_seed).unwrap();
                let obstacles: BTreeSet<Cell> = map.obstacles.clone();
                let mut r = rng(seed);
                let mut s = GameState::new(map, 0, &mut r);
                for a in actions {
                    if s.status.is_terminal() {
                        break;
                    }
                    s.step(Action::ALL[a], &mut r).unwrap();
                    prop_assert_eq!(s.fuel, s.expected_fuel());
                    prop_assert!(!obstacles.contains(&s.player));
                    for e in s.enemy_positions.iter().chain(&s.predicted_enemy_cells()) {
                        prop_assert!(!obstacles.contains(e));
                    }
                    match s.status {
                        TrialStatus::Lost => prop_assert!(s.fuel <= 0),
                        TrialStatus::Won => prop_assert_eq!(s.player, s.map.goal),
                        TrialStatus::Ongoing => {}
                    }
                }
            }

            #[test]
            fn step_is_deterministic(seed: u64, a in 0usize..5) {
                let map = generate_map(10, 10, 16, 3, 1).unwrap();
                let s = GameState::new(map, 0, &mut rng(seed));
                let (mut x, mut y) = (s.clone(), s);
                let ox = x.step(Action::ALL[a], &mut rng(seed ^ 1)).unwrap();
                let oy = y.step(Action::ALL[a], &mut rng(seed ^ 1)).unwrap();
                prop_assert_eq!(ox, oy);
                prop_assert_eq!(x, y);
            }
        }
    }
}
