//! Hint payloads: the enemies' committed next cells and a one-step safe
//! greedy move over a breadth-first distance field to the goal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{Action, Cell, DistanceField, GameState, MapConfig, TrialStatus};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecommendError {
    #[error("cannot recommend for a trial that has ended ({0:?})")]
    Terminated(TrialStatus),
}

/// Assessment of one candidate action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub action: Action,
    pub target: Cell,
    pub legal: bool,
    /// Legal and not onto a predicted enemy cell.
    pub safe: bool,
    pub enemies_at_target: u32,
    /// Hops from `target` to the goal; `None` when illegal or unreachable.
    pub goal_distance: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rationale {
    pub distance_before: Option<u32>,
    pub distance_after: Option<u32>,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HintPayload {
    pub predicted_enemy_cells: Vec<Cell>,
    pub recommended: Action,
    pub rationale: Rationale,
}

/// Exact hop distance from every cell to the goal.
pub fn distance_field(map: &MapConfig) -> DistanceField {
    map.bfs_from(map.goal)
}

pub fn recommend(state: &GameState) -> Result<HintPayload, RecommendError> {
    recommend_with(state, &distance_field(&state.map))
}

/// As [`recommend`], reusing a precomputed distance field for `state.map`.
pub fn recommend_with(
    state: &GameState,
    field: &DistanceField,
) -> Result<HintPayload, RecommendError> {
    if state.status.is_terminal() {
        return Err(RecommendError::Terminated(state.status));
    }
    let predicted = state.predicted_enemy_cells();
    let candidates: Vec<Candidate> = Action::ALL
        .into_iter()
        .map(|action| {
            let target = state.player.offset(action);
            let legal = action == Action::Skip || state.map.is_open(target);
            let enemies_at_target = predicted.iter().filter(|&&c| c == target).count() as u32;
            Candidate {
                action,
                target,
                legal,
                safe: legal && enemies_at_target == 0,
                enemies_at_target,
                goal_distance: if legal { field.get(target) } else { None },
            }
        })
        .collect();

    // min_by_key keeps the first of equal keys, which is the fixed tie order.
    let chosen = candidates
        .iter()
        .filter(|c| c.safe)
        .min_by_key(|c| c.goal_distance.unwrap_or(u32::MAX))
        .or_else(|| {
            candidates
                .iter()
                .filter(|c| c.legal)
                .min_by_key(|c| c.enemies_at_target)
        })
        .expect("skip is always legal");

    Ok(HintPayload {
        recommended: chosen.action,
        rationale: Rationale {
            distance_before: field.get(state.player),
            distance_after: chosen.goal_distance,
            candidates: candidates.clone(),
        },
        predicted_enemy_cells: predicted,
    })
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::game::generate_map;

    fn state(player: Cell, goal: Cell, enemies: Vec<Cell>, moves: Vec<Action>) -> GameState {
        let map = MapConfig {
            id: "t".into(),
            width: 10,
            height: 10,
            seed: None,
            start: Cell::new(0, 9),
            goal,
            enemies: enemies.clone(),
            obstacles: Default::default(),
        };
        let mut s = GameState::new(map, 0, &mut ChaCha8Rng::seed_from_u64(0));
        s.player = player;
        s.enemy_positions = enemies;
        s.committed_enemy_moves = moves;
        s
    }

    #[test]
    fn goal_distance_zero_at_goal() {
        let map = generate_map(10, 10, 16, 3, 2).unwrap();
        assert_eq!(distance_field(&map).get(map.goal), Some(0));
    }

    #[test]
    fn heads_toward_goal_on_open_grid() {
        let s = state(Cell::new(2, 5), Cell::new(7, 5), vec![], vec![]);
        let p = recommend(&s).unwrap();
        assert_eq!(p.recommended, Action::Right);
        assert_eq!(p.rationale.distance_before, Some(5));
        assert_eq!(p.rationale.distance_after, Some(4));
    }

    #[test]
    fn skips_when_surrounded_by_predicted_enemies() {
        let player = Cell::new(5, 5);
        let enemies: Vec<Cell> = Action::MOVES
            .iter()
            .map(|&a| player.offset(a).offset(a))
            .collect();
        let moves: Vec<Action> = Action::MOVES
            .iter()
            .map(|&a| match a {
                Action::Up => Action::Down,
                Action::Down => Action::Up,
                Action::Left => Action::Right,
                _ => Action::Left,
            })
            .collect();
        let s = state(player, Cell::new(9, 9), enemies, moves);
        let p = recommend(&s).unwrap();
        assert_eq!(p.recommended, Action::Skip);
        for (c, a) in p.predicted_enemy_cells.iter().zip(Action::MOVES) {
            assert_eq!(*c, player.offset(a));
        }
    }

    #[test]
    fn steps_onto_safe_goal() {
        let s = state(Cell::new(4, 4), Cell::new(4, 3), vec![], vec![]);
        assert_eq!(recommend(&s).unwrap().recommended, Action::Up);
    }

    #[test]
    fn least_bad_when_nothing_is_safe() {
        // Both open neighbours are predicted to hold two enemies each.
        let player = Cell::new(0, 0);
        let enemies = vec![
            Cell::new(1, 1),
            Cell::new(2, 0),
            Cell::new(0, 2),
            Cell::new(1, 1),
        ];
        let moves = vec![Action::Up, Action::Left, Action::Up, Action::Left];
        let s = state(player, Cell::new(9, 9), enemies, moves);
        let predicted = s.predicted_enemy_cells();
        assert_eq!(
            predicted,
            vec![
                Cell::new(1, 0),
                Cell::new(1, 0),
                Cell::new(0, 1),
                Cell::new(0, 1)
            ]
        );
        // Up and left leave the grid, so skip is the only safe option.
        assert_eq!(recommend(&s).unwrap().recommended, Action::Skip);

        let moves = vec![Action::Up, Action::Left, Action::Up, Action::Up];
        let mut s = s;
        s.committed_enemy_moves = moves;
        s.enemy_positions = vec![
            Cell::new(1, 1),
            Cell::new(2, 0),
            Cell::new(0, 2),
            Cell::new(0, 1),
        ];
        // Predicted: (1,0), (1,0), (0,1), (0,0): every legal option is unsafe;
        // down and skip hold one enemy each, down wins the tie order.
        let p = recommend(&s).unwrap();
        assert!(p.rationale.candidates.iter().all(|c| !c.safe));
        assert_eq!(p.recommended, Action::Down);
    }

    #[test]
    fn ended_trial_is_rejected() {
        let mut s = state(Cell::new(4, 4), Cell::new(4, 3), vec![], vec![]);
        s.status = TrialStatus::Won;
        assert_eq!(
            recommend(&s).unwrap_err(),
            RecommendError::Terminated(TrialStatus::Won)
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn safe_minimal_and_truthful(map_seed in 0u64..40, seed: u64, walk in prop::collection::vec(0usize..5, 0..15)) {
                let map = generate_map(10, 10, 16, 3, map_seed).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut s = GameState::new(map, 0, &mut rng);
                for a in walk {
                    if s.status.is_terminal() { break; }
                    s.step(Action::ALL[a], &mut rng).unwrap();
                }
                prop_assume!(!s.status.is_terminal());
                let p = recommend(&s).unwrap();
                let predicted = s.predicted_enemy_cells();
                let field = distance_field(&s.map);
                // Independent enumeration of the five actions.
                let safe: Vec<(Action, u32)> = Action::ALL.iter().filter_map(|&a| {
                    let t = s.player.offset(a);
                    let legal = a == Action::Skip || s.map.is_open(t);
                    (legal && !predicted.contains(&t)).then(|| (a, field.get(t).unwrap_or(u32::MAX)))
                }).collect();
                let target = s.player.offset(p.recommended);
                if !safe.is_empty() {
                    prop_assert!(!predicted.contains(&target));
                    let best = safe.iter().map(|&(_, d)| d).min().unwrap();
                    prop_assert_eq!(field.get(target).unwrap_or(u32::MAX), best);
                }
                prop_assert!(p.recommended == Action::Skip || s.map.is_open(target));
                let mut next = s.clone();
                next.step(p.recommended, &mut rng).unwrap();
                prop_assert_eq!(&p.predicted_enemy_cells, &next.enemy_positions);
            }
        }
    }
}
