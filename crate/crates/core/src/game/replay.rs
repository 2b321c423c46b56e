use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Action, GameError, GameState, MapConfig};

/// Everything needed to re-simulate one trial bit-exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialReplay {
    pub trial: usize,
    pub map: MapConfig,
    pub rng_seed: u64,
    pub actions: Vec<Action>,
}

impl TrialReplay {
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed)
    }

    /// Replays every action from the initial state. Fails if an action is
    /// applied after the trial ended.
    pub fn run(&self) -> Result<GameState, GameError> {
        let mut rng = self.rng();
        let mut state = GameState::new(self.map.clone(), self.trial, &mut rng);
        for &a in &self.actions {
            state.step(a, &mut rng)?;
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{generate_map, TrialStatus};

    #[test]
    fn replay_reproduces_live_play() {
        let map = generate_map(10, 10, 16, 3, 4).unwrap();
        let replay_seed = 99;
        let mut rng = ChaCha8Rng::seed_from_u64(replay_seed);
        let mut live = GameState::new(map.clone(), 2, &mut rng);
        let mut actions = Vec::new();
        let pattern = [Action::Right, Action::Down, Action::Skip, Action::Left];
        while live.status == TrialStatus::Ongoing {
            let a = pattern[actions.len() % pattern.len()];
            live.step(a, &mut rng).unwrap();
            actions.push(a);
        }
        let replay = TrialReplay {
            trial: 2,
            map,
            rng_seed: replay_seed,
            actions,
        };
        assert_eq!(replay.run().unwrap(), live);

        let mut too_long = replay.clone();
        too_long.actions.push(Action::Skip);
        assert!(too_long.run().is_err());
    }
}
