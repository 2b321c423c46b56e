use serde::{Deserialize, Serialize};

use super::Cell;

pub const TEST_GAME_DURATION_MS: u64 = 60_000;

/// The Test Game: the agent walks a fixed path, one cell per trigger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestGameState {
    /// Cells still to visit after the start cell, in order.
    pub path_plan: Vec<Cell>,
    pub position_index: usize,
    pub start_ms: u64,
    pub deadline_ms: u64,
    pub late_triggers: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestTrigger {
    Advanced,
    /// Already at the end of the path.
    Capped,
    /// At or after the deadline; ignored.
    Late,
}

impl TestGameState {
    pub fn new(path_plan: Vec<Cell>, start_ms: u64, duration_ms: u64) -> Self {
        TestGameState {
            path_plan,
            position_index: 0,
            start_ms,
            deadline_ms: start_ms + duration_ms,
            late_triggers: 0,
        }
    }

    /// Boustrophedon walk over a grid `width` cells wide, `moves` cells long.
    pub fn serpentine_path(width: u32, moves: usize) -> Vec<Cell> {
        let width = width.max(1) as usize;
        (1..=moves)
            .map(|i| {
                let row = i / width;
                let col = i % width;
                let x = if row.is_multiple_of(2) {
                    col
                } else {
                    width - 1 - col
                };
                Cell::new(x as i32, row as i32)
            })
            .collect()
    }

    pub fn trigger(&mut self, t_ms: u64) -> TestTrigger {
        if t_ms >= self.deadline_ms {
            self.late_triggers += 1;
            TestTrigger::Late
        } else if self.position_index < self.path_plan.len() {
            self.position_index += 1;
            TestTrigger::Advanced
        } else {
            TestTrigger::Capped
        }
    }

    pub fn score(&self) -> usize {
        self.position_index
    }

    pub fn is_over(&self, t_ms: u64) -> bool {
        t_ms >= self.deadline_ms
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_triggers() {
        let mut g = TestGameState::new(TestGameState::serpentine_path(10, 40), 0, 60_000);
        for t in 0..5 {
            assert_eq!(g.trigger(t * 1000), TestTrigger::Advanced);
        }
        assert_eq!(g.score(), 5);
    }

    #[test]
    fn capped_at_path_end() {
        let mut g = TestGameState::new(TestGameState::serpentine_path(10, 3), 0, 60_000);
        for t in 0..10 {
            g.trigger(t);
        }
        assert_eq!(g.score(), 3);
        assert_eq!(g.trigger(11), TestTrigger::Capped);
    }

    #[test]
    fn no_triggers_no_score() {
        let g = TestGameState::new(TestGameState::serpentine_path(10, 40), 0, 60_000);
        assert_eq!(g.score(), 0);
    }

    #[test]
    fn late_triggers_are_ignored() {
        let mut g = TestGameState::new(TestGameState::serpentine_path(10, 40), 1000, 60_000);
        assert_eq!(g.trigger(60_999), TestTrigger::Advanced);
        assert_eq!(g.trigger(61_000), TestTrigger::Late);
        assert_eq!(g.score(), 1);
        assert_eq!(g.late_triggers, 1);
    }

    #[test]
    fn serpentine_is_connected() {
        let path = TestGameState::serpentine_path(10, 99);
        let mut prev = Cell::new(0, 0);
        for c in path {
            assert_eq!(prev.manhattan(c), 1);
            prev = c;
        }
    }
}
