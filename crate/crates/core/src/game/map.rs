use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Action, Cell};

pub const DEFAULT_WIDTH: u32 = 10;
pub const DEFAULT_HEIGHT: u32 = 10;
pub const DEFAULT_OBSTACLES: usize = 16;
pub const DEFAULT_ENEMIES: usize = 3;
/// Seeds of the nine shipped maps, in file order.
pub const DEFAULT_MAP_SEEDS: [u64; 9] = [1, 2, 3, 4, 5, 6, 7, 8, 9];

const GENERATION_ATTEMPTS: usize = 1000;

const DEFAULT_MAP_FILES: [&str; 9] = [
    include_str!("../../data/maps/map-1.toml"),
    include_str!("../../data/maps/map-2.toml"),
    include_str!("../../data/maps/map-3.toml"),
    include_str!("../../data/maps/map-4.toml"),
    include_str!("../../data/maps/map-5.toml"),
    include_str!("../../data/maps/map-6.toml"),
    include_str!("../../data/maps/map-7.toml"),
    include_str!("../../data/maps/map-8.toml"),
    include_str!("../../data/maps/map-9.toml"),
];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MapError {
    #[error("map file is not valid: {0}")]
    Parse(String),
    #[error("grid must be at least 1x1")]
    EmptyGrid,
    #[error("cell {0} lies outside the grid")]
    OutOfBounds(Cell),
    #[error("cell {0} is used by more than one entity")]
    Overlap(Cell),
    #[error("goal is unreachable from start")]
    Unsolvable,
    #[error("expected {expected_obstacles} obstacles and {expected_enemies} enemies, found {obstacles} and {enemies}")]
    Counts {
        expected_obstacles: usize,
        expected_enemies: usize,
        obstacles: usize,
        enemies: usize,
    },
    #[error("cannot place {obstacles} obstacles and {enemies} enemies with a free path on a {width}x{height} grid")]
    Infeasible {
        width: u32,
        height: u32,
        obstacles: usize,
        enemies: usize,
    },
}

/// One Explorer Game map.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapConfig {
    pub id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub start: Cell,
    pub goal: Cell,
    pub enemies: Vec<Cell>,
    pub obstacles: BTreeSet<Cell>,
}

impl MapConfig {
    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as u32) < self.width && (c.y as u32) < self.height
    }

    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.obstacles.contains(&c)
    }

    /// In bounds and not an obstacle.
    pub fn is_open(&self, c: Cell) -> bool {
        self.in_bounds(c) && !self.is_obstacle(c)
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.height as i32)
            .flat_map(move |y| (0..self.width as i32).map(move |x| Cell::new(x, y)))
    }

    /// Breadth-first hop counts from `source` through open cells.
    pub fn bfs_from(&self, source: Cell) -> DistanceField {
        let mut field = DistanceField {
            width: self.width,
            height: self.height,
            dist: vec![None; (self.width * self.height) as usize],
        };
        if !self.is_open(source) {
            return field;
        }
        let mut queue = VecDeque::from([source]);
        field.set(source, 0);
        while let Some(c) = queue.pop_front() {
            let d = field.get(c).expect("queued cells have a distance");
            for a in Action::MOVES {
                let n = c.offset(a);
                if self.is_open(n) && field.get(n).is_none() {
                    field.set(n, d + 1);
                    queue.push_back(n);
                }
            }
        }
        field
    }

    /// Structural checks: bounds, no overlaps, solvable.
    pub fn validate(&self) -> Result<(), MapError> {
        if self.width == 0 || self.height == 0 {
            return Err(MapError::EmptyGrid);
        }
        let mut used = BTreeSet::new();
        let all = self
            .obstacles
            .iter()
            .chain(self.enemies.iter())
            .chain([&self.start, &self.goal]);
        for &c in all {
            if !self.in_bounds(c) {
                return Err(MapError::OutOfBounds(c));
            }
            if !used.insert(c) {
                return Err(MapError::Overlap(c));
            }
        }
        if self.bfs_from(self.start).get(self.goal).is_none() {
            return Err(MapError::Unsolvable);
        }
        Ok(())
    }

    /// Structural checks plus the default 16 obstacle / 3 enemy counts.
    pub fn validate_default_profile(&self) -> Result<(), MapError> {
        self.validate()?;
        if self.obstacles.len() != DEFAULT_OBSTACLES || self.enemies.len() != DEFAULT_ENEMIES {
            return Err(MapError::Counts {
                expected_obstacles: DEFAULT_OBSTACLES,
                expected_enemies: DEFAULT_ENEMIES,
                obstacles: self.obstacles.len(),
                enemies: self.enemies.len(),
            });
        }
        Ok(())
    }

    pub fn from_toml(source: &str) -> Result<Self, MapError> {
        let map: MapConfig = toml::from_str(source).map_err(|e| MapError::Parse(e.to_string()))?;
        map.validate()?;
        Ok(map)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("map serializes")
    }
}

/// Hop distances over a map; `None` marks unreachable or blocked cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: u32,
    height: u32,
    dist: Vec<Option<u32>>,
}

impl DistanceField {
    fn index(&self, c: Cell) -> Option<usize> {
        (c.x >= 0 && c.y >= 0 && (c.x as u32) < self.width && (c.y as u32) < self.height)
            .then(|| (c.y as u32 * self.width + c.x as u32) as usize)
    }

    fn set(&mut self, c: Cell, d: u32) {
        let i = self.index(c).expect("in bounds");
        self.dist[i] = Some(d);
    }

    pub fn get(&self, c: Cell) -> Option<u32> {
        self.index(c).and_then(|i| self.dist[i])
    }
}

/// Places start, goal, obstacles and enemies at random until the goal is
/// reachable. Deterministic for a given seed.
pub fn generate_map(
    width: u32,
    height: u32,
    n_obstacles: usize,
    n_enemies: usize,
    seed: u64,
) -> Result<MapConfig, MapError> {
    if width == 0 || height == 0 {
        return Err(MapError::EmptyGrid);
    }
    let infeasible = MapError::Infeasible {
        width,
        height,
        obstacles: n_obstacles,
        enemies: n_enemies,
    };
    let area = (width * height) as usize;
    if n_obstacles + n_enemies + 2 > area {
        return Err(infeasible);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let min_separation = (width + height) / 2;
    let template = MapConfig {
        id: format!("gen-{width}x{height}-{seed}"),
        width,
        height,
        seed: Some(seed),
        start: Cell::new(0, 0),
        goal: Cell::new(0, 0),
        enemies: Vec::new(),
        obstacles: BTreeSet::new(),
    };
    let mut cells: Vec<Cell> = template.cells().collect();
    for _ in 0..GENERATION_ATTEMPTS {
        cells.shuffle(&mut rng);
        let start = cells[0];
        let goal_pos = cells[1..]
            .iter()
            .position(|c| c.manhattan(start) >= min_separation)
            .map_or(1, |p| p + 1);
        let goal = cells[goal_pos];
        let mut rest = cells
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != 0 && i != goal_pos)
            .map(|(_, &c)| c);
        let obstacles: BTreeSet<Cell> = rest.by_ref().take(n_obstacles).collect();
        let enemies: Vec<Cell> = rest.take(n_enemies).collect();
        let map = MapConfig {
            start,
            goal,
            enemies,
            obstacles,
            ..template.clone()
        };
        if map.validate().is_ok() {
            return Ok(map);
        }
    }
    Err(infeasible)
}

/// The nine shipped Explorer Game maps.
pub fn default_maps() -> Vec<MapConfig> {
    DEFAULT_MAP_FILES
        .iter()
        .map(|src| MapConfig::from_toml(src).expect("shipped map is valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reachability by repeated relaxation, independent of the BFS queue.
    fn reachable_oracle(map: &MapConfig, from: Cell) -> BTreeSet<Cell> {
        let mut seen = BTreeSet::from([from]);
        loop {
            let before = seen.len();
            for c in map.cells().filter(|&c| map.is_open(c)) {
                if !seen.contains(&c) {
                    let adjacent = Action::MOVES.iter().any(|&a| seen.contains(&c.offset(a)));
                    if adjacent {
                        seen.insert(c);
                    }
                }
            }
            if seen.len() == before {
                return seen;
            }
        }
    }

    #[test]
    fn seeded_map_is_valid_and_repeatable() {
        let a = generate_map(10, 10, 16, 3, 7).unwrap();
        a.validate_default_profile().unwrap();
        assert!(reachable_oracle(&a, a.start).contains(&a.goal));
        let b = generate_map(10, 10, 16, 3, 7).unwrap();
        assert_eq!(a.to_toml(), b.to_toml());
        assert_ne!(a, generate_map(10, 10, 16, 3, 8).unwrap());
    }

    #[test]
    fn pigeonhole_infeasible() {
        assert!(matches!(
            generate_map(4, 4, 16, 3, 0),
            Err(MapError::Infeasible { .. })
        ));
        assert_eq!(generate_map(0, 4, 0, 0, 0), Err(MapError::EmptyGrid));
    }

    #[test]
    fn empty_grid_distance_is_manhattan() {
        let map = generate_map(10, 10, 0, 0, 1).unwrap();
        let field = map.bfs_from(map.goal);
        assert_eq!(field.get(map.start), Some(map.start.manhattan(map.goal)));
        for c in map.cells() {
            assert_eq!(field.get(c), Some(c.manhattan(map.goal)));
        }
    }

    #[test]
    fn walled_cell_is_unreachable() {
        let map = MapConfig {
            id: "walled".into(),
            width: 5,
            height: 5,
            seed: None,
            start: Cell::new(0, 0),
            goal: Cell::new(4, 4),
            enemies: vec![],
            obstacles: [(1, 2), (3, 2), (2, 1), (2, 3)]
                .into_iter()
                .map(|(x, y)| Cell::new(x, y))
                .collect(),
        };
        map.validate().unwrap();
        let field = map.bfs_from(map.goal);
        let oracle = reachable_oracle(&map, map.goal);
        for c in map.cells() {
            assert_eq!(field.get(c).is_some(), oracle.contains(&c), "{c}");
        }
        assert_eq!(field.get(Cell::new(2, 2)), None);
        assert_eq!(field.get(Cell::new(2, 1)), None);
        assert_eq!(field.get(Cell::new(-1, 0)), None);
    }

    #[test]
    fn validation_errors() {
        let mut map = generate_map(10, 10, 16, 3, 3).unwrap();
        map.enemies[0] = map.start;
        assert_eq!(map.validate(), Err(MapError::Overlap(map.start)));

        let mut map = generate_map(10, 10, 16, 3, 3).unwrap();
        map.goal = Cell::new(10, 0);
        assert_eq!(map.validate(), Err(MapError::OutOfBounds(Cell::new(10, 0))));

        let mut map = generate_map(6, 6, 0, 0, 3).unwrap();
        map.start = Cell::new(0, 0);
        map.goal = Cell::new(5, 5);
        map.obstacles = [Cell::new(1, 0), Cell::new(0, 1)].into();
        assert_eq!(map.validate(), Err(MapError::Unsolvable));

        let map = generate_map(10, 10, 15, 3, 3).unwrap();
        assert!(matches!(
            map.validate_default_profile(),
            Err(MapError::Counts { obstacles: 15, .. })
        ));
    }

    #[test]
    fn shipped_maps_match_their_seeds() {
        let maps = default_maps();
        assert_eq!(maps.len(), 9);
        for (map, seed) in maps.iter().zip(DEFAULT_MAP_SEEDS) {
            map.validate_default_profile().unwrap();
            let mut expected = generate_map(10, 10, 16, 3, seed).unwrap();
            expected.id = format!("map-{seed}");
            assert_eq!(map, &expected);
        }
    }

    #[test]
    fn map_file_round_trip() {
        let map = generate_map(10, 10, 16, 3, 11).unwrap();
        assert_eq!(MapConfig::from_toml(&map.to_toml()).unwrap(), map);
        assert!(matches!(
            MapConfig::from_toml("width = 3"),
            Err(MapError::Parse(_))
        ));
    }
}
