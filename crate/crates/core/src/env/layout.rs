use super::{Cell, Direction, Pos};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LayoutError {
    #[error("layout text is empty")]
    Empty,
    #[error("non-rectangular layout: row {row} has {found} columns, expected {expected}")]
    NonRectangular { row: usize, expected: usize, found: usize },
    #[error("unknown symbol {symbol:?} at ({row}, {col})")]
    UnknownSymbol { symbol: char, row: usize, col: usize },
    #[error("missing start for player {0}")]
    MissingStart(u8),
    #[error("duplicate start for player {0}")]
    DuplicateStart(u8),
    #[error("open boundary: floor at ({row}, {col}) lies on the grid edge")]
    OpenBoundary { row: usize, col: usize },
    #[error("{kind:?} at ({row}, {col}) is not reachable by either player")]
    Unreachable { kind: Cell, row: usize, col: usize },
    #[error("horizon must be positive")]
    InvalidHorizon,
    #[error("cook time must be positive")]
    InvalidCookTime,
    #[error("unknown layout archetype {0:?}")]
    UnknownArchetype(String),
}

/// The bundled kitchen archetypes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Archetype {
    CrampedRoom,
    AsymmetricAdvantages,
    AsymmetricAdvantages2,
    ForcedCoordination,
}

impl Archetype {
    pub const ALL: [Archetype; 4] = [
        Archetype::CrampedRoom,
        Archetype::AsymmetricAdvantages,
        Archetype::AsymmetricAdvantages2,
        Archetype::ForcedCoordination,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Archetype::CrampedRoom => "cr",
            Archetype::AsymmetricAdvantages => "aa",
            Archetype::AsymmetricAdvantages2 => "aa2",
            Archetype::ForcedCoordination => "fc",
        }
    }

    pub fn text(self) -> &'static str {
        match self {
            Archetype::CrampedRoom => include_str!("../../layouts/cramped_room.layout"),
            Archetype::AsymmetricAdvantages => {
                include_str!("../../layouts/asymmetric_advantages.layout")
            }
            Archetype::AsymmetricAdvantages2 => {
                include_str!("../../layouts/asymmetric_advantages_2.layout")
            }
            Archetype::ForcedCoordination => {
                include_str!("../../layouts/forced_coordination.layout")
            }
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Archetype {
    type Err = LayoutError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cr" | "cramped_room" => Ok(Archetype::CrampedRoom),
            "aa" | "asymmetric_advantages" => Ok(Archetype::AsymmetricAdvantages),
            "aa2" | "aa_2" | "asymmetric_advantages_2" => Ok(Archetype::AsymmetricAdvantages2),
            "fc" | "forced_coordination" => Ok(Archetype::ForcedCoordination),
            _ => Err(LayoutError::UnknownArchetype(s.to_string())),
        }
    }
}

impl TryFrom<String> for Archetype {
    type Error = LayoutError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Archetype> for String {
    fn from(a: Archetype) -> String {
        a.short_name().to_string()
    }
}

/// A validated kitchen grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    name: String,
    height: usize,
    width: usize,
    cells: Vec<Cell>,
    starts: [(Pos, Direction); 2],
    cook_time: u32,
    horizon: u32,
    pots: Vec<Pos>,
    counters: Vec<Pos>,
    /// Per cell: index into `pots` or `counters`, depending on the cell kind.
    slot: Vec<Option<usize>>,
}

impl Layout {
    /// Parses the ASCII format: `X` counter, `O` onion dispenser, `D` dish
    /// dispenser, `P` pot, `S` serving, space floor, `1`/`2` player starts.
    /// Players start facing north.
    pub fn parse(name: &str, text: &str, cook_time: u32, horizon: u32) -> Result<Layout, LayoutError> {
        if horizon == 0 {
            return Err(LayoutError::InvalidHorizon);
        }
        if cook_time == 0 {
            return Err(LayoutError::InvalidCookTime);
        }
        let mut rows: Vec<&str> = text.lines().map(|l| l.trim_end_matches('\r')).collect();
        while rows.last().is_some_and(|l| l.is_empty()) {
            rows.pop();
        }
        if rows.is_empty() || rows[0].is_empty() {
            return Err(LayoutError::Empty);
        }
        let width = rows[0].chars().count();
        let height = rows.len();
        let mut cells = Vec::with_capacity(width * height);
        let mut starts: [Option<Pos>; 2] = [None, None];
        for (r, line) in rows.iter().enumerate() {
            let found = line.chars().count();
            if found != width {
                return Err(LayoutError::NonRectangular { row: r, expected: width, found });
            }
            for (c, ch) in line.chars().enumerate() {
                let cell = match ch {
                    'X' => Cell::Counter,
                    'O' => Cell::OnionDispenser,
                    'D' => Cell::DishDispenser,
                    'P' => Cell::Pot,
                    'S' => Cell::Serving,
                    ' ' => Cell::Floor,
                    '1' | '2' => {
                        let who = if ch == '1' { 0 } else { 1 };
                        if starts[who].is_some() {
                            return Err(LayoutError::DuplicateStart(who as u8 + 1));
                        }
                        starts[who] = Some(Pos::new(r, c));
                        Cell::Floor
                    }
                    other => {
                        return Err(LayoutError::UnknownSymbol { symbol: other, row: r, col: c })
                    }
                };
                cells.push(cell);
            }
        }
        let p1 = starts[0].ok_or(LayoutError::MissingStart(1))?;
        let p2 = starts[1].ok_or(LayoutError::MissingStart(2))?;

        for r in 0..height {
            for c in 0..width {
                let edge = r == 0 || c == 0 || r + 1 == height || c + 1 == width;
                if edge && cells[r * width + c] == Cell::Floor {
                    return Err(LayoutError::OpenBoundary { row: r, col: c });
                }
            }
        }

        let mut pots = Vec::new();
        let mut counters = Vec::new();
        let mut slot = vec![None; cells.len()];
        for (i, cell) in cells.iter().enumerate() {
            match cell {
                Cell::Pot => {
                    slot[i] = Some(pots.len());
                    pots.push(Pos::new(i / width, i % width));
                }
                Cell::Counter => {
                    slot[i] = Some(counters.len());
                    counters.push(Pos::new(i / width, i % width));
                }
                _ => {}
            }
        }

        let layout = Layout {
            name: name.to_string(),
            height,
            width,
            cells,
            starts: [(p1, Direction::North), (p2, Direction::North)],
            cook_time,
            horizon,
            pots,
            counters,
            slot,
        };

        let reach1 = layout.flood_fill(p1);
        let reach2 = layout.flood_fill(p2);
        for (i, cell) in layout.cells.iter().enumerate() {
            if matches!(cell, Cell::Pot | Cell::OnionDispenser | Cell::DishDispenser | Cell::Serving) {
                let pos = Pos::new(i / width, i % width);
                let ok = layout
                    .floor_neighbours(pos)
                    .any(|n| reach1[layout.idx(n)] || reach2[layout.idx(n)]);
                if !ok {
                    return Err(LayoutError::Unreachable { kind: *cell, row: pos.row, col: pos.col });
                }
            }
        }
        Ok(layout)
    }

    pub fn archetype(kind: Archetype, cook_time: u32, horizon: u32) -> Result<Layout, LayoutError> {
        Layout::parse(kind.short_name(), kind.text(), cook_time, horizon)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cook_time(&self) -> u32 {
        self.cook_time
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn starts(&self) -> [(Pos, Direction); 2] {
        self.starts
    }

    pub fn pots(&self) -> &[Pos] {
        &self.pots
    }

    pub fn counters(&self) -> &[Pos] {
        &self.counters
    }

    pub(crate) fn idx(&self, pos: Pos) -> usize {
        pos.row * self.width + pos.col
    }

    pub fn in_bounds(&self, pos: Pos) -> bool {
        pos.row < self.height && pos.col < self.width
    }

    pub fn cell(&self, pos: Pos) -> Cell {
        if self.in_bounds(pos) {
            self.cells[self.idx(pos)]
        } else {
            Cell::Counter
        }
    }

    pub fn pot_index(&self, pos: Pos) -> Option<usize> {
        (self.cell(pos) == Cell::Pot).then(|| self.slot[self.idx(pos)]).flatten()
    }

    pub fn counter_index(&self, pos: Pos) -> Option<usize> {
        (self.cell(pos) == Cell::Counter).then(|| self.slot[self.idx(pos)]).flatten()
    }

    pub fn cells_of(&self, kind: Cell) -> impl Iterator<Item = Pos> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(move |(_, c)| **c == kind)
            .map(move |(i, _)| Pos::new(i / self.width, i % self.width))
    }

    pub fn floor_neighbours(&self, pos: Pos) -> impl Iterator<Item = Pos> + '_ {
        Direction::ALL
            .into_iter()
            .map(move |d| pos.towards(d))
            .filter(move |p| self.cell(*p) == Cell::Floor)
    }

    /// Floor cells reachable from `from`, ignoring players.
    pub fn flood_fill(&self, from: Pos) -> Vec<bool> {
        let mut seen = vec![false; self.cells.len()];
        if self.cell(from) != Cell::Floor {
            return seen;
        }
        let mut queue = VecDeque::from([from]);
        seen[self.idx(from)] = true;
        while let Some(p) = queue.pop_front() {
            for n in self.floor_neighbours(p) {
                let i = self.idx(n);
                if !seen[i] {
                    seen[i] = true;
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Whether `target` is adjacent to some floor cell reachable from `from`.
    pub fn can_reach_feature(&self, from: Pos, target: Pos) -> bool {
        let reach = self.flood_fill(from);
        self.floor_neighbours(target).any(|n| reach[self.idx(n)])
    }

    pub fn with_horizon(&self, horizon: u32) -> Result<Layout, LayoutError> {
        if horizon == 0 {
            return Err(LayoutError::InvalidHorizon);
        }
        Ok(Layout { horizon, ..self.clone() })
    }
}
