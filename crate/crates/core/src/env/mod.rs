//! Two-player common-payoff cooking gridworld.
//!
//! Player 1 is always the agent and player 2 always the partner. Dynamics are
//! deterministic given the joint action, so two states that compare equal
//! step to equal outcomes bit for bit.

mod layout;
mod observation;

pub use layout::{Archetype, Layout, LayoutError};
pub use observation::{encode_into, ObservationGrid, NUM_CHANNELS};

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

pub const NUM_ACTIONS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    Floor,
    Counter,
    OnionDispenser,
    DishDispenser,
    Pot,
    Serving,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Neighbouring position. Callers only step from floor cells, whose
    /// neighbours are always inside the grid because the border is solid.
    pub fn towards(self, dir: Direction) -> Pos {
        match dir {
            Direction::North => Pos::new(self.row.wrapping_sub(1), self.col),
            Direction::South => Pos::new(self.row + 1, self.col),
            Direction::East => Pos::new(self.row, self.col + 1),
            Direction::West => Pos::new(self.row, self.col.wrapping_sub(1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    North,
    South,
    East,
    West,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::North,
        Direction::South,
        Direction::East,
        Direction::West,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    North,
    South,
    East,
    West,
    Stay,
    Interact,
}

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::North,
        Action::South,
        Action::East,
        Action::West,
        Action::Stay,
        Action::Interact,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Action> {
        Self::ALL.get(index).copied()
    }

    pub fn direction(self) -> Option<Direction> {
        match self {
            Action::North => Some(Direction::North),
            Action::South => Some(Direction::South),
            Action::East => Some(Direction::East),
            Action::West => Some(Direction::West),
            Action::Stay | Action::Interact => None,
        }
    }

    pub fn moving(dir: Direction) -> Action {
        match dir {
            Direction::North => Action::North,
            Direction::South => Action::South,
            Direction::East => Action::East,
            Direction::West => Action::West,
        }
    }
}

/// Fixed player slot. Roles are never exchanged during a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Agent,
    Partner,
}

impl Role {
    pub fn index(self) -> usize {
        match self {
            Role::Agent => 0,
            Role::Partner => 1,
        }
    }

    pub fn other(self) -> Role {
        match self {
            Role::Agent => Role::Partner,
            Role::Partner => Role::Agent,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Item {
    Onion,
    Dish,
    Soup,
}

impl Item {
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct JointAction {
    pub agent: Action,
    pub partner: Action,
}

impl JointAction {
    pub fn new(agent: Action, partner: Action) -> Self {
        Self { agent, partner }
    }

    pub fn from_indices(agent: usize, partner: usize) -> Option<Self> {
        Some(Self::new(
            Action::from_index(agent)?,
            Action::from_index(partner)?,
        ))
    }

    pub fn of(&self, role: Role) -> Action {
        match role {
            Role::Agent => self.agent,
            Role::Partner => self.partner,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Player {
    pub pos: Pos,
    pub facing: Direction,
    pub held: Option<Item>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PotStatus {
    Filling,
    Cooking,
    Ready,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pot {
    pub onions: u8,
    pub progress: u32,
    pub status: PotStatus,
}

impl Pot {
    const EMPTY: Pot = Pot {
        onions: 0,
        progress: 0,
        status: PotStatus::Filling,
    };
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShapedEvent {
    OnionPotted,
    DishPicked,
    SoupPicked,
}

/// Per-player multiset of shaped events emitted during one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventCounts {
    pub onion_potted: u8,
    pub dish_picked: u8,
    pub soup_picked: u8,
}

impl EventCounts {
    fn record(&mut self, event: ShapedEvent) {
        match event {
            ShapedEvent::OnionPotted => self.onion_potted += 1,
            ShapedEvent::DishPicked => self.dish_picked += 1,
            ShapedEvent::SoupPicked => self.soup_picked += 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.onion_potted == 0 && self.dish_picked == 0 && self.soup_picked == 0
    }
}

/// Delivery payoff and per-event shaping magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub deliver: f64,
    pub onion_potted: f64,
    pub dish_picked: f64,
    pub soup_picked: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            deliver: 20.0,
            onion_potted: 3.0,
            dish_picked: 3.0,
            soup_picked: 5.0,
        }
    }
}

impl RewardConfig {
    /// Unannealed shaped reward for one player's events.
    pub fn shaped(&self, events: &EventCounts) -> f64 {
        f64::from(events.onion_potted) * self.onion_potted
            + f64::from(events.dish_picked) * self.dish_picked
            + f64::from(events.soup_picked) * self.soup_picked
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("episode already finished at t = {0}")]
    EpisodeDone(u32),
}

/// Running totals used by the conservation checks; not part of the
/// observable state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Tally {
    pub onions_dispensed: u64,
    pub soups_delivered: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GameState {
    pub layout: Arc<Layout>,
    pub t: u32,
    pub players: [Player; 2],
    /// One entry per pot, in `layout.pots()` order.
    pub pots: Vec<Pot>,
    /// One slot per counter, in `layout.counters()` order.
    pub counter_items: Vec<Option<Item>>,
    pub tally: Tally,
}

/// Result of a single in-place step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub sparse_reward: f64,
    pub events: [EventCounts; 2],
    pub done: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub next_state: GameState,
    /// Shared by both players.
    pub sparse_reward: f64,
    /// Indexed by `Role::index`.
    pub shaped_events: [EventCounts; 2],
    pub done: bool,
}

/// Hashable snapshot of everything that evolves during an episode.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StateKey {
    pub t: u32,
    pub players: [Player; 2],
    pub pots: Vec<Pot>,
    pub counter_items: Vec<Option<Item>>,
}

pub fn reset(layout: &Arc<Layout>) -> GameState {
    let players = layout.starts().map(|(pos, facing)| Player {
        pos,
        facing,
        held: None,
    });
    GameState {
        layout: Arc::clone(layout),
        t: 0,
        players,
        pots: vec![Pot::EMPTY; layout.pots().len()],
        counter_items: vec![None; layout.counters().len()],
        tally: Tally::default(),
    }
}

pub fn step(state: &GameState, joint: JointAction, rewards: &RewardConfig) -> Result<StepOutcome, EnvError> {
    let mut next = state.clone();
    let tr = next.step_mut(joint, rewards)?;
    Ok(StepOutcome {
        next_state: next,
        sparse_reward: tr.sparse_reward,
        shaped_events: tr.events,
        done: tr.done,
    })
}

impl GameState {
    pub fn is_done(&self) -> bool {
        self.t >= self.layout.horizon()
    }

    pub fn player(&self, role: Role) -> &Player {
        &self.players[role.index()]
    }

    pub fn key(&self) -> StateKey {
        StateKey {
            t: self.t,
            players: self.players,
            pots: self.pots.clone(),
            counter_items: self.counter_items.clone(),
        }
    }

    pub fn counter_item_at(&self, pos: Pos) -> Option<Item> {
        self.layout
            .counter_index(pos)
            .and_then(|i| self.counter_items[i])
    }

    pub fn pot_at(&self, pos: Pos) -> Option<&Pot> {
        self.layout.pot_index(pos).map(|i| &self.pots[i])
    }

    /// Dishes in hands or on counters.
    pub fn dishes_in_play(&self) -> usize {
        let held = self
            .players
            .iter()
            .filter(|p| p.held == Some(Item::Dish))
            .count();
        let placed = self
            .counter_items
            .iter()
            .filter(|c| **c == Some(Item::Dish))
            .count();
        held + placed
    }

    fn pots_needing_dish(&self) -> usize {
        self.pots
            .iter()
            .filter(|p| p.status != PotStatus::Filling)
            .count()
    }

    /// Advances the state in place. Interactions resolve player 1 first,
    /// then player 2; movement is resolved simultaneously afterwards.
    pub fn step_mut(&mut self, joint: JointAction, rewards: &RewardConfig) -> Result<Transition, EnvError> {
        if self.is_done() {
            return Err(EnvError::EpisodeDone(self.t));
        }
        let layout = Arc::clone(&self.layout);
        let cook_time = layout.cook_time();

        for pot in &mut self.pots {
            if pot.status == PotStatus::Cooking {
                pot.progress += 1;
                if pot.progress >= cook_time {
                    pot.progress = cook_time;
                    pot.status = PotStatus::Ready;
                }
            }
        }

        let mut sparse = 0.0;
        let mut events = [EventCounts::default(); 2];
        for role in [Role::Agent, Role::Partner] {
            if joint.of(role) != Action::Interact {
                continue;
            }
            if let Some(ev) = self.interact(role, &layout, &mut sparse, rewards.deliver) {
                events[role.index()].record(ev);
            }
        }

        let mut proposed = [self.players[0].pos, self.players[1].pos];
        for (i, role) in [Role::Agent, Role::Partner].into_iter().enumerate() {
            if let Some(dir) = joint.of(role).direction() {
                let player = &mut self.players[i];
                player.facing = dir;
                let target = player.pos.towards(dir);
                let other = self.players[1 - i].pos;
                if layout.cell(target) == Cell::Floor && target != other {
                    proposed[i] = target;
                }
            }
        }
        let swap = proposed[0] == self.players[1].pos && proposed[1] == self.players[0].pos;
        if proposed[0] != proposed[1] && !swap {
            self.players[0].pos = proposed[0];
            self.players[1].pos = proposed[1];
        }

        self.t += 1;
        Ok(Transition {
            sparse_reward: sparse,
            events,
            done: self.is_done(),
        })
    }

    fn interact(&mut self, role: Role, layout: &Layout, sparse: &mut f64, deliver: f64) -> Option<ShapedEvent> {
        let idx = role.index();
        let player = self.players[idx];
        let faced = player.pos.towards(player.facing);
        match (layout.cell(faced), player.held) {
            (Cell::OnionDispenser, None) => {
                self.players[idx].held = Some(Item::Onion);
                self.tally.onions_dispensed += 1;
                None
            }
            (Cell::DishDispenser, None) => {
                // Only a dish that some cooking or ready pot still needs is rewarded.
                let useful = self.pots_needing_dish() > self.dishes_in_play();
                self.players[idx].held = Some(Item::Dish);
                useful.then_some(ShapedEvent::DishPicked)
            }
            (Cell::Pot, Some(held)) => {
                let pi = layout.pot_index(faced)?;
                let pot = &mut self.pots[pi];
                match (held, pot.status) {
                    (Item::Onion, PotStatus::Filling) if pot.onions < 3 => {
                        pot.onions += 1;
                        if pot.onions == 3 {
                            pot.status = PotStatus::Cooking;
                            pot.progress = 0;
                        }
                        self.players[idx].held = None;
                        Some(ShapedEvent::OnionPotted)
                    }
                    (Item::Dish, PotStatus::Ready) => {
                        *pot = Pot::EMPTY;
                        self.players[idx].held = Some(Item::Soup);
                        Some(ShapedEvent::SoupPicked)
                    }
                    _ => None,
                }
            }
            (Cell::Serving, Some(Item::Soup)) => {
                self.players[idx].held = None;
                self.tally.soups_delivered += 1;
                *sparse += deliver;
                None
            }
            (Cell::Counter, held) => {
                let ci = layout.counter_index(faced)?;
                match (held, self.counter_items[ci]) {
                    (Some(item), None) => {
                        self.counter_items[ci] = Some(item);
                        self.players[idx].held = None;
                    }
                    (None, Some(item)) => {
                        self.counter_items[ci] = None;
                        self.players[idx].held = Some(item);
                    }
                    _ => {}
                }
                None
            }
            _ => None,
        }
    }

    /// Onions currently held, placed, or inside pots and soups, counting every
    /// soup (extant or delivered) as three onions.
    pub fn onions_accounted(&self) -> u64 {
        let mut onions = 0u64;
        let mut soups = self.tally.soups_delivered;
        let items = self
            .players
            .iter()
            .filter_map(|p| p.held)
            .chain(self.counter_items.iter().filter_map(|c| *c));
        for item in items {
            match item {
                Item::Onion => onions += 1,
                Item::Soup => soups += 1,
                Item::Dish => {}
            }
        }
        onions += self.pots.iter().map(|p| u64::from(p.onions)).sum::<u64>();
        onions + 3 * soups
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cr() -> Arc<Layout> {
        Arc::new(Layout::archetype(Archetype::CrampedRoom, 20, 400).unwrap())
    }

    const R: RewardConfig = RewardConfig {
        deliver: 20.0,
        onion_potted: 3.0,
        dish_picked: 3.0,
        soup_picked: 5.0,
    };

    fn stay() -> JointAction {
        JointAction::new(Action::Stay, Action::Stay)
    }

    #[test]
    fn reset_places_players_on_markers() {
        let layout = cr();
        let s = reset(&layout);
        assert_eq!(s.t, 0);
        assert_eq!(s.players[0].pos, Pos::new(1, 1));
        assert_eq!(s.players[1].pos, Pos::new(2, 3));
        assert!(s.players.iter().all(|p| p.held.is_none()));
        assert_eq!(reset(&layout), s);
    }

    #[test]
    fn stay_changes_only_time() {
        let s = reset(&cr());
        let out = step(&s, stay(), &R).unwrap();
        assert_eq!(out.next_state.t, 1);
        assert_eq!(out.next_state.players, s.players);
        assert_eq!(out.next_state.pots, s.pots);
        assert_eq!(out.sparse_reward, 0.0);
    }

    #[test]
    fn interact_with_onion_dispenser_picks_onion() {
        let mut s = reset(&cr());
        // Player 1 at (1,1); onion dispenser at (1,0) to the west.
        s.players[0].facing = Direction::West;
        let out = step(&s, JointAction::new(Action::Interact, Action::Stay), &R).unwrap();
        assert_eq!(out.next_state.players[0].held, Some(Item::Onion));
        assert_eq!(out.next_state.tally.onions_dispensed, 1);
    }

    #[test]
    fn delivering_soup_pays_both_players() {
        let mut s = reset(&cr());
        // Player 2 at (2,3); serving at (3,3) to the south.
        s.players[1].facing = Direction::South;
        s.players[1].held = Some(Item::Soup);
        let out = step(&s, JointAction::new(Action::Stay, Action::Interact), &R).unwrap();
        assert_eq!(out.sparse_reward, 20.0);
        assert_eq!(out.next_state.players[1].held, None);
        assert_eq!(out.next_state.tally.soups_delivered, 1);
    }

    #[test]
    fn walking_into_a_wall_only_turns() {
        let s = reset(&cr());
        let out = step(&s, JointAction::new(Action::North, Action::Stay), &R).unwrap();
        assert_eq!(out.next_state.players[0].pos, Pos::new(1, 1));
        assert_eq!(out.next_state.players[0].facing, Direction::North);
    }

    #[test]
    fn contested_cell_cancels_both_moves() {
        let mut s = reset(&cr());
        s.players[0].pos = Pos::new(1, 2);
        s.players[1].pos = Pos::new(2, 3);
        // Both try to enter (1,3)... player 1 east, player 2 north.
        let out = step(&s, JointAction::new(Action::East, Action::North), &R).unwrap();
        assert_eq!(out.next_state.players[0].pos, Pos::new(1, 2));
        assert_eq!(out.next_state.players[1].pos, Pos::new(2, 3));
        assert_eq!(out.next_state.players[0].facing, Direction::East);
        assert_eq!(out.next_state.players[1].facing, Direction::North);
    }

    #[test]
    fn moving_into_other_player_is_blocked() {
        let mut s = reset(&cr());
        s.players[0].pos = Pos::new(1, 2);
        s.players[1].pos = Pos::new(1, 3);
        let out = step(&s, JointAction::new(Action::East, Action::West), &R).unwrap();
        assert_eq!(out.next_state.players[0].pos, Pos::new(1, 2));
        assert_eq!(out.next_state.players[1].pos, Pos::new(1, 3));
    }

    #[test]
    fn full_soup_cycle() {
        let layout = cr();
        let mut s = reset(&layout);
        s.players[0].pos = Pos::new(1, 2);
        s.players[0].facing = Direction::North;
        let mut potted = 0;
        for _ in 0..3 {
            s.players[0].held = Some(Item::Onion);
            s.tally.onions_dispensed += 1;
            let tr = s.step_mut(JointAction::new(Action::Interact, Action::Stay), &R).unwrap();
            potted += tr.events[0].onion_potted;
        }
        assert_eq!(potted, 3);
        assert_eq!(s.pots[0].status, PotStatus::Cooking);
        for _ in 0..19 {
            s.step_mut(stay(), &R).unwrap();
        }
        assert_eq!(s.pots[0].status, PotStatus::Cooking);
        s.step_mut(stay(), &R).unwrap();
        assert_eq!(s.pots[0].status, PotStatus::Ready);
        assert_eq!(s.pots[0].progress, 20);
        s.players[0].held = Some(Item::Dish);
        let tr = s.step_mut(JointAction::new(Action::Interact, Action::Stay), &R).unwrap();
        assert_eq!(tr.events[0].soup_picked, 1);
        assert_eq!(s.players[0].held, Some(Item::Soup));
        assert_eq!(s.pots[0].onions, 0);
        assert_eq!(s.onions_accounted(), s.tally.onions_dispensed);
    }

    #[test]
    fn dish_reward_only_when_needed() {
        let mut s = reset(&cr());
        // Player 1 at (2,1) facing the dish dispenser at (3,1).
        s.players[0].pos = Pos::new(2, 1);
        s.players[0].facing = Direction::South;
        let tr = s.step_mut(JointAction::new(Action::Interact, Action::Stay), &R).unwrap();
        assert_eq!(tr.events[0].dish_picked, 0);
        s.players[0].held = None;
        s.pots[0] = Pot {
            onions: 3,
            progress: 5,
            status: PotStatus::Cooking,
        };
        let tr = s.step_mut(JointAction::new(Action::Interact, Action::Stay), &R).unwrap();
        assert_eq!(tr.events[0].dish_picked, 1);
    }

    #[test]
    fn counter_place_and_pick() {
        let mut s = reset(&cr());
        // (2,1) faces counter (2,0) to the west.
        s.players[0].pos = Pos::new(2, 1);
        s.players[0].facing = Direction::West;
        s.players[0].held = Some(Item::Onion);
        s.step_mut(JointAction::new(Action::Interact, Action::Stay), &R).unwrap();
        assert_eq!(s.counter_item_at(Pos::new(2, 0)), Some(Item::Onion));
        assert_eq!(s.players[0].held, None);
        s.step_mut(JointAction::new(Action::Interact, Action::Stay), &R).unwrap();
        assert_eq!(s.counter_item_at(Pos::new(2, 0)), None);
        assert_eq!(s.players[0].held, Some(Item::Onion));
    }

    #[test]
    fn stepping_done_state_fails() {
        let layout = Arc::new(Layout::archetype(Archetype::CrampedRoom, 20, 3).unwrap());
        let mut s = reset(&layout);
        for i in 0..3 {
            let tr = s.step_mut(stay(), &R).unwrap();
            assert_eq!(tr.done, i == 2);
        }
        assert_eq!(s.step_mut(stay(), &R), Err(EnvError::EpisodeDone(3)));
    }
}
