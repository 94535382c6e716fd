//! Rule-based player used as the human-proxy substitute.

use crate::deploy::{ActMode, Controller};
use crate::env::{Action, Cell, Direction, GameState, Item, Layout, Pos, PotStatus, Role};
use rand::RngCore;
use std::collections::VecDeque;

/// Deterministic heuristic: fill pots with onions, fetch a dish once a pot
/// is cooking, collect the soup, deliver it. Items whose destination lies
/// outside the player's region are left on a counter bordering the other
/// region.
#[derive(Clone, Copy, Debug, Default)]
pub struct Scripted;

impl Controller for Scripted {
    fn act(&self, state: &GameState, role: Role, _: ActMode, _: &mut dyn RngCore) -> Action {
        scripted_partner_action(state, role)
    }

    fn deterministic(&self, _: ActMode) -> bool {
        true
    }
}

struct View<'a> {
    state: &'a GameState,
    layout: &'a Layout,
    reach: Vec<bool>,
}

impl View<'_> {
    fn reachable(&self, feature: Pos) -> bool {
        self.layout.floor_neighbours(feature).any(|n| self.reach[self.layout.idx(n)])
    }

    fn pots_where(&self, f: impl Fn(u8, PotStatus) -> bool) -> Vec<Pos> {
        self.layout
            .pots()
            .iter()
            .zip(&self.state.pots)
            .filter(|(_, p)| f(p.onions, p.status))
            .map(|(pos, _)| *pos)
            .collect()
    }

    fn reachable_of(&self, xs: Vec<Pos>) -> Vec<Pos> {
        xs.into_iter().filter(|p| self.reachable(*p)).collect()
    }

    fn cells(&self, kind: Cell) -> Vec<Pos> {
        self.reachable_of(self.layout.cells_of(kind).collect())
    }

    fn counters_holding(&self, item: Option<Item>) -> Vec<Pos> {
        let xs = self
            .layout
            .counters()
            .iter()
            .zip(&self.state.counter_items)
            .filter(|(_, c)| **c == item)
            .map(|(p, _)| *p)
            .collect();
        self.reachable_of(xs)
    }

    /// Empty counters that also border floor outside this player's region.
    fn pass_through(&self) -> Vec<Pos> {
        self.counters_holding(None)
            .into_iter()
            .filter(|c| self.layout.floor_neighbours(*c).any(|n| !self.reach[self.layout.idx(n)]))
            .collect()
    }

    fn held_count(&self, item: Item) -> usize {
        self.state.players.iter().filter(|p| p.held == Some(item)).count()
    }

    fn placed_count(&self, item: Item) -> usize {
        self.state.counter_items.iter().filter(|c| **c == Some(item)).count()
    }
}

/// Next action of the heuristic for the player in `role`. When both players
/// would step onto the same cell, player 2 waits for a step.
pub fn scripted_partner_action(state: &GameState, role: Role) -> Action {
    let mine = plan(state, role);
    if role == Role::Partner {
        let target = |r: Role, a: Action| a.direction().map(|d| state.player(r).pos.towards(d));
        let theirs = plan(state, Role::Agent);
        if target(role, mine).is_some() && target(role, mine) == target(Role::Agent, theirs) {
            return Action::Stay;
        }
    }
    mine
}

fn plan(state: &GameState, role: Role) -> Action {
    let layout = &*state.layout;
    let me = *state.player(role);
    let view = View { state, layout, reach: layout.flood_fill(me.pos) };

    let open_pots = view.pots_where(|n, s| s == PotStatus::Filling && n < 3);
    let busy_pots = view.pots_where(|_, s| s != PotStatus::Filling);
    let ready_pots = view.pots_where(|_, s| s == PotStatus::Ready);

    let targets: Vec<Pos> = match me.held {
        Some(Item::Soup) => or_pass(&view, view.cells(Cell::Serving), true),
        Some(Item::Dish) => {
            let ready = view.reachable_of(ready_pots);
            if !ready.is_empty() {
                ready
            } else {
                or_pass(&view, view.reachable_of(busy_pots.clone()), !busy_pots.is_empty())
            }
        }
        Some(Item::Onion) => or_pass(&view, view.reachable_of(open_pots.clone()), !open_pots.is_empty()),
        None => {
            let onions_missing: usize = state
                .pots
                .iter()
                .filter(|p| p.status == PotStatus::Filling)
                .map(|p| 3 - p.onions as usize)
                .sum();
            let onion_gap = onions_missing as isize - view.held_count(Item::Onion) as isize;
            let dish_gap = busy_pots.len() as isize - view.held_count(Item::Dish) as isize;
            let can_pot = !view.reachable_of(open_pots).is_empty();
            let can_plate = !view.reachable_of(busy_pots).is_empty();

            let mut onion_src = Vec::new();
            if onion_gap - view.placed_count(Item::Onion) as isize > 0 {
                onion_src.extend(view.cells(Cell::OnionDispenser));
            }
            if onion_gap > 0 && can_pot {
                onion_src.extend(view.counters_holding(Some(Item::Onion)));
            }
            let mut dish_src = Vec::new();
            if dish_gap - view.placed_count(Item::Dish) as isize > 0 {
                dish_src.extend(view.cells(Cell::DishDispenser));
            }
            if dish_gap > 0 && can_plate {
                dish_src.extend(view.counters_holding(Some(Item::Dish)));
            }
            let soup_src = if view.cells(Cell::Serving).is_empty() {
                Vec::new()
            } else {
                view.counters_holding(Some(Item::Soup))
            };
            [onion_src, dish_src, soup_src].into_iter().find(|v| !v.is_empty()).unwrap_or_default()
        }
    };
    let other = state.player(role.other()).pos;
    if targets.is_empty() {
        return park(&view, me.pos, other);
    }

    // Already beside a target: face it, then interact. A dish waits at a
    // cooking pot rather than interacting early.
    for t in &targets {
        if let Some(dir) = Direction::ALL.into_iter().find(|d| me.pos.towards(*d) == *t) {
            if me.facing != dir {
                return Action::moving(dir);
            }
            let cooking = state.pot_at(*t).is_some_and(|p| p.status == PotStatus::Cooking);
            return if me.held == Some(Item::Dish) && cooking { Action::Stay } else { Action::Interact };
        }
    }
    let beside = |p: Pos| targets.iter().any(|t| Direction::ALL.into_iter().any(|d| p.towards(d) == *t));
    first_step(layout, me.pos, beside, Some(other))
        .or_else(|| first_step(layout, me.pos, beside, None))
        .map_or(Action::Stay, Action::moving)
}

/// With nothing to do, stay put unless the other player is right beside
/// us, in which case step onto the free neighbour bordering the fewest
/// stations.
fn park(view: &View<'_>, from: Pos, other: Pos) -> Action {
    let layout = view.layout;
    let crowding = |p: Pos| {
        Direction::ALL
            .into_iter()
            .filter(|d| !matches!(layout.cell(p.towards(*d)), Cell::Floor | Cell::Counter))
            .count()
    };
    if Direction::ALL.into_iter().any(|d| from.towards(d) == other) {
        let free = Direction::ALL
            .into_iter()
            .filter(|d| {
                let n = from.towards(*d);
                layout.cell(n) == Cell::Floor && n != other
            })
            .min_by_key(|d| crowding(from.towards(*d)));
        if let Some(d) = free {
            return Action::moving(d);
        }
    }
    Action::Stay
}

/// Targets reachable directly, else a pass-through counter when `wanted`.
fn or_pass(view: &View<'_>, direct: Vec<Pos>, wanted: bool) -> Vec<Pos> {
    if !direct.is_empty() || !wanted {
        direct
    } else {
        view.pass_through()
    }
}

/// First move of a shortest floor path to a cell satisfying `goal`.
fn first_step(layout: &Layout, from: Pos, goal: impl Fn(Pos) -> bool, blocked: Option<Pos>) -> Option<Direction> {
    let mut first: Vec<Option<Direction>> = vec![None; layout.height() * layout.width()];
    let mut seen = vec![false; first.len()];
    seen[layout.idx(from)] = true;
    let mut queue = VecDeque::new();
    for d in Direction::ALL {
        let n = from.towards(d);
        if layout.cell(n) == Cell::Floor && Some(n) != blocked && !seen[layout.idx(n)] {
            seen[layout.idx(n)] = true;
            first[layout.idx(n)] = Some(d);
            queue.push_back(n);
        }
    }
    while let Some(p) = queue.pop_front() {
        let d = first[layout.idx(p)];
        if goal(p) {
            return d;
        }
        for n in layout.floor_neighbours(p) {
            let i = layout.idx(n);
            if !seen[i] && Some(n) != blocked {
                seen[i] = true;
                first[i] = d;
                queue.push_back(n);
            }
        }
    }
    None
}
