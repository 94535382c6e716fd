use super::{Cell, GameState, PotStatus, Role};

const CH_COUNTER: usize = 0;
const CH_ONION_DISPENSER: usize = 1;
const CH_DISH_DISPENSER: usize = 2;
const CH_POT: usize = 3;
const CH_SERVING: usize = 4;
/// Channels 5..8 mark pots holding 1, 2 and 3 onions.
const CH_POT_ONIONS: usize = 5;
const CH_COOK_PROGRESS: usize = 8;
/// Channels 9..12 mark onion, dish and soup resting on counters.
const CH_PLACED: usize = 9;
const CH_SELF_POS: usize = 12;
const CH_SELF_FACING: usize = 13;
const CH_OTHER_POS: usize = 17;
const CH_OTHER_FACING: usize = 18;
const CH_SELF_HELD: usize = 22;
const CH_OTHER_HELD: usize = 25;
const CH_TIME_LEFT: usize = 28;

pub const NUM_CHANNELS: usize = 29;

/// Role-conditioned channel-major encoding of a full game state.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationGrid {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl ObservationGrid {
    pub fn encode(state: &GameState, role: Role) -> ObservationGrid {
        let layout = &state.layout;
        let mut data = vec![0.0; Self::len_for(layout.height(), layout.width())];
        encode_into(state, role, &mut data);
        ObservationGrid {
            height: layout.height(),
            width: layout.width(),
            data,
        }
    }

    pub fn len_for(height: usize, width: usize) -> usize {
        NUM_CHANNELS * height * width
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[ch * plane..(ch + 1) * plane]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub const SELF_POSITION: usize = CH_SELF_POS;
    pub const OTHER_POSITION: usize = CH_OTHER_POS;
    pub const COOK_PROGRESS: usize = CH_COOK_PROGRESS;
    pub const TIME_LEFT: usize = CH_TIME_LEFT;
}

/// Writes the encoding of `state` as seen by `role` into `out`, which must
/// have length `NUM_CHANNELS * height * width`.
pub fn encode_into(state: &GameState, role: Role, out: &mut [f64]) {
    let layout = &state.layout;
    let (h, w) = (layout.height(), layout.width());
    let plane = h * w;
    assert_eq!(out.len(), NUM_CHANNELS * plane, "observation buffer size");
    out.fill(0.0);
    let mut set = |ch: usize, idx: usize, v: f64| out[ch * plane + idx] = v;

    for r in 0..h {
        for c in 0..w {
            let idx = r * w + c;
            let ch = match layout.cell(super::Pos::new(r, c)) {
                Cell::Floor => continue,
                Cell::Counter => CH_COUNTER,
                Cell::OnionDispenser => CH_ONION_DISPENSER,
                Cell::DishDispenser => CH_DISH_DISPENSER,
                Cell::Pot => CH_POT,
                Cell::Serving => CH_SERVING,
            };
            set(ch, idx, 1.0);
        }
    }

    let cook_time = f64::from(layout.cook_time());
    for (pos, pot) in layout.pots().iter().zip(&state.pots) {
        let idx = pos.row * w + pos.col;
        if pot.onions > 0 {
            set(CH_POT_ONIONS + usize::from(pot.onions) - 1, idx, 1.0);
        }
        if pot.status != PotStatus::Filling {
            set(CH_COOK_PROGRESS, idx, f64::from(pot.progress) / cook_time);
        }
    }

    for (pos, item) in layout.counters().iter().zip(&state.counter_items) {
        if let Some(item) = item {
            set(CH_PLACED + item.index(), pos.row * w + pos.col, 1.0);
        }
    }

    let me = state.player(role);
    let other = state.player(role.other());
    for (p, pos_ch, facing_ch, held_ch) in [
        (me, CH_SELF_POS, CH_SELF_FACING, CH_SELF_HELD),
        (other, CH_OTHER_POS, CH_OTHER_FACING, CH_OTHER_HELD),
    ] {
        let idx = p.pos.row * w + p.pos.col;
        set(pos_ch, idx, 1.0);
        set(facing_ch + p.facing.index(), idx, 1.0);
        if let Some(item) = p.held {
            set(held_ch + item.index(), idx, 1.0);
        }
    }

    let horizon = f64::from(layout.horizon());
    let left = (horizon - f64::from(state.t)) / horizon;
    out[CH_TIME_LEFT * plane..(CH_TIME_LEFT + 1) * plane].fill(left);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{reset, Archetype, Item, Layout};
    use std::sync::Arc;

    #[test]
    fn self_and_other_swap_between_roles() {
        let layout = Arc::new(Layout::archetype(Archetype::AsymmetricAdvantages, 20, 400).unwrap());
        let mut s = reset(&layout);
        s.players[1].held = Some(Item::Dish);
        let a = ObservationGrid::encode(&s, Role::Agent);
        let p = ObservationGrid::encode(&s, Role::Partner);
        assert_eq!(a.channel(CH_OTHER_POS), p.channel(CH_SELF_POS));
        assert_eq!(a.channel(CH_SELF_POS), p.channel(CH_OTHER_POS));
        for k in 0..3 {
            assert_eq!(a.channel(CH_OTHER_HELD + k), p.channel(CH_SELF_HELD + k));
        }
        for ch in 0..CH_SELF_POS {
            assert_eq!(a.channel(ch), p.channel(ch));
        }
        assert_eq!(a.channel(CH_TIME_LEFT), p.channel(CH_TIME_LEFT));
    }

    #[test]
    fn reset_has_no_cook_progress() {
        let layout = Arc::new(Layout::archetype(Archetype::CrampedRoom, 20, 400).unwrap());
        let obs = ObservationGrid::encode(&reset(&layout), Role::Agent);
        assert!(obs.channel(CH_COOK_PROGRESS).iter().all(|v| *v == 0.0));
        assert!(obs.channel(CH_TIME_LEFT).iter().all(|v| *v == 1.0));
        assert!(obs.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
