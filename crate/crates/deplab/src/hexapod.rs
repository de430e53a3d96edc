//! Joint layout shared by the guided-model presets, the shipped walker
//! configs, and the gait analyses.
//!
//! Six legs, three joints each, flattened leg-major:
//! joint `3ℓ` swings the leg fore/aft (AP), `3ℓ+1` lifts it (UD), `3ℓ+2` is
//! the knee. Legs 0–2 are the left side front-to-back, 3–5 the right side.
//!
//! The delayed sensor bank repeats the two coxa channels (AP, UD) of every
//! leg, appended after the 18 base channels in leg order:
//! channel `18 + 2ℓ` is the delayed AP of leg `ℓ`, `18 + 2ℓ + 1` its
//! delayed UD.

pub const LEGS: usize = 6;
pub const JOINTS_PER_LEG: usize = 3;
pub const JOINTS: usize = LEGS * JOINTS_PER_LEG;
pub const DELAYED_CHANNELS: usize = LEGS * 2;
pub const SENSORS_WITH_DELAY: usize = JOINTS + DELAYED_CHANNELS;

pub fn ap(leg: usize) -> usize {
    leg * JOINTS_PER_LEG
}

pub fn ud(leg: usize) -> usize {
    leg * JOINTS_PER_LEG + 1
}

pub fn knee(leg: usize) -> usize {
    leg * JOINTS_PER_LEG + 2
}

pub fn is_left(leg: usize) -> bool {
    leg < LEGS / 2
}

/// The leg a joint belongs to.
pub fn leg_of(joint: usize) -> usize {
    joint / JOINTS_PER_LEG
}

/// Base sensor indices that get a delayed copy (coxa AP + UD per leg).
pub fn delayed_base_indices() -> Vec<usize> {
    let mut v = Vec::with_capacity(DELAYED_CHANNELS);
    for leg in 0..LEGS {
        v.push(ap(leg));
        v.push(ud(leg));
    }
    v
}

/// Column of the delayed AP channel of `leg` in the extended sensor vector.
pub fn delayed_ap_col(leg: usize) -> usize {
    JOINTS + 2 * leg
}

/// Same-side front-to-back leg pairs: (front, back) on the left, then right.
pub fn subsequent_pairs() -> [(usize, usize); 4] {
    [(0, 1), (1, 2), (3, 4), (4, 5)]
}

/// Mirror pairs across the body axis: (left leg, right leg).
pub fn opposite_pairs() -> [(usize, usize); 3] {
    [(0, 3), (1, 4), (2, 5)]
}
