use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Grid;
use crate::field::BinaryMask;

use super::Range;

/// Ranges for the two ellipses of a body-like outline, in metres relative to
/// the grid centre. The lower lobe sits at negative `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LobeParams {
    pub lower_center_x: Range,
    pub lower_semi_x: Range,
    pub lower_semi_y: Range,
    pub upper_center_x: Range,
    pub upper_semi_x: Range,
    pub upper_semi_y: Range,
    /// Lateral offset applied to both lobes.
    pub center_y: Range,
}

impl Default for LobeParams {
    fn default() -> Self {
        LobeParams {
            lower_center_x: Range::new(-0.17, -0.10),
            lower_semi_x: Range::new(0.14, 0.19),
            lower_semi_y: Range::new(0.10, 0.13),
            upper_center_x: Range::new(0.09, 0.16),
            upper_semi_x: Range::new(0.11, 0.16),
            upper_semi_y: Range::new(0.075, 0.105),
            center_y: Range::new(-0.005, 0.005),
        }
    }
}

/// Union of two ellipses on `grid`; `None` when no cell is covered.
pub fn two_lobe_outline(p: &LobeParams, grid: &Grid, rng: &mut ChaCha8Rng) -> Option<BinaryMask> {
    let lobes = [
        (
            p.lower_center_x.sample(rng),
            p.lower_semi_x.sample(rng),
            p.lower_semi_y.sample(rng),
        ),
        (
            p.upper_center_x.sample(rng),
            p.upper_semi_x.sample(rng),
            p.upper_semi_y.sample(rng),
        ),
    ];
    let cy = p.center_y.sample(rng);
    // A random draw that is consumed even when unused keeps streams aligned.
    let _: f64 = rng.random();
    BinaryMask::from_fn(grid.rows, grid.cols, |r, c| {
        let (x, y) = (grid.x(c), grid.y(r) - cy);
        lobes.iter().any(|&(cx, ax, ay)| {
            let u = (x - cx) / ax;
            let v = y / ay;
            u * u + v * v <= 1.0
        })
    })
    .ok()
}
