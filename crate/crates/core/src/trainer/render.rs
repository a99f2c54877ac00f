//! Synthetic network input: a grayscale crop of the bounding box showing joint
//! blobs and limb strokes.
//!
//! Blob brightness falls off with depth behind the root, which is the only
//! per-joint depth cue in the image. Left limbs are drawn brighter than right
//! limbs so the two sides can be told apart.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::skeleton::{Pose2D, Skeleton};

const BLOB_SIGMA: f64 = 1.0;
const LIMB_SIGMA: f64 = 0.6;
const NOISE_STD: f64 = 0.03;
const LEFT_LIMB: f64 = 0.5;
const MIDLINE_LIMB: f64 = 0.35;
const RIGHT_LIMB: f64 = 0.2;

/// Blob amplitude for a joint `rel_z` millimetres behind (positive) or in
/// front of (negative) the root.
pub fn depth_brightness(rel_z: f64) -> f64 {
    (1.0 - 0.6 * rel_z / 1000.0).clamp(0.2, 1.8)
}

/// Renders a `size x size` row-major image of the crop `pose2d.bbox`.
pub fn render(
    pose2d: &Pose2D,
    rel_z: &[f64],
    skeleton: &Skeleton,
    size: usize,
    noise_seed: u64,
) -> Vec<f32> {
    let b = pose2d.bbox;
    let to_crop = |p: [f64; 2]| {
        [
            (p[0] - b.x) / b.w * size as f64,
            (p[1] - b.y) / b.h * size as f64,
        ]
    };
    let pts: Vec<[f64; 2]> = pose2d.coords.iter().map(|&p| to_crop(p)).collect();
    let mut limbs = vec![0.0f64; size * size];
    let mut blobs = vec![0.0f64; size * size];

    let mut side = vec![MIDLINE_LIMB; skeleton.n_joints];
    for &(l, r) in &skeleton.left_right_pairs {
        side[l] = LEFT_LIMB;
        side[r] = RIGHT_LIMB;
    }

    let window = |lo: f64, hi: f64, reach: f64| {
        let a = (lo - reach).floor().max(0.0) as usize;
        let z = ((hi + reach).ceil().max(0.0) as usize).min(size);
        a..z
    };

    for (j, parent) in skeleton.parent.iter().enumerate() {
        let Some(p) = *parent else { continue };
        let (a, c) = (pts[p], pts[j]);
        let (dx, dy) = (c[0] - a[0], c[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        let reach = 4.0 * LIMB_SIGMA;
        for y in window(a[1].min(c[1]), a[1].max(c[1]), reach) {
            for x in window(a[0].min(c[0]), a[0].max(c[0]), reach) {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let t = if len2 > 0.0 {
                    (((px - a[0]) * dx + (py - a[1]) * dy) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                let (ex, ey) = (px - a[0] - t * dx, py - a[1] - t * dy);
                let v = side[j] * (-(ex * ex + ey * ey) / (2.0 * LIMB_SIGMA * LIMB_SIGMA)).exp();
                let cell = &mut limbs[y * size + x];
                *cell = cell.max(v);
            }
        }
    }

    for (j, c) in pts.iter().enumerate() {
        let amp = depth_brightness(rel_z[j]);
        let reach = 4.0 * BLOB_SIGMA;
        for y in window(c[1], c[1], reach) {
            for x in window(c[0], c[0], reach) {
                let (ex, ey) = (x as f64 + 0.5 - c[0], y as f64 + 0.5 - c[1]);
                blobs[y * size + x] +=
                    amp * (-(ex * ex + ey * ey) / (2.0 * BLOB_SIGMA * BLOB_SIGMA)).exp();
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid deviation");
    limbs
        .iter()
        .zip(&blobs)
        .map(|(l, bl)| (l + bl + noise.sample(&mut rng)) as f32)
        .collect()
}
