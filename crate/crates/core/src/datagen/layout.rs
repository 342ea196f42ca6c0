use rand::Rng;

use super::LayoutMask;
use crate::error::{invalid, Result};
use crate::seed;

const MIN_DIM: usize = 8;
/// Fill may overshoot the requested count by at most this relative amount.
const OVERSHOOT: f64 = 0.05;
const MAX_REJECTS: usize = 64;

#[derive(Clone, Copy)]
struct Rect {
    y0: usize,
    x0: usize,
    y1: usize,
    x1: usize,
}

/// Generate a Manhattan layout: horizontal/vertical tracks plus square
/// contacts, filled until the foreground fraction reaches `structure_density`.
///
/// The final fraction lies in `[d, d·1.05]` up to rounding to whole pixels.
pub fn generate_layout(height: usize, width: usize, structure_density: f64, seed: u64) -> Result<LayoutMask> {
    if height < MIN_DIM || width < MIN_DIM {
        return Err(invalid(format!("layout must be at least {MIN_DIM}x{MIN_DIM}, got {height}x{width}")));
    }
    if !(structure_density > 0.0 && structure_density < 1.0) {
        return Err(invalid(format!("structure density {structure_density} outside (0, 1)")));
    }

    let total = height * width;
    let target = ((structure_density * total as f64).round() as usize).clamp(1, total - 1);
    let ceiling = ((target as f64 * (1.0 + OVERSHOOT)).floor() as usize).clamp(target, total - 1);

    let side = height.min(width);
    let track_min = (side / 32).max(1);
    let track_max = (side / 12).max(track_min + 1);
    let mut rng = seed::rng(seed);
    let mut pixels = vec![0u8; total];
    let mut count = 0usize;
    let mut rejects = 0usize;

    while count < target {
        let rect = if rejects >= MAX_REJECTS {
            // Nothing bigger fits under the ceiling: top up single pixels.
            let (y, x) = loop {
                let y = rng.random_range(0..height);
                let x = rng.random_range(0..width);
                if pixels[y * width + x] == 0 {
                    break (y, x);
                }
            };
            Rect { y0: y, x0: x, y1: y + 1, x1: x + 1 }
        } else {
            // Shrink features as the remaining budget gets small.
            let shrink = if rejects > MAX_REJECTS / 2 { 2 } else { 1 };
            random_rect(&mut rng, height, width, track_min, track_max, shrink)
        };

        let added = (rect.y0..rect.y1)
            .map(|y| pixels[y * width + rect.x0..y * width + rect.x1].iter().filter(|&&p| p == 0).count())
            .sum::<usize>();
        if added == 0 {
            continue;
        }
        if count + added > ceiling {
            rejects += 1;
            continue;
        }
        for y in rect.y0..rect.y1 {
            pixels[y * width + rect.x0..y * width + rect.x1].fill(1);
        }
        count += added;
    }

    LayoutMask::new(height, width, pixels)
}

fn random_rect(rng: &mut impl Rng, height: usize, width: usize, track_min: usize, track_max: usize, shrink: usize) -> Rect {
    let side = height.min(width);
    let kind = rng.random_range(0..10);
    let (h, w) = if kind < 7 {
        let thickness = (rng.random_range(track_min..=track_max) / shrink).max(1);
        let length = (rng.random_range(side / 4..=side) / shrink).max(1);
        if kind % 2 == 0 {
            (thickness, length)
        } else {
            (length, thickness)
        }
    } else {
        let s = (rng.random_range(track_min..=2 * track_max) / shrink).max(1);
        (s, s)
    };
    let h = h.min(height);
    let w = w.min(width);
    let y0 = rng.random_range(0..=height - h);
    let x0 = rng.random_range(0..=width - w);
    Rect { y0, x0, y1: y0 + h, x1: x0 + w }
}
