//! Synthetic SEM-style imagery: layouts, noisy renders, client partitions.

mod export;
mod layout;
mod render;
mod resize;
mod splits;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::grid::Grid;
use crate::scalar::Scalar;

pub use export::{export_dataset, MANIFEST_FILE, import_dataset, read_gray_png, read_mask_png, write_gray_png, write_mask_png, DatasetManifest, SampleEntry};
pub use layout::generate_layout;
pub use render::render_sem;
pub use resize::resize_sample;
pub use splits::{build_experiment_splits, SplitPlan, SubsetPlan, SubsetRole, UnionPlan};

/// Binary layout mask: 1 marks foreground structure, 0 background.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutMask {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl LayoutMask {
    /// Validates binarity and that both classes are present.
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width || height == 0 || width == 0 {
            return Err(shape(format!("{} pixels for a {height}x{width} mask", pixels.len())));
        }
        if pixels.iter().any(|&p| p > 1) {
            return Err(invalid("mask pixels must be 0 or 1"));
        }
        let fg = pixels.iter().filter(|&&p| p == 1).count();
        if fg == 0 || fg == pixels.len() {
            return Err(invalid("mask must contain both foreground and background pixels"));
        }
        Ok(LayoutMask { height, width, pixels })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p == 1).count()
    }

    pub fn foreground_fraction(&self) -> f64 {
        self.foreground_count() as f64 / self.pixels.len() as f64
    }

    /// The mask as a {0, 1} image.
    pub fn to_grid<S: Scalar>(&self) -> Grid<S> {
        Grid::new(self.height, self.width, self.pixels.iter().map(|&p| if p == 1 { S::one() } else { S::zero() }).collect())
            .expect("mask dims are valid")
    }
}

/// Parameters of the SEM noise model, in 8-bit gray levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub background_mean: f64,
    pub foreground_mean: f64,
    pub std_dev: f64,
    pub shot_noise: f64,
    /// Microseconds per pixel.
    pub dwell_time: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            background_mean: 75.0,
            foreground_mean: 135.0,
            std_dev: 20.0,
            shot_noise: 20.0,
            dwell_time: 10.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        let ok_means = 0.0 <= self.background_mean
            && self.background_mean < self.foreground_mean
            && self.foreground_mean <= 255.0;
        if !ok_means {
            return Err(invalid("require 0 <= background_mean < foreground_mean <= 255"));
        }
        if !(self.std_dev > 0.0) || !(self.shot_noise >= 0.0) || !(self.dwell_time > 0.0) {
            return Err(invalid("require std_dev > 0, shot_noise >= 0, dwell_time > 0"));
        }
        Ok(())
    }

    /// Variance of the signal-dependent term at gray level `mean`.
    ///
    /// Shot noise is modelled as the Gaussian limit of Poisson counting noise:
    /// its variance grows linearly with the signal and the shot parameter and
    /// shrinks with dwell time, `mean · shot_noise / dwell_time`.
    pub fn shot_variance(&self, mean: f64) -> f64 {
        mean * self.shot_noise / self.dwell_time
    }

    /// Total per-pixel standard deviation for a class with the given mean.
    pub fn total_std(&self, mean: f64) -> f64 {
        (self.std_dev * self.std_dev + self.shot_variance(mean)).sqrt()
    }

    /// Upper bound, in gray levels, on how far clamping to `[0, 255]` moves
    /// the expected pixel value of a class away from `mean`.
    ///
    /// The shot term itself is zero-mean; clamping a normal with standard
    /// deviation σ at distance `a·σ` shifts its mean by `σ(φ(a) − aΦ(−a))`,
    /// which is at most `σ·φ(a)/(1 + a²)` by the Mills-ratio lower bound on
    /// `Φ(−a)`. Both tails are summed.
    pub fn clamp_bias_bound(&self, mean: f64) -> f64 {
        let sigma = self.total_std(mean);
        let tail = |dist: f64| {
            let a = dist / sigma;
            let phi = (-0.5 * a * a).exp() / (2.0 * std::f64::consts::PI).sqrt();
            sigma * phi / (1.0 + a * a)
        };
        tail(mean) + tail(255.0 - mean)
    }
}

/// One rendered SEM image with its ground-truth mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemSample {
    pub id: String,
    /// Gray values normalized to `[0, 1]`.
    pub image: Grid<f64>,
    pub mask: LayoutMask,
}

impl SemSample {
    pub fn new(id: impl Into<String>, image: Grid<f64>, mask: LayoutMask) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(shape("image and mask dimensions differ"));
        }
        if image.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid("image values must lie in [0, 1]"));
        }
        Ok(SemSample { id: id.into(), image, mask })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.image.dims()
    }
}

/// Samples owned by one (virtual) client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub subset_name: String,
    pub owner: String,
    pub role: SubsetRole,
    pub samples: Vec<SemSample>,
}

impl ClientDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Generate `count` layouts and renders at `height × width`.
///
/// Sample `i` uses layout seed `derive_indexed(seed, "layout", i)` and noise
/// seed `derive_indexed(seed, "noise", i)`.
pub fn generate_corpus(
    count: usize,
    height: usize,
    width: usize,
    structure_density: f64,
    noise: &NoiseConfig,
    seed: u64,
) -> Result<Vec<SemSample>> {
    (0..count)
        .map(|i| {
            let layout_seed = crate::seed::derive_indexed(seed, "layout", i as u64);
            let noise_seed = crate::seed::derive_indexed(seed, "noise", i as u64);
            let mask = generate_layout(height, width, structure_density, layout_seed)?;
            let cfg = NoiseConfig { seed: noise_seed, ..noise.clone() };
            render_sem(&mask, &cfg, format!("sem-{i:04}"))
        })
        .collect()
}
