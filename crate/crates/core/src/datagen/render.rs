use rand_distr::{Distribution, StandardNormal};

use super::{LayoutMask, NoiseConfig, SemSample};
use crate::error::Result;
use crate::grid::Grid;
use crate::seed;

/// Render a noisy SEM image of `mask`.
///
/// Each pixel is its class mean plus one Gaussian draw whose variance is the
/// sum of the fixed detector term `std_dev²` and the shot term
/// [`NoiseConfig::shot_variance`]. Values are clamped to `[0, 255]` and
/// normalized to `[0, 1]`.
pub fn render_sem(mask: &LayoutMask, cfg: &NoiseConfig, id: impl Into<String>) -> Result<SemSample> {
    cfg.validate()?;
    let mut rng = seed::rng(cfg.seed);
    let bg_std = cfg.total_std(cfg.background_mean);
    let fg_std = cfg.total_std(cfg.foreground_mean);
    let data = mask
        .pixels()
        .iter()
        .map(|&p| {
            let (mean, std) = if p == 1 { (cfg.foreground_mean, fg_std) } else { (cfg.background_mean, bg_std) };
            let z: f64 = StandardNormal.sample(&mut rng);
            (mean + std * z).clamp(0.0, 255.0) / 255.0
        })
        .collect();
    let image = Grid::new(mask.height(), mask.width(), data)?;
    SemSample::new(id, image, mask.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::generate_layout;

    fn class_means(s: &SemSample) -> (f64, f64, usize, usize) {
        let (mut bg, mut fg, mut nb, mut nf) = (0.0, 0.0, 0, 0);
        for (v, &m) in s.image.as_slice().iter().zip(s.mask.pixels()) {
            if m == 1 {
                fg += v;
                nf += 1;
            } else {
                bg += v;
                nb += 1;
            }
        }
        (bg / nb as f64, fg / nf as f64, nb, nf)
    }

    #[test]
    fn class_means_match_configuration() {
        let mask = generate_layout(256, 256, 0.5, 4).unwrap();
        let cfg = NoiseConfig { seed: 11, ..NoiseConfig::default() };
        let s = render_sem(&mask, &cfg, "s").unwrap();
        let (bg, fg, nb, nf) = class_means(&s);
        assert!((bg - 75.0 / 255.0).abs() <= 2.0 / 255.0, "bg {}", bg * 255.0);
        assert!((fg - 135.0 / 255.0).abs() <= 2.0 / 255.0, "fg {}", fg * 255.0);

        // Tighter statistical bound: 3 standard errors plus the clamp bias.
        for (mean, emp, n) in [(75.0, bg, nb), (135.0, fg, nf)] {
            assert!(n >= 10_000);
            let tol = 3.0 * cfg.total_std(mean) / (n as f64).sqrt() + cfg.clamp_bias_bound(mean);
            assert!((emp * 255.0 - mean).abs() <= tol, "mean {mean}: {} > {tol}", emp * 255.0);
        }
    }

    #[test]
    fn noiseless_limit_is_piecewise_constant() {
        let mask = generate_layout(32, 32, 0.4, 2).unwrap();
        let cfg = NoiseConfig { std_dev: 0.001, shot_noise: 0.0, ..NoiseConfig::default() };
        let s = render_sem(&mask, &cfg, "s").unwrap();
        for (v, &m) in s.image.as_slice().iter().zip(mask.pixels()) {
            let expect = if m == 1 { 135.0 } else { 75.0 } / 255.0;
            assert!((v - expect).abs() < 1e-4);
        }
    }

    #[test]
    fn render_is_deterministic_and_in_range() {
        let mask = generate_layout(64, 64, 0.4, 2).unwrap();
        let cfg = NoiseConfig { seed: 5, ..NoiseConfig::default() };
        let a = render_sem(&mask, &cfg, "a").unwrap();
        let b = render_sem(&mask, &cfg, "a").unwrap();
        assert_eq!(a, b);
        assert!(a.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let c = render_sem(&mask, &NoiseConfig { seed: 6, ..cfg }, "a").unwrap();
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn shot_noise_widens_the_bright_class() {
        let mask = generate_layout(128, 128, 0.5, 8).unwrap();
        let quiet = NoiseConfig { shot_noise: 0.0, seed: 1, ..NoiseConfig::default() };
        let loud = NoiseConfig { shot_noise: 200.0, seed: 1, ..NoiseConfig::default() };
        let spread = |cfg: &NoiseConfig| {
            let s = render_sem(&mask, cfg, "x").unwrap();
            let vals: Vec<f64> = s.image.as_slice().iter().zip(mask.pixels()).filter(|(_, &m)| m == 1).map(|(v, _)| *v).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64
        };
        assert!(spread(&loud) > 2.0 * spread(&quiet));
    }
}
