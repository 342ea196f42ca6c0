//! On-disk dataset layout: one directory per subset with 8-bit grayscale
//! image PNGs and 1-bit mask PNGs, plus `manifest.json`.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClientDataset, LayoutMask, NoiseConfig, SemSample, SplitPlan, SubsetRole};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::seed;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub id: String,
    pub subset: String,
    pub layout_seed: u64,
    pub noise_seed: u64,
    pub image: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub height: usize,
    pub width: usize,
    pub structure_density: f64,
    pub dataset_seed: u64,
    pub noise: NoiseConfig,
    pub plan: SplitPlan,
    pub samples: Vec<SampleEntry>,
}

impl DatasetManifest {
    /// Describe `datasets` (in plan order) generated by
    /// [`generate_corpus`](super::generate_corpus) with `dataset_seed`.
    pub fn for_corpus(
        height: usize,
        width: usize,
        structure_density: f64,
        dataset_seed: u64,
        noise: NoiseConfig,
        plan: SplitPlan,
        datasets: &[ClientDataset],
    ) -> Self {
        let mut samples = Vec::new();
        let mut index = 0u64;
        for sub in &plan.subsets {
            let Some(ds) = datasets.iter().find(|d| d.subset_name == sub.name) else { continue };
            for s in &ds.samples {
                samples.push(SampleEntry {
                    id: s.id.clone(),
                    subset: sub.name.clone(),
                    layout_seed: seed::derive_indexed(dataset_seed, "layout", index),
                    noise_seed: seed::derive_indexed(dataset_seed, "noise", index),
                    image: format!("{}/{}.png", sub.name, s.id),
                    mask: format!("{}/{}_mask.png", sub.name, s.id),
                });
                index += 1;
            }
        }
        DatasetManifest {
            format_version: MANIFEST_VERSION,
            height,
            width,
            structure_density,
            dataset_seed,
            noise,
            plan,
            samples,
        }
    }
}

/// Write every plan subset of `datasets` plus the manifest under `dir`.
pub fn export_dataset(dir: &Path, manifest: &DatasetManifest, datasets: &[ClientDataset]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for entry in &manifest.samples {
        let sample = datasets
            .iter()
            .filter(|d| d.subset_name == entry.subset)
            .flat_map(|d| d.samples.iter())
            .find(|s| s.id == entry.id)
            .ok_or_else(|| Error::Format { what: "manifest", detail: format!("sample {} not in datasets", entry.id) })?;
        let image_path = dir.join(&entry.image);
        if let Some(parent) = image_path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_gray_png(&image_path, &sample.image)?;
        write_mask_png(&dir.join(&entry.mask), &sample.mask)?;
    }
    let file = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(file, manifest)?;
    Ok(())
}

/// Read a dataset written by [`export_dataset`]; unions are rebuilt.
pub fn import_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<ClientDataset>)> {
    let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(Error::Format { what: "manifest", detail: format!("unsupported version {}", manifest.format_version) });
    }
    let mut datasets: Vec<ClientDataset> = Vec::new();
    for sub in &manifest.plan.subsets {
        let samples = manifest
            .samples
            .iter()
            .filter(|e| e.subset == sub.name)
            .map(|e| {
                let image = read_gray_png(&dir.join(&e.image))?;
                let mask = read_mask_png(&dir.join(&e.mask))?;
                SemSample::new(e.id.clone(), image, mask)
            })
            .collect::<Result<Vec<_>>>()?;
        if samples.len() != sub.count {
            return Err(Error::Format {
                what: "manifest",
                detail: format!("subset {} lists {} samples, plan expects {}", sub.name, samples.len(), sub.count),
            });
        }
        datasets.push(ClientDataset { subset_name: sub.name.clone(), owner: sub.owner.clone(), role: sub.role, samples });
    }
    for u in &manifest.plan.unions {
        let samples = u
            .members
            .iter()
            .flat_map(|m| datasets.iter().filter(move |d| &d.subset_name == m).flat_map(|d| d.samples.iter().cloned()))
            .collect();
        datasets.push(ClientDataset { subset_name: u.name.clone(), owner: u.owner.clone(), role: SubsetRole::Train, samples });
    }
    Ok((manifest, datasets))
}

/// Write a `[0, 1]` image as an 8-bit grayscale PNG.
pub fn write_gray_png(path: &Path, image: &Grid<f64>) -> Result<()> {
    let bytes: Vec<u8> = image.as_slice().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    write_png(path, image.width(), image.height(), png::BitDepth::Eight, &bytes)
}

pub fn write_mask_png(path: &Path, mask: &LayoutMask) -> Result<()> {
    let row_bytes = mask.width().div_ceil(8);
    let mut packed = vec![0u8; row_bytes * mask.height()];
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(y, x) == 1 {
                packed[y * row_bytes + x / 8] |= 0x80 >> (x % 8);
            }
        }
    }
    write_png(path, mask.width(), mask.height(), png::BitDepth::One, &packed)
}

fn write_png(path: &Path, width: usize, height: usize, depth: png::BitDepth, data: &[u8]) -> Result<()> {
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, width as u32, height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(depth);
    let mut writer = enc.write_header()?;
    writer.write_image_data(data)?;
    writer.finish()?;
    Ok(())
}

fn read_png(path: &Path) -> Result<(usize, usize, png::BitDepth, png::ColorType, Vec<u8>)> {
    let mut decoder = png::Decoder::new(BufReader::new(File::open(path)?));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    Ok((info.width as usize, info.height as usize, info.bit_depth, info.color_type, buf))
}

/// Unpack any grayscale PNG into per-pixel values scaled to `[0, 1]`.
fn unpack_gray(path: &Path) -> Result<Grid<f64>> {
    let (width, height, depth, color, buf) = read_png(path)?;
    if color != png::ColorType::Grayscale {
        return Err(Error::Format { what: "png", detail: format!("{}: expected grayscale, got {color:?}", path.display()) });
    }
    let bits = depth as usize;
    let row_bytes = (width * bits).div_ceil(8);
    let max = ((1u32 << bits) - 1) as f64;
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = &buf[y * row_bytes..(y + 1) * row_bytes];
        for x in 0..width {
            let v = match depth {
                png::BitDepth::Sixteen => u32::from(u16::from_be_bytes([row[2 * x], row[2 * x + 1]])),
                png::BitDepth::Eight => u32::from(row[x]),
                _ => {
                    let bit = x * bits;
                    u32::from((row[bit / 8] >> (8 - bits - bit % 8)) & ((1u8 << bits) - 1))
                }
            };
            data.push(f64::from(v) / max);
        }
    }
    Grid::new(height, width, data)
}

/// Read a grayscale PNG of any bit depth as a `[0, 1]` image.
pub fn read_gray_png(path: &Path) -> Result<Grid<f64>> {
    unpack_gray(path)
}

pub fn read_mask_png(path: &Path) -> Result<LayoutMask> {
    let g = unpack_gray(path)?;
    LayoutMask::new(g.height(), g.width(), g.as_slice().iter().map(|&v| u8::from(v >= 0.5)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{build_experiment_splits, generate_corpus};

    #[test]
    fn export_import_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let noise = NoiseConfig::default();
        let plan = SplitPlan::with_per_subset(2);
        let corpus = generate_corpus(plan.total(), 20, 13, 0.4, &noise, 3).unwrap();
        let datasets = build_experiment_splits(&corpus, &plan).unwrap();
        let manifest = DatasetManifest::for_corpus(20, 13, 0.4, 3, noise, plan, &datasets);
        export_dataset(dir.path(), &manifest, &datasets).unwrap();
        assert!(dir.path().join("A").is_dir() && dir.path().join("J").is_dir());

        let (back_manifest, back) = import_dataset(dir.path()).unwrap();
        assert_eq!(back_manifest, manifest);
        assert_eq!(back.len(), datasets.len());
        for (a, b) in datasets.iter().zip(&back) {
            assert_eq!(a.subset_name, b.subset_name);
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                assert_eq!(sa.id, sb.id);
                assert_eq!(sa.mask, sb.mask);
                for (x, y) in sa.image.as_slice().iter().zip(sb.image.as_slice()) {
                    assert!((x - y).abs() <= 1.0 / 255.0);
                }
            }
        }
    }

    #[test]
    fn manifest_seeds_reproduce_samples() {
        let noise = NoiseConfig::default();
        let plan = SplitPlan::with_per_subset(1);
        let corpus = generate_corpus(plan.total(), 16, 16, 0.4, &noise, 21).unwrap();
        let datasets = build_experiment_splits(&corpus, &plan).unwrap();
        let manifest = DatasetManifest::for_corpus(16, 16, 0.4, 21, noise.clone(), plan, &datasets);
        let e = &manifest.samples[4];
        let mask = crate::datagen::generate_layout(16, 16, 0.4, e.layout_seed).unwrap();
        let again = crate::datagen::render_sem(&mask, &NoiseConfig { seed: e.noise_seed, ..noise }, e.id.clone()).unwrap();
        assert_eq!(again, corpus[4]);
    }
}
