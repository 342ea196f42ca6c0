//! Segmentation and reconstruction metrics on `[0, 1]`-normalized images.

mod reseg;
mod ssim;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datagen::{LayoutMask, SemSample};
use crate::error::{invalid, shape, Result};
use crate::grid::Grid;

pub use reseg::{gaussian_blur, otsu_threshold, unsupervised_resegment, Resegmentation};
pub use ssim::{ssim, WINDOW as SSIM_WINDOW};

/// Probability maps are binarized at this value unless configured otherwise.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

pub fn binarize(prob: &Grid<f64>, threshold: f64) -> Grid<u8> {
    prob.map(|p| u8::from(p >= threshold))
}

/// Jaccard index of two binary pixel sets; 1 when both are empty.
pub fn jaccard(a: &[u8], b: &[u8]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(shape(format!("{} vs {} pixels", a.len(), b.len())));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &q) in a.iter().zip(b) {
        let (p, q) = (p != 0, q != 0);
        inter += usize::from(p && q);
        union += usize::from(p || q);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

pub fn iou(pred: &Grid<u8>, truth: &LayoutMask) -> Result<f64> {
    if pred.dims() != truth.dims() {
        return Err(shape("prediction and mask dimensions differ"));
    }
    jaccard(pred.as_slice(), truth.pixels())
}

fn check_unit(g: &Grid<f64>) -> Result<()> {
    if g.as_slice().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid("pixel values must be normalized to [0, 1]"));
    }
    Ok(())
}

/// Mean squared difference of two `[0, 1]`-normalized images.
pub fn mse_norm(a: &Grid<f64>, b: &Grid<f64>) -> Result<f64> {
    a.ensure_same_dims(b)?;
    check_unit(a)?;
    check_unit(b)?;
    Ok(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `10·log10(1/mse)` with peak value 1; `+∞` when `mse == 0`.
pub fn psnr(mse: f64) -> Result<f64> {
    if !(mse >= 0.0) {
        return Err(invalid(format!("mse must be non-negative, got {mse}")));
    }
    Ok(if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricContext {
    SegmentationEval,
    ReconstructionEval,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preprocessing {
    None,
    UnsupervisedResegmentation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub context: MetricContext,
    pub preprocessing: Preprocessing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iou: Option<f64>,
    pub mse: f64,
    pub ssim: f64,
    #[serde(serialize_with = "ser_psnr", deserialize_with = "de_psnr")]
    pub psnr: f64,
    /// Re-segmentation found no threshold (constant reconstruction).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub resegmentation_degenerate: bool,
}

// JSON has no infinity; the sentinel travels as the string "inf".
fn ser_psnr<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_psnr<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("bad psnr value `{t}`"))),
    }
}

/// Hold-out style evaluation of a probability map: IoU after binarization,
/// MSE/PSNR and raw SSIM of the probabilities against the mask image.
pub fn evaluate_segmentation(prob: &Grid<f64>, truth: &LayoutMask, threshold: f64) -> Result<MetricsReport> {
    let target = truth.to_grid::<f64>();
    let mse = mse_norm(prob, &target)?;
    Ok(MetricsReport {
        context: MetricContext::SegmentationEval,
        preprocessing: Preprocessing::None,
        iou: Some(iou(&binarize(prob, threshold), truth)?),
        mse,
        ssim: ssim(prob, &target)?,
        psnr: psnr(mse)?,
        resegmentation_degenerate: false,
    })
}

/// MSE/PSNR on raw normalized images; SSIM between the re-segmented
/// reconstruction and the original's ground-truth mask.
pub fn evaluate_reconstruction(recon: &Grid<f64>, original: &SemSample) -> Result<MetricsReport> {
    let mse = mse_norm(recon, &original.image)?;
    let seg = unsupervised_resegment(recon)?;
    let structure = ssim(&seg.mask.map(f64::from), &original.mask.to_grid())?;
    Ok(MetricsReport {
        context: MetricContext::ReconstructionEval,
        preprocessing: Preprocessing::UnsupervisedResegmentation,
        iou: None,
        mse,
        ssim: structure,
        psnr: psnr(mse)?,
        resegmentation_degenerate: seg.degenerate,
    })
}
