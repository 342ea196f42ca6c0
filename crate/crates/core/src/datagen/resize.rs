use super::{LayoutMask, SemSample};
use crate::error::{invalid, Result};
use crate::grid::Grid;

/// Resize a sample: bilinear (half-pixel centers) for the image,
/// nearest-neighbour for the mask.
pub fn resize_sample(sample: &SemSample, height: usize, width: usize) -> Result<SemSample> {
    if height < 8 || width < 8 {
        return Err(invalid(format!("resize target {height}x{width} is below 8x8")));
    }
    if sample.dims() == (height, width) {
        return Ok(sample.clone());
    }
    let image = bilinear(&sample.image, height, width);
    let mask = nearest(&sample.mask, height, width)?;
    SemSample::new(sample.id.clone(), image, mask)
}

fn source_coord(dst: usize, src_len: usize, dst_len: usize) -> f64 {
    let scale = src_len as f64 / dst_len as f64;
    ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64)
}

fn bilinear(src: &Grid<f64>, height: usize, width: usize) -> Grid<f64> {
    let (sh, sw) = src.dims();
    let mut data = Vec::with_capacity(height * width);
    for y in 0..height {
        let fy = source_coord(y, sh, height);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(sh - 1);
        let ty = fy - y0 as f64;
        for x in 0..width {
            let fx = source_coord(x, sw, width);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(sw - 1);
            let tx = fx - x0 as f64;
            let top = src.get(y0, x0) * (1.0 - tx) + src.get(y0, x1) * tx;
            let bottom = src.get(y1, x0) * (1.0 - tx) + src.get(y1, x1) * tx;
            data.push((top * (1.0 - ty) + bottom * ty).clamp(0.0, 1.0));
        }
    }
    Grid::new(height, width, data).expect("dims checked")
}

fn nearest(src: &LayoutMask, height: usize, width: usize) -> Result<LayoutMask> {
    let (sh, sw) = src.dims();
    let mut pixels = Vec::with_capacity(height * width);
    for y in 0..height {
        let sy = ((y as f64 + 0.5) * sh as f64 / height as f64).floor() as usize;
        for x in 0..width {
            let sx = ((x as f64 + 0.5) * sw as f64 / width as f64).floor() as usize;
            pixels.push(src.get(sy.min(sh - 1), sx.min(sw - 1)));
        }
    }
    LayoutMask::new(height, width, pixels)
}
