use rand::Rng;

use crate::data::ImagePair;
use crate::error::DataError;
use crate::tensor::{Dims, Tensor};

/// Aligned crops of a pair, with the window's top-left corner.
#[derive(Debug, Clone)]
pub struct PatchPair {
    pub rainy: Tensor<f32>,
    pub clean: Tensor<f32>,
    pub top: usize,
    pub left: usize,
}

/// Copies the `h x w` window at `(top, left)` from every plane.
pub fn crop_window(t: &Tensor<f32>, top: usize, left: usize, h: usize, w: usize) -> Result<Tensor<f32>, DataError> {
    let d = t.dims();
    if top + h > d.h || left + w > d.w {
        return Err(DataError::Invalid(format!(
            "window {h}x{w} at ({top}, {left}) exceeds {d}"
        )));
    }
    let mut out = Vec::with_capacity(d.n * d.c * h * w);
    for n in 0..d.n {
        for c in 0..d.c {
            let plane = t.plane(n, c);
            for y in top..top + h {
                out.extend_from_slice(&plane[y * d.w + left..y * d.w + left + w]);
            }
        }
    }
    Ok(Tensor::new(Dims::new(d.n, d.c, h, w), out).expect("sized above"))
}

/// Crops the same uniformly drawn `size x size` window from both images.
pub fn sample_patch<R: Rng + ?Sized>(pair: &ImagePair, size: usize, rng: &mut R) -> Result<PatchPair, DataError> {
    let d = pair.rainy.dims();
    if d.h < size || d.w < size || size == 0 {
        return Err(DataError::Invalid(format!(
            "pair `{}` of dims {d} is smaller than patch size {size}",
            pair.id
        )));
    }
    let top = rng.random_range(0..=d.h - size);
    let left = rng.random_range(0..=d.w - size);
    Ok(PatchPair {
        rainy: crop_window(&pair.rainy, top, left, size, size)?,
        clean: crop_window(&pair.clean, top, left, size, size)?,
        top,
        left,
    })
}
