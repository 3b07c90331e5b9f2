//! 8-bit RGB PNG input and output.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use crate::error::DataError;
use crate::tensor::{Dims, Tensor};

fn image_err(path: &Path, reason: impl ToString) -> DataError {
    DataError::Image {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

/// Reads an 8-bit RGB PNG into a `1 x 3 x h x w` tensor with values `p / 255`.
///
/// Alpha, grayscale, palette and 16-bit images are rejected.
pub fn read_png(path: &Path) -> Result<Tensor<f32>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| image_err(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| image_err(path, "image too large"))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| image_err(path, e))?;
    if info.color_type != png::ColorType::Rgb || info.bit_depth != png::BitDepth::Eight {
        return Err(image_err(
            path,
            format!(
                "expected 8-bit RGB, found {:?} at {:?} bits",
                info.color_type, info.bit_depth
            ),
        ));
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        let row = &buf[y * info.line_size..y * info.line_size + 3 * w];
        for x in 0..w {
            for c in 0..3 {
                data[(c * h + y) * w + x] = f32::from(row[3 * x + c]) / 255.0;
            }
        }
    }
    Ok(Tensor::new(Dims::new(1, 3, h, w), data).expect("sized above"))
}

/// Clamps to `[0, 1]` and rounds half-up to 8 bits.
#[inline]
pub fn quantize(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}

/// Writes batch item 0 of a 3-channel tensor as an 8-bit RGB PNG.
pub fn write_png(path: &Path, image: &Tensor<f32>) -> Result<(), DataError> {
    let d = image.dims();
    if d.c != 3 || d.n < 1 {
        return Err(image_err(path, format!("cannot write tensor of dims {d} as RGB")));
    }
    let mut bytes = Vec::with_capacity(3 * d.plane());
    for y in 0..d.h {
        for x in 0..d.w {
            for c in 0..3 {
                bytes.push(quantize(image.at(0, c, y, x)));
            }
        }
    }
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut enc = png::Encoder::new(BufWriter::new(file), d.w as u32, d.h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| image_err(path, e))?;
    writer.write_image_data(&bytes).map_err(|e| image_err(path, e))?;
    writer.finish().map_err(|e| image_err(path, e))
}

/// Min-max normalizes a tensor to `[0, 1]` for visual inspection.
pub fn normalize_for_display(t: &Tensor<f32>) -> Tensor<f32> {
    let (lo, hi) = t
        .data()
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        return Tensor::zeros(t.dims());
    }
    t.map(|v| (v - lo) / (hi - lo))
}
