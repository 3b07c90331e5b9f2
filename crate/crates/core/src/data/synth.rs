//! Additive synthetic rain: `I = clamp(B + R, 0, 1)` with an achromatic streak layer `R`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pairs::ImagePair;
use crate::config::KvConfig;
use crate::error::{ConfigError, DataError};
use crate::tensor::{Dims, Tensor};

/// Per-streak deviation from the mean angle, in degrees.
pub const ANGLE_JITTER_DEG: f64 = 5.0;

/// Streak layer parameters. `angle` is measured from vertical, in degrees.
#[derive(Debug, Clone, PartialEq)]
pub struct StreakParams {
    pub count: usize,
    pub angle: f64,
    pub length: f64,
    pub width: f64,
    pub intensity: f64,
    pub seed: u64,
}

impl Default for StreakParams {
    fn default() -> Self {
        StreakParams {
            count: 400,
            angle: 10.0,
            length: 18.0,
            width: 1.5,
            intensity: 0.6,
            seed: 0,
        }
    }
}

impl StreakParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: f64, reason: &str| {
            Err(ConfigError::InvalidValue {
                key: key.into(),
                value: value.to_string(),
                reason: reason.into(),
            })
        };
        if !(0.0..=1.0).contains(&self.intensity) {
            return bad("rain.intensity", self.intensity, "must lie in [0, 1]");
        }
        if !(-45.0..=45.0).contains(&self.angle) {
            return bad("rain.angle", self.angle, "must lie in [-45, 45] degrees");
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return bad("rain.length", self.length, "must be positive");
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return bad("rain.width", self.width, "must be positive");
        }
        Ok(())
    }

    /// Reads `rain.*` keys, defaulting absent ones.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ConfigError> {
        let d = StreakParams::default();
        let p = StreakParams {
            count: kv.get_or("rain.count", d.count)?,
            angle: kv.get_or("rain.angle", d.angle)?,
            length: kv.get_or("rain.length", d.length)?,
            width: kv.get_or("rain.width", d.width)?,
            intensity: kv.get_or("rain.intensity", d.intensity)?,
            seed: kv.get_or("rain.seed", d.seed)?,
        };
        p.validate()?;
        Ok(p)
    }
}

struct Segment {
    x0: f64,
    y0: f64,
    dx: f64,
    dy: f64,
    len: f64,
    brightness: f64,
}

impl Segment {
    fn distance(&self, px: f64, py: f64) -> f64 {
        let (rx, ry) = (px - self.x0, py - self.y0);
        let t = ((rx * self.dx + ry * self.dy) / self.len).clamp(0.0, self.len);
        let (qx, qy) = (self.x0 + t * self.dx / self.len, self.y0 + t * self.dy / self.len);
        ((px - qx).powi(2) + (py - qy).powi(2)).sqrt()
    }
}

fn bilinear(img: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |xi: f64, yi: f64| {
        if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
            0.0
        } else {
            img[yi as usize * w + xi as usize]
        }
    };
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1.0, y0))
        + fy * ((1.0 - fx) * at(x0, y0 + 1.0) + fx * at(x0 + 1.0, y0 + 1.0))
}

/// Renders the single-channel streak layer `R` (row-major `h x w`, values in `[0, intensity]`).
pub fn rain_layer(h: usize, w: usize, p: &StreakParams) -> Result<Vec<f32>, ConfigError> {
    p.validate()?;
    let mut acc = vec![0.0f64; h * w];
    if p.count == 0 || p.intensity == 0.0 || h == 0 || w == 0 {
        return Ok(vec![0.0; h * w]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let half = p.width / 2.0;
    for _ in 0..p.count {
        let theta = (p.angle + rng.random_range(-ANGLE_JITTER_DEG..=ANGLE_JITTER_DEG)).to_radians();
        let len = p.length * rng.random_range(0.5..=1.0);
        let (ux, uy) = (theta.sin(), theta.cos());
        let cx = rng.random_range(-0.1..1.1) * w as f64;
        let cy = rng.random_range(-0.1..1.1) * h as f64;
        let seg = Segment {
            x0: cx - ux * len / 2.0,
            y0: cy - uy * len / 2.0,
            dx: ux * len,
            dy: uy * len,
            len,
            brightness: rng.random_range(0.6..=1.0),
        };
        let pad = half + 1.0;
        let xs = (seg.x0.min(seg.x0 + seg.dx) - pad).floor().max(0.0) as usize;
        let xe = (seg.x0.max(seg.x0 + seg.dx) + pad).ceil().min(w as f64) as usize;
        let ys = (seg.y0.min(seg.y0 + seg.dy) - pad).floor().max(0.0) as usize;
        let ye = (seg.y0.max(seg.y0 + seg.dy) + pad).ceil().min(h as f64) as usize;
        for y in ys..ye {
            for x in xs..xe {
                let d = seg.distance(x as f64 + 0.5, y as f64 + 0.5);
                let coverage = (half + 0.5 - d).clamp(0.0, 1.0);
                if coverage > 0.0 {
                    let v = &mut acc[y * w + x];
                    *v = v.max(coverage * seg.brightness);
                }
            }
        }
    }
    // Motion blur along the mean streak direction.
    let theta = p.angle.to_radians();
    let (ux, uy) = (theta.sin(), theta.cos());
    let taps = ((p.length / 4.0).round() as usize).max(1);
    let mut out = vec![0.0f32; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for t in 0..taps {
                let o = t as f64 - (taps - 1) as f64 / 2.0;
                s += bilinear(&acc, h, w, x as f64 + o * ux, y as f64 + o * uy);
            }
            out[y * w + x] = (p.intensity * (s / taps as f64).clamp(0.0, 1.0)) as f32;
        }
    }
    Ok(out)
}

/// Adds the same streak layer to all channels of `clean` and clamps, returning `(I, B)`.
pub fn synthesize_rain(
    clean: &Tensor<f32>,
    p: &StreakParams,
    id: impl Into<String>,
) -> Result<ImagePair, DataError> {
    let d = clean.dims();
    if d.n != 1 || d.c != 3 {
        return Err(DataError::Invalid(format!("expected a 1x3xHxW background, got {d}")));
    }
    let layer = rain_layer(d.h, d.w, p).map_err(|e| DataError::Invalid(e.to_string()))?;
    let plane = d.plane();
    let mut rainy = clean.clone();
    for (i, v) in rainy.data_mut().iter_mut().enumerate() {
        *v = (*v + layer[i % plane]).clamp(0.0, 1.0);
    }
    ImagePair::new(id, rainy, clean.clone())
}

/// A smooth procedural background with soft-edged shapes, values inside `[0.05, 0.85]`.
pub fn synthetic_background(h: usize, w: usize, seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_b6c0);
    let mut base = [[0.0f64; 3]; 3];
    for row in base.iter_mut() {
        for v in row.iter_mut() {
            *v = rng.random_range(0.15..0.7);
        }
    }
    let shapes: Vec<([f64; 3], f64, f64, f64, f64)> = (0..rng.random_range(4..10))
        .map(|_| {
            let color = [rng.random(), rng.random(), rng.random()];
            let cx = rng.random_range(0.0..w as f64);
            let cy = rng.random_range(0.0..h as f64);
            let r = rng.random_range(0.08..0.35) * h.max(w) as f64;
            let alpha = rng.random_range(0.3..0.8);
            (color, cx, cy, r, alpha)
        })
        .collect();
    let freq = rng.random_range(1.0..4.0);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut data = vec![0.0f32; 3 * h * w];
    for y in 0..h {
        let fy = y as f64 / h.max(1) as f64;
        for x in 0..w {
            let fx = x as f64 / w.max(1) as f64;
            let texture = 0.05 * (freq * std::f64::consts::TAU * (fx + 0.5 * fy) + phase).sin();
            for c in 0..3 {
                let mut v = base[c][0] + (base[c][1] - base[c][0]) * fx + (base[c][2] - base[c][0]) * fy * 0.5;
                for &(color, cx, cy, r, alpha) in &shapes {
                    let d = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
                    let mask = alpha * (r - d).clamp(0.0, 2.0) / 2.0;
                    v = v * (1.0 - mask) + color[c] * mask;
                }
                data[(c * h + y) * w + x] = (0.05 + 0.8 * (v + texture).clamp(0.0, 1.0)) as f32;
            }
        }
    }
    Tensor::new(Dims::new(1, 3, h, w), data).expect("sized above")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn psnr(a: &Tensor<f32>, b: &Tensor<f32>) -> f64 {
        let mse = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
            .sum::<f64>()
            / a.numel() as f64;
        10.0 * (1.0 / mse).log10()
    }

    #[test]
    fn zero_rain_is_identity() {
        let b = synthetic_background(20, 24, 3);
        for p in [
            StreakParams { count: 0, ..Default::default() },
            StreakParams { intensity: 0.0, ..Default::default() },
        ] {
            let pair = synthesize_rain(&b, &p, "x").unwrap();
            assert_eq!(pair.rainy.data(), b.data());
            assert_eq!(pair.clean.data(), b.data());
        }
    }

    #[test]
    fn rain_is_additive_achromatic_and_deterministic() {
        let b = synthetic_background(32, 40, 1);
        let p = StreakParams::default();
        let layer = rain_layer(32, 40, &p).unwrap();
        assert!(layer.iter().all(|&v| (0.0..=0.6 + 1e-6).contains(&v)));
        assert!(layer.iter().any(|&v| v > 0.1));
        let pair = synthesize_rain(&b, &p, "x").unwrap();
        let again = synthesize_rain(&b, &p, "x").unwrap();
        assert_eq!(pair.rainy.data(), again.rainy.data());
        assert!(pair.rainy.mean() >= b.mean());
        for (i, (&r, &c)) in pair.rainy.data().iter().zip(b.data()).enumerate() {
            assert!(r >= c);
            assert_eq!(r, (c + layer[i % (32 * 40)]).min(1.0));
        }
        let other = synthesize_rain(&b, &StreakParams { seed: 9, ..p }, "x").unwrap();
        assert_ne!(pair.rainy.data(), other.rainy.data());
    }

    #[test]
    fn intensity_out_of_range_is_config_error() {
        let b = synthetic_background(8, 8, 0);
        for intensity in [-0.1, 1.5] {
            let p = StreakParams { intensity, ..Default::default() };
            assert!(synthesize_rain(&b, &p, "x").is_err());
            assert!(matches!(rain_layer(8, 8, &p), Err(ConfigError::InvalidValue { .. })));
        }
    }

    #[test]
    fn psnr_falls_as_intensity_grows() {
        let b = synthetic_background(48, 48, 7);
        let scores: Vec<f64> = [0.1, 0.3, 0.5]
            .iter()
            .map(|&intensity| {
                let p = StreakParams { intensity, seed: 4, ..Default::default() };
                psnr(&synthesize_rain(&b, &p, "x").unwrap().rainy, &b)
            })
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2], "{scores:?}");
    }

    #[test]
    fn background_range() {
        let b = synthetic_background(30, 17, 2);
        assert!(b.data().iter().all(|&v| (0.05..=0.85).contains(&v)));
    }
}
