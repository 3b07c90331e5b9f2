//! Image quality metrics over RGB tensors, evaluation reports and a
//! forward-pass timer.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use crate::data::{list_pngs, read_png, ImagePair};
use crate::error::{DataError, Error, Result, TensorError};
use crate::model::RsenModel;
use crate::parallel;
use crate::tensor::{Dims, Tensor};

/// SSIM window side and Gaussian width.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn same_dims(op: &'static str, a: Dims, b: Dims) -> Result<(), TensorError> {
    if a != b {
        return Err(TensorError::mismatch(op, a, b));
    }
    Ok(())
}

/// PSNR in dB with peak 1. Identical inputs give `f64::INFINITY`.
pub fn psnr(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64, TensorError> {
    psnr_with_peak(a, b, 1.0)
}

/// `10 log10(peak^2 / mse)`, with the mean taken jointly over every element.
pub fn psnr_with_peak(a: &Tensor<f32>, b: &Tensor<f32>, peak: f64) -> Result<f64, TensorError> {
    same_dims("psnr", a.dims(), b.dims())?;
    if !(peak > 0.0) {
        return Err(TensorError::Contract(format!("psnr peak must be positive, got {peak}")));
    }
    if a.numel() == 0 {
        return Err(TensorError::EmptySpatial { op: "psnr", dims: a.dims() });
    }
    let sse: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (f64::from(x) - f64::from(y)).powi(2))
        .sum();
    let mse = sse / a.numel() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - r;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable 'valid' filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h + 1 - SSIM_WINDOW, w + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k.iter().enumerate().map(|(i, kv)| kv * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> f64 {
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let prod = |f: fn(f64, f64) -> f64| a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect::<Vec<_>>();
    let mu_a = filter_valid(a, h, w, k);
    let mu_b = filter_valid(b, h, w, k);
    let aa = filter_valid(&prod(|x, _| x * x), h, w, k);
    let bb = filter_valid(&prod(|_, y| y * y), h, w, k);
    let ab = filter_valid(&prod(|x, y| x * y), h, w, k);
    let n = mu_a.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    total / n as f64
}

/// Single-scale SSIM with an 11x11 Gaussian window (sigma 1.5) over the
/// fully covered region, dynamic range 1, averaged over channels and batch.
pub fn ssim(a: &Tensor<f32>, b: &Tensor<f32>) -> Result<f64, TensorError> {
    same_dims("ssim", a.dims(), b.dims())?;
    let d = a.dims();
    if d.h < SSIM_WINDOW || d.w < SSIM_WINDOW || d.n == 0 || d.c == 0 {
        return Err(TensorError::mismatch("ssim", "h, w >= 11", d));
    }
    let k = gaussian_window();
    let mut total = 0.0;
    for n in 0..d.n {
        for c in 0..d.c {
            let pa: Vec<f64> = a.plane(n, c).iter().map(|&v| f64::from(v)).collect();
            let pb: Vec<f64> = b.plane(n, c).iter().map(|&v| f64::from(v)).collect();
            total += ssim_plane(&pa, &pb, d.h, d.w, &k);
        }
    }
    Ok(total / (d.n * d.c) as f64)
}

/// One evaluated image.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub seconds: Option<f64>,
}

/// Per-image metrics in id order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn new(mut rows: Vec<EvalRow>) -> Self {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        EvalReport { rows }
    }

    /// Mean PSNR over finite rows; `None` when no row is finite.
    pub fn mean_psnr(&self) -> Option<f64> {
        let finite: Vec<f64> = self.rows.iter().map(|r| r.psnr).filter(|p| p.is_finite()).collect();
        (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64)
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        (!self.rows.is_empty()).then(|| self.rows.iter().map(|r| r.ssim).sum::<f64>() / self.rows.len() as f64)
    }

    /// Rows left out of the PSNR mean because the images were identical.
    pub fn infinite_psnr(&self) -> usize {
        self.rows.iter().filter(|r| r.psnr.is_infinite()).count()
    }

    pub fn mean_seconds(&self) -> Option<f64> {
        let t: Vec<f64> = self.rows.iter().filter_map(|r| r.seconds).collect();
        (!t.is_empty()).then(|| t.iter().sum::<f64>() / t.len() as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("id,psnr,ssim\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{:.6}", r.id, fmt_db(r.psnr), r.ssim);
        }
        s
    }

    /// One human-readable line. Logs a warning when identical images were excluded.
    pub fn summary(&self) -> String {
        let inf = self.infinite_psnr();
        if inf > 0 {
            log::warn!("{inf} image(s) with infinite PSNR excluded from the mean");
        }
        let psnr = match self.mean_psnr() {
            Some(p) => format!("{p:.4} dB"),
            None if inf > 0 => "inf".to_string(),
            None => "n/a".to_string(),
        };
        let ssim = self.mean_ssim().map_or("n/a".to_string(), |s| format!("{s:.4}"));
        let mut line = format!("images={} mean_psnr={psnr} mean_ssim={ssim}", self.rows.len());
        if inf > 0 {
            let _ = write!(line, " excluded_infinite={inf}");
        }
        if let Some(t) = self.mean_seconds() {
            let _ = write!(line, " mean_seconds={t:.4}");
        }
        line
    }
}

fn fmt_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

fn row(id: &str, pred: &Tensor<f32>, gt: &Tensor<f32>, seconds: Option<f64>) -> Result<EvalRow> {
    Ok(EvalRow {
        id: id.to_string(),
        psnr: psnr(pred, gt)?,
        ssim: ssim(pred, gt)?,
        seconds,
    })
}

/// Scores every PNG in `pred_dir` against the same-named file in `gt_dir`.
pub fn eval_dir(pred_dir: &Path, gt_dir: &Path) -> Result<EvalReport> {
    for d in [pred_dir, gt_dir] {
        if !d.is_dir() {
            return Err(DataError::MissingDir(d.to_path_buf()).into());
        }
    }
    let pred = list_pngs(pred_dir)?;
    let gt = list_pngs(gt_dir)?;
    let mut unmatched: Vec<String> = pred
        .iter()
        .filter(|n| gt.binary_search(n).is_err())
        .chain(gt.iter().filter(|n| pred.binary_search(n).is_err()))
        .cloned()
        .collect();
    if !unmatched.is_empty() {
        unmatched.sort();
        return Err(DataError::Unmatched(unmatched).into());
    }
    let rows = parallel::map_indexed(pred.len(), |i| {
        let id = &pred[i];
        let p = read_png(&pred_dir.join(id))?;
        let g = read_png(&gt_dir.join(id))?;
        row(id, &p, &g, None)
    });
    Ok(EvalReport::new(rows.into_iter().collect::<Result<_>>()?))
}

/// Scores the rainy inputs of each pair against their clean images.
pub fn eval_pairs(pairs: &[ImagePair]) -> Result<EvalReport> {
    let rows = parallel::map_indexed(pairs.len(), |i| {
        let p = &pairs[i];
        row(&p.id, &p.rainy, &p.clean, None)
    });
    Ok(EvalReport::new(rows.into_iter().collect::<Result<_>>()?))
}

/// Derains each pair's input and scores it against the clean image, timing
/// each forward pass.
pub fn eval_model(model: &RsenModel<f32>, pairs: &[ImagePair]) -> Result<EvalReport> {
    let rows = pairs
        .iter()
        .map(|p| {
            let start = Instant::now();
            let (_, derained) = model.derain(&p.rainy)?;
            let secs = start.elapsed().as_secs_f64();
            row(&p.id, &derained, &p.clean, Some(secs))
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport::new(rows))
}

/// Median of the samples; the mean of the two middle values for even counts.
pub fn median(samples: &[f64]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    Some(if s.len() % 2 == 1 { s[m] } else { (s[m - 1] + s[m]) / 2.0 })
}

/// Forward-pass timing at `1 x 3 x size x size`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub size: usize,
    pub median_s: f64,
    pub runs: Vec<f64>,
}

impl BenchResult {
    pub const CSV_HEADER: &'static str = "size,median_s,runs";

    pub fn csv_row(&self) -> String {
        format!("{},{:.6},{}", self.size, self.median_s, self.runs.len())
    }
}

/// Times `repeats` forward passes after `warmup` untimed ones.
pub fn bench_forward(model: &RsenModel<f32>, size: usize, repeats: usize, warmup: usize) -> Result<BenchResult> {
    if size == 0 || !size.is_multiple_of(crate::model::SIZE_MULTIPLE) {
        return Err(Error::Tensor(TensorError::Contract(format!(
            "bench size {size} must be a positive multiple of {}",
            crate::model::SIZE_MULTIPLE
        ))));
    }
    if repeats == 0 {
        return Err(Error::Tensor(TensorError::Contract("bench needs at least one run".into())));
    }
    let image = Tensor::from_fn([1, 3, size, size], |_, c, h, w| ((c * 7 + h * 3 + w * 5) % 17) as f32 / 16.0);
    for _ in 0..warmup {
        model.derain(&image)?;
    }
    let mut runs = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let out = model.derain(&image)?;
        runs.push(start.elapsed().as_secs_f64());
        drop(out);
    }
    Ok(BenchResult {
        size,
        median_s: median(&runs).expect("repeats > 0"),
        runs,
    })
}
