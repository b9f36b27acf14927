//! Synthetic segmentation data: colored rectangles and discs on a noisy
//! background, with per-pixel class labels.
//!
//! Deliberately easy — each class has its own color — so a small model can
//! reach high accuracy in a few hundred steps, which is exactly what the
//! training harness needs to demonstrate.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::init::{seeded, Rng};
use crate::io::{read_pgm, read_ppm, write_pgm, write_ppm};
use crate::real::Real;
use crate::tensor::Tensor;

/// One image/label pair. The image is `[3,H,W]` in `[0,1]`; the mask holds
/// one class id per pixel, row-major.
pub struct SyntheticSample<T: Real> {
    pub image: Tensor<T>,
    pub mask: Vec<u8>,
    pub h: usize,
    pub w: usize,
}

/// Probability that each foreground class places its shape in a sample.
const PLACE_PROB: f64 = 0.9;
/// Pixel noise level.
const NOISE_STD: f64 = 0.05;

/// Deterministic class palette: a dark background and saturated,
/// well-separated hues for the foreground classes.
pub fn class_color(class: usize, num_classes: usize) -> [f64; 3] {
    if class == 0 {
        return [0.2, 0.2, 0.2];
    }
    let hue = (class - 1) as f64 / (num_classes - 1).max(1) as f64;
    hsv_to_rgb(hue, 0.65, 0.85)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.fract() * 6.0).min(5.999_999);
    let sector = h6 as usize;
    let f = h6 - sector as f64;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Generates `count` samples. Foreground classes `1..num_classes` each drop
/// one axis-aligned rectangle or disc (with probability [`PLACE_PROB`]),
/// painted in the class color; Gaussian noise is added everywhere. Fully
/// deterministic in `seed`.
pub fn gen_dataset<T: Real>(
    seed: u64,
    count: usize,
    h: usize,
    w: usize,
    num_classes: usize,
) -> Result<Vec<SyntheticSample<T>>> {
    if num_classes < 2 || num_classes > 256 {
        return Err(Error::config(format!(
            "num_classes must be in 2..=256, got {num_classes}"
        )));
    }
    if h < 8 || w < 8 {
        return Err(Error::config(format!("image {h}x{w} too small, need >= 8")));
    }
    let mut rng = seeded(seed);
    let noise = Normal::new(0.0, NOISE_STD).expect("valid std");
    (0..count)
        .map(|_| gen_sample(&mut rng, &noise, h, w, num_classes))
        .collect()
}

fn gen_sample<T: Real>(
    rng: &mut Rng,
    noise: &Normal<f64>,
    h: usize,
    w: usize,
    num_classes: usize,
) -> Result<SyntheticSample<T>> {
    let plane = h * w;
    let mut mask = vec![0u8; plane];
    let mut rgb = vec![[0.0f64; 3]; plane];
    for px in rgb.iter_mut() {
        *px = class_color(0, num_classes);
    }
    let min_dim = h.min(w) as f64;
    for class in 1..num_classes {
        // Draw the shape parameters unconditionally so the sample stream
        // stays aligned whether or not the shape lands.
        let cy = rng.gen_range(0.0..h as f64);
        let cx = rng.gen_range(0.0..w as f64);
        let ry = rng.gen_range(0.2..0.4) * min_dim;
        let rx = rng.gen_range(0.2..0.4) * min_dim;
        let disc = rng.gen_bool(0.5);
        let placed = rng.gen_bool(PLACE_PROB);
        if !placed {
            continue;
        }
        let color = class_color(class, num_classes);
        for i in 0..h {
            for j in 0..w {
                let dy = (i as f64 + 0.5 - cy) / ry;
                let dx = (j as f64 + 0.5 - cx) / rx;
                let inside = if disc {
                    dy * dy + dx * dx <= 1.0
                } else {
                    dy.abs() <= 1.0 && dx.abs() <= 1.0
                };
                if inside {
                    mask[i * w + j] = class as u8;
                    rgb[i * w + j] = color;
                }
            }
        }
    }
    let mut data = vec![T::zero(); 3 * plane];
    for s in 0..plane {
        for ch in 0..3 {
            let v = (rgb[s][ch] + noise.sample(rng)).clamp(0.0, 1.0);
            data[ch * plane + s] = T::of(v);
        }
    }
    Ok(SyntheticSample {
        image: Tensor::from_vec(&[3, h, w], data)?,
        mask,
        h,
        w,
    })
}

/// Writes samples as numbered `img_NNNN.ppm` / `mask_NNNN.pgm` pairs.
pub fn save_dataset<T: Real>(dir: &Path, samples: &[SyntheticSample<T>]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, s) in samples.iter().enumerate() {
        write_ppm(&dir.join(format!("img_{i:04}.ppm")), &s.image)?;
        write_pgm(&dir.join(format!("mask_{i:04}.pgm")), &s.mask, s.h, s.w)?;
    }
    Ok(())
}

/// Loads every `img_NNNN.ppm` / `mask_NNNN.pgm` pair from a directory, in
/// index order.
pub fn load_dataset<T: Real>(dir: &Path) -> Result<Vec<SyntheticSample<T>>> {
    let mut samples = Vec::new();
    for i in 0.. {
        let img_path = dir.join(format!("img_{i:04}.ppm"));
        if !img_path.exists() {
            break;
        }
        let image = read_ppm::<T>(&img_path)?;
        let (mask, h, w) = read_pgm(&dir.join(format!("mask_{i:04}.pgm")))?;
        let dims = image.shape();
        if dims[1] != h || dims[2] != w {
            return Err(Error::format(format!(
                "sample {i}: image {dims:?} does not match mask {h}x{w}"
            )));
        }
        samples.push(SyntheticSample { image, mask, h, w });
    }
    if samples.is_empty() {
        return Err(Error::format(format!(
            "no samples found in {}",
            dir.display()
        )));
    }
    Ok(samples)
}
