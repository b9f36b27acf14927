//! Runtime self-checks behind `check --suite <name>`.
//!
//! Each check pits an optimized implementation against an independent
//! reference (a brute-force oracle, a finite-difference slope, a frozen
//! shape law, or a byte-exact round trip) and reports a [`CheckOutcome`]
//! rather than panicking, so the CLI can print every result and exit with
//! a single status. The acceptance tests drive these same entry points.

use rand::Rng as _;

use crate::attention::{natten_oracle, GlobalAttention, Natten};
use crate::data::gen_dataset;
use crate::error::{Error, Result};
use crate::init::{seeded, uniform};
use crate::model::{
    load_checkpoint, save_checkpoint, MixerBlock, ModelConfig, SegModel,
};
use crate::nn::{
    bilinear_resize, global_avg_pool, im2col_ref, pixel_shuffle, pixel_unshuffle, BatchNorm2d,
    Conv2d, Ffn, LayerNorm,
};
use crate::ssm::{
    directional_reorder, directional_restore, selective_scan_1d, selective_scan_ref, Ss2dBlock,
    SsmParams,
};
use crate::tensor::{grad_check, rel_err, smt1, Tape, Tensor};

/// One named pass/fail result with a human-readable measurement.
#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> CheckOutcome {
        CheckOutcome {
            name: name.to_string(),
            passed,
            detail,
        }
    }

    /// Folds an error into a failed outcome instead of propagating it.
    fn from_result(name: &str, r: Result<(bool, String)>) -> CheckOutcome {
        match r {
            Ok((passed, detail)) => CheckOutcome::new(name, passed, detail),
            Err(e) => CheckOutcome::new(name, false, format!("errored: {e}")),
        }
    }
}

/// True when every outcome passed.
pub fn all_passed(outcomes: &[CheckOutcome]) -> bool {
    outcomes.iter().all(|o| o.passed)
}

/// Suite names accepted by [`run_suite`].
pub const SUITES: [&str; 4] = ["oracles", "grads", "shapes", "io"];

/// Runs one named suite. Unknown names are a configuration error.
pub fn run_suite(name: &str) -> Result<Vec<CheckOutcome>> {
    match name {
        "oracles" => Ok(suite_oracles()),
        "grads" => Ok(suite_grads()),
        "shapes" => Ok(suite_shapes()),
        "io" => Ok(suite_io()),
        other => Err(Error::config(format!(
            "unknown check suite {other:?} (expected one of {SUITES:?})"
        ))),
    }
}

/// Optimized kernels against brute-force references over randomized shapes.
pub fn suite_oracles() -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::from_result("scan-vs-reference", check_scan_oracle(200, 1e-6)),
        CheckOutcome::from_result("natten-vs-reference", check_natten_oracle(100, 1e-5)),
        CheckOutcome::from_result("natten-locality-gradient", check_natten_locality()),
        CheckOutcome::from_result("conv-vs-im2col", check_conv_oracle(40, 1e-10)),
        CheckOutcome::from_result("shuffle-round-trips", check_shuffles(100)),
    ]
}

/// Reverse-mode gradients against central differences.
pub fn suite_grads() -> Vec<CheckOutcome> {
    let mut out = vec![CheckOutcome::from_result(
        "op-gradients",
        check_op_gradients(1e-4),
    )];
    out.push(CheckOutcome::from_result(
        "mixer-block-gradient",
        check_block_gradient(2e-4),
    ));
    out
}

/// Frozen shape laws and probability structure of the full model.
pub fn suite_shapes() -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::from_result("pyramid-shape-law", check_pyramid_shapes()),
        CheckOutcome::from_result("logits-softmax-rows", check_logit_softmax()),
        CheckOutcome::from_result("padded-forward-agreement", check_padded_forward()),
    ]
}

/// Byte-exact round trips through every serialization format.
pub fn suite_io() -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::from_result("tensor-format-round-trip", check_smt1_round_trip()),
        CheckOutcome::from_result("checkpoint-round-trip", check_checkpoint_round_trip()),
        CheckOutcome::from_result("image-round-trip", check_image_round_trip()),
        CheckOutcome::from_result("bench-csv-round-trip", check_csv_round_trip()),
    ]
}

/// Random selective-scan instances (dims up to 8) against the direct
/// recurrence. Returns the worst relative error across all instances.
pub fn check_scan_oracle(instances: usize, tol: f64) -> Result<(bool, String)> {
    let mut rng = seeded(41);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let b = rng.gen_range(1..=3usize);
        let d = rng.gen_range(1..=8usize);
        let l = rng.gen_range(1..=8usize);
        let n = rng.gen_range(1..=4usize);
        let p = SsmParams::<f64>::new(&mut rng, d, n)?;
        let u = Tensor::from_vec(&[b, d, l], uniform(&mut rng, b * d * l, -2.0, 2.0))?;
        let fast = selective_scan_1d(&u, &p)?;
        let slow = selective_scan_ref(&u, &p)?;
        worst = worst.max(rel_err(fast.data(), slow.data()));
    }
    Ok((
        worst <= tol,
        format!("{instances} instances, worst rel err {worst:.3e} (tol {tol:.0e})"),
    ))
}

/// Random windowed-attention instances against the all-pairs masked oracle.
pub fn check_natten_oracle(instances: usize, tol: f64) -> Result<(bool, String)> {
    let mut rng = seeded(43);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let heads = rng.gen_range(1..=2usize);
        let c = heads * rng.gen_range(1..=3usize);
        let window = if rng.gen_bool(0.5) { 3 } else { 5 };
        // Smallest side on which this window has a valid neighborhood.
        let lo = window / 2 + 1;
        let h = rng.gen_range(lo..=7usize);
        let w = rng.gen_range(lo..=7usize);
        let layer = Natten::<f64>::new(&mut rng, c, heads, window)?;
        let x = Tensor::from_vec(&[1, c, h, w], uniform(&mut rng, c * h * w, -1.5, 1.5))?;
        let fast = layer.forward(&x)?;
        let slow = natten_oracle(&x, &layer)?;
        worst = worst.max(rel_err(fast.data(), slow.data()));
    }
    Ok((
        worst <= tol,
        format!("{instances} instances, worst rel err {worst:.3e} (tol {tol:.0e})"),
    ))
}

/// Gradient locality: perturbing the output at one pixel must move nothing
/// outside that pixel's clamped window. The input gradient is compared
/// against the window span; outside it, entries must be exactly zero.
pub fn check_natten_locality() -> Result<(bool, String)> {
    let mut rng = seeded(47);
    let (c, h, w, window) = (4usize, 6usize, 6usize, 3usize);
    let layer = Natten::<f64>::new(&mut rng, c, 2, window)?;
    let x = Tensor::from_vec(&[1, c, h, w], uniform(&mut rng, c * h * w, -1.0, 1.0))?;
    let r = (window - 1) / 2;
    let mut checked = 0usize;
    for (ti, tj) in [(0usize, 0usize), (2, 3), (5, 5)] {
        let tape: Tape<f64> = Tape::new();
        let xt = tape.var(&x);
        let y = layer.forward_with_clamp(&xt)?;
        let mut pull = vec![0.0f64; y.numel()];
        pull[(ti * w) + tj] = 1.0; // channel 0 at the probe pixel
        y.backward_seeded(&pull)?;
        let g = xt
            .grad()
            .ok_or_else(|| Error::graph("locality probe: no input gradient"))?;
        // The clamped window span around (ti, tj).
        let len = window.min(h);
        let y0 = ti.saturating_sub(r).min(h - len);
        let x0 = tj.saturating_sub(r).min(w - len);
        for ch in 0..c {
            for yy in 0..h {
                for xx in 0..w {
                    let inside =
                        (y0..y0 + len).contains(&yy) && (x0..x0 + len).contains(&xx);
                    let v = g.data()[ch * h * w + yy * w + xx];
                    if !inside && v != 0.0 {
                        return Ok((
                            false,
                            format!(
                                "gradient {v:.3e} leaked to ({yy},{xx}) from probe ({ti},{tj})"
                            ),
                        ));
                    }
                    checked += 1;
                }
            }
        }
    }
    Ok((true, format!("{checked} pixel-channel sites, zero leakage")))
}

/// Strided, grouped convolutions against the explicit im2col contraction.
pub fn check_conv_oracle(instances: usize, tol: f64) -> Result<(bool, String)> {
    let mut rng = seeded(53);
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let c_in = rng.gen_range(1..=4usize);
        let c_out = rng.gen_range(1..=4usize);
        let k = [1usize, 3, 5][rng.gen_range(0..3)];
        let stride = rng.gen_range(1..=2usize);
        let padding = rng.gen_range(0..=k / 2 + 1);
        let lo = k.saturating_sub(2 * padding).max(1);
        let h = rng.gen_range(lo..=7);
        let w = rng.gen_range(lo..=7);
        let conv = Conv2d::<f64>::new(&mut rng, c_in, c_out, k, stride, padding, 1, true)?;
        let x = Tensor::from_vec(&[2, c_in, h, w], uniform(&mut rng, 2 * c_in * h * w, -1.0, 1.0))?;
        let fast = conv.forward(&x)?;
        let slow = im2col_ref(&x, &conv.weight, conv.bias.as_ref(), stride, padding)?;
        worst = worst.max(rel_err(fast.data(), slow.data()));
    }
    Ok((
        worst <= tol,
        format!("{instances} instances, worst rel err {worst:.3e} (tol {tol:.0e})"),
    ))
}

/// Pixel shuffles and directional reorders must invert bitwise.
pub fn check_shuffles(instances: usize) -> Result<(bool, String)> {
    let mut rng = seeded(59);
    for i in 0..instances {
        let r = rng.gen_range(1..=3usize);
        let c = rng.gen_range(1..=4usize);
        let h = r * rng.gen_range(1..=4usize);
        let w = r * rng.gen_range(1..=4usize);
        let x = Tensor::<f64>::from_vec(&[1, c, h, w], uniform(&mut rng, c * h * w, -9.0, 9.0))?;
        let back = pixel_shuffle(&pixel_unshuffle(&x, r)?, r)?;
        if back.data() != x.data() || back.shape() != x.shape() {
            return Ok((false, format!("pixel shuffle drifted on instance {i}")));
        }
        let map = Tensor::<f64>::from_vec(&[1, c, h, w], uniform(&mut rng, c * h * w, -9.0, 9.0))?;
        for dir in 0..4 {
            let seq = directional_reorder(&map, dir)?;
            let restored = directional_restore(&seq, dir, h, w)?;
            if restored.data() != map.data() || restored.shape() != map.shape() {
                return Ok((false, format!("direction {dir} drifted on instance {i}")));
            }
        }
    }
    Ok((true, format!("{instances} instances, bitwise equal")))
}

/// Gradient battery over every differentiable primitive, each against
/// central differences on small random inputs.
pub fn check_op_gradients(tol: f64) -> Result<(bool, String)> {
    let mut worst_name = String::new();
    let mut worst = 0.0f64;
    let mut count = 0usize;
    let mut run = |name: &str, err: Result<f64>| -> Result<()> {
        let e = err.map_err(|e| Error::graph(format!("{name}: {e}")))?;
        count += 1;
        if e > worst {
            worst = e;
            worst_name = name.to_string();
        }
        Ok(())
    };
    let mut rng = seeded(61);
    let t = |rng: &mut _, shape: &[usize]| -> Result<Tensor<f64>> {
        let n: usize = shape.iter().product();
        Tensor::from_vec(shape, uniform(rng, n, -1.5, 1.5))
    };

    let a = t(&mut rng, &[2, 3, 4])?;
    let b = t(&mut rng, &[2, 3, 4])?;
    run(
        "add-mul-gelu",
        grad_check(|xs| xs[0].add(&xs[1])?.gelu()?.mul(&xs[0])?.mean(), &[a, b]),
    )?;

    let m1 = t(&mut rng, &[3, 4])?;
    let m2 = t(&mut rng, &[4, 2])?;
    run(
        "matmul",
        grad_check(|xs| xs[0].matmul(&xs[1])?.mean(), &[m1, m2]),
    )?;

    let x = t(&mut rng, &[1, 3, 4, 4])?;
    run(
        "softmax-relu",
        grad_check(|xs| xs[0].softmax(1)?.relu()?.mean(), &[x]),
    )?;

    let x = t(&mut rng, &[2, 4, 3, 3])?;
    let gamma = t(&mut rng, &[4])?;
    let beta = t(&mut rng, &[4])?;
    run(
        "layer-norm",
        grad_check(
            |xs| xs[0].layer_norm(&xs[1], &xs[2], 1e-5)?.mean(),
            &[x, gamma, beta],
        ),
    )?;

    let x = t(&mut rng, &[1, 4, 6, 5])?;
    run(
        "resize-pool-pad-crop",
        grad_check(
            |xs| {
                let up = bilinear_resize(&xs[0], 9, 11)?;
                let pad = up.pad_hw(12, 12)?.crop_hw(10, 10)?;
                global_avg_pool(&pad)?.mean()
            },
            &[x],
        ),
    )?;

    let conv = Conv2d::<f64>::new(&mut rng, 3, 4, 3, 2, 1, 1, true)?;
    let x = t(&mut rng, &[2, 3, 5, 5])?;
    run(
        "conv2d",
        grad_check(|xs| conv.forward(&xs[0])?.mean(), &[x]),
    )?;

    let bn = BatchNorm2d::<f64>::new(4);
    let x = t(&mut rng, &[2, 4, 3, 3])?;
    run(
        "batch-norm-training",
        grad_check(|xs| bn.forward(&xs[0], true)?.mul(&xs[0])?.mean(), &[x]),
    )?;

    let ffn = Ffn::<f64>::new(&mut rng, 4, 9, 4)?;
    let x = t(&mut rng, &[1, 4, 3, 3])?;
    run("ffn", grad_check(|xs| ffn.forward(&xs[0])?.mean(), &[x]))?;

    let norm = LayerNorm::<f64>::new(5);
    let x = t(&mut rng, &[1, 5, 2, 3])?;
    run(
        "layer-norm-module",
        grad_check(|xs| norm.forward(&xs[0])?.mean(), &[x]),
    )?;

    let att = Natten::<f64>::new(&mut rng, 4, 2, 3)?;
    let x = t(&mut rng, &[1, 4, 5, 5])?;
    run(
        "windowed-attention",
        grad_check(|xs| att.forward_with_clamp(&xs[0])?.mean(), &[x]),
    )?;

    let att = GlobalAttention::<f64>::new(&mut rng, 4, 2)?;
    let x = t(&mut rng, &[1, 4, 3, 3])?;
    run(
        "global-attention",
        grad_check(|xs| att.forward(&xs[0])?.mean(), &[x]),
    )?;

    let p = SsmParams::<f64>::new(&mut rng, 3, 2)?;
    let u = t(&mut rng, &[2, 3, 5])?;
    run(
        "selective-scan",
        grad_check(|xs| selective_scan_1d(&xs[0], &p)?.mean(), &[u]),
    )?;

    let scan = Ss2dBlock::<f64>::new(&mut rng, 4, 1, 2, true)?;
    let x = t(&mut rng, &[1, 4, 3, 4])?;
    run(
        "four-direction-scan",
        grad_check(|xs| scan.forward(&xs[0])?.mean(), &[x]),
    )?;

    let x = t(&mut rng, &[1, 8, 4, 4])?;
    run(
        "pixel-shuffle",
        grad_check(
            |xs| pixel_shuffle(&pixel_unshuffle(&xs[0], 2)?, 2)?.mean(),
            &[x],
        ),
    )?;

    Ok((
        worst <= tol,
        format!("{count} primitives, worst rel err {worst:.3e} ({worst_name}, tol {tol:.0e})"),
    ))
}

/// Finite-difference check through one full encoder block (window
/// attention, scan, fuse, FFN in series).
pub fn check_block_gradient(tol: f64) -> Result<(bool, String)> {
    let mut rng = seeded(67);
    let cfg = ModelConfig::micro(2);
    let block = MixerBlock::<f64>::new(&mut rng, &cfg, 0)?;
    let c = cfg.stage_channels[0];
    let x = Tensor::from_vec(&[1, c, 4, 4], uniform(&mut rng, c * 16, -1.0, 1.0))?;
    let worst = grad_check(|xs| block.forward(&xs[0])?.mean(), &[x])?;
    Ok((
        worst <= tol,
        format!("worst rel err {worst:.3e} (tol {tol:.0e})"),
    ))
}

/// The four-level feature pyramid must sit at strides 4, 8, 16, 32 with the
/// configured widths, and logits must come back at input resolution.
pub fn check_pyramid_shapes() -> Result<(bool, String)> {
    let cfg = ModelConfig::tiny(5);
    let model = SegModel::<f32>::new(&mut seeded(0), &cfg)?;
    let (h, w) = (64usize, 96usize);
    let img = Tensor::from_vec(&[1, 3, h, w], uniform(&mut seeded(1), 3 * h * w, 0.0, 1.0))?;
    let pyramid = model.encoder.forward(&img, false)?;
    let got = [
        pyramid.f1.shape().to_vec(),
        pyramid.f2.shape().to_vec(),
        pyramid.f3.shape().to_vec(),
        pyramid.f4.shape().to_vec(),
    ];
    for (i, f) in got.iter().enumerate() {
        let s = 4usize << i;
        let want = vec![1, cfg.stage_channels[i], h / s, w / s];
        if f != &want {
            return Ok((false, format!("level {} shaped {:?}, want {:?}", i + 1, f, want)));
        }
    }
    let logits = model.forward(&img, false)?;
    if logits.shape() != [1, 5, h, w] {
        return Ok((false, format!("logits shaped {:?}", logits.shape())));
    }
    Ok((
        true,
        format!("strides 4/8/16/32 at widths {:?}, logits at {h}x{w}", cfg.stage_channels),
    ))
}

/// Softmax over the class axis of real logits must form exact distributions.
pub fn check_logit_softmax() -> Result<(bool, String)> {
    let cfg = ModelConfig::micro(4);
    let model = SegModel::<f64>::new(&mut seeded(2), &cfg)?;
    let img = Tensor::from_vec(&[1, 3, 32, 32], uniform(&mut seeded(3), 3 * 1024, 0.0, 1.0))?;
    let probs = model.forward(&img, false)?.softmax(1)?;
    let d = probs.data();
    let plane = 32 * 32;
    let mut worst = 0.0f64;
    for s in 0..plane {
        let mut total = 0.0;
        for k in 0..4 {
            let v = d[k * plane + s];
            if v < 0.0 {
                return Ok((false, format!("negative probability {v} at pixel {s}")));
            }
            total += v;
        }
        worst = worst.max((total - 1.0).abs());
    }
    Ok((
        worst <= 1e-6,
        format!("{plane} pixels, worst |sum - 1| = {worst:.3e}"),
    ))
}

/// Padding a 32-aligned input must be a no-op: the padded path and the
/// direct path agree bitwise, and unaligned inputs come back cropped.
pub fn check_padded_forward() -> Result<(bool, String)> {
    let cfg = ModelConfig::micro(3);
    let model = SegModel::<f64>::new(&mut seeded(4), &cfg)?;
    let img = Tensor::from_vec(&[1, 3, 32, 64], uniform(&mut seeded(5), 3 * 2048, 0.0, 1.0))?;
    let direct = model.forward(&img, false)?;
    let padded = model.forward_padded(&img, false)?;
    if rel_err(direct.data(), padded.data()) != 0.0 {
        return Ok((false, "aligned padded path diverged".to_string()));
    }
    let odd = Tensor::from_vec(&[1, 3, 40, 72], uniform(&mut seeded(6), 3 * 2880, 0.0, 1.0))?;
    let logits = model.forward_padded(&odd, false)?;
    if logits.shape() != [1, 3, 40, 72] {
        return Ok((false, format!("unaligned logits shaped {:?}", logits.shape())));
    }
    Ok((true, "aligned path bitwise equal; 40x72 input crops back".to_string()))
}

/// Tensor file format: encode/decode across shapes and both dtypes.
pub fn check_smt1_round_trip() -> Result<(bool, String)> {
    let mut rng = seeded(71);
    let mut count = 0usize;
    for shape in [vec![1usize], vec![3, 4], vec![2, 3, 4, 5], vec![7, 1, 2]] {
        let n: usize = shape.iter().product();
        let t64 = Tensor::<f64>::from_vec(&shape, uniform(&mut rng, n, -5.0, 5.0))?;
        let back64 = smt1::decode::<f64>(&smt1::encode(&t64)?)?;
        if back64.data() != t64.data() || back64.shape() != t64.shape() {
            return Ok((false, format!("f64 drift at shape {shape:?}")));
        }
        let t32 = Tensor::<f32>::from_vec(&shape, uniform(&mut rng, n, -5.0, 5.0))?;
        let back32 = smt1::decode::<f32>(&smt1::encode(&t32)?)?;
        if back32.data() != t32.data() {
            return Ok((false, format!("f32 drift at shape {shape:?}")));
        }
        if smt1::decode::<f64>(&smt1::encode(&t32)?).is_ok() {
            return Ok((false, "dtype confusion accepted".to_string()));
        }
        count += 1;
    }
    Ok((true, format!("{count} shapes, both dtypes, bitwise equal")))
}

/// Save, reload, and compare a whole model directory.
pub fn check_checkpoint_round_trip() -> Result<(bool, String)> {
    let dir = tempfile::tempdir()?;
    let cfg = ModelConfig::micro(2);
    let mut model = SegModel::<f32>::new(&mut seeded(8), &cfg)?;
    // Run one training-mode forward first so batch-norm buffers are nontrivial.
    let img = Tensor::from_vec(&[2, 3, 32, 32], uniform(&mut seeded(9), 2 * 3 * 1024, 0.0, 1.0))?;
    model.forward(&img, true)?;
    save_checkpoint(dir.path(), &mut model)?;
    let mut loaded: SegModel<f32> = load_checkpoint(dir.path())?;
    let a = model.forward(&img, false)?;
    let b = loaded.forward(&img, false)?;
    if rel_err(a.data(), b.data()) != 0.0 {
        return Ok((false, "reloaded model diverged".to_string()));
    }
    let before = crate::train::params_hash(&mut model);
    let after = crate::train::params_hash(&mut loaded);
    if before != after {
        return Ok((false, "parameter hash changed across reload".to_string()));
    }
    Ok((true, format!("state hash {} stable across reload", &before[..12])))
}

/// PPM images and PGM masks, through disk and back.
pub fn check_image_round_trip() -> Result<(bool, String)> {
    let dir = tempfile::tempdir()?;
    let data = gen_dataset::<f64>(12, 3, 16, 24, 3)?;
    crate::data::save_dataset(dir.path(), &data)?;
    let back = crate::data::load_dataset::<f64>(dir.path())?;
    if back.len() != data.len() {
        return Ok((false, format!("{} of {} samples survived", back.len(), data.len())));
    }
    for (i, (a, b)) in data.iter().zip(back.iter()).enumerate() {
        if a.mask != b.mask {
            return Ok((false, format!("mask {i} drifted")));
        }
        // Images pass through 8-bit quantization: exact to within half a step.
        let ad = a.image.data();
        let bd = b.image.data();
        for (x, y) in ad.iter().zip(bd.iter()) {
            if (x - y).abs() > 0.5 / 255.0 + 1e-12 {
                return Ok((false, format!("image {i} drifted by {}", (x - y).abs())));
            }
        }
    }
    Ok((true, format!("{} samples, masks bitwise, images within half a quantization step", data.len())))
}

/// Benchmark CSV round trip.
pub fn check_csv_round_trip() -> Result<(bool, String)> {
    let rows = vec![
        crate::bench::BenchRow { tokens: 1024, side: 32, seconds: 1.5e-3 },
        crate::bench::BenchRow { tokens: 4096, side: 64, seconds: 6.1e-3 },
    ];
    let parsed = crate::bench::parse_csv(&crate::bench::to_csv(&rows))?;
    if parsed != rows {
        return Ok((false, "rows drifted through csv".to_string()));
    }
    Ok((true, format!("{} rows bitwise equal", rows.len())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for suite in SUITES {
            let outcomes = run_suite(suite).unwrap();
            assert!(!outcomes.is_empty());
            for o in &outcomes {
                assert!(o.passed, "{suite}/{}: {}", o.name, o.detail);
            }
        }
        assert!(run_suite("nonsense").is_err());
    }
}
