//! Supervised training on dense label maps.
//!
//! The pieces here are deliberately small and testable in isolation: a
//! cross-entropy loss with a hand-derived backward pass, a decoupled
//! weight-decay Adam optimizer that works through the [`Params`] visitor,
//! a warmup-plus-cosine learning-rate schedule, and a [`train`] driver that
//! owns the tape lifecycle (bind leaves once, re-record the forward graph
//! every step, truncate it afterwards).

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data::SyntheticSample;
use crate::error::{Error, Result};
use crate::metrics::MetricAccumulator;
use crate::model::SegModel;
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::{Tape, Tensor};

/// Mean pixel-wise cross-entropy between raw logits `[B,K,H,W]` and hard
/// labels (`labels[b*H*W + y*W + x]` is the class index of one pixel).
///
/// The forward pass uses the shifted log-sum-exp so arbitrarily large logits
/// stay finite; the backward pass is the closed form `(softmax - onehot) / M`
/// where `M` is the number of scored pixels.
pub fn cross_entropy_loss<T: Real>(logits: &Tensor<T>, labels: &[u8]) -> Result<Tensor<T>> {
    let (b, k, h, w) = logits.dims4("cross_entropy_loss logits")?;
    let plane = h * w;
    if labels.len() != b * plane {
        return Err(Error::shape(format!(
            "cross_entropy_loss: {} labels for {} pixels",
            labels.len(),
            b * plane
        )));
    }
    for &y in labels {
        if y as usize >= k {
            return Err(Error::shape(format!(
                "cross_entropy_loss: label {y} with {k} classes"
            )));
        }
    }

    let ld = logits.data();
    let m = (b * plane) as f64;
    let mut total = 0.0f64;
    // Softmax probabilities, saved for the backward closure.
    let mut probs = vec![0.0f64; ld.len()];
    for bi in 0..b {
        for s in 0..plane {
            let base = bi * k * plane + s;
            let mut peak = f64::NEG_INFINITY;
            for c in 0..k {
                peak = peak.max(ld[base + c * plane].as_f64());
            }
            let mut z = 0.0f64;
            for c in 0..k {
                let e = (ld[base + c * plane].as_f64() - peak).exp();
                probs[base + c * plane] = e;
                z += e;
            }
            for c in 0..k {
                probs[base + c * plane] /= z;
            }
            let y = labels[bi * plane + s] as usize;
            total += peak + z.ln() - ld[base + y * plane].as_f64();
        }
    }
    let value = total / m;
    if !value.is_finite() {
        return Err(Error::numerics(format!(
            "cross_entropy_loss produced {value}"
        )));
    }

    let out = Tensor::scalar(T::of(value));
    let owned_labels: Vec<u8> = labels.to_vec();
    Tensor::record(out, &[logits], move |dy| {
        let scale = dy[0].as_f64() / m;
        let mut dl = vec![T::zero(); probs.len()];
        for bi in 0..b {
            for s in 0..plane {
                let base = bi * k * plane + s;
                let y = owned_labels[bi * plane + s] as usize;
                for c in 0..k {
                    let onehot = if c == y { 1.0 } else { 0.0 };
                    dl[base + c * plane] = T::of((probs[base + c * plane] - onehot) * scale);
                }
            }
        }
        vec![Some(dl)]
    })
}

/// Per-pixel argmax over the class axis of `[B,K,H,W]` logits, flattened in
/// the same `b*H*W` order the loss and metrics use. Ties pick the lower
/// class index.
pub fn argmax_classes<T: Real>(logits: &Tensor<T>) -> Result<Vec<u8>> {
    let (b, k, h, w) = logits.dims4("argmax_classes logits")?;
    if k > 256 {
        return Err(Error::shape(format!("argmax_classes: {k} classes > 256")));
    }
    let ld = logits.data();
    let plane = h * w;
    let mut pred = vec![0u8; b * plane];
    for bi in 0..b {
        for s in 0..plane {
            let base = bi * k * plane + s;
            let mut best = 0usize;
            let mut best_v = ld[base].as_f64();
            for c in 1..k {
                let v = ld[base + c * plane].as_f64();
                if v > best_v {
                    best_v = v;
                    best = c;
                }
            }
            pred[bi * plane + s] = best as u8;
        }
    }
    Ok(pred)
}

/// Adam with decoupled weight decay. Moments are kept in `f64` regardless of
/// the parameter dtype, keyed by visit order (which [`Params`] guarantees is
/// stable). Decay skips rank-0/1 tensors: norm scales, biases, per-channel
/// state-space terms.
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: usize,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(weight_decay: f64) -> AdamW {
        AdamW {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// Advances the shared step counter; call once per optimization step,
    /// before the per-parameter [`AdamW::update`] calls.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    /// Applies one update to parameter `idx`. A parameter that took no part
    /// in the forward pass has no gradient and is left untouched except for
    /// weight decay.
    pub fn update<T: Real>(&mut self, idx: usize, param: &mut Tensor<T>, lr: f64) -> Result<()> {
        while self.first.len() <= idx {
            self.first.push(Vec::new());
            self.second.push(Vec::new());
        }
        let n = param.numel();
        if self.first[idx].is_empty() {
            self.first[idx] = vec![0.0; n];
            self.second[idx] = vec![0.0; n];
        }
        if self.first[idx].len() != n {
            return Err(Error::shape(format!(
                "optimizer state {idx} sized {} for parameter of {n}",
                self.first[idx].len()
            )));
        }
        let grad = match param.grad() {
            Some(g) => g.data().iter().map(|v| v.as_f64()).collect::<Vec<f64>>(),
            None => vec![0.0; n],
        };
        let bias1 = 1.0 - self.beta1.powi(self.step as i32);
        let bias2 = 1.0 - self.beta2.powi(self.step as i32);
        let decay = if param.shape().len() >= 2 {
            self.weight_decay
        } else {
            0.0
        };
        let mut next = Vec::with_capacity(n);
        for (i, p) in param.data().iter().enumerate() {
            let g = grad[i];
            if !g.is_finite() {
                return Err(Error::numerics(format!(
                    "non-finite gradient in parameter {idx}"
                )));
            }
            let m = self.beta1 * self.first[idx][i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second[idx][i] + (1.0 - self.beta2) * g * g;
            self.first[idx][i] = m;
            self.second[idx][i] = v;
            let step_dir = (m / bias1) / ((v / bias2).sqrt() + self.eps);
            let updated = p.as_f64() - lr * (step_dir + decay * p.as_f64());
            next.push(T::of(updated));
        }
        param.set_data(next)
    }
}

/// Learning rate at `step` (0-based) out of `total`: linear warmup over the
/// first tenth, then a cosine glide from `base` to zero.
pub fn lr_at(step: usize, total: usize, base: f64) -> f64 {
    let warmup = (total / 10).max(1);
    if step < warmup {
        return base * (step + 1) as f64 / warmup as f64;
    }
    let span = (total - warmup).max(1) as f64;
    let t = (step - warmup) as f64 / span;
    base * 0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Knobs for [`train`].
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch: usize,
    /// Fraction of samples held out from the end of the dataset for
    /// evaluation. Rounded to the nearest whole sample.
    pub val_fraction: f64,
}

impl Default for TrainOptions {
    fn default() -> TrainOptions {
        TrainOptions {
            steps: 300,
            lr: 3e-3,
            seed: 0,
            batch: 4,
            val_fraction: 0.2,
        }
    }
}

/// What a training run did, in JSON-serializable form.
#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub steps: usize,
    pub seed: u64,
    /// Per-step mean batch loss, in step order.
    pub losses: Vec<f64>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub val_samples: usize,
    pub pixel_accuracy: f64,
    pub mean_iou: f64,
    /// SHA-256 of the model configuration JSON.
    pub config_hash: String,
    /// SHA-256 over the trained parameter and buffer bytes, in visit order.
    pub params_hash: String,
}

/// Hex SHA-256 of the canonical (serde) JSON of the model configuration.
pub fn config_hash<T: Real>(model: &SegModel<T>) -> Result<String> {
    let text = serde_json::to_string(&model.config)
        .map_err(|e| Error::format(format!("config serialization: {e}")))?;
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    Ok(hex_digest(hasher))
}

/// Hex SHA-256 over every slot's little-endian bytes, taken in visit order.
/// Two models agree on this iff they agree on all weights and buffers.
pub fn params_hash<T: Real>(model: &mut SegModel<T>) -> String {
    let mut hasher = Sha256::new();
    model.visit("state", &mut |name, slot| {
        hasher.update(name.as_bytes());
        let feed = |hasher: &mut Sha256, t: &Tensor<T>| {
            for v in t.data() {
                hasher.update(v.as_f64().to_le_bytes());
            }
        };
        match slot {
            Slot::Trainable(t) => feed(&mut hasher, t),
            Slot::Buffer(cell) => feed(&mut hasher, &cell.borrow()),
        }
    });
    hex_digest(hasher)
}

fn hex_digest(hasher: Sha256) -> String {
    let bytes = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Stacks dataset samples `index[0..]` into one `[B,3,H,W]` batch plus its
/// flattened labels.
fn assemble_batch<T: Real>(
    data: &[SyntheticSample<T>],
    picks: &[usize],
) -> Result<(Tensor<T>, Vec<u8>)> {
    let h = data[picks[0]].h;
    let w = data[picks[0]].w;
    let mut pixels = Vec::with_capacity(picks.len() * 3 * h * w);
    let mut labels = Vec::with_capacity(picks.len() * h * w);
    for &i in picks {
        let s = &data[i];
        if s.h != h || s.w != w {
            return Err(Error::shape(format!(
                "mixed sample sizes in one batch: {h}x{w} vs {}x{}",
                s.h, s.w
            )));
        }
        pixels.extend_from_slice(s.image.data());
        labels.extend_from_slice(&s.mask);
    }
    Ok((
        Tensor::from_vec(&[picks.len(), 3, h, w], pixels)?,
        labels,
    ))
}

/// Runs eval-mode inference over `samples` and scores pixel accuracy and
/// mean IoU against their masks.
pub fn evaluate<T: Real>(
    model: &SegModel<T>,
    samples: &[SyntheticSample<T>],
) -> Result<(f64, f64)> {
    let classes = model.config.num_classes;
    let mut acc = MetricAccumulator::new(classes);
    for s in samples {
        let img = Tensor::from_vec(&[1, 3, s.h, s.w], s.image.data().to_vec())?;
        let logits = model.forward_padded(&img, false)?;
        let pred = argmax_classes(&logits)?;
        acc.update(&pred, &s.mask)?;
    }
    Ok((acc.pixel_accuracy(), acc.mean_iou()))
}

/// Trains `model` in place and reports the loss curve plus held-out metrics.
///
/// Batches cycle through the training split in a fixed order (step `s` takes
/// samples `s*B..s*B+B` modulo the split size), so a given `(dataset, seed,
/// options)` triple always produces the same parameter trajectory. All
/// trainable slots are bound to one tape up front; each step records the
/// forward graph on top of those leaves and [`Tape::truncate`] discards it
/// again after the update.
pub fn train<T: Real>(
    model: &mut SegModel<T>,
    data: &[SyntheticSample<T>],
    opts: &TrainOptions,
) -> Result<TrainReport> {
    if opts.steps == 0 {
        return Err(Error::config("train: steps must be at least 1"));
    }
    if !(opts.lr.is_finite() && opts.lr >= 0.0) {
        return Err(Error::config(format!("train: bad learning rate {}", opts.lr)));
    }
    if !(0.0..1.0).contains(&opts.val_fraction) {
        return Err(Error::config(format!(
            "train: val_fraction {} outside [0,1)",
            opts.val_fraction
        )));
    }
    if data.is_empty() {
        return Err(Error::config("train: empty dataset"));
    }
    let val_count = ((data.len() as f64) * opts.val_fraction).round() as usize;
    let train_count = data.len() - val_count;
    if train_count == 0 {
        return Err(Error::config(format!(
            "train: no training samples left after holding out {val_count}"
        )));
    }
    let train_split = &data[..train_count];
    // An empty holdout falls back to scoring the training split, so the
    // report always carries real metrics.
    let val_split = if val_count > 0 {
        &data[train_count..]
    } else {
        train_split
    };
    let batch = opts.batch.max(1).min(train_count);

    let tape: Tape<T> = Tape::new();
    let mut leaf_count = 0usize;
    model.visit("p", &mut |_, slot| {
        if let Slot::Trainable(t) = slot {
            *t = tape.var(t);
            leaf_count += 1;
        }
    });

    let mut opt = AdamW::new(0.01);
    let mut losses = Vec::with_capacity(opts.steps);
    for step in 0..opts.steps {
        let lr = lr_at(step, opts.steps, opts.lr);
        let picks: Vec<usize> = (0..batch)
            .map(|i| (step * batch + i) % train_count)
            .collect();
        let (img, labels) = assemble_batch(train_split, &picks)?;

        let step_err = |e: Error| match e {
            Error::Numerics(msg) => Error::numerics(format!("step {step}: {msg}")),
            other => other,
        };
        let logits = model.forward_padded(&img, true).map_err(step_err)?;
        let loss = cross_entropy_loss(&logits, &labels).map_err(step_err)?;
        losses.push(loss.item()?.as_f64());
        loss.backward().map_err(step_err)?;

        opt.begin_step();
        let mut idx = 0usize;
        let mut failure: Option<Error> = None;
        model.visit("p", &mut |_, slot| {
            if let Slot::Trainable(t) = slot {
                if failure.is_none() {
                    if let Err(e) = opt.update(idx, t, lr) {
                        failure = Some(e);
                    }
                }
                idx += 1;
            }
        });
        if let Some(e) = failure {
            return Err(step_err(e));
        }
        tape.zero_grads();
        tape.truncate(leaf_count);
    }

    // Sever the tape so later forwards run untracked.
    model.visit("p", &mut |_, slot| {
        if let Slot::Trainable(t) = slot {
            *t = t.detached();
        }
    });

    let (pixel_accuracy, mean_iou) = evaluate(model, val_split)?;
    Ok(TrainReport {
        steps: opts.steps,
        seed: opts.seed,
        initial_loss: losses[0],
        final_loss: *losses.last().unwrap(),
        losses,
        val_samples: val_split.len(),
        pixel_accuracy,
        mean_iou,
        config_hash: config_hash(model)?,
        params_hash: params_hash(model),
    })
}
