//! Wall-clock scaling measurements for the token-mixing primitives.
//!
//! The interesting quantity is not an absolute time but how time grows as
//! the token count grows: a linear-time mixer doubles when tokens double,
//! dense attention roughly quadruples. [`doubling_ratios`] extracts that
//! exponent-normalized growth factor from a series of timed runs, so pass
//! criteria stay meaningful across machines of very different speeds.

use std::time::Instant;

use crate::attention::{GlobalAttention, Natten};
use crate::error::{Error, Result};
use crate::init::{seeded, uniform};
use crate::model::{heads_for, MixerBlock, ModelConfig};
use crate::ssm::Ss2dBlock;
use crate::tensor::Tensor;

/// Which primitive to time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchTarget {
    /// The full encoder token mixer: windowed attention feeding the
    /// four-direction scan, with fuse and FFN.
    MixerBlock,
    /// Sliding-window neighborhood attention alone.
    Natten,
    /// The four-direction selective-scan block alone.
    Ss2d,
    /// Dense all-pairs attention (the quadratic reference point).
    GlobalAttention,
}

impl BenchTarget {
    /// Parses the CLI spelling: `block`, `natten`, `ss2d`, or `global`.
    pub fn from_name(name: &str) -> Result<BenchTarget> {
        match name {
            "block" => Ok(BenchTarget::MixerBlock),
            "natten" => Ok(BenchTarget::Natten),
            "ss2d" => Ok(BenchTarget::Ss2d),
            "global" => Ok(BenchTarget::GlobalAttention),
            other => Err(Error::config(format!(
                "unknown bench target {other:?} (expected block, natten, ss2d, or global)"
            ))),
        }
    }
}

/// One timed configuration: a `side x side` map, so `tokens = side^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub tokens: usize,
    pub side: usize,
    pub seconds: f64,
}

/// Times eval-mode forward passes of `target` at `channels` over square maps
/// of the given sides, reporting the median of `reps` runs after one warmup.
/// Everything runs untracked in `f32`, so no tape or gradient buffers are
/// involved.
pub fn bench_run(
    target: BenchTarget,
    channels: usize,
    sides: &[usize],
    reps: usize,
) -> Result<Vec<BenchRow>> {
    if channels == 0 || reps == 0 || sides.is_empty() {
        return Err(Error::config(
            "bench_run: channels, reps, and sides must be nonzero",
        ));
    }
    let mut rng = seeded(0);
    let heads = heads_for(channels);
    // Window matches the first encoder stage of the standard presets.
    let window = 11;
    let forward: Box<dyn Fn(&Tensor<f32>) -> Result<Tensor<f32>>> = match target {
        BenchTarget::MixerBlock => {
            let cfg = ModelConfig {
                stage_channels: [channels; 4],
                window_sizes: [window; 4],
                ..ModelConfig::micro(2)
            };
            let block = MixerBlock::new(&mut rng, &cfg, 0)?;
            Box::new(move |x| block.forward(x))
        }
        BenchTarget::Natten => {
            let att = Natten::new(&mut rng, channels, heads, window)?;
            Box::new(move |x| att.forward_with_clamp(x))
        }
        BenchTarget::Ss2d => {
            let scan = Ss2dBlock::new(&mut rng, channels, 1, 1, true)?;
            Box::new(move |x| scan.forward(x))
        }
        BenchTarget::GlobalAttention => {
            let att = GlobalAttention::new(&mut rng, channels, heads)?;
            Box::new(move |x| att.forward(x))
        }
    };

    let mut rows = Vec::with_capacity(sides.len());
    for &side in sides {
        if side == 0 {
            return Err(Error::config("bench_run: zero side length"));
        }
        let x = Tensor::<f32>::from_vec(
            &[1, channels, side, side],
            uniform(&mut rng, channels * side * side, -1.0, 1.0),
        )?;
        forward(&x)?; // warmup: first touch of caches and allocations
        let mut times = Vec::with_capacity(reps);
        for _ in 0..reps {
            let begin = Instant::now();
            let y = forward(&x)?;
            times.push(begin.elapsed().as_secs_f64());
            assert!(y.numel() > 0);
        }
        times.sort_by(|a, b| a.total_cmp(b));
        rows.push(BenchRow {
            tokens: side * side,
            side,
            seconds: times[times.len() / 2],
        });
    }
    Ok(rows)
}

/// Growth factor per token doubling between consecutive rows:
/// `(t2/t1) ^ (ln 2 / ln(L2/L1))`. A linear-time primitive sits near 2,
/// a quadratic one near 4.
pub fn doubling_ratios(rows: &[BenchRow]) -> Vec<f64> {
    rows.windows(2)
        .map(|pair| {
            let growth = pair[1].seconds / pair[0].seconds;
            let scale = pair[1].tokens as f64 / pair[0].tokens as f64;
            growth.powf(std::f64::consts::LN_2 / scale.ln())
        })
        .collect()
}

/// Serializes rows as `tokens,side,seconds` CSV with a header line.
pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("tokens,side,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{:.9e}\n", r.tokens, r.side, r.seconds));
    }
    out
}

/// Parses the CSV produced by [`to_csv`].
pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("tokens,side,seconds") => {}
        other => {
            return Err(Error::format(format!(
                "bench csv: bad header {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let [tokens, side, seconds] = fields[..] else {
            return Err(Error::format(format!("bench csv row {i}: {line:?}")));
        };
        let parse_int = |s: &str| {
            s.parse::<usize>()
                .map_err(|e| Error::format(format!("bench csv row {i}: {e}")))
        };
        rows.push(BenchRow {
            tokens: parse_int(tokens)?,
            side: parse_int(side)?,
            seconds: seconds
                .parse::<f64>()
                .map_err(|e| Error::format(format!("bench csv row {i}: {e}")))?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows_from(times: &[(usize, f64)]) -> Vec<BenchRow> {
        times
            .iter()
            .map(|&(side, seconds)| BenchRow {
                tokens: side * side,
                side,
                seconds,
            })
            .collect()
    }

    #[test]
    fn ratios_recover_known_exponents() {
        let linear = rows_from(&[(32, 1e-3), (64, 4e-3), (128, 16e-3)]);
        for r in doubling_ratios(&linear) {
            assert!((r - 2.0).abs() < 1e-12, "linear ratio {r}");
        }
        let quadratic = rows_from(&[(16, 1e-4), (32, 16e-4), (64, 256e-4)]);
        for r in doubling_ratios(&quadratic) {
            assert!((r - 4.0).abs() < 1e-12, "quadratic ratio {r}");
        }
    }

    #[test]
    fn csv_round_trips() {
        let rows = rows_from(&[(32, 1.25e-3), (64, 5.5e-3)]);
        let parsed = parse_csv(&to_csv(&rows)).unwrap();
        assert_eq!(parsed, rows);
        assert!(parse_csv("wrong,header\n1,2,3\n").is_err());
        assert!(parse_csv("tokens,side,seconds\n1,2\n").is_err());
    }

    #[test]
    fn all_targets_run_and_report_positive_times() {
        for name in ["block", "natten", "ss2d", "global"] {
            let target = BenchTarget::from_name(name).unwrap();
            let rows = bench_run(target, 8, &[8, 16], 1).unwrap();
            assert_eq!(rows.len(), 2);
            assert_eq!(rows[0].tokens, 64);
            assert_eq!(rows[1].tokens, 256);
            for r in &rows {
                assert!(r.seconds > 0.0);
            }
        }
        assert!(BenchTarget::from_name("mamba").is_err());
    }
}
