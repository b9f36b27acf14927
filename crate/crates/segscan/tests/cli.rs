//! End-to-end runs of the compiled binary: the full gen/train/eval/erf/bench
//! pipeline through real files, plus the exit-code contract for bad inputs.

use std::path::Path;
use std::process::{Command, Output};

fn segscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segscan"))
        .args(args)
        .output()
        .expect("binary failed to launch")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn code_of(out: &Output) -> i32 {
    out.status.code().expect("process had no exit code")
}

fn write_micro_config(path: &Path) {
    let cfg = segscan::model::ModelConfig::micro(2);
    std::fs::write(path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

#[test]
fn pipeline_gen_train_eval_erf_bench() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let config = dir.path().join("micro.json");
    write_micro_config(&config);

    let out = segscan(&[
        "gen", "--seed", "3", "--count", "8", "--size", "48x48", "--classes", "2", "--out",
        data.to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    assert!(data.join("img_0007.ppm").exists());
    assert!(data.join("mask_0007.pgm").exists());

    let out = segscan(&[
        "train", "--config", config.to_str().unwrap(), "--data", data.to_str().unwrap(),
        "--steps", "10", "--lr", "0.003", "--seed", "1", "--out", run.to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    assert!(stdout_of(&out).contains("trained 10 steps"));
    assert!(run.join("manifest.json").exists());
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["steps"], 10);
    assert_eq!(report["losses"].as_array().unwrap().len(), 10);

    let out = segscan(&["eval", "--ckpt", run.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    assert!(stdout_of(&out).contains("pixel accuracy"));

    let erf = dir.path().join("erf.pgm");
    let out = segscan(&[
        "erf", "--config", config.to_str().unwrap(), "--ckpt", run.to_str().unwrap(),
        "--size", "64x64", "--samples", "1", "--out", erf.to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    let pgm = std::fs::read(&erf).unwrap();
    assert!(pgm.starts_with(b"P5\n64 64\n255\n"));
    assert_eq!(pgm.len(), "P5\n64 64\n255\n".len() + 64 * 64);

    let csv = dir.path().join("bench.csv");
    let out = segscan(&[
        "bench", "--block", "natten", "--channels", "8", "--sizes", "16,32", "--reps", "1",
        "--out", csv.to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    let rows = segscan::bench::parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!((rows[0].side, rows[1].side), (16, 32));
}

#[test]
fn io_suite_passes_through_the_binary() {
    let out = segscan(&["check", "--suite", "io"]);
    assert_eq!(code_of(&out), 0, "{out:?}");
    assert!(stdout_of(&out).contains("all checks passed"));
}

#[test]
fn bad_inputs_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();

    // Unknown suite.
    assert_eq!(code_of(&segscan(&["check", "--suite", "bogus"])), 2);

    // Unreadable model configuration.
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"stage_channels\": [8]}").unwrap();
    let out = segscan(&[
        "train", "--config", bad.to_str().unwrap(), "--data", "/nonexistent", "--steps", "1",
        "--out", dir.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 2, "{out:?}");

    // Config with an unknown field is rejected, not silently ignored.
    let extra = dir.path().join("extra.json");
    let mut value: serde_json::Value =
        serde_json::to_value(segscan::model::ModelConfig::micro(2)).unwrap();
    value["learning_rate"] = serde_json::json!(0.1);
    std::fs::write(&extra, serde_json::to_string(&value).unwrap()).unwrap();
    let out = segscan(&[
        "erf", "--config", extra.to_str().unwrap(), "--size", "64x64", "--out",
        dir.path().join("e.pgm").to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 2, "{out:?}");

    // Receptive-field size must be divisible by 32.
    let good = dir.path().join("micro.json");
    write_micro_config(&good);
    let out = segscan(&[
        "erf", "--config", good.to_str().unwrap(), "--size", "40x40", "--out",
        dir.path().join("e.pgm").to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 2, "{out:?}");

    // Unknown bench target.
    let out = segscan(&[
        "bench", "--block", "fft", "--out", dir.path().join("b.csv").to_str().unwrap(),
    ]);
    assert_eq!(code_of(&out), 2, "{out:?}");

    // Clap usage errors share the same code.
    assert_eq!(code_of(&segscan(&["definitely-not-a-command"])), 2);
}
