//! Checkpoints: a directory holding `config.json`, a `manifest.json` mapping
//! parameter paths to tensor files, and one binary tensor file per entry.
//!
//! Both trainable parameters and normalization buffers (running statistics)
//! are stored, so a reloaded model reproduces eval-mode outputs bit for bit.
//! Loading rebuilds the model from the saved configuration and then insists
//! on an exact one-to-one match between manifest entries and model slots.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::seeded;
use crate::model::config::ModelConfig;
use crate::model::net::SegModel;
use crate::nn::{Params, Slot};
use crate::real::Real;
use crate::tensor::smt1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    tensors: BTreeMap<String, String>,
}

const MANIFEST_FORMAT: &str = "smt1-dir-v1";

/// Writes `model` into `dir` (created if absent, files overwritten).
pub fn save_checkpoint<T: Real>(dir: &Path, model: &mut SegModel<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let config_text = serde_json::to_string_pretty(&model.config)
        .map_err(|e| Error::format(format!("encoding config: {e}")))?;
    fs::write(dir.join("config.json"), config_text + "\n")?;

    let mut tensors = BTreeMap::new();
    let mut failure: Option<Error> = None;
    model.visit("", &mut |path, slot| {
        if failure.is_some() {
            return;
        }
        let file = format!("{path}.smt1");
        let result = match slot {
            Slot::Trainable(t) => smt1::write_tensor(&dir.join(&file), t),
            Slot::Buffer(cell) => smt1::write_tensor(&dir.join(&file), &cell.borrow()),
        };
        match result {
            Ok(()) => {
                tensors.insert(path, file);
            }
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }

    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        tensors,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::format(format!("encoding manifest: {e}")))?;
    fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(())
}

/// Rebuilds a model from `dir`, restoring every parameter and buffer.
pub fn load_checkpoint<T: Real>(dir: &Path) -> Result<SegModel<T>> {
    let config_text = fs::read_to_string(dir.join("config.json"))?;
    let cfg = ModelConfig::from_json(&config_text)?;
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| Error::format(format!("bad manifest: {e}")))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::format(format!(
            "manifest format {:?}, expected {MANIFEST_FORMAT:?}",
            manifest.format
        )));
    }

    let mut model = SegModel::<T>::new(&mut seeded(0), &cfg)?;
    let mut seen = Vec::new();
    let mut failure: Option<Error> = None;
    model.visit("", &mut |path, slot| {
        if failure.is_some() {
            return;
        }
        let loaded = match manifest.tensors.get(&path) {
            Some(file) => smt1::read_tensor::<T>(&dir.join(file)),
            None => Err(Error::format(format!("checkpoint is missing {path:?}"))),
        };
        let loaded = match loaded {
            Ok(t) => t,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        let want: Vec<usize> = match &slot {
            Slot::Trainable(t) => t.shape().to_vec(),
            Slot::Buffer(cell) => cell.borrow().shape().to_vec(),
        };
        if loaded.shape() != want.as_slice() {
            failure = Some(Error::format(format!(
                "tensor {path:?} has shape {:?}, model expects {want:?}",
                loaded.shape()
            )));
            return;
        }
        match slot {
            Slot::Trainable(t) => *t = loaded,
            Slot::Buffer(cell) => *cell.borrow_mut() = loaded,
        }
        seen.push(path);
    });
    if let Some(e) = failure {
        return Err(e);
    }
    if seen.len() != manifest.tensors.len() {
        let extra: Vec<&String> = manifest
            .tensors
            .keys()
            .filter(|k| !seen.contains(k))
            .collect();
        return Err(Error::format(format!(
            "checkpoint holds tensors the model has no slot for: {extra:?}"
        )));
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::uniform;
    use crate::tensor::{rel_err, Tensor};

    fn rand_image(seed: u64) -> Tensor<f64> {
        Tensor::from_vec(&[1, 3, 32, 32], uniform(&mut seeded(seed), 3 * 32 * 32, 0.0, 1.0))
            .unwrap()
    }

    #[test]
    fn round_trip_reproduces_eval_outputs_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::micro(3);
        let mut model = SegModel::<f64>::new(&mut seeded(7), &cfg).unwrap();
        // Run one training-mode pass so the running stats are nontrivial.
        let img = rand_image(8);
        model.forward(&img, true).unwrap();
        let want = model.forward(&img, false).unwrap();

        save_checkpoint(dir.path(), &mut model).unwrap();
        let restored = load_checkpoint::<f64>(dir.path()).unwrap();
        let got = restored.forward(&img, false).unwrap();
        assert_eq!(got.data(), want.data());
        assert_eq!(restored.config, cfg);
    }

    #[test]
    fn missing_and_mismatched_tensors_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::micro(2);
        let mut model = SegModel::<f64>::new(&mut seeded(9), &cfg).unwrap();
        save_checkpoint(dir.path(), &mut model).unwrap();

        // Deleting one tensor file breaks the load.
        let victim = dir.path().join("encoder.stem.conv1.weight.smt1");
        fs::remove_file(&victim).unwrap();
        assert!(load_checkpoint::<f64>(dir.path()).is_err());

        // Restoring it with the wrong shape also breaks the load.
        smt1::write_tensor(&victim, &Tensor::<f64>::zeros(&[2, 2])).unwrap();
        assert!(load_checkpoint::<f64>(dir.path()).is_err());
    }

    #[test]
    fn wrong_dtype_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ModelConfig::micro(2);
        let mut model = SegModel::<f32>::new(&mut seeded(10), &cfg).unwrap();
        save_checkpoint(dir.path(), &mut model).unwrap();
        assert!(load_checkpoint::<f64>(dir.path()).is_err());
        let back = load_checkpoint::<f32>(dir.path()).unwrap();
        let img = Tensor::<f32>::from_vec(
            &[1, 3, 32, 32],
            uniform(&mut seeded(11), 3 * 32 * 32, 0.0, 1.0),
        )
        .unwrap();
        let a = model.forward(&img, false).unwrap();
        let b = back.forward(&img, false).unwrap();
        assert!(rel_err(a.data(), b.data()) == 0.0);
    }
}
