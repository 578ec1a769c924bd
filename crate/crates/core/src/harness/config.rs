//! Run configuration files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{generate_synthetic_task, load_dataset, DataFormat, DatasetSplit, SyntheticTask};
use crate::error::{LasError, Result};
use crate::nn::{LrSchedule, SearchSpaceSpec, TrainConfig};
use crate::search::SearchConfig;

/// Where the sample pool comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticTask),
    File {
        path: PathBuf,
        /// Inferred from the extension when absent.
        #[serde(default)]
        format: Option<DataFormat>,
    },
}

/// Everything needed to reproduce a run. The search section carries the
/// search space and the run seed; `train` drives stand-alone trainings
/// (oracle records and retraining).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub search: SearchConfig,
    pub train: TrainConfig,
    pub data: DataSource,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    /// Small synthetic setup sized for a laptop CPU.
    pub fn desk_default() -> Self {
        let spec = SearchSpaceSpec::plain(vec![8, 16, 32], [3, 32, 32], 8, 8);
        let mut search = SearchConfig::new(spec, 4, 5, 0.02, 0);
        search.batch_size = 32;
        let mut task = SyntheticTask::new(0, 8, 400, [3, 32, 32]);
        task.noise = 0.4;
        task.max_shift = 4;
        task.distractor = 0.3;
        RunConfig {
            search,
            train: TrainConfig {
                base_lr: 0.01,
                lr_schedule: LrSchedule::LinearDecay,
                batch_size: 32,
                epochs: 8,
                ..TrainConfig::default()
            },
            data: DataSource::Synthetic(task),
            out_dir: None,
        }
    }

    pub fn seed(&self) -> u64 {
        self.search.seed
    }

    pub fn spec(&self) -> &SearchSpaceSpec {
        &self.search.spec
    }

    pub fn validate(&self) -> Result<()> {
        self.search.validate()?;
        self.train.validate()?;
        if let DataSource::Synthetic(t) = &self.data {
            if t.shape != self.spec().input_shape {
                return Err(LasError::Config(format!(
                    "synthetic shape {:?} differs from input shape {:?}",
                    t.shape,
                    self.spec().input_shape
                )));
            }
            if t.num_classes != self.spec().num_classes {
                return Err(LasError::Config(format!(
                    "synthetic task has {} classes, spec expects {}",
                    t.num_classes,
                    self.spec().num_classes
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LasError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON encoding (field order is fixed by the type).
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Materialise the dataset split; the calibration subset is drawn from
    /// the run seed.
    pub fn load_data(&self) -> Result<DatasetSplit> {
        let calib = self.search.calib_spec();
        let split = match &self.data {
            DataSource::Synthetic(t) => generate_synthetic_task(t, calib)?,
            DataSource::File { path, format } => {
                let fmt = format.unwrap_or_else(|| DataFormat::from_path(path));
                load_dataset(path, fmt, Some(self.spec().num_classes), calib)?
            }
        };
        if split.train.shape() != self.spec().input_shape {
            return Err(LasError::shape(format!(
                "data shape {:?} does not match input shape {:?}",
                split.train.shape(),
                self.spec().input_shape
            )));
        }
        split.validate(self.spec().num_classes)?;
        Ok(split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_is_valid_and_round_trips() {
        let cfg = RunConfig::desk_default();
        cfg.validate().unwrap();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let mut v = serde_json::to_value(RunConfig::desk_default()).unwrap();
        v["sead"] = 1.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
        let mut v = serde_json::to_value(RunConfig::desk_default()).unwrap();
        v["train"]["epoch"] = 1.into();
        assert!(RunConfig::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn mismatched_synthetic_shape_is_rejected() {
        let mut cfg = RunConfig::desk_default();
        if let DataSource::Synthetic(t) = &mut cfg.data {
            t.shape = [1, 32, 32];
        }
        assert!(cfg.validate().is_err());
    }
}
