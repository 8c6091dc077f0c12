//! Optional TOML bundle naming an experiment's data files.
//!
//! ```toml
//! train = "ood_train.txt"     # labeled out-of-domain embeddings
//! adapt = "in_unlabeled.txt"  # unlabeled in-domain embeddings
//! enroll = "enroll.txt"
//! test = "test.txt"
//! trials = "trials.txt"
//! ```
//!
//! Relative paths are resolved against the directory holding the bundle.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathBundle {
    pub train: PathBuf,
    pub adapt: PathBuf,
    pub enroll: PathBuf,
    pub test: PathBuf,
    pub trials: PathBuf,
}

impl PathBundle {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::io(path, source))?;
        let bundle: PathBundle = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(bundle.resolved(base))
    }

    fn resolved(self, base: &Path) -> Self {
        let fix = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        Self {
            train: fix(self.train),
            adapt: fix(self.adapt),
            enroll: fix(self.enroll),
            test: fix(self.test),
            trials: fix(self.trials),
        }
    }

    pub fn paths(&self) -> [&Path; 5] {
        [&self.train, &self.adapt, &self.enroll, &self.test, &self.trials]
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("paths serialize as strings")
    }
}
