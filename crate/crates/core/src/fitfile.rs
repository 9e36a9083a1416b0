//! JSON file holding per-block EM fits.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::FitResult;
use crate::error::{Error, Result};
use crate::netgen::BlockPair;

pub const FIT_SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFitRecord {
    pub type_a: u32,
    pub type_b: u32,
    pub q_m: f64,
    pub q_s: f64,
    pub r: f64,
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iters: usize,
    pub smoothed_means: Vec<Vec<f64>>,
    pub density_estimates: Vec<f64>,
}

impl BlockFitRecord {
    pub fn from_fit(pair: BlockPair, fit: &FitResult) -> Self {
        Self {
            type_a: pair.a,
            type_b: pair.b,
            q_m: fit.noise.q_m,
            q_s: fit.noise.q_s,
            r: fit.noise.r,
            loglik_trace: fit.trace.iter().map(|r| r.loglik).collect(),
            converged: fit.converged,
            iters: fit.iterations,
            smoothed_means: fit.smoothed_means(),
            density_estimates: fit.density_estimates(),
        }
    }
}

/// A block whose fit failed, kept next to the successful ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockFitFailure {
    pub type_a: u32,
    pub type_b: u32,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitFile {
    pub schema_version: u64,
    pub blocks: Vec<BlockFitRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<BlockFitFailure>,
}

impl FitFile {
    pub fn from_results(results: &[(BlockPair, Result<FitResult>)]) -> Self {
        let mut blocks = Vec::new();
        let mut failures = Vec::new();
        for (pair, res) in results {
            match res {
                Ok(fit) => blocks.push(BlockFitRecord::from_fit(*pair, fit)),
                Err(e) => failures.push(BlockFitFailure { type_a: pair.a, type_b: pair.b, error: e.to_string() }),
            }
        }
        Self { schema_version: FIT_SCHEMA_VERSION, blocks, failures }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Parse { path: "<fit>".into(), message: e.to_string() })
    }

    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let file: FitFile =
            serde_json::from_str(text).map_err(|e| Error::Parse { path: origin.to_string(), message: e.to_string() })?;
        if file.schema_version != FIT_SCHEMA_VERSION {
            return Err(Error::Version { found: file.schema_version, expected: FIT_SCHEMA_VERSION });
        }
        Ok(file)
    }
}

pub fn write_fit(file: &FitFile, path: &Path) -> Result<()> {
    fs::write(path, file.to_json()?).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

pub fn read_fit(path: &Path) -> Result<FitFile> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    FitFile::from_json(&text, &path.display().to_string())
}
