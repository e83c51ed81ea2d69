use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::ProblemSpec;
use crate::error::{Error, Result};

pub const SPEC_FILE: &str = "spec.json";
pub const INSTANCES_FILE: &str = "instances.jsonl";

/// One labelled instance: a feature row per target component and the true target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    /// `d` rows of `feature_width` features.
    pub z: Vec<Vec<f64>>,
    /// True target (values, weights or prices).
    pub c: Vec<f64>,
    /// Replaces the equality right-hand side of the shared problem for this instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_override: Option<Vec<f64>>,
}

impl Instance {
    pub fn features(&self) -> DMatrix<f64> {
        let w = self.z.first().map_or(0, Vec::len);
        DMatrix::from_fn(self.z.len(), w, |i, j| self.z[i][j])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub problem: ProblemSpec,
    pub feature_width: usize,
    /// Generator settings, recorded for provenance of the data.
    #[serde(default)]
    pub generator: serde_json::Value,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn new(spec: DatasetSpec, instances: Vec<Instance>) -> Result<Self> {
        let d = Self { spec, instances };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.spec.problem
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.spec.problem.target_len();
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.c.len() != d || inst.z.len() != d {
                return Err(Error::Shape(format!(
                    "instance {i}: {} targets and {} feature rows, expected {d}",
                    inst.c.len(),
                    inst.z.len()
                )));
            }
            if inst
                .z
                .iter()
                .any(|row| row.len() != self.spec.feature_width)
            {
                return Err(Error::Shape(format!(
                    "instance {i}: feature rows must have width {}",
                    self.spec.feature_width
                )));
            }
            if inst
                .c
                .iter()
                .chain(inst.z.iter().flatten())
                .any(|v| !v.is_finite())
            {
                return Err(Error::Shape(format!("instance {i} has non-finite data")));
            }
        }
        Ok(())
    }

    /// Instances `range` as a new dataset sharing its `spec` field.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            spec: self.spec.clone(),
            instances: self.instances[range].to_vec(),
        }
    }

    /// Consecutive train / validation / test splits.
    pub fn split(
        &self,
        train: usize,
        val: usize,
        test: usize,
    ) -> Result<(Dataset, Dataset, Dataset)> {
        if train + val + test > self.len() {
            return Err(Error::Config(format!(
                "split {train}/{val}/{test} needs {} instances, dataset has {}",
                train + val + test,
                self.len()
            )));
        }
        Ok((
            self.slice(0..train),
            self.slice(train..train + val),
            self.slice(train + val..train + val + test),
        ))
    }

    pub fn instances_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for inst in &self.instances {
            out.push_str(&serde_json::to_string(inst)?);
            out.push('\n');
        }
        Ok(out)
    }

    /// Write `spec.json` and `instances.jsonl` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(
            dir.join(SPEC_FILE),
            serde_json::to_string_pretty(&self.spec)?,
        )?;
        let mut f = fs::File::create(dir.join(INSTANCES_FILE))?;
        f.write_all(self.instances_jsonl()?.as_bytes())?;
        Ok(())
    }

    /// Load from a dataset directory, or from an instances file with `spec.json` beside it.
    pub fn load(path: &Path) -> Result<Dataset> {
        let (spec_path, inst_path): (PathBuf, PathBuf) = if path.is_dir() {
            (path.join(SPEC_FILE), path.join(INSTANCES_FILE))
        } else {
            let dir = path.parent().unwrap_or(Path::new("."));
            (dir.join(SPEC_FILE), path.to_path_buf())
        };
        if !spec_path.is_file() || !inst_path.is_file() {
            return Err(Error::Io(std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("dataset not found at {}", path.display()),
            )));
        }
        let spec: DatasetSpec = serde_json::from_str(&fs::read_to_string(spec_path)?)?;
        let mut instances = Vec::new();
        for line in BufReader::new(fs::File::open(inst_path)?).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                instances.push(serde_json::from_str(&line)?);
            }
        }
        Dataset::new(spec, instances)
    }
}
