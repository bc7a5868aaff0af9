use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::trainer::ValidationReport;
use super::TrainError;

/// One line of the JSONL training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LogRecord {
    Step(StepRecord),
    Validation(ValidationReport),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

/// Append-only JSONL writer; a no-op sink when constructed without a path.
pub struct TrainLog {
    out: Option<BufWriter<File>>,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl TrainLog {
    pub fn create(path: Option<&Path>) -> Result<Self, TrainError> {
        let out = match path {
            Some(p) => {
                if let Some(parent) = p.parent() {
                    std::fs::create_dir_all(parent).map_err(io(p))?;
                }
                Some(BufWriter::new(File::create(p).map_err(io(p))?))
            }
            None => None,
        };
        Ok(Self { out })
    }

    pub fn write(&mut self, record: &LogRecord) -> Result<(), TrainError> {
        if let Some(out) = &mut self.out {
            let line = serde_json::to_string(record).expect("log record serializes");
            writeln!(out, "{line}")
                .and_then(|_| out.flush())
                .map_err(|source| TrainError::Io {
                    path: "training log".into(),
                    source,
                })?;
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Vec<LogRecord>, TrainError> {
        let f = File::open(path).map_err(io(path))?;
        let mut out = Vec::new();
        for line in BufReader::new(f).lines() {
            let line = line.map_err(io(path))?;
            if line.trim().is_empty() {
                continue;
            }
            out.push(serde_json::from_str(&line).map_err(|e| TrainError::Config(format!("{}: {e}", path.display())))?);
        }
        Ok(out)
    }
}
