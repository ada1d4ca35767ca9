//! Line-delimited JSON training logs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rkd_core::train::{Clock, MetricsRecord};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Wall-clock seconds since construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn start() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn elapsed_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// One log line: the record's fields, plus `generation` for
/// self-distillation runs.
#[derive(Debug, Clone, PartialEq)]
pub struct LogLine {
    pub generation: Option<usize>,
    pub record: MetricsRecord,
}

impl LogLine {
    pub fn to_json(&self) -> serde_json::Result<String> {
        let mut value = serde_json::to_value(&self.record)?;
        if let (Some(g), Some(map)) = (self.generation, value.as_object_mut()) {
            map.insert("generation".into(), g.into());
        }
        serde_json::to_string(&value)
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(text)?;
        let generation = match value.as_object_mut().and_then(|m| m.remove("generation")) {
            Some(g) => Some(usize::deserialize(g)?),
            None => None,
        };
        Ok(LogLine { generation, record: MetricsRecord::deserialize(value)? })
    }
}

/// Appends one JSON object per epoch, flushing after each so a crashed run
/// still leaves a readable prefix.
pub struct MetricsWriter {
    path: PathBuf,
    out: BufWriter<File>,
    failed: Option<std::io::Error>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { path: path.to_path_buf(), out: BufWriter::new(file), failed: None })
    }

    pub fn write(&mut self, generation: Option<usize>, record: &MetricsRecord) {
        if self.failed.is_some() {
            return;
        }
        let line = LogLine { generation, record: record.clone() };
        let res = line
            .to_json()
            .map_err(std::io::Error::from)
            .and_then(|text| writeln!(self.out, "{text}"))
            .and_then(|_| self.out.flush());
        if let Err(e) = res {
            self.failed = Some(e);
        }
    }

    /// Reports the first write error, if any.
    pub fn finish(mut self) -> Result<()> {
        if let Some(e) = self.failed.take() {
            return Err(Error::io(&self.path, e));
        }
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<LogLine>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = LogLine::from_json(&line)
            .map_err(|e| Error::Data(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(parsed);
    }
    Ok(out)
}
