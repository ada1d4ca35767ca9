//! Training configuration files and the compact flag syntaxes.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use rkd_core::train::{DistillConfig, LossKind, LossTerm};

use crate::error::{Error, Result};

/// Reads a TOML [`DistillConfig`]; unknown keys are rejected.
pub fn load_config(path: &Path) -> Result<DistillConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<DistillConfig> {
    let cfg: DistillConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn render_config(cfg: &DistillConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

/// `rkd-d=1,rkd-a=2` → loss terms, in the listed order.
pub fn parse_losses(spec: &str) -> Result<Vec<LossTerm>> {
    let mut terms = Vec::new();
    for item in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, weight) = item
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("loss term `{item}` is not of the form name=weight")))?;
        let loss = LossKind::from_name(name.trim()).ok_or_else(|| {
            let known: Vec<&str> = LossKind::ALL.iter().map(|k| k.name()).collect();
            Error::Config(format!("unknown loss `{name}`; known: {}", known.join(", ")))
        })?;
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("weight of `{name}` is not a number: `{weight}`")))?;
        terms.push(LossTerm { loss, weight });
    }
    if terms.is_empty() {
        return Err(Error::Config("no loss terms given".into()));
    }
    Ok(terms)
}

/// Comma-separated list, e.g. layer widths `32,64,16` or recall Ks `1,2,4,8`.
pub fn parse_list<T: FromStr>(what: &str, text: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::Config(format!("{what}: cannot parse `{s}`"))))
        .collect()
}

/// Labels file: one non-negative integer per line; blank lines ignored.
pub fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse()
                .map_err(|_| Error::Data(format!("{} line {}: `{}` is not a label", path.display(), i + 1, l.trim())))
        })
        .collect()
}
