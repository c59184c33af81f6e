//! Flat `key = value` configuration files with `[section]` headers.
//!
//! ```text
//! # DFNet on Cora
//! [model]
//! layer_widths = 8, 16, 32, 64, 128
//! p = 5
//! q = 3
//! [train]
//! epochs = 200
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Activation, FilterKind, ModelConfig};
use crate::train::{SplitMode, TrainConfig};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    /// Section name to key/value pairs; keys before any header live under "".
    pub sections: BTreeMap<String, BTreeMap<String, Entry>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

impl ConfigFile {
    pub fn parse(text: &str, source: &Path) -> Result<Self> {
        let mut cfg = ConfigFile::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| Error::parse(source, idx + 1, "unterminated section header"))?;
                section = name.trim().to_string();
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, idx + 1, "expected `key = value`"))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(Error::parse(source, idx + 1, "empty key"));
            }
            let entries = cfg.sections.entry(section.clone()).or_default();
            if entries.contains_key(key) {
                return Err(Error::parse(source, idx + 1, format!("duplicate key `{key}`")));
            }
            entries.insert(
                key.to_string(),
                Entry {
                    value: v.trim().to_string(),
                    line: idx + 1,
                },
            );
        }
        Ok(cfg)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&crate::error::read_input_text(path)?, path)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.sections.get(section)?.get(key).map(|e| e.value.as_str())
    }
}

fn parse_value<T: std::str::FromStr>(source: &Path, e: &Entry, key: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| Error::parse(source, e.line, format!("bad value `{}` for `{key}`", e.value)))
}

fn parse_bool(source: &Path, e: &Entry, key: &str) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::parse(source, e.line, format!("`{key}` expects true or false"))),
    }
}

/// Applies `[model]` keys onto `m`. Unknown keys are rejected.
pub fn apply_model_section(cfg: &ConfigFile, source: &Path, m: &mut ModelConfig) -> Result<()> {
    let Some(section) = cfg.sections.get("model") else {
        return Ok(());
    };
    for (key, e) in section {
        match key.as_str() {
            "layer_widths" => {
                m.layer_widths = e
                    .value
                    .split(',')
                    .map(|s| s.trim().parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| Error::parse(source, e.line, "layer_widths expects comma-separated integers"))?;
            }
            "p" => m.p = parse_value(source, e, key)?,
            "q" => m.q = parse_value(source, e, key)?,
            "gamma" => m.gamma = parse_value(source, e, key)?,
            "eta" => m.eta = parse_value(source, e, key)?,
            "l2" | "l2_coeff" => m.l2_coeff = parse_value(source, e, key)?,
            "dropout" => m.dropout = parse_value(source, e, key)?,
            "dense" => m.dense = parse_bool(source, e, key)?,
            "scaled_normalization" => m.scaled_normalization = parse_bool(source, e, key)?,
            "cut_off" => m.cut_off = parse_bool(source, e, key)?,
            "unit_norm" => m.unit_norm = parse_bool(source, e, key)?,
            "seed" => m.seed = parse_value(source, e, key)?,
            "activation" => {
                m.activation = match e.value.as_str() {
                    "relu" => Activation::Relu,
                    "identity" => Activation::Identity,
                    _ => return Err(Error::parse(source, e.line, "activation is relu or identity")),
                }
            }
            "filter" => {
                m.filter = match e.value.split_once(':') {
                    None if e.value == "feedback" => FilterKind::FeedbackLooped,
                    Some(("chebyshev", k)) => FilterKind::Chebyshev {
                        k: k.trim()
                            .parse()
                            .map_err(|_| Error::parse(source, e.line, "chebyshev order must be an integer"))?,
                    },
                    _ => return Err(Error::parse(source, e.line, "filter is `feedback` or `chebyshev:<k>`")),
                }
            }
            _ => return Err(Error::parse(source, e.line, format!("unknown model key `{key}`"))),
        }
    }
    Ok(())
}

/// Applies `[train]` keys onto `t`. Unknown keys are rejected.
pub fn apply_train_section(cfg: &ConfigFile, source: &Path, t: &mut TrainConfig) -> Result<()> {
    let Some(section) = cfg.sections.get("train") else {
        return Ok(());
    };
    for (key, e) in section {
        match key.as_str() {
            "epochs" => t.epochs = parse_value(source, e, key)?,
            "learning_rate" | "lr" => t.learning_rate = parse_value(source, e, key)?,
            "beta1" => t.beta1 = parse_value(source, e, key)?,
            "beta2" => t.beta2 = parse_value(source, e, key)?,
            "epsilon" => t.epsilon = parse_value(source, e, key)?,
            "runs" => t.runs = parse_value(source, e, key)?,
            "split" => {
                t.split = if e.value == "standard" {
                    SplitMode::Standard
                } else if let Some(frac) = e.value.strip_prefix("fractional:") {
                    SplitMode::Fractional {
                        train_fraction: frac
                            .trim()
                            .parse()
                            .map_err(|_| Error::parse(source, e.line, "fractional split needs a number"))?,
                    }
                } else {
                    return Err(Error::parse(source, e.line, "split is `standard` or `fractional:<fraction>`"));
                }
            }
            _ => return Err(Error::parse(source, e.line, format!("unknown train key `{key}`"))),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_overrides() {
        let text = "# c\n[model]\nlayer_widths = 4, 8\np=3\nfilter = chebyshev:2\n[train]\nepochs = 5\nsplit = fractional:0.1\n";
        let src = Path::new("x.cfg");
        let cfg = ConfigFile::parse(text, src).unwrap();
        let mut m = ModelConfig::dfnet();
        apply_model_section(&cfg, src, &mut m).unwrap();
        assert_eq!(m.layer_widths, vec![4, 8]);
        assert_eq!(m.p, 3);
        assert_eq!(m.filter, FilterKind::Chebyshev { k: 2 });
        let mut t = TrainConfig::default();
        apply_train_section(&cfg, src, &mut t).unwrap();
        assert_eq!(t.epochs, 5);
        assert_eq!(t.split, SplitMode::Fractional { train_fraction: 0.1 });
    }

    #[test]
    fn errors_name_the_line() {
        let src = Path::new("x.cfg");
        let err = ConfigFile::parse("[model]\np = 1\np = 2\n", src).unwrap_err();
        assert!(err.to_string().starts_with("x.cfg:3:"), "{err}");
        let cfg = ConfigFile::parse("[model]\nbogus = 1\n", src).unwrap();
        let err = apply_model_section(&cfg, src, &mut ModelConfig::dfnet()).unwrap_err();
        assert!(err.to_string().starts_with("x.cfg:2:"), "{err}");
    }
}
