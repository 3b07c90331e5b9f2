//! Flat `key = value` configuration text.
//!
//! One entry per line, `#` starts a comment, keys are dotted
//! (`model.base_channels`, `train.seed`, `rain.angle`).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::ConfigError;

/// Parsed configuration with tracking of which keys were consumed.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
    used: std::cell::RefCell<BTreeSet<String>>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(ConfigError::Syntax {
                    line: i + 1,
                    text: raw.to_string(),
                });
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(ConfigError::InvalidValue {
                    key: k.to_string(),
                    value: v.to_string(),
                    reason: "duplicate key".into(),
                });
            }
        }
        Ok(KvConfig {
            entries,
            used: Default::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_string());
        self.entries.get(key).map(String::as_str)
    }

    /// Typed lookup; `Ok(None)` when absent.
    pub fn get<V: FromStr>(&self, key: &str) -> Result<Option<V>, ConfigError>
    where
        V::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: V::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    pub fn get_or<V: FromStr>(&self, key: &str, default: V) -> Result<V, ConfigError>
    where
        V::Err: Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }

    /// Errors on the first key no lookup has touched.
    pub fn reject_unused(&self) -> Result<(), ConfigError> {
        let used = self.used.borrow();
        match self.entries.keys().find(|k| !used.contains(*k)) {
            Some(k) => Err(ConfigError::UnknownKey(k.clone())),
            None => Ok(()),
        }
    }

    /// Keys in sorted order, rendered back to text.
    pub fn to_text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

/// Parses `a/b` or a decimal number.
pub fn parse_ratio(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
            if b == 0.0 {
                return Err("zero denominator".into());
            }
            a / b
        }
        None => s.parse().map_err(|e| format!("{e}"))?,
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err("must be a positive number".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dotted_keys() {
        let c = KvConfig::parse("# header\nmodel.base_channels = 16  # narrow\n\ntrain.seed=7\n").unwrap();
        assert_eq!(c.get::<usize>("model.base_channels").unwrap(), Some(16));
        assert_eq!(c.get::<u64>("train.seed").unwrap(), Some(7));
        assert_eq!(c.get::<u64>("train.absent").unwrap(), None);
        c.reject_unused().unwrap();
    }

    #[test]
    fn reports_unknown_and_bad_values() {
        let c = KvConfig::parse("a = 1\nb = x\n").unwrap();
        assert!(matches!(c.get::<usize>("b"), Err(ConfigError::InvalidValue { .. })));
        assert_eq!(c.reject_unused(), Err(ConfigError::UnknownKey("a".into())));
        assert!(matches!(KvConfig::parse("novalue"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(KvConfig::parse("a = 1\na = 2").is_err());
    }

    #[test]
    fn ratios() {
        assert_eq!(parse_ratio("1/4"), Ok(0.25));
        assert_eq!(parse_ratio("0.5"), Ok(0.5));
        assert!(parse_ratio("0").is_err());
        assert!(parse_ratio("1/0").is_err());
    }
}
