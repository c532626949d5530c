//! Option resolution: flag, then config file, then default.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ibnet_core::{Error, Result};
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "IBNET_SEED";

#[derive(Debug, Default)]
pub struct Settings {
    file: Map<String, Value>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Settings::default());
        };
        match ibnet_core::io::read_json::<Value>(path)? {
            Value::Object(file) => Ok(Settings { file }),
            _ => Err(Error::Config(format!("{}: config must be a JSON object", path.display()))),
        }
    }

    fn raw(&self, key: &str) -> Option<&Value> {
        self.file.get(key).or_else(|| self.file.get(&key.replace('_', "-")))
    }

    /// Flag value if given, else the config entry parsed with `FromStr`.
    pub fn parsed<T>(&self, flag: Option<&str>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let text = match (flag, self.raw(key)) {
            (Some(f), _) => f.to_string(),
            (None, Some(Value::String(s))) => s.clone(),
            (None, Some(v @ (Value::Number(_) | Value::Bool(_)))) => v.to_string(),
            (None, Some(v)) => return Err(Error::Config(format!("config key {key:?} has unsupported value {v}"))),
            (None, None) => return Ok(None),
        };
        text.parse::<T>()
            .map(Some)
            .map_err(|e| Error::Validation(format!("--{}: {e}", key.replace('_', "-"))))
    }

    pub fn value<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        let flag = flag.map(|f| f.to_string());
        self.parsed(flag.as_deref(), key)
    }

    pub fn or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        Ok(self.value(flag, key)?.unwrap_or(default))
    }

    pub fn path(&self, flag: Option<&PathBuf>, key: &str) -> Result<Option<PathBuf>> {
        self.parsed(flag.map(|p| p.to_string_lossy()).as_deref(), key)
    }

    pub fn required<T>(&self, flag: Option<T>, key: &str) -> Result<T>
    where
        T: FromStr + ToString,
        T::Err: std::fmt::Display,
    {
        self.value(flag, key)?
            .ok_or_else(|| Error::Usage(format!("--{} is required", key.replace('_', "-"))))
    }

    /// `--seed`, then the config file, then `IBNET_SEED`, then 0.
    pub fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = self.value(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Validation(format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }
}
