//! Flag and config-file resolution.
//!
//! A config file is TOML with keys named after the long flags (`-` or `_`
//! separators both work). Keys may sit at the top level or in a table named
//! after the subcommand; the table wins. A run manifest (`.json`) is also
//! accepted, in which case its resolved `config` object is used. Explicit
//! flags override everything.

use std::path::Path;

use anyhow::{anyhow, Context};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::UsageError;

pub struct Resolver {
    file: Map<String, Value>,
    resolved: Map<String, Value>,
}

impl Resolver {
    pub fn empty() -> Self {
        Self {
            file: Map::new(),
            resolved: Map::new(),
        }
    }

    pub fn load(path: &Path, subcommand: &str) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let root: Value = if path.extension().is_some_and(|e| e == "json") {
            let v: Value = serde_json::from_str(&text)
                .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
            v.get("config").cloned().unwrap_or(v)
        } else {
            let t: toml::Table = toml::from_str(&text)
                .map_err(|e| UsageError(format!("config {}: {e}", path.display())))?;
            serde_json::to_value(t)?
        };
        let Value::Object(root) = root else {
            return Err(UsageError(format!("config {} is not a table", path.display())).into());
        };
        let mut file = Map::new();
        let mut section = None;
        for (key, value) in root {
            let key = key.replace('-', "_");
            if key == subcommand {
                section = Some(value);
            } else if !value.is_object() {
                file.insert(key, value);
            }
        }
        if let Some(Value::Object(table)) = section {
            for (key, value) in table {
                file.insert(key.replace('-', "_"), value);
            }
        }
        Ok(Self {
            file,
            resolved: Map::new(),
        })
    }

    fn file_value<T: DeserializeOwned>(&self, key: &str) -> anyhow::Result<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| UsageError(format!("config key `{key}`: {e}")).into()),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, value: &T) {
        self.resolved.insert(
            key.to_string(),
            serde_json::to_value(value).unwrap_or(Value::Null),
        );
    }

    /// Flag, else config file, else `default`.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> anyhow::Result<T>
    where
        T: DeserializeOwned + Serialize,
    {
        let v = match flag {
            Some(v) => v,
            None => self.file_value(key)?.unwrap_or(default),
        };
        self.record(key, &v);
        Ok(v)
    }

    /// Flag, else config file, else `None`.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<Option<T>>
    where
        T: DeserializeOwned + Serialize,
    {
        let v = match flag {
            Some(v) => Some(v),
            None => self.file_value(key)?,
        };
        if let Some(v) = &v {
            self.record(key, v);
        }
        Ok(v)
    }

    /// Like [`Resolver::optional`], but a missing value is a usage error.
    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> anyhow::Result<T>
    where
        T: DeserializeOwned + Serialize,
    {
        self.optional(key, flag)?.ok_or_else(|| {
            anyhow!(UsageError(format!(
                "--{} is required (flag or config key `{key}`)",
                key.replace('_', "-")
            )))
        })
    }

    /// A value parsed from its string form, e.g. enums with `FromStr`.
    pub fn parsed<T>(&mut self, key: &str, flag: Option<String>, default: &str) -> anyhow::Result<T>
    where
        T: std::str::FromStr,
        T::Err: std::fmt::Display,
    {
        let raw: String = self.value(key, flag, default.to_string())?;
        raw.parse()
            .map_err(|e| UsageError(format!("--{}: {e}", key.replace('_', "-"))).into())
    }

    pub fn into_resolved(self) -> Map<String, Value> {
        self.resolved
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn flags_override_sections_override_top_level() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "c.toml",
            "k = 3\nrel-tol = 1e-4\nrestarts = 2\n[fit]\nk = 5\n",
        );
        let mut r = Resolver::load(&p, "fit").unwrap();
        assert_eq!(r.value("k", None, 2usize).unwrap(), 5);
        assert_eq!(r.value("rel_tol", None, 1e-6).unwrap(), 1e-4);
        assert_eq!(r.value("restarts", Some(7usize), 1).unwrap(), 7);
        assert_eq!(r.value("seed", None, 0u64).unwrap(), 0);
        let resolved = r.into_resolved();
        assert_eq!(resolved["k"], 5);
        assert_eq!(resolved["seed"], 0);
    }

    #[test]
    fn manifest_config_is_reused() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "m.json", r#"{"subcommand":"fit","config":{"k":4}}"#);
        let mut r = Resolver::load(&p, "fit").unwrap();
        assert_eq!(r.value("k", None, 2usize).unwrap(), 4);
    }

    #[test]
    fn wrong_type_is_a_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.toml", "k = \"many\"\n");
        let mut r = Resolver::load(&p, "fit").unwrap();
        let err = r.value("k", None, 2usize).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }
}
