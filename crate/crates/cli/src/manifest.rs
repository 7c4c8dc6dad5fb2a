//! Plain-text `key = value` run manifests.

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use crate::error::{CliError, CliResult};

/// Ordered key-value pairs. The `clock` entry is the only non-deterministic field.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Appends `clock = <seconds since the Unix epoch>`.
    pub fn stamp_clock(&mut self) -> &mut Self {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        self.push("clock", secs)
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let entries = crate::config::parse_config(text)?
            .into_iter()
            .map(|(k, v, _)| (k, v))
            .collect();
        Ok(Self { entries })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        std::fs::write(path, self.render())
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
    }
}

/// Fails unless `path` is absent or `force` is set.
pub fn ensure_writable(path: &Path, force: bool) -> CliResult<()> {
    if path.exists() && !force {
        return Err(CliError::args(format!(
            "{} already exists; pass --force to overwrite",
            path.display()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_parse_round_trip() {
        let mut m = Manifest::new();
        m.push("command", "loso").push("alpha", 0.5).push("data", "a b.dse");
        let back = Manifest::parse(&m.render()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.get("alpha"), Some("0.5"));
        assert_eq!(m.render(), "command = loso\nalpha = 0.5\ndata = a b.dse\n");
    }

    #[test]
    fn refuses_existing_file_without_force() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.txt");
        ensure_writable(&p, false).unwrap();
        std::fs::write(&p, "").unwrap();
        assert!(ensure_writable(&p, false).is_err());
        ensure_writable(&p, true).unwrap();
    }
}
