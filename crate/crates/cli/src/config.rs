use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::Result;

use crate::usage;

/// Keys accepted in a run configuration file.
pub const KNOWN_KEYS: &[&str] = &[
    "images",
    "corpus",
    "out",
    "diff_matrix",
    "eval_dir",
    "loss",
    "steps",
    "seed",
    "batch_size",
    "eval_every",
    "checkpoint_every",
    "reduction",
    "scale",
    "blur_sigma",
    "blur_radius",
    "epsilon",
    "mode",
];

/// Plain `key = value` lines. `#` starts a comment; blank lines are ignored.
/// Dashes in keys are accepted as underscores.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            let key = key.trim().replace('-', "_");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(format!("line {}: unknown key '{key}'", n + 1));
            }
            let value = value.trim().trim_matches('"').to_string();
            if values.insert(key.clone(), value).is_some() {
                return Err(format!("line {}: duplicate key '{key}'", n + 1));
            }
        }
        Ok(ConfigFile { values })
    }

    /// `flag` if given, otherwise the parsed file value, otherwise `None`.
    pub fn pick<T>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key));
        if flag.is_some() {
            return Ok(flag);
        }
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| usage(format!("config key '{key}': invalid value '{v}': {e}"))),
        }
    }

    pub fn pick_or<T>(&self, flag: Option<T>, key: &str, default: T) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        Ok(self.pick(flag, key)?.unwrap_or(default))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_prefers_flags() {
        let cfg = ConfigFile::parse("# run\nsteps = 50\nloss=fdpl  # trailing\n\nblur-sigma = 1.5\n").unwrap();
        assert_eq!(cfg.pick::<usize>(None, "steps").unwrap(), Some(50));
        assert_eq!(cfg.pick(Some(7usize), "steps").unwrap(), Some(7));
        assert_eq!(cfg.pick::<f64>(None, "blur_sigma").unwrap(), Some(1.5));
        assert_eq!(cfg.pick::<String>(None, "seed").unwrap(), None);
        assert_eq!(cfg.pick_or(None, "seed", 3u64).unwrap(), 3);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(ConfigFile::parse("steps 5").is_err());
        assert!(ConfigFile::parse("speed = 5").is_err());
        assert!(ConfigFile::parse("steps = 1\nsteps = 2").is_err());
        let cfg = ConfigFile::parse("steps = many").unwrap();
        assert!(cfg.pick::<usize>(None, "steps").is_err());
    }
}
