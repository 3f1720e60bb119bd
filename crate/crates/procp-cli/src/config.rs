//! Flat key=value config files mirroring the long flags; explicit flags
//! override file entries.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn read_config(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("config line {}: expected key=value, got '{line}'", i + 1);
        };
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

/// Fills an unset option from the config map, parsing the value.
pub fn fill<T: std::str::FromStr>(
    slot: &mut Option<T>,
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if slot.is_none() {
        if let Some(raw) = map.get(key) {
            match raw.parse() {
                Ok(v) => *slot = Some(v),
                Err(e) => bail!("config key '{key}': {e}"),
            }
        }
    }
    Ok(())
}
