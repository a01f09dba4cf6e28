//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are matched
//! exactly; each consumer rejects keys it does not know so that typos fail
//! loudly instead of silently falling back to defaults.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::schema(context, idx + 1, "expected key=value"))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::schema(context, idx + 1, "empty key"));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, String)>) -> Self {
        Self {
            entries: pairs
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn insert(&mut self, key: &str, value: impl ToString) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Overwrites `target` with the parsed value when `key` is present.
    pub fn read_f64(&self, key: &str, target: &mut f64) -> Result<()> {
        if let Some(v) = self.get(key) {
            *target = v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}` is not a number: `{v}`")))?;
            if !target.is_finite() {
                return Err(Error::Config(format!("`{key}` must be finite")));
            }
        }
        Ok(())
    }

    pub fn read_usize(&self, key: &str, target: &mut usize) -> Result<()> {
        if let Some(v) = self.get(key) {
            *target = v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}` is not an unsigned integer: `{v}`")))?;
        }
        Ok(())
    }

    pub fn read_u64(&self, key: &str, target: &mut u64) -> Result<()> {
        if let Some(v) = self.get(key) {
            *target = v
                .parse()
                .map_err(|_| Error::Config(format!("`{key}` is not an unsigned integer: `{v}`")))?;
        }
        Ok(())
    }

    /// Fails if any key is outside `known`.
    pub fn reject_unknown(&self, known: &[&str]) -> Result<()> {
        for key in self.entries.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::Config(format!("unknown key `{key}`")));
            }
        }
        Ok(())
    }

    /// Entries whose key starts with `prefix.`, with the prefix stripped.
    pub fn section(&self, prefix: &str) -> KvConfig {
        let lead = format!("{prefix}.");
        KvConfig {
            entries: self
                .entries
                .iter()
                .filter_map(|(k, v)| k.strip_prefix(&lead).map(|s| (s.to_string(), v.clone())))
                .collect(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let cfg = KvConfig::parse("# vehicle\n m = 3.5 \n\nmu=0.9\n", "t").unwrap();
        assert_eq!(cfg.get("m"), Some("3.5"));
        assert_eq!(cfg.get("mu"), Some("0.9"));
    }

    #[test]
    fn missing_equals_is_a_schema_error() {
        let err = KvConfig::parse("m 3.5", "t").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 1, .. }));
    }

    #[test]
    fn section_strips_prefix() {
        let cfg = KvConfig::parse("pp.l_d0 = 0.5\nmpcc.q_c = 1\n", "t").unwrap();
        let pp = cfg.section("pp");
        assert_eq!(pp.get("l_d0"), Some("0.5"));
        assert!(pp.get("q_c").is_none());
    }

    #[test]
    fn non_numeric_value_rejected() {
        let cfg = KvConfig::parse("mu = fast", "t").unwrap();
        let mut mu = 1.0;
        assert!(cfg.read_f64("mu", &mut mu).is_err());
    }
}
