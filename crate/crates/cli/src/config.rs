//! Settings resolution. Precedence, strongest first: command-line flags,
//! process environment, config file, built-in defaults.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context};

pub const DEFAULT_PORT: u16 = 7998;

/// Parses flat `KEY=VALUE` lines. Blank lines and `#` comments are skipped;
/// values may be wrapped in single or double quotes.
pub fn parse_config(text: &str) -> anyhow::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("line {}: expected KEY=VALUE", n + 1);
        };
        let key = key.trim();
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        let value = value.trim();
        let value = strip_quotes(value);
        out.insert(key.to_owned(), value.to_owned());
    }
    Ok(out)
}

fn strip_quotes(v: &str) -> &str {
    for q in ['"', '\''] {
        if v.len() >= 2 && v.starts_with(q) && v.ends_with(q) {
            return &v[1..v.len() - 1];
        }
    }
    v
}

/// Merged settings handed to every runtime.
#[derive(Debug, Clone, Default)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    /// `file` is the parsed config file, `env` a lookup into the process
    /// environment and `flags` the explicit `--set` overrides.
    pub fn resolve(
        file: BTreeMap<String, String>,
        env: impl Fn(&str) -> Option<String>,
        flags: &[(String, String)],
    ) -> Self {
        let mut values = file;
        for (key, value) in values.iter_mut() {
            if let Some(v) = env(key) {
                *value = v;
            }
        }
        for (key, value) in flags {
            values.insert(key.clone(), value.clone());
        }
        Self { values }
    }

    pub fn load(
        path: Option<&Path>,
        flags: &[(String, String)],
    ) -> anyhow::Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                parse_config(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => BTreeMap::new(),
        };
        Ok(Self::resolve(file, |k| std::env::var(k).ok(), flags))
    }

    /// Explicit values only. Keys absent here are still looked up in the
    /// process environment by the runtime itself.
    pub fn explicit(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.get_with(key, |k| std::env::var(k).ok())
    }

    pub fn get_with(&self, key: &str, env: impl Fn(&str) -> Option<String>) -> Option<String> {
        self.values.get(key).cloned().or_else(|| env(key))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.values.insert(key.into(), value.into());
    }
}

/// `--port` beats `SERVER_PORT` from the environment, which beats the
/// config file, which beats the default.
pub fn resolve_port(
    flag: Option<u16>,
    settings: &Settings,
    env: impl Fn(&str) -> Option<String>,
) -> anyhow::Result<u16> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match settings.get_with("SERVER_PORT", env) {
        Some(v) => v
            .trim()
            .parse()
            .with_context(|| format!("SERVER_PORT is not a port number: {v:?}")),
        None => Ok(DEFAULT_PORT),
    }
}

/// Parses a `KEY=VALUE` command-line override.
pub fn parse_override(s: &str) -> Result<(String, String), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_owned(), v.to_owned())),
        _ => Err(format!("expected KEY=VALUE, got {s:?}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_of(pairs: &'static [(&'static str, &'static str)]) -> impl Fn(&str) -> Option<String> {
        move |k| pairs.iter().find(|(n, _)| *n == k).map(|(_, v)| (*v).to_owned())
    }

    #[test]
    fn parses_flat_lines() {
        let m = parse_config("# comment\n\nSERVER_PORT=7998\nNAME = \"a b\"\nX='y'\nEMPTY=\n").unwrap();
        assert_eq!(m["SERVER_PORT"], "7998");
        assert_eq!(m["NAME"], "a b");
        assert_eq!(m["X"], "y");
        assert_eq!(m["EMPTY"], "");
        assert!(parse_config("novalue").is_err());
        assert!(parse_config("=x").is_err());
    }

    #[test]
    fn flag_beats_env_beats_file() {
        let file = parse_config("SERVER_PORT=7998\nA=file\nB=file\nC=file").unwrap();
        let env = env_of(&[("B", "env"), ("C", "env"), ("SERVER_PORT", "9000")]);
        let s = Settings::resolve(file, &env, &[("C".into(), "flag".into())]);
        assert_eq!(s.explicit()["A"], "file");
        assert_eq!(s.explicit()["B"], "env");
        assert_eq!(s.explicit()["C"], "flag");

        assert_eq!(resolve_port(Some(8080), &s, &env).unwrap(), 8080);
        assert_eq!(resolve_port(None, &s, &env).unwrap(), 9000);
    }

    #[test]
    fn port_flag_overrides_config_file() {
        let file = parse_config("SERVER_PORT=7998").unwrap();
        let s = Settings::resolve(file, |_| None, &[]);
        assert_eq!(resolve_port(Some(8080), &s, |_| None).unwrap(), 8080);
        assert_eq!(resolve_port(None, &s, |_| None).unwrap(), 7998);
    }

    #[test]
    fn port_defaults_and_env_only_keys() {
        let s = Settings::resolve(BTreeMap::new(), |_| None, &[]);
        assert_eq!(resolve_port(None, &s, |_| None).unwrap(), DEFAULT_PORT);
        let env = env_of(&[("SERVER_PORT", "7000")]);
        assert_eq!(resolve_port(None, &s, &env).unwrap(), 7000);
        let bad = env_of(&[("SERVER_PORT", "nope")]);
        assert!(resolve_port(None, &s, &bad).is_err());
    }

    #[test]
    fn overrides_need_a_key() {
        assert_eq!(parse_override("A=b=c").unwrap(), ("A".into(), "b=c".into()));
        assert!(parse_override("=x").is_err());
        assert!(parse_override("x").is_err());
    }
}
