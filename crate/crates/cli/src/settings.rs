//! Flat key-value settings with precedence command line > file > default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use chrono::Local;
use serde::Serialize;

pub const CONFIG_ENV: &str = "EMOTTS_CONFIG";

/// Values from the config file plus every value resolved so far, so the
/// effective settings can be written next to the outputs.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    source: Option<PathBuf>,
    resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let file = parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok(Self {
            file,
            source: Some(path.to_path_buf()),
            resolved: BTreeMap::new(),
        })
    }

    /// `cli` if given, else the file value under `key`, else `default`.
    pub fn get<T>(&mut self, key: &str, cli: Option<T>, default: T) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = self.get_opt(key, cli)?.unwrap_or(default);
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Like [`get`](Self::get) without a default; `None` when unset.
    pub fn get_opt<T>(&mut self, key: &str, cli: Option<T>) -> Result<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match (cli, self.file.get(key)) {
            (Some(v), _) => v,
            (None, Some(raw)) => raw
                .parse()
                .map_err(|e| anyhow::anyhow!("config key `{key}` = `{raw}`: {e}"))?,
            (None, None) => return Ok(None),
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(Some(value))
    }

    pub fn require<T>(&mut self, key: &str, cli: Option<T>) -> Result<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.get_opt(key, cli)? {
            Some(v) => Ok(v),
            None => bail!("missing required setting `{key}` (flag --{key} or config key)"),
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }

    pub fn source(&self) -> Option<&Path> {
        self.source.as_deref()
    }
}

/// `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bail!("line {}: expected `key = value`", n + 1);
        };
        let key = k.trim().replace('_', "-");
        if key.is_empty() {
            bail!("line {}: empty key", n + 1);
        }
        out.insert(key, v.trim().to_string());
    }
    Ok(out)
}

/// Output directory for one command invocation.
pub struct RunDir {
    pub path: PathBuf,
    pub seed: u64,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    command: &'a str,
    seed: u64,
    started: String,
    config_file: Option<String>,
    settings: &'a BTreeMap<String, String>,
}

impl RunDir {
    /// `out_dir` when given, else `runs/<timestamp>-seed<seed>`.
    pub fn create(out_dir: Option<PathBuf>, seed: u64) -> Result<Self> {
        let path = out_dir.unwrap_or_else(|| {
            PathBuf::from("runs").join(format!("{}-seed{seed}", Local::now().format("%Y%m%d-%H%M%S")))
        });
        fs::create_dir_all(&path).with_context(|| format!("creating run directory {}", path.display()))?;
        Ok(Self { path, seed })
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    /// Writes `run.json` describing the invocation.
    pub fn record(&self, command: &str, settings: &Settings) -> Result<()> {
        let record = RunRecord {
            command,
            seed: self.seed,
            started: Local::now().to_rfc3339(),
            config_file: settings.source().map(|p| p.display().to_string()),
            settings: settings.resolved(),
        };
        fs::write(self.file("run.json"), serde_json::to_string_pretty(&record)?)?;
        Ok(())
    }
}
