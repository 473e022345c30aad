//! Enhancer settings gathered from a `key = value` file and command-line
//! flags, flags taking precedence.

use std::fmt;
use std::path::Path;

use modkalm::enhancer::{EnhancerConfig, Mode};

/// Overrides of the enhancer defaults. Unset fields keep the default.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub mode: Option<Mode>,
    pub p: Option<usize>,
    pub q: Option<usize>,
    pub frame_ms: Option<f64>,
    pub inc_ms: Option<f64>,
    pub mod_frame_ms: Option<f64>,
    pub ring_cap: Option<usize>,
}

pub const KEYS: [&str; 7] = ["mode", "p", "q", "frame_ms", "inc_ms", "mod_frame_ms", "ring_cap"];

#[derive(Debug, Clone, PartialEq)]
pub struct SettingsError(pub String);

impl fmt::Display for SettingsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, SettingsError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| SettingsError(format!("invalid value '{value}' for {key}: {e}")))
}

impl Settings {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), SettingsError> {
        match key {
            "mode" => self.mode = Some(parse_value(key, value)?),
            "p" => self.p = Some(parse_value(key, value)?),
            "q" => self.q = Some(parse_value(key, value)?),
            "frame_ms" => self.frame_ms = Some(parse_value(key, value)?),
            "inc_ms" => self.inc_ms = Some(parse_value(key, value)?),
            "mod_frame_ms" => self.mod_frame_ms = Some(parse_value(key, value)?),
            "ring_cap" => self.ring_cap = Some(parse_value(key, value)?),
            other => {
                return Err(SettingsError(format!(
                    "unknown setting '{other}' (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parses `key = value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Settings, SettingsError> {
        let mut s = Settings::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| SettingsError(format!("line {}: expected key = value", i + 1)))?;
            s.set(key.trim(), value.trim())
                .map_err(|e| SettingsError(format!("line {}: {e}", i + 1)))?;
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Settings, SettingsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SettingsError(format!("cannot read config {}: {e}", path.display())))?;
        Settings::parse(&text).map_err(|e| SettingsError(format!("{}: {e}", path.display())))
    }

    /// Fields set in `other` replace those in `self`.
    pub fn overlay(self, other: &Settings) -> Settings {
        Settings {
            mode: other.mode.or(self.mode),
            p: other.p.or(self.p),
            q: other.q.or(self.q),
            frame_ms: other.frame_ms.or(self.frame_ms),
            inc_ms: other.inc_ms.or(self.inc_ms),
            mod_frame_ms: other.mod_frame_ms.or(self.mod_frame_ms),
            ring_cap: other.ring_cap.or(self.ring_cap),
        }
    }

    /// Enhancer configuration for audio at `rate`, in `mode` unless the
    /// settings name one.
    pub fn resolve(&self, default_mode: Mode, rate: u32) -> Result<EnhancerConfig, SettingsError> {
        let mut cfg = EnhancerConfig::for_mode(self.mode.unwrap_or(default_mode));
        cfg.p = self.p.unwrap_or(cfg.p);
        cfg.q = self.q.unwrap_or(cfg.q);
        cfg.ring_cap = self.ring_cap.unwrap_or(cfg.ring_cap);
        cfg.frame.sample_rate = rate;
        cfg.set_timing(
            self.frame_ms.unwrap_or(32.0),
            self.inc_ms.unwrap_or(8.0),
            self.mod_frame_ms.unwrap_or(64.0),
        )
        .map_err(|e| SettingsError(e.to_string()))?;
        cfg.validate().map_err(|e| SettingsError(e.to_string()))?;
        Ok(cfg)
    }
}
