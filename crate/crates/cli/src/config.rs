//! Line-based `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are skipped. Every key a command
//! reads is recorded with its final value, and any key left unread is an
//! error, so a typo never silently falls back to a default.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    raw: BTreeMap<String, String>,
    resolved: BTreeMap<String, String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut raw = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected 'key = value', got '{line}'", n + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::Config(format!("line {}: empty key", n + 1)));
            }
            if raw.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: key '{key}' given twice", n + 1)));
            }
        }
        Ok(Self {
            raw,
            resolved: BTreeMap::new(),
        })
    }

    /// Sets `key`, replacing any value from the file.
    pub fn set(&mut self, key: &str, value: impl Display) {
        self.raw.insert(key.to_string(), value.to_string());
    }

    fn take(&mut self, key: &str) -> Option<String> {
        self.raw.remove(key)
    }

    fn parse_value<T: FromStr>(key: &str, text: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        text.parse()
            .map_err(|e| CliError::Config(format!("bad value '{text}' for key '{key}': {e}")))
    }

    /// Typed value of `key`, or `default` when absent.
    pub fn get<T>(&mut self, key: &str, default: T) -> Result<T, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match self.take(key) {
            Some(text) => Self::parse_value(key, &text)?,
            None => default,
        };
        self.resolved.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    /// Like [`RunConfig::get`] but `none` (or absence with a `None`
    /// default) disables the setting.
    pub fn get_opt<T>(&mut self, key: &str, default: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match self.take(key) {
            Some(text) if text == "none" => None,
            Some(text) => Some(Self::parse_value(key, &text)?),
            None => default,
        };
        let shown = value.as_ref().map_or_else(|| "none".to_string(), ToString::to_string);
        self.resolved.insert(key.to_string(), shown);
        Ok(value)
    }

    /// Comma-separated list.
    pub fn get_list<T>(&mut self, key: &str, default: Vec<T>) -> Result<Vec<T>, CliError>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let values = match self.take(key) {
            Some(text) => text
                .split(',')
                .map(|s| Self::parse_value(key, s.trim()))
                .collect::<Result<Vec<T>, _>>()?,
            None => default,
        };
        if values.is_empty() {
            return Err(CliError::Config(format!("key '{key}' needs at least one value")));
        }
        let shown: Vec<String> = values.iter().map(ToString::to_string).collect();
        self.resolved.insert(key.to_string(), shown.join(","));
        Ok(values)
    }

    /// Fails on the first key no getter asked for.
    pub fn finish(&self, command: &str) -> Result<(), CliError> {
        match self.raw.keys().next() {
            Some(key) => Err(CliError::Config(format!("unknown key '{key}' for {command}"))),
            None => Ok(()),
        }
    }

    /// Every resolved key in `key = value` form, sorted by key.
    pub fn echo(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
