use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::fail::Failure;

/// Every key the configuration file and `TOPICFORGE_*` environment
/// variables may set. Flags map onto the same names. The two API-key
/// variables are deliberately absent: secrets are read directly where
/// needed and never echoed into manifests.
pub const KNOWN_KEYS: &[&str] = &[
    "seed",
    "input",
    "counts",
    "out_dir",
    "tau",
    "error_rate",
    "lambda",
    "k",
    "n_min",
    "max_iters",
    "alpha",
    "backend",
    "backend_url",
    "script",
    "relevance_min",
    "mcq_grade_min",
    "freeform_required_score",
    "num_answers",
    "max_in_flight",
    "correct_weight",
    "format_bonus",
    "repetition_penalty",
    "repetition_window",
    "repetition_threshold",
    "source",
    "skip_gate",
    "skip_mcq",
    "skip_freeform",
    "term",
    "date_from",
    "date_to",
    "fixture",
    "max_ids",
    "page_size",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    File,
    Env,
    Flag,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::File => "config file",
            Layer::Env => "environment",
            Layer::Flag => "flag",
        })
    }
}

/// Merged run configuration: flat `key = value` file, overridden by
/// `TOPICFORGE_<KEY>` environment variables, overridden by flags.
#[derive(Debug, Default)]
pub struct Settings {
    values: BTreeMap<&'static str, (String, Layer)>,
}

fn canonical(key: &str) -> Option<&'static str> {
    KNOWN_KEYS.iter().find(|&&k| k == key).copied()
}

impl Settings {
    /// Read the file layer (if any), then the environment layer.
    pub fn load(config_path: Option<&Path>) -> Result<Self, Failure> {
        let mut settings = Settings::default();
        if let Some(path) = config_path {
            let text = std::fs::read_to_string(path).map_err(|error| {
                Failure::config(format!("cannot read config file {}: {error}", path.display()))
            })?;
            settings.read_file(path, &text)?;
        }
        settings.read_env();
        Ok(settings)
    }

    fn read_file(&mut self, path: &Path, text: &str) -> Result<(), Failure> {
        for (number, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Failure::config(format!(
                    "{}:{}: expected `key = value`, got {line:?}",
                    path.display(),
                    number + 1
                ))
            })?;
            let key = canonical(key.trim()).ok_or_else(|| {
                Failure::config(format!(
                    "{}:{}: unknown key {:?}",
                    path.display(),
                    number + 1,
                    key.trim()
                ))
            })?;
            let value = value.trim();
            if value.is_empty() {
                return Err(Failure::config(format!(
                    "{}:{}: empty value for {key}",
                    path.display(),
                    number + 1
                )));
            }
            self.values.insert(key, (value.to_string(), Layer::File));
        }
        Ok(())
    }

    fn read_env(&mut self) {
        for (name, value) in std::env::vars() {
            let Some(stripped) = name.strip_prefix("TOPICFORGE_") else {
                continue;
            };
            // Unknown TOPICFORGE_* names are left alone rather than
            // rejected: the namespace also carries the API-key secrets.
            if let Some(key) = canonical(&stripped.to_ascii_lowercase()) {
                if !value.is_empty() {
                    self.values.insert(key, (value, Layer::Env));
                }
            }
        }
    }

    /// Apply one flag value; `None` leaves lower layers in place.
    pub fn set_flag<T: fmt::Display>(&mut self, key: &'static str, value: Option<T>) {
        debug_assert!(canonical(key).is_some(), "unknown settings key {key}");
        if let Some(value) = value {
            self.values.insert(key, (value.to_string(), Layer::Flag));
        }
    }

    /// Apply a boolean flag: only an explicit `true` overrides, so an
    /// unset flag cannot mask `skip_gate = true` from the file layer.
    pub fn set_switch(&mut self, key: &'static str, on: bool) {
        if on {
            self.set_flag(key, Some(true));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(canonical(key)?).map(|(v, _)| v.as_str())
    }

    fn get_with_layer(&self, key: &str) -> Option<(&str, Layer)> {
        self.values
            .get(canonical(key)?)
            .map(|(v, layer)| (v.as_str(), *layer))
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(PathBuf::from)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf, Failure> {
        self.path(key)
            .ok_or_else(|| Failure::config(format!("missing required setting `{key}`")))
    }

    fn parsed<T>(&self, key: &str, describe: &str) -> Result<Option<T>, Failure>
    where
        T: std::str::FromStr,
    {
        match self.get_with_layer(key) {
            None => Ok(None),
            Some((raw, layer)) => raw.parse().map(Some).map_err(|_| {
                Failure::config(format!(
                    "`{key}` must be {describe}, got {raw:?} (from {layer})"
                ))
            }),
        }
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>, Failure> {
        self.parsed(key, "a number")
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>, Failure> {
        self.parsed(key, "a nonnegative integer")
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>, Failure> {
        self.parsed(key, "a nonnegative integer")
    }

    pub fn u8(&self, key: &str) -> Result<Option<u8>, Failure> {
        self.parsed(key, "a small nonnegative integer")
    }

    pub fn bool(&self, key: &str) -> Result<bool, Failure> {
        Ok(self.parsed(key, "true or false")?.unwrap_or(false))
    }

    /// Effective values with their provenance, for the run manifest.
    pub fn echo(&self) -> BTreeMap<String, SettingEcho> {
        self.values
            .iter()
            .map(|(&key, (value, layer))| {
                (
                    key.to_string(),
                    SettingEcho {
                        value: value.clone(),
                        layer: *layer,
                    },
                )
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SettingEcho {
    pub value: String,
    pub layer: Layer,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_lines_parse_and_unknown_keys_are_rejected() {
        let mut settings = Settings::default();
        settings
            .read_file(
                Path::new("test.conf"),
                "# comment\n\ntau = 0.25\n  alpha=0.5\nbackend = rule-stub\n",
            )
            .unwrap();
        assert_eq!(settings.get("tau"), Some("0.25"));
        assert_eq!(settings.get("alpha"), Some("0.5"));
        assert_eq!(settings.get("backend"), Some("rule-stub"));

        let error = Settings::default()
            .read_file(Path::new("test.conf"), "taus = 0.25\n")
            .unwrap_err();
        assert_eq!(error.exit_code(), 3);
        assert!(error.to_string().contains("unknown key"));
        assert!(error.to_string().contains("test.conf:1"));
    }

    #[test]
    fn flags_override_file_values() {
        let mut settings = Settings::default();
        settings
            .read_file(Path::new("test.conf"), "tau = 0.25\nk = 3\n")
            .unwrap();
        settings.set_flag("tau", Some(0.4));
        settings.set_flag::<f64>("lambda", None);
        assert_eq!(settings.f64("tau").unwrap(), Some(0.4));
        assert_eq!(settings.usize("k").unwrap(), Some(3));
        assert_eq!(settings.f64("lambda").unwrap(), None);
        assert_eq!(settings.echo()["tau"].layer, Layer::Flag);
        assert_eq!(settings.echo()["k"].layer, Layer::File);
    }

    #[test]
    fn parse_errors_name_the_key_and_layer() {
        let mut settings = Settings::default();
        settings
            .read_file(Path::new("test.conf"), "k = three\n")
            .unwrap();
        let error = settings.usize("k").unwrap_err();
        assert!(error.to_string().contains("`k`"));
        assert!(error.to_string().contains("config file"));
    }
}
