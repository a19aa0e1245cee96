//! Run configuration: `key = value` files overlaid with command-line flags.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use valb::io_util::write_atomic;
use valb::train::SelectionMetric;
use valb::{Hyperparams, TagMode, TrainConfig};

use crate::UsageError;

/// Keys accepted in config files and their defaults.
pub const KEYS: [(&str, &str); 18] = [
    ("epochs", "30"),
    ("batch_size", "8"),
    ("learning_rate", "0.001"),
    ("gradient_clip_norm", "5"),
    ("seed", "42"),
    ("mode", "multiclass"),
    ("freeze_word_embeddings", "false"),
    ("selection_metric", "auto"),
    ("word_dim", "100"),
    ("char_emb_dim", "300"),
    ("char_filters", "50"),
    ("char_kernel", "3"),
    ("lstm_hidden", "128"),
    ("dropout", "0.2"),
    ("max_word_len", "30"),
    ("use_chars", "true"),
    ("min_freq", "1"),
    ("embeddings", ""),
];

/// Parses a config file: one `key = value` per line, `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, UsageError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| UsageError(format!("config line {}: expected `key = value`", i + 1)))?;
        let k = k.trim();
        if !KEYS.iter().any(|(name, _)| *name == k) {
            return Err(UsageError(format!("config line {}: unknown key `{k}`", i + 1)));
        }
        out.insert(k.to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Fully resolved settings of a training run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl RunConfig {
    /// Defaults, then the config file, then `overrides` (flags given on the
    /// command line).
    pub fn resolve(file: Option<&Path>, overrides: &[(&str, Option<String>)]) -> anyhow::Result<RunConfig> {
        let mut values: BTreeMap<String, String> =
            KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
            values.extend(parse_config(&text)?);
        }
        for (k, v) in overrides {
            if let Some(v) = v {
                values.insert(k.to_string(), v.clone());
            }
        }
        let rc = RunConfig { values };
        rc.train_config()?;
        rc.hyperparams()?;
        rc.min_freq()?;
        Ok(rc)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, UsageError>
    where
        T::Err: Display,
    {
        let v = &self.values[key];
        v.parse().map_err(|e| UsageError(format!("invalid value `{v}` for {key}: {e}")))
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn mode(&self) -> Result<TagMode, UsageError> {
        self.get("mode")
    }

    pub fn train_config(&self) -> Result<TrainConfig, UsageError> {
        let metric = match self.values["selection_metric"].as_str() {
            "auto" => None,
            _ => Some(self.get::<SelectionMetric>("selection_metric")?),
        };
        let cfg = TrainConfig {
            epochs: self.get("epochs")?,
            batch_size: self.get("batch_size")?,
            learning_rate: self.get("learning_rate")?,
            gradient_clip_norm: self.get("gradient_clip_norm")?,
            seed: self.get("seed")?,
            mode: self.mode()?,
            freeze_word_embeddings: self.get("freeze_word_embeddings")?,
            selection_metric: metric,
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        Ok(cfg)
    }

    pub fn hyperparams(&self) -> Result<Hyperparams, UsageError> {
        let hp = Hyperparams {
            word_dim: self.get("word_dim")?,
            char_emb_dim: self.get("char_emb_dim")?,
            char_filters: self.get("char_filters")?,
            char_kernel: self.get("char_kernel")?,
            lstm_hidden: self.get("lstm_hidden")?,
            dropout: self.get("dropout")?,
            n_tags: self.mode()?.tags().len(),
            max_word_len: self.get("max_word_len")?,
            use_chars: self.get("use_chars")?,
        };
        hp.validate().map_err(|e| UsageError(e.to_string()))?;
        if !(0.0..1.0).contains(&hp.dropout) {
            return Err(UsageError("dropout must be in [0, 1)".into()));
        }
        Ok(hp)
    }

    pub fn min_freq(&self) -> Result<usize, UsageError> {
        self.get("min_freq")
    }

    pub fn embeddings(&self) -> Option<PathBuf> {
        Some(&self.values["embeddings"]).filter(|s| !s.is_empty()).map(PathBuf::from)
    }

    pub fn render(&self, command: &str, paths: &[(&str, &Path)]) -> String {
        let mut out = format!("# valb {command}\n");
        for (k, p) in paths {
            out.push_str(&format!("{k} = {}\n", p.display()));
        }
        for (k, v) in &self.values {
            out.push_str(&format!("{k} = {v}\n"));
        }
        out
    }
}

/// Writes `run-config.txt` next to every output file, once per directory.
pub fn echo_run_config(text: &str, outputs: &[&Path]) -> valb::Result<()> {
    let mut dirs: Vec<PathBuf> = outputs
        .iter()
        .map(|p| match p.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        })
        .collect();
    dirs.sort();
    dirs.dedup();
    for d in dirs {
        write_atomic(&d.join("run-config.txt"), text.as_bytes())?;
    }
    Ok(())
}
