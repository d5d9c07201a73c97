//! Run configuration: flat `key = value` files plus command-line overrides.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kv;
use crate::model::{ModelSpec, SPEC_KEYS};
use crate::train::{Schedule, TrainConfig};

/// Keys accepted besides the model-spec keys.
pub const RUN_KEYS: [&str; 14] = [
    "name",
    "runs_dir",
    "seed",
    "total_iters",
    "schedule",
    "batch",
    "patch",
    "train_dir",
    "val_dir",
    "checkpoint_interval",
    "init_checkpoint",
    "skip",
    "resume",
    "crop",
];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn check_key(k: &str) -> Result<()> {
    if SPEC_KEYS.contains(&k) || RUN_KEYS.contains(&k) {
        Ok(())
    } else {
        Err(Error::Config(format!("unknown key '{k}'")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig> {
        let values = kv::parse(text)?;
        for k in values.keys() {
            check_key(k)?;
        }
        Ok(RunConfig { values })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key)?;
        self.values.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Applies a `key=value` override; overrides win over file values.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    /// True when any model-spec key was given explicitly.
    pub fn has_spec_keys(&self) -> bool {
        SPEC_KEYS.iter().any(|k| self.values.contains_key(*k))
    }

    fn parse_num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'"))),
        }
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).filter(|v| !v.is_empty()).map(PathBuf::from)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec_kv: BTreeMap<String, String> = self
            .values
            .iter()
            .filter(|(k, _)| SPEC_KEYS.contains(&k.as_str()))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        ModelSpec::from_kv(&spec_kv)
    }

    pub fn name(&self) -> &str {
        self.get("name").unwrap_or("default")
    }

    pub fn run_dir(&self) -> PathBuf {
        Path::new(self.get("runs_dir").unwrap_or("runs")).join(self.name())
    }

    pub fn seed(&self) -> Result<u64> {
        self.parse_num("seed", 0)
    }

    pub fn val_dir(&self) -> Option<PathBuf> {
        self.path("val_dir")
    }

    pub fn crop(&self, scale: usize) -> Result<usize> {
        self.parse_num("crop", scale)
    }

    pub fn skip_prefixes(&self) -> Vec<String> {
        self.get("skip")
            .map(|s| {
                s.split(',')
                    .map(str::trim)
                    .filter(|p| !p.is_empty())
                    .map(String::from)
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let spec = self.model_spec()?;
        let train_dir = self
            .path("train_dir")
            .ok_or_else(|| Error::Config("train_dir is required for training".into()))?;
        let mut cfg = TrainConfig::new(spec, train_dir, self.run_dir());
        cfg.seed = self.seed()?;
        cfg.total_iters = self.parse_num("total_iters", cfg.total_iters)?;
        if let Some(s) = self.get("schedule") {
            cfg.schedule = s.parse::<Schedule>()?;
        }
        cfg.batch = self.parse_num("batch", cfg.batch)?;
        cfg.patch = self.parse_num("patch", cfg.patch)?;
        cfg.checkpoint_interval = self.parse_num("checkpoint_interval", cfg.checkpoint_interval)?;
        cfg.init_checkpoint = self.path("init_checkpoint");
        cfg.skip_prefixes = self.skip_prefixes();
        cfg.resume = self.path("resume");
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every setting with defaults filled in, as written to `config.resolved`.
    pub fn resolved(&self) -> Result<String> {
        let mut out = self.values.clone();
        let spec = self.model_spec()?;
        out.extend(spec.to_kv());
        out.insert("name".into(), self.name().into());
        out.insert(
            "runs_dir".into(),
            self.get("runs_dir").unwrap_or("runs").into(),
        );
        out.insert("seed".into(), self.seed()?.to_string());
        out.insert("crop".into(), self.crop(spec.scale)?.to_string());
        if self.get("train_dir").is_some() {
            let t = self.train_config()?;
            out.insert("total_iters".into(), t.total_iters.to_string());
            out.insert("schedule".into(), t.schedule.to_string());
            out.insert("batch".into(), t.batch.to_string());
            out.insert("patch".into(), t.patch.to_string());
            out.insert("checkpoint_interval".into(), t.checkpoint_interval.to_string());
        }
        Ok(kv::render(&out))
    }
}
