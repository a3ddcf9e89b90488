//! Plain `key = value` run configuration. Lines starting with `#` are
//! comments. Every key has a default, so an empty file is valid.

use std::collections::BTreeMap;
use std::path::Path;

use biolite_core::model::ArchConfig;
use biolite_core::train::TrainConfig;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub arch: ArchConfig,
}

pub const KEYS: [&str; 29] = [
    "lr",
    "weight_decay",
    "batch_size",
    "epochs",
    "adam_beta1",
    "adam_beta2",
    "adam_eps",
    "plateau_patience",
    "plateau_factor",
    "plateau_min_delta",
    "lr_min",
    "early_stop_patience",
    "max_steps",
    "seed",
    "image_size",
    "clahe",
    "clahe_tiles",
    "clahe_clip",
    "augment",
    "hflip_prob",
    "rotation_deg",
    "brightness",
    "contrast_min",
    "contrast_max",
    "enc1",
    "enc2",
    "bottleneck",
    "dec1",
    "dec2",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse()
        .map_err(|_| CliError::Usage(format!("config key '{key}': cannot parse '{v}'")))
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("config key '{key}': expected on/off, got '{v}'"))),
    }
}

/// Parses `key = value` lines into ordered pairs.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>, CliError> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("{origin}:{}: expected key = value", no + 1)))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = RunConfig::default();
        for (k, v) in parse_pairs(&text, &path.display().to_string())? {
            cfg.set(&k, &v)?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), CliError> {
        let t = &mut self.train;
        let a = &mut self.arch;
        match key {
            "lr" => t.lr = num(key, v)?,
            "weight_decay" => t.weight_decay = num(key, v)?,
            "batch_size" => t.batch_size = num(key, v)?,
            "epochs" => t.max_epochs = num(key, v)?,
            "adam_beta1" => t.adam_beta1 = num(key, v)?,
            "adam_beta2" => t.adam_beta2 = num(key, v)?,
            "adam_eps" => t.adam_eps = num(key, v)?,
            "plateau_patience" => t.plateau_patience = num(key, v)?,
            "plateau_factor" => t.plateau_factor = num(key, v)?,
            "plateau_min_delta" => t.plateau_min_delta = num(key, v)?,
            "lr_min" => t.lr_min = num(key, v)?,
            "early_stop_patience" => t.early_stop_patience = num(key, v)?,
            "max_steps" => t.max_steps = if v == "none" { None } else { Some(num(key, v)?) },
            "seed" => t.seed = num(key, v)?,
            "image_size" => t.preprocess.size = num(key, v)?,
            "clahe" => {
                t.preprocess.clahe = flag(key, v)?.then(|| t.preprocess.clahe.unwrap_or_default())
            }
            "clahe_tiles" => {
                let (x, y) = v.split_once('x').ok_or_else(|| {
                    CliError::Usage(format!("config key '{key}': expected COLSxROWS, got '{v}'"))
                })?;
                let tiles = (num(key, x)?, num(key, y)?);
                if let Some(c) = &mut t.preprocess.clahe {
                    c.tiles = tiles;
                }
            }
            "clahe_clip" => {
                let clip = num(key, v)?;
                if let Some(c) = &mut t.preprocess.clahe {
                    c.clip_limit = clip;
                }
            }
            "augment" => t.augment.enabled = flag(key, v)?,
            "hflip_prob" => t.augment.hflip_prob = num(key, v)?,
            "rotation_deg" => {
                let d: f64 = num(key, v)?;
                t.augment.rot_deg_range = (-d.abs(), d.abs());
            }
            "brightness" => t.augment.brightness_delta = num(key, v)?,
            "contrast_min" => t.augment.contrast_range.0 = num(key, v)?,
            "contrast_max" => t.augment.contrast_range.1 = num(key, v)?,
            "enc1" => a.enc_channels[0] = num(key, v)?,
            "enc2" => a.enc_channels[1] = num(key, v)?,
            "bottleneck" => a.bottleneck_channels = num(key, v)?,
            "dec1" => a.dec_channels[0] = num(key, v)?,
            "dec2" => a.dec_channels[1] = num(key, v)?,
            other => {
                return Err(CliError::Usage(format!(
                    "unknown config key '{other}' (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Every key with its resolved value.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let t = &self.train;
        let a = &self.arch;
        let clahe = t.preprocess.clahe.unwrap_or_default();
        let vals: [String; 29] = [
            t.lr.to_string(),
            t.weight_decay.to_string(),
            t.batch_size.to_string(),
            t.max_epochs.to_string(),
            t.adam_beta1.to_string(),
            t.adam_beta2.to_string(),
            t.adam_eps.to_string(),
            t.plateau_patience.to_string(),
            t.plateau_factor.to_string(),
            t.plateau_min_delta.to_string(),
            t.lr_min.to_string(),
            t.early_stop_patience.to_string(),
            t.max_steps.map_or("none".into(), |s| s.to_string()),
            t.seed.to_string(),
            t.preprocess.size.to_string(),
            if t.preprocess.clahe.is_some() { "on" } else { "off" }.into(),
            format!("{}x{}", clahe.tiles.0, clahe.tiles.1),
            clahe.clip_limit.to_string(),
            if t.augment.enabled { "on" } else { "off" }.into(),
            t.augment.hflip_prob.to_string(),
            t.augment.rot_deg_range.1.to_string(),
            t.augment.brightness_delta.to_string(),
            t.augment.contrast_range.0.to_string(),
            t.augment.contrast_range.1.to_string(),
            a.enc_channels[0].to_string(),
            a.enc_channels[1].to_string(),
            a.bottleneck_channels.to_string(),
            a.dec_channels[0].to_string(),
            a.dec_channels[1].to_string(),
        ];
        KEYS.iter().map(|k| k.to_string()).zip(vals).collect()
    }

    /// Renders a config file that reproduces this configuration.
    pub fn render(&self) -> String {
        let mut s = String::new();
        for k in KEYS {
            s.push_str(&format!("{k} = {}\n", self.resolved()[k]));
        }
        s
    }
}
