//! Effective settings: command-line flags over the TOML config file over
//! built-in defaults. `TABEMB_CACHE_DIR` sits between flags and the file.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use tabemb::codec::{sha256, short_hex};
use tabemb::embed::{EmbeddingBackend, LocalHashBackend, RemoteBackend, RemoteConfig};
use tabemb::nn::Variant;
use tabemb::pipeline::TrainConfig;
use tabemb::table::Task;
use tabemb::{Error, Result};

pub const CACHE_DIR_ENV: &str = "TABEMB_CACHE_DIR";
pub const DEFAULT_DIM: usize = 64;

/// Layout of the config file. Every key is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    #[serde(default)]
    pub embed: EmbedSection,
    #[serde(default)]
    pub train: TrainSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedSection {
    pub backend: Option<String>,
    pub dim: Option<usize>,
    pub m: Option<usize>,
    pub block_size: Option<usize>,
    pub cache_dir: Option<PathBuf>,
    pub base_url: Option<String>,
    pub model: Option<String>,
    pub api_key: Option<String>,
    pub max_attempts: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub request_batch: Option<usize>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub weight_decay: Option<f64>,
    pub depth: Option<usize>,
    pub heads: Option<usize>,
    pub hidden: Option<usize>,
    pub variant: Option<String>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            source_name: path.display().to_string(),
            line: 0,
            message: e.to_string(),
        })
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct EmbedArgs {
    /// Embedding backend: `local` or `remote`.
    #[arg(long)]
    pub backend: Option<String>,
    /// Embedding width.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Cells sampled per column.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Partition wide tables into blocks of at most this many columns.
    #[arg(long)]
    pub block_size: Option<usize>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Remote service root, e.g. `http://localhost:8080/v1`.
    #[arg(long)]
    pub base_url: Option<String>,
    /// Model name sent to the remote service.
    #[arg(long)]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Message-passing layers.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// gat, gcn, ggnn or none.
    #[arg(long)]
    pub variant: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendSettings {
    Local { dim: usize },
    Remote { base_url: String, model: String, dim: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbedSettings {
    pub backend: BackendSettings,
    pub m: usize,
    pub seed: u64,
    pub block_size: Option<usize>,
    #[serde(skip)]
    pub cache_dir: Option<PathBuf>,
    #[serde(skip)]
    pub remote_extra: RemoteExtra,
}

/// Remote client knobs that do not change the vectors returned.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RemoteExtra {
    pub api_key: Option<String>,
    pub max_attempts: Option<u32>,
    pub backoff_ms: Option<u64>,
    pub request_batch: Option<usize>,
    pub timeout_secs: Option<u64>,
}

impl EmbedSettings {
    pub fn resolve(flags: &EmbedArgs, file: &FileConfig) -> Result<Self> {
        let f = &file.embed;
        let kind = flags.backend.clone().or_else(|| f.backend.clone()).unwrap_or_else(|| "local".into());
        let dim = flags.dim.or(f.dim);
        let backend = match kind.to_ascii_lowercase().as_str() {
            "local" => BackendSettings::Local {
                dim: dim.unwrap_or(DEFAULT_DIM),
            },
            "remote" => {
                let base_url = flags
                    .base_url
                    .clone()
                    .or_else(|| f.base_url.clone())
                    .ok_or_else(|| Error::invalid("remote backend needs --base-url or embed.base_url"))?;
                let model = flags
                    .model
                    .clone()
                    .or_else(|| f.model.clone())
                    .ok_or_else(|| Error::invalid("remote backend needs --model or embed.model"))?;
                let dim = dim.ok_or_else(|| Error::invalid("remote backend needs --dim or embed.dim"))?;
                BackendSettings::Remote { base_url, model, dim }
            }
            other => return Err(Error::invalid(format!("unknown backend {other:?} (expected local or remote)"))),
        };
        let m = flags.m.or(f.m).unwrap_or(25);
        if m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        let cache_dir = flags
            .cache_dir
            .clone()
            .or_else(|| std::env::var_os(CACHE_DIR_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
            .or_else(|| f.cache_dir.clone());
        Ok(Self {
            backend,
            m,
            seed: flags.seed.or(file.seed).unwrap_or(0),
            block_size: flags.block_size.or(f.block_size),
            cache_dir,
            remote_extra: RemoteExtra {
                api_key: f.api_key.clone(),
                max_attempts: f.max_attempts,
                backoff_ms: f.backoff_ms,
                request_batch: f.request_batch,
                timeout_secs: f.timeout_secs,
            },
        })
    }

    pub fn pool_params(&self) -> tabemb::colgraph::PoolParams {
        tabemb::colgraph::PoolParams {
            m: self.m,
            seed: self.seed,
            block_size: self.block_size,
        }
    }

    pub fn backend(&self) -> Result<Box<dyn EmbeddingBackend>> {
        match &self.backend {
            BackendSettings::Local { dim } => Ok(Box::new(LocalHashBackend::new(*dim)?)),
            BackendSettings::Remote { base_url, model, dim } => {
                let mut cfg = RemoteConfig::new(base_url.clone(), model.clone(), *dim);
                let x = &self.remote_extra;
                cfg.api_key = x.api_key.clone();
                if let Some(v) = x.max_attempts {
                    cfg.max_attempts = v;
                }
                if let Some(v) = x.backoff_ms {
                    cfg.backoff_ms = v;
                }
                if let Some(v) = x.request_batch {
                    cfg.batch_size = v;
                }
                if let Some(v) = x.timeout_secs {
                    cfg.timeout_secs = v;
                }
                Ok(Box::new(RemoteBackend::new(cfg)?))
            }
        }
    }
}

pub fn resolve_train(task: Task, flags: &TrainArgs, file: &FileConfig, embed: &EmbedSettings) -> Result<TrainConfig> {
    let f = &file.train;
    let d = TrainConfig::new(task);
    let variant = match flags.variant.as_ref().or(f.variant.as_ref()) {
        Some(v) => v.parse::<Variant>()?,
        None => d.variant,
    };
    let config = TrainConfig {
        task,
        epochs: flags.epochs.or(f.epochs).unwrap_or(d.epochs),
        batch_size: flags.batch_size.or(f.batch_size).unwrap_or(d.batch_size),
        lr: flags.lr.or(f.lr).unwrap_or(d.lr),
        weight_decay: flags.weight_decay.or(f.weight_decay).unwrap_or(d.weight_decay),
        m: embed.m,
        depth: flags.depth.or(f.depth).unwrap_or(d.depth),
        heads: flags.heads.or(f.heads).unwrap_or(d.heads),
        hidden: flags.hidden.or(f.hidden).unwrap_or(d.hidden),
        variant,
        seed: embed.seed,
        block_size: embed.block_size,
    };
    config.validate()?;
    Ok(config)
}

/// Short hash over every setting that affects a run's outputs.
pub fn run_hash(parts: &[&[u8]]) -> String {
    let mut buf = Vec::new();
    for p in parts {
        buf.extend_from_slice(&(p.len() as u64).to_le_bytes());
        buf.extend_from_slice(p);
    }
    short_hex(&sha256(&buf))
}

pub fn train_config_bytes(c: &TrainConfig) -> Vec<u8> {
    format!(
        "task={} epochs={} batch={} lr={:e} wd={:e} m={} depth={} heads={} hidden={} variant={} seed={} block={:?}",
        c.task, c.epochs, c.batch_size, c.lr, c.weight_decay, c.m, c.depth, c.heads, c.hidden, c.variant, c.seed, c.block_size
    )
    .into_bytes()
}

pub fn embed_settings_bytes(e: &EmbedSettings) -> Vec<u8> {
    serde_json::to_vec(e).expect("settings serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_over_defaults() {
        let file: FileConfig = toml::from_str("seed = 3\n[embed]\nm = 10\ndim = 32\n[train]\nepochs = 7\nvariant = \"gcn\"\n").unwrap();
        let flags = EmbedArgs {
            m: Some(5),
            ..EmbedArgs::default()
        };
        let e = EmbedSettings::resolve(&flags, &file).unwrap();
        assert_eq!((e.m, e.seed), (5, 3));
        assert_eq!(e.backend, BackendSettings::Local { dim: 32 });
        let t = resolve_train(Task::Cta, &TrainArgs::default(), &file, &e).unwrap();
        assert_eq!((t.epochs, t.variant, t.hidden), (7, Variant::Gcn, 256));
        let t = resolve_train(
            Task::Cta,
            &TrainArgs {
                epochs: Some(2),
                ..TrainArgs::default()
            },
            &file,
            &e,
        )
        .unwrap();
        assert_eq!(t.epochs, 2);
    }

    #[test]
    fn unknown_keys_and_incomplete_remote_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[embed]\nbogus = 1\n").is_err());
        let file = FileConfig::default();
        let flags = EmbedArgs {
            backend: Some("remote".into()),
            ..EmbedArgs::default()
        };
        assert!(EmbedSettings::resolve(&flags, &file).unwrap_err().is_usage());
    }

    #[test]
    fn hash_changes_with_any_setting() {
        let e = EmbedSettings::resolve(&EmbedArgs::default(), &FileConfig::default()).unwrap();
        let a = TrainConfig::new(Task::Cta);
        let b = TrainConfig { lr: 2e-3, ..a.clone() };
        assert_ne!(run_hash(&[&train_config_bytes(&a)]), run_hash(&[&train_config_bytes(&b)]));
        let e2 = EmbedSettings { m: 5, ..e.clone() };
        assert_ne!(embed_settings_bytes(&e), embed_settings_bytes(&e2));
    }
}
