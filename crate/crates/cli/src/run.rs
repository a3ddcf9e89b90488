use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "BIOLITE_OUT_DIR";

/// `--out` if given, else `$BIOLITE_OUT_DIR`, else `runs/<command>`.
pub fn out_dir(flag: Option<&Path>, command: &str) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => Path::new("runs").join(command),
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        CliError::Core(biolite_core::Error::Io {
            path: dir.display().to_string(),
            source: e,
        })
    })
}

fn now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Provenance record written next to a command's artifacts, first when the
/// command starts and again when it finishes.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: BTreeMap<String, String>,
    pub seed: u64,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: String,
    pub outputs: Vec<String>,
    #[serde(skip)]
    path: PathBuf,
}

impl RunManifest {
    pub fn start(
        dir: &Path,
        command: &str,
        seed: u64,
        config: BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let m = RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: now(),
            finished_unix: None,
            status: "running".into(),
            outputs: Vec::new(),
            path: dir.join("run.json"),
        };
        m.write()?;
        Ok(m)
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.finished_unix = Some(now());
        self.status = "ok".into();
        self.write()
    }

    fn write(&self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::Core(biolite_core::Error::Internal(e.to_string())))?;
        write_file(&self.path, text.as_bytes())
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| {
        CliError::Core(biolite_core::Error::Io {
            path: path.display().to_string(),
            source: e,
        })
    })
}
