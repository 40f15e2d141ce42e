use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dpacheck::digest::{file_digest, sha256_hex};
use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

/// Written next to every artifact. Holds no timestamps or output paths so
/// that identical runs produce identical manifests.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: Value,
    pub config_digest: String,
    pub inputs: BTreeMap<String, InputRecord>,
    pub outputs: BTreeMap<String, String>,
}

/// Collects inputs and outputs of one command run.
pub struct Artifacts {
    dir: PathBuf,
    manifest_name: String,
    manifest: Manifest,
}

impl Artifacts {
    fn new(
        command: &str,
        seed: Option<u64>,
        config: Value,
        dir: PathBuf,
        manifest_name: String,
    ) -> Self {
        let config_digest = sha256_hex(config.to_string().as_bytes());
        Artifacts {
            dir,
            manifest_name,
            manifest: Manifest {
                command: command.into(),
                tool_version: dpacheck::TOOL_VERSION.into(),
                seed,
                config,
                config_digest,
                inputs: BTreeMap::new(),
                outputs: BTreeMap::new(),
            },
        }
    }

    /// Outputs go into `dir`, manifest as `dir/manifest.json`.
    pub fn in_dir(
        command: &str,
        seed: Option<u64>,
        config: Value,
        dir: &Path,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self::new(
            command,
            seed,
            config,
            dir.to_path_buf(),
            "manifest.json".into(),
        ))
    }

    /// A single output file; manifest as `<file>.manifest.json`.
    pub fn for_file(
        command: &str,
        seed: Option<u64>,
        config: Value,
        file: &Path,
    ) -> Result<Self, CliError> {
        let dir = match file.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        let name = file
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(Self::new(
            command,
            seed,
            config,
            dir,
            format!("{name}.manifest.json"),
        ))
    }

    /// Replaces the config once it is fully resolved.
    pub fn with_config(mut self, seed: Option<u64>, config: Value) -> Self {
        self.manifest.config_digest = sha256_hex(config.to_string().as_bytes());
        self.manifest.config = config;
        self.manifest.seed = seed;
        self
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        let sha256 = if path.is_dir() {
            dir_digest(path)?
        } else {
            file_digest(path)?
        };
        self.manifest.inputs.insert(
            role.into(),
            InputRecord {
                path: path.display().to_string(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.manifest.outputs.insert(name.into(), sha256_hex(bytes));
        Ok(path)
    }

    /// Records a file some other code wrote under the output directory.
    pub fn record(&mut self, name: &str) -> Result<(), CliError> {
        let d = file_digest(&self.dir.join(name))?;
        self.manifest.outputs.insert(name.into(), d);
        Ok(())
    }

    pub fn finish(self) -> Result<PathBuf, CliError> {
        let path = self.dir.join(&self.manifest_name);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Digest over the sorted (name, digest) list of files directly in `dir`.
fn dir_digest(dir: &Path) -> Result<String, CliError> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut all = String::new();
    for p in names {
        all.push_str(&format!(
            "{}\t{}\n",
            p.file_name().unwrap_or_default().to_string_lossy(),
            file_digest(&p)?
        ));
    }
    Ok(sha256_hex(all.as_bytes()))
}
