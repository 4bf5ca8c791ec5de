//! Atomic stage output and manifests.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{PipelineConfig, Stage, StageError};
use crate::text::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: impl Into<String>, bytes: &[u8]) -> Self {
        FileDigest { path: path.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
    }
}

/// Written last; its presence marks a complete stage. Contains no timestamps so reruns
/// with identical inputs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    pub config: PipelineConfig,
    pub template_checksums: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the stage directory.
    pub outputs: Vec<FileDigest>,
}

/// What a stage produced before anything touches its output directory.
#[derive(Debug, Default)]
pub(crate) struct Produced {
    pub inputs: Vec<FileDigest>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Produced {
    /// Reads an input file, recording its digest.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, StageError> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => StageError::MissingInput(path.to_path_buf()),
            _ => StageError::failed(format!("{}: {e}", path.display())),
        })?;
        self.inputs.push(FileDigest::of(path.display().to_string(), &bytes));
        Ok(bytes)
    }

    pub fn add(&mut self, name: &str, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.to_string(), bytes.into()));
    }
}

fn failed_marker(out_dir: &Path, stage: Stage) -> PathBuf {
    out_dir.join(format!("{}.FAILED", stage.as_str()))
}

pub(crate) fn commit(
    out_dir: &Path,
    stage: Stage,
    cfg: &PipelineConfig,
    produced: Produced,
) -> io::Result<StageManifest> {
    fs::create_dir_all(out_dir)?;
    let staging = out_dir.join(format!(".{}.staging", stage.as_str()));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    // A stale manifest must not vouch for half-replaced outputs.
    match fs::remove_file(out_dir.join(MANIFEST_FILE)) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
        _ => {}
    }

    let mut outputs = Vec::with_capacity(produced.files.len());
    for (name, bytes) in &produced.files {
        fs::write(staging.join(name), bytes)?;
        outputs.push(FileDigest::of(name.clone(), bytes));
    }
    let manifest = StageManifest {
        stage: stage.as_str().to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        template_checksums: crate::prompts::template_checksums()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        inputs: produced.inputs,
        outputs,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    text.push('\n');
    fs::write(staging.join(MANIFEST_FILE), text)?;

    for (name, _) in &produced.files {
        fs::rename(staging.join(name), out_dir.join(name))?;
    }
    fs::rename(staging.join(MANIFEST_FILE), out_dir.join(MANIFEST_FILE))?;
    fs::remove_dir_all(&staging)?;
    match fs::remove_file(failed_marker(out_dir, stage)) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e),
        _ => {}
    }
    Ok(manifest)
}

/// Best effort: the stage already failed, so secondary I/O errors are only logged.
pub(crate) fn mark_failed(out_dir: &Path, stage: Stage, err: &StageError) {
    let res = fs::create_dir_all(out_dir)
        .and_then(|_| fs::write(failed_marker(out_dir, stage), format!("{err}\n")))
        .and_then(|_| match fs::remove_file(out_dir.join(MANIFEST_FILE)) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e),
            _ => Ok(()),
        });
    if let Err(e) = res {
        log::warn!("could not record failure of {stage}: {e}");
    }
}
