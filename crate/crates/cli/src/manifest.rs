//! Run manifests: what a command read, what it wrote, and how to run it
//! again.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use polsum_core::util::sha256_hex;
use serde::{Deserialize, Serialize};

/// Flags whose values are file-system paths.
pub const PATH_FLAGS: [&str; 6] = ["--out", "--teb", "--config", "--template", "--annotations", "--manifest"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<FileDigest> {
        let data = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(FileDigest {
            path: path.to_path_buf(),
            sha256: sha256_hex(&data),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Arguments after the program name, with path values made absolute.
    pub args: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    /// The `--out` target; every output lives at or under it.
    pub out: PathBuf,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

impl RunManifest {
    /// Where the manifest for `out` is written.
    pub fn path_for(out: &Path) -> PathBuf {
        if out.is_dir() {
            out.join("manifest.json")
        } else {
            let mut name = out.as_os_str().to_owned();
            name.push(".manifest.json");
            PathBuf::from(name)
        }
    }

    pub fn save(&self) -> Result<PathBuf> {
        let path = Self::path_for(&self.out);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<RunManifest> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// The same arguments with the `--out` value replaced.
    pub fn args_with_out(&self, out: &Path) -> Vec<String> {
        let mut args = self.args.clone();
        if let Some(i) = args.iter().position(|a| a == "--out") {
            if let Some(v) = args.get_mut(i + 1) {
                *v = out.display().to_string();
            }
        }
        args
    }
}

pub fn absolute(path: &Path) -> PathBuf {
    std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf())
}

/// Splits `--flag=value` and makes path-valued flags absolute so the
/// argument list can be re-run from any directory.
pub fn normalize_args(args: &[String]) -> Vec<String> {
    let mut split = Vec::with_capacity(args.len());
    for a in args {
        match a.split_once('=') {
            Some((flag, value)) if flag.starts_with("--") => {
                split.push(flag.to_string());
                split.push(value.to_string());
            }
            _ => split.push(a.clone()),
        }
    }
    let mut out = Vec::with_capacity(split.len());
    let mut iter = split.into_iter();
    while let Some(a) = iter.next() {
        let is_path = PATH_FLAGS.contains(&a.as_str());
        out.push(a);
        if is_path {
            if let Some(v) = iter.next() {
                out.push(absolute(Path::new(&v)).display().to_string());
            }
        }
    }
    out
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}
