use std::fs;
use std::path::{Path, PathBuf};

use fdclass::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub files: Vec<FileEntry>,
}

fn collect(dir: &Path, root: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let p = entry.path();
        if p.is_dir() {
            collect(&p, root, out)?;
        } else if p.strip_prefix(root).map(|r| r != Path::new(MANIFEST)).unwrap_or(false) {
            out.push(p);
        }
    }
    Ok(())
}

/// Rewrite `dir/manifest.json` listing every other file under `dir`.
pub fn write_manifest(dir: &Path) -> Result<()> {
    let mut paths = Vec::new();
    collect(dir, dir, &mut paths)?;
    let mut files = paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).map_err(io_err(p))?;
            let rel = p.strip_prefix(dir).unwrap_or(p);
            Ok(FileEntry {
                path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    let m = Manifest {
        tool: "fdclass".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        files,
    };
    let json = serde_json::to_string_pretty(&m).map_err(|e| Error::Format(e.to_string()))?;
    write_file(&dir.join(MANIFEST), format!("{json}\n").as_bytes())
}
