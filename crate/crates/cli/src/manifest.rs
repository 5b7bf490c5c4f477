use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliResult;

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    /// SHA-256 over `blob <len>\0<content>`, the git object framing.
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Manifest<C: Serialize> {
    pub command: &'static str,
    pub version: &'static str,
    pub config: C,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<PathBuf>,
    pub threads: usize,
    pub wall_time_secs: f64,
    pub finished_at: String,
}

pub fn hash_file(path: &Path) -> CliResult<InputHash> {
    let content = std::fs::read(path)?;
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(&content);
    Ok(InputHash {
        path: path.to_path_buf(),
        sha256: to_hex(&h.finalize()),
        bytes: content.len() as u64,
    })
}

pub fn to_hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write<C: Serialize>(
    path: &Path,
    command: &'static str,
    config: C,
    inputs: &[&Path],
    outputs: Vec<PathBuf>,
    threads: usize,
    started: Instant,
) -> CliResult<()> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs: inputs.iter().map(|p| hash_file(p)).collect::<CliResult<_>>()?,
        outputs,
        threads,
        wall_time_secs: started.elapsed().as_secs_f64(),
        finished_at: chrono::Utc::now().to_rfc3339(),
    };
    write_json(path, &manifest)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> CliResult<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    std::io::Write::write_all(&mut w, b"\n")?;
    Ok(())
}

/// `base` with `suffix` appended to its file name: `ck.sci` -> `ck.sci.labels.json`.
pub fn sidecar(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push(suffix);
    base.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_appends_to_file_name() {
        assert_eq!(
            sidecar(Path::new("out/ck.sci"), ".labels.json"),
            PathBuf::from("out/ck.sci.labels.json")
        );
    }

    #[test]
    fn hash_matches_git_blob_framing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x");
        std::fs::write(&path, "hello\n").unwrap();
        let h = hash_file(&path).unwrap();
        assert_eq!(h.bytes, 6);
        // `git hash-object --object-format=sha256` of "hello\n"
        assert_eq!(
            h.sha256,
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
    }
}
