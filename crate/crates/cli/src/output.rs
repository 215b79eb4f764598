//! Writing artifacts with their provenance.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliError;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Stamped onto every artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub code_version: String,
}

impl Provenance {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Provenance {
            config_hash,
            seed,
            code_version: CODE_VERSION.to_string(),
        }
    }

    pub fn comment_line(&self) -> String {
        format!(
            "config_hash={},seed={},code_version={}",
            self.config_hash, self.seed, self.code_version
        )
    }

    /// CSV with a leading `#` provenance line.
    pub fn csv(&self, body: &str) -> String {
        format!("# {}\n{body}", self.comment_line())
    }

    /// SVG with the provenance as an XML comment right after any XML declaration.
    pub fn svg(&self, svg: &str) -> String {
        let comment = format!("<!-- {} -->\n", self.comment_line());
        match svg
            .strip_prefix("<?xml")
            .and_then(|rest| rest.find("?>").map(|i| i + 2 + 5))
        {
            Some(end) => format!(
                "{}\n{comment}{}",
                &svg[..end],
                svg[end..].trim_start_matches('\n')
            ),
            None => format!("{comment}{svg}"),
        }
    }

    /// Plain text with a trailing provenance line.
    pub fn text(&self, body: &str) -> String {
        let sep = if body.ends_with('\n') { "" } else { "\n" };
        format!("{body}{sep}\n{}\n", self.comment_line())
    }
}

pub fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io("create", dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io("write", path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    write(path, &text)
}

/// Exclusive advisory lock on a model store directory, released on drop.
pub struct StoreLock {
    _file: File,
    path: PathBuf,
}

impl StoreLock {
    pub const FILE: &'static str = ".lock";

    pub fn acquire(store: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(store).map_err(|e| CliError::io("create", store, e))?;
        let path = store.join(Self::FILE);
        let file = File::options()
            .create(true)
            .truncate(false)
            .write(true)
            .open(&path)
            .map_err(|e| CliError::io("open", &path, e))?;
        file.lock().map_err(|e| CliError::io("lock", &path, e))?;
        log::debug!("locked {}", path.display());
        Ok(StoreLock { _file: file, path })
    }
}

impl Drop for StoreLock {
    fn drop(&mut self) {
        log::debug!("released {}", self.path.display());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::new("ab".into(), 3)
    }

    #[test]
    fn csv_gets_comment_line() {
        let s = prov().csv("a,b\n1,2\n");
        let mut lines = s.lines();
        assert_eq!(
            lines.next().unwrap(),
            format!("# config_hash=ab,seed=3,code_version={CODE_VERSION}")
        );
        assert_eq!(lines.next().unwrap(), "a,b");
    }

    #[test]
    fn svg_comment_follows_declaration() {
        let s = prov().svg("<?xml version=\"1.0\"?>\n<svg></svg>");
        assert!(
            s.starts_with("<?xml version=\"1.0\"?>\n<!-- config_hash=ab"),
            "{s}"
        );
        assert!(s.ends_with("<svg></svg>"));
        let s = prov().svg("<svg></svg>");
        assert!(s.starts_with("<!-- config_hash=ab"));
    }

    #[test]
    fn lock_can_be_retaken_after_drop() {
        let dir = tempfile::tempdir().unwrap();
        drop(StoreLock::acquire(dir.path()).unwrap());
        let _again = StoreLock::acquire(dir.path()).unwrap();
        assert!(dir.path().join(StoreLock::FILE).is_file());
    }
}
