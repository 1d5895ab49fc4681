use anyhow::{Context, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::Command;

/// Output directory plus the list of files written into it.
pub struct OutDir {
    root: PathBuf,
    files: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), files: Vec::new() })
    }

    /// Path for a new output file, recorded in the manifest.
    pub fn file(&mut self, name: &str) -> PathBuf {
        self.files.push(name.to_string());
        self.root.join(name)
    }

    pub fn csv(&mut self, name: &str) -> Result<csv::Writer<std::fs::File>> {
        let path = self.file(name);
        csv::Writer::from_path(&path).with_context(|| format!("creating {}", path.display()))
    }

    pub fn finish<C: Serialize, S: Serialize>(mut self, command: &str, config: &C, seed: u64, summary: S) -> Result<()> {
        let path = self.file("manifest.json");
        let manifest = Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            git_hash: git_hash(),
            seed,
            config,
            summary,
            outputs: &self.files,
        };
        let f = std::fs::File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(f, &manifest)?;
        Ok(())
    }
}

#[derive(Serialize)]
struct Manifest<'a, C, S> {
    command: &'a str,
    version: &'a str,
    git_hash: String,
    seed: u64,
    config: &'a C,
    summary: S,
    outputs: &'a [String],
}

/// HEAD of the working directory's repository, else of the source tree.
fn git_hash() -> String {
    let rev = |dir: &str| {
        Command::new("git")
            .args(["-C", dir, "rev-parse", "HEAD"])
            .output()
            .ok()
            .filter(|o| o.status.success())
            .and_then(|o| String::from_utf8(o.stdout).ok())
            .map(|s| s.trim().to_string())
    };
    rev(".").or_else(|| rev(env!("CARGO_MANIFEST_DIR"))).unwrap_or_else(|| "unknown".into())
}
