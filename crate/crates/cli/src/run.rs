//! Output directory bookkeeping and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::{json, Value};

use crate::failure::{io_err, CliResult};

pub const MANIFEST: &str = "manifest.json";

pub struct Run {
    out: PathBuf,
    outputs: Vec<String>,
}

impl Run {
    pub fn create(out: &Path) -> CliResult<Self> {
        fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
        Ok(Self {
            out: crate::config::absolute(out),
            outputs: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.out
    }

    /// Path of an output file that a library call writes itself.
    pub fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| io_err(&path, e))
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(latlink::Error::from)?;
        text.push('\n');
        self.write(name, text)
    }

    /// Writes the manifest: the fully resolved config plus what was written.
    /// `created_unix` and `threads` describe the run, not its results.
    pub fn finish(mut self, command: &str, config: Value) -> CliResult<()> {
        self.outputs.sort();
        self.outputs.dedup();
        let created = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let manifest = json!({
            "tool": "latlink",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "out": self.out.to_string_lossy(),
            "config": config,
            "outputs": self.outputs,
            "threads": rayon::current_num_threads(),
            "created_unix": created,
        });
        let path = self.out.join(MANIFEST);
        let mut text = serde_json::to_string_pretty(&manifest).map_err(latlink::Error::from)?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| io_err(&path, e))
    }
}
