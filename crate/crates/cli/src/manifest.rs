//! The `manifest.txt` written alongside every run's outputs: resolved
//! configuration, seeds, paths, tool version, and wall-clock duration, as
//! `key=value` lines in insertion order. Rerunning with the same flags
//! reproduces every line except `duration_ms`.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::Path;
use std::time::Instant;

pub struct Manifest {
    started: Instant,
    entries: Vec<(String, String)>,
}

impl Manifest {
    pub fn new(subcommand: &str) -> Self {
        let mut m = Manifest {
            started: Instant::now(),
            entries: Vec::new(),
        };
        m.push("subcommand", subcommand);
        m.push("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn push(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn push_path(&mut self, key: &str, path: &Path) {
        self.push(key, path.display());
    }

    /// Appends the elapsed time and writes `<dir>/manifest.txt`.
    pub fn write(mut self, dir: &Path) -> io::Result<()> {
        self.push("duration_ms", self.started.elapsed().as_millis());
        let mut text = String::new();
        for (key, value) in &self.entries {
            text.push_str(key);
            text.push('=');
            text.push_str(value);
            text.push('\n');
        }
        fs::create_dir_all(dir)?;
        fs::write(dir.join("manifest.txt"), text)
    }
}
