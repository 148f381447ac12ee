//! Run directories: manifest.json, records.jsonl, summary.json and CSVs.

use serde::Serialize;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

pub struct RunDir {
    dir: PathBuf,
    files: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'a str,
    version: &'a str,
    command: &'a str,
    seed: u64,
    config: &'a C,
    files: &'a [String],
}

impl RunDir {
    pub fn create(dir: &Path) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(RunDir { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    fn open(&mut self, name: &str) -> io::Result<BufWriter<File>> {
        self.files.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> io::Result<()> {
        let mut w = self.open(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        writeln!(w)?;
        w.flush()
    }

    pub fn jsonl<T: Serialize>(&mut self, name: &str, rows: &[T]) -> io::Result<()> {
        let mut w = self.open(name)?;
        for r in rows {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        w.flush()
    }

    pub fn with_writer(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> io::Result<()> {
        let mut w = self.open(name)?;
        f(&mut w)?;
        w.flush()
    }

    /// Writes manifest.json listing every file written so far.
    pub fn finish<C: Serialize>(mut self, command: &str, seed: u64, config: &C) -> io::Result<()> {
        let files = std::mem::take(&mut self.files);
        let m = Manifest { tool: "dsf-lab", version: env!("CARGO_PKG_VERSION"), command, seed, config, files: &files };
        let mut w = BufWriter::new(File::create(self.dir.join("manifest.json"))?);
        serde_json::to_writer_pretty(&mut w, &m)?;
        writeln!(w)?;
        w.flush()
    }
}
