use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use spamsim_core::Result;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Full command line; re-running it reproduces every output.
    pub argv: Vec<String>,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

/// Collects output paths for a command and writes its manifest last.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new(), started: Instant::now() })
    }

    pub fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.display().to_string());
        p
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let p = self.path(name);
        fs::write(p, to_json(value)?)?;
        Ok(())
    }

    pub fn finish(mut self, command: &str, argv: &[String], config: Option<&Path>, seed: Option<u64>) -> Result<()> {
        let manifest_path = self.path("manifest.json");
        let manifest = RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config_path: config.map(|p| p.display().to_string()),
            seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            outputs: self.written.clone(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        fs::write(manifest_path, to_json(&manifest)?)?;
        Ok(())
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes `value` into `out/name` (plus a manifest) or to stdout.
pub fn emit_json<T: Serialize>(
    value: &T,
    out: Option<&Path>,
    name: &str,
    command: &str,
    argv: &[String],
    config: Option<&Path>,
    seed: Option<u64>,
) -> Result<()> {
    match out {
        Some(dir) => {
            let mut o = Outputs::new(dir)?;
            o.write_json(name, value)?;
            o.finish(command, argv, config, seed)
        }
        None => {
            print!("{}", to_json(value)?);
            Ok(())
        }
    }
}
