//! Record of a run: the argument list and the fully resolved simulation
//! config, enough to repeat the run without the original config file.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use qmem_core::config::SimConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    /// Arguments after the program name, `--config` removed.
    pub args: Vec<String>,
    pub sim: SimConfig,
}

impl Manifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serializing manifest")?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let m: Manifest = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        m.sim.validate()?;
        Ok(m)
    }
}

/// Drops `--config PATH` and `--config=PATH` from an argument list.
pub fn strip_config(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
        } else if a == "--config" {
            skip = true;
        } else if !a.starts_with("--config=") {
            out.push(a.clone());
        }
    }
    out
}

/// Where a command writes. A path with an extension names the primary output
/// file; anything else is a directory.
#[derive(Clone, Debug, PartialEq)]
pub struct OutLayout {
    pub dir: PathBuf,
    pub file: PathBuf,
    pub manifest: PathBuf,
}

impl OutLayout {
    pub fn resolve(out: Option<&Path>, default_file: &str) -> Self {
        let out = out.unwrap_or(Path::new("qmemlab-out"));
        if out.extension().is_some() {
            let dir = out.parent().map(Path::to_path_buf).unwrap_or_default();
            let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
            Self {
                manifest: dir.join(format!("{stem}.manifest.toml")),
                file: out.to_path_buf(),
                dir,
            }
        } else {
            Self {
                dir: out.to_path_buf(),
                file: out.join(default_file),
                manifest: out.join("manifest.toml"),
            }
        }
    }

    pub fn create(&self) -> Result<()> {
        if !self.dir.as_os_str().is_empty() {
            std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        }
        Ok(())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn config_flag_is_stripped() {
        let args = s(&["dataset", "--config", "a.toml", "--n", "3", "--config=b.toml"]);
        assert_eq!(strip_config(&args), s(&["dataset", "--n", "3"]));
    }

    #[test]
    fn layouts() {
        let f = OutLayout::resolve(Some(Path::new("runs/ds.csv")), "dataset.csv");
        assert_eq!(f.file, Path::new("runs/ds.csv"));
        assert_eq!(f.manifest, Path::new("runs/ds.manifest.toml"));
        let d = OutLayout::resolve(Some(Path::new("runs/sim")), "trajectory.csv");
        assert_eq!(d.file, Path::new("runs/sim/trajectory.csv"));
        assert_eq!(d.manifest, Path::new("runs/sim/manifest.toml"));
        let bare = OutLayout::resolve(Some(Path::new("ds.csv")), "x");
        assert_eq!(bare.manifest, Path::new("ds.manifest.toml"));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Manifest {
            version: "0.1.0".into(),
            command: "dataset".into(),
            args: s(&["dataset", "--single", "--n", "4"]),
            sim: SimConfig::default(),
        };
        let p = dir.path().join("m.toml");
        m.save(&p).unwrap();
        assert_eq!(Manifest::load(&p).unwrap(), m);
    }
}
