//! Deployment configuration. Paths inside the file are relative to it.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use eiqis_core::chainlog::ChannelKey;
use eiqis_core::edge::{EdgeParams, NoiseParams, TrackerParams};
use eiqis_core::fog::{parse_rules, AnomalyRule, BucketConfig, FogConfig};
use eiqis_core::queryd::AccessTable;
use eiqis_core::{load_world, WorldConfig};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    InProcess,
    MultiProcess,
}

/// Listen ports of the fog process. 0 picks a free port.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ports {
    #[serde(default)]
    pub ingest: u16,
    #[serde(default)]
    pub query: u16,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentFile {
    pub scenario: PathBuf,
    #[serde(default)]
    pub rules: Option<PathBuf>,
    #[serde(default)]
    pub access: AccessTable,
    /// Camera id -> shared secret (UTF-8).
    pub channel_keys: BTreeMap<String, String>,
    #[serde(default = "default_cadence")]
    pub cadence: u32,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub ports: Ports,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub tz_offset_min: i32,
    #[serde(default)]
    pub queries: Option<PathBuf>,
    #[serde(default)]
    pub buckets: BucketConfig,
    /// Requester id the harness queries as.
    #[serde(default = "default_operator")]
    pub operator: String,
}

fn default_cadence() -> u32 {
    EdgeParams::default().cadence
}

fn default_operator() -> String {
    "operator".into()
}

/// A loaded and validated deployment.
#[derive(Debug, Clone)]
pub struct Deployment {
    pub path: PathBuf,
    pub file: DeploymentFile,
    pub world: WorldConfig,
    pub rules: Vec<AnomalyRule>,
    pub keys: BTreeMap<String, ChannelKey>,
    pub queries: Vec<String>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// One query per line; blank lines and `#` comments are skipped.
pub fn parse_query_file(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

impl Deployment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let file: DeploymentFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        Self::from_file(path, file)
    }

    pub fn from_file(path: &Path, file: DeploymentFile) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new("."));
        let scenario = resolve(base, &file.scenario);
        let world = load_world(
            &fs::read_to_string(&scenario).with_context(|| format!("reading scenario {}", scenario.display()))?,
        )
        .with_context(|| format!("loading scenario {}", scenario.display()))?;
        let rules = match &file.rules {
            Some(p) => {
                let p = resolve(base, p);
                let text = fs::read_to_string(&p).with_context(|| format!("reading rules {}", p.display()))?;
                parse_rules(&text)
                    .map_err(anyhow::Error::msg)
                    .with_context(|| format!("loading rules {}", p.display()))?
            }
            None => Vec::new(),
        };
        let queries = match &file.queries {
            Some(p) => {
                let p = resolve(base, p);
                parse_query_file(
                    &fs::read_to_string(&p).with_context(|| format!("reading queries {}", p.display()))?,
                )
            }
            None => Vec::new(),
        };
        if file.cadence == 0 {
            bail!("cadence must be >= 1");
        }
        if file.ports.ingest != 0 && file.ports.ingest == file.ports.query {
            bail!("ingest and query ports must differ");
        }
        file.buckets.validate().map_err(anyhow::Error::msg)?;
        let mut keys = BTreeMap::new();
        for cam in &world.cameras {
            let secret = file
                .channel_keys
                .get(&cam.camera_id)
                .with_context(|| format!("no channel key for camera `{}`", cam.camera_id))?;
            if secret.is_empty() {
                bail!("empty channel key for camera `{}`", cam.camera_id);
            }
            keys.insert(cam.camera_id.clone(), ChannelKey::new(secret.as_bytes().to_vec()));
        }
        Ok(Self {
            path: path.to_path_buf(),
            file,
            world,
            rules,
            keys,
            queries,
        })
    }

    pub fn fog_config(&self) -> FogConfig {
        FogConfig {
            cameras: self.world.cameras.clone(),
            rules: self.rules.clone(),
            tz_offset_min: self.file.tz_offset_min,
            buckets: self.file.buckets.clone(),
        }
    }

    pub fn edge_params(&self) -> EdgeParams {
        EdgeParams {
            cadence: self.file.cadence,
            noise: self.file.noise,
            tracker: TrackerParams::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_file_skips_comments() {
        let q = parse_query_file("# header\nspeed > 1\n\n  COUNT(person) >= 10  \n");
        assert_eq!(q, vec!["speed > 1", "COUNT(person) >= 10"]);
    }

    #[test]
    fn relative_paths_resolve_against_config() {
        assert_eq!(resolve(Path::new("/a/b"), Path::new("c.json")), PathBuf::from("/a/b/c.json"));
        assert_eq!(resolve(Path::new("/a/b"), Path::new("/c.json")), PathBuf::from("/c.json"));
    }
}
