//! Optional TOML configuration. Command-line flags take precedence.

use std::path::{Path, PathBuf};

use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub build: BuildSection,
    #[serde(default)]
    pub query: QuerySection,
    #[cfg_attr(not(feature = "remote"), allow(dead_code))]
    pub remote: Option<RemoteSection>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct BuildSection {
    pub batch_entity: Option<usize>,
    pub batch_event: Option<usize>,
    pub batch_topic: Option<usize>,
    pub overlap: Option<f64>,
    pub mode: Option<String>,
    pub provider: Option<String>,
    pub fixtures: Option<PathBuf>,
    pub tau: Option<f64>,
    pub cooccur_threshold: Option<u32>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct QuerySection {
    pub k: Option<usize>,
    pub sigma: Option<f64>,
    pub budget: Option<usize>,
    pub candidate_cap: Option<usize>,
    pub temporal_reserved: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
#[cfg_attr(not(feature = "remote"), allow(dead_code))]
pub struct RemoteSection {
    pub endpoint: String,
    pub model: String,
    pub embedding_model: Option<String>,
    pub api_key_env: String,
}

pub fn load(path: Option<&Path>) -> anyhow::Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| anchorkit::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text)
        .map_err(|e| anchorkit::Error::Schema(format!("{}: {e}", path.display())).into())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections() {
        let c: FileConfig = toml::from_str(
            "[build]\nbatch-entity = 30\nmode = \"parallel\"\n[query]\nsigma = 0.3\n",
        )
        .unwrap();
        assert_eq!(c.build.batch_entity, Some(30));
        assert_eq!(c.build.mode.as_deref(), Some("parallel"));
        assert_eq!(c.query.sigma, Some(0.3));
        assert!(c.remote.is_none());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(toml::from_str::<FileConfig>("[build]\nbatch = 3\n").is_err());
    }
}
