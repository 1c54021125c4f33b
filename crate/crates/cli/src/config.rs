//! Run configuration files.
//!
//! A run config is TOML with a few top-level keys and three optional
//! sections. See `docs/config.md` for the full schema.

use std::path::{Path, PathBuf};

use dacoop_core::apf::ApfParams;
use dacoop_core::arena_file::{bundled, load_arena};
use dacoop_core::env::ScenarioParams;
use dacoop_core::geometry::Arena;
use dacoop_core::trainer::{Method, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Base values for the `[train]` section.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Desk,
    Paper,
}

impl Profile {
    pub fn train_config(self) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig::desk(),
            Profile::Paper => TrainConfig::paper(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    #[serde(default)]
    pub seed: u64,
    /// Arena file path (relative to the config file) or bundled arena name.
    #[serde(default = "default_arena")]
    pub arena: String,
    /// Output directory, relative to the config file.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub profile: Profile,
    #[serde(default)]
    pub scenario: ScenarioParams,
    pub train: TrainConfig,
    #[serde(default)]
    pub apf: ApfParams,
}

fn default_arena() -> String {
    "train_fig5a".into()
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// A parsed config with its file-relative paths resolved.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub arena: Arena,
    pub output_dir: PathBuf,
}

impl RunConfig {
    /// Parses config text. Missing `[train]` keys come from the selected
    /// profile; unknown keys anywhere are errors.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        let profile = match table.get("profile") {
            Some(v) => Profile::deserialize(v.clone()).map_err(|e| CliError::Config(format!("profile: {e}")))?,
            None => Profile::default(),
        };
        let base = toml::Table::try_from(profile.train_config()).map_err(|e| CliError::Config(e.to_string()))?;
        let mut merged = base;
        match table.remove("train") {
            Some(toml::Value::Table(user)) => {
                for (k, v) in user {
                    merged.insert(k, v);
                }
            }
            Some(_) => return Err(CliError::Config("`train` must be a section".into())),
            None => {}
        }
        table.insert("train".into(), toml::Value::Table(merged));
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.scenario.validate().map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        self.train.validate().map_err(|e| CliError::Config(e.to_string()))?;
        self.apf.validate().map_err(|e| CliError::Config(format!("apf: {e}")))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let arena = resolve_arena(&config.arena, base)?;
        let output_dir = base.join(&config.output_dir);
        Ok(LoadedConfig {
            config,
            arena,
            output_dir,
        })
    }

    /// Fully expanded TOML, every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

/// Loads `spec` as a file relative to `base`, falling back to a bundled
/// arena of that name.
pub fn resolve_arena(spec: &str, base: &Path) -> Result<Arena, CliError> {
    let path = base.join(spec);
    if path.is_file() {
        return load_arena(&path).map_err(|e| CliError::Config(format!("arena {}: {e}", path.display())));
    }
    bundled(spec).ok_or_else(|| {
        CliError::Config(format!(
            "arena `{spec}` is neither a file under {} nor a bundled arena (train_fig5a, val_fig5b, u_trap)",
            base.display()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_uses_desk_profile() {
        let c = RunConfig::parse("method = \"dacoop\"\n").unwrap();
        assert_eq!(c.method, Method::Dacoop);
        assert_eq!(c.train, TrainConfig::desk());
        assert_eq!(c.scenario, ScenarioParams::default());
        assert_eq!(c.arena, "train_fig5a");
    }

    #[test]
    fn train_keys_override_profile() {
        let c = RunConfig::parse("method = \"dacoop\"\nprofile = \"paper\"\n[train]\nepisodes = 12\n").unwrap();
        assert_eq!(c.train.episodes, 12);
        assert_eq!(c.train.updates_per_episode, TrainConfig::paper().updates_per_episode);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "method = \"dacoop\"\nsede = 3\n",
            "method = \"dacoop\"\n[train]\nepisode = 3\n",
            "method = \"dacoop\"\n[scenario]\nn_pursuer = 3\n",
            "method = \"dacoop\"\n[apf]\nrho = 3\n",
            "method = \"dacoop\"\n[scenario.evader]\nspeed = 3\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::parse("method = \"qlearning\"\n").is_err());
        assert!(RunConfig::parse("method = \"dacoop\"\n[train]\ngamma = 1.5\n").is_err());
        assert!(RunConfig::parse("method = \"dacoop\"\n[scenario]\nv_e = 100.0\n").is_err());
    }

    #[test]
    fn resolved_form_round_trips() {
        let c = RunConfig::parse("method = \"modified_apf\"\nseed = 9\n[scenario]\nn_pursuers = 4\n").unwrap();
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn bundled_arena_fallback() {
        assert!(resolve_arena("val_fig5b", Path::new("/nonexistent")).is_ok());
        assert!(matches!(
            resolve_arena("missing.arena", Path::new("/nonexistent")),
            Err(CliError::Config(_))
        ));
    }
}
