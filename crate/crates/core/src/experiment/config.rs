use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::AgentConfig;
use crate::curriculum::SamplerConfig;
use crate::density::DensityConfig;
use crate::envs::{builtin_names, MazeSpec, RewardConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvConfig {
    /// Built-in layout name or path to a layout file.
    pub layout: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub reward: RewardConfig,
}

fn default_horizon() -> usize {
    50
}

impl EnvConfig {
    pub fn maze(&self) -> Result<MazeSpec> {
        if builtin_names().contains(&self.layout.as_str()) {
            MazeSpec::builtin(&self.layout)
        } else {
            MazeSpec::load(Path::new(&self.layout))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    /// Gradient steps per epoch once warmup is over.
    pub updates_per_epoch: usize,
    /// Evaluate, dump the curriculum and checkpoint every this many epochs.
    pub eval_period: usize,
    pub eval_goals: usize,
    pub eval_episodes_per_goal: usize,
    pub coverage_bins_per_cell: usize,
    /// Buffer states used for the uncertainty/density correlation probe.
    pub probe_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            episodes_per_epoch: 50,
            updates_per_epoch: 500,
            eval_period: 1,
            eval_goals: 100,
            eval_episodes_per_goal: 1,
            coverage_bins_per_cell: 1,
            probe_size: 1000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("episodes_per_epoch", self.episodes_per_epoch),
            ("eval_period", self.eval_period),
            ("eval_goals", self.eval_goals),
            ("eval_episodes_per_goal", self.eval_episodes_per_goal),
            ("coverage_bins_per_cell", self.coverage_bins_per_cell),
            ("probe_size", self.probe_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("train.{name} must be positive")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub agent: AgentConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn config_err(e: impl std::fmt::Display) -> Error {
    Error::Config(e.to_string())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(config_err)
    }

    /// Applies `a.b.c=value` overrides. Values are parsed as TOML scalars or
    /// arrays, falling back to a bare string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Value::try_from(self).map_err(config_err)?;
        for o in overrides {
            let o = o.as_ref();
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            set_path(&mut root, key.trim(), parse_value(raw.trim()))?;
        }
        root.try_into().map_err(config_err)
    }

    /// SHA-256 over canonical JSON (sorted keys) with the output directory
    /// and seed list blanked, so per-seed processes of one experiment share
    /// a hash regardless of where they write.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.seeds.clear();
        let value = serde_json::to_value(&c).expect("config serializes to json");
        let text = serde_json::to_string(&value).expect("json value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must be non-empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if self.env.horizon == 0 {
            return Err(Error::Config("env.horizon must be positive".into()));
        }
        self.env.maze().map_err(|e| Error::Config(format!("env.layout: {e}")))?;
        self.env.reward.validate().map_err(config_err)?;
        self.sampler.validate()?;
        self.agent.validate()?;
        self.density.validate()?;
        self.train.validate()
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn set_path(root: &mut toml::Value, key: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut node = root;
    for part in &parts[..parts.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{key}`: `{part}` is not a table")))?;
        node = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| Error::Config(format!("`{key}` does not name a table field")))?;
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::SamplerVariant;

    const MINIMAL: &str = r#"
seeds = [0, 1]

[env]
layout = "point_maze_a"
"#;

    const FULL: &str = r#"
seeds = [3]
out_dir = "out"

[env]
layout = "square_large"
horizon = 40

[env.reward]
shape = "sparse"
threshold = 0.3
scale = 1.0

[sampler]
variant = "skew_fit"
alpha = -0.5
candidates = 500

[agent]
batch_size = 64
hidden = [32, 32]

[density]
bins = 11

[train]
epochs = 3
"#;

    #[test]
    fn minimal_uses_defaults() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.env.horizon, 50);
        assert_eq!(c.sampler, SamplerConfig::default());
        assert_eq!(c.agent, AgentConfig::default());
        assert_eq!(c.train.episodes_per_epoch, 50);
        c.validate().unwrap();
    }

    #[test]
    fn round_trip_is_identity() {
        for text in [MINIMAL, FULL] {
            let a = ExperimentConfig::from_toml_str(text).unwrap();
            let b = ExperimentConfig::from_toml_str(&a.to_toml().unwrap()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in [
            "seeds=[0]\ntypo=1\n[env]\nlayout=\"point_maze_a\"\n",
            "seeds=[0]\n[env]\nlayout=\"point_maze_a\"\n[sampler]\nalpah=-1\n",
            "seeds=[0]\n[env]\nlayout=\"point_maze_a\"\n[agent]\ngama=0.9\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml_str(bad), Err(Error::Config(_))));
        }
    }

    #[test]
    fn hash_ignores_field_order_and_out_dir() {
        let a = ExperimentConfig::from_toml_str(FULL).unwrap();
        let reordered = r#"
[train]
epochs = 3

[density]
bins = 11

[agent]
hidden = [32, 32]
batch_size = 64

[sampler]
candidates = 500
alpha = -0.5
variant = "skew_fit"

[env]
horizon = 40
layout = "square_large"

[env.reward]
scale = 1.0
threshold = 0.3
shape = "sparse"
"#;
        let mut b = ExperimentConfig::from_toml_str(&format!("out_dir = \"elsewhere\"\nseeds = [4, 5]\n{reordered}")).unwrap();
        assert_eq!(a.config_hash(), b.config_hash());
        b.train.epochs = 4;
        assert_ne!(a.config_hash(), b.config_hash());
    }

    #[test]
    fn overrides_edit_nested_fields() {
        let c = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let o = c
            .with_overrides(&[
                "sampler.variant=visited",
                "agent.gamma=0.9",
                "agent.hidden=[16, 16]",
                "train.epochs=7",
                "seeds=[5]",
            ])
            .unwrap();
        assert_eq!(o.sampler.variant, SamplerVariant::Visited);
        assert_eq!(o.agent.gamma, 0.9);
        assert_eq!(o.agent.hidden, vec![16, 16]);
        assert_eq!(o.train.epochs, 7);
        assert_eq!(o.seeds, vec![5]);
        assert!(c.with_overrides(&["agent.gamme=0.9"]).is_err());
        assert!(c.with_overrides(&["no_equals"]).is_err());
        assert!(c.with_overrides(&["train.epochs=many"]).is_err());
    }

    #[test]
    fn validation_errors() {
        let base = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let cases = [
            "seeds=[]",
            "seeds=[1, 1]",
            "sampler.alpha=0.5",
            "env.layout=/nonexistent/layout.txt",
            "train.eval_period=0",
            "agent.gamma=1.5",
            "density.bins=0",
        ];
        for case in cases {
            let c = base.with_overrides(&[case]).unwrap();
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{case}");
        }
    }
}
