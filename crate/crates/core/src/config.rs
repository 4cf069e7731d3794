//! Campaign configuration files.
//!
//! ```toml
//! dataset = "copa.jsonl"
//! seed = 7
//! max_rounds = 6
//! conclusion = "equal_weight"        # or "llm_judge", with `judge = "<profile>"`
//!
//! [profiles.chatgpt]
//! kind = "chat"
//! endpoint = "https://api.openai.com/v1"
//! model_id = "gpt-3.5-turbo"
//!
//! [profiles.davinci]
//! kind = "text_completion"
//! endpoint = "https://api.openai.com/v1"
//! model_id = "text-davinci-003"
//!
//! [[participants]]
//! id = "chatgpt"
//! profile = "chatgpt"
//! mode = "zero_shot_chat"
//!
//! [[participants]]
//! id = "davinci"
//! profile = "davinci"
//! mode = "few_shot_cot_text"
//! ```
//!
//! Relative paths are resolved against the directory of the file.
//! Credentials are never read from configuration, only from the environment
//! variable named by a profile's `api_key_env`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::backend::{
    canonical_json, Backend, BackendError, BackendKind, BackendProfile, Driver, DriverFactory, HttpTransport, RemoteDriver,
    RequestCache, ScriptedDriver, SyntheticDriver,
};
use crate::dataset::Dataset;
use crate::debate::{ConclusionMode, DebateConfig, Panel, Participant};
use crate::prompting::{ExemplarSet, PromptingMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn default_max_rounds() -> usize {
    6
}
fn default_max_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantSpec {
    pub id: String,
    pub profile: String,
    pub mode: PromptingMode,
    /// Speaking position; defaults to the order of appearance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_max_rounds")]
    pub max_rounds: usize,
    #[serde(default = "default_conclusion")]
    pub conclusion: ConclusionMode,
    /// Profile name of the judge, for `llm_judge`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<String>,
    /// Exemplar family for few-shot participants; defaults to the dataset name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_set: Option<String>,
    /// Directory of exemplar files overriding the shipped sets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exemplar_dir: Option<PathBuf>,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub replay_only: bool,
    #[serde(default)]
    pub profiles: BTreeMap<String, BackendProfile>,
    #[serde(default)]
    pub participants: Vec<ParticipantSpec>,
}

fn default_conclusion() -> ConclusionMode {
    ConclusionMode::EqualWeight
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Mixes the campaign seed into an agent seed.
pub fn mix_seed(campaign: u64, agent: u64) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    splitmix(campaign ^ splitmix(agent))
}

impl CampaignConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: CampaignConfig = toml::from_str(text)
            .map_err(|e| ConfigError::Parse { path: base.to_path_buf(), message: e.to_string() })?;
        cfg.dataset = resolve(base, &cfg.dataset);
        cfg.out_dir = cfg.out_dir.map(|p| resolve(base, &p));
        cfg.exemplar_dir = cfg.exemplar_dir.map(|p| resolve(base, &p));
        for p in cfg.profiles.values_mut() {
            p.fixture = p.fixture.as_ref().map(|f| resolve(base, f));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let parent = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let base = std::path::absolute(parent).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text, &base).map_err(|e| match e {
            ConfigError::Parse { message, .. } => ConfigError::Parse { path: path.to_path_buf(), message },
            other => other,
        })
    }

    pub fn profile(&self, name: &str) -> Result<&BackendProfile, ConfigError> {
        self.profiles.get(name).ok_or_else(|| ConfigError::Invalid(format!("unknown profile {name:?}")))
    }

    fn uses_synthetic(&self) -> bool {
        self.profiles.values().any(|p| p.kind == BackendKind::Synthetic)
    }

    /// The profile as used in this campaign, with the campaign seed mixed into
    /// synthetic agents.
    pub fn effective_profile(&self, name: &str) -> Result<BackendProfile, ConfigError> {
        let mut p = self.profile(name)?.clone();
        if let (Some(seed), Some(agent)) = (self.seed, p.agent.as_mut()) {
            agent.seed = mix_seed(seed, agent.seed);
        }
        Ok(p)
    }

    pub fn debate_config(&self) -> Result<DebateConfig, ConfigError> {
        if self.uses_synthetic() && self.seed.is_none() {
            return Err(ConfigError::Invalid("synthetic agents need a seed".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::Invalid("max_in_flight must be at least 1".into()));
        }
        let participants = self
            .participants
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Ok(Participant {
                    id: s.id.clone(),
                    profile: self.effective_profile(&s.profile)?,
                    prompting_mode: s.mode,
                    speaking_position: s.position.unwrap_or(i + 1),
                })
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        let judge_profile = match (&self.judge, self.conclusion) {
            (Some(j), ConclusionMode::LlmJudge) => Some(self.effective_profile(j)?),
            (None, ConclusionMode::LlmJudge) => {
                return Err(ConfigError::Invalid("conclusion llm_judge needs `judge = <profile>`".into()))
            }
            (_, ConclusionMode::EqualWeight) => None,
        };
        let cfg = DebateConfig { participants, max_rounds: self.max_rounds, conclusion_mode: self.conclusion, judge_profile };
        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    /// Everything that determines the campaign's outputs, as JSON.
    pub fn snapshot(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Stable id over the output-relevant configuration and the dataset
    /// digest. The dataset location is left out so a moved file keeps its id.
    pub fn campaign_id(&self, dataset_digest: &str) -> String {
        let mut v = self.snapshot();
        if let Some(obj) = v.as_object_mut() {
            for k in ["dataset", "out_dir", "replay_only", "max_in_flight"] {
                obj.remove(k);
            }
        }
        let doc = serde_json::json!({ "config": v, "dataset_digest": dataset_digest });
        hex::encode(&Sha256::digest(canonical_json(&doc).as_bytes())[..8])
    }

    pub fn exemplars(&self, dataset_name: &str) -> Result<ExemplarSet, ConfigError> {
        let name = self.exemplar_set.as_deref().unwrap_or(dataset_name);
        let set = match &self.exemplar_dir {
            Some(dir) => ExemplarSet::load_dir(dir, name),
            None => ExemplarSet::builtin(name),
        };
        set.map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Panel over real drivers for every profile kind.
    pub fn build_panel(&self, ds: &Dataset, cache: Arc<RequestCache>) -> Result<Panel, ConfigError> {
        self.build_panel_with(ds, cache, &|p: &BackendProfile| default_driver(p, ds))
    }

    /// Panel whose drivers come from `driver_for`, for instrumentation.
    pub fn build_panel_with(
        &self,
        ds: &Dataset,
        cache: Arc<RequestCache>,
        driver_for: &DriverFactory<'_>,
    ) -> Result<Panel, ConfigError> {
        let dc = self.debate_config()?;
        let replay_only = self.replay_only;
        let backend_for = |p: &BackendProfile| -> Result<Backend, BackendError> {
            Ok(Backend::new(p.clone(), driver_for(p)?, cache.clone())?.replay_only(replay_only))
        };
        let exemplars_for = |p: &Participant| match p.prompting_mode {
            PromptingMode::ZeroShotChat => Ok(None),
            PromptingMode::FewShotCotText => self
                .exemplars(&ds.name)
                .map(Some)
                .map_err(|e| crate::prompting::PromptError::Exemplars(e.to_string())),
        };
        Panel::new(&dc, backend_for, exemplars_for).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

/// The production driver for a profile.
pub fn default_driver(p: &BackendProfile, ds: &Dataset) -> Result<Arc<dyn Driver>, BackendError> {
    Ok(match p.kind {
        BackendKind::Chat | BackendKind::TextCompletion => {
            Arc::new(RemoteDriver::from_env(p, Arc::new(HttpTransport::default())))
        }
        BackendKind::Scripted => {
            let fixture = p
                .fixture
                .as_deref()
                .ok_or_else(|| BackendError::InvalidProfile(format!("{}: scripted profile needs a fixture", p.model_id)))?;
            Arc::new(ScriptedDriver::load(fixture)?)
        }
        BackendKind::Synthetic => Arc::new(SyntheticDriver::new([ds])),
    })
}
