//! Synthetic campaigns: seeded agents debating a generated two-option dataset.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::backend::{AgentParams, BackendProfile};
use crate::campaign::{run_configured, CampaignError, CampaignResult};
use crate::config::{CampaignConfig, ConfigError, ParticipantSpec};
use crate::dataset::{save_dataset, Dataset, Example, OptionLabel, TaskKind};
use crate::debate::ConclusionMode;
use crate::metrics::{dominance_exact, incon_by_round_exact, percent_2dp};
use crate::prompting::PromptingMode;
use crate::report::{emit_report, ReportStyle};
use crate::store::StoreError;

pub const DATASET_FILE: &str = "dataset.jsonl";
pub const CONFIG_FILE: &str = "campaign.toml";
pub const SUMMARY_FILE: &str = "simulation.json";
pub const REPORT_DIR: &str = "reports";

/// A synthetic campaign. Agent `i` speaks at position `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub agents: Vec<AgentParams>,
    pub examples: usize,
    pub seed: u64,
    pub max_rounds: usize,
    pub max_in_flight: usize,
}

impl Simulation {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.agents.len() < 2 {
            return Err(ConfigError::Invalid(format!("need at least 2 agents, got {}", self.agents.len())));
        }
        if self.examples == 0 {
            return Err(ConfigError::Invalid("need at least one example".into()));
        }
        for a in &self.agents {
            a.validate().map_err(ConfigError::Invalid)?;
        }
        Ok(())
    }

    pub fn agent_id(i: usize) -> String {
        format!("agent{}", i + 1)
    }

    /// The campaign configuration over a dataset at `dataset`.
    pub fn config(&self, dataset: &Path) -> CampaignConfig {
        let mut profiles = BTreeMap::new();
        let mut participants = Vec::new();
        for (i, a) in self.agents.iter().enumerate() {
            let id = Self::agent_id(i);
            let params = AgentParams { seed: i as u64, ..*a };
            profiles.insert(id.clone(), BackendProfile::synthetic(id.clone(), params));
            participants.push(ParticipantSpec { id: id.clone(), profile: id, mode: PromptingMode::ZeroShotChat, position: None });
        }
        CampaignConfig {
            dataset: dataset.to_path_buf(),
            out_dir: None,
            seed: Some(self.seed),
            max_rounds: self.max_rounds,
            conclusion: ConclusionMode::EqualWeight,
            judge: None,
            exemplar_set: None,
            exemplar_dir: None,
            max_in_flight: self.max_in_flight,
            replay_only: false,
            profiles,
            participants,
        }
    }
}

/// `n` two-option examples with seeded gold labels.
pub fn synthetic_dataset(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let examples = (0..n)
        .map(|i| Example {
            id: format!("s{i:05}"),
            question: format!("Synthetic item {i}: which reading holds?"),
            options: vec![format!("the first reading of item {i}"), format!("the second reading of item {i}")],
            gold: if rng.random::<bool>() { OptionLabel::A } else { OptionLabel::B },
            task_kind: TaskKind::MultipleChoice,
        })
        .collect();
    Dataset { name: "synthetic".into(), examples, declared_option_count: 2 }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundPoint {
    pub round: usize,
    pub incon: String,
}

/// What a simulation measured, with percentages to two decimals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationSummary {
    pub campaign_id: String,
    pub examples: usize,
    pub debated: usize,
    pub incon_by_round: Vec<RoundPoint>,
    pub incon_constant: bool,
    /// Empty when no example was debated.
    pub dominance: BTreeMap<String, String>,
}

pub struct SimulationRun {
    pub result: CampaignResult,
    pub summary: SimulationSummary,
    pub reports: Vec<PathBuf>,
}

pub fn summarize(c: &CampaignResult) -> Result<SimulationSummary, CampaignError> {
    let metric = |e: crate::metrics::MetricError| CampaignError::Replay(e.to_string());
    let series = incon_by_round_exact(&c.histories(), c.max_rounds).map_err(metric)?;
    let outcomes = c.outcomes();
    let dominance = if outcomes.is_empty() {
        BTreeMap::new()
    } else {
        dominance_exact(&outcomes).map_err(metric)?.into_iter().map(|(k, v)| (k, percent_2dp(v))).collect()
    };
    Ok(SimulationSummary {
        campaign_id: c.campaign_id.clone(),
        examples: c.completed().count(),
        debated: outcomes.len(),
        incon_constant: series.windows(2).all(|w| w[0] == w[1]),
        incon_by_round: series.iter().enumerate().map(|(round, v)| RoundPoint { round, incon: percent_2dp(*v) }).collect(),
        dominance,
    })
}

/// Generates the dataset and configuration into `dir`, runs or resumes the
/// campaign there, and writes every report style plus a summary.
pub fn run_simulation(sim: &Simulation, dir: &Path) -> Result<SimulationRun, CampaignError> {
    sim.validate()?;
    std::fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
    let dir = std::path::absolute(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
    let data = dir.join(DATASET_FILE);
    save_dataset(&synthetic_dataset(sim.examples, sim.seed), &data)?;
    let cfg = sim.config(&data);
    let toml = toml::to_string(&cfg).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let write = |path: PathBuf, text: String| {
        std::fs::write(&path, text).map_err(|source| StoreError::Io { path: path.clone(), source })
    };
    write(dir.join(CONFIG_FILE), toml)?;
    let result = run_configured(&cfg, &dir)?;
    let summary = summarize(&result)?;
    write(dir.join(SUMMARY_FILE), serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n")?;
    let mut reports = Vec::new();
    for style in ReportStyle::ALL {
        if style == ReportStyle::DominanceTable && summary.debated == 0 {
            continue;
        }
        reports.extend(emit_report(&result, style, &dir.join(REPORT_DIR)).map_err(|e| CampaignError::Replay(e.to_string()))?);
    }
    Ok(SimulationRun { result, summary, reports })
}
