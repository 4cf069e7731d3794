//! Single-model evaluation: Step-1 answers only, scored against gold.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use num_rational::Ratio;
use serde::Serialize;

use crate::backend::{Backend, BackendError, DriverFactory, RequestCache};
use crate::campaign::CampaignError;
use crate::config::{default_driver, CampaignConfig, ConfigError};
use crate::dataset::{load_dataset, Dataset, FormatHint};
use crate::debate::{generate_initial, DebateError, Debater, Participant};
use crate::metrics::{accuracy_exact, percent_2dp, to_f64, PredictionSet};
use crate::prompting::PromptingMode;
use crate::store::{StoreError, CACHE};

pub const PREDICTIONS: &str = "predictions.jsonl";
pub const SCORE: &str = "accuracy.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalSummary {
    pub dataset: String,
    pub profile: String,
    pub mode: PromptingMode,
    pub examples: usize,
    pub correct: u64,
    pub unparsed: usize,
    /// Percent, two decimals, rounded half up.
    pub accuracy: String,
}

#[derive(Debug, Clone)]
pub struct EvalResult {
    pub predictions: PredictionSet,
    pub accuracy: Ratio<u64>,
    pub summary: EvalSummary,
    pub predictions_path: PathBuf,
}

impl EvalResult {
    pub fn accuracy_f64(&self) -> f64 {
        to_f64(self.accuracy)
    }
}

/// Answers every example with one debater, up to `max_in_flight` at a time.
pub fn predict(ds: &Dataset, debater: &Debater, max_in_flight: usize) -> Result<PredictionSet, CampaignError> {
    if max_in_flight == 0 {
        return Err(CampaignError::NoWorkers);
    }
    let next = AtomicUsize::new(0);
    let out = Mutex::new(PredictionSet::new(debater.participant.id.clone()));
    let first_error: Mutex<Option<CampaignError>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..max_in_flight.min(ds.len().max(1)) {
            scope.spawn(|| loop {
                if first_error.lock().unwrap().is_some() {
                    break;
                }
                let Some(ex) = ds.examples.get(next.fetch_add(1, Ordering::SeqCst)) else { break };
                match generate_initial(ex, debater) {
                    Ok(s) => out.lock().unwrap().insert(ex.id.clone(), s.parsed_stance),
                    Err(source) => {
                        first_error
                            .lock()
                            .unwrap()
                            .get_or_insert(CampaignError::Debate { example: ex.id.clone(), source });
                        break;
                    }
                }
            });
        }
    });
    match first_error.into_inner().unwrap() {
        Some(e) => Err(e),
        None => Ok(out.into_inner().unwrap()),
    }
}

/// Evaluates `profile` from `cfg` in `mode` over the configured dataset and
/// writes the predictions and score into `dir`. Exchanges are cached in the
/// directory, so a repeated run makes no backend calls.
pub fn run_eval(cfg: &CampaignConfig, profile: &str, mode: PromptingMode, dir: &Path) -> Result<EvalResult, CampaignError> {
    run_eval_with(cfg, profile, mode, dir, None)
}

/// As [`run_eval`], with the driver supplied by the caller.
pub fn run_eval_with(
    cfg: &CampaignConfig,
    profile: &str,
    mode: PromptingMode,
    dir: &Path,
    driver_for: Option<&DriverFactory<'_>>,
) -> Result<EvalResult, CampaignError> {
    let ds = load_dataset(&cfg.dataset, FormatHint::Auto)?;
    let p = cfg.effective_profile(profile)?;
    if p.kind == crate::backend::BackendKind::Synthetic && cfg.seed.is_none() {
        return Err(ConfigError::Invalid("synthetic agents need a seed".into()).into());
    }
    std::fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
    let cache = Arc::new(RequestCache::open(&dir.join(CACHE)).map_err(|e| StoreError::Cache(e.to_string()))?);
    let config_err = |e: BackendError| CampaignError::Debate { example: String::new(), source: DebateError::Config(e.to_string()) };
    let driver = match driver_for {
        Some(f) => f(&p),
        None => default_driver(&p, &ds),
    }
    .map_err(config_err)?;
    let backend = Backend::new(p.clone(), driver, cache).map_err(config_err)?.replay_only(cfg.replay_only);
    let exemplars = match mode {
        PromptingMode::ZeroShotChat => None,
        PromptingMode::FewShotCotText => Some(cfg.exemplars(&ds.name)?),
    };
    let debater = Debater {
        participant: Participant { id: profile.to_string(), profile: p, prompting_mode: mode, speaking_position: 1 },
        backend,
        exemplars,
    };
    let predictions = predict(&ds, &debater, cfg.max_in_flight)?;
    let accuracy = accuracy_exact(&predictions, &ds).map_err(|e| CampaignError::Replay(e.to_string()))?;
    let summary = EvalSummary {
        dataset: ds.name.clone(),
        profile: profile.to_string(),
        mode,
        examples: ds.len(),
        correct: (accuracy * Ratio::from_integer(ds.len() as u64)).to_integer(),
        unparsed: predictions.entries.values().filter(|s| s.is_none()).count(),
        accuracy: percent_2dp(accuracy),
    };
    let predictions_path = dir.join(PREDICTIONS);
    let write_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| StoreError::Io { path, source }
    };
    predictions.save(&predictions_path).map_err(write_err(&predictions_path))?;
    let score = dir.join(SCORE);
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    std::fs::write(&score, json).map_err(write_err(&score))?;
    Ok(EvalResult { predictions, accuracy, summary, predictions_path })
}
