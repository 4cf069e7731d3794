//! Running a debate campaign over a dataset.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, BackendProfile, Completion, CompletionRequest, Driver, DriverFactory, RequestCache};
use crate::config::{CampaignConfig, ConfigError};
use crate::dataset::{load_dataset, Dataset, DatasetError, Example, FormatHint, OptionLabel};
use crate::debate::{
    conclude_equal_weight, conclude_with_judge, filter_for_debate, generate_initial, run_debate, top_counts,
    ConclusionMode, DebateError, DebateOutcome, DebateState, Panel, Phase, Statement, TurnEvent, JUDGE_ID,
};
use crate::metrics::{
    build_confusion, incon_by_round, ConfusionMatrix, MetricError, PredictionSet, RoundSeries, StanceHistory,
};
use crate::store::{
    read_transcripts, CampaignManifest, CampaignStore, ExampleStatus, ManifestEntry, StoreError, CACHE, TRANSCRIPTS,
};

/// Model id of the predictions produced by the debate.
pub const FORD_ID: &str = "ford";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("example {example}: {source}")]
    Debate {
        example: String,
        #[source]
        source: DebateError,
    },
    #[error("max_in_flight must be at least 1")]
    NoWorkers,
    #[error("{0}")]
    Replay(String),
}

/// Everything recorded for one example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub example_id: String,
    pub gold: OptionLabel,
    /// Step-1 statements in roster order.
    pub initial: Vec<Statement>,
    pub debate: Option<DebateState>,
    pub outcome: Option<DebateOutcome>,
    pub judge_raw: Option<String>,
    /// Stances differed but some could not be parsed, so no debate was held.
    pub excluded: bool,
    pub conclusion: Option<OptionLabel>,
}

impl ExampleRecord {
    pub fn initial_stances(&self) -> Vec<Option<OptionLabel>> {
        self.initial.iter().map(|s| s.parsed_stance).collect()
    }

    pub fn history(&self) -> StanceHistory {
        match &self.debate {
            Some(d) => d.history(),
            None => vec![self.initial_stances()],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CampaignResult {
    pub campaign_id: String,
    pub dataset: Dataset,
    pub roster: Vec<String>,
    pub max_rounds: usize,
    /// In dataset order; `None` where the example failed.
    pub records: Vec<Option<ExampleRecord>>,
    /// Example id and error of every failed example.
    pub failures: Vec<(String, String)>,
}

impl CampaignResult {
    pub fn partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn completed(&self) -> impl Iterator<Item = &ExampleRecord> {
        self.records.iter().flatten()
    }

    /// The examples that completed, which every metric is computed over.
    pub fn completed_dataset(&self) -> Dataset {
        let examples: Vec<Example> = self
            .dataset
            .examples
            .iter()
            .zip(&self.records)
            .filter(|(_, r)| r.is_some())
            .map(|(e, _)| e.clone())
            .collect();
        Dataset { name: self.dataset.name.clone(), examples, declared_option_count: self.dataset.declared_option_count }
    }

    /// Step-1 predictions of each participant, in roster order.
    pub fn initial_predictions(&self) -> Vec<PredictionSet> {
        self.roster
            .iter()
            .enumerate()
            .map(|(i, id)| {
                let mut p = PredictionSet::new(id.clone());
                for r in self.completed() {
                    p.insert(r.example_id.clone(), r.initial[i].parsed_stance);
                }
                p
            })
            .collect()
    }

    pub fn ford_predictions(&self) -> PredictionSet {
        let mut p = PredictionSet::new(FORD_ID);
        for r in self.completed() {
            p.insert(r.example_id.clone(), r.conclusion);
        }
        p
    }

    /// Confusion of the first two participants' initial answers.
    pub fn confusion(&self) -> Result<ConfusionMatrix, MetricError> {
        let sets = self.initial_predictions();
        let ds = self.completed_dataset();
        build_confusion(&sets[0], &sets[1], &ds)
    }

    /// Outcomes of the examples that were debated.
    pub fn outcomes(&self) -> Vec<DebateOutcome> {
        self.completed().filter_map(|r| r.outcome.clone()).collect()
    }

    pub fn histories(&self) -> Vec<StanceHistory> {
        self.completed().map(ExampleRecord::history).collect()
    }

    pub fn incon_by_round(&self) -> Result<RoundSeries, MetricError> {
        incon_by_round(&self.histories(), self.max_rounds)
    }
}

fn emit(sink: &dyn Fn(&TurnEvent<'_>) -> Result<(), String>, ex: &Example, s: &Statement, phase: Phase, round: usize) -> Result<(), DebateError> {
    sink(&TurnEvent {
        example_id: &ex.id,
        phase,
        participant: &s.participant,
        round,
        request_hash: &s.request_hash,
        raw_text: &s.raw_text,
        parsed_stance: s.parsed_stance,
        recorded_at: s.recorded_at,
    })
    .map_err(DebateError::Sink)
}

/// All three steps for one example.
pub fn process_example(
    ex: &Example,
    panel: &Panel,
    sink: &(dyn Fn(&TurnEvent<'_>) -> Result<(), String> + Sync),
) -> Result<ExampleRecord, DebateError> {
    let mut initial = Vec::with_capacity(panel.debaters.len());
    for d in &panel.debaters {
        let s = generate_initial(ex, d)?;
        emit(sink, ex, &s, Phase::Initial, 0)?;
        initial.push(s);
    }
    let stances: Vec<Option<OptionLabel>> = initial.iter().map(|s| s.parsed_stance).collect();
    let mut rec = ExampleRecord {
        example_id: ex.id.clone(),
        gold: ex.gold,
        initial,
        debate: None,
        outcome: None,
        judge_raw: None,
        excluded: false,
        conclusion: None,
    };
    if !filter_for_debate(&stances) {
        rec.conclusion = stances[0];
        return Ok(rec);
    }
    if stances.iter().any(Option::is_none) {
        rec.excluded = true;
        rec.conclusion = top_counts(stances.iter().flatten().copied()).first().copied();
        return Ok(rec);
    }
    let state = run_debate(ex, panel, rec.initial.clone(), sink)?;
    let outcome = match (panel.conclusion_mode, &panel.judge) {
        (ConclusionMode::LlmJudge, Some(judge)) => {
            let call = conclude_with_judge(&state, judge, panel.mode)?;
            sink(&TurnEvent {
                example_id: &ex.id,
                phase: Phase::Judge,
                participant: JUDGE_ID,
                round: state.round_count,
                request_hash: &call.request_hash,
                raw_text: &call.raw_text,
                parsed_stance: call.outcome.judge_verdict,
                recorded_at: call.recorded_at,
            })
            .map_err(DebateError::Sink)?;
            rec.judge_raw = Some(call.raw_text);
            call.outcome
        }
        _ => conclude_equal_weight(&state)?,
    };
    rec.conclusion = Some(outcome.conclusion);
    rec.outcome = Some(outcome);
    rec.debate = Some(state);
    Ok(rec)
}

/// A fresh manifest for a store, every example pending.
pub fn fresh_manifest(cfg: &CampaignConfig, ds: &Dataset, digest: &str) -> CampaignManifest {
    CampaignManifest {
        campaign_id: cfg.campaign_id(digest),
        config: cfg.snapshot(),
        dataset_path: cfg.dataset.clone(),
        dataset_digest: digest.to_string(),
        seed: cfg.seed,
        examples: ds
            .examples
            .iter()
            .map(|e| ManifestEntry { id: e.id.clone(), status: ExampleStatus::Pending, error: None })
            .collect(),
    }
}

/// Runs every example with up to `max_in_flight` examples in flight. A
/// backend failure fails only its example; a storage failure stops the run.
/// Exchanges already in the store's cache are replayed, so a resumed campaign
/// only calls backends for the work that is missing.
pub fn run_campaign(
    ds: &Dataset,
    panel: &Panel,
    store: Option<&CampaignStore>,
    max_in_flight: usize,
) -> Result<CampaignResult, CampaignError> {
    if max_in_flight == 0 {
        return Err(CampaignError::NoWorkers);
    }
    let campaign_id = store.map(CampaignStore::campaign_id).unwrap_or_default();
    let sink = |ev: &TurnEvent<'_>| -> Result<(), String> {
        let Some(store) = store else { return Ok(()) };
        store
            .persist_if_new(&crate::store::TranscriptRecord {
                campaign_id: campaign_id.clone(),
                example_id: ev.example_id.to_string(),
                phase: ev.phase,
                participant_id: ev.participant.to_string(),
                request_hash: ev.request_hash.to_string(),
                raw_text: ev.raw_text.to_string(),
                parsed_stance: ev.parsed_stance,
                round: ev.round,
                timestamp: ev.recorded_at,
            })
            .map_err(|e| e.to_string())
    };

    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let slots: Mutex<Vec<Option<Result<ExampleRecord, String>>>> = Mutex::new(vec![None; ds.len()]);
    let fatal: Mutex<Option<CampaignError>> = Mutex::new(None);
    let fail = |e: CampaignError| {
        stop.store(true, Ordering::SeqCst);
        fatal.lock().unwrap().get_or_insert(e);
    };

    std::thread::scope(|scope| {
        for _ in 0..max_in_flight.min(ds.len().max(1)) {
            scope.spawn(|| {
                while !stop.load(Ordering::SeqCst) {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(ex) = ds.examples.get(i) else { break };
                    let res = match process_example(ex, panel, &sink) {
                        Ok(rec) => Ok(rec),
                        Err(DebateError::Backend { participant, source }) => Err(format!("{participant}: {source}")),
                        Err(source) => {
                            fail(CampaignError::Debate { example: ex.id.clone(), source });
                            break;
                        }
                    };
                    if let Some(store) = store {
                        let (status, error) = match &res {
                            Ok(_) => (ExampleStatus::Done, None),
                            Err(e) => (ExampleStatus::Failed, Some(e.clone())),
                        };
                        if let Err(e) = store.set_status(&ex.id, status, error) {
                            fail(e.into());
                            break;
                        }
                    }
                    slots.lock().unwrap()[i] = Some(res);
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().unwrap() {
        return Err(e);
    }

    let mut records = Vec::with_capacity(ds.len());
    let mut failures = Vec::new();
    for (ex, slot) in ds.examples.iter().zip(slots.into_inner().unwrap()) {
        match slot.expect("every example ran") {
            Ok(r) => records.push(Some(r)),
            Err(e) => {
                failures.push((ex.id.clone(), e));
                records.push(None);
            }
        }
    }
    Ok(CampaignResult {
        campaign_id,
        dataset: ds.clone(),
        roster: panel.roster(),
        max_rounds: panel.max_rounds,
        records,
        failures,
    })
}

/// Starts or resumes the campaign described by `cfg` in `dir`.
pub fn run_configured(cfg: &CampaignConfig, dir: &Path) -> Result<CampaignResult, CampaignError> {
    run_configured_with(cfg, dir, None)
}

/// As [`run_configured`], with drivers supplied by the caller.
pub fn run_configured_with(
    cfg: &CampaignConfig,
    dir: &Path,
    driver_for: Option<&DriverFactory<'_>>,
) -> Result<CampaignResult, CampaignError> {
    let ds = load_dataset(&cfg.dataset, FormatHint::Auto)?;
    let digest = crate::dataset::file_digest(&cfg.dataset)?;
    let store = CampaignStore::open(dir, fresh_manifest(cfg, &ds, &digest))?;
    let panel = match driver_for {
        Some(f) => cfg.build_panel_with(&ds, store.cache(), f)?,
        None => cfg.build_panel(&ds, store.cache())?,
    };
    run_campaign(&ds, &panel, Some(&store), cfg.max_in_flight)
}

struct NoDriver;

impl Driver for NoDriver {
    fn call(&self, _: &BackendProfile, req: &CompletionRequest) -> Result<Completion, BackendError> {
        Err(BackendError::CacheMiss { hash: format!("replay has no backend for a {} request", if req.is_chat() { "chat" } else { "text" }) })
    }
}

/// Rebuilds a campaign's results from its directory alone. No backend is
/// contacted: every exchange is served from the campaign cache, and every
/// transcript record must resolve to a cached completion.
pub fn load_campaign(dir: &Path) -> Result<CampaignResult, CampaignError> {
    let manifest = CampaignManifest::read(dir)?;
    manifest.verify_dataset()?;
    let mut cfg: CampaignConfig = serde_json::from_value(manifest.config.clone())
        .map_err(|e| CampaignError::Replay(format!("manifest configuration: {e}")))?;
    cfg.dataset = manifest.dataset_path.clone();
    cfg.replay_only = true;
    let cache = Arc::new(
        RequestCache::open(&dir.join(CACHE)).map_err(|e| StoreError::Cache(e.to_string()))?,
    );
    for rec in read_transcripts(&dir.join(TRANSCRIPTS))? {
        if !cache.contains(&rec.request_hash) {
            return Err(StoreError::Unresolvable { key: rec.key().to_string(), hash: rec.request_hash }.into());
        }
    }
    let ds = load_dataset(&cfg.dataset, FormatHint::Auto)?;
    let panel = cfg.build_panel_with(&ds, cache, &|_| Ok(Arc::new(NoDriver) as Arc<dyn Driver>))?;
    let mut result = run_campaign(&ds, &panel, None, cfg.max_in_flight.max(1))?;
    result.campaign_id = manifest.campaign_id;
    Ok(result)
}
