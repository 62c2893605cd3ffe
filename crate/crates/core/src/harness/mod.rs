//! Multi-run experiments wiring trace → node → energy → station → store.

mod report;
mod verify;

pub use report::{emit_report, ReportFormat};
pub use verify::{verify_against_paper, Check, PAPER_TIER3_POWER_W};

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classify::NeuralDetector;
use crate::energy::{account, compare, ComparisonReport, EnergyError, EnergyParams, EnergyReport};
use crate::node::{fold_decisions, Decision, NodeConfig, NodeError, NodeLog, Tier};
use crate::station::{
    forward, frame_for, provision_home, Ack, IngestError, Ingestor, NotificationKind, RadioFrame,
    Target,
};
use crate::store::{Store, StoreError};
use crate::trace::{generate_trace, load_trace, Trace, TraceError, TraceSpec};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Energy(#[from] EnergyError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("frame codec: {0}")]
    Frame(String),
    #[error("result file: {0}")]
    ResultFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    /// Reused verbatim for every run.
    File(PathBuf),
    /// Regenerated per run with seed `base_seed + run`.
    Generated { profile: String, spec: TraceSpec },
}

impl TraceSource {
    pub fn reference() -> Self {
        TraceSource::Generated {
            profile: "reference".into(),
            spec: TraceSpec::reference(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub trace: TraceSource,
    pub tiers: Vec<Tier>,
    pub runs: usize,
    pub base_seed: u64,
    pub params: EnergyParams,
    pub params_label: String,
    /// Thresholds and address; the tier field is overridden per run.
    pub node: NodeConfig,
    /// Per-run stores go to `<dir>/tier-<t>/run-<r>`; in memory when unset.
    pub store_dir: Option<PathBuf>,
    pub detector: Option<NeuralDetector>,
}

impl ExperimentConfig {
    /// Three runs of tiers 1–3 on regenerated reference traces with the
    /// calibrated parameters.
    pub fn reference(base_seed: u64) -> Self {
        Self {
            trace: TraceSource::reference(),
            tiers: vec![Tier::Tier1, Tier::Tier2, Tier::Tier3],
            runs: 3,
            base_seed,
            params: EnergyParams::paper_calibrated(),
            params_label: "paper_calibrated".into(),
            node: NodeConfig::default(),
            store_dir: None,
            detector: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.runs == 0 {
            return Err(HarnessError::Config("runs must be >= 1".into()));
        }
        if self.tiers.is_empty() {
            return Err(HarnessError::Config("at least one tier is required".into()));
        }
        if self.tiers.contains(&Tier::Neural) && self.detector.is_none() {
            return Err(HarnessError::Config("the neural tier needs a trained model".into()));
        }
        self.params.validate()?;
        self.node.validate()?;
        Ok(())
    }
}

/// Ingestion-side counters of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub acks_ok: u64,
    pub acks_other: u64,
    pub measurements_stored: u64,
    pub alarms_stored: u64,
    pub snapshot_events: u64,
    pub call_events: u64,
    /// Alarms whose two events were a snapshot then a call, both on the
    /// same target.
    pub well_formed_alarm_events: u64,
    pub unresolved_targets: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub tier: Tier,
    /// 1-based.
    pub run: usize,
    pub seed: Option<u64>,
    pub log: NodeLog,
    pub energy: EnergyReport,
    pub send_rate_ms: f64,
    pub fall_events: u64,
    pub falls_detected: u64,
    pub false_alarms: u64,
    pub pipeline: PipelineStats,
}

/// Column values of one table row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RowValues {
    pub total_ws: f64,
    pub power_w: f64,
    pub data: f64,
    pub send_rate_ms: f64,
    pub samples: f64,
}

impl RowValues {
    fn of(row: &RunRow) -> Self {
        Self {
            total_ws: row.energy.total_ws,
            power_w: row.energy.power_w,
            data: row.energy.n_tx as f64,
            send_rate_ms: row.send_rate_ms,
            samples: row.energy.n_samples as f64,
        }
    }

    fn fold(rows: &[RowValues], f: impl Fn(&[f64]) -> f64) -> Self {
        let col = |g: fn(&RowValues) -> f64| f(&rows.iter().map(g).collect::<Vec<_>>());
        Self {
            total_ws: col(|r| r.total_ws),
            power_w: col(|r| r.power_w),
            data: col(|r| r.data),
            send_rate_ms: col(|r| r.send_rate_ms),
            samples: col(|r| r.samples),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSummary {
    pub max: RowValues,
    pub min: RowValues,
    pub average: RowValues,
    /// All runs of the tier folded into one report.
    pub pooled: EnergyReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trace_source: String,
    pub params_label: String,
    pub params: EnergyParams,
    pub base_seed: u64,
    pub runs: Vec<RunRow>,
    pub summaries: BTreeMap<Tier, TierSummary>,
    pub comparison: Option<ComparisonReport>,
}

impl RunResult {
    pub fn rows(&self, tier: Tier) -> impl Iterator<Item = &RunRow> {
        self.runs.iter().filter(move |r| r.tier == tier)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::ResultFile(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

fn pooled(reports: &[EnergyReport]) -> EnergyReport {
    let total_ws: f64 = reports.iter().map(|r| r.total_ws).sum();
    let duration_ms: u64 = reports.iter().map(|r| r.duration_ms).sum();
    let n_samples: u64 = reports.iter().map(|r| r.n_samples).sum();
    let n_tx: u64 = reports.iter().map(|r| r.n_tx).sum();
    EnergyReport {
        total_ws,
        power_w: if duration_ms == 0 {
            0.0
        } else {
            total_ws * 1000.0 / duration_ms as f64
        },
        n_tx,
        n_samples,
        duration_ms,
        ws_per_sample: if n_samples == 0 {
            0.0
        } else {
            1000.0 * total_ws / n_samples as f64
        },
    }
}

fn summarize(rows: &[&RunRow]) -> TierSummary {
    let vals: Vec<RowValues> = rows.iter().map(|r| RowValues::of(r)).collect();
    TierSummary {
        max: RowValues::fold(&vals, |c| c.iter().copied().fold(f64::MIN, f64::max)),
        min: RowValues::fold(&vals, |c| c.iter().copied().fold(f64::MAX, f64::min)),
        average: RowValues::fold(&vals, |c| c.iter().sum::<f64>() / c.len() as f64),
        pooled: pooled(&rows.iter().map(|r| r.energy).collect::<Vec<_>>()),
    }
}

/// Mean inter-transmission interval for tier 1, mean inter-sample interval
/// otherwise.
fn send_rate_ms(tier: Tier, log: &NodeLog) -> f64 {
    let denom = match tier {
        Tier::Tier1 => log.n_tx(),
        _ => log.n_samples,
    };
    if denom == 0 {
        0.0
    } else {
        log.duration_ms as f64 / denom as f64
    }
}

/// Alarms within a fall event (or up to one second after it) detect it;
/// others are false alarms.
fn score_alarms(trace: &Trace, alarm_times: &[u64]) -> (u64, u64, u64) {
    let events: Vec<(u64, u64)> = trace
        .fall_events()
        .into_iter()
        .map(|r| (trace.samples[r.start].t_ms, trace.samples[r.end - 1].t_ms + 1000))
        .collect();
    let mut hit = vec![false; events.len()];
    let mut false_alarms = 0;
    for &t in alarm_times {
        match events.iter().position(|&(a, b)| t >= a && t <= b) {
            Some(i) => hit[i] = true,
            None => false_alarms += 1,
        }
    }
    (
        events.len() as u64,
        hit.iter().filter(|h| **h).count() as u64,
        false_alarms,
    )
}

fn run_one(
    cfg: &ExperimentConfig,
    tier: Tier,
    run: usize,
    shared_trace: Option<&Trace>,
) -> Result<RunRow, HarnessError> {
    let seed = cfg.base_seed + run as u64;
    let owned;
    let (trace, trace_seed) = match (&cfg.trace, shared_trace) {
        (TraceSource::Generated { spec, .. }, _) => {
            owned = generate_trace(spec, seed)?;
            (&owned, Some(seed))
        }
        (TraceSource::File(_), Some(t)) => (t, None),
        (TraceSource::File(p), None) => {
            owned = load_trace(p)?;
            (&owned, None)
        }
    };

    let store = match &cfg.store_dir {
        Some(root) => {
            let dir = root.join(format!("tier-{}", tier.label())).join(format!("run-{}", run + 1));
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
            Store::open(&dir)?
        }
        None => Store::in_memory(),
    };
    let node_cfg = NodeConfig {
        tier,
        ..cfg.node.clone()
    };
    let mut ingestor = Ingestor::new(store, node_cfg.t_move);
    provision_home(ingestor.store_mut(), node_cfg.node_address)?;

    let mut stats = PipelineStats::default();
    let mut alarm_times = Vec::new();
    let mut seq: u32 = 0;
    let mut failure: Option<HarnessError> = None;
    let log = fold_decisions(trace, &node_cfg, cfg.detector.as_ref(), |sample, decision| {
        if failure.is_some() {
            return;
        }
        let Some(frame) = frame_for(node_cfg.node_address, seq, sample.t_ms, &decision) else {
            return;
        };
        seq = seq.wrapping_add(1);
        if let Decision::TransmitAlarm(_) = decision {
            alarm_times.push(sample.t_ms);
        }
        let bytes = frame.encode();
        let parsed = match RadioFrame::parse(&bytes) {
            Ok(f) => f,
            Err(e) => {
                failure = Some(HarnessError::Frame(e.to_string()));
                return;
            }
        };
        match ingestor.handle_post(&forward(&parsed).to_line()) {
            Ok(Ack::Ok) => stats.acks_ok += 1,
            Ok(_) => stats.acks_other += 1,
            Err(e) => failure = Some(e.into()),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }

    let store = ingestor.store();
    let node_id = store
        .node_by_address(&crate::station::node_hex(node_cfg.node_address))
        .map(|n| n.id)
        .expect("provisioned node");
    let rows = store.query_measurements(node_id, 0, u64::MAX, false)?;
    stats.measurements_stored = rows.len() as u64;
    let events = &ingestor.notifications().events;
    stats.alarms_stored = rows
        .iter()
        .filter(|r| events.iter().any(|e| e.measurement_id == r.measurement.id))
        .count() as u64;
    stats.snapshot_events = events
        .iter()
        .filter(|e| e.kind == NotificationKind::CameraSnapshotRequested)
        .count() as u64;
    stats.call_events = events
        .iter()
        .filter(|e| e.kind == NotificationKind::SipCallInitiated)
        .count() as u64;
    stats.unresolved_targets = events.iter().filter(|e| e.target == Target::Unresolved).count() as u64;
    stats.well_formed_alarm_events = events
        .chunks(2)
        .filter(|pair| {
            pair.len() == 2
                && pair[0].kind == NotificationKind::CameraSnapshotRequested
                && pair[1].kind == NotificationKind::SipCallInitiated
                && pair[0].measurement_id == pair[1].measurement_id
                && pair[0].target == pair[1].target
        })
        .count() as u64;

    let (fall_events, falls_detected, false_alarms) = score_alarms(trace, &alarm_times);
    let energy = account(&log, &cfg.params);
    Ok(RunRow {
        tier,
        run: run + 1,
        seed: trace_seed,
        send_rate_ms: send_rate_ms(tier, &log),
        log,
        energy,
        fall_events,
        falls_detected,
        false_alarms,
        pipeline: stats,
    })
}

/// Runs every (tier, run) pair, in parallel, and assembles the result in
/// (tier, run) order.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunResult, HarnessError> {
    cfg.validate()?;
    let shared = match &cfg.trace {
        TraceSource::File(p) => Some(load_trace(p)?),
        TraceSource::Generated { .. } => None,
    };
    let mut tiers = cfg.tiers.clone();
    tiers.sort();
    tiers.dedup();
    let jobs: Vec<(Tier, usize)> = tiers
        .iter()
        .flat_map(|&t| (0..cfg.runs).map(move |r| (t, r)))
        .collect();
    let mut rows = jobs
        .par_iter()
        .map(|&(t, r)| run_one(cfg, t, r, shared.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    rows.sort_by_key(|r| (r.tier, r.run));

    let summaries: BTreeMap<Tier, TierSummary> = tiers
        .iter()
        .map(|&t| {
            let tier_rows: Vec<&RunRow> = rows.iter().filter(|r| r.tier == t).collect();
            (t, summarize(&tier_rows))
        })
        .collect();
    let pooled_reports: BTreeMap<Tier, EnergyReport> =
        summaries.iter().map(|(t, s)| (*t, s.pooled)).collect();
    let comparison = compare(&pooled_reports).ok();

    Ok(RunResult {
        trace_source: match &cfg.trace {
            TraceSource::File(p) => p.display().to_string(),
            TraceSource::Generated { profile, .. } => format!("generated:{profile}"),
        },
        params_label: cfg.params_label.clone(),
        params: cfg.params,
        base_seed: cfg.base_seed,
        runs: rows,
        summaries,
        comparison,
    })
}
