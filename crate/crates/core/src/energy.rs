//! Affine per-operation energy model, calibration, and tier comparison.
//!
//! A run costs `duration·(p_listen + p_base) + n_samples·e_sample + n_tx·e_tx`.
//! The radio never sleeps, so `p_listen` sets a floor that no amount of
//! on-node filtering can get under.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::node::{NodeLog, Tier};

#[derive(Debug, thiserror::Error)]
pub enum EnergyError {
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("comparison failed: {0}")]
    Comparison(String),
    #[error("params file line {line}: {reason}")]
    Params { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-operation energy constants. Powers in mW, energies in mWs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    pub p_listen_mw: f64,
    pub p_base_mw: f64,
    pub e_sample_mws: f64,
    pub e_tx_mws: f64,
}

impl EnergyParams {
    /// Parameters solved from the measured tier-1/tier-2 averages.
    pub fn paper_calibrated() -> Self {
        calibrate(&CalibrationTargets::paper()).expect("paper targets are consistent")
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let all = [
            ("p_listen_mw", self.p_listen_mw),
            ("p_base_mw", self.p_base_mw),
            ("e_sample_mws", self.e_sample_mws),
            ("e_tx_mws", self.e_tx_mws),
        ];
        match all.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            Some((k, v)) => Err(EnergyError::Params {
                line: 0,
                reason: format!("{k} must be finite and >= 0, got {v}"),
            }),
            None => Ok(()),
        }
    }

    /// Idle floor in W.
    pub fn floor_w(&self) -> f64 {
        (self.p_listen_mw + self.p_base_mw) / 1000.0
    }

    /// Energy in Ws for a run described by counts that may be fractional
    /// (per-minute rates, for instance).
    pub fn energy_ws(&self, duration_s: f64, n_samples: f64, n_tx: f64) -> f64 {
        duration_s * (self.p_listen_mw + self.p_base_mw) / 1000.0
            + n_samples * self.e_sample_mws / 1000.0
            + n_tx * self.e_tx_mws / 1000.0
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "e_tx_mws={}", self.e_tx_mws);
        let _ = writeln!(s, "p_listen_mw={}", self.p_listen_mw);
        let _ = writeln!(s, "p_base_mw={}", self.p_base_mw);
        let _ = writeln!(s, "e_sample_mws={}", self.e_sample_mws);
        s
    }

    pub fn parse(text: &str) -> Result<Self, EnergyError> {
        let mut vals: [Option<f64>; 4] = [None; 4];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| EnergyError::Params { line: i + 1, reason };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad("expected key=value".into()))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|e| bad(format!("{}: {e}", k.trim())))?;
            let slot = match k.trim() {
                "e_tx_mws" => 0,
                "p_listen_mw" => 1,
                "p_base_mw" => 2,
                "e_sample_mws" => 3,
                other => return Err(bad(format!("unknown key {other:?}"))),
            };
            vals[slot] = Some(v);
        }
        let names = ["e_tx_mws", "p_listen_mw", "p_base_mw", "e_sample_mws"];
        let get = |i: usize| {
            vals[i].ok_or_else(|| EnergyError::Params {
                line: 0,
                reason: format!("missing {}", names[i]),
            })
        };
        let p = Self {
            e_tx_mws: get(0)?,
            p_listen_mw: get(1)?,
            p_base_mw: get(2)?,
            e_sample_mws: get(3)?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EnergyError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EnergyError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub total_ws: f64,
    pub power_w: f64,
    pub n_tx: u64,
    pub n_samples: u64,
    pub duration_ms: u64,
    /// mWs per sample.
    pub ws_per_sample: f64,
}

impl EnergyReport {
    pub fn duration_s(&self) -> f64 {
        self.duration_ms as f64 / 1000.0
    }

    pub fn tx_per_min(&self) -> f64 {
        if self.duration_ms == 0 {
            0.0
        } else {
            self.n_tx as f64 * 60_000.0 / self.duration_ms as f64
        }
    }
}

pub fn account(log: &NodeLog, params: &EnergyParams) -> EnergyReport {
    let duration_s = log.duration_ms as f64 / 1000.0;
    let total_ws = params.energy_ws(duration_s, log.n_samples as f64, log.n_tx() as f64);
    EnergyReport {
        total_ws,
        power_w: if log.duration_ms == 0 { 0.0 } else { total_ws / duration_s },
        n_tx: log.n_tx(),
        n_samples: log.n_samples,
        duration_ms: log.duration_ms,
        ws_per_sample: if log.n_samples == 0 {
            0.0
        } else {
            1000.0 * total_ws / log.n_samples as f64
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub p1_w: f64,
    pub p2_w: f64,
    /// Tier-1 transmissions per minute; equal to the sampling rate.
    pub n_tx1: f64,
    pub n_tx2: f64,
    pub comm_share: f64,
    pub cpu_split: f64,
}

impl CalibrationTargets {
    pub fn paper() -> Self {
        Self {
            p1_w: 0.1834,
            p2_w: 0.1601,
            n_tx1: 746.8,
            n_tx2: 37.2,
            comm_share: 0.8,
            cpu_split: 0.5,
        }
    }
}

/// Solves the model constants from two measured operating points.
pub fn calibrate(t: &CalibrationTargets) -> Result<EnergyParams, EnergyError> {
    let fail = |m: String| Err(EnergyError::Calibration(m));
    if !(t.p1_w > t.p2_w) {
        return fail(format!("p1 ({}) must exceed p2 ({})", t.p1_w, t.p2_w));
    }
    if !(t.n_tx1 > t.n_tx2) || !(t.n_tx2 >= 0.0) {
        return fail(format!("need n_tx1 > n_tx2 >= 0, got {} and {}", t.n_tx1, t.n_tx2));
    }
    if !(t.comm_share > 0.0 && t.comm_share < 1.0) {
        return fail(format!("comm_share must lie in (0, 1), got {}", t.comm_share));
    }
    if !(0.0..=1.0).contains(&t.cpu_split) {
        return fail(format!("cpu_split must lie in [0, 1], got {}", t.cpu_split));
    }

    let e_tx = 60.0 * (t.p1_w - t.p2_w) / (t.n_tx1 - t.n_tx2) * 1000.0;
    let p_listen = t.comm_share * t.p1_w * 1000.0 - t.n_tx1 * e_tx / 60.0;
    let budget_ws = 60.0 * t.p1_w * (1.0 - t.comm_share);
    let e_sample = 1000.0 * t.cpu_split * budget_ws / t.n_tx1;
    let p_base = 1000.0 * (1.0 - t.cpu_split) * budget_ws / 60.0;

    let params = EnergyParams {
        p_listen_mw: p_listen,
        p_base_mw: p_base,
        e_sample_mws: e_sample,
        e_tx_mws: e_tx,
    };
    if p_listen < 0.0 {
        return fail(format!(
            "transmission energy {:.4} W exceeds the communication budget; p_listen would be {p_listen:.4} mW",
            t.n_tx1 * e_tx / 60_000.0
        ));
    }
    if params.validate().is_err() {
        return fail(format!("non-finite or negative solution {params:?}"));
    }
    Ok(params)
}

/// Reductions from tier `from` to tier `to`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierPair {
    pub from: Tier,
    pub to: Tier,
    pub power_reduction_pct: f64,
    pub data_reduction_pct: f64,
    pub per_sample_reduction_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub pairs: Vec<TierPair>,
    pub ws_per_sample: BTreeMap<Tier, f64>,
}

impl ComparisonReport {
    pub fn pair(&self, from: Tier, to: Tier) -> Option<&TierPair> {
        self.pairs.iter().find(|p| p.from == from && p.to == to)
    }
}

pub fn reduction_pct(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        100.0 * (1.0 - b / a)
    }
}

/// Pairwise reductions for every ordered pair of tiers present.
pub fn compare(reports: &BTreeMap<Tier, EnergyReport>) -> Result<ComparisonReport, EnergyError> {
    for need in [Tier::Tier1, Tier::Tier2] {
        if !reports.contains_key(&need) {
            return Err(EnergyError::Comparison(format!("missing {need} report")));
        }
    }
    let tiers: Vec<Tier> = reports.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, &a) in tiers.iter().enumerate() {
        for &b in &tiers[i + 1..] {
            let (ra, rb) = (&reports[&a], &reports[&b]);
            pairs.push(TierPair {
                from: a,
                to: b,
                power_reduction_pct: reduction_pct(ra.power_w, rb.power_w),
                data_reduction_pct: reduction_pct(ra.tx_per_min(), rb.tx_per_min()),
                per_sample_reduction_pct: reduction_pct(ra.ws_per_sample, rb.ws_per_sample),
            });
        }
    }
    Ok(ComparisonReport {
        pairs,
        ws_per_sample: reports.iter().map(|(t, r)| (*t, r.ws_per_sample)).collect(),
    })
}
