use std::fmt;

use serde::{Deserialize, Serialize};

use super::RunResult;
use crate::energy::{calibrate, CalibrationTargets};
use crate::node::Tier;

/// Measured tier-3 power on the physical testbed.
pub const PAPER_TIER3_POWER_W: f64 = 0.1627;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub id: String,
    pub name: String,
    pub measured: f64,
    pub target: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<4} {}: measured {:.6}, target {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.target
        )
    }
}

fn check(id: &str, name: &str, measured: f64, target: String, pass: bool) -> Check {
    Check {
        id: id.into(),
        name: name.into(),
        measured,
        target,
        pass: pass && measured.is_finite(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn within_rel(id: &str, name: &str, measured: f64, target: f64, tol: f64) -> Check {
    check(
        id,
        name,
        measured,
        format!("{target} \u{b1} {}%", tol * 100.0),
        rel(measured, target) <= tol,
    )
}

fn within_abs(id: &str, name: &str, measured: f64, target: f64, tol: f64) -> Check {
    check(
        id,
        name,
        measured,
        format!("{target} \u{b1} {tol}"),
        (measured - target).abs() <= tol,
    )
}

fn missing(id: &str, name: &str, what: &str) -> Check {
    check(id, name, f64::NAN, format!("requires {what}"), false)
}

/// Calibrates on the published operating points and replays one synthetic
/// minute of each; returns the worse relative power error.
fn calibration_error() -> f64 {
    let t = CalibrationTargets::paper();
    let Ok(params) = calibrate(&t) else {
        return f64::INFINITY;
    };
    let minute = |n_tx: f64| {
        // per-minute counts are fractional, so evaluate the formula directly
        params.energy_ws(60.0, t.n_tx1, n_tx) / 60.0
    };
    rel(minute(t.n_tx1), t.p1_w).max(rel(minute(t.n_tx2), t.p2_w))
}

/// Evaluates the result-level acceptance checks.
pub fn verify_against_paper(result: &RunResult) -> Vec<Check> {
    let mut out = Vec::new();

    let err = calibration_error();
    out.push(check(
        "C1",
        "calibration reproduces tier-1/tier-2 power",
        err,
        "relative error <= 1e-9".into(),
        err <= 1e-9,
    ));

    let cmp = result.comparison.as_ref();
    let p12 = cmp.and_then(|c| c.pair(Tier::Tier1, Tier::Tier2));
    let p23 = cmp.and_then(|c| c.pair(Tier::Tier2, Tier::Tier3));

    out.push(match p12 {
        Some(p) => within_abs("C2", "power reduction T1->T2 (%)", p.power_reduction_pct, 12.7, 0.5),
        None => missing("C2", "power reduction T1->T2 (%)", "tiers 1 and 2"),
    });
    out.push(match p12 {
        Some(p) => check(
            "C3",
            "data reduction T1->T2 (%)",
            p.data_reduction_pct,
            "[94.5, 96.5]".into(),
            (94.5..=96.5).contains(&p.data_reduction_pct),
        ),
        None => missing("C3", "data reduction T1->T2 (%)", "tiers 1 and 2"),
    });

    let t3: Vec<_> = result.rows(Tier::Tier3).collect();
    out.push(if t3.is_empty() {
        missing("C4a", "tier-3 transmissions per run", "tier 3")
    } else {
        let worst = t3
            .iter()
            .map(|r| r.log.n_tx())
            .max_by_key(|&n| n.abs_diff(8))
            .unwrap_or(0);
        check(
            "C4a",
            "tier-3 transmissions per run (worst)",
            worst as f64,
            "8 in every run".into(),
            t3.iter().all(|r| r.log.n_tx() == 8),
        )
    });
    out.push(match p23 {
        Some(p) => check(
            "C4b",
            "data reduction T2->T3 (%)",
            p.data_reduction_pct,
            ">= 99.5".into(),
            p.data_reduction_pct >= 99.5,
        ),
        None => missing("C4b", "data reduction T2->T3 (%)", "tiers 2 and 3"),
    });

    out.push(match result.summaries.get(&Tier::Tier3) {
        Some(s) => within_rel("C5", "tier-3 power (W)", s.pooled.power_w, PAPER_TIER3_POWER_W, 0.03),
        None => missing("C5", "tier-3 power (W)", "tier 3"),
    });

    let wps = |t: Tier| cmp.and_then(|c| c.ws_per_sample.get(&t).copied());
    out.push(match wps(Tier::Tier1) {
        Some(v) => within_rel("C6a", "tier-1 mWs per sample", v, 14.79, 0.01),
        None => missing("C6a", "tier-1 mWs per sample", "tier 1"),
    });
    out.push(match wps(Tier::Tier2) {
        Some(v) => within_rel("C6b", "tier-2 mWs per sample", v, 8.17, 0.02),
        None => missing("C6b", "tier-2 mWs per sample", "tier 2"),
    });
    out.push(match p12 {
        Some(p) => within_abs(
            "C6c",
            "mWs per sample reduction T1->T2 (%)",
            p.per_sample_reduction_pct,
            44.8,
            1.0,
        ),
        None => missing("C6c", "mWs per sample reduction T1->T2 (%)", "tiers 1 and 2"),
    });

    let lost: u64 = result
        .runs
        .iter()
        .map(|r| r.log.n_tx().abs_diff(r.pipeline.acks_ok))
        .sum();
    out.push(check(
        "C9a",
        "transmissions without an OK ack",
        lost as f64,
        "0".into(),
        !result.runs.is_empty() && lost == 0,
    ));
    let bad_alarms: u64 = result
        .runs
        .iter()
        .map(|r| {
            let p = &r.pipeline;
            let ok = p.snapshot_events == p.alarms_stored
                && p.call_events == p.alarms_stored
                && p.well_formed_alarm_events == p.alarms_stored
                && p.alarms_stored == r.log.n_tx_alarm;
            u64::from(!ok)
        })
        .sum();
    out.push(check(
        "C9b",
        "runs whose alarms lack one camera and one call event",
        bad_alarms as f64,
        "0".into(),
        !result.runs.is_empty() && bad_alarms == 0,
    ));

    out
}
