//! A single body-worn node running one tier policy over a trace.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classify::NeuralDetector;
use crate::trace::{AccelSample, Activity, Trace};

/// Alarm code sent by the threshold fall detector.
pub const ALARM_FALL_THRESHOLD: u16 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum NodeError {
    #[error("sample at t={t_ms} ms does not follow last sample at t={last_ms} ms")]
    Order { t_ms: u64, last_ms: u64 },
    #[error("invalid node config: {0}")]
    Config(String),
    #[error("empty trace")]
    EmptyTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tier {
    /// Forwards every sample.
    Tier1,
    /// Forwards samples above the movement threshold.
    Tier2,
    /// Sends one alarm per detected fall.
    Tier3,
    /// Sends the class index of windows a trained network labels FALL.
    Neural,
}

impl Tier {
    pub fn label(self) -> &'static str {
        match self {
            Tier::Tier1 => "1",
            Tier::Tier2 => "2",
            Tier::Tier3 => "3",
            Tier::Neural => "neural",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tier::Neural => f.write_str("Neural"),
            t => write!(f, "Tier {}", t.label()),
        }
    }
}

impl FromStr for Tier {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "tier1" => Ok(Tier::Tier1),
            "2" | "tier2" => Ok(Tier::Tier2),
            "3" | "tier3" => Ok(Tier::Tier3),
            "neural" => Ok(Tier::Neural),
            other => Err(format!("unknown tier {other:?} (expected 1, 2, 3 or neural)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub tier: Tier,
    /// Movement threshold on magnitude², g².
    pub t_move: f64,
    /// Fall threshold on magnitude², g².
    pub t_fall: f64,
    pub refractory_ms: u64,
    pub node_address: u64,
}

impl Default for NodeConfig {
    fn default() -> Self {
        Self {
            tier: Tier::Tier1,
            t_move: 2.0,
            t_fall: 6.0,
            refractory_ms: 2000,
            node_address: 0x0014_4f01_0000_1a2b,
        }
    }
}

impl NodeConfig {
    pub fn with_tier(tier: Tier) -> Self {
        Self {
            tier,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), NodeError> {
        if !(self.t_move > 0.0) {
            return Err(NodeError::Config("t_move must be > 0".into()));
        }
        if !(self.t_fall >= self.t_move) {
            return Err(NodeError::Config("t_fall must be >= t_move".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    TransmitData(AccelSample),
    TransmitAlarm(u16),
    Silent,
}

impl Decision {
    pub fn is_transmission(&self) -> bool {
        !matches!(self, Decision::Silent)
    }
}

/// ax² + ay² + az² in g².
pub fn magnitude_sq(sample: &AccelSample) -> f64 {
    sample.magnitude_sq()
}

/// Mutable per-node state threaded through [`decide`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeState {
    pub last_t_ms: Option<u64>,
    pub last_alarm_t_ms: Option<u64>,
    window: VecDeque<AccelSample>,
    seen: usize,
}

/// One step of the tier policy.
///
/// `detector` is consulted only by [`Tier::Neural`]; without one that tier
/// stays silent.
pub fn decide(
    config: &NodeConfig,
    state: &mut NodeState,
    sample: &AccelSample,
    detector: Option<&NeuralDetector>,
) -> Result<Decision, NodeError> {
    if let Some(last) = state.last_t_ms {
        if sample.t_ms <= last {
            return Err(NodeError::Order {
                t_ms: sample.t_ms,
                last_ms: last,
            });
        }
    }
    state.last_t_ms = Some(sample.t_ms);
    let m2 = sample.magnitude_sq();

    let decision = match config.tier {
        Tier::Tier1 => Decision::TransmitData(*sample),
        Tier::Tier2 if m2 >= config.t_move => Decision::TransmitData(*sample),
        Tier::Tier2 => Decision::Silent,
        Tier::Tier3 => {
            let clear = state
                .last_alarm_t_ms
                .is_none_or(|t| sample.t_ms - t >= config.refractory_ms);
            if m2 >= config.t_fall && clear {
                state.last_alarm_t_ms = Some(sample.t_ms);
                Decision::TransmitAlarm(ALARM_FALL_THRESHOLD)
            } else {
                Decision::Silent
            }
        }
        Tier::Neural => match detector {
            Some(det) => neural_step(state, sample, det),
            None => Decision::Silent,
        },
    };
    Ok(decision)
}

fn neural_step(state: &mut NodeState, sample: &AccelSample, det: &NeuralDetector) -> Decision {
    let spec = det.window;
    state.window.push_back(*sample);
    if state.window.len() > spec.width {
        state.window.pop_front();
    }
    state.seen += 1;
    let complete = state.seen >= spec.width && (state.seen - spec.width).is_multiple_of(spec.stride);
    if !complete {
        return Decision::Silent;
    }
    let features = spec.features(state.window.iter());
    match det.classify(&features) {
        Ok(Activity::Fall) => {
            state.last_alarm_t_ms = Some(sample.t_ms);
            Decision::TransmitAlarm(Activity::Fall.index() as u16)
        }
        _ => Decision::Silent,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLog {
    pub duration_ms: u64,
    pub n_samples: u64,
    pub n_tx_data: u64,
    pub n_tx_alarm: u64,
    #[serde(skip)]
    pub decisions: Option<Vec<Decision>>,
    pub config: NodeConfig,
}

impl NodeLog {
    pub fn n_tx(&self) -> u64 {
        self.n_tx_data + self.n_tx_alarm
    }
}

/// Folds [`decide`] over the trace.
pub fn run_node(trace: &Trace, config: &NodeConfig) -> Result<NodeLog, NodeError> {
    run_node_with(trace, config, None, false)
}

pub fn run_node_with(
    trace: &Trace,
    config: &NodeConfig,
    detector: Option<&NeuralDetector>,
    keep_decisions: bool,
) -> Result<NodeLog, NodeError> {
    let mut decisions = keep_decisions.then(|| Vec::with_capacity(trace.len()));
    let log = fold_decisions(trace, config, detector, |_, d| {
        if let Some(v) = decisions.as_mut() {
            v.push(d);
        }
    })?;
    Ok(NodeLog { decisions, ..log })
}

/// Runs the node and hands every decision to `sink` along with its sample.
pub fn fold_decisions<F>(
    trace: &Trace,
    config: &NodeConfig,
    detector: Option<&NeuralDetector>,
    mut sink: F,
) -> Result<NodeLog, NodeError>
where
    F: FnMut(&AccelSample, Decision),
{
    config.validate()?;
    let (first, last) = match (trace.samples.first(), trace.samples.last()) {
        (Some(f), Some(l)) => (f.t_ms, l.t_ms),
        _ => return Err(NodeError::EmptyTrace),
    };
    let mut state = NodeState::default();
    let (mut n_tx_data, mut n_tx_alarm) = (0, 0);
    for s in &trace.samples {
        let d = decide(config, &mut state, s, detector)?;
        match d {
            Decision::TransmitData(_) => n_tx_data += 1,
            Decision::TransmitAlarm(_) => n_tx_alarm += 1,
            Decision::Silent => {}
        }
        sink(s, d);
    }
    Ok(NodeLog {
        duration_ms: last - first + trace.sample_interval_ms.round() as u64,
        n_samples: trace.len() as u64,
        n_tx_data,
        n_tx_alarm,
        decisions: None,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(t: u64, x: f64, y: f64, z: f64) -> AccelSample {
        AccelSample::new(t, x, y, z, Activity::Rest)
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude_sq(&s(0, 0.0, 0.0, 1.0)), 1.0);
        assert_eq!(magnitude_sq(&s(0, 1.0, 2.0, 2.0)), 9.0);
        assert!((magnitude_sq(&s(0, 0.5, -0.5, 0.8)) - 1.14).abs() < 1e-12);
    }

    #[test]
    fn tier1_always_transmits() {
        let cfg = NodeConfig::with_tier(Tier::Tier1);
        let mut st = NodeState::default();
        let d = decide(&cfg, &mut st, &s(0, 0.0, 0.0, 1.0), None).unwrap();
        assert!(matches!(d, Decision::TransmitData(_)));
    }

    #[test]
    fn tier2_threshold() {
        let cfg = NodeConfig::with_tier(Tier::Tier2);
        let mut st = NodeState::default();
        assert_eq!(decide(&cfg, &mut st, &s(0, 0.0, 0.0, 1.0), None).unwrap(), Decision::Silent);
        let hot = s(80, 1.5, 0.0, 1.5);
        assert_eq!(decide(&cfg, &mut st, &hot, None).unwrap(), Decision::TransmitData(hot));
    }

    #[test]
    fn tier3_refractory() {
        let cfg = NodeConfig::with_tier(Tier::Tier3);
        let mut st = NodeState::default();
        let a = s(1000, 2.5, 0.0, 1.0);
        assert!((a.magnitude_sq() - 7.25).abs() < 1e-12);
        assert_eq!(
            decide(&cfg, &mut st, &a, None).unwrap(),
            Decision::TransmitAlarm(ALARM_FALL_THRESHOLD)
        );
        let b = s(1500, 2.0, 2.0, 0.0);
        assert_eq!(decide(&cfg, &mut st, &b, None).unwrap(), Decision::Silent);
        let c = s(3000, 2.0, 2.0, 0.0);
        assert!(matches!(decide(&cfg, &mut st, &c, None).unwrap(), Decision::TransmitAlarm(_)));
    }

    #[test]
    fn out_of_order_sample() {
        let cfg = NodeConfig::default();
        let mut st = NodeState::default();
        decide(&cfg, &mut st, &s(100, 0.0, 0.0, 1.0), None).unwrap();
        let err = decide(&cfg, &mut st, &s(100, 0.0, 0.0, 1.0), None).unwrap_err();
        assert_eq!(err, NodeError::Order { t_ms: 100, last_ms: 100 });
    }

    #[test]
    fn three_rest_samples_tier2() {
        let trace = Trace::new(
            80.0,
            vec![s(0, 0.0, 0.0, 1.0), s(80, 0.0, 1.0, 0.0), s(160, 1.0, 0.0, 0.0)],
        )
        .unwrap();
        let log = run_node(&trace, &NodeConfig::with_tier(Tier::Tier2)).unwrap();
        assert_eq!((log.n_samples, log.n_tx_data, log.n_tx_alarm), (3, 0, 0));
        assert_eq!(log.duration_ms, 240);
    }

    #[test]
    fn config_validation() {
        let cfg = NodeConfig {
            t_fall: 1.0,
            ..NodeConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(NodeError::Config(_))));
        let cfg = NodeConfig {
            t_move: 0.0,
            t_fall: 0.0,
            ..NodeConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn tier_parsing() {
        assert_eq!("1".parse::<Tier>().unwrap(), Tier::Tier1);
        assert_eq!("neural".parse::<Tier>().unwrap(), Tier::Neural);
        assert!("4".parse::<Tier>().is_err());
    }
}
