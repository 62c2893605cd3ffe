//! Synthetic triaxial accelerometer traces with ground-truth activity labels.
//!
//! The generator draws a squared magnitude from the band of each sample's
//! label and points it in a uniformly random direction, so every axis is
//! exercised while the quantity the detectors look at (`ax² + ay² + az²`)
//! stays inside a known band.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Sampling period of the reference profile in milliseconds.
pub const REFERENCE_INTERVAL_MS: f64 = 80.59;

/// Minimum gap between two injected falls.
pub const MIN_FALL_SEPARATION_MS: f64 = 10_000.0;

const CSV_HEADER: &str = "t_ms,ax_g,ay_g,az_g,label";

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("invalid trace spec: {0}")]
    Spec(String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Ground-truth activity of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Activity {
    Rest,
    Walk,
    Fall,
}

impl Activity {
    pub const ALL: [Activity; 3] = [Activity::Rest, Activity::Walk, Activity::Fall];

    /// Class index used by the classifiers (REST=0, WALK=1, FALL=2).
    pub fn index(self) -> usize {
        match self {
            Activity::Rest => 0,
            Activity::Walk => 1,
            Activity::Fall => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Activity::Rest => "REST",
            Activity::Walk => "WALK",
            Activity::Fall => "FALL",
        }
    }
}

impl fmt::Display for Activity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Activity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "REST" => Ok(Activity::Rest),
            "WALK" => Ok(Activity::Walk),
            "FALL" => Ok(Activity::Fall),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelSample {
    pub t_ms: u64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
    pub label: Activity,
}

impl AccelSample {
    pub fn new(t_ms: u64, ax: f64, ay: f64, az: f64, label: Activity) -> Self {
        Self {
            t_ms,
            ax,
            ay,
            az,
            label,
        }
    }

    /// Total square of the three axes, in g².
    pub fn magnitude_sq(&self) -> f64 {
        self.ax * self.ax + self.ay * self.ay + self.az * self.az
    }
}

/// Half-open interval `[lo, hi)` of squared magnitudes in g².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v < self.hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSpec {
    pub duration_min: f64,
    pub sample_interval_ms: f64,
    /// Fraction of samples labeled WALK.
    pub activity_fraction: f64,
    pub fall_count: u32,
    pub fall_duration_samples: u32,
    pub rest_band: Band,
    pub walk_band: Band,
    pub fall_band: Band,
}

impl Default for TraceSpec {
    fn default() -> Self {
        Self {
            duration_min: 1.0,
            sample_interval_ms: REFERENCE_INTERVAL_MS,
            activity_fraction: 0.0,
            fall_count: 0,
            fall_duration_samples: 3,
            rest_band: Band::new(0.8, 1.2),
            walk_band: Band::new(2.0, 6.0),
            fall_band: Band::new(6.0, 12.0),
        }
    }
}

impl TraceSpec {
    /// Profile whose tier statistics line up with the measured tables:
    /// 233 minutes at 80.59 ms, 4.98 % walking and eight falls.
    pub fn reference() -> Self {
        Self {
            duration_min: 233.0,
            activity_fraction: 0.0498,
            fall_count: 8,
            ..Self::default()
        }
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_min * 60_000.0 / self.sample_interval_ms).round() as usize
    }

    pub fn band(&self, label: Activity) -> Band {
        match label {
            Activity::Rest => self.rest_band,
            Activity::Walk => self.walk_band,
            Activity::Fall => self.fall_band,
        }
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        let err = |m: &str| Err(TraceError::Spec(m.to_string()));
        if !(self.duration_min > 0.0) || !self.duration_min.is_finite() {
            return err("duration_min must be > 0");
        }
        if !(self.sample_interval_ms > 0.0) || !self.sample_interval_ms.is_finite() {
            return err("sample_interval_ms must be > 0");
        }
        if !(0.0..=1.0).contains(&self.activity_fraction) {
            return err("activity_fraction must lie in [0, 1]");
        }
        for (name, b) in [
            ("rest_band", self.rest_band),
            ("walk_band", self.walk_band),
            ("fall_band", self.fall_band),
        ] {
            if !(b.lo >= 0.0 && b.hi > b.lo && b.hi.is_finite()) {
                return Err(TraceError::Spec(format!("{name} must satisfy 0 <= lo < hi")));
            }
        }
        if self.walk_band.lo < self.rest_band.hi {
            return err("walk_band lower bound must be >= rest_band upper bound");
        }
        if self.fall_band.lo < self.walk_band.hi {
            return err("fall_floor must be >= walk_band upper bound");
        }
        if self.fall_count > 0 && self.fall_duration_samples == 0 {
            return err("fall_duration_samples must be >= 1");
        }
        let n = self.sample_count();
        if n == 0 {
            return err("trace would contain no samples");
        }
        let fall_samples = self.fall_count as usize * self.fall_duration_samples as usize;
        if self.activity_fraction + fall_samples as f64 / n as f64 > 1.0 {
            return err("activity_fraction + fall samples fraction must be <= 1");
        }
        if self.fall_count > 0 {
            let spacing = n as f64 / (self.fall_count as f64 + 1.0);
            let gap_ms = (spacing - self.fall_duration_samples as f64) * self.sample_interval_ms;
            if gap_ms <= MIN_FALL_SEPARATION_MS {
                return err("falls cannot be separated by more than 10 s at this duration");
            }
        }
        Ok(())
    }

    /// Start index of each fall; falls are spread evenly over the run.
    fn fall_starts(&self, n: usize) -> Vec<usize> {
        let k = self.fall_count as usize;
        let half = self.fall_duration_samples as usize / 2;
        (1..=k)
            .map(|i| ((i * n) as f64 / (k + 1) as f64).round() as usize - half)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub sample_interval_ms: f64,
    pub samples: Vec<AccelSample>,
    /// Generation seed; `None` for imported traces.
    pub seed: Option<u64>,
}

impl Trace {
    pub fn new(sample_interval_ms: f64, samples: Vec<AccelSample>) -> Result<Self, TraceError> {
        check_samples(&samples)?;
        Ok(Self {
            sample_interval_ms,
            samples,
            seed: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples whose timestamp gap differs from the nominal interval by more
    /// than one millisecond of rounding.
    pub fn irregular_gaps(&self) -> usize {
        self.samples
            .windows(2)
            .filter(|w| {
                let gap = (w[1].t_ms - w[0].t_ms) as f64;
                (gap - self.sample_interval_ms).abs() >= 1.0
            })
            .count()
    }

    /// Number of contiguous runs of FALL-labeled samples.
    pub fn fall_events(&self) -> Vec<std::ops::Range<usize>> {
        let mut events = Vec::new();
        let mut start = None;
        for (i, s) in self.samples.iter().enumerate() {
            match (s.label == Activity::Fall, start) {
                (true, None) => start = Some(i),
                (false, Some(b)) => {
                    events.push(b..i);
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(b) = start {
            events.push(b..self.samples.len());
        }
        events
    }
}

fn check_samples(samples: &[AccelSample]) -> Result<(), TraceError> {
    if samples.is_empty() {
        return Err(TraceError::Format("empty trace".into()));
    }
    if let Some(w) = samples.windows(2).find(|w| w[1].t_ms <= w[0].t_ms) {
        return Err(TraceError::Format(format!(
            "t_ms not strictly increasing: {} then {}",
            w[0].t_ms, w[1].t_ms
        )));
    }
    Ok(())
}

fn quantize(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// Draws axis values whose squared magnitude lies in `band`, quantized to
/// the six decimals the CSV format keeps.
fn draw_axes(rng: &mut ChaCha8Rng, band: Band) -> (f64, f64, f64) {
    loop {
        let m2 = rng.gen_range(band.lo..band.hi);
        let z: f64 = rng.gen_range(-1.0..=1.0);
        let phi = rng.gen_range(0.0..std::f64::consts::TAU);
        let r = (1.0 - z * z).sqrt();
        let m = m2.sqrt();
        let (ax, ay, az) = (
            quantize(m * r * phi.cos()),
            quantize(m * r * phi.sin()),
            quantize(m * z),
        );
        if band.contains(ax * ax + ay * ay + az * az) {
            return (ax, ay, az);
        }
    }
}

/// Builds a labeled trace from `spec`. Pure in `(spec, seed)`.
pub fn generate_trace(spec: &TraceSpec, seed: u64) -> Result<Trace, TraceError> {
    spec.validate()?;
    let n = spec.sample_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![Activity::Rest; n];

    let fd = spec.fall_duration_samples as usize;
    for start in spec.fall_starts(n) {
        labels[start..start + fd].fill(Activity::Fall);
    }

    // Walking is laid down in bouts at random positions until the target
    // count is reached; falls are never overwritten.
    let target = (spec.activity_fraction * n as f64).round() as usize;
    let mut walked = 0;
    let mut attempts = 0;
    while walked < target && attempts < 100_000 {
        attempts += 1;
        let bout = rng.gen_range(20..=200).min(target - walked);
        let start = rng.gen_range(0..n);
        for label in labels[start..(start + bout).min(n)].iter_mut() {
            if *label == Activity::Rest && walked < target {
                *label = Activity::Walk;
                walked += 1;
            }
        }
    }
    for label in labels.iter_mut() {
        if walked >= target {
            break;
        }
        if *label == Activity::Rest {
            *label = Activity::Walk;
            walked += 1;
        }
    }

    let samples = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let (ax, ay, az) = draw_axes(&mut rng, spec.band(label));
            let t_ms = (i as f64 * spec.sample_interval_ms).round() as u64;
            AccelSample::new(t_ms, ax, ay, az, label)
        })
        .collect();

    Ok(Trace {
        sample_interval_ms: spec.sample_interval_ms,
        samples,
        seed: Some(seed),
    })
}

pub fn write_trace_to<W: Write>(trace: &Trace, mut out: W) -> Result<(), TraceError> {
    check_samples(&trace.samples)?;
    let mut buf = String::with_capacity(48 * (trace.len() + 1));
    buf.push_str(CSV_HEADER);
    buf.push('\n');
    for s in &trace.samples {
        use std::fmt::Write as _;
        let _ = writeln!(buf, "{},{:.6},{:.6},{:.6},{}", s.t_ms, s.ax, s.ay, s.az, s.label);
    }
    out.write_all(buf.as_bytes())?;
    Ok(())
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    check_samples(&trace.samples)?;
    let file = fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    write_trace_to(trace, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_trace_from<R: BufRead>(input: R) -> Result<Trace, TraceError> {
    let mut samples = Vec::new();
    let mut lines = input.lines();
    match lines.next() {
        None => return Err(TraceError::Format("empty trace".into())),
        Some(header) => {
            let header = header?;
            if header.trim_end_matches('\r') != CSV_HEADER {
                return Err(TraceError::Parse {
                    line: 1,
                    reason: format!("expected header {CSV_HEADER:?}"),
                });
            }
        }
    }
    for (idx, line) in lines.enumerate() {
        let line = line?;
        let lineno = idx + 2;
        if line.is_empty() {
            continue;
        }
        samples.push(parse_row(&line).map_err(|reason| TraceError::Parse {
            line: lineno,
            reason,
        })?);
    }
    check_samples(&samples)?;
    let interval = if samples.len() > 1 {
        (samples[samples.len() - 1].t_ms - samples[0].t_ms) as f64 / (samples.len() - 1) as f64
    } else {
        REFERENCE_INTERVAL_MS
    };
    Ok(Trace {
        sample_interval_ms: interval,
        samples,
        seed: None,
    })
}

fn parse_row(line: &str) -> Result<AccelSample, String> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != 5 {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    }
    let t_ms = fields[0]
        .parse::<u64>()
        .map_err(|e| format!("t_ms: {e}"))?;
    let axis = |i: usize| {
        fields[i]
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| format!("bad axis value {:?}", fields[i]))
    };
    Ok(AccelSample::new(
        t_ms,
        axis(1)?,
        axis(2)?,
        axis(3)?,
        fields[4].trim_end_matches('\r').parse()?,
    ))
}

/// Reads a trace CSV. The nominal interval of an imported trace is the mean
/// timestamp gap.
pub fn load_trace(path: impl AsRef<Path>) -> Result<Trace, TraceError> {
    let file = fs::File::open(path)?;
    read_trace_from(BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Trace, TraceError> {
        read_trace_from(text.as_bytes())
    }

    #[test]
    fn one_minute_of_rest() {
        let spec = TraceSpec::default();
        let t = generate_trace(&spec, 1).unwrap();
        assert_eq!(t.len(), 745);
        assert!(t.samples.iter().all(|s| s.label == Activity::Rest));
    }

    #[test]
    fn fall_bookkeeping() {
        let spec = TraceSpec {
            fall_count: 2,
            ..TraceSpec::default()
        };
        let t = generate_trace(&spec, 9).unwrap();
        let falls = t.samples.iter().filter(|s| s.label == Activity::Fall).count();
        assert_eq!(falls, 6);
        let events = t.fall_events();
        assert_eq!(events.len(), 2);
        assert!(events.iter().all(|e| e.len() == 3));
        let gap = t.samples[events[1].start].t_ms - t.samples[events[0].end - 1].t_ms;
        assert!(gap as f64 > MIN_FALL_SEPARATION_MS);
    }

    #[test]
    fn timestamps_track_nominal_interval() {
        let t = generate_trace(&TraceSpec::default(), 3).unwrap();
        assert_eq!(t.irregular_gaps(), 0);
        assert_eq!(t.samples[100].t_ms, 8059);
    }

    #[test]
    fn spec_errors_name_the_constraint() {
        let bad = TraceSpec {
            walk_band: Band::new(1.0, 6.0),
            ..TraceSpec::default()
        };
        let msg = generate_trace(&bad, 0).unwrap_err().to_string();
        assert!(msg.contains("walk_band"), "{msg}");

        let crowded = TraceSpec {
            fall_count: 10,
            ..TraceSpec::default()
        };
        assert!(matches!(generate_trace(&crowded, 0), Err(TraceError::Spec(_))));

        let zero = TraceSpec {
            duration_min: 0.0,
            ..TraceSpec::default()
        };
        assert!(matches!(generate_trace(&zero, 0), Err(TraceError::Spec(_))));

        let overfull = TraceSpec {
            activity_fraction: 1.0,
            fall_count: 1,
            ..TraceSpec::default()
        };
        assert!(matches!(generate_trace(&overfull, 0), Err(TraceError::Spec(_))));
    }

    #[test]
    fn short_row_reports_line() {
        let err = parse("t_ms,ax_g,ay_g,az_g,label\n0,0,0,1,REST\n81,0,0\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn empty_file_is_format_error() {
        let err = parse("").unwrap_err();
        assert!(matches!(&err, TraceError::Format(m) if m == "empty trace"));
        let err = parse("t_ms,ax_g,ay_g,az_g,label\n").unwrap_err();
        assert!(matches!(&err, TraceError::Format(m) if m == "empty trace"));
    }

    #[test]
    fn non_monotone_rejected_on_load_and_write() {
        let err = parse("t_ms,ax_g,ay_g,az_g,label\n5,0,0,1,REST\n5,0,0,1,REST\n").unwrap_err();
        assert!(matches!(err, TraceError::Format(_)));

        let bad = Trace {
            sample_interval_ms: 80.0,
            samples: vec![
                AccelSample::new(10, 0.0, 0.0, 1.0, Activity::Rest),
                AccelSample::new(5, 0.0, 0.0, 1.0, Activity::Rest),
            ],
            seed: None,
        };
        let mut out = Vec::new();
        assert!(matches!(write_trace_to(&bad, &mut out), Err(TraceError::Format(_))));
        assert!(out.is_empty());
    }

    #[test]
    fn unknown_label_is_parse_error() {
        let err = parse("t_ms,ax_g,ay_g,az_g,label\n0,0,0,1,RUN\n").unwrap_err();
        assert!(matches!(err, TraceError::Parse { line: 2, .. }));
    }

    #[test]
    fn two_samples_three_lines() {
        let t = Trace::new(
            80.0,
            vec![
                AccelSample::new(0, 0.0, 0.0, 1.0, Activity::Rest),
                AccelSample::new(80, 1.5, 0.0, 1.5, Activity::Walk),
            ],
        )
        .unwrap();
        let mut a = Vec::new();
        write_trace_to(&t, &mut a).unwrap();
        let text = String::from_utf8(a.clone()).unwrap();
        assert_eq!(
            text,
            "t_ms,ax_g,ay_g,az_g,label\n0,0.000000,0.000000,1.000000,REST\n80,1.500000,0.000000,1.500000,WALK\n"
        );
        let mut b = Vec::new();
        write_trace_to(&t, &mut b).unwrap();
        assert_eq!(a, b);
    }
}
