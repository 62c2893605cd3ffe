use serde::{Deserialize, Serialize};

use super::ClassifyError;
use crate::trace::{AccelSample, Activity, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowFeature {
    /// One magnitude² value per sample.
    MagnitudeSq,
    /// ax, ay, az per sample.
    RawAxes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub width: usize,
    pub stride: usize,
    pub feature: WindowFeature,
}

impl WindowSpec {
    /// Non-overlapping windows of magnitude².
    pub fn new(width: usize) -> Self {
        Self {
            width,
            stride: width,
            feature: WindowFeature::MagnitudeSq,
        }
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        if self.width == 0 || self.stride == 0 {
            return Err(ClassifyError::Data("window width and stride must be >= 1".into()));
        }
        Ok(())
    }

    /// Length of the feature vector a window produces.
    pub fn input_len(&self) -> usize {
        match self.feature {
            WindowFeature::MagnitudeSq => self.width,
            WindowFeature::RawAxes => 3 * self.width,
        }
    }

    pub fn features<'a>(&self, samples: impl IntoIterator<Item = &'a AccelSample>) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.input_len());
        for s in samples {
            match self.feature {
                WindowFeature::MagnitudeSq => out.push(s.magnitude_sq()),
                WindowFeature::RawAxes => out.extend([s.ax, s.ay, s.az]),
            }
        }
        out
    }

    pub fn count(&self, len: usize) -> usize {
        if len < self.width {
            0
        } else {
            (len - self.width) / self.stride + 1
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Index of the first sample.
    pub start: usize,
    pub features: Vec<f64>,
    pub label: Activity,
}

/// Most frequent label. Ties go to the more severe activity
/// (FALL over WALK over REST).
pub fn majority_label<'a>(labels: impl IntoIterator<Item = &'a Activity>) -> Activity {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    let mut best = Activity::Rest;
    for a in Activity::ALL {
        if counts[a.index()] >= counts[best.index()] {
            best = a;
        }
    }
    best
}

pub fn windows(trace: &Trace, spec: &WindowSpec) -> Result<Vec<Window>, ClassifyError> {
    spec.validate()?;
    if trace.len() < spec.width {
        return Err(ClassifyError::Data(format!(
            "trace of {} samples is shorter than window width {}",
            trace.len(),
            spec.width
        )));
    }
    Ok((0..spec.count(trace.len()))
        .map(|i| {
            let start = i * spec.stride;
            let slice = &trace.samples[start..start + spec.width];
            Window {
                start,
                features: spec.features(slice),
                label: majority_label(slice.iter().map(|s| &s.label)),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace_of(labels: &[Activity]) -> Trace {
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, l)| AccelSample::new(i as u64 * 80, 0.0, 0.0, 1.0, *l))
            .collect();
        Trace::new(80.0, samples).unwrap()
    }

    #[test]
    fn count_formula() {
        let t = trace_of(&[Activity::Rest; 10]);
        let w = windows(&t, &WindowSpec::new(4)).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[1].start, 4);
        assert!(w.iter().all(|w| w.label == Activity::Rest && w.features == vec![1.0; 4]));

        let spec = WindowSpec {
            stride: 3,
            ..WindowSpec::new(4)
        };
        assert_eq!(windows(&t, &spec).unwrap().len(), 3);
    }

    #[test]
    fn fall_wins_ties() {
        use Activity::*;
        assert_eq!(majority_label(&[Rest, Rest, Fall, Fall]), Fall);
        assert_eq!(majority_label(&[Rest, Walk]), Walk);
        assert_eq!(majority_label(&[Rest, Rest, Rest, Fall]), Rest);
    }

    #[test]
    fn too_short() {
        let t = trace_of(&[Activity::Rest; 3]);
        assert!(matches!(windows(&t, &WindowSpec::new(4)), Err(ClassifyError::Data(_))));
    }

    #[test]
    fn raw_axes_feature() {
        let t = trace_of(&[Activity::Rest; 4]);
        let spec = WindowSpec {
            feature: WindowFeature::RawAxes,
            ..WindowSpec::new(2)
        };
        let w = windows(&t, &spec).unwrap();
        assert_eq!(w[0].features, vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(spec.input_len(), 6);
    }
}
