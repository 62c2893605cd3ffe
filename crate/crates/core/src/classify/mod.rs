//! Classifier suite for the neural node tier.
//!
//! Linear models ([`LinearModel`]) cover the Heaviside perceptron and
//! ADALINE; [`MlpModel`] is a three-layer sigmoid network. A trained network
//! paired with a [`WindowSpec`] forms the [`NeuralDetector`] that the node
//! runs on-device.

mod linear;
mod mlp;
mod model_file;
mod window;

pub use linear::{
    adaline_error, train_adaline, train_perceptron, LinearModel, LinearOutput, OutputKind,
    Pattern, PerceptronOutcome,
};
pub use mlp::{sigmoid, train_mlp, MlpGradient, MlpModel, MlpOutcome, VectorPattern};
pub use model_file::{ModelFile, MODEL_MAGIC};
pub use window::{majority_label, windows, Window, WindowFeature, WindowSpec};

use serde::{Deserialize, Serialize};

use crate::trace::{generate_trace, Activity, Trace, TraceSpec};

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dim { expected: usize, got: usize },
    #[error("{0}")]
    Data(String),
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<(), ClassifyError> {
    if expected == got {
        Ok(())
    } else {
        Err(ClassifyError::Dim { expected, got })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    /// Learning rate η.
    pub eta: f64,
    /// Patterns per weight update (M).
    pub batch: usize,
    pub max_epochs: usize,
    pub target_error: f64,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            batch: 1,
            max_epochs: 1000,
            target_error: 0.0,
            seed: 0,
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.eta > 0.0) {
            return Err(ClassifyError::Data(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.batch == 0 {
            return Err(ClassifyError::Data("batch must be >= 1".into()));
        }
        if !(self.target_error >= 0.0) {
            return Err(ClassifyError::Data("target_error must be >= 0".into()));
        }
        Ok(())
    }
}

/// Trained network plus the windowing it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralDetector {
    pub model: MlpModel,
    pub window: WindowSpec,
}

impl NeuralDetector {
    pub fn new(model: MlpModel, window: WindowSpec) -> Result<Self, ClassifyError> {
        window.validate()?;
        model.validate()?;
        check_dim(window.input_len(), model.inputs)?;
        if model.outputs != Activity::ALL.len() {
            return Err(ClassifyError::Data(format!(
                "detector needs {} outputs, model has {}",
                Activity::ALL.len(),
                model.outputs
            )));
        }
        Ok(Self { model, window })
    }

    pub fn classify(&self, features: &[f64]) -> Result<Activity, ClassifyError> {
        let idx = self.model.argmax(features)?;
        Ok(Activity::from_index(idx).expect("three outputs"))
    }

    /// Trains on the windows of `trace`. Windows of rarer classes are
    /// repeated until each class contributes roughly as many patterns as
    /// the most common one.
    pub fn train(
        trace: &Trace,
        window: WindowSpec,
        hidden: usize,
        cfg: &LearnConfig,
    ) -> Result<(Self, MlpOutcome), ClassifyError> {
        let ws = windows(trace, &window)?;
        let data = balanced_patterns(&ws);
        let mut model = MlpModel::random(window.input_len(), hidden, Activity::ALL.len(), cfg.seed);
        let outcome = train_mlp(&mut model, &data, cfg, true)?;
        Ok((Self::new(model, window)?, outcome))
    }

    /// Default offline training run: a synthetic recording rich in falls
    /// and walking, windows of two samples, four hidden units.
    pub fn train_default(seed: u64) -> Result<(Self, MlpOutcome), ClassifyError> {
        let spec = training_profile();
        let trace = generate_trace(&spec, seed).map_err(|e| ClassifyError::Data(e.to_string()))?;
        let cfg = LearnConfig {
            eta: 0.05,
            batch: 1,
            max_epochs: 40,
            target_error: 0.0,
            seed,
        };
        Self::train(&trace, WindowSpec::new(2), 4, &cfg)
    }
}

/// Trace used to train the default detector.
pub fn training_profile() -> TraceSpec {
    TraceSpec {
        duration_min: 20.0,
        activity_fraction: 0.3,
        fall_count: 80,
        ..TraceSpec::default()
    }
}

fn one_hot(a: Activity) -> Vec<f64> {
    let mut t = vec![0.0; Activity::ALL.len()];
    t[a.index()] = 1.0;
    t
}

fn balanced_patterns(ws: &[Window]) -> Vec<VectorPattern> {
    let mut by_class: [Vec<&Window>; 3] = Default::default();
    for w in ws {
        by_class[w.label.index()].push(w);
    }
    let largest = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::new();
    for class in by_class.iter().filter(|c| !c.is_empty()) {
        let reps = largest.div_ceil(class.len());
        for _ in 0..reps {
            out.extend(class.iter().map(|w| VectorPattern::new(w.features.clone(), one_hot(w.label))));
        }
    }
    out
}
