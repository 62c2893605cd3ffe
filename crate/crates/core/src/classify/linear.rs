//! Single-layer linear classifiers: the Heaviside perceptron and ADALINE.

use serde::{Deserialize, Serialize};

use super::{check_dim, ClassifyError, LearnConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputKind {
    /// y ∈ {0, 1}
    Heaviside,
    /// y ∈ {−1, +1}
    Sign,
}

impl OutputKind {
    /// Both kinds map s = 0 to the upper class.
    pub fn apply(self, s: f64) -> f64 {
        match (self, s >= 0.0) {
            (OutputKind::Heaviside, true) => 1.0,
            (OutputKind::Heaviside, false) => 0.0,
            (OutputKind::Sign, true) => 1.0,
            (OutputKind::Sign, false) => -1.0,
        }
    }
}

/// One training pattern with a scalar target.
#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub x: Vec<f64>,
    pub t: f64,
}

impl Pattern {
    pub fn new(x: impl Into<Vec<f64>>, t: f64) -> Self {
        Self { x: x.into(), t }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub output: OutputKind,
}

/// Classified output together with the pre-activation it came from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearOutput {
    pub y: f64,
    pub s: f64,
}

impl LinearModel {
    pub fn zeros(n: usize, output: OutputKind) -> Self {
        assert!(n >= 1, "a linear model needs at least one input");
        Self {
            weights: vec![0.0; n],
            bias: 0.0,
            output,
        }
    }

    pub fn new(weights: Vec<f64>, bias: f64, output: OutputKind) -> Self {
        assert!(!weights.is_empty(), "a linear model needs at least one input");
        Self {
            weights,
            bias,
            output,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.len()
    }

    pub fn pre_activation(&self, x: &[f64]) -> Result<f64, ClassifyError> {
        check_dim(self.inputs(), x.len())?;
        Ok(self.weights.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.bias)
    }

    pub fn forward(&self, x: &[f64]) -> Result<LinearOutput, ClassifyError> {
        let s = self.pre_activation(x)?;
        Ok(LinearOutput {
            y: self.output.apply(s),
            s,
        })
    }

    /// Perceptron rule for a 0/1 target. Returns whether the model changed.
    pub fn perceptron_update(&mut self, x: &[f64], t: f64) -> Result<bool, ClassifyError> {
        if self.output != OutputKind::Heaviside {
            return Err(ClassifyError::Data("perceptron update needs a Heaviside model".into()));
        }
        if t != 0.0 && t != 1.0 {
            return Err(ClassifyError::Data(format!("perceptron target must be 0 or 1, got {t}")));
        }
        let err = t - self.forward(x)?.y;
        if err == 0.0 {
            return Ok(false);
        }
        for (w, xi) in self.weights.iter_mut().zip(x) {
            *w += err * xi;
        }
        self.bias += err;
        Ok(true)
    }

    /// Widrow-Hoff step on the linear residual `t − s`.
    pub fn lms_update(&mut self, x: &[f64], t: f64, eta: f64) -> Result<(), ClassifyError> {
        let residual = t - self.pre_activation(x)?;
        for (w, xi) in self.weights.iter_mut().zip(x) {
            *w += eta * residual * xi;
        }
        self.bias += eta * residual;
        Ok(())
    }

    pub fn misclassified(&self, data: &[Pattern]) -> Result<usize, ClassifyError> {
        let mut n = 0;
        for p in data {
            if self.forward(&p.x)?.y != p.t {
                n += 1;
            }
        }
        Ok(n)
    }
}

/// Mean squared residual of the linear pre-activation over the dataset.
pub fn adaline_error(data: &[Pattern], model: &LinearModel) -> Result<f64, ClassifyError> {
    if data.is_empty() {
        return Err(ClassifyError::Data("empty dataset".into()));
    }
    let mut sum = 0.0;
    for p in data {
        let s = model.pre_activation(&p.x)?;
        sum += (s - p.t) * (s - p.t);
    }
    Ok(sum / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerceptronOutcome {
    /// Epochs run, including the one that produced zero errors.
    pub epochs: usize,
    pub converged: bool,
    pub final_errors: usize,
}

/// Cycles through `data` in order until an epoch makes no mistakes.
pub fn train_perceptron(
    model: &mut LinearModel,
    data: &[Pattern],
    max_epochs: usize,
) -> Result<PerceptronOutcome, ClassifyError> {
    if data.is_empty() {
        return Err(ClassifyError::Data("empty dataset".into()));
    }
    for epoch in 1..=max_epochs {
        let mut mistakes = 0;
        for p in data {
            if model.perceptron_update(&p.x, p.t)? {
                mistakes += 1;
            }
        }
        if mistakes == 0 {
            return Ok(PerceptronOutcome {
                epochs: epoch,
                converged: true,
                final_errors: 0,
            });
        }
    }
    Ok(PerceptronOutcome {
        epochs: max_epochs,
        converged: false,
        final_errors: model.misclassified(data)?,
    })
}

/// LMS training with updates accumulated over `cfg.batch` patterns.
/// Returns Q after every epoch.
pub fn train_adaline(
    model: &mut LinearModel,
    data: &[Pattern],
    cfg: &LearnConfig,
) -> Result<Vec<f64>, ClassifyError> {
    cfg.validate()?;
    let mut history = Vec::new();
    let n = model.inputs();
    for _ in 0..cfg.max_epochs {
        for chunk in data.chunks(cfg.batch) {
            let mut dw = vec![0.0; n];
            let mut db = 0.0;
            for p in chunk {
                let residual = p.t - model.pre_activation(&p.x)?;
                for (d, xi) in dw.iter_mut().zip(&p.x) {
                    *d += cfg.eta * residual * xi;
                }
                db += cfg.eta * residual;
            }
            for (w, d) in model.weights.iter_mut().zip(dw) {
                *w += d;
            }
            model.bias += db;
        }
        let q = adaline_error(data, model)?;
        history.push(q);
        if q <= cfg.target_error {
            break;
        }
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_examples() {
        let m = LinearModel::new(vec![1.0, 1.0], -1.5, OutputKind::Heaviside);
        assert_eq!(m.forward(&[1.0, 1.0]).unwrap(), LinearOutput { y: 1.0, s: 0.5 });

        let m = LinearModel::zeros(2, OutputKind::Heaviside);
        assert_eq!(m.forward(&[1.0, 0.0]).unwrap(), LinearOutput { y: 1.0, s: 0.0 });

        let m = LinearModel::new(vec![1.0], -0.2, OutputKind::Sign);
        let out = m.forward(&[0.0]).unwrap();
        assert_eq!(out.y, -1.0);
        assert!((out.s + 0.2).abs() < 1e-15);

        assert!(matches!(m.forward(&[1.0, 2.0]), Err(ClassifyError::Dim { .. })));
    }

    #[test]
    fn perceptron_step() {
        let mut m = LinearModel::zeros(2, OutputKind::Heaviside);
        assert!(m.perceptron_update(&[1.0, 0.0], 0.0).unwrap());
        assert_eq!(m.weights, vec![-1.0, 0.0]);
        assert_eq!(m.bias, -1.0);

        let before = m.clone();
        assert!(!m.perceptron_update(&[1.0, 0.0], 0.0).unwrap());
        assert_eq!(m, before);

        assert!(m.perceptron_update(&[1.0], 0.0).is_err());
        assert!(m.perceptron_update(&[1.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn adaline_error_examples() {
        let m = LinearModel::new(vec![1.0], 0.0, OutputKind::Sign);
        assert_eq!(adaline_error(&[Pattern::new([1.0], -1.0)], &m).unwrap(), 4.0);
        assert_eq!(adaline_error(&[Pattern::new([0.5], 0.5)], &m).unwrap(), 0.0);
        // residuals 1 and 3
        let data = [Pattern::new([2.0], 1.0), Pattern::new([2.0], -1.0)];
        assert_eq!(adaline_error(&data, &m).unwrap(), 5.0);
        assert!(matches!(adaline_error(&[], &m), Err(ClassifyError::Data(_))));
    }

    #[test]
    fn lms_step() {
        let mut m = LinearModel::new(vec![0.5], 0.0, OutputKind::Sign);
        m.lms_update(&[1.0], 1.0, 0.1).unwrap();
        assert!((m.weights[0] - 0.55).abs() < 1e-15);
        assert!((m.bias - 0.05).abs() < 1e-15);

        let mut m = LinearModel::new(vec![0.5], 0.5, OutputKind::Sign);
        let before = m.clone();
        m.lms_update(&[1.0], 1.0, 0.1).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn batch_training_reduces_error() {
        let data: Vec<Pattern> = (0..10)
            .map(|i| {
                let x = i as f64 / 10.0;
                Pattern::new([x], if x >= 0.45 { 1.0 } else { -1.0 })
            })
            .collect();
        let mut m = LinearModel::zeros(1, OutputKind::Sign);
        let q0 = adaline_error(&data, &m).unwrap();
        let cfg = LearnConfig {
            eta: 0.05,
            batch: 5,
            max_epochs: 200,
            target_error: 0.0,
            seed: 0,
        };
        let hist = train_adaline(&mut m, &data, &cfg).unwrap();
        assert!(*hist.last().unwrap() < q0);
        assert_eq!(m.misclassified(&data).unwrap(), 0);
    }
}
