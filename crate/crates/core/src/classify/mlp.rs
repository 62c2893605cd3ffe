//! Three-layer sigmoid network trained by backpropagation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_dim, ClassifyError, LearnConfig};

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Input → hidden → output, sigmoid on both non-input layers.
///
/// Weight matrices are row-major: `w_hidden[j * inputs + i]` connects input
/// `i` to hidden unit `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Gradient of the squared error with the same layout as [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradient {
    pub w_hidden: Vec<f64>,
    pub b_hidden: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

impl MlpGradient {
    fn zeros_like(m: &MlpModel) -> Self {
        Self {
            w_hidden: vec![0.0; m.w_hidden.len()],
            b_hidden: vec![0.0; m.b_hidden.len()],
            w_out: vec![0.0; m.w_out.len()],
            b_out: vec![0.0; m.b_out.len()],
        }
    }

    fn add(&mut self, other: &MlpGradient) {
        for (a, b) in self.parts_mut().into_iter().zip(other.parts()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    fn parts(&self) -> [&[f64]; 4] {
        [&self.w_hidden, &self.b_hidden, &self.w_out, &self.b_out]
    }

    fn parts_mut(&mut self) -> [&mut Vec<f64>; 4] {
        [&mut self.w_hidden, &mut self.b_hidden, &mut self.w_out, &mut self.b_out]
    }

    /// All components flattened in layout order.
    pub fn flatten(&self) -> Vec<f64> {
        self.parts().concat()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorPattern {
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

impl VectorPattern {
    pub fn new(x: impl Into<Vec<f64>>, t: impl Into<Vec<f64>>) -> Self {
        Self {
            x: x.into(),
            t: t.into(),
        }
    }
}

impl MlpModel {
    pub fn zeros(inputs: usize, hidden: usize, outputs: usize) -> Self {
        assert!(inputs >= 1 && hidden >= 1 && outputs >= 1);
        Self {
            inputs,
            hidden,
            outputs,
            w_hidden: vec![0.0; hidden * inputs],
            b_hidden: vec![0.0; hidden],
            w_out: vec![0.0; outputs * hidden],
            b_out: vec![0.0; outputs],
        }
    }

    /// Weights and biases uniform in [−0.5, 0.5].
    pub fn random(inputs: usize, hidden: usize, outputs: usize, seed: u64) -> Self {
        let mut m = Self::zeros(inputs, hidden, outputs);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in m.params_mut() {
            *v = rng.gen_range(-0.5..=0.5);
        }
        m
    }

    pub fn param_count(&self) -> usize {
        self.w_hidden.len() + self.b_hidden.len() + self.w_out.len() + self.b_out.len()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w_hidden
            .iter()
            .chain(&self.b_hidden)
            .chain(&self.w_out)
            .chain(&self.b_out)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w_hidden
            .iter_mut()
            .chain(self.b_hidden.iter_mut())
            .chain(self.w_out.iter_mut())
            .chain(self.b_out.iter_mut())
    }

    pub fn validate(&self) -> Result<(), ClassifyError> {
        let (n, h, k) = (self.inputs, self.hidden, self.outputs);
        if n == 0 || h == 0 || k == 0 {
            return Err(ClassifyError::Data("layer sizes must be >= 1".into()));
        }
        if self.w_hidden.len() != h * n
            || self.b_hidden.len() != h
            || self.w_out.len() != k * h
            || self.b_out.len() != k
        {
            return Err(ClassifyError::Data("weight shapes do not match layer sizes".into()));
        }
        if self.params().any(|v| !v.is_finite()) {
            return Err(ClassifyError::Data("non-finite weight".into()));
        }
        Ok(())
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|j| {
                let row = &self.w_hidden[j * self.inputs..(j + 1) * self.inputs];
                sigmoid(row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + self.b_hidden[j])
            })
            .collect()
    }

    fn output_activations(&self, hidden: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|k| {
                let row = &self.w_out[k * self.hidden..(k + 1) * self.hidden];
                sigmoid(row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>() + self.b_out[k])
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, ClassifyError> {
        check_dim(self.inputs, x.len())?;
        Ok(self.output_activations(&self.hidden_activations(x)))
    }

    /// Index of the largest output; the first one wins ties.
    pub fn argmax(&self, x: &[f64]) -> Result<usize, ClassifyError> {
        let y = self.forward(x)?;
        let mut best = 0;
        for (i, v) in y.iter().enumerate() {
            if *v > y[best] {
                best = i;
            }
        }
        Ok(best)
    }

    /// Squared error `Σ_k (y_k − t_k)²` and its gradient via the chain rule.
    pub fn gradient(&self, x: &[f64], t: &[f64]) -> Result<(MlpGradient, f64), ClassifyError> {
        check_dim(self.inputs, x.len())?;
        check_dim(self.outputs, t.len())?;
        let h = self.hidden_activations(x);
        let y = self.output_activations(&h);

        let mut g = MlpGradient::zeros_like(self);
        let mut error = 0.0;
        let delta_out: Vec<f64> = y
            .iter()
            .zip(t)
            .map(|(yk, tk)| {
                error += (yk - tk) * (yk - tk);
                2.0 * (yk - tk) * yk * (1.0 - yk)
            })
            .collect();
        for (k, d) in delta_out.iter().enumerate() {
            for (j, hj) in h.iter().enumerate() {
                g.w_out[k * self.hidden + j] = d * hj;
            }
            g.b_out[k] = *d;
        }
        for (j, hj) in h.iter().enumerate() {
            let back: f64 = delta_out
                .iter()
                .enumerate()
                .map(|(k, d)| d * self.w_out[k * self.hidden + j])
                .sum();
            let d = back * hj * (1.0 - hj);
            for (i, xi) in x.iter().enumerate() {
                g.w_hidden[j * self.inputs + i] = d * xi;
            }
            g.b_hidden[j] = d;
        }
        Ok((g, error))
    }

    fn apply(&mut self, g: &MlpGradient, eta: f64) {
        for (p, d) in self.params_mut().zip(g.parts().into_iter().flatten()) {
            *p -= eta * d;
        }
    }

    /// One gradient-descent step on a single pattern. Returns the squared
    /// error measured before the step.
    pub fn train_step(&mut self, x: &[f64], t: &[f64], eta: f64) -> Result<f64, ClassifyError> {
        let (g, err) = self.gradient(x, t)?;
        self.apply(&g, eta);
        Ok(err)
    }

    /// Mean over patterns of the per-pattern squared error.
    pub fn mse(&self, data: &[VectorPattern]) -> Result<f64, ClassifyError> {
        if data.is_empty() {
            return Err(ClassifyError::Data("empty dataset".into()));
        }
        let mut sum = 0.0;
        for p in data {
            let y = self.forward(&p.x)?;
            sum += y.iter().zip(&p.t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(sum / data.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpOutcome {
    pub epochs: usize,
    pub mse: f64,
    pub converged: bool,
}

/// Backpropagation over `data`, visiting patterns in a seeded shuffle each
/// epoch and applying the summed gradient every `cfg.batch` patterns.
/// Stops once the epoch MSE is at or below `cfg.target_error`.
pub fn train_mlp(
    model: &mut MlpModel,
    data: &[VectorPattern],
    cfg: &LearnConfig,
    shuffle: bool,
) -> Result<MlpOutcome, ClassifyError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(ClassifyError::Data("empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_0a11);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut mse = model.mse(data)?;
    for epoch in 1..=cfg.max_epochs {
        if shuffle {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(cfg.batch) {
            if chunk.len() == 1 {
                let p = &data[chunk[0]];
                model.train_step(&p.x, &p.t, cfg.eta)?;
                continue;
            }
            let mut acc = MlpGradient::zeros_like(model);
            for &i in chunk {
                let (g, _) = model.gradient(&data[i].x, &data[i].t)?;
                acc.add(&g);
            }
            model.apply(&acc, cfg.eta);
        }
        mse = model.mse(data)?;
        if mse <= cfg.target_error {
            return Ok(MlpOutcome {
                epochs: epoch,
                mse,
                converged: true,
            });
        }
    }
    Ok(MlpOutcome {
        epochs: cfg.max_epochs,
        mse,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_give_half() {
        let m = MlpModel::zeros(3, 4, 2);
        assert_eq!(m.forward(&[5.0, -2.0, 9.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn hand_evaluated_unit_net() {
        let mut m = MlpModel::zeros(1, 1, 1);
        m.w_hidden[0] = 1.0;
        m.w_out[0] = 1.0;
        let y = m.forward(&[0.0]).unwrap()[0];
        // σ(σ(0)) = σ(0.5)
        assert!((y - 0.622_459_331_201_854_6).abs() < 1e-12);
    }

    #[test]
    fn zero_eta_is_noop() {
        let mut m = MlpModel::random(2, 3, 1, 4);
        let before = m.clone();
        let err = m.train_step(&[0.3, -0.7], &[1.0], 0.0).unwrap();
        assert_eq!(m, before);
        assert!(err > 0.0);
    }

    #[test]
    fn dimension_errors() {
        let m = MlpModel::zeros(2, 2, 1);
        assert!(matches!(m.forward(&[1.0]), Err(ClassifyError::Dim { .. })));
        assert!(matches!(m.gradient(&[1.0, 2.0], &[1.0, 0.0]), Err(ClassifyError::Dim { .. })));
    }

    #[test]
    fn seeded_init_is_deterministic_and_bounded() {
        let a = MlpModel::random(4, 5, 3, 77);
        assert_eq!(a, MlpModel::random(4, 5, 3, 77));
        assert_ne!(a, MlpModel::random(4, 5, 3, 78));
        assert!(a.params().all(|v| (-0.5..=0.5).contains(v)));
        a.validate().unwrap();
    }
}
