//! Text model files: a `key=value` header line followed by one line of
//! whitespace-separated reals per parameter block, 17 significant digits.
//!
//! ```text
//! tiersense-model v1
//! kind=mlp inputs=2 hidden=4 outputs=3 activation=sigmoid window=2 stride=2 feature=magnitude_sq
//! <w_hidden>
//! <b_hidden>
//! <w_out>
//! <b_out>
//! ```

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{ClassifyError, LinearModel, MlpModel, NeuralDetector, OutputKind, WindowFeature, WindowSpec};

pub const MODEL_MAGIC: &str = "tiersense-model v1";

#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Linear(LinearModel),
    Mlp {
        model: MlpModel,
        window: Option<WindowSpec>,
    },
}

impl From<&NeuralDetector> for ModelFile {
    fn from(d: &NeuralDetector) -> Self {
        ModelFile::Mlp {
            model: d.model.clone(),
            window: Some(d.window),
        }
    }
}

fn push_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

fn bad(msg: impl Into<String>) -> ClassifyError {
    ClassifyError::ModelFile(msg.into())
}

impl ModelFile {
    pub fn to_text(&self) -> String {
        let mut s = String::from(MODEL_MAGIC);
        s.push('\n');
        match self {
            ModelFile::Linear(m) => {
                let kind = match m.output {
                    OutputKind::Heaviside => "heaviside",
                    OutputKind::Sign => "sign",
                };
                let _ = writeln!(s, "kind=linear inputs={} output={kind}", m.inputs());
                push_row(&mut s, &m.weights);
                push_row(&mut s, &[m.bias]);
            }
            ModelFile::Mlp { model, window } => {
                let _ = write!(
                    s,
                    "kind=mlp inputs={} hidden={} outputs={} activation=sigmoid",
                    model.inputs, model.hidden, model.outputs
                );
                if let Some(w) = window {
                    let feature = match w.feature {
                        WindowFeature::MagnitudeSq => "magnitude_sq",
                        WindowFeature::RawAxes => "raw_axes",
                    };
                    let _ = write!(s, " window={} stride={} feature={feature}", w.width, w.stride);
                }
                s.push('\n');
                for block in [&model.w_hidden, &model.b_hidden, &model.w_out, &model.b_out] {
                    push_row(&mut s, block);
                }
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ClassifyError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(MODEL_MAGIC) {
            return Err(bad(format!("missing {MODEL_MAGIC:?} header")));
        }
        let header: HashMap<&str, &str> = lines
            .next()
            .ok_or_else(|| bad("missing header line"))?
            .split_whitespace()
            .map(|kv| kv.split_once('=').ok_or_else(|| bad(format!("bad header field {kv:?}"))))
            .collect::<Result<_, _>>()?;
        let get = |k: &str| header.get(k).copied().ok_or_else(|| bad(format!("missing {k}")));
        let num = |k: &str| -> Result<usize, ClassifyError> {
            get(k)?.parse().map_err(|_| bad(format!("{k} is not an integer")))
        };
        let mut row = |len: usize, name: &str| -> Result<Vec<f64>, ClassifyError> {
            let line = lines.next().ok_or_else(|| bad(format!("missing {name} row")))?;
            let vals = line
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad number {v:?} in {name}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if vals.len() != len {
                return Err(bad(format!("{name}: expected {len} values, found {}", vals.len())));
            }
            Ok(vals)
        };

        match get("kind")? {
            "linear" => {
                let n = num("inputs")?;
                if n == 0 {
                    return Err(bad("inputs must be >= 1"));
                }
                let output = match get("output")? {
                    "heaviside" => OutputKind::Heaviside,
                    "sign" => OutputKind::Sign,
                    o => return Err(bad(format!("unknown output kind {o:?}"))),
                };
                let weights = row(n, "weights")?;
                let bias = row(1, "bias")?[0];
                Ok(ModelFile::Linear(LinearModel::new(weights, bias, output)))
            }
            "mlp" => {
                let (n, h, k) = (num("inputs")?, num("hidden")?, num("outputs")?);
                if n == 0 || h == 0 || k == 0 {
                    return Err(bad("layer sizes must be >= 1"));
                }
                if get("activation")? != "sigmoid" {
                    return Err(bad("only sigmoid activation is supported"));
                }
                let window = match header.get("window") {
                    None => None,
                    Some(_) => Some(WindowSpec {
                        width: num("window")?,
                        stride: num("stride")?,
                        feature: match get("feature")? {
                            "magnitude_sq" => WindowFeature::MagnitudeSq,
                            "raw_axes" => WindowFeature::RawAxes,
                            f => return Err(bad(format!("unknown feature {f:?}"))),
                        },
                    }),
                };
                let model = MlpModel {
                    inputs: n,
                    hidden: h,
                    outputs: k,
                    w_hidden: row(h * n, "w_hidden")?,
                    b_hidden: row(h, "b_hidden")?,
                    w_out: row(k * h, "w_out")?,
                    b_out: row(k, "b_out")?,
                };
                model.validate()?;
                Ok(ModelFile::Mlp { model, window })
            }
            other => Err(bad(format!("unknown model kind {other:?}"))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifyError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifyError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Interprets the file as a detector; the model must carry a window spec.
    pub fn into_detector(self) -> Result<NeuralDetector, ClassifyError> {
        match self {
            ModelFile::Mlp {
                model,
                window: Some(w),
            } => NeuralDetector::new(model, w),
            _ => Err(bad("detector needs an mlp model with a window spec")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_file_is_lossless() {
        let model = MlpModel::random(2, 4, 3, 11);
        let f = ModelFile::Mlp {
            model,
            window: Some(WindowSpec::new(2)),
        };
        let text = f.to_text();
        assert_eq!(ModelFile::parse(&text).unwrap(), f);
        assert!(text.lines().nth(1).unwrap().starts_with("kind=mlp inputs=2 hidden=4 outputs=3"));
    }

    #[test]
    fn linear_file_is_lossless() {
        let f = ModelFile::Linear(LinearModel::new(vec![0.1, -1.0 / 3.0], 1e-300, OutputKind::Sign));
        assert_eq!(ModelFile::parse(&f.to_text()).unwrap(), f);
    }

    #[test]
    fn rejects_malformed() {
        assert!(ModelFile::parse("nope\n").is_err());
        let f = ModelFile::Linear(LinearModel::zeros(3, OutputKind::Heaviside));
        let text = f.to_text().replace("inputs=3", "inputs=2");
        assert!(ModelFile::parse(&text).is_err());
        let plain = ModelFile::Mlp {
            model: MlpModel::zeros(2, 2, 3),
            window: None,
        };
        assert!(plain.into_detector().is_err());
    }
}
