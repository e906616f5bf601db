use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::{Algorithm, GnnLayer, LayerParams, LayerSignature, NodeState};
use crate::math::{matvec, Activation, DenseMatrix, DenseVector};
use crate::rng::SplitMix64;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Prediction head attached after the last layer's `apply_node`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub weight: DenseMatrix,
    pub bias: DenseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub algorithm: Algorithm,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub layers: Vec<GnnLayer>,
    pub head: Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelBundle {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Shape("model has no layers".into()));
        }
        let mut expected_in = self.feature_dim;
        for (k, layer) in self.layers.iter().enumerate() {
            if layer.algorithm() != self.algorithm {
                return Err(Error::Shape(format!("layer {k} is not {}", self.algorithm)));
            }
            if layer.input_dim() != expected_in {
                return Err(Error::Shape(format!(
                    "layer {k} input dim {} does not match {expected_in}",
                    layer.input_dim()
                )));
            }
            layer.validate()?;
            expected_in = layer.output_dim();
        }
        if self.head.weight.cols() != expected_in
            || self.head.weight.rows() != self.num_classes
            || self.head.bias.dim() != self.num_classes
            || !self.head.bias.is_finite()
        {
            return Err(Error::Shape(format!(
                "head is {}x{} (bias {}), expected {}x{expected_in}",
                self.head.weight.rows(),
                self.head.weight.cols(),
                self.head.bias.dim(),
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// `logits = W_out·h + b_out`; the class is the first index of the maximum.
pub fn predict(head: &Head, state: &NodeState) -> Result<(DenseVector, usize)> {
    let mut logits = matvec(&head.weight, state.embedding.as_slice())?.into_inner();
    for (l, b) in logits.iter_mut().zip(head.bias.iter()) {
        *l += b;
    }
    let class = argmax(&logits);
    Ok((DenseVector::new(logits), class))
}

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

fn glorot(rng: &mut SplitMix64, rows: usize, cols: usize) -> DenseMatrix {
    let s = (6.0 / (rows + cols) as f32).sqrt();
    let data = (0..rows * cols).map(|_| rng.uniform_sym(s)).collect();
    DenseMatrix::new(rows, cols, data).expect("shape by construction")
}

fn glorot_vec(rng: &mut SplitMix64, dim: usize, fan_in: usize) -> DenseVector {
    let s = (6.0 / (fan_in + dim) as f32).sqrt();
    DenseVector::new((0..dim).map(|_| rng.uniform_sym(s)).collect())
}

/// Deterministic Glorot-uniform initialization driven by splitmix64.
pub fn seeded_random_model(
    algorithm: Algorithm,
    dims: ModelDims,
    num_layers: usize,
    seed: u64,
) -> Result<ModelBundle> {
    if num_layers == 0 || dims.feature_dim == 0 || dims.hidden_dim == 0 || dims.num_classes == 0 {
        return Err(Error::InvalidArgument(
            "model dims and layer count must be positive".into(),
        ));
    }
    let mut rng = SplitMix64::new(seed);
    let mut layers = Vec::with_capacity(num_layers);
    let mut input = dims.feature_dim;
    for k in 0..num_layers {
        let output = dims.hidden_dim;
        let last = k + 1 == num_layers;
        let params = match algorithm {
            Algorithm::Sage => LayerParams::Sage {
                w_self: glorot(&mut rng, output, input),
                w_nbr: glorot(&mut rng, output, input),
                bias: glorot_vec(&mut rng, output, input),
            },
            Algorithm::Gcn => LayerParams::Gcn {
                weight: glorot(&mut rng, output, input),
                bias: glorot_vec(&mut rng, output, input),
            },
            Algorithm::Gat => LayerParams::Gat {
                weight: glorot(&mut rng, output, input),
                att_src: glorot_vec(&mut rng, output, 1),
                att_dst: glorot_vec(&mut rng, output, 1),
                bias: glorot_vec(&mut rng, output, input),
            },
        };
        let activation = match (last, algorithm) {
            (true, _) => Activation::Identity,
            (false, Algorithm::Gat) => Activation::Elu,
            (false, _) => Activation::Relu,
        };
        layers.push(GnnLayer {
            params,
            activation,
            signature: LayerSignature::builtin(algorithm, input, output),
        });
        input = output;
    }
    let head = Head {
        weight: glorot(&mut rng, dims.num_classes, input),
        bias: glorot_vec(&mut rng, dims.num_classes, input),
    };
    let model = ModelBundle {
        algorithm,
        feature_dim: dims.feature_dim,
        num_classes: dims.num_classes,
        layers,
        head,
    };
    model.validate()?;
    Ok(model)
}

// On-disk JSON layout.

#[derive(Serialize, Deserialize)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    input_dim: usize,
    output_dim: usize,
    activation: Activation,
    weights: BTreeMap<String, TensorFile>,
    signature: LayerSignature,
}

#[derive(Serialize, Deserialize)]
struct HeadFile {
    #[serde(rename = "W_out")]
    w_out: TensorFile,
    b_out: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    algorithm: Algorithm,
    feature_dim: usize,
    num_classes: usize,
    layers: Vec<LayerFile>,
    head: HeadFile,
}

fn mat_file(m: &DenseMatrix) -> TensorFile {
    TensorFile {
        shape: vec![m.rows(), m.cols()],
        data: m.data().to_vec(),
    }
}

fn vec_file(v: &DenseVector) -> TensorFile {
    TensorFile {
        shape: vec![v.dim()],
        data: v.to_vec(),
    }
}

fn take_mat(w: &mut BTreeMap<String, TensorFile>, name: &str) -> Result<DenseMatrix> {
    let t = w
        .remove(name)
        .ok_or_else(|| Error::Shape(format!("missing weight {name:?}")))?;
    match t.shape.as_slice() {
        &[r, c] => DenseMatrix::new(r, c, t.data),
        other => Err(Error::Shape(format!(
            "{name:?} has shape {other:?}, expected 2-d"
        ))),
    }
}

fn take_vec(w: &mut BTreeMap<String, TensorFile>, name: &str) -> Result<DenseVector> {
    let t = w
        .remove(name)
        .ok_or_else(|| Error::Shape(format!("missing weight {name:?}")))?;
    match t.shape.as_slice() {
        &[n] if n == t.data.len() => Ok(DenseVector::new(t.data)),
        other => Err(Error::Shape(format!(
            "{name:?} has shape {other:?}, expected 1-d"
        ))),
    }
}

fn to_file(model: &ModelBundle) -> ModelFile {
    let layers = model
        .layers
        .iter()
        .map(|l| {
            let mut weights = BTreeMap::new();
            match &l.params {
                LayerParams::Sage {
                    w_self,
                    w_nbr,
                    bias,
                } => {
                    weights.insert("w_self".to_string(), mat_file(w_self));
                    weights.insert("w_nbr".to_string(), mat_file(w_nbr));
                    weights.insert("bias".to_string(), vec_file(bias));
                }
                LayerParams::Gcn { weight, bias } => {
                    weights.insert("weight".to_string(), mat_file(weight));
                    weights.insert("bias".to_string(), vec_file(bias));
                }
                LayerParams::Gat {
                    weight,
                    att_src,
                    att_dst,
                    bias,
                } => {
                    weights.insert("weight".to_string(), mat_file(weight));
                    weights.insert("att_src".to_string(), vec_file(att_src));
                    weights.insert("att_dst".to_string(), vec_file(att_dst));
                    weights.insert("bias".to_string(), vec_file(bias));
                }
            }
            LayerFile {
                input_dim: l.input_dim(),
                output_dim: l.output_dim(),
                activation: l.activation,
                weights,
                signature: l.signature,
            }
        })
        .collect();
    ModelFile {
        version: MODEL_FORMAT_VERSION,
        algorithm: model.algorithm,
        feature_dim: model.feature_dim,
        num_classes: model.num_classes,
        layers,
        head: HeadFile {
            w_out: mat_file(&model.head.weight),
            b_out: model.head.bias.to_vec(),
        },
    }
}

fn from_file(file: ModelFile) -> Result<ModelBundle> {
    if file.version != MODEL_FORMAT_VERSION {
        return Err(Error::VersionMismatch {
            found: file.version,
            expected: MODEL_FORMAT_VERSION,
        });
    }
    let mut layers = Vec::with_capacity(file.layers.len());
    for lf in file.layers {
        let mut w = lf.weights;
        let params = match file.algorithm {
            Algorithm::Sage => LayerParams::Sage {
                w_self: take_mat(&mut w, "w_self")?,
                w_nbr: take_mat(&mut w, "w_nbr")?,
                bias: take_vec(&mut w, "bias")?,
            },
            Algorithm::Gcn => LayerParams::Gcn {
                weight: take_mat(&mut w, "weight")?,
                bias: take_vec(&mut w, "bias")?,
            },
            Algorithm::Gat => LayerParams::Gat {
                weight: take_mat(&mut w, "weight")?,
                att_src: take_vec(&mut w, "att_src")?,
                att_dst: take_vec(&mut w, "att_dst")?,
                bias: take_vec(&mut w, "bias")?,
            },
        };
        if let Some(extra) = w.keys().next() {
            return Err(Error::Shape(format!("unexpected weight {extra:?}")));
        }
        if lf.signature.input_dim != lf.input_dim || lf.signature.output_dim != lf.output_dim {
            return Err(Error::Shape(
                "signature dims disagree with layer dims".into(),
            ));
        }
        layers.push(GnnLayer {
            params,
            activation: lf.activation,
            signature: lf.signature,
        });
    }
    let head = Head {
        weight: match file.head.w_out.shape.as_slice() {
            &[r, c] => DenseMatrix::new(r, c, file.head.w_out.data)?,
            other => return Err(Error::Shape(format!("W_out has shape {other:?}"))),
        },
        bias: DenseVector::new(file.head.b_out),
    };
    let model = ModelBundle {
        algorithm: file.algorithm,
        feature_dim: file.feature_dim,
        num_classes: file.num_classes,
        layers,
        head,
    };
    model.validate()?;
    Ok(model)
}

pub fn model_to_json(model: &ModelBundle) -> Result<String> {
    Ok(serde_json::to_string_pretty(&to_file(model))?)
}

pub fn model_from_json(text: &str) -> Result<ModelBundle> {
    let file: ModelFile =
        serde_json::from_str(text).map_err(|e| Error::CorruptModel(e.to_string()))?;
    from_file(file)
}

pub fn save_model(model: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, &to_file(model))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_reader(BufReader::new(f))
        .map_err(|e| Error::CorruptModel(e.to_string()))?;
    from_file(file)
}
