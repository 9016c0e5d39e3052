//! Model zoo: plain MLPs and small ConvNets over the tape ops.
//!
//! Parameters live in the model between steps and are re-bound onto a fresh
//! tape for every forward pass. Initialization is He-normal on all weights
//! (std `sqrt(2 / fan_in)`) and zeros on all biases, drawn from a seeded
//! generator in parameter order, so two builds with the same config and seed
//! are byte-identical.

use crate::error::Error;
use crate::numeric::{real, Real};
use crate::rng::SeededRng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Architecture family.
///
/// Conv layers use 3x3 kernels at stride 1 (size-preserving with pad 1) and
/// 4x4 kernels at stride 2 (exact halving of even dims with pad 1); there is
/// no pooling, downsampling happens only through stride.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Family {
    Mlp { hidden: Vec<usize> },
    Conv { layers: Vec<ConvLayer> },
}

/// One conv block: output channels and stride (1 or 2).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConvLayer {
    pub channels: usize,
    pub stride: usize,
}

/// Everything needed to rebuild a model skeleton: family, per-sample input
/// shape, and class count.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelConfig {
    pub family: Family,
    pub input_shape: Vec<usize>,
    pub num_classes: usize,
}

/// Named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// A built model: config plus parameters in a stable order (layer pairs of
/// weight then bias, head last).
#[derive(Debug, Clone)]
pub struct Model<T> {
    config: ModelConfig,
    params: Vec<Param<T>>,
}

/// Named parameter shapes in binding order plus the flattened feature width.
type Layout = (Vec<(String, Vec<usize>)>, usize);

impl ModelConfig {
    pub fn mlp(input_shape: impl Into<Vec<usize>>, hidden: Vec<usize>, num_classes: usize) -> Self {
        ModelConfig {
            family: Family::Mlp { hidden },
            input_shape: input_shape.into(),
            num_classes,
        }
    }

    pub fn conv(
        input_shape: impl Into<Vec<usize>>,
        layers: Vec<ConvLayer>,
        num_classes: usize,
    ) -> Self {
        ModelConfig {
            family: Family::Conv { layers },
            input_shape: input_shape.into(),
            num_classes,
        }
    }

    /// Per-sample input element count.
    pub fn input_numel(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::config(format!(
                "num_classes must be >= 2, got {}",
                self.num_classes
            )));
        }
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::config(format!(
                "input_shape must be non-empty with positive dims, got {:?}",
                self.input_shape
            )));
        }
        match &self.family {
            Family::Mlp { hidden } => {
                if hidden.contains(&0) {
                    return Err(Error::config("MLP hidden widths must be positive"));
                }
            }
            Family::Conv { layers } => {
                if layers.is_empty() {
                    return Err(Error::config("Conv family needs at least one layer"));
                }
                if self.input_shape.len() != 3 {
                    return Err(Error::config(format!(
                        "Conv input_shape must be [C,H,W], got {:?}",
                        self.input_shape
                    )));
                }
                for (i, l) in layers.iter().enumerate() {
                    if l.channels == 0 {
                        return Err(Error::config(format!("conv{i} channels must be positive")));
                    }
                    if l.stride != 1 && l.stride != 2 {
                        return Err(Error::config(format!(
                            "conv{i} stride must be 1 or 2, got {}",
                            l.stride
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Parameter names, shapes and the flattened feature width, in binding
    /// order. Conv spatial arithmetic is validated here so an impossible
    /// stride chain fails at build time, not mid-training.
    fn layout(&self) -> Result<Layout> {
        self.validate()?;
        let mut out = Vec::new();
        let feature_width;
        match &self.family {
            Family::Mlp { hidden } => {
                let mut from = self.input_numel();
                for (i, &width) in hidden.iter().enumerate() {
                    out.push((format!("fc{i}.weight"), alloc::vec![from, width]));
                    out.push((format!("fc{i}.bias"), alloc::vec![width]));
                    from = width;
                }
                feature_width = from;
            }
            Family::Conv { layers } => {
                let (mut c, mut h, mut w) = (
                    self.input_shape[0],
                    self.input_shape[1],
                    self.input_shape[2],
                );
                for (i, l) in layers.iter().enumerate() {
                    let k = if l.stride == 1 { 3 } else { 4 };
                    for (dim, name) in [(h, "height"), (w, "width")] {
                        if dim + 2 < k || (dim + 2 - k) % l.stride != 0 {
                            return Err(Error::config(format!(
                                "conv{i}: {name} {dim} with kernel {k}, stride {}, pad 1 \
                                 gives a non-integer output size",
                                l.stride
                            )));
                        }
                    }
                    out.push((format!("conv{i}.weight"), alloc::vec![l.channels, c, k, k]));
                    out.push((format!("conv{i}.bias"), alloc::vec![l.channels]));
                    h = (h + 2 - k) / l.stride + 1;
                    w = (w + 2 - k) / l.stride + 1;
                    c = l.channels;
                }
                feature_width = c * h * w;
            }
        }
        out.push((
            String::from("head.weight"),
            alloc::vec![feature_width, self.num_classes],
        ));
        out.push((String::from("head.bias"), alloc::vec![self.num_classes]));
        Ok((out, feature_width))
    }

    /// Total trainable parameter count, computable without building.
    pub fn count_params(&self) -> Result<usize> {
        let (layout, _) = self.layout()?;
        Ok(layout
            .iter()
            .map(|(_, shape)| shape.iter().product::<usize>())
            .sum())
    }
}

fn fan_in(shape: &[usize]) -> usize {
    match shape.len() {
        // [in, out] linear weight
        2 => shape[0],
        // [O, C, KH, KW] conv kernel
        4 => shape[1] * shape[2] * shape[3],
        _ => 1,
    }
}

impl<T: Real> Model<T> {
    /// He-normal weights, zero biases, drawn in parameter order from a
    /// generator seeded with `seed`.
    pub fn build(config: &ModelConfig, seed: u64) -> Result<Self> {
        use num_traits::Float;
        let (layout, _) = config.layout()?;
        let mut rng = SeededRng::new(seed);
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let tensor = if name.ends_with(".bias") {
                Tensor::zeros(shape)
            } else {
                let std = real::<T>(Float::sqrt(2.0 / fan_in(&shape) as f64));
                let numel: usize = shape.iter().product();
                let data: Vec<T> = (0..numel).map(|_| real::<T>(rng.normal()) * std).collect();
                Tensor::new(data, shape)?
            };
            params.push(Param { name, tensor });
        }
        Ok(Model {
            config: config.clone(),
            params,
        })
    }

    /// Rebuilds a model from externally stored parameters (checkpoint load).
    /// Names and shapes must match the config's layout exactly, in order.
    pub fn from_parts(config: &ModelConfig, parts: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let (layout, _) = config.layout()?;
        if parts.len() != layout.len() {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                layout.len(),
                parts.len()
            )));
        }
        let mut params = Vec::with_capacity(parts.len());
        for ((name, shape), (got_name, tensor)) in layout.into_iter().zip(parts) {
            if got_name != name {
                return Err(Error::contract(format!(
                    "parameter name mismatch: expected '{name}', got '{got_name}'"
                )));
            }
            if tensor.shape() != shape.as_slice() {
                return Err(Error::contract(format!(
                    "parameter '{name}' shape mismatch: expected {:?}, got {:?}",
                    shape,
                    tensor.shape()
                )));
            }
            params.push(Param { name, tensor });
        }
        Ok(Model {
            config: config.clone(),
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.iter().map(|p| p.tensor.numel()).sum()
    }

    /// Inserts every parameter as a tape leaf, gradient-tracked when
    /// `trainable`. Returns the vars in parameter order.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| {
                let mut t = p.tensor.clone();
                t.set_requires_grad(trainable);
                tape.leaf(t)
            })
            .collect()
    }

    /// Forward pass over already-bound parameter vars. Returns
    /// `(logits [N,K], features [N,F])` where features are the flattened
    /// penultimate activations (for an MLP with no hidden layers, the
    /// flattened input itself).
    pub fn forward_on(&self, tape: &mut Tape<T>, params: &[Var], input: Var) -> Result<(Var, Var)> {
        if params.len() != self.params.len() {
            return Err(Error::contract(format!(
                "forward_on got {} param vars, model has {}",
                params.len(),
                self.params.len()
            )));
        }
        let batch_shape = tape.value(input).shape().to_vec();
        let expected: Vec<usize> = self.config.input_shape.clone();
        if batch_shape.len() != expected.len() + 1 || batch_shape[1..] != expected[..] {
            let mut want = alloc::vec![0];
            want.extend_from_slice(&expected);
            return Err(Error::ShapeMismatch {
                op: "forward: batch vs model input_shape (leading dim is the batch)",
                lhs: want,
                rhs: batch_shape,
            });
        }
        let n = batch_shape[0];
        if n == 0 {
            return Err(Error::contract("forward on an empty batch"));
        }

        let features = match &self.config.family {
            Family::Mlp { hidden } => {
                let mut x = tape.reshape(input, [n, self.config.input_numel()])?;
                for i in 0..hidden.len() {
                    let z = tape.matmul(x, params[2 * i])?;
                    let z = tape.bias_add(z, params[2 * i + 1])?;
                    x = tape.relu(z)?;
                }
                x
            }
            Family::Conv { layers } => {
                let mut x = input;
                for (i, l) in layers.iter().enumerate() {
                    let z = tape.conv2d(x, params[2 * i], l.stride, 1)?;
                    let z = tape.bias_add(z, params[2 * i + 1])?;
                    x = tape.relu(z)?;
                }
                let flat = tape.value(x).numel() / n;
                tape.reshape(x, [n, flat])?
            }
        };
        let head_w = params[params.len() - 2];
        let head_b = params[params.len() - 1];
        let z = tape.matmul(features, head_w)?;
        let logits = tape.bias_add(z, head_b)?;
        Ok((logits, features))
    }

    /// Logits for a batch on a scratch tape, no gradients.
    pub fn logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let input = tape.leaf(batch.clone());
        let (logits, _) = self.forward_on(&mut tape, &params, input)?;
        Ok(tape.value(logits).clone())
    }

    /// Penultimate-layer features for a batch on a scratch tape.
    pub fn features(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false);
        let input = tape.leaf(batch.clone());
        let (_, features) = self.forward_on(&mut tape, &params, input)?;
        Ok(tape.value(features).clone())
    }
}
