//! Small sequential models with named parameter groups.
//!
//! Every parameterized layer (affine or convolution) owns one
//! [`ParameterGroup`]; the groups, in forward order, are the "layers" that
//! receive their own learning rate. Activations, pooling and flattening carry
//! no parameters and are not groups.

mod io;
mod layers;

pub use io::{load_model, save_model};
pub use layers::{LayerSpec, Padding};

use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{loss_gradient, GradientSnapshot, LossKind, Tensor};

/// Architecture description plus initialization seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    /// Per-sample input shape, without the batch dimension.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub seed: u64,
}

impl ModelSpec {
    /// Fully connected ReLU network, e.g. `[4, 8, 2]` is `4→8→2`. No
    /// activation follows the last layer.
    pub fn mlp(sizes: &[usize], seed: u64) -> Self {
        let mut layers = Vec::new();
        for (i, w) in sizes.windows(2).enumerate() {
            if i > 0 {
                layers.push(LayerSpec::Relu);
            }
            layers.push(LayerSpec::Linear {
                inputs: w[0],
                outputs: w[1],
                bias: true,
            });
        }
        ModelSpec {
            input_shape: vec![sizes.first().copied().unwrap_or(0)],
            layers,
            seed,
        }
    }

    /// Output shape of each layer (batch dimension excluded), validating that
    /// consecutive layers compose.
    fn infer_shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_shape.is_empty() || self.input_shape.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "input shape {:?} must be non-empty with positive dimensions",
                self.input_shape
            )));
        }
        let mut shape = self.input_shape.clone();
        let mut out = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let bad =
                |reason: String| Error::InvalidSpec(format!("layer {i} ({layer:?}): {reason}"));
            shape = match *layer {
                LayerSpec::Linear {
                    inputs, outputs, ..
                } => {
                    if inputs == 0 || outputs == 0 {
                        return Err(bad("sizes must be positive".into()));
                    }
                    if shape != [inputs] {
                        return Err(bad(format!(
                            "expects [{inputs}] input, previous layer produces {shape:?}"
                        )));
                    }
                    vec![outputs]
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel,
                    padding,
                    ..
                } => {
                    if in_channels == 0 || out_channels == 0 || kernel == 0 {
                        return Err(bad("sizes must be positive".into()));
                    }
                    if padding == Padding::Same && kernel % 2 == 0 {
                        return Err(bad("same padding needs an odd kernel".into()));
                    }
                    if shape.len() != 3 || shape[0] != in_channels {
                        return Err(bad(format!(
                            "expects ({in_channels}, H, W) input, previous layer produces {shape:?}"
                        )));
                    }
                    let h = layers::conv_output_size(shape[1], kernel, padding);
                    let w = layers::conv_output_size(shape[2], kernel, padding);
                    match (h, w) {
                        (Some(h), Some(w)) => vec![out_channels, h, w],
                        _ => {
                            return Err(bad(format!("kernel {kernel} larger than input {shape:?}")))
                        }
                    }
                }
                LayerSpec::Relu => shape,
                LayerSpec::MaxPool2d { size } => {
                    if shape.len() != 3 || size == 0 || shape[1] < size || shape[2] < size {
                        return Err(bad(format!("cannot pool {shape:?} by {size}")));
                    }
                    vec![shape[0], shape[1] / size, shape[2] / size]
                }
                LayerSpec::Flatten => vec![shape.iter().product()],
            };
            out.push(shape.clone());
        }
        Ok(out)
    }
}

/// One named layer θ_j: weight, optional bias, depth index `j` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGroup {
    name: String,
    depth: usize,
    weight: Tensor,
    bias: Option<Tensor>,
}

impl ParameterGroup {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> Option<&Tensor> {
        self.bias.as_ref()
    }

    /// Weight then bias.
    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        std::iter::once(&self.weight).chain(self.bias.as_ref())
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        std::iter::once(&mut self.weight).chain(self.bias.as_mut())
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().map(Tensor::len).sum()
    }
}

static NEXT_STAMP: AtomicU64 = AtomicU64::new(1);

fn fresh_stamp() -> u64 {
    NEXT_STAMP.fetch_add(1, Ordering::Relaxed)
}

/// The full parameter set θ of a model, ordered by depth.
///
/// Each mutable access re-stamps the set, which is how a backward pass
/// detects that its forward cache is stale.
#[derive(Debug, Clone)]
pub struct Params {
    groups: Vec<ParameterGroup>,
    stamp: u64,
}

impl PartialEq for Params {
    fn eq(&self, other: &Self) -> bool {
        self.groups == other.groups
    }
}

impl Params {
    pub(crate) fn from_groups(groups: Vec<ParameterGroup>) -> Self {
        Params {
            groups,
            stamp: fresh_stamp(),
        }
    }

    pub fn groups(&self) -> &[ParameterGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParameterGroup] {
        self.stamp = fresh_stamp();
        &mut self.groups
    }

    pub fn group(&self, name: &str) -> Option<&ParameterGroup> {
        self.groups.iter().find(|g| g.name == name)
    }

    pub fn group_mut(&mut self, name: &str) -> Option<&mut ParameterGroup> {
        self.stamp = fresh_stamp();
        self.groups.iter_mut().find(|g| g.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.groups.iter().map(ParameterGroup::num_parameters).sum()
    }

    /// All values, group by group, weight before bias.
    pub fn flatten(&self) -> Vec<f64> {
        self.groups
            .iter()
            .flat_map(|g| g.tensors().flat_map(|t| t.data().iter().copied()))
            .collect()
    }

    /// Applies `f(group, tensor index, tensor)` to build a new parameter set
    /// with the same layout.
    pub(crate) fn map_tensors(
        &self,
        mut f: impl FnMut(&ParameterGroup, usize, &Tensor) -> Result<Tensor>,
    ) -> Result<Params> {
        let groups = self
            .groups
            .iter()
            .map(|g| {
                let mut tensors = g.tensors().enumerate().map(|(i, t)| f(g, i, t));
                let weight = tensors.next().expect("weight")?;
                let bias = tensors.next().transpose()?;
                Ok(ParameterGroup {
                    name: g.name.clone(),
                    depth: g.depth,
                    weight,
                    bias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Params::from_groups(groups))
    }

    fn check_layout(&self, reference: &Params) -> Result<()> {
        let same = self.groups.len() == reference.groups.len()
            && self.groups.iter().zip(&reference.groups).all(|(a, b)| {
                a.name == b.name
                    && a.weight.shape() == b.weight.shape()
                    && a.bias.as_ref().map(Tensor::shape) == b.bias.as_ref().map(Tensor::shape)
            });
        if same {
            Ok(())
        } else {
            Err(Error::LayerMismatch {
                expected: reference.names(),
                actual: self.names(),
            })
        }
    }
}

/// Forward/backward pass counts, observable for cost accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PassCounts {
    pub forward: u64,
    pub backward: u64,
}

#[derive(Debug, Clone, Default)]
struct PassCounter {
    forward: Cell<u64>,
    backward: Cell<u64>,
}

/// Activations recorded by one forward pass, consumed by one backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    stamp: u64,
    layer_inputs: Vec<Tensor>,
    pool_argmax: Vec<Option<Vec<usize>>>,
    output: Tensor,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor {
        &self.output
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    spec: ModelSpec,
    // parameter-group index for each layer of `spec.layers`
    group_of_layer: Vec<Option<usize>>,
    output_shape: Vec<usize>,
    params: Params,
    passes: PassCounter,
}

fn init_group(
    rng: &mut ChaCha8Rng,
    name: String,
    depth: usize,
    layer: &LayerSpec,
) -> ParameterGroup {
    let (wshape, fan_in, bias, out) = match *layer {
        LayerSpec::Linear {
            inputs,
            outputs,
            bias,
        } => (vec![outputs, inputs], inputs, bias, outputs),
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            bias,
            ..
        } => (
            vec![out_channels, in_channels, kernel, kernel],
            in_channels * kernel * kernel,
            bias,
            out_channels,
        ),
        _ => unreachable!("only parameterized layers are initialized"),
    };
    // He initialization
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    let n: usize = wshape.iter().product();
    let values = (0..n).map(|_| normal.sample(rng)).collect();
    ParameterGroup {
        name,
        depth,
        weight: Tensor::from_raw(wshape, values),
        bias: bias.then(|| Tensor::zeros(&[out])),
    }
}

impl Model {
    /// Validates the spec and initializes parameters from `spec.seed`.
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let shapes = spec.infer_shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut groups = Vec::new();
        let mut group_of_layer = Vec::with_capacity(spec.layers.len());
        let (mut n_fc, mut n_conv) = (0, 0);
        for layer in &spec.layers {
            let name = match layer {
                LayerSpec::Linear { .. } => {
                    n_fc += 1;
                    format!("fc{n_fc}")
                }
                LayerSpec::Conv2d { .. } => {
                    n_conv += 1;
                    format!("conv{n_conv}")
                }
                _ => {
                    group_of_layer.push(None);
                    continue;
                }
            };
            group_of_layer.push(Some(groups.len()));
            let depth = groups.len() + 1;
            groups.push(init_group(&mut rng, name, depth, layer));
        }
        if groups.is_empty() {
            return Err(Error::InvalidSpec(
                "model has no parameterized layer".into(),
            ));
        }
        let output_shape = shapes
            .last()
            .cloned()
            .unwrap_or_else(|| spec.input_shape.clone());
        Ok(Model {
            spec,
            group_of_layer,
            output_shape,
            params: Params::from_groups(groups),
            passes: PassCounter::default(),
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        self.params.stamp = fresh_stamp();
        &mut self.params
    }

    /// Replaces the parameters; the layout must match.
    pub fn set_params(&mut self, params: Params) -> Result<()> {
        params.check_layout(&self.params)?;
        self.params = params;
        Ok(())
    }

    /// Number of parameter groups `d`.
    pub fn depth(&self) -> usize {
        self.params.groups.len()
    }

    /// Group names in depth order.
    pub fn layer_groups(&self) -> Vec<String> {
        self.params.names()
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.spec.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn pass_counts(&self) -> PassCounts {
        PassCounts {
            forward: self.passes.forward.get(),
            backward: self.passes.backward.get(),
        }
    }

    pub fn reset_pass_counts(&self) {
        self.passes.forward.set(0);
        self.passes.backward.set(0);
    }

    pub fn forward(&self, inputs: &Tensor) -> Result<ForwardCache> {
        self.forward_with(&self.params, inputs)
    }

    /// Forward pass at an explicit parameter set with this model's layout
    /// (used to evaluate lookahead parameters without mutating the model).
    pub fn forward_with(&self, params: &Params, inputs: &Tensor) -> Result<ForwardCache> {
        params.check_layout(&self.params)?;
        if inputs.rank() != self.spec.input_shape.len() + 1
            || inputs.shape()[1..] != self.spec.input_shape[..]
        {
            let first = self
                .params
                .groups
                .first()
                .map_or("input", |g| g.name.as_str());
            return Err(Error::ShapeMismatch {
                context: format!("input to {first}"),
                expected: self.spec.input_shape.clone(),
                actual: inputs.shape().get(1..).unwrap_or_default().to_vec(),
            });
        }
        self.passes.forward.set(self.passes.forward.get() + 1);
        let mut layer_inputs = Vec::with_capacity(self.spec.layers.len());
        let mut pool_argmax = Vec::with_capacity(self.spec.layers.len());
        let mut x = inputs.clone();
        for (layer, group) in self.spec.layers.iter().zip(&self.group_of_layer) {
            let mut argmax = None;
            let y = match *layer {
                LayerSpec::Linear { .. } => {
                    let g = &params.groups[group.expect("linear group")];
                    layers::linear_forward(&x, &g.weight, g.bias.as_ref())
                }
                LayerSpec::Conv2d { padding, .. } => {
                    let g = &params.groups[group.expect("conv group")];
                    layers::conv2d_forward(&x, &g.weight, g.bias.as_ref(), padding)
                }
                LayerSpec::Relu => layers::relu_forward(&x),
                LayerSpec::MaxPool2d { size } => {
                    let (y, arg) = layers::maxpool_forward(&x, size);
                    argmax = Some(arg);
                    y
                }
                LayerSpec::Flatten => {
                    let n = x.batch();
                    let rest = x.len() / n;
                    x.reshape(vec![n, rest])?
                }
            };
            layer_inputs.push(std::mem::replace(&mut x, y));
            pool_argmax.push(argmax);
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("forward".into()));
        }
        Ok(ForwardCache {
            stamp: params.stamp,
            layer_inputs,
            pool_argmax,
            output: x,
        })
    }

    pub fn backward(
        &self,
        cache: &ForwardCache,
        labels: &Tensor,
        kind: LossKind,
    ) -> Result<GradientSnapshot> {
        self.backward_with(&self.params, cache, labels, kind)
    }

    /// Reverse-mode gradient of the batch-mean loss with respect to every
    /// parameter tensor of `params`. The cache must come from a forward pass
    /// at exactly these parameters.
    pub fn backward_with(
        &self,
        params: &Params,
        cache: &ForwardCache,
        labels: &Tensor,
        kind: LossKind,
    ) -> Result<GradientSnapshot> {
        if cache.stamp != params.stamp {
            return Err(Error::StaleCache);
        }
        self.passes.backward.set(self.passes.backward.get() + 1);
        let mut grads: Vec<Option<Vec<Tensor>>> = vec![None; params.groups.len()];
        let mut dy = loss_gradient(&cache.output, labels, kind)?;
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let x = &cache.layer_inputs[i];
            dy = match *layer {
                LayerSpec::Linear { bias, .. } => {
                    let gi = self.group_of_layer[i].expect("linear group");
                    let (dx, dw, db) =
                        layers::linear_backward(x, &params.groups[gi].weight, &dy, bias);
                    grads[gi] = Some(std::iter::once(dw).chain(db).collect());
                    dx
                }
                LayerSpec::Conv2d { padding, bias, .. } => {
                    let gi = self.group_of_layer[i].expect("conv group");
                    let (dx, dw, db) =
                        layers::conv2d_backward(x, &params.groups[gi].weight, &dy, padding, bias);
                    grads[gi] = Some(std::iter::once(dw).chain(db).collect());
                    dx
                }
                LayerSpec::Relu => layers::relu_backward(x, &dy),
                LayerSpec::MaxPool2d { .. } => {
                    let arg = cache.pool_argmax[i].as_ref().expect("pool argmax");
                    layers::maxpool_backward(x, arg, &dy)
                }
                LayerSpec::Flatten => dy.reshape(x.shape().to_vec())?,
            };
        }
        let layers = params
            .groups
            .iter()
            .zip(grads)
            .map(|(g, t)| (g.name.clone(), t.expect("every group visited")));
        let snapshot = GradientSnapshot::from_layers(layers, labels.batch());
        if !snapshot.is_finite() {
            return Err(Error::NonFinite("backward".into()));
        }
        Ok(snapshot)
    }

    /// Batch-mean loss at `params` (one forward pass, no cache retained).
    pub fn loss_at(
        &self,
        params: &Params,
        inputs: &Tensor,
        labels: &Tensor,
        kind: LossKind,
    ) -> Result<f64> {
        let cache = self.forward_with(params, inputs)?;
        crate::tensor::compute_loss(&cache.output, labels, kind)
    }

    /// Re-initializes the last `k` parameter groups from `seed`, leaving the
    /// earlier groups bit-identical. Requires `1 <= k < d`.
    pub fn reinit_head(&mut self, k: usize, seed: u64) -> Result<()> {
        let d = self.depth();
        if k == 0 || k >= d {
            return Err(Error::InvalidArgument(format!(
                "reinit_head needs 1 <= k < d = {d}, got k = {k}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer_specs: Vec<(usize, LayerSpec)> = self
            .group_of_layer
            .iter()
            .zip(&self.spec.layers)
            .filter_map(|(g, l)| g.map(|g| (g, l.clone())))
            .collect();
        let params = self.params_mut();
        for (gi, layer) in layer_specs.into_iter().skip(d - k) {
            let old = &params.groups[gi];
            let fresh = init_group(&mut rng, old.name.clone(), old.depth, &layer);
            params.groups[gi] = fresh;
        }
        Ok(())
    }
}

/// Builds a fully connected model: rank-1 input, only affine and ReLU layers,
/// at least two affine layers.
pub fn build_mlp(spec: ModelSpec) -> Result<Model> {
    if spec.input_shape.len() != 1 {
        return Err(Error::InvalidSpec(
            "MLP input must be a flat feature vector".into(),
        ));
    }
    if spec
        .layers
        .iter()
        .any(|l| !matches!(l, LayerSpec::Linear { .. } | LayerSpec::Relu))
    {
        return Err(Error::InvalidSpec(
            "MLP layers must be Linear or Relu".into(),
        ));
    }
    let linear = spec.layers.iter().filter(|l| l.is_parameterized()).count();
    if linear < 2 {
        return Err(Error::InvalidSpec(format!(
            "MLP needs at least 2 layers, got {linear}"
        )));
    }
    Model::new(spec)
}

/// Builds a convolutional model over `(channels, height, width)` inputs with
/// at least one convolution.
pub fn build_cnn(spec: ModelSpec) -> Result<Model> {
    if spec.input_shape.len() != 3 {
        return Err(Error::InvalidSpec(
            "CNN input must be (channels, height, width)".into(),
        ));
    }
    if !spec
        .layers
        .iter()
        .any(|l| matches!(l, LayerSpec::Conv2d { .. }))
    {
        return Err(Error::InvalidSpec(
            "CNN needs at least one convolution".into(),
        ));
    }
    Model::new(spec)
}

/// Small CNN used throughout tests: `conv(3×3, same) → ReLU → max-pool(2) →
/// flatten → fc`.
pub fn small_cnn_spec(
    channels: usize,
    side: usize,
    filters: usize,
    classes: usize,
    seed: u64,
) -> ModelSpec {
    let pooled = side / 2;
    ModelSpec {
        input_shape: vec![channels, side, side],
        layers: vec![
            LayerSpec::Conv2d {
                in_channels: channels,
                out_channels: filters,
                kernel: 3,
                padding: Padding::Same,
                bias: true,
            },
            LayerSpec::Relu,
            LayerSpec::MaxPool2d { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Linear {
                inputs: filters * pooled * pooled,
                outputs: classes,
                bias: true,
            },
        ],
        seed,
    }
}

/// Accuracy of argmax predictions against integer labels.
pub fn accuracy(predictions: &Tensor, labels: &Tensor) -> f64 {
    let hits = predictions
        .argmax_rows()
        .iter()
        .zip(labels.data())
        .filter(|(p, l)| **p as f64 == **l)
        .count();
    hits as f64 / labels.len() as f64
}
