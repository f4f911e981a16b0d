//! Reference architectures and their parameter handling.
//!
//! Networks are written once, over the abstract [`NetDomain`] operations in
//! [`dynamics`]; instantiating the domain with a tape builder yields the
//! differentiable concrete network, instantiating it with interval arithmetic
//! (see `verify`) yields sound bounds from the very same code path. This is
//! what guarantees that degenerate intervals reproduce concrete evaluation
//! exactly: both run the same operations in the same order.

pub mod cnn;
pub mod domain;
pub mod dynamics;
pub mod mlp;
pub mod srnn;

pub use cnn::CnnConfig;
pub use domain::{NetDomain, TapeDomain};
pub use mlp::MlpConfig;
pub use srnn::{srnn_step, surrogate_spike_backward, SrnnConfig, SrnnState};

use crate::diffcore::exec::{self, Bindings, Evaluation};
use crate::diffcore::rng::RngStream;
use crate::diffcore::tape::{NodeId, Tape};
use crate::diffcore::tensor::{Real, Tensor};
use crate::error::{Error, Result};
use std::collections::BTreeMap;

/// One named parameter array plus its mismatch susceptibility.
///
/// Non-susceptible arrays are trained normally but are never perturbed by the
/// mismatch model, weight attacks, or interval lifting.
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub value: Tensor<T>,
    pub susceptible: bool,
}

/// An ordered collection of named parameter arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterSet<T> {
    entries: BTreeMap<String, Param<T>>,
}

impl<T: Real> ParameterSet<T> {
    pub fn new() -> Self {
        ParameterSet {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Tensor<T>, susceptible: bool) {
        self.entries
            .insert(name.to_string(), Param { value, susceptible });
    }

    pub fn get(&self, name: &str) -> Result<&Param<T>> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))
    }

    pub fn value(&self, name: &str) -> Result<&Tensor<T>> {
        Ok(&self.get(name)?.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Result<&mut Tensor<T>> {
        Ok(&mut self
            .entries
            .get_mut(name)
            .ok_or_else(|| Error::MissingParameter(name.to_string()))?
            .value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param<T>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Param<T>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn total_elements(&self) -> usize {
        self.entries.values().map(|p| p.value.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.entries.values().all(|p| p.value.all_finite())
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        let mut out = ParameterSet::new();
        for (name, p) in self.iter() {
            out.insert(name, p.value.cast(), p.susceptible);
        }
        out
    }
}

/// How a parameter array is initialised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitKind {
    /// Normal with variance `2 / (fan_in + fan_out)`.
    GlorotNormal,
    /// Glorot normal additionally multiplied by a fixed factor.
    GlorotNormalScaled(f64),
    Zeros,
}

/// Static description of one parameter array of an architecture.
#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub susceptible: bool,
    pub init: InitKind,
    /// `(fan_in, fan_out)` used for Glorot initialisation.
    pub fans: (usize, usize),
}

/// Draw a Glorot-normal array: zero mean, variance `2 / (fan_in + fan_out)`.
pub fn glorot_normal<T: Real>(
    rng: &mut RngStream,
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
) -> Tensor<T> {
    let std = (2.0 / (fan_in + fan_out) as f64).sqrt();
    let mut out = Tensor::zeros(shape);
    for x in out.data_mut() {
        *x = T::from_f64(std * rng.normal());
    }
    out
}

/// One of the three supported network families.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Architecture {
    Mlp(MlpConfig),
    Cnn(CnnConfig),
    Srnn(SrnnConfig),
}

impl Architecture {
    pub fn classes(&self) -> usize {
        match self {
            Architecture::Mlp(c) => *c.layers.last().expect("mlp has layers"),
            Architecture::Cnn(c) => c.classes,
            Architecture::Srnn(c) => c.classes,
        }
    }

    /// Lower-case family tag, matching the serialized `family` field.
    pub fn family_name(&self) -> &'static str {
        match self {
            Architecture::Mlp(_) => "mlp",
            Architecture::Cnn(_) => "cnn",
            Architecture::Srnn(_) => "srnn",
        }
    }

    pub fn param_specs(&self) -> Vec<ParamSpec> {
        match self {
            Architecture::Mlp(c) => c.param_specs(),
            Architecture::Cnn(c) => c.param_specs(),
            Architecture::Srnn(c) => c.param_specs(),
        }
    }

    /// Total scalar parameter count of the architecture.
    pub fn param_count(&self) -> usize {
        self.param_specs()
            .iter()
            .map(|s| crate::diffcore::tensor::shape_len(&s.shape))
            .sum()
    }

    /// Deterministically initialise all parameter arrays from one stream.
    pub fn init_params<T: Real>(&self, rng: &mut RngStream) -> ParameterSet<T> {
        let mut set = ParameterSet::new();
        for spec in self.param_specs() {
            let value = match spec.init {
                InitKind::GlorotNormal => {
                    glorot_normal(rng, &spec.shape, spec.fans.0, spec.fans.1)
                }
                InitKind::GlorotNormalScaled(factor) => {
                    let mut t: Tensor<T> =
                        glorot_normal(rng, &spec.shape, spec.fans.0, spec.fans.1);
                    let f = T::from_f64(factor);
                    for x in t.data_mut() {
                        *x *= f;
                    }
                    t
                }
                InitKind::Zeros => Tensor::zeros(&spec.shape),
            };
            set.insert(&spec.name, value, spec.susceptible);
        }
        set
    }

    /// Number of dropout masks a forward pass consumes (`t_steps` only
    /// matters for the spiking network).
    pub fn mask_count(&self, t_steps: usize) -> usize {
        match self {
            Architecture::Mlp(c) => c.layers.len().saturating_sub(2),
            Architecture::Cnn(c) => 2 + c.dense.len(),
            Architecture::Srnn(_) => t_steps,
        }
    }
}

/// A batch of model inputs; sequences carry their own step count.
#[derive(Debug, Clone)]
pub enum ModelInput<T> {
    /// `[n, ...]` features consumed in one shot (flat vectors for the MLP,
    /// `[n,h,w,c]` images for the CNN, per-step-repeated currents for the
    /// spiking network).
    Static(Tensor<T>),
    /// `[n, t, d]` input-current sequences for the spiking network.
    Sequence(Tensor<T>),
}

impl<T: Real> ModelInput<T> {
    pub fn batch_size(&self) -> usize {
        match self {
            ModelInput::Static(x) | ModelInput::Sequence(x) => x.shape()[0],
        }
    }

    /// Step count seen by the spiking network.
    pub fn time_steps(&self, cfg_steps: usize) -> usize {
        match self {
            ModelInput::Static(_) => cfg_steps,
            ModelInput::Sequence(x) => x.shape()[1],
        }
    }

    /// Materialise step `t` as an `[n, d]` tensor (sequences only).
    pub fn step_slice(&self, t: usize) -> Tensor<T> {
        match self {
            ModelInput::Sequence(x) => {
                let (n, steps, d) = (x.shape()[0], x.shape()[1], x.shape()[2]);
                let mut out = Tensor::zeros(&[n, d]);
                let od = out.data_mut();
                for row in 0..n {
                    let src = &x.data()[row * steps * d + t * d..row * steps * d + (t + 1) * d];
                    od[row * d..(row + 1) * d].copy_from_slice(src);
                }
                out
            }
            ModelInput::Static(_) => panic!("step_slice on static input"),
        }
    }

    /// Select a subset of rows (same layout) by index.
    pub fn select(&self, rows: &[usize]) -> ModelInput<T> {
        match self {
            ModelInput::Static(x) => ModelInput::Static(select_rows(x, rows)),
            ModelInput::Sequence(x) => ModelInput::Sequence(select_rows(x, rows)),
        }
    }
}

fn select_rows<T: Real>(x: &Tensor<T>, rows: &[usize]) -> Tensor<T> {
    let row_len: usize = x.shape()[1..].iter().product();
    let mut shape = x.shape().to_vec();
    shape[0] = rows.len();
    let mut out = Tensor::zeros(&shape);
    for (i, &r) in rows.iter().enumerate() {
        out.data_mut()[i * row_len..(i + 1) * row_len]
            .copy_from_slice(&x.data()[r * row_len..(r + 1) * row_len]);
    }
    out
}

/// Labelled batch.
#[derive(Debug, Clone)]
pub struct Batch<T> {
    pub input: ModelInput<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Batch<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn one_hot(&self, classes: usize) -> Tensor<T> {
        one_hot(&self.labels, classes)
    }
}

pub fn one_hot<T: Real>(labels: &[usize], classes: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(&[labels.len(), classes]);
    for (i, &y) in labels.iter().enumerate() {
        out.data_mut()[i * classes + y] = T::one();
    }
    out
}

/// A labelled collection of examples that batches can be drawn from.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub input: ModelInput<T>,
    pub labels: Vec<usize>,
}

impl<T: Real> Dataset<T> {
    pub fn new(input: ModelInput<T>, labels: Vec<usize>) -> Result<Self> {
        if input.batch_size() != labels.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} examples but {} labels", input.batch_size(), labels.len()),
            ));
        }
        Ok(Dataset { input, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Copy out the examples at `rows` as a batch.
    pub fn batch(&self, rows: &[usize]) -> Batch<T> {
        Batch {
            input: self.input.select(rows),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
        }
    }

    /// View the whole dataset as one batch.
    pub fn as_batch(&self) -> Batch<T> {
        Batch {
            input: self.input.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Train/validation/test partition of a task.
#[derive(Debug, Clone)]
pub struct Splits<T> {
    pub train: Dataset<T>,
    pub val: Dataset<T>,
    pub test: Dataset<T>,
}

/// Shape of the data a forward pass consumes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InputShape {
    Static { batch: usize, dims: Vec<usize> },
    Sequence { batch: usize, steps: usize, dim: usize },
}

impl InputShape {
    pub fn of<T: Real>(input: &ModelInput<T>) -> InputShape {
        match input {
            ModelInput::Static(x) => InputShape::Static {
                batch: x.shape()[0],
                dims: x.shape()[1..].to_vec(),
            },
            ModelInput::Sequence(x) => InputShape::Sequence {
                batch: x.shape()[0],
                steps: x.shape()[1],
                dim: x.shape()[2],
            },
        }
    }

    pub fn batch(&self) -> usize {
        match self {
            InputShape::Static { batch, .. } | InputShape::Sequence { batch, .. } => *batch,
        }
    }
}

/// Data input nodes created on a tape for one forward pass.
#[derive(Debug, Clone)]
pub struct DataInputs {
    /// Per-step node list; length 1 for static models, `t` for sequences.
    /// A static input to the spiking network appears here repeated per step.
    pub step_nodes: Vec<NodeId>,
    /// Distinct input names actually declared on the tape.
    pub names: Vec<String>,
}

/// Create the data input nodes an architecture expects for the given shape.
pub fn append_data_inputs(
    tape: &mut Tape,
    arch: &Architecture,
    input: &InputShape,
) -> Result<DataInputs> {
    match (arch, input) {
        (Architecture::Srnn(cfg), InputShape::Sequence { batch, steps, dim }) => {
            if *dim != cfg.input_dim {
                return Err(Error::shape(
                    "forward",
                    format!("sequence dim {dim} vs input_dim {}", cfg.input_dim),
                ));
            }
            let mut nodes = Vec::with_capacity(*steps);
            let mut names = Vec::with_capacity(*steps);
            for t in 0..*steps {
                let name = format!("x_t{t}");
                nodes.push(tape.input(&name, &[*batch, *dim])?);
                names.push(name);
            }
            Ok(DataInputs {
                step_nodes: nodes,
                names,
            })
        }
        (Architecture::Srnn(cfg), InputShape::Static { batch, dims }) => {
            if dims != &[cfg.input_dim] {
                return Err(Error::shape(
                    "forward",
                    format!("static dims {dims:?} vs input_dim {}", cfg.input_dim),
                ));
            }
            let node = tape.input("x", &[*batch, cfg.input_dim])?;
            Ok(DataInputs {
                step_nodes: vec![node; cfg.n_steps.max(1)],
                names: vec!["x".to_string()],
            })
        }
        (_, InputShape::Static { batch, dims }) => {
            let mut shape = vec![*batch];
            shape.extend_from_slice(dims);
            let node = tape.input("x", &shape)?;
            Ok(DataInputs {
                step_nodes: vec![node],
                names: vec!["x".to_string()],
            })
        }
        (_, InputShape::Sequence { .. }) => Err(Error::shape(
            "forward",
            "sequence input on a non-recurrent model",
        )),
    }
}

/// Create one input node per parameter array, names prefixed by `prefix`.
pub fn append_param_inputs(
    tape: &mut Tape,
    arch: &Architecture,
    prefix: &str,
) -> Result<BTreeMap<String, NodeId>> {
    let mut nodes = BTreeMap::new();
    for spec in arch.param_specs() {
        let node = tape.input(&format!("{prefix}{}", spec.name), &spec.shape)?;
        nodes.insert(spec.name.clone(), node);
    }
    Ok(nodes)
}

/// Create dropout-mask inputs (`mask0`, `mask1`, ...) for the architecture.
pub fn append_mask_inputs(
    tape: &mut Tape,
    arch: &Architecture,
    input: &InputShape,
    t_steps: usize,
) -> Result<(Vec<NodeId>, Vec<String>)> {
    let mut nodes = Vec::new();
    let mut names = Vec::new();
    for i in 0..arch.mask_count(t_steps) {
        let name = format!("mask{i}");
        let shape = mask_shape(arch, input, i);
        nodes.push(tape.input(&name, &shape)?);
        names.push(name);
    }
    Ok((nodes, names))
}

/// Shape of the `i`-th dropout mask.
pub fn mask_shape(arch: &Architecture, input: &InputShape, i: usize) -> Vec<usize> {
    let batch = input.batch();
    match arch {
        Architecture::Mlp(cfg) => vec![batch, cfg.layers[i + 1]],
        Architecture::Cnn(cfg) => cfg.mask_shape(batch, i),
        Architecture::Srnn(cfg) => vec![batch, cfg.hidden],
    }
}

/// Handles into a network appended on a tape.
#[derive(Debug, Clone)]
pub struct NetworkHandles {
    pub logits: NodeId,
    pub probs: NodeId,
    /// Named intermediates (layer pre-activations, per-step membrane state).
    pub tags: BTreeMap<String, NodeId>,
}

/// Append the architecture's network body (logits + softmax) to a tape,
/// consuming previously created data/parameter/mask nodes.
pub fn append_network(
    tape: &mut Tape,
    arch: &Architecture,
    data: &DataInputs,
    params: &BTreeMap<String, NodeId>,
    masks: Option<&[NodeId]>,
    batch: usize,
) -> Result<NetworkHandles> {
    let mut dom = TapeDomain::new(tape);
    let logits = match arch {
        Architecture::Mlp(cfg) => {
            dynamics::mlp_logits(cfg, &mut dom, &data.step_nodes[0], params, masks)?
        }
        Architecture::Cnn(cfg) => {
            dynamics::cnn_logits(cfg, &mut dom, &data.step_nodes[0], params, masks, batch)?
        }
        Architecture::Srnn(cfg) => {
            dynamics::srnn_logits(cfg, &mut dom, &data.step_nodes, params, masks, batch)?
        }
    };
    let tags = dom.into_tags();
    let probs = tape.softmax(logits)?;
    Ok(NetworkHandles {
        logits,
        probs,
        tags,
    })
}

/// A complete single-network forward graph, ready to bind and evaluate.
#[derive(Debug)]
pub struct ForwardGraph {
    pub tape: Tape,
    pub handles: NetworkHandles,
    pub input_names: Vec<String>,
    pub mask_names: Vec<String>,
}

/// Build a standalone forward graph (optionally with dropout masks).
pub fn build_forward(
    arch: &Architecture,
    input: &InputShape,
    dropout: bool,
) -> Result<ForwardGraph> {
    let mut tape = Tape::new();
    let params = append_param_inputs(&mut tape, arch, "")?;
    let data = append_data_inputs(&mut tape, arch, input)?;
    let (mask_nodes, mask_names) = if dropout {
        append_mask_inputs(&mut tape, arch, input, data.step_nodes.len())?
    } else {
        (Vec::new(), Vec::new())
    };
    let masks = if mask_nodes.is_empty() {
        None
    } else {
        Some(mask_nodes.as_slice())
    };
    let handles = append_network(&mut tape, arch, &data, &params, masks, input.batch())?;
    tape.mark_output("logits", handles.logits);
    tape.mark_output("probs", handles.probs);
    Ok(ForwardGraph {
        tape,
        handles,
        input_names: data.names,
        mask_names,
    })
}

/// Materialise the named input tensors a graph expects from a batch.
pub fn bind_input_steps<T: Real>(
    input: &ModelInput<T>,
    input_names: &[String],
) -> Vec<(String, Tensor<T>)> {
    match input {
        ModelInput::Static(x) => vec![("x".to_string(), x.clone())],
        ModelInput::Sequence(_) => input_names
            .iter()
            .enumerate()
            .map(|(t, name)| (name.clone(), input.step_slice(t)))
            .collect(),
    }
}

/// Plain inference: evaluate the network and return probability rows.
pub fn forward_probs<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    input: &ModelInput<T>,
) -> Result<Tensor<T>> {
    let (eval, graph) = forward_eval(arch, params, input)?;
    Ok(eval.value(graph.handles.probs).clone())
}

/// Forward pass that also returns the full evaluation and graph, so callers
/// can read tagged intermediates (membrane trajectories, layer activations).
pub fn forward_eval<T: Real>(
    arch: &Architecture,
    params: &ParameterSet<T>,
    input: &ModelInput<T>,
) -> Result<(Evaluation<T>, ForwardGraph)> {
    let graph = build_forward(arch, &InputShape::of(input), false)?;
    let steps = bind_input_steps(input, &graph.input_names);
    let mut bindings: Bindings<'_, T> = Bindings::new();
    for (name, tensor) in &steps {
        bindings.insert(name, tensor);
    }
    for (name, p) in params.iter() {
        bindings.insert(name, &p.value);
    }
    let eval = exec::evaluate(&graph.tape, &bindings)?;
    Ok((eval, graph))
}

/// Predicted class per row: argmax with first-index tie-breaking.
pub fn argmax_rows<T: Real>(probs: &Tensor<T>) -> Vec<usize> {
    let (n, c) = (probs.shape()[0], probs.shape()[1]);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let row = &probs.data()[i * c..(i + 1) * c];
        let mut best = 0;
        for (j, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = j;
            }
        }
        out.push(best);
    }
    out
}
