//! The four parameterized functions: a stochastic Gaussian encoder, a
//! K-way classifier, a (K+1)-way task-specific discriminator and a binary
//! prior-matching discriminator, plus the binary domain discriminator used
//! by the adversarial baseline. All are dense MLPs built on [`crate::grad`].

mod checkpoint;

use std::fmt;

use rand::Rng as _;

pub use checkpoint::{load_model, read_model, save_model, write_model, CHECKPOINT_VERSION};

use crate::error::{Error, Result};
use crate::grad::{forward, Bindings, Matrix, NodeId, ParamSet, Stream, Tape};

/// Default leaky-ReLU slope for hidden layers.
pub const DEFAULT_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Tanh,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::LeakyRelu(slope) => write!(f, "leaky_relu:{slope:e}"),
            Activation::Tanh => f.write_str("tanh"),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            None if s == "tanh" => Ok(Activation::Tanh),
            Some(("leaky_relu", slope)) => slope
                .parse()
                .map(Activation::LeakyRelu)
                .map_err(|_| Error::InvalidSpec(format!("bad leaky-ReLU slope `{slope}`"))),
            _ => Err(Error::InvalidSpec(format!("unknown activation `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softmax,
    Sigmoid,
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Head::Linear => "linear",
            Head::Softmax => "softmax",
            Head::Sigmoid => "sigmoid",
        })
    }
}

impl std::str::FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Head::Linear),
            "softmax" => Ok(Head::Softmax),
            "sigmoid" => Ok(Head::Sigmoid),
            _ => Err(Error::InvalidSpec(format!("unknown head `{s}`"))),
        }
    }
}

/// Layer widths `[input, hidden.., output]` plus activation and output head.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, head: Head) -> Self {
        MlpSpec {
            widths,
            activation: Activation::LeakyRelu(DEFAULT_SLOPE),
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::InvalidSpec(
                "need at least an input and an output width".into(),
            ));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "zero width in {:?}",
                self.widths
            )));
        }
        if let Activation::LeakyRelu(slope) = self.activation {
            if !slope.is_finite() {
                return Err(Error::InvalidSpec("non-finite slope".into()));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated")
    }
}

/// A named MLP. Parameter names are `{name}.{layer}.w` (in×out) and
/// `{name}.{layer}.b` (1×out).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    name: String,
    spec: MlpSpec,
    params: ParamSet,
}

fn weight_name(net: &str, layer: usize) -> String {
    format!("{net}.{layer}.w")
}

fn bias_name(net: &str, layer: usize) -> String {
    format!("{net}.{layer}.b")
}

impl Mlp {
    /// Weights uniform on `±sqrt(6 / fan_in)`, biases zero.
    pub fn init(name: &str, spec: MlpSpec, seed: u64, stream: Stream) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream.rng(seed);
        let mut params = ParamSet::new();
        for (layer, pair) in spec.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let bound = (6.0 / fan_in as f64).sqrt();
            let w = Matrix::from_shape_simple_fn((fan_in, fan_out), || {
                rng.random_range(-bound..=bound)
            });
            params.insert(weight_name(name, layer), w);
            params.insert(bias_name(name, layer), Matrix::zeros((1, fan_out)));
        }
        Ok(Mlp {
            name: name.to_owned(),
            spec,
            params,
        })
    }

    /// Reassembles a network from stored parameters, checking every shape.
    pub fn from_params(name: &str, spec: MlpSpec, params: ParamSet) -> Result<Self> {
        spec.validate()?;
        if params.len() != 2 * spec.layers() {
            return Err(Error::InvalidSpec(format!(
                "{name}: expected {} parameter matrices, found {}",
                2 * spec.layers(),
                params.len()
            )));
        }
        for (layer, pair) in spec.widths.windows(2).enumerate() {
            for (pname, shape) in [
                (weight_name(name, layer), (pair[0], pair[1])),
                (bias_name(name, layer), (1, pair[1])),
            ] {
                match params.get(&pname) {
                    Some(m) if m.dim() == shape => {}
                    Some(m) => {
                        return Err(Error::InvalidSpec(format!(
                            "{pname}: expected {}x{}, found {}x{}",
                            shape.0,
                            shape.1,
                            m.nrows(),
                            m.ncols()
                        )))
                    }
                    None => return Err(Error::InvalidSpec(format!("missing {pname}"))),
                }
            }
        }
        Ok(Mlp {
            name: name.to_owned(),
            spec,
            params,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn weight(&self, layer: usize) -> &Matrix {
        self.params
            .get(&weight_name(&self.name, layer))
            .expect("layer exists")
    }

    pub fn bias(&self, layer: usize) -> &Matrix {
        self.params
            .get(&bias_name(&self.name, layer))
            .expect("layer exists")
    }

    pub fn weight_mut(&mut self, layer: usize) -> &mut Matrix {
        self.params
            .get_mut(&weight_name(&self.name, layer))
            .expect("layer exists")
    }

    pub fn bias_mut(&mut self, layer: usize) -> &mut Matrix {
        self.params
            .get_mut(&bias_name(&self.name, layer))
            .expect("layer exists")
    }

    pub fn bind<'a>(&'a self, bindings: &mut Bindings<'a>) {
        self.params.bind_into(bindings);
    }

    /// Appends the network's pre-head output to `tape`. With `frozen`, every
    /// parameter passes through a stop-gradient so the result is constant
    /// with respect to this network while still differentiable in `x`.
    pub fn build_logits(&self, tape: &mut Tape, x: NodeId, frozen: bool) -> NodeId {
        let mut h = x;
        for layer in 0..self.spec.layers() {
            let mut w = tape.param(&weight_name(&self.name, layer));
            let mut b = tape.param(&bias_name(&self.name, layer));
            if frozen {
                w = tape.stop_gradient(w);
                b = tape.stop_gradient(b);
            }
            h = tape.matmul(h, w);
            h = tape.add_bias(h, b);
            if layer + 1 < self.spec.layers() {
                h = match self.spec.activation {
                    Activation::LeakyRelu(slope) => tape.leaky_relu(h, slope),
                    Activation::Tanh => tape.tanh(h),
                };
            }
        }
        h
    }

    /// Appends the full network including its output head.
    pub fn build(&self, tape: &mut Tape, x: NodeId, frozen: bool) -> NodeId {
        let logits = self.build_logits(tape, x, frozen);
        match self.spec.head {
            Head::Linear => logits,
            Head::Softmax => tape.softmax(logits),
            Head::Sigmoid => tape.sigmoid(logits),
        }
    }

    /// Evaluates the network on a batch.
    pub fn evaluate(&self, x: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let xi = tape.input("x");
        let out = self.build(&mut tape, xi, false);
        let mut bindings = Bindings::new();
        bindings.bind("x", x);
        self.bind(&mut bindings);
        let values = forward(&tape, &bindings)?;
        Ok(values.get(out).clone())
    }
}

/// Parameter groups, each updated by its own optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Encoder,
    Classifier,
    TaskDisc,
    PriorDisc,
    DomainDisc,
}

impl Group {
    pub const ALL: [Group; 5] = [
        Group::Encoder,
        Group::Classifier,
        Group::TaskDisc,
        Group::PriorDisc,
        Group::DomainDisc,
    ];

    pub fn net_name(self) -> &'static str {
        match self {
            Group::Encoder => "encoder",
            Group::Classifier => "classifier",
            Group::TaskDisc => "task_disc",
            Group::PriorDisc => "prior_disc",
            Group::DomainDisc => "domain_disc",
        }
    }

    /// True when `param` belongs to this group.
    pub fn owns(self, param: &str) -> bool {
        param
            .strip_prefix(self.net_name())
            .is_some_and(|rest| rest.starts_with('.'))
    }

    fn stream(self) -> Stream {
        match self {
            Group::Encoder => Stream::EncoderInit,
            Group::Classifier => Stream::ClassifierInit,
            Group::TaskDisc => Stream::TaskDiscInit,
            Group::PriorDisc => Stream::PriorDiscInit,
            Group::DomainDisc => Stream::DomainDiscInit,
        }
    }
}

/// Hidden-layer widths of each network.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub classifier_hidden: Vec<usize>,
    pub task_disc_hidden: Vec<usize>,
    pub prior_disc_hidden: Vec<usize>,
    pub domain_disc_hidden: Vec<usize>,
    pub slope: f64,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture {
            latent_dim: 16,
            encoder_hidden: vec![128, 128],
            classifier_hidden: vec![64],
            task_disc_hidden: vec![128, 64],
            prior_disc_hidden: vec![64],
            domain_disc_hidden: vec![128, 64],
            slope: DEFAULT_SLOPE,
        }
    }
}

impl Architecture {
    fn spec(&self, input: usize, hidden: &[usize], output: usize, head: Head) -> MlpSpec {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input);
        widths.extend_from_slice(hidden);
        widths.push(output);
        MlpSpec {
            widths,
            activation: Activation::LeakyRelu(self.slope),
            head,
        }
    }

    pub fn group_spec(&self, group: Group, input_dim: usize, classes: usize) -> MlpSpec {
        let p = self.latent_dim;
        match group {
            Group::Encoder => self.spec(input_dim, &self.encoder_hidden, 2 * p, Head::Linear),
            Group::Classifier => self.spec(p, &self.classifier_hidden, classes, Head::Softmax),
            Group::TaskDisc => self.spec(p, &self.task_disc_hidden, classes + 1, Head::Softmax),
            Group::PriorDisc => self.spec(p, &self.prior_disc_hidden, 1, Head::Sigmoid),
            Group::DomainDisc => self.spec(p, &self.domain_disc_hidden, 1, Head::Sigmoid),
        }
    }
}

/// Diagonal-Gaussian latent codes for a batch, one row per datum.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentCode {
    pub mu: Matrix,
    pub sigma: Matrix,
    pub z: Matrix,
    pub eps: Matrix,
}

/// Tape nodes of an encoded batch.
#[derive(Debug, Clone, Copy)]
pub struct LatentNodes {
    pub mu: NodeId,
    pub log_var: NodeId,
    pub sigma: NodeId,
    pub z: NodeId,
}

/// Complete model: encoder, classifier and the three discriminators.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    input_dim: usize,
    classes: usize,
    latent_dim: usize,
    nets: [Mlp; 5],
}

impl Model {
    pub fn init(arch: &Architecture, input_dim: usize, classes: usize, seed: u64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::InvalidSpec(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if arch.latent_dim == 0 {
            return Err(Error::InvalidSpec("latent dimension must be >= 1".into()));
        }
        let mut nets = Vec::with_capacity(5);
        for group in Group::ALL {
            let spec = arch.group_spec(group, input_dim, classes);
            nets.push(Mlp::init(group.net_name(), spec, seed, group.stream())?);
        }
        Ok(Model {
            input_dim,
            classes,
            latent_dim: arch.latent_dim,
            nets: nets.try_into().expect("five groups"),
        })
    }

    pub(crate) fn from_nets(nets: [Mlp; 5]) -> Result<Self> {
        for (net, group) in nets.iter().zip(Group::ALL) {
            if net.name() != group.net_name() {
                return Err(Error::InvalidSpec(format!(
                    "expected network `{}`, found `{}`",
                    group.net_name(),
                    net.name()
                )));
            }
        }
        let enc = nets[0].spec();
        if !enc.output_width().is_multiple_of(2) {
            return Err(Error::InvalidSpec("encoder output width must be even".into()));
        }
        let latent_dim = enc.output_width() / 2;
        let classes = nets[1].spec().output_width();
        let expect = [
            (Group::Classifier, latent_dim, classes, Head::Softmax),
            (Group::TaskDisc, latent_dim, classes + 1, Head::Softmax),
            (Group::PriorDisc, latent_dim, 1, Head::Sigmoid),
            (Group::DomainDisc, latent_dim, 1, Head::Sigmoid),
        ];
        for (group, input, output, head) in expect {
            let spec = nets[group as usize].spec();
            if spec.input_width() != input || spec.output_width() != output || spec.head != head {
                return Err(Error::InvalidSpec(format!(
                    "{}: expected {input}->{output} with {head} head",
                    group.net_name()
                )));
            }
        }
        Ok(Model {
            input_dim: enc.input_width(),
            classes,
            latent_dim,
            nets,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn net(&self, group: Group) -> &Mlp {
        &self.nets[group as usize]
    }

    pub fn net_mut(&mut self, group: Group) -> &mut Mlp {
        &mut self.nets[group as usize]
    }

    pub fn nets(&self) -> &[Mlp; 5] {
        &self.nets
    }

    /// Overwrites parameters by name; every name must exist with the same shape.
    pub fn set_params(&mut self, params: &ParamSet) -> Result<()> {
        for (name, value) in params.iter() {
            let slot = self
                .nets
                .iter_mut()
                .find_map(|n| n.params_mut().get_mut(name))
                .ok_or_else(|| Error::InvalidSpec(format!("unknown parameter `{name}`")))?;
            if slot.dim() != value.dim() {
                return Err(Error::InvalidSpec(format!("shape mismatch for `{name}`")));
            }
            slot.assign(value);
        }
        Ok(())
    }

    /// Parameters of the given groups merged into one set.
    pub fn params_of(&self, groups: &[Group]) -> ParamSet {
        let mut out = ParamSet::new();
        for &g in groups {
            out.extend(self.net(g).params().clone());
        }
        out
    }

    pub fn bind<'a>(&'a self, bindings: &mut Bindings<'a>) {
        for net in &self.nets {
            net.bind(bindings);
        }
    }

    /// Appends the encoder: `z = mu + exp(0.5 · log_var) ⊙ eps`.
    pub fn build_latent(&self, tape: &mut Tape, x: NodeId, eps: NodeId, frozen: bool) -> LatentNodes {
        let p = self.latent_dim;
        let out = self.net(Group::Encoder).build(tape, x, frozen);
        let mu = tape.slice_cols(out, 0, p);
        let log_var = tape.slice_cols(out, p, 2 * p);
        let half = tape.scale(log_var, 0.5);
        let sigma = tape.exp(half);
        let noise = tape.mul(sigma, eps);
        let z = tape.add(mu, noise);
        LatentNodes {
            mu,
            log_var,
            sigma,
            z,
        }
    }

    /// Encodes a batch with the given standard-normal noise.
    pub fn encode(&self, x: &Matrix, eps: &Matrix) -> Result<LatentCode> {
        if x.ncols() != self.input_dim {
            return Err(Error::ShapeMismatch {
                node: 0,
                op: "input",
                expected: format!("_x{}", self.input_dim),
                actual: format!("{}x{}", x.nrows(), x.ncols()),
            });
        }
        if eps.dim() != (x.nrows(), self.latent_dim) {
            return Err(Error::ShapeMismatch {
                node: 1,
                op: "input",
                expected: format!("{}x{}", x.nrows(), self.latent_dim),
                actual: format!("{}x{}", eps.nrows(), eps.ncols()),
            });
        }
        let mut tape = Tape::new();
        let xi = tape.input("x");
        let ei = tape.input("eps");
        let nodes = self.build_latent(&mut tape, xi, ei, false);
        let mut b = Bindings::new();
        b.bind("x", x).bind("eps", eps);
        self.net(Group::Encoder).bind(&mut b);
        let values = forward(&tape, &b)?;
        Ok(LatentCode {
            mu: values.get(nodes.mu).clone(),
            sigma: values.get(nodes.sigma).clone(),
            z: values.get(nodes.z).clone(),
            eps: eps.clone(),
        })
    }

    /// Posterior means `f_mu(x)`.
    pub fn latent_mean(&self, x: &Matrix) -> Result<Matrix> {
        let zeros = Matrix::zeros((x.nrows(), self.latent_dim));
        Ok(self.encode(x, &zeros)?.mu)
    }

    /// Class probabilities `h(z)`, one simplex row per latent.
    pub fn classify(&self, z: &Matrix) -> Result<Matrix> {
        self.check_latent(z)?;
        self.net(Group::Classifier).evaluate(z)
    }

    /// (K+1)-way probabilities; the last column is the target class.
    pub fn discriminate_task(&self, z: &Matrix) -> Result<Matrix> {
        self.check_latent(z)?;
        self.net(Group::TaskDisc).evaluate(z)
    }

    /// Prior-vs-source probability per row, in `[1e-7, 1 - 1e-7]`.
    pub fn discriminate_binary(&self, z: &Matrix) -> Result<Matrix> {
        self.check_latent(z)?;
        self.net(Group::PriorDisc).evaluate(z)
    }

    /// Source-vs-target probability of the baseline domain discriminator.
    pub fn discriminate_domain(&self, z: &Matrix) -> Result<Matrix> {
        self.check_latent(z)?;
        self.net(Group::DomainDisc).evaluate(z)
    }

    fn check_latent(&self, z: &Matrix) -> Result<()> {
        if z.ncols() == self.latent_dim {
            Ok(())
        } else {
            Err(Error::ShapeMismatch {
                node: 0,
                op: "input",
                expected: format!("_x{}", self.latent_dim),
                actual: format!("{}x{}", z.nrows(), z.ncols()),
            })
        }
    }
}

#[cfg(test)]
mod tests;
