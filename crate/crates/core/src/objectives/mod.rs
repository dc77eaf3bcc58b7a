//! Loss terms over a shared differentiable graph.
//!
//! Every expectation is a batch mean. Cross-entropies use log-softmax
//! floored at `ln(1e-7)`; logistic heads are clamped to `[1e-7, 1 - 1e-7]`,
//! so every term is finite and non-negative.
//!
//! Sign conventions:
//! * the prior discriminator outputs 1 for prior draws and 0 for encoded
//!   source features; the encoder minimizes `-mean log F(z_source)`.
//! * the baseline domain discriminator outputs 0 for source and 1 for
//!   target; the encoder side uses inverted labels.

mod gradcheck;

use std::fmt;

use ndarray::s;

pub use gradcheck::{gradient_check, GradCheckReport, GRADCHECK_STEP, GRADCHECK_TOLERANCE};

use crate::error::{Error, Result};
use crate::grad::{backward_filtered, forward, Bindings, Gradients, Matrix, NodeId, Tape};
use crate::networks::{Group, LatentNodes, Model};

/// Labeled source rows with one reparameterization draw each.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceBatch {
    pub x: Matrix,
    /// One-hot labels, `n × K`.
    pub labels: Matrix,
    pub eps: Matrix,
}

/// Unlabeled target rows. `eps_alt` is the second independent draw that the
/// smoothness term needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch {
    pub x: Matrix,
    pub eps: Matrix,
    pub eps_alt: Option<Matrix>,
}

/// Everything one optimization step consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub source: SourceBatch,
    pub target: TargetBatch,
    /// Draws from the N(0, I) prior, `n × p`.
    pub prior: Matrix,
}

/// One-hot encoding of `labels` over `classes` columns.
pub fn one_hot(labels: &[usize], classes: usize) -> Matrix {
    let mut m = Matrix::zeros((labels.len(), classes));
    for (i, &y) in labels.iter().enumerate() {
        m[[i, y]] = 1.0;
    }
    m
}

/// Individual loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    /// Source cross-entropy of the classifier.
    Class,
    /// Task discriminator cross-entropy against `[y, 0]` on source rows.
    DiscSource,
    /// Task discriminator cross-entropy against `[0, 1]` on target rows.
    DiscTarget,
    /// Target rows against `[h(z), 0]`, with `h(z)` held constant.
    Teach,
    /// Prior discriminator: prior draws → 1, source features → 0.
    AdvPrior,
    /// Encoder side of the prior game, discriminator held constant.
    AdvEncoder,
    /// Mean entropy of the classifier on target rows.
    Entropic,
    /// Mean L1 distance between classifier outputs at two target draws.
    Smooth,
    /// Baseline domain discriminator: source → 0, target → 1.
    DomainDisc,
    /// Baseline encoder side with inverted domain labels.
    DomainEncoder,
}

impl Term {
    pub const ALL: [Term; 10] = [
        Term::Class,
        Term::DiscSource,
        Term::DiscTarget,
        Term::Teach,
        Term::AdvPrior,
        Term::AdvEncoder,
        Term::Entropic,
        Term::Smooth,
        Term::DomainDisc,
        Term::DomainEncoder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::Class => "class",
            Term::DiscSource => "disc_source",
            Term::DiscTarget => "disc_target",
            Term::Teach => "teach",
            Term::AdvPrior => "adv_prior",
            Term::AdvEncoder => "adv_encoder",
            Term::Entropic => "entropic",
            Term::Smooth => "smooth",
            Term::DomainDisc => "domain_disc",
            Term::DomainEncoder => "domain_encoder",
        }
    }

    /// Parameter groups this term is meant to train.
    pub fn trains(self) -> &'static [Group] {
        match self {
            Term::Class | Term::Entropic | Term::Smooth => &[Group::Encoder, Group::Classifier],
            Term::DiscSource | Term::DiscTarget | Term::Teach => {
                &[Group::Encoder, Group::TaskDisc]
            }
            Term::AdvPrior => &[Group::Encoder, Group::PriorDisc],
            Term::DomainDisc => &[Group::Encoder, Group::DomainDisc],
            Term::AdvEncoder | Term::DomainEncoder => &[Group::Encoder],
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Borrowed data for one evaluation; terms fail if what they need is absent.
#[derive(Debug, Clone, Copy, Default)]
pub struct Inputs<'a> {
    pub source: Option<&'a SourceBatch>,
    pub target: Option<&'a TargetBatch>,
    pub prior: Option<&'a Matrix>,
}

impl<'a> From<&'a Batch> for Inputs<'a> {
    fn from(b: &'a Batch) -> Self {
        Inputs {
            source: Some(&b.source),
            target: Some(&b.target),
            prior: Some(&b.prior),
        }
    }
}

/// Weighted sum of terms.
pub type Objective = [(Term, f64)];

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub total: f64,
    pub terms: Vec<(Term, f64)>,
    pub grads: Gradients,
}

impl Evaluation {
    pub fn term(&self, term: Term) -> Option<f64> {
        self.terms.iter().find(|(t, _)| *t == term).map(|&(_, v)| v)
    }
}

struct LossGraph<'m, 'a> {
    tape: Tape,
    model: &'m Model,
    data: Inputs<'a>,
    source: Option<LatentNodes>,
    target: Option<LatentNodes>,
    target_alt: Option<LatentNodes>,
    source_aug: Option<Matrix>,
}

fn nonempty(m: &Matrix, what: &'static str) -> Result<()> {
    if m.nrows() == 0 {
        Err(Error::EmptyBatch(what))
    } else {
        Ok(())
    }
}

impl<'m, 'a> LossGraph<'m, 'a> {
    fn new(model: &'m Model, data: Inputs<'a>) -> Self {
        LossGraph {
            tape: Tape::new(),
            model,
            data,
            source: None,
            target: None,
            target_alt: None,
            source_aug: None,
        }
    }

    fn source(&mut self) -> Result<LatentNodes> {
        if let Some(n) = self.source {
            return Ok(n);
        }
        let b = self.data.source.ok_or(Error::EmptyBatch("source"))?;
        nonempty(&b.x, "source")?;
        let x = self.tape.input("source.x");
        let eps = self.tape.input("source.eps");
        let n = self.model.build_latent(&mut self.tape, x, eps, false);
        self.source = Some(n);
        Ok(n)
    }

    fn target(&mut self) -> Result<LatentNodes> {
        if let Some(n) = self.target {
            return Ok(n);
        }
        let b = self.data.target.ok_or(Error::EmptyBatch("target"))?;
        nonempty(&b.x, "target")?;
        let x = self.tape.input("target.x");
        let eps = self.tape.input("target.eps");
        let n = self.model.build_latent(&mut self.tape, x, eps, false);
        self.target = Some(n);
        Ok(n)
    }

    fn target_alt(&mut self) -> Result<LatentNodes> {
        if let Some(n) = self.target_alt {
            return Ok(n);
        }
        self.target()?;
        let b = self.data.target.expect("checked by target()");
        if b.eps_alt.is_none() {
            return Err(Error::MissingSecondDraw);
        }
        let x = self.tape.input("target.x");
        let eps = self.tape.input("target.eps_alt");
        let n = self.model.build_latent(&mut self.tape, x, eps, false);
        self.target_alt = Some(n);
        Ok(n)
    }

    fn prior(&mut self) -> Result<NodeId> {
        let p = self.data.prior.ok_or(Error::EmptyBatch("prior"))?;
        nonempty(p, "prior")?;
        Ok(self.tape.input("prior"))
    }

    fn logits(&mut self, group: Group, z: NodeId, frozen: bool) -> NodeId {
        self.model.net(group).build_logits(&mut self.tape, z, frozen)
    }

    fn prob(&mut self, group: Group, z: NodeId, frozen: bool) -> NodeId {
        self.model.net(group).build(&mut self.tape, z, frozen)
    }

    /// `-mean_i sum_j targets_ij · logp_ij`.
    fn cross_entropy(&mut self, targets: NodeId, log_probs: NodeId) -> NodeId {
        let prod = self.tape.mul(targets, log_probs);
        let rows = self.tape.row_sum(prod);
        let m = self.tape.mean(rows);
        self.tape.scale(m, -1.0)
    }

    /// `-mean log(p)` or `-mean log(1 - p)` for a clamped probability column.
    fn neg_mean_log(&mut self, p: NodeId, complement: bool) -> NodeId {
        let arg = if complement {
            self.tape.affine(p, -1.0, 1.0)
        } else {
            p
        };
        let l = self.tape.log(arg);
        let m = self.tape.mean(l);
        self.tape.scale(m, -1.0)
    }

    fn term(&mut self, term: Term) -> Result<NodeId> {
        let classes = self.model.classes();
        Ok(match term {
            Term::Class => {
                let z = self.source()?.z;
                let logits = self.logits(Group::Classifier, z, false);
                let lp = self.tape.log_softmax(logits);
                let y = self.tape.input("source.y");
                self.cross_entropy(y, lp)
            }
            Term::DiscSource => {
                let z = self.source()?.z;
                let b = self.data.source.expect("checked by source()");
                let mut aug = Matrix::zeros((b.labels.nrows(), classes + 1));
                aug.slice_mut(s![.., ..classes]).assign(&b.labels);
                self.source_aug = Some(aug);
                let logits = self.logits(Group::TaskDisc, z, false);
                let lp = self.tape.log_softmax(logits);
                let y = self.tape.input("source.y_aug");
                self.cross_entropy(y, lp)
            }
            Term::DiscTarget => {
                let z = self.target()?.z;
                let logits = self.logits(Group::TaskDisc, z, false);
                let lp = self.tape.log_softmax(logits);
                let last = self.tape.slice_cols(lp, classes, classes + 1);
                let m = self.tape.mean(last);
                self.tape.scale(m, -1.0)
            }
            Term::Teach => {
                let z = self.target()?.z;
                let h = self.prob(Group::Classifier, z, false);
                let pseudo = self.tape.stop_gradient(h);
                let logits = self.logits(Group::TaskDisc, z, false);
                let lp = self.tape.log_softmax(logits);
                let lp_classes = self.tape.slice_cols(lp, 0, classes);
                self.cross_entropy(pseudo, lp_classes)
            }
            Term::AdvPrior => {
                let zs = self.source()?.z;
                let zp = self.prior()?;
                let fp = self.prob(Group::PriorDisc, zp, false);
                let fs = self.prob(Group::PriorDisc, zs, false);
                let a = self.neg_mean_log(fp, false);
                let b = self.neg_mean_log(fs, true);
                self.tape.add(a, b)
            }
            Term::AdvEncoder => {
                let zs = self.source()?.z;
                let fs = self.prob(Group::PriorDisc, zs, true);
                self.neg_mean_log(fs, false)
            }
            Term::Entropic => {
                let z = self.target()?.z;
                let logits = self.logits(Group::Classifier, z, false);
                let p = self.tape.softmax(logits);
                let lp = self.tape.log_softmax(logits);
                self.cross_entropy(p, lp)
            }
            Term::Smooth => {
                let z1 = self.target()?.z;
                let z2 = self.target_alt()?.z;
                let p1 = self.prob(Group::Classifier, z1, false);
                let p2 = self.prob(Group::Classifier, z2, false);
                let d = self.tape.row_l1_diff(p1, p2);
                self.tape.mean(d)
            }
            Term::DomainDisc | Term::DomainEncoder => {
                let zs = self.source()?.z;
                let zt = self.target()?.z;
                let frozen = term == Term::DomainEncoder;
                let gs = self.prob(Group::DomainDisc, zs, frozen);
                let gt = self.prob(Group::DomainDisc, zt, frozen);
                // discriminator: source → 0, target → 1; encoder inverts
                let a = self.neg_mean_log(gs, !frozen);
                let b = self.neg_mean_log(gt, frozen);
                self.tape.add(a, b)
            }
        })
    }

    fn bindings(&self) -> Bindings<'_> {
        let mut b = Bindings::new();
        self.model.bind(&mut b);
        if let Some(s) = self.data.source {
            b.bind("source.x", &s.x)
                .bind("source.eps", &s.eps)
                .bind("source.y", &s.labels);
        }
        if let Some(aug) = &self.source_aug {
            b.bind("source.y_aug", aug);
        }
        if let Some(t) = self.data.target {
            b.bind("target.x", &t.x).bind("target.eps", &t.eps);
            if let Some(alt) = &t.eps_alt {
                b.bind("target.eps_alt", alt);
            }
        }
        if let Some(p) = self.data.prior {
            b.bind("prior", p);
        }
        b
    }
}

/// Evaluates the weighted objective and, for the groups in `wrt`, its
/// gradient. Terms with weight zero are still reported but contribute
/// nothing to the total or the gradient.
pub fn evaluate(model: &Model, data: Inputs<'_>, objective: &Objective, wrt: &[Group]) -> Result<Evaluation> {
    if objective.is_empty() {
        return Err(Error::Config("objective has no terms".into()));
    }
    let mut g = LossGraph::new(model, data);
    let mut nodes = Vec::with_capacity(objective.len());
    let mut total: Option<NodeId> = None;
    for &(term, weight) in objective {
        let node = g.term(term)?;
        nodes.push((term, node));
        if weight != 0.0 {
            let weighted = g.tape.scale(node, weight);
            total = Some(match total {
                Some(acc) => g.tape.add(acc, weighted),
                None => weighted,
            });
        }
    }
    let total = match total {
        Some(t) => t,
        None => {
            let first = nodes[0].1;
            g.tape.scale(first, 0.0)
        }
    };

    let bindings = g.bindings();
    let values = forward(&g.tape, &bindings)?;
    let terms = nodes
        .iter()
        .map(|&(t, n)| (t, values.scalar(n)))
        .collect();
    let grads = if wrt.is_empty() {
        Gradients::new()
    } else {
        backward_filtered(&g.tape, &values, total, |name| {
            wrt.iter().any(|grp| grp.owns(name))
        })?
    };
    Ok(Evaluation {
        total: values.scalar(total),
        terms,
        grads,
    })
}

fn single(model: &Model, data: Inputs<'_>, terms: &Objective) -> Result<f64> {
    Ok(evaluate(model, data, terms, &[])?.total)
}

/// Source classification cross-entropy.
pub fn loss_class(model: &Model, source: &SourceBatch) -> Result<f64> {
    let data = Inputs {
        source: Some(source),
        ..Inputs::default()
    };
    single(model, data, &[(Term::Class, 1.0)])
}

/// (K+1)-way discriminator loss: source-batch mean plus target-batch mean.
pub fn loss_disc(model: &Model, source: &SourceBatch, target: &TargetBatch) -> Result<f64> {
    let data = Inputs {
        source: Some(source),
        target: Some(target),
        prior: None,
    };
    single(model, data, &[(Term::DiscSource, 1.0), (Term::DiscTarget, 1.0)])
}

/// Pseudo-labeled target loss against the first K discriminator classes.
pub fn loss_teach(model: &Model, target: &TargetBatch) -> Result<f64> {
    let data = Inputs {
        target: Some(target),
        ..Inputs::default()
    };
    single(model, data, &[(Term::Teach, 1.0)])
}

/// Prior discriminator loss.
pub fn loss_adv_f(model: &Model, source: &SourceBatch, prior: &Matrix) -> Result<f64> {
    if source.x.nrows() != prior.nrows() {
        return Err(Error::InvalidData(format!(
            "source batch has {} rows but prior batch has {}",
            source.x.nrows(),
            prior.nrows()
        )));
    }
    let data = Inputs {
        source: Some(source),
        target: None,
        prior: Some(prior),
    };
    single(model, data, &[(Term::AdvPrior, 1.0)])
}

/// Non-saturating encoder loss against the prior discriminator.
pub fn loss_adv_q(model: &Model, source: &SourceBatch) -> Result<f64> {
    let data = Inputs {
        source: Some(source),
        ..Inputs::default()
    };
    single(model, data, &[(Term::AdvEncoder, 1.0)])
}

/// Mean classifier entropy on target rows.
pub fn loss_entropic(model: &Model, target: &TargetBatch) -> Result<f64> {
    let data = Inputs {
        target: Some(target),
        ..Inputs::default()
    };
    single(model, data, &[(Term::Entropic, 1.0)])
}

/// Mean L1 disagreement between two latent draws per target row.
pub fn loss_smooth(model: &Model, target: &TargetBatch) -> Result<f64> {
    let data = Inputs {
        target: Some(target),
        ..Inputs::default()
    };
    single(model, data, &[(Term::Smooth, 1.0)])
}

/// Which side of the baseline domain game to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Discriminator,
    Encoder,
}

/// Binary source/target adversarial baseline.
pub fn loss_binary_domain_baseline(
    model: &Model,
    source: &SourceBatch,
    target: &TargetBatch,
    side: Side,
) -> Result<f64> {
    let data = Inputs {
        source: Some(source),
        target: Some(target),
        prior: None,
    };
    let term = match side {
        Side::Discriminator => Term::DomainDisc,
        Side::Encoder => Term::DomainEncoder,
    };
    single(model, data, &[(term, 1.0)])
}
