//! Alternating optimization of the four sub-problems, prediction from the
//! mean latent, and accuracy evaluation.
//!
//! Each iteration draws one source and one target batch, then runs the
//! sub-steps in `config.order` (default D, F, Q, h). Every sub-step draws
//! fresh encoder noise and prior samples and updates exactly one parameter
//! group with that group's own ADAM state.

mod config;
mod history;

use std::time::Instant;

pub use config::{Discriminator, StepKind, TrainConfig};
pub use history::{column_index, column_name, EpochRecord, RunHistory, StepRecord, COLUMNS};

use crate::datasets::{BatchIterator, DomainDataset, Unlabeled};
use crate::error::{Error, Result};
use crate::grad::{adam_update, sample_standard_normal, AdamState, Matrix, Rng, Stream};
use crate::networks::{Group, Model};
use crate::objectives::{evaluate, one_hot, Batch, Evaluation, SourceBatch, TargetBatch, Term};

/// Model plus per-group optimizer state and the noise streams.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model,
    config: TrainConfig,
    optimizers: Vec<AdamState>,
    noise: Rng,
    prior: Rng,
}

fn slot(group: Group) -> usize {
    Group::ALL.iter().position(|&g| g == group).expect("group listed in ALL")
}

impl TrainState {
    pub fn new(config: &TrainConfig, input_dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        Ok(TrainState {
            model: Model::init(&config.arch, input_dim, classes, config.seed)?,
            config: config.clone(),
            optimizers: Group::ALL.iter().map(|_| AdamState::new(config.adam)).collect(),
            noise: Stream::Noise.rng(config.seed),
            prior: Stream::Prior.rng(config.seed),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn optimizer(&self, group: Group) -> &AdamState {
        &self.optimizers[slot(group)]
    }

    /// Attaches fresh encoder noise (two draws for target rows) and prior
    /// samples to a batch pair.
    pub fn draw(&mut self, source_x: Matrix, source_labels: &[usize], target_x: Matrix) -> Batch {
        let p = self.model.latent_dim();
        let (ns, nt) = (source_x.nrows(), target_x.nrows());
        let labels = one_hot(source_labels, self.model.classes());
        Batch {
            source: SourceBatch {
                eps: sample_standard_normal(&mut self.noise, ns, p),
                x: source_x,
                labels,
            },
            target: TargetBatch {
                eps: sample_standard_normal(&mut self.noise, nt, p),
                eps_alt: Some(sample_standard_normal(&mut self.noise, nt, p)),
                x: target_x,
            },
            prior: sample_standard_normal(&mut self.prior, ns, p),
        }
    }
}

/// The group a sub-step trains and its weighted objective, or `None` when
/// the configuration disables the sub-step.
pub fn step_objective(config: &TrainConfig, step: StepKind) -> Option<(Group, Vec<(Term, f64)>)> {
    match step {
        StepKind::Disc => match config.discriminator {
            Discriminator::Task => Some((
                Group::TaskDisc,
                vec![(Term::DiscSource, 1.0), (Term::DiscTarget, 1.0)],
            )),
            Discriminator::Binary => Some((Group::DomainDisc, vec![(Term::DomainDisc, 1.0)])),
            Discriminator::None => None,
        },
        StepKind::Prior => config
            .source_reg
            .then(|| (Group::PriorDisc, vec![(Term::AdvPrior, 1.0)])),
        StepKind::Encoder => {
            let mut terms = vec![(Term::Class, 1.0)];
            match config.discriminator {
                Discriminator::Task => terms.extend([(Term::DiscSource, 1.0), (Term::Teach, 1.0)]),
                Discriminator::Binary => terms.push((Term::DomainEncoder, 1.0)),
                Discriminator::None => {}
            }
            if config.source_reg {
                terms.push((Term::AdvEncoder, config.lambda_q));
            }
            Some((Group::Encoder, terms))
        }
        StepKind::Classifier => {
            let mut terms = vec![(Term::Class, config.lambda_h)];
            if config.target_reg {
                terms.extend([
                    (Term::Entropic, config.lambda_h_prime),
                    (Term::Smooth, config.lambda_h_prime),
                ]);
            }
            Some((Group::Classifier, terms))
        }
    }
}

/// Runs one sub-step: evaluates its objective on `batch`, then applies one
/// ADAM update to the trained group. Returns the pre-update evaluation, or
/// `None` if the sub-step is disabled.
pub fn run_step(state: &mut TrainState, step: StepKind, batch: &Batch) -> Result<Option<Evaluation>> {
    let Some((group, objective)) = step_objective(&state.config, step) else {
        return Ok(None);
    };
    let eval = evaluate(&state.model, batch.into(), &objective, &[group])?;
    if !eval.total.is_finite() {
        return Err(Error::NonFinite { node: 0, op: "objective" });
    }
    let opt = &mut state.optimizers[slot(group)];
    adam_update(state.model.net_mut(group).params_mut(), &eval.grads, opt)?;
    Ok(Some(eval))
}

/// Task discriminator update (binary domain discriminator under
/// `Discriminator::Binary`).
pub fn step_task_discriminator(state: &mut TrainState, batch: &Batch) -> Result<Option<Evaluation>> {
    run_step(state, StepKind::Disc, batch)
}

/// Prior discriminator update; skipped when the source regularizer is off.
pub fn step_binary_discriminator(state: &mut TrainState, batch: &Batch) -> Result<Option<Evaluation>> {
    run_step(state, StepKind::Prior, batch)
}

pub fn step_encoder(state: &mut TrainState, batch: &Batch) -> Result<Option<Evaluation>> {
    run_step(state, StepKind::Encoder, batch)
}

pub fn step_classifier(state: &mut TrainState, batch: &Batch) -> Result<Option<Evaluation>> {
    run_step(state, StepKind::Classifier, batch)
}

fn diverged(step: usize, kind: StepKind, e: Error) -> Error {
    match e {
        Error::NonFinite { .. } => Error::Diverged {
            step,
            loss: format!("{}-step", kind.code()),
        },
        other => other,
    }
}

/// Trains from scratch on labeled `source` and unlabeled `target`.
///
/// `target_eval`, when given, is only scored at the end of each epoch; its
/// labels never reach an objective.
pub fn train(
    config: &TrainConfig,
    source: &DomainDataset,
    target: Unlabeled<'_>,
    target_eval: Option<&DomainDataset>,
) -> Result<(Model, RunHistory)> {
    config.validate()?;
    let labels = source
        .labels()
        .ok_or_else(|| Error::InvalidData("source domain has no usable labels".into()))?;
    if source.is_empty() || target.is_empty() {
        return Err(Error::InvalidData("source and target must be nonempty".into()));
    }
    if target.inputs().ncols() != source.dim() {
        return Err(Error::InvalidData(format!(
            "source has {} features, target {}",
            source.dim(),
            target.inputs().ncols()
        )));
    }
    if source.classes() < 2 {
        return Err(Error::InvalidData("need at least two classes".into()));
    }

    let started = Instant::now();
    let mut state = TrainState::new(config, source.dim(), source.classes())?;
    let mut source_batches = BatchIterator::new(source.len(), config.batch_size, Stream::Batches.rng(config.seed))?;
    let mut target_batches =
        BatchIterator::new(target.len(), config.batch_size, Stream::TargetBatches.rng(config.seed))?;
    let mut history = RunHistory::new(config.clone());
    let axis = ndarray::Axis(0);

    for epoch in 0..config.epochs {
        for src_idx in source_batches.epoch() {
            let step = history.steps.len();
            let tgt_idx = target_batches.next_batch();
            let xs = source.inputs().select(axis, &src_idx);
            let ys: Vec<usize> = src_idx.iter().map(|&i| labels[i]).collect();
            let xt = target.inputs().select(axis, &tgt_idx);

            let mut record = StepRecord {
                step,
                epoch,
                losses: [None; COLUMNS.len()],
            };
            for kind in config.order {
                let batch = state.draw(xs.clone(), &ys, xt.clone());
                let eval = run_step(&mut state, kind, &batch).map_err(|e| diverged(step, kind, e))?;
                for (term, v) in eval.iter().flat_map(|e| e.terms.iter()) {
                    if let Some(i) = column_index(kind, *term) {
                        record.losses[i] = Some(*v);
                    }
                }
            }
            history.steps.push(record);
        }

        history.epochs.push(EpochRecord {
            epoch,
            step: history.steps.len(),
            source_acc: evaluate_accuracy(&state.model, source.inputs(), labels)?,
            target_acc: target_eval.map(|t| dataset_accuracy(&state.model, t)).transpose()?,
        });
    }
    history.wall_clock = started.elapsed();
    Ok((state.model, history))
}

/// `argmax_k h_k(mu(x))` per row, lowest index on ties.
pub fn predict(model: &Model, x: &Matrix) -> Result<Vec<usize>> {
    let probs = model.classify(&model.latent_mean(x)?)?;
    Ok(probs
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, &p)| if p > best.1 { (k, p) } else { best })
                .0
        })
        .collect())
}

/// Fraction of rows whose prediction equals the label.
pub fn evaluate_accuracy(model: &Model, x: &Matrix, labels: &[usize]) -> Result<f64> {
    if x.nrows() == 0 {
        return Err(Error::InvalidData("cannot score an empty set".into()));
    }
    if labels.len() != x.nrows() {
        return Err(Error::InvalidData(format!("{} labels for {} rows", labels.len(), x.nrows())));
    }
    let hits = predict(model, x)?
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Accuracy against a dataset's evaluation labels (held out or not).
pub fn dataset_accuracy(model: &Model, data: &DomainDataset) -> Result<f64> {
    let labels = data
        .eval_labels()
        .ok_or_else(|| Error::InvalidData("dataset has no labels to score against".into()))?;
    evaluate_accuracy(model, data.inputs(), labels)
}
