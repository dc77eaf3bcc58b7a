//! Finite-difference verification of every loss term on random small
//! configurations.

use rand::Rng as _;

use super::{evaluate, one_hot, Batch, SourceBatch, TargetBatch, Term};
use crate::error::Result;
use crate::grad::{
    finite_diff_grad, max_relative_error, sample_standard_normal, ParamSet, Stream,
    LOG_PROB_FLOOR,
};
use crate::networks::{Architecture, Group, Model, DEFAULT_SLOPE};

pub const GRADCHECK_STEP: f64 = 1e-5;
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub term: Term,
    pub configs: usize,
    /// Worst entrywise relative error over all trained parameters.
    pub max_rel_error: f64,
    pub worst_seed: u64,
    /// Largest analytic gradient entry on groups the term must not train.
    pub blocked_max_abs: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRADCHECK_TOLERANCE && self.blocked_max_abs == 0.0
    }
}

/// Groups whose parameters appear in the term's graph but must receive an
/// exactly-zero gradient.
fn blocked_groups(term: Term) -> &'static [Group] {
    match term {
        Term::Teach => &[Group::Classifier],
        Term::AdvEncoder => &[Group::PriorDisc],
        Term::DomainEncoder => &[Group::DomainDisc],
        _ => &[],
    }
}

/// A random small model and batch, fully determined by `seed`.
pub(crate) fn random_setup(seed: u64) -> Result<(Model, Batch)> {
    let mut rng = Stream::Data.rng(seed);
    let d = rng.random_range(2..=4);
    let p = rng.random_range(2..=4);
    let k = rng.random_range(2..=4);
    let n = rng.random_range(2..=5);
    let mut width = || rng.random_range(3..=6);
    let arch = Architecture {
        latent_dim: p,
        encoder_hidden: vec![width(), width()],
        classifier_hidden: vec![width()],
        task_disc_hidden: vec![width()],
        prior_disc_hidden: vec![width()],
        domain_disc_hidden: vec![width()],
        slope: DEFAULT_SLOPE,
    };
    let mut model = Model::init(&arch, d, k, seed)?;
    // Full-scale init can push log-variances high enough that the latents
    // reach |z| ~ 40, where round-off swamps a 1e-5 central difference.
    for g in Group::ALL {
        let net = model.net_mut(g);
        for l in 0..net.spec().layers() {
            net.weight_mut(l).mapv_inplace(|w| 0.5 * w);
        }
    }
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    let batch = Batch {
        source: SourceBatch {
            x: sample_standard_normal(&mut rng, n, d),
            labels: one_hot(&labels, k),
            eps: sample_standard_normal(&mut rng, n, p),
        },
        target: TargetBatch {
            x: sample_standard_normal(&mut rng, n, d),
            eps: sample_standard_normal(&mut rng, n, p),
            eps_alt: Some(sample_standard_normal(&mut rng, n, p)),
        },
        prior: sample_standard_normal(&mut rng, n, p),
    };
    Ok((model, batch))
}

/// Compares backward gradients of `term` with central differences on
/// `configs` random configurations seeded from `base_seed`.
pub fn gradient_check(term: Term, configs: usize, base_seed: u64) -> Result<GradCheckReport> {
    let mut report = GradCheckReport {
        term,
        configs,
        max_rel_error: 0.0,
        worst_seed: base_seed,
        blocked_max_abs: 0.0,
    };
    let objective = [(term, 1.0)];
    for i in 0..configs as u64 {
        let seed = base_seed.wrapping_add(i);
        let (model, batch) = random_setup(seed)?;
        let trained = term.trains();
        let blocked = blocked_groups(term);
        let wrt: Vec<Group> = trained.iter().chain(blocked).copied().collect();
        let analytic = evaluate(&model, (&batch).into(), &objective, &wrt)?.grads;

        for (name, g) in analytic.iter() {
            if blocked.iter().any(|b| b.owns(name)) {
                let m = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                report.blocked_max_abs = report.blocked_max_abs.max(m);
            }
        }

        let params: ParamSet = model.params_of(trained);
        let numeric = if term == Term::Teach {
            // The pseudo-labels are a constant of the loss: hold them at the
            // unperturbed point rather than letting the probe move them.
            let t = &batch.target;
            let pseudo = model.classify(&model.encode(&t.x, &t.eps)?.z)?;
            finite_diff_grad(
                |p| {
                    let mut probe = model.clone();
                    probe.set_params(p)?;
                    let d = probe.discriminate_task(&probe.encode(&t.x, &t.eps)?.z)?;
                    let total: f64 = pseudo
                        .indexed_iter()
                        .map(|((i, j), &q)| q * d[[i, j]].ln().max(LOG_PROB_FLOOR))
                        .sum::<f64>();
                    Ok(-total / pseudo.nrows() as f64)
                },
                &params,
                GRADCHECK_STEP,
            )?
        } else {
            finite_diff_grad(
                |p| {
                    let mut probe = model.clone();
                    probe.set_params(p)?;
                    Ok(evaluate(&probe, (&batch).into(), &objective, &[])?.total)
                },
                &params,
                GRADCHECK_STEP,
            )?
        };
        let err = max_relative_error(&analytic, &numeric);
        if err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst_seed = seed;
        }
    }
    Ok(report)
}
