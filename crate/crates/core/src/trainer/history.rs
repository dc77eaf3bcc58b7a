use std::io::Write;
use std::time::Duration;

use super::{StepKind, TrainConfig};
use crate::objectives::Term;

/// Every (sub-step, loss term) pair a run can record, in CSV column order.
pub const COLUMNS: [(StepKind, Term); 12] = [
    (StepKind::Disc, Term::DiscSource),
    (StepKind::Disc, Term::DiscTarget),
    (StepKind::Disc, Term::DomainDisc),
    (StepKind::Prior, Term::AdvPrior),
    (StepKind::Encoder, Term::Class),
    (StepKind::Encoder, Term::DiscSource),
    (StepKind::Encoder, Term::Teach),
    (StepKind::Encoder, Term::AdvEncoder),
    (StepKind::Encoder, Term::DomainEncoder),
    (StepKind::Classifier, Term::Class),
    (StepKind::Classifier, Term::Entropic),
    (StepKind::Classifier, Term::Smooth),
];

pub fn column_index(step: StepKind, term: Term) -> Option<usize> {
    COLUMNS.iter().position(|&c| c == (step, term))
}

pub fn column_name(step: StepKind, term: Term) -> String {
    format!("{}.{}", step.code(), term.name())
}

/// Loss values evaluated at the start of one iteration's sub-steps;
/// `None` where the term was not part of any objective.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    pub losses: [Option<f64>; COLUMNS.len()],
}

impl StepRecord {
    pub fn get(&self, step: StepKind, term: Term) -> Option<f64> {
        column_index(step, term).and_then(|i| self.losses[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Iterations completed when the accuracies were measured.
    pub step: usize,
    pub source_acc: f64,
    pub target_acc: Option<f64>,
}

/// Everything a training run recorded.
///
/// Equality ignores `wall_clock`, the one field that is not a function
/// of config, seed and data.
#[derive(Debug, Clone)]
pub struct RunHistory {
    pub config: TrainConfig,
    pub steps: Vec<StepRecord>,
    pub epochs: Vec<EpochRecord>,
    pub wall_clock: Duration,
}

impl PartialEq for RunHistory {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.steps == other.steps && self.epochs == other.epochs
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_epoch_row(out: &mut impl Write, e: &EpochRecord) -> std::io::Result<()> {
    let blanks = ",".repeat(COLUMNS.len());
    writeln!(
        out,
        "epoch,{},{},{blanks}{},{}",
        e.step,
        e.epoch,
        e.source_acc,
        cell(e.target_acc)
    )
}

impl RunHistory {
    pub fn new(config: TrainConfig) -> Self {
        RunHistory {
            config,
            steps: Vec::new(),
            epochs: Vec::new(),
            wall_clock: Duration::ZERO,
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn final_source_acc(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.source_acc)
    }

    pub fn final_target_acc(&self) -> Option<f64> {
        self.epochs.last().and_then(|e| e.target_acc)
    }

    /// The recorded values of one column, one entry per step.
    pub fn column(&self, step: StepKind, term: Term) -> Vec<Option<f64>> {
        self.steps.iter().map(|r| r.get(step, term)).collect()
    }

    /// `key = value` lines of the resolved config.
    pub fn write_config_echo(&self, out: &mut impl Write, prefix: &str) -> std::io::Result<()> {
        for (k, v) in self.config.entries() {
            writeln!(out, "{prefix}{k} = {v}")?;
        }
        Ok(())
    }

    /// One row per step (`kind = step`) and per epoch (`kind = epoch`),
    /// preceded by the config echo as `#` comments.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        self.write_config_echo(out, "# ")?;
        self.write_csv_body(out)
    }

    /// The header and rows of [`RunHistory::write_csv`] without the echo.
    pub fn write_csv_body(&self, out: &mut impl Write) -> std::io::Result<()> {
        let names: Vec<String> = COLUMNS.iter().map(|&(s, t)| column_name(s, t)).collect();
        writeln!(out, "kind,step,epoch,{},source_acc,target_acc", names.join(","))?;
        let mut epochs = self.epochs.iter().peekable();
        for r in &self.steps {
            let losses: Vec<String> = r.losses.iter().map(|&v| cell(v)).collect();
            writeln!(out, "step,{},{},{},,", r.step, r.epoch, losses.join(","))?;
            while let Some(e) = epochs.next_if(|e| e.step <= r.step + 1) {
                write_epoch_row(out, e)?;
            }
        }
        for e in epochs {
            write_epoch_row(out, e)?;
        }
        Ok(())
    }
}
