use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grad::AdamConfig;
use crate::networks::Architecture;

/// Alignment mechanism between source and target latents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Discriminator {
    /// (K+1)-way task discriminator with classifier pseudo-labels.
    Task,
    /// Binary source/target discriminator, encoder trained on inverted labels.
    Binary,
    /// No alignment term at all.
    None,
}

impl fmt::Display for Discriminator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Discriminator::Task => "task",
            Discriminator::Binary => "binary",
            Discriminator::None => "none",
        })
    }
}

impl FromStr for Discriminator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "task" => Ok(Discriminator::Task),
            "binary" => Ok(Discriminator::Binary),
            "none" => Ok(Discriminator::None),
            other => Err(Error::Config(format!(
                "discriminator must be task, binary or none, got `{other}`"
            ))),
        }
    }
}

/// The four alternating sub-steps of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StepKind {
    /// Task (or binary domain) discriminator.
    Disc,
    /// Prior discriminator.
    Prior,
    Encoder,
    Classifier,
}

impl StepKind {
    pub const ALL: [StepKind; 4] = [StepKind::Disc, StepKind::Prior, StepKind::Encoder, StepKind::Classifier];

    pub fn code(self) -> &'static str {
        match self {
            StepKind::Disc => "D",
            StepKind::Prior => "F",
            StepKind::Encoder => "Q",
            StepKind::Classifier => "h",
        }
    }
}

impl FromStr for StepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StepKind::ALL
            .into_iter()
            .find(|k| k.code() == s)
            .ok_or_else(|| Error::Config(format!("unknown step `{s}`; use D, F, Q or h")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lambda_q: f64,
    pub lambda_h: f64,
    pub lambda_h_prime: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub arch: Architecture,
    pub source_reg: bool,
    pub target_reg: bool,
    pub discriminator: Discriminator,
    pub order: [StepKind; 4],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_q: 1.0,
            lambda_h: 1.0,
            lambda_h_prime: 0.1,
            adam: AdamConfig::default(),
            batch_size: 16,
            epochs: 300,
            arch: Architecture::default(),
            source_reg: true,
            target_reg: true,
            discriminator: Discriminator::Task,
            order: StepKind::ALL,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_switch(key: &str, value: &str) -> Result<bool> {
    match value {
        "on" | "true" => Ok(true),
        "off" | "false" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected on or off, got `{value}`"))),
    }
}

fn switch(on: bool) -> String {
    if on { "on" } else { "off" }.to_owned()
}

fn parse_widths(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|w| parse(key, w.trim()))
        .collect()
}

fn widths(w: &[usize]) -> String {
    w.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

impl TrainConfig {
    /// Supervised source-only baseline: no alignment and no regularizers.
    pub fn source_only(mut self) -> Self {
        self.discriminator = Discriminator::None;
        self.source_reg = false;
        self.target_reg = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [
            ("lambda_q", self.lambda_q),
            ("lambda_h", self.lambda_h),
            ("lambda_h_prime", self.lambda_h_prime),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0 && a.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be > 0, got {}", a.learning_rate));
        }
        for (name, b) in [("beta1", a.beta1), ("beta2", a.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if a.epsilon.is_nan() || a.epsilon <= 0.0 {
            return bad(format!("adam_epsilon must be > 0, got {}", a.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.arch.latent_dim == 0 {
            return bad("latent_dim must be >= 1".into());
        }
        let mut seen = self.order.to_vec();
        seen.sort_by_key(|k| k.code());
        seen.dedup();
        if seen.len() != 4 {
            return bad("update_order must name each of D, F, Q, h once".into());
        }
        Ok(())
    }

    /// Every setting as `(key, value)` in a fixed order; [`TrainConfig::set`]
    /// accepts each pair back.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let order: Vec<&str> = self.order.iter().map(|k| k.code()).collect();
        vec![
            ("lambda_q", self.lambda_q.to_string()),
            ("lambda_h", self.lambda_h.to_string()),
            ("lambda_h_prime", self.lambda_h_prime.to_string()),
            ("learning_rate", self.adam.learning_rate.to_string()),
            ("beta1", self.adam.beta1.to_string()),
            ("beta2", self.adam.beta2.to_string()),
            ("adam_epsilon", self.adam.epsilon.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("latent_dim", self.arch.latent_dim.to_string()),
            ("encoder_hidden", widths(&self.arch.encoder_hidden)),
            ("classifier_hidden", widths(&self.arch.classifier_hidden)),
            ("task_disc_hidden", widths(&self.arch.task_disc_hidden)),
            ("prior_disc_hidden", widths(&self.arch.prior_disc_hidden)),
            ("domain_disc_hidden", widths(&self.arch.domain_disc_hidden)),
            ("leaky_slope", self.arch.slope.to_string()),
            ("source_reg", switch(self.source_reg)),
            ("target_reg", switch(self.target_reg)),
            ("discriminator", self.discriminator.to_string()),
            ("update_order", order.join(",")),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one key. Returns `Ok(false)` for keys this type does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "lambda_q" => self.lambda_q = parse(key, v)?,
            "lambda_h" => self.lambda_h = parse(key, v)?,
            "lambda_h_prime" => self.lambda_h_prime = parse(key, v)?,
            "learning_rate" => self.adam.learning_rate = parse(key, v)?,
            "beta1" => self.adam.beta1 = parse(key, v)?,
            "beta2" => self.adam.beta2 = parse(key, v)?,
            "adam_epsilon" => self.adam.epsilon = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "latent_dim" => self.arch.latent_dim = parse(key, v)?,
            "encoder_hidden" => self.arch.encoder_hidden = parse_widths(key, v)?,
            "classifier_hidden" => self.arch.classifier_hidden = parse_widths(key, v)?,
            "task_disc_hidden" => self.arch.task_disc_hidden = parse_widths(key, v)?,
            "prior_disc_hidden" => self.arch.prior_disc_hidden = parse_widths(key, v)?,
            "domain_disc_hidden" => self.arch.domain_disc_hidden = parse_widths(key, v)?,
            "leaky_slope" => self.arch.slope = parse(key, v)?,
            "source_reg" => self.source_reg = parse_switch(key, v)?,
            "target_reg" => self.target_reg = parse_switch(key, v)?,
            "discriminator" => self.discriminator = v.parse()?,
            "update_order" => {
                let steps: Vec<StepKind> = v
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?;
                self.order = steps
                    .try_into()
                    .map_err(|_| Error::Config("update_order needs exactly four steps".into()))?;
            }
            "seed" => self.seed = parse(key, v)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
