//! Experiment harness: builds domains from an [`ExperimentConfig`], runs
//! seeds in parallel, and writes histories, summaries and embeddings.
//!
//! Output layout under `out_dir`:
//!
//! ```text
//! history_seed{N}.csv      per-step losses and per-epoch accuracies
//! history_seed{N}.config   resolved config for that single seed
//! embeddings_seed{N}.csv   latent means, when export_embeddings = on
//! model_seed{N}.ckpt       trained parameters, when save_model = on
//! summary.csv              one row per arm
//! ```
//!
//! Suites put each arm in its own subdirectory and write the combined
//! summary at the top. Every file begins with the resolved config.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

pub use config::{parse_config_text, DataConfig, ExperimentConfig, Generator};

use crate::datasets::{
    apply_shift, downscale_2x2, gen_gaussian_mixture, gen_two_moons, load_idx, pad_images, rescale_inputs,
    subsample, Domain, DomainDataset, RescaleMode,
};
use crate::error::{Error, Result};
use crate::networks::{save_model, Model};
use crate::trainer::{predict, train, Discriminator, RunHistory, TrainConfig};

/// Named variants of a base configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Full,
    WithoutSource,
    WithoutTarget,
    WithoutBoth,
    TaskDisc,
    AdvDisc,
    SourceOnly,
}

impl Arm {
    pub const ABLATION: [Arm; 4] = [Arm::Full, Arm::WithoutSource, Arm::WithoutTarget, Arm::WithoutBoth];
    pub const DISCRIMINATORS: [Arm; 2] = [Arm::TaskDisc, Arm::AdvDisc];

    pub fn label(self) -> &'static str {
        match self {
            Arm::Full => "full",
            Arm::WithoutSource => "wo-s",
            Arm::WithoutTarget => "wo-t",
            Arm::WithoutBoth => "wo-st",
            Arm::TaskDisc => "task-d",
            Arm::AdvDisc => "adv-d",
            Arm::SourceOnly => "source-only",
        }
    }

    /// The base config with this arm's switches set. Nothing else changes.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut c = base.clone();
        match self {
            Arm::Full => {}
            Arm::WithoutSource => c.source_reg = false,
            Arm::WithoutTarget => c.target_reg = false,
            Arm::WithoutBoth => {
                c.source_reg = false;
                c.target_reg = false;
            }
            Arm::TaskDisc => c.discriminator = Discriminator::Task,
            Arm::AdvDisc => c.discriminator = Discriminator::Binary,
            Arm::SourceOnly => c = c.source_only(),
        }
        c
    }
}

/// Source and target domains for one seed. Target labels are held out and
/// absent when no target label file was given.
pub fn build_domains(data: &DataConfig, seed: u64) -> Result<(DomainDataset, DomainDataset)> {
    match data.generator {
        Generator::TwoMoons | Generator::GaussianMixture => {
            let raw = if data.generator == Generator::TwoMoons {
                gen_two_moons(data.points, data.noise, seed)?
            } else {
                gen_gaussian_mixture(data.points, &mixture_means(data), data.cov_scale, seed)?
            };
            let target = apply_shift(&raw, &data.shift(), seed)?;
            Ok((
                rescale_inputs(&raw, RescaleMode::PerFeature),
                rescale_inputs(&target, RescaleMode::PerFeature),
            ))
        }
        Generator::Idx => {
            let need = |p: &Option<std::path::PathBuf>, name: &str| {
                p.clone()
                    .ok_or_else(|| Error::Config(format!("generator = idx requires {name}")))
            };
            let source = load_idx(
                &need(&data.source_images, "source_images")?,
                Some(&need(&data.source_labels, "source_labels")?),
                Domain::Source,
            )?;
            let target = load_idx(
                &need(&data.target_images, "target_images")?,
                data.target_labels.as_deref(),
                Domain::Target,
            )?;
            let classes = source.classes().max(target.classes());
            let prepare = |d: DomainDataset| -> Result<DomainDataset> {
                let d = subsample(&d, data.idx_max_images, seed);
                let d = rescale_inputs(&to_desk_resolution(&d)?, RescaleMode::Global);
                let labels = d.eval_labels().map(<[usize]>::to_vec);
                DomainDataset::new(d.inputs().clone(), labels, classes, d.domain(), d.provenance())
            };
            Ok((prepare(source)?, prepare(target)?.hold_out_labels()))
        }
    }
}

fn mixture_means(data: &DataConfig) -> Vec<Vec<f64>> {
    (0..data.classes)
        .map(|k| {
            let a = std::f64::consts::TAU * k as f64 / data.classes as f64;
            vec![data.mixture_radius * a.cos(), data.mixture_radius * a.sin()]
        })
        .collect()
}

/// Brings square digit images to 16×16: 28×28 is padded to 32×32 first,
/// then 32×32 is averaged over 2×2 blocks.
pub fn to_desk_resolution(data: &DomainDataset) -> Result<DomainDataset> {
    let side = (data.dim() as f64).sqrt().round() as usize;
    match (side * side == data.dim(), side) {
        (true, 16) => Ok(data.clone()),
        (true, 28) => downscale_2x2(&pad_images(data, 28, 28, 2, 0.0)?, 32, 32),
        (true, 32) => downscale_2x2(data, 32, 32),
        _ => Err(Error::InvalidData(format!(
            "expected 16x16, 28x28 or 32x32 images, rows have {} pixels",
            data.dim()
        ))),
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub config: ExperimentConfig,
    pub model: Model,
    pub history: RunHistory,
    pub source: DomainDataset,
    pub target: DomainDataset,
}

impl SeedRun {
    pub fn final_target_acc(&self) -> Option<f64> {
        self.history.final_target_acc()
    }

    pub fn final_source_acc(&self) -> Option<f64> {
        self.history.final_source_acc()
    }
}

/// Trains one seed; errors carry the seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedRun> {
    let inner = || -> Result<SeedRun> {
        let cfg = cfg.for_seed(seed);
        let (source, target) = build_domains(&cfg.data, seed)?;
        let eval = target.eval_labels().is_some().then_some(&target);
        let (model, history) = train(&cfg.train, &source, target.unlabeled(), eval)?;
        Ok(SeedRun {
            seed,
            config: cfg,
            model,
            history,
            source,
            target,
        })
    };
    inner().map_err(|e| Error::Seed {
        seed,
        source: Box::new(e),
    })
}

/// All seeds of `cfg`, in seed-list order. Seeds run concurrently.
pub fn run_seeds(cfg: &ExperimentConfig) -> Result<Vec<SeedRun>> {
    cfg.validate()?;
    cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect()
}

/// Final accuracies of one arm across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSummary {
    pub arm: String,
    pub seeds: Vec<u64>,
    pub source_acc: Vec<f64>,
    /// Empty when the target has no evaluation labels.
    pub target_acc: Vec<f64>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ArmSummary {
    pub fn from_runs(arm: &str, runs: &[SeedRun]) -> Self {
        ArmSummary {
            arm: arm.to_owned(),
            seeds: runs.iter().map(|r| r.seed).collect(),
            source_acc: runs.iter().filter_map(SeedRun::final_source_acc).collect(),
            target_acc: runs.iter().filter_map(SeedRun::final_target_acc).collect(),
        }
    }

    pub fn target_mean(&self) -> f64 {
        mean_std(&self.target_acc).0
    }

    pub fn target_std(&self) -> f64 {
        mean_std(&self.target_acc).1
    }

    pub fn source_mean(&self) -> f64 {
        mean_std(&self.source_acc).0
    }

    pub const HEADER: &'static str = "arm,seeds,target_mean,target_std,source_mean,source_std";

    pub fn write_row(&self, out: &mut impl Write) -> std::io::Result<()> {
        let cell = |v: &[f64]| {
            if v.is_empty() {
                (String::new(), String::new())
            } else {
                let (m, s) = mean_std(v);
                (m.to_string(), s.to_string())
            }
        };
        let (tm, ts) = cell(&self.target_acc);
        let (sm, ss) = cell(&self.source_acc);
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        writeln!(out, "{},{},{tm},{ts},{sm},{ss}", self.arm, seeds.join(" "))
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, w: BufWriter<File>) -> Result<()> {
    w.into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?
        .sync_all()
        .map_err(|e| Error::io(path, e))
}

/// Writes a file through `body`, mapping every failure to an I/O error on
/// `path`.
fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = create(path)?;
    body(&mut w).map_err(|e| Error::io(path, e))?;
    finish(path, w)
}

/// Latent means of every row: `p` coordinates, then domain, true label
/// (empty if unknown) and predicted label.
pub fn write_embeddings(model: &Model, datasets: &[&DomainDataset], out: &mut impl Write) -> Result<()> {
    let io = |e| Error::io("<embeddings>", e);
    let coords: Vec<String> = (0..model.latent_dim()).map(|j| format!("z{j}")).collect();
    writeln!(out, "{},domain,label,pred", coords.join(",")).map_err(io)?;
    for data in datasets {
        let mu = model.latent_mean(data.inputs())?;
        let pred = predict(model, data.inputs())?;
        let labels = data.eval_labels();
        for (i, row) in mu.rows().into_iter().enumerate() {
            let mut line: Vec<String> = row.iter().map(f64::to_string).collect();
            line.push(data.domain().to_string());
            line.push(labels.map(|l| l[i].to_string()).unwrap_or_default());
            line.push(pred[i].to_string());
            writeln!(out, "{}", line.join(",")).map_err(io)?;
        }
    }
    Ok(())
}

/// [`write_embeddings`] to a file, preceded by the config echo.
pub fn export_embeddings(model: &Model, datasets: &[&DomainDataset], path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let mut w = create(path)?;
    cfg.write_echo(&mut w, "# ").map_err(|e| Error::io(path, e))?;
    write_embeddings(model, datasets, &mut w).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })?;
    finish(path, w)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes every per-seed artifact of `run` into `dir`.
pub fn write_seed_artifacts(run: &SeedRun, dir: &Path) -> Result<()> {
    let s = run.seed;
    write_file(&dir.join(format!("history_seed{s}.csv")), |w| {
        run.config.write_echo(w, "# ")?;
        run.history.write_csv_body(w)
    })?;
    write_file(&dir.join(format!("history_seed{s}.config")), |w| run.config.write_echo(w, ""))?;
    if run.config.export_embeddings {
        export_embeddings(
            &run.model,
            &[&run.source, &run.target],
            &dir.join(format!("embeddings_seed{s}.csv")),
            &run.config,
        )?;
    }
    if run.config.save_model {
        save_model(&run.model, &dir.join(format!("model_seed{s}.ckpt")))?;
    }
    Ok(())
}

fn write_summary(dir: &Path, cfg: &ExperimentConfig, rows: &[ArmSummary]) -> Result<()> {
    write_file(&dir.join("summary.csv"), |w| {
        cfg.write_echo(w, "# ")?;
        writeln!(w, "{}", ArmSummary::HEADER)?;
        rows.iter().try_for_each(|r| r.write_row(w))
    })
}

fn run_into(cfg: &ExperimentConfig, arm: &str, dir: &Path) -> Result<ArmSummary> {
    ensure_dir(dir)?;
    let runs = run_seeds(cfg)?;
    for run in &runs {
        write_seed_artifacts(run, dir)?;
    }
    Ok(ArmSummary::from_runs(arm, &runs))
}

/// Runs every seed of `cfg` and writes histories plus a one-row summary
/// into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ArmSummary> {
    let summary = run_into(cfg, "train", &cfg.out_dir)?;
    write_summary(&cfg.out_dir, cfg, std::slice::from_ref(&summary))?;
    Ok(summary)
}

/// The config of one arm of a suite, writing into `out_dir/<label>`.
pub fn arm_config(base: &ExperimentConfig, arm: Arm) -> ExperimentConfig {
    let mut cfg = base.clone();
    cfg.train = arm.apply(&base.train);
    cfg.out_dir = base.out_dir.join(arm.label());
    cfg
}

/// Runs each arm with identical seeds and data, one subdirectory per arm,
/// and writes the combined summary at the top of `base.out_dir`.
pub fn run_suite(base: &ExperimentConfig, arms: &[Arm]) -> Result<Vec<ArmSummary>> {
    base.validate()?;
    let rows = arms
        .iter()
        .map(|&arm| {
            let cfg = arm_config(base, arm);
            run_into(&cfg, arm.label(), &cfg.out_dir)
        })
        .collect::<Result<Vec<_>>>()?;
    write_summary(&base.out_dir, base, &rows)?;
    Ok(rows)
}

/// Full, wo-s, wo-t and wo-st.
pub fn run_ablation_suite(base: &ExperimentConfig) -> Result<Vec<ArmSummary>> {
    run_suite(base, &Arm::ABLATION)
}

/// task-d against adv-d.
pub fn run_discriminator_comparison(base: &ExperimentConfig) -> Result<Vec<ArmSummary>> {
    run_suite(base, &Arm::DISCRIMINATORS)
}

#[cfg(test)]
mod tests;
