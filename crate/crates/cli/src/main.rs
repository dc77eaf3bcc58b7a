//! `tdda`: train, ablate and compare domain adaptation runs from the
//! command line.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tdda_core::bench::{
    build_domains, export_embeddings, run_ablation_suite, run_discriminator_comparison, run_experiment, run_seed,
    ArmSummary, ExperimentConfig,
};
use tdda_core::networks::load_model;
use tdda_core::objectives::{gradient_check, Term, GRADCHECK_TOLERANCE};
use tdda_core::Error;

#[derive(Parser)]
#[command(name = "tdda", version, about = "Task-discriminative adversarial domain adaptation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the configured method on every seed.
    Train(Common),
    /// Run the full, wo-s, wo-t and wo-st arms.
    Ablate(Common),
    /// Run the task discriminator against the binary domain discriminator.
    CompareDisc(Common),
    /// Write latent means of both domains, training first unless --model is given.
    ExportEmb {
        #[command(flatten)]
        common: Common,
        /// Checkpoint written by `train` with save_model = on.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients of every loss term.
    Gradcheck {
        /// Random configurations per term.
        #[arg(long, default_value_t = 100)]
        configs: usize,
        /// Base seed of the configurations.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed list, e.g. 0,1,2.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override one key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    /// Defaults, then the file, then `--set`, then `--seed` and `--out`.
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v)?;
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::Config(_) | Error::InvalidShift(_) | Error::InvalidData(_) | Error::InvalidSpec(_) => 1,
        Error::Io { .. }
        | Error::IdxMagic(_)
        | Error::IdxUnsupported { .. }
        | Error::IdxTruncated { .. }
        | Error::IdxOverflow
        | Error::IdxCountMismatch { .. }
        | Error::Checkpoint(_) => 3,
        _ => 2,
    }
}

fn print_summary(rows: &[ArmSummary]) {
    println!("{}", ArmSummary::HEADER);
    let mut out = std::io::stdout().lock();
    for r in rows {
        let _ = r.write_row(&mut out);
    }
}

fn export(cfg: &ExperimentConfig, model_path: Option<&Path>) -> Result<(), Error> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::Io {
        path: cfg.out_dir.clone(),
        source: e,
    })?;
    if model_path.is_some() && cfg.seeds.len() != 1 {
        return Err(Error::Config("--model needs exactly one seed".into()));
    }
    for &seed in &cfg.seeds {
        let path = cfg.out_dir.join(format!("embeddings_seed{seed}.csv"));
        let seeded = cfg.for_seed(seed);
        match model_path {
            Some(m) => {
                let model = load_model(m)?;
                let (s, t) = build_domains(&cfg.data, seed)?;
                export_embeddings(&model, &[&s, &t], &path, &seeded)?;
            }
            None => {
                let run = run_seed(cfg, seed)?;
                export_embeddings(&run.model, &[&run.source, &run.target], &path, &seeded)?;
            }
        }
        println!("{}", path.display());
    }
    Ok(())
}

fn gradcheck(configs: usize, seed: u64) -> Result<bool, Error> {
    println!("term,configs,max_rel_error,blocked_max_abs,status");
    let mut ok = true;
    for term in Term::ALL {
        let r = gradient_check(term, configs, seed)?;
        let status = if r.passed() { "pass" } else { "FAIL" };
        ok &= r.passed();
        println!("{term},{},{:.3e},{},{status}", r.configs, r.max_rel_error, r.blocked_max_abs);
    }
    eprintln!("tolerance {GRADCHECK_TOLERANCE:e}");
    Ok(ok)
}

fn run(cli: Cli) -> Result<u8, Error> {
    match cli.command {
        Command::Train(c) => print_summary(&[run_experiment(&c.resolve()?)?]),
        Command::Ablate(c) => print_summary(&run_ablation_suite(&c.resolve()?)?),
        Command::CompareDisc(c) => print_summary(&run_discriminator_comparison(&c.resolve()?)?),
        Command::ExportEmb { common, model } => export(&common.resolve()?, model.as_deref())?,
        Command::Gradcheck { configs, seed } => {
            if !gradcheck(configs, seed)? {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
