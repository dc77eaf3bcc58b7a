use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::datasets::ShiftSpec;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

/// Where the source and target domains come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    TwoMoons,
    GaussianMixture,
    Idx,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::TwoMoons => "two_moons",
            Generator::GaussianMixture => "gaussian_mixture",
            Generator::Idx => "idx",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" => Ok(Generator::TwoMoons),
            "gaussian_mixture" => Ok(Generator::GaussianMixture),
            "idx" => Ok(Generator::Idx),
            other => Err(Error::Config(format!(
                "generator must be two_moons, gaussian_mixture or idx, got `{other}`"
            ))),
        }
    }
}

/// Dataset selection. Synthetic targets are the shifted source points;
/// IDX domains are read from four files.
#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub generator: Generator,
    /// Points per domain (two moons) or per class (mixture).
    pub points: usize,
    /// Noise std of the two-moons generator.
    pub noise: f64,
    pub classes: usize,
    pub cov_scale: f64,
    /// Mixture means sit evenly on a circle of this radius.
    pub mixture_radius: f64,
    pub rotation_deg: f64,
    pub translation: Vec<f64>,
    pub scaling: Vec<f64>,
    pub shift_noise: f64,
    pub source_images: Option<PathBuf>,
    pub source_labels: Option<PathBuf>,
    pub target_images: Option<PathBuf>,
    pub target_labels: Option<PathBuf>,
    pub idx_max_images: usize,
}

impl DataConfig {
    /// The shift that turns source points into the target domain.
    pub fn shift(&self) -> ShiftSpec {
        ShiftSpec {
            rotation: self.rotation_deg.to_radians(),
            translation: self.translation.clone(),
            scaling: self.scaling.clone(),
            noise_std: self.shift_noise,
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            generator: Generator::TwoMoons,
            points: 1000,
            noise: 0.1,
            classes: 3,
            cov_scale: 0.25,
            mixture_radius: 2.0,
            rotation_deg: 35.0,
            translation: Vec::new(),
            scaling: Vec::new(),
            shift_noise: 0.0,
            source_images: None,
            source_labels: None,
            target_images: None,
            target_labels: None,
            idx_max_images: 2000,
        }
    }
}

/// A full experiment: training settings, data, seeds and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train: TrainConfig,
    pub data: DataConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub export_embeddings: bool,
    pub save_model: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            train: TrainConfig::default(),
            data: DataConfig::default(),
            seeds: (0..5).collect(),
            out_dir: PathBuf::from("runs"),
            export_embeddings: false,
            save_model: false,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn list<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
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

fn path_opt(p: &Option<PathBuf>) -> String {
    p.as_deref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn set_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

/// Splits flat `key = value` text into pairs. Blank lines and `#` comments
/// are skipped; anything else without `=` is an error naming the line.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        pairs.push((k.to_owned(), v.trim().to_owned()));
    }
    Ok(pairs)
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = ExperimentConfig::default();
        cfg.apply(parse_config_text(&text)?)?;
        Ok(cfg)
    }

    /// Applies pairs in order. Unknown keys are errors.
    pub fn apply<K: AsRef<str>, V: AsRef<str>>(&mut self, pairs: impl IntoIterator<Item = (K, V)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k.as_ref(), v.as_ref())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let d = &mut self.data;
        match key {
            "seed" | "seeds" => self.seeds = parse_list(key, v)?,
            "out" => self.out_dir = PathBuf::from(v),
            "export_embeddings" => self.export_embeddings = parse_switch(key, v)?,
            "save_model" => self.save_model = parse_switch(key, v)?,
            "generator" => d.generator = v.parse()?,
            "points" => d.points = parse(key, v)?,
            "noise" => d.noise = parse(key, v)?,
            "classes" => d.classes = parse(key, v)?,
            "cov_scale" => d.cov_scale = parse(key, v)?,
            "mixture_radius" => d.mixture_radius = parse(key, v)?,
            "rotation_deg" => d.rotation_deg = parse(key, v)?,
            "translation" => d.translation = parse_list(key, v)?,
            "scaling" => d.scaling = parse_list(key, v)?,
            "shift_noise" => d.shift_noise = parse(key, v)?,
            "source_images" => d.source_images = set_path(v),
            "source_labels" => d.source_labels = set_path(v),
            "target_images" => d.target_images = set_path(v),
            "target_labels" => d.target_labels = set_path(v),
            "idx_max_images" => d.idx_max_images = parse(key, v)?,
            _ => {
                if !self.train.set(key, v)? {
                    return Err(Error::Config(format!("unknown key `{key}`")));
                }
            }
        }
        Ok(())
    }

    /// Every setting in a fixed order; feeding these back through
    /// [`ExperimentConfig::apply`] rebuilds an equal config.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.data;
        let mut out: Vec<(&'static str, String)> = self
            .train
            .entries()
            .into_iter()
            .filter(|(k, _)| *k != "seed")
            .collect();
        out.extend([
            ("generator", d.generator.to_string()),
            ("points", d.points.to_string()),
            ("noise", d.noise.to_string()),
            ("classes", d.classes.to_string()),
            ("cov_scale", d.cov_scale.to_string()),
            ("mixture_radius", d.mixture_radius.to_string()),
            ("rotation_deg", d.rotation_deg.to_string()),
            ("translation", list(&d.translation)),
            ("scaling", list(&d.scaling)),
            ("shift_noise", d.shift_noise.to_string()),
            ("source_images", path_opt(&d.source_images)),
            ("source_labels", path_opt(&d.source_labels)),
            ("target_images", path_opt(&d.target_images)),
            ("target_labels", path_opt(&d.target_labels)),
            ("idx_max_images", d.idx_max_images.to_string()),
            ("seeds", list(&self.seeds)),
            ("out", self.out_dir.display().to_string()),
            ("export_embeddings", switch(self.export_embeddings)),
            ("save_model", switch(self.save_model)),
        ]);
        out
    }

    pub fn write_echo(&self, out: &mut impl std::io::Write, prefix: &str) -> std::io::Result<()> {
        for (k, v) in self.entries() {
            writeln!(out, "{prefix}{k} = {v}")?;
        }
        Ok(())
    }

    /// This config narrowed to one seed, with the training seed set.
    pub fn for_seed(&self, seed: u64) -> ExperimentConfig {
        let mut cfg = self.clone();
        cfg.seeds = vec![seed];
        cfg.train.seed = seed;
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seed list is empty".into()));
        }
        let d = &self.data;
        match d.generator {
            Generator::TwoMoons | Generator::GaussianMixture => {
                if d.points == 0 {
                    return Err(Error::Config("points must be >= 1".into()));
                }
                if !(d.noise >= 0.0 && d.cov_scale >= 0.0) {
                    return Err(Error::Config("noise and cov_scale must be >= 0".into()));
                }
                if d.generator == Generator::GaussianMixture && d.classes < 2 {
                    return Err(Error::Config("gaussian_mixture needs classes >= 2".into()));
                }
                d.shift().validate(2).map_err(|e| Error::Config(e.to_string()))?;
            }
            Generator::Idx => {
                for (name, p) in [
                    ("source_images", &d.source_images),
                    ("source_labels", &d.source_labels),
                    ("target_images", &d.target_images),
                ] {
                    if p.is_none() {
                        return Err(Error::Config(format!("generator = idx requires {name}")));
                    }
                }
                if d.idx_max_images == 0 {
                    return Err(Error::Config("idx_max_images must be >= 1".into()));
                }
            }
        }
        Ok(())
    }
}
