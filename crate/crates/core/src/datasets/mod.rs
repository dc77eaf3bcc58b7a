//! Source and target datasets: synthetic generators, domain shifts, IDX
//! ingestion, input rescaling and seeded batch iteration.
//!
//! Target labels stay attached to their dataset for evaluation but are only
//! reachable through [`DomainDataset::eval_labels`]; the training loop sees
//! targets through [`Unlabeled`], which carries inputs alone.

mod idx;

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::grad::{sample_standard_normal, Matrix, Rng, Stream};

pub use idx::{load_idx, parse_idx, write_idx_images, write_idx_labels, IdxArray, IDX_IMAGES, IDX_LABELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Source,
    Target,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Source => "source",
            Domain::Target => "target",
        })
    }
}

impl FromStr for Domain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "source" => Ok(Domain::Source),
            "target" => Ok(Domain::Target),
            other => Err(Error::InvalidData(format!("unknown domain `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    inputs: Matrix,
    labels: Option<Vec<usize>>,
    held_out: bool,
    classes: usize,
    domain: Domain,
    provenance: String,
}

/// Target inputs with no path back to their labels.
#[derive(Debug, Clone, Copy)]
pub struct Unlabeled<'a> {
    inputs: &'a Matrix,
}

impl<'a> Unlabeled<'a> {
    pub fn new(inputs: &'a Matrix) -> Self {
        Unlabeled { inputs }
    }

    pub fn inputs(&self) -> &'a Matrix {
        self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl DomainDataset {
    pub fn new(
        inputs: Matrix,
        labels: Option<Vec<usize>>,
        classes: usize,
        domain: Domain,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if let Some((i, _)) = inputs.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite input at flat index {i}")));
        }
        if let Some(l) = &labels {
            if l.len() != inputs.nrows() {
                return Err(Error::InvalidData(format!(
                    "{} labels for {} rows",
                    l.len(),
                    inputs.nrows()
                )));
            }
            if let Some(bad) = l.iter().find(|&&y| y >= classes) {
                return Err(Error::InvalidData(format!("label {bad} outside [0, {classes})")));
            }
        }
        Ok(DomainDataset {
            inputs,
            labels,
            held_out: false,
            classes,
            domain,
            provenance: provenance.into(),
        })
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Labels usable for training; `None` once held out.
    pub fn labels(&self) -> Option<&[usize]> {
        if self.held_out {
            None
        } else {
            self.labels.as_deref()
        }
    }

    /// Labels for scoring predictions, held out or not.
    pub fn eval_labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn is_held_out(&self) -> bool {
        self.held_out
    }

    pub fn hold_out_labels(mut self) -> Self {
        self.held_out = true;
        self
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn unlabeled(&self) -> Unlabeled<'_> {
        Unlabeled::new(&self.inputs)
    }

    /// Histogram of the (evaluation) labels over `0..classes`.
    pub fn label_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in self.labels.iter().flatten() {
            counts[y] += 1;
        }
        counts
    }

    /// The subset at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> DomainDataset {
        DomainDataset {
            inputs: self.inputs.select(ndarray::Axis(0), indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            held_out: self.held_out,
            classes: self.classes,
            domain: self.domain,
            provenance: self.provenance.clone(),
        }
    }

    fn with_inputs(&self, inputs: Matrix, note: &str) -> DomainDataset {
        DomainDataset {
            inputs,
            labels: self.labels.clone(),
            held_out: self.held_out,
            classes: self.classes,
            domain: self.domain,
            provenance: format!("{}; {note}", self.provenance),
        }
    }

    /// CSV with a header of feature columns, then `label`, then `domain`.
    /// The label cell is empty for unlabeled rows.
    pub fn write_csv(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.dim()).map(|j| format!("x{j}")).collect();
        writeln!(out, "{},label,domain", header.join(","))?;
        for (i, row) in self.inputs.rows().into_iter().enumerate() {
            for v in row {
                write!(out, "{v},")?;
            }
            if let Some(l) = &self.labels {
                write!(out, "{}", l[i])?;
            }
            writeln!(out, ",{}", self.domain)?;
        }
        Ok(())
    }
}

/// Two interleaving half-circles: class 0 on the upper unit half-circle,
/// class 1 on the lower one shifted to (1, 0.5), each with `n / 2` evenly
/// spaced points plus isotropic Gaussian noise.
pub fn gen_two_moons(n: usize, noise_std: f64, seed: u64) -> Result<DomainDataset> {
    if n < 2 || n % 2 == 1 {
        return Err(Error::InvalidData(format!("two moons needs an even n >= 2, got {n}")));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidData(format!("noise std must be >= 0, got {noise_std}")));
    }
    let half = n / 2;
    let step = if half > 1 { PI / (half - 1) as f64 } else { 0.0 };
    let mut x = Matrix::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..half {
        let t = i as f64 * step;
        x[[i, 0]] = t.cos();
        x[[i, 1]] = t.sin();
        x[[half + i, 0]] = 1.0 - t.cos();
        x[[half + i, 1]] = 0.5 - t.sin();
    }
    labels.extend(std::iter::repeat_n(0, half));
    labels.extend(std::iter::repeat_n(1, half));
    if noise_std > 0.0 {
        x += &(sample_standard_normal(&mut Stream::Data.rng(seed), n, 2) * noise_std);
    }
    DomainDataset::new(
        x,
        Some(labels),
        2,
        Domain::Source,
        format!("two_moons(n={n}, noise={noise_std}, seed={seed})"),
    )
}

/// Isotropic Gaussian blobs with covariance `cov_scale · I`, one per mean.
pub fn gen_gaussian_mixture(
    n_per_class: usize,
    means: &[Vec<f64>],
    cov_scale: f64,
    seed: u64,
) -> Result<DomainDataset> {
    let k = means.len();
    if k < 2 {
        return Err(Error::InvalidData(format!("need at least 2 components, got {k}")));
    }
    let d = means[0].len();
    if d == 0 || means.iter().any(|m| m.len() != d) {
        return Err(Error::InvalidData("means must share one nonzero dimension".into()));
    }
    if means.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidData("means must be finite".into()));
    }
    for a in 0..k {
        for b in a + 1..k {
            if means[a] == means[b] {
                return Err(Error::InvalidData(format!("components {a} and {b} share a mean")));
            }
        }
    }
    if !(cov_scale >= 0.0 && cov_scale.is_finite()) {
        return Err(Error::InvalidData(format!("cov scale must be >= 0, got {cov_scale}")));
    }
    let n = k * n_per_class;
    let std = cov_scale.sqrt();
    let noise = sample_standard_normal(&mut Stream::Data.rng(seed), n, d);
    let x = Matrix::from_shape_fn((n, d), |(i, j)| means[i / n_per_class][j] + std * noise[[i, j]]);
    let labels = (0..n).map(|i| i / n_per_class).collect();
    DomainDataset::new(
        x,
        Some(labels),
        k,
        Domain::Source,
        format!("gaussian_mixture(k={k}, n_per_class={n_per_class}, cov={cov_scale}, seed={seed})"),
    )
}

/// `x' = R(rotation) · (scaling ⊙ x) + translation + noise`. Empty
/// `translation` / `scaling` mean zero and one; rotation acts on the first
/// two coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ShiftSpec {
    pub rotation: f64,
    pub translation: Vec<f64>,
    pub scaling: Vec<f64>,
    pub noise_std: f64,
}

impl ShiftSpec {
    pub fn rotation(radians: f64) -> Self {
        ShiftSpec {
            rotation: radians,
            ..Self::default()
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidShift(m));
        if !self.rotation.is_finite() {
            return bad("rotation must be finite".into());
        }
        if self.rotation != 0.0 && dim < 2 {
            return bad(format!("rotation needs at least 2 dimensions, data has {dim}"));
        }
        for (what, v) in [("translation", &self.translation), ("scaling", &self.scaling)] {
            if !v.is_empty() && v.len() != dim {
                return bad(format!("{what} has {} entries for {dim} dimensions", v.len()));
            }
        }
        if self.translation.iter().any(|t| !t.is_finite()) {
            return bad("translation must be finite".into());
        }
        if self.scaling.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("scaling entries must be > 0".into());
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad(format!("noise std must be >= 0, got {}", self.noise_std));
        }
        Ok(())
    }
}

impl fmt::Display for ShiftSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "shift(rotation={}, translation={:?}, scaling={:?}, noise={})",
            self.rotation, self.translation, self.scaling, self.noise_std
        )
    }
}

/// Builds a target domain from `data`. Labels are carried over and held
/// out. Steps that would be no-ops are skipped, so the identity spec
/// returns the inputs bit-for-bit.
pub fn apply_shift(data: &DomainDataset, spec: &ShiftSpec, seed: u64) -> Result<DomainDataset> {
    let d = data.dim();
    spec.validate(d)?;
    let mut x = data.inputs.clone();
    if !spec.scaling.is_empty() {
        for mut row in x.rows_mut() {
            for (v, s) in row.iter_mut().zip(&spec.scaling) {
                *v *= s;
            }
        }
    }
    if spec.rotation != 0.0 {
        let (s, c) = spec.rotation.sin_cos();
        for mut row in x.rows_mut() {
            let (a, b) = (row[0], row[1]);
            row[0] = c * a - s * b;
            row[1] = s * a + c * b;
        }
    }
    if !spec.translation.is_empty() {
        for mut row in x.rows_mut() {
            for (v, t) in row.iter_mut().zip(&spec.translation) {
                *v += t;
            }
        }
    }
    if spec.noise_std > 0.0 {
        x += &(sample_standard_normal(&mut Stream::Shift.rng(seed), x.nrows(), d) * spec.noise_std);
    }
    Ok(data
        .with_inputs(x, &format!("{spec}, seed={seed}"))
        .with_domain(Domain::Target)
        .hold_out_labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RescaleMode {
    /// One min/max over every entry (pixel data).
    Global,
    /// One min/max per column (synthetic features).
    PerFeature,
}

impl fmt::Display for RescaleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RescaleMode::Global => "global",
            RescaleMode::PerFeature => "per_feature",
        })
    }
}

impl FromStr for RescaleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(RescaleMode::Global),
            "per_feature" => Ok(RescaleMode::PerFeature),
            other => Err(Error::Config(format!("unknown rescale mode `{other}`"))),
        }
    }
}

fn affine_to_unit(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (2.0 * (v - lo) / (hi - lo) - 1.0).clamp(-1.0, 1.0)
    } else {
        0.0
    }
}

fn min_max<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Maps inputs affinely onto [-1, 1]; a constant range maps to 0.
pub fn rescale_inputs(data: &DomainDataset, mode: RescaleMode) -> DomainDataset {
    let mut x = data.inputs.clone();
    match mode {
        RescaleMode::Global => {
            let (lo, hi) = min_max(x.iter());
            x.mapv_inplace(|v| affine_to_unit(v, lo, hi));
        }
        RescaleMode::PerFeature => {
            for mut col in x.columns_mut() {
                let (lo, hi) = min_max(col.iter());
                col.mapv_inplace(|v| affine_to_unit(v, lo, hi));
            }
        }
    }
    data.with_inputs(x, &format!("rescaled({mode})"))
}

/// Keeps at most `max_rows` rows chosen uniformly without replacement,
/// in their original order.
pub fn subsample(data: &DomainDataset, max_rows: usize, seed: u64) -> DomainDataset {
    if data.len() <= max_rows {
        return data.clone();
    }
    let mut rng = Stream::Subsample.rng(seed);
    let mut picked = rand::seq::index::sample(&mut rng, data.len(), max_rows).into_vec();
    picked.sort_unstable();
    let mut out = data.select(&picked);
    out.provenance = format!("{}; subsample({max_rows}, seed={seed})", data.provenance);
    out
}

/// Averages 2×2 pixel blocks of row-major `height × width` images.
pub fn downscale_2x2(data: &DomainDataset, height: usize, width: usize) -> Result<DomainDataset> {
    if height * width != data.dim() || height % 2 == 1 || width % 2 == 1 {
        return Err(Error::InvalidData(format!(
            "cannot 2x2-downscale {}-wide rows as {height}x{width} images",
            data.dim()
        )));
    }
    let (h2, w2) = (height / 2, width / 2);
    let src = &data.inputs;
    let x = Matrix::from_shape_fn((data.len(), h2 * w2), |(i, j)| {
        let (r, c) = (2 * (j / w2), 2 * (j % w2));
        let at = |dr: usize, dc: usize| src[[i, (r + dr) * width + c + dc]];
        0.25 * (at(0, 0) + at(0, 1) + at(1, 0) + at(1, 1))
    });
    Ok(data.with_inputs(x, &format!("downscale_2x2({height}x{width})")))
}

/// Surrounds row-major `height × width` images with a `pad`-pixel border
/// of `fill`.
pub fn pad_images(data: &DomainDataset, height: usize, width: usize, pad: usize, fill: f64) -> Result<DomainDataset> {
    if height * width != data.dim() {
        return Err(Error::InvalidData(format!(
            "cannot pad {}-wide rows as {height}x{width} images",
            data.dim()
        )));
    }
    let (ph, pw) = (height + 2 * pad, width + 2 * pad);
    let src = &data.inputs;
    let x = Matrix::from_shape_fn((data.len(), ph * pw), |(i, j)| {
        let (r, c) = (j / pw, j % pw);
        if r < pad || c < pad || r >= pad + height || c >= pad + width {
            fill
        } else {
            src[[i, (r - pad) * width + c - pad]]
        }
    });
    Ok(data.with_inputs(x, &format!("pad({pad})")))
}

/// Seeded epoch-wise shuffling over `0..n`. Each epoch visits every index
/// at most once and drops the final short batch.
#[derive(Debug, Clone)]
pub struct BatchIterator {
    n: usize,
    batch_size: usize,
    rng: Rng,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchIterator {
    pub fn new(n: usize, batch_size: usize, rng: Rng) -> Result<Self> {
        if batch_size == 0 || batch_size > n {
            return Err(Error::InvalidData(format!(
                "batch size {batch_size} does not fit a dataset of {n} rows"
            )));
        }
        Ok(BatchIterator {
            n,
            batch_size,
            rng,
            order: (0..n).collect(),
            cursor: n,
        })
    }

    pub fn seeded(n: usize, batch_size: usize, seed: u64) -> Result<Self> {
        Self::new(n, batch_size, Stream::Batches.rng(seed))
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.n / self.batch_size
    }

    /// All batches of one freshly shuffled epoch.
    pub fn epoch(&mut self) -> Vec<Vec<usize>> {
        self.order.shuffle(&mut self.rng);
        self.cursor = self.n;
        self.order
            .chunks_exact(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }

    /// The next batch, reshuffling whenever the current epoch runs out.
    pub fn next_batch(&mut self) -> Vec<usize> {
        if self.cursor + self.batch_size > self.n {
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        let b = self.order[self.cursor..self.cursor + self.batch_size].to_vec();
        self.cursor += self.batch_size;
        b
    }
}
