//! Datasets: synthetic families, IDX and embedding-CSV ingestion, splits.
//!
//! Synthetic inputs are drawn from `Uniform[-1, 1]^D`. Each sample uses its
//! own ChaCha substream `(seed, index + 1)`, and family parameters come from
//! stream 0, so generation is a pure function of the `SyntheticFamily` description.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::{Labels, TrainData};
use crate::linalg::{Matrix, Real};

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;
pub const ORDINAL_LEVELS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// 0-based class indices.
    Classes { labels: Vec<usize>, n_classes: usize },
    /// Ratings in `1..=levels`.
    Ordinal { ratings: Vec<usize>, levels: usize },
    Regression(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Ordinal { ratings, .. } => ratings.len(),
            Targets::Regression(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Classes { labels, n_classes } => Targets::Classes {
                labels: idx.iter().map(|&i| labels[i]).collect(),
                n_classes: *n_classes,
            },
            Targets::Ordinal { ratings, levels } => Targets::Ordinal {
                ratings: idx.iter().map(|&i| ratings[i]).collect(),
                levels: *levels,
            },
            Targets::Regression(v) => Targets::Regression(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    /// Family name or source path.
    pub source: String,
    pub seed: Option<u64>,
    pub d: usize,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_distribution: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix<f64>,
    pub targets: Targets,
    pub meta: DatasetMeta,
}

impl Dataset {
    pub fn new(x: Matrix<f64>, targets: Targets, meta: DatasetMeta) -> Result<Self> {
        let ds = Dataset { x, targets, meta };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.x.rows() != self.targets.len() {
            return Err(Error::Domain(format!(
                "{} rows but {} targets",
                self.x.rows(),
                self.targets.len()
            )));
        }
        match &self.targets {
            Targets::Classes { labels, n_classes } => {
                if let Some(&bad) = labels.iter().find(|&&c| c >= *n_classes) {
                    return Err(Error::Domain(format!("class {bad} outside 0..{n_classes}")));
                }
            }
            Targets::Ordinal { ratings, levels } => {
                if let Some(&bad) = ratings.iter().find(|&&r| r < 1 || r > *levels) {
                    return Err(Error::Domain(format!("rating {bad} outside 1..={levels}")));
                }
            }
            Targets::Regression(v) => {
                if v.iter().any(|t| !t.is_finite()) {
                    return Err(Error::NonFinite("regression targets".into()));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        let mut meta = self.meta.clone();
        meta.n = idx.len();
        Dataset {
            x: self.x.select_rows(idx),
            targets: self.targets.select(idx),
            meta,
        }
    }

    /// Training view. Ordinal ratings and regression targets become one
    /// real-valued output column; classes stay categorical.
    pub fn to_train_data<T: Real>(&self) -> TrainData<T> {
        let column = |v: Vec<f64>| Labels::Values(Matrix::from_fn(v.len(), 1, |i, _| T::c(v[i])));
        let y = match &self.targets {
            Targets::Classes { labels, .. } => Labels::Classes(labels.clone()),
            Targets::Ordinal { ratings, .. } => column(ratings.iter().map(|&r| r as f64).collect()),
            Targets::Regression(v) => column(v.clone()),
        };
        TrainData { x: self.x.cast(), y }
    }

    pub fn write_meta(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Smooth,
    Piecewise,
    Sparse,
    Oscillatory,
    Entangled,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 5] = [
        FamilyKind::Smooth,
        FamilyKind::Piecewise,
        FamilyKind::Sparse,
        FamilyKind::Oscillatory,
        FamilyKind::Entangled,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Smooth => "smooth",
            FamilyKind::Piecewise => "piecewise",
            FamilyKind::Sparse => "sparse",
            FamilyKind::Oscillatory => "oscillatory",
            FamilyKind::Entangled => "entangled",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        FamilyKind::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown family '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFamily {
    pub kind: FamilyKind,
    pub d: usize,
    pub n: usize,
    pub seed: u64,
    /// Standard deviation of the frequencies `w_j` (smooth 0.5, oscillatory 5.0).
    pub freq_scale: f64,
    /// Fraction of active dimensions in the sparse family.
    pub active_fraction: f64,
    pub entangler_width: usize,
    /// Overrides the sampled frequencies with one fixed value.
    pub w_override: Option<f64>,
    /// Read `Σ sin(w·x)` as `sin(Σ_j w_j x_j)` instead of `Σ_j sin(w_j x_j)`.
    pub inner_product: bool,
}

impl SyntheticFamily {
    pub fn new(kind: FamilyKind, d: usize, n: usize, seed: u64) -> Self {
        SyntheticFamily {
            kind,
            d,
            n,
            seed,
            freq_scale: if kind == FamilyKind::Oscillatory { 5.0 } else { 0.5 },
            active_fraction: 0.2,
            entangler_width: 16,
            w_override: None,
            inner_product: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(Error::Config("synthetic D and N must be >= 1".into()));
        }
        if !(self.freq_scale >= 0.0) || !(self.active_fraction > 0.0 && self.active_fraction <= 1.0) {
            return Err(Error::Config("invalid family parameters".into()));
        }
        if self.entangler_width == 0 {
            return Err(Error::Config("entangler width must be >= 1".into()));
        }
        Ok(())
    }

    /// `⌈f·D⌉`, at least 2 (capped at D).
    pub fn active_dims(&self) -> usize {
        ((self.active_fraction * self.d as f64).ceil() as usize).max(2).min(self.d)
    }
}

fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

enum Target {
    Sines { dims: Vec<usize>, w: Vec<f64>, inner: bool },
    Kinks { tau: Vec<f64> },
    Tanh { u: Matrix<f64>, c: Vec<f64>, v: Vec<f64> },
}

impl Target {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Target::Sines { dims, w, inner: false } => dims.iter().zip(w).map(|(&j, &w)| (w * x[j]).sin()).sum(),
            Target::Sines { dims, w, inner: true } => dims.iter().zip(w).map(|(&j, &w)| w * x[j]).sum::<f64>().sin(),
            Target::Kinks { tau } => x.iter().zip(tau).map(|(x, t)| (x - t).abs()).sum(),
            Target::Tanh { u, c, v } => (0..u.rows())
                .map(|k| {
                    let z: f64 = u.row(k).iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + c[k];
                    v[k] * z.tanh()
                })
                .sum(),
        }
    }
}

fn build_target(spec: &SyntheticFamily) -> Target {
    let mut rng = substream(spec.seed, 0);
    let d = spec.d;
    let freqs = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        let normal = Normal::new(0.0, spec.freq_scale).expect("validated scale");
        (0..n)
            .map(|_| {
                let w = normal.sample(rng);
                spec.w_override.unwrap_or(w)
            })
            .collect()
    };
    match spec.kind {
        FamilyKind::Smooth | FamilyKind::Oscillatory => Target::Sines {
            dims: (0..d).collect(),
            w: freqs(&mut rng, d),
            inner: spec.inner_product,
        },
        FamilyKind::Sparse => {
            let mut dims: Vec<usize> = (0..d).collect();
            dims.shuffle(&mut rng);
            dims.truncate(spec.active_dims());
            dims.sort_unstable();
            let w = freqs(&mut rng, dims.len());
            Target::Sines {
                dims,
                w,
                inner: spec.inner_product,
            }
        }
        FamilyKind::Piecewise => Target::Kinks {
            tau: (0..d).map(|_| rng.random_range(-0.5..0.5)).collect(),
        },
        FamilyKind::Entangled => {
            let h = spec.entangler_width;
            let mut gauss = |fan_in: usize| -> f64 {
                let z: f64 = StandardNormal.sample(&mut rng);
                z / (fan_in as f64).sqrt()
            };
            let u = Matrix::from_fn(h, d, |_, _| gauss(d));
            let c = (0..h).map(|_| gauss(d)).collect();
            let v = (0..h).map(|_| gauss(h)).collect();
            Target::Tanh { u, c, v }
        }
    }
}

/// Active input dimensions of a sparse family (all dimensions otherwise).
pub fn active_dimensions(spec: &SyntheticFamily) -> Vec<usize> {
    match build_target(spec) {
        Target::Sines { dims, .. } => dims,
        _ => (0..spec.d).collect(),
    }
}

/// Zero mean, unit (population) variance; a constant target is only centered.
pub fn standardize(y: &mut [f64]) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    for v in y.iter_mut() {
        *v -= mean;
        if sd > 0.0 {
            *v /= sd;
        }
    }
}

pub fn gen_synthetic(spec: &SyntheticFamily) -> Result<Dataset> {
    spec.validate()?;
    let target = build_target(spec);
    let mut data = Vec::with_capacity(spec.n * spec.d);
    let mut y = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let mut rng = substream(spec.seed, i as u64 + 1);
        let start = data.len();
        data.extend((0..spec.d).map(|_| rng.random_range(-1.0..=1.0)));
        y.push(target.eval(&data[start..]));
    }
    standardize(&mut y);
    let mut notes = Vec::new();
    if spec.kind == FamilyKind::Sparse {
        notes.push(format!("active dimensions: {}", spec.active_dims()));
    }
    if spec.inner_product {
        notes.push("inner-product sine reading".into());
    }
    if let Some(w) = spec.w_override {
        notes.push(format!("frequencies overridden to {w}"));
    }
    Dataset::new(
        Matrix::new(spec.n, spec.d, data)?,
        Targets::Regression(y),
        DatasetMeta {
            source: spec.kind.name().into(),
            seed: Some(spec.seed),
            d: spec.d,
            n: spec.n,
            input_distribution: Some("uniform[-1,1]".into()),
            notes,
        },
    )
}

/// Ordinal fixture: ratings uniform on `1..=5`, latent score
/// `rating + N(0, noise)`. Feature 0 carries `(score - 3) / 2`; the other
/// `d - 1` features are `Uniform[-1, 1]` nuisance.
pub fn gen_ordinal_fixture(n: usize, d: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n == 0 || d == 0 {
        return Err(Error::Config(format!("ordinal fixture needs n, d > 0 (got n={n}, d={d})")));
    }
    let normal = Normal::new(0.0, noise).map_err(|e| Error::Config(format!("noise {noise}: {e}")))?;
    let mut data = Vec::with_capacity(n * d);
    let mut ratings = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = substream(seed, i as u64 + 1);
        let r = rng.random_range(1..=ORDINAL_LEVELS);
        let score = r as f64 + normal.sample(&mut rng);
        data.push((score - 3.0) / 2.0);
        data.extend((1..d).map(|_| rng.random_range(-1.0..=1.0)));
        ratings.push(r);
    }
    Dataset::new(
        Matrix::new(n, d, data)?,
        Targets::Ordinal {
            ratings,
            levels: ORDINAL_LEVELS,
        },
        DatasetMeta {
            source: "ordinal_fixture".into(),
            seed: Some(seed),
            d,
            n,
            input_distribution: None,
            notes: vec![format!("score = rating + N(0, {noise})")],
        },
    )
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct IdxReader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
}

impl IdxReader<'_> {
    fn err(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            offset: offset as u64,
            msg: msg.into(),
        }
    }

    fn u32_at(&self, offset: usize) -> Result<u32> {
        let b = self
            .bytes
            .get(offset..offset + 4)
            .ok_or_else(|| self.err(offset, format!("truncated header (file has {} bytes)", self.bytes.len())))?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    /// Checks the magic and returns the declared dimensions.
    fn header(&self, magic: u32, ndims: usize) -> Result<Vec<usize>> {
        let got = self.u32_at(0)?;
        if got != magic {
            return Err(self.err(0, format!("bad magic {got}, expected {magic}")));
        }
        (0..ndims).map(|k| self.u32_at(4 + 4 * k).map(|v| v as usize)).collect()
    }

    fn body(&self, offset: usize, len: usize) -> Result<&[u8]> {
        self.bytes.get(offset..offset + len).ok_or_else(|| {
            self.err(
                self.bytes.len(),
                format!("truncated data: need {} bytes from offset {offset}", len),
            )
        })
    }
}

/// Reads an IDX image/label pair (optionally gzipped), scaling pixels to
/// `[0, 1]`. `limit` keeps only the first N samples.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let ib = read_maybe_gz(ip)?;
    let lb = read_maybe_gz(lp)?;
    let images = IdxReader { path: ip, bytes: &ib };
    let labels = IdxReader { path: lp, bytes: &lb };

    let dims = images.header(IDX_IMAGES_MAGIC, 3)?;
    let (n, rows, cols) = (dims[0], dims[1], dims[2]);
    let n_labels = labels.header(IDX_LABELS_MAGIC, 1)?[0];
    if n != n_labels {
        return Err(labels.err(4, format!("label count {n_labels} does not match image count {n}")));
    }
    let d = rows * cols;
    let pixels = images.body(16, n * d)?;
    let raw_labels = labels.body(8, n)?;
    if let Some(pos) = raw_labels.iter().position(|&c| c > 9) {
        return Err(labels.err(8 + pos, format!("label {} outside 0..=9", raw_labels[pos])));
    }

    let keep = limit.map_or(n, |l| l.min(n));
    let x = Matrix::new(keep, d, pixels[..keep * d].iter().map(|&p| p as f64 / 255.0).collect())?;
    Dataset::new(
        x,
        Targets::Classes {
            labels: raw_labels[..keep].iter().map(|&c| c as usize).collect(),
            n_classes: 10,
        },
        DatasetMeta {
            source: ip.display().to_string(),
            seed: None,
            d,
            n: keep,
            input_distribution: Some("pixels/255".into()),
            notes: if keep < n { vec![format!("limited to {keep} of {n}")] } else { Vec::new() },
        },
    )
}

/// Encodes images (row-major bytes) as uncompressed IDX.
pub fn write_idx_images(path: impl AsRef<Path>, rows: usize, cols: usize, pixels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGES_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    write_all(path, &out)
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    write_all(path, &out)
}

fn write_all(path: &Path, bytes: &[u8]) -> Result<()> {
    File::create(path)
        .and_then(|mut f| f.write_all(bytes))
        .map_err(|e| Error::io(path, e))
}

/// Reads `label,f0,...,f{D-1}` with labels in `1..=5`.
pub fn load_embedding_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |line: u64, msg: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_err(0, e.to_string()))?;
    let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(csv_err(1, "header must start with 'label' followed by features".into()));
    }
    for (k, name) in header.iter().skip(1).enumerate() {
        if name != format!("f{k}") {
            return Err(csv_err(1, format!("column {} is '{name}', expected 'f{k}'", k + 1)));
        }
    }
    let d = header.len() - 1;
    let mut data = Vec::new();
    let mut ratings = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let label: usize = rec[0]
            .trim()
            .parse()
            .map_err(|_| csv_err(line, format!("label '{}' is not an integer", &rec[0])))?;
        if !(1..=ORDINAL_LEVELS).contains(&label) {
            return Err(csv_err(line, format!("label {label} outside 1..={ORDINAL_LEVELS}")));
        }
        ratings.push(label);
        for (k, cell) in rec.iter().skip(1).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| csv_err(line, format!("f{k} = '{cell}' is not numeric")))?;
            if !v.is_finite() {
                return Err(csv_err(line, format!("f{k} is not finite")));
            }
            data.push(v);
        }
    }
    let n = ratings.len();
    Dataset::new(
        Matrix::new(n, d, data)?,
        Targets::Ordinal {
            ratings,
            levels: ORDINAL_LEVELS,
        },
        DatasetMeta {
            source: path.display().to_string(),
            seed: None,
            d,
            n,
            input_distribution: None,
            notes: Vec::new(),
        },
    )
}

pub fn write_embedding_csv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let Targets::Ordinal { ratings, .. } = &ds.targets else {
        return Err(Error::Domain("embedding CSV needs ordinal targets".into()));
    };
    let map = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(map)?;
    let mut header = vec!["label".to_string()];
    header.extend((0..ds.dim()).map(|k| format!("f{k}")));
    w.write_record(&header).map_err(map)?;
    for (i, r) in ratings.iter().enumerate() {
        let mut row = vec![r.to_string()];
        row.extend(ds.x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(map)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Seeded permutation cut into contiguous train/val/test blocks.
pub fn split(ds: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<Splits> {
    let (a, b, c) = fractions;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || ((a + b + c) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split fractions {fractions:?} must be positive and sum to 1")));
    }
    let n = ds.len();
    let n_train = (a * n as f64).round() as usize;
    let n_val = (b * n as f64).round() as usize;
    if n_train == 0 || n_val == 0 || n_train + n_val >= n {
        return Err(Error::Config(format!("split of {n} rows by {fractions:?} leaves an empty part")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(Splits {
        train: ds.select(&idx[..n_train]),
        val: ds.select(&idx[n_train..n_train + n_val]),
        test: ds.select(&idx[n_train + n_val..]),
    })
}

/// Path of the JSON sidecar written next to a data file.
pub fn meta_sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}
