//! Desk-scale datasets: Gaussian-mixture classification tasks, CSV
//! ingestion, deterministic batching and additive-noise augmentation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Per-feature statistics used to standardise inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Column means and population standard deviations; a zero std is stored as 1.
    pub fn fit(features: &Tensor) -> Self {
        let (n, d) = (features.rows(), features.cols());
        let mut mean = vec![0.0; d];
        for i in 0..n {
            mean.iter_mut()
                .zip(features.row(i))
                .for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for i in 0..n {
            for (j, x) in features.row(i).iter().enumerate() {
                var[j] += (x - mean[j]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n as f64).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, features: &mut Tensor) {
        let d = features.cols();
        for row in features.data_mut().chunks_mut(d) {
            for (j, x) in row.iter_mut().enumerate() {
                *x = (*x - self.mean[j]) / self.std[j];
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
    pub normalization: Option<Normalization>,
}

/// A gathered mini-batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub features: Tensor,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if features.shape().len() != 2 || features.rows() != labels.len() {
            return Err(Error::invalid(format!(
                "dataset: {} labels for features of shape {:?}",
                labels.len(),
                features.shape()
            )));
        }
        if let Some((i, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::invalid(format!(
                "dataset: label {y} at row {i} outside [0, {num_classes})"
            )));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite { op: "dataset" });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            split,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn gather(&self, indices: &[usize]) -> Batch {
        Batch {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Standardises with statistics fitted on this dataset and records them.
    pub fn normalize_in_place(&mut self) -> Normalization {
        let norm = Normalization::fit(&self.features);
        norm.apply(&mut self.features);
        self.normalization = Some(norm.clone());
        norm
    }

    /// Standardises with externally supplied (training) statistics.
    pub fn apply_normalization(&mut self, norm: &Normalization) {
        norm.apply(&mut self.features);
        self.normalization = Some(norm.clone());
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MixtureSpec {
    pub num_classes: usize,
    pub input_dim: usize,
    pub clusters_per_class: usize,
    /// Standard deviation of each isotropic cluster.
    pub cluster_spread: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            input_dim: 20,
            clusters_per_class: 3,
            cluster_spread: 1.0,
            train_per_class: 50,
            test_per_class: 250,
            seed: 0,
        }
    }
}

impl MixtureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0
            || self.input_dim == 0
            || self.clusters_per_class == 0
            || self.train_per_class == 0
            || self.test_per_class == 0
        {
            return Err(Error::invalid("mixture counts must all be >= 1"));
        }
        if !(self.cluster_spread > 0.0) || !self.cluster_spread.is_finite() {
            return Err(Error::invalid(format!(
                "mixture cluster_spread must be > 0, got {}",
                self.cluster_spread
            )));
        }
        Ok(())
    }
}

// distinct streams for centres, train draws and test draws
const CENTER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const TRAIN_STREAM: u64 = 0x6a09_e667_f3bc_c908;
const TEST_STREAM: u64 = 0xbb67_ae85_84ca_a73b;
const POOL_STREAM: u64 = 0x3c6e_f372_fe94_f82b;

fn sample_split(
    spec: &MixtureSpec,
    centers: &[Vec<Vec<f64>>],
    per_class: usize,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spec.cluster_spread).expect("validated spread");
    let n = spec.num_classes * per_class;
    let mut data = Vec::with_capacity(n * spec.input_dim);
    let mut labels = Vec::with_capacity(n);
    for (class, class_centers) in centers.iter().enumerate() {
        for _ in 0..per_class {
            let k = rng.random_range(0..class_centers.len());
            data.extend(class_centers[k].iter().map(|c| c + noise.sample(&mut rng)));
            labels.push(class);
        }
    }
    Dataset::new(
        Tensor::matrix(n, spec.input_dim, data)?,
        labels,
        spec.num_classes,
        split,
    )
}

/// Draws a class-conditional Gaussian mixture and returns normalised
/// `(train, test)` splits; statistics come from the train split only.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let centers = mixture_centers(spec);
    let mut train = sample_split(
        spec,
        &centers,
        spec.train_per_class,
        spec.seed ^ TRAIN_STREAM,
        Split::Train,
    )?;
    let mut test = sample_split(
        spec,
        &centers,
        spec.test_per_class,
        spec.seed ^ TEST_STREAM,
        Split::Test,
    )?;
    let norm = train.normalize_in_place();
    test.apply_normalization(&norm);
    Ok((train, test))
}

/// A larger labelled draw from the same mixture for pre-training a teacher
/// backbone, disjoint in sampling stream from the train and test splits and
/// normalised with the train statistics.
pub fn gen_pretrain_pool(spec: &MixtureSpec, per_class: usize) -> Result<Dataset> {
    let (train, _) = gen_mixture(spec)?;
    if per_class == 0 {
        return Err(Error::invalid("pretraining pool needs per_class >= 1"));
    }
    let centers = mixture_centers(spec);
    let mut pool = sample_split(
        spec,
        &centers,
        per_class,
        spec.seed ^ POOL_STREAM,
        Split::Train,
    )?;
    let norm = train
        .normalization
        .clone()
        .expect("generated train split is normalised");
    pool.apply_normalization(&norm);
    Ok(pool)
}

fn mixture_centers(spec: &MixtureSpec) -> Vec<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ CENTER_STREAM);
    (0..spec.num_classes)
        .map(|_| {
            (0..spec.clusters_per_class)
                .map(|_| {
                    (0..spec.input_dim)
                        .map(|_| StandardNormal.sample(&mut rng))
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// Reads a headed CSV with one integer label column.
///
/// Rows and columns in errors are 1-based data rows and header names.
pub fn load_csv(
    path: &Path,
    label_column: &str,
    num_classes: Option<usize>,
    normalize: bool,
) -> Result<Dataset> {
    let shown = path.display().to_string();
    let err = |row: usize, column: &str, message: String| Error::Csv {
        path: shown.clone(),
        row,
        column: column.to_string(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| err(0, "", e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| err(0, "", e.to_string()))?
        .clone();
    if headers.is_empty() {
        return Err(err(0, "", "empty file".into()));
    }
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| err(0, label_column, "label column not found in header".into()))?;
    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&i| i != label_idx).collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| err(row, "", e.to_string()))?;
        let label_text = record[label_idx].trim();
        let label: usize = label_text.parse().map_err(|_| {
            err(
                row,
                label_column,
                format!("label {label_text:?} is not a non-negative integer"),
            )
        })?;
        if let Some(c) = num_classes {
            if label >= c {
                return Err(err(
                    row,
                    label_column,
                    format!("label {label} outside [0, {c})"),
                ));
            }
        }
        labels.push(label);
        for &c in &feature_cols {
            let cell = record[c].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| err(row, &headers[c], format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() {
                return Err(err(row, &headers[c], format!("non-finite cell {cell:?}")));
            }
            data.push(v);
        }
    }
    if labels.is_empty() {
        return Err(err(0, "", "no data rows".into()));
    }
    let num_classes = num_classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let features = Tensor::matrix(labels.len(), feature_cols.len(), data)?;
    let mut ds = Dataset::new(features, labels, num_classes, Split::Train)?;
    if normalize {
        ds.normalize_in_place();
    }
    Ok(ds)
}

/// Writes features as `x0..x{d-1}` followed by the label column.
pub fn write_csv(ds: &Dataset, path: &Path, label_column: &str) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io(e.into()))?;
    let mut header: Vec<String> = (0..ds.input_dim()).map(|j| format!("x{j}")).collect();
    header.push(label_column.to_string());
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for i in 0..ds.len() {
        let mut rec: Vec<String> = ds
            .features
            .row(i)
            .iter()
            .map(|v| format!("{v:?}"))
            .collect();
        rec.push(ds.labels[i].to_string());
        w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Shuffles `0..n` with `epoch_seed` and cuts it into batches of `batch_size`.
///
/// A final remnant smaller than two rows is dropped: a one-node graph has
/// no edges.
pub fn batch_iter(n: usize, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size < 2 {
        return Err(Error::invalid(format!(
            "batch size must be >= 2, got {batch_size}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
    Ok(order
        .chunks(batch_size)
        .filter(|c| c.len() >= 2)
        .map(<[usize]>::to_vec)
        .collect())
}

/// Adds `N(0, noise_std²)` jitter; the stream is keyed by `(seed, batch_index)`.
pub fn augment(batch: &Batch, noise_std: f64, seed: u64, batch_index: u64) -> Result<Batch> {
    if !(noise_std >= 0.0) {
        return Err(Error::invalid(format!(
            "noise_std must be >= 0, got {noise_std}"
        )));
    }
    if noise_std == 0.0 {
        return Ok(batch.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch_index);
    let noise = Normal::new(0.0, noise_std).expect("checked std");
    let mut features = batch.features.clone();
    features
        .data_mut()
        .iter_mut()
        .for_each(|x| *x += noise.sample(&mut rng));
    Ok(Batch {
        features,
        labels: batch.labels.clone(),
    })
}
