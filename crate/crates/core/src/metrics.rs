//! Feature Similarity Score, Relevance Score and the heatmap masking that
//! feeds them.
//!
//! Both scores are batch means of the squared distance correlation: FSS
//! pairs student features with base features, RS pairs one model's features
//! with the label embeddings of the batch's ground truth.

use serde::{Deserialize, Serialize};

use crate::cam::Heatmap;
use crate::distcorr::{dcor_stats, pdcor2};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One embedding row per class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    rows: Tensor,
    /// Pairs of classes whose embeddings coincide.
    pub duplicate_rows: Vec<(usize, usize)>,
}

impl EmbeddingTable {
    pub fn new(rows: Tensor) -> Result<Self> {
        if rows.rank() != 2 {
            return Err(Error::Shape(format!(
                "embedding table must be [num_classes, dim], got {:?}",
                rows.shape()
            )));
        }
        if rows.batch() < 2 {
            return Err(Error::InvalidArgument(
                "embedding table needs at least 2 classes".into(),
            ));
        }
        let mut duplicate_rows = Vec::new();
        for a in 0..rows.batch() {
            for b in a + 1..rows.batch() {
                if rows.sample(a) == rows.sample(b) {
                    duplicate_rows.push((a, b));
                }
            }
        }
        Ok(EmbeddingTable { rows, duplicate_rows })
    }

    pub fn num_classes(&self) -> usize {
        self.rows.batch()
    }

    pub fn dim(&self) -> usize {
        self.rows.shape()[1]
    }

    pub fn rows(&self) -> &Tensor {
        &self.rows
    }

    /// Stacks the embedding rows of `labels`.
    pub fn gather(&self, labels: &Tensor) -> Result<Tensor> {
        let mut data = Vec::with_capacity(labels.len() * self.dim());
        for &l in labels.data() {
            if l < 0.0 || l.fract() != 0.0 || l >= self.num_classes() as f64 {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    classes: self.num_classes(),
                });
            }
            data.extend_from_slice(self.rows.sample(l as usize));
        }
        Tensor::new(vec![labels.len(), self.dim()], data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricKind {
    Fss,
    Rs,
    Dcor,
    Pdcor,
}

/// Per-batch values of one metric and their mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: MetricKind,
    pub layer: String,
    pub per_batch: Vec<f64>,
    pub mean: f64,
    /// Batches whose value is 0 only because one side has no distance
    /// variance.
    pub degenerate_batches: Vec<usize>,
    pub manifest_digests: Vec<String>,
}

impl MetricReport {
    pub fn from_batches(
        metric: MetricKind,
        layer: impl Into<String>,
        per_batch: Vec<f64>,
        degenerate_batches: Vec<usize>,
    ) -> Result<Self> {
        if per_batch.is_empty() {
            return Err(Error::InvalidArgument("a report needs at least one batch".into()));
        }
        let mean = per_batch.iter().sum::<f64>() / per_batch.len() as f64;
        Ok(MetricReport {
            metric,
            layer: layer.into(),
            per_batch,
            mean,
            degenerate_batches,
            manifest_digests: Vec::new(),
        })
    }
}

/// Masks an image `[c, h, w]` with one normalized heatmap `[h, w]`,
/// broadcasting over channels.
pub fn perturb(image: &Tensor, heat: &Heatmap, index: usize) -> Result<Tensor> {
    if !heat.is_normalized() {
        return Err(Error::Unnormalized("postprocess heatmaps before masking images".into()));
    }
    if image.rank() != 3 {
        return Err(Error::Shape(format!(
            "image must be [c, h, w], got {:?}",
            image.shape()
        )));
    }
    if index >= heat.len() {
        return Err(Error::InvalidArgument(format!(
            "heatmap index {index} out of range for {} maps",
            heat.len()
        )));
    }
    let (c, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    if (h, w) != (heat.height(), heat.width()) {
        return Err(Error::ShapeMismatch(format!(
            "image is {h}x{w} but heatmap is {}x{}",
            heat.height(),
            heat.width()
        )));
    }
    let map = heat.map(index);
    let data = image
        .data()
        .chunks_exact(h * w)
        .take(c)
        .flat_map(|plane| plane.iter().zip(map).map(|(v, m)| v * m))
        .collect();
    Tensor::new(image.shape().to_vec(), data)
}

/// Masks every image in `[n, c, h, w]` with its own heatmap.
pub fn perturb_batch(images: &Tensor, heats: &Heatmap) -> Result<Tensor> {
    if images.rank() != 4 {
        return Err(Error::Shape(format!(
            "images must be [n, c, h, w], got {:?}",
            images.shape()
        )));
    }
    if images.batch() != heats.len() {
        return Err(Error::BatchMismatch {
            left: images.batch(),
            right: heats.len(),
        });
    }
    let per_image = images.shape()[1..].to_vec();
    let mut out = Vec::with_capacity(images.len());
    for i in 0..images.batch() {
        let img = Tensor::new(per_image.clone(), images.sample(i).to_vec())?;
        out.extend(perturb(&img, heats, i)?.into_data());
    }
    Tensor::new(images.shape().to_vec(), out)
}

/// A deterministic map from one image `[c, h, w]` to a feature vector.
pub trait FeatureExtractor {
    fn features(&self, image: &Tensor) -> Result<Vec<f64>>;
}

/// Where perturbed-image features come from: a live extractor, or features
/// computed elsewhere and loaded from disk.
pub enum FeatureSource<'a> {
    Model(&'a dyn FeatureExtractor),
    Precomputed(Tensor),
}

/// Features of the masked images, one row per image.
pub fn extract_features(source: Option<FeatureSource<'_>>, images: &Tensor, heats: &Heatmap) -> Result<Tensor> {
    match source {
        None => Err(Error::NoFeatureSource(
            "neither a feature extractor nor precomputed features were supplied".into(),
        )),
        Some(FeatureSource::Precomputed(t)) => {
            if t.batch() != images.batch() {
                return Err(Error::BatchMismatch {
                    left: t.batch(),
                    right: images.batch(),
                });
            }
            if t.rank() == 1 {
                t.reshape(vec![images.batch(), 1])
            } else {
                t.flatten_batch()
            }
        }
        Some(FeatureSource::Model(model)) => {
            let masked = perturb_batch(images, heats)?;
            let per_image = masked.shape()[1..].to_vec();
            let mut rows = Vec::new();
            let mut dim = None;
            for i in 0..masked.batch() {
                let f = model.features(&Tensor::new(per_image.clone(), masked.sample(i).to_vec())?)?;
                match dim {
                    None => dim = Some(f.len()),
                    Some(d) if d != f.len() => {
                        return Err(Error::ShapeMismatch(format!(
                            "extractor returned {} then {d} features",
                            f.len()
                        )))
                    }
                    _ => {}
                }
                rows.extend(f);
            }
            Tensor::new(vec![masked.batch(), dim.unwrap_or(0)], rows)
        }
    }
}

fn check_batches(a: &[Tensor], b_len: usize) -> Result<()> {
    if a.is_empty() {
        return Err(Error::InvalidArgument("at least one batch is required".into()));
    }
    if a.len() != b_len {
        return Err(Error::InvalidArgument(format!(
            "{} batches vs {b_len} batches",
            a.len()
        )));
    }
    Ok(())
}

/// Feature Similarity Score: mean over batches of the squared distance
/// correlation between student and base features.
pub fn fss(student_feats: &[Tensor], base_feats: &[Tensor]) -> Result<MetricReport> {
    check_batches(student_feats, base_feats.len())?;
    let mut values = Vec::with_capacity(student_feats.len());
    let mut degenerate = Vec::new();
    for (j, (s, b)) in student_feats.iter().zip(base_feats).enumerate() {
        let stats = dcor_stats(s, b).map_err(|e| batch_error(j, e))?;
        if stats.degenerate {
            degenerate.push(j);
        }
        values.push(stats.dcor2);
    }
    MetricReport::from_batches(MetricKind::Fss, "", values, degenerate)
}

/// Relevance Score: mean over batches of the squared distance correlation
/// between features and the embeddings of their labels.
pub fn rs(feats: &[Tensor], labels: &[Tensor], table: &EmbeddingTable) -> Result<MetricReport> {
    check_batches(feats, labels.len())?;
    let mut values = Vec::with_capacity(feats.len());
    let mut degenerate = Vec::new();
    for (j, (f, l)) in feats.iter().zip(labels).enumerate() {
        if l.rank() != 1 {
            return Err(batch_error(
                j,
                Error::Shape(format!("labels must be 1-D, got {:?}", l.shape())),
            ));
        }
        let gt = table.gather(l).map_err(|e| batch_error(j, e))?;
        let stats = dcor_stats(f, &gt).map_err(|e| batch_error(j, e))?;
        if stats.degenerate {
            degenerate.push(j);
        }
        values.push(stats.dcor2);
    }
    MetricReport::from_batches(MetricKind::Rs, "", values, degenerate)
}

/// Per-batch squared distance correlation between two feature sets.
pub fn dcor_report(xs: &[Tensor], ys: &[Tensor]) -> Result<MetricReport> {
    let mut r = fss(xs, ys)?;
    r.metric = MetricKind::Dcor;
    Ok(r)
}

/// Per-batch squared partial distance correlation.
pub fn pdcor_report(xs: &[Tensor], ys: &[Tensor], zs: &[Tensor]) -> Result<MetricReport> {
    check_batches(xs, ys.len())?;
    check_batches(xs, zs.len())?;
    let values = xs
        .iter()
        .zip(ys)
        .zip(zs)
        .enumerate()
        .map(|(j, ((x, y), z))| pdcor2(x, y, z).map_err(|e| batch_error(j, e)))
        .collect::<Result<Vec<_>>>()?;
    MetricReport::from_batches(MetricKind::Pdcor, "", values, Vec::new())
}

fn batch_error(j: usize, e: Error) -> Error {
    Error::InvalidArgument(format!("batch {j}: {e}"))
}
