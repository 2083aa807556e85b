use std::path::Path;

use serde::Serialize;

use super::rng::SplitMix;
use super::toynet::{ToyNet, CONV1_CHANNELS, CONV2_CHANNELS};
use crate::cam::{grad_cam, unicam, ActivationBundle, Heatmap, Mode};
use crate::error::{Error, Result};
use crate::json;
use crate::manifest::{EntryFile, ManifestFile};
use crate::metrics::EmbeddingTable;
use crate::npy::write_tensor;
use crate::tensor::Tensor;

pub const IMAGE_SIZE: usize = 16;
pub const FIXTURE_LAYER: &str = "conv2";
const CLASSES: usize = 2;
const EMBED_DIM: usize = 8;
/// Column of the planted vertical line.
const EDGE_COL: usize = 12;
/// Columns covered by the region mask.
const MASK_COLS: std::ops::RangeInclusive<usize> = 11..=13;
/// Index of the conv2 channel that only the student uses.
const EDGE_CHANNEL: usize = CONV2_CHANNELS - 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub n: usize,
    /// Gain of the student's extra line-detector kernel; 0 makes the
    /// student identical to the base model.
    pub edge_gain: f64,
}

impl FixtureConfig {
    pub fn new(seed: u64, n: usize) -> Self {
        FixtureConfig {
            seed,
            n,
            edge_gain: 1.0,
        }
    }
}

/// Synthetic student/base pair and one batch of their layer recordings.
///
/// Images hold a blob near the centre and a vertical zero-mean ridge in the
/// right half.
/// The base network responds to intensity; the student is the same network
/// plus one conv2 kernel that detects vertical lines.
#[derive(Debug, Clone)]
pub struct FixtureSet {
    pub config: FixtureConfig,
    /// `[n, 1, 16, 16]`.
    pub images: Tensor,
    pub labels: Tensor,
    pub student_net: ToyNet,
    pub base_net: ToyNet,
    pub student: ActivationBundle,
    pub base: ActivationBundle,
    pub table: EmbeddingTable,
    /// `[n, 16, 16]`, 1 on the band around the planted line.
    pub region_mask: Tensor,
}

pub fn gen_fixtures(seed: u64, n: usize) -> Result<FixtureSet> {
    gen_fixtures_with(FixtureConfig::new(seed, n))
}

pub fn gen_fixtures_with(config: FixtureConfig) -> Result<FixtureSet> {
    if config.n < 8 {
        return Err(Error::InvalidArgument(format!(
            "fixtures need n >= 8, got {}",
            config.n
        )));
    }
    let mut rng = SplitMix::new(config.seed);
    let base_net = base_network(&mut rng);
    let student_net = with_line_detector(&base_net, config.edge_gain);

    let n = config.n;
    let px = IMAGE_SIZE * IMAGE_SIZE;
    let mut images = Vec::with_capacity(n * px);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let label = i % CLASSES;
        images.extend(draw_image(&mut rng, label));
        labels.push(label as f64);
    }
    let images = Tensor::new(vec![n, 1, IMAGE_SIZE, IMAGE_SIZE], images)?;
    let labels = Tensor::new(vec![n], labels)?;

    let table_rows = (0..CLASSES * EMBED_DIM).map(|_| rng.range(-1.0, 1.0)).collect();
    let table = EmbeddingTable::new(Tensor::new(vec![CLASSES, EMBED_DIM], table_rows)?)?;

    let student = record(&student_net, &images, &labels)?;
    let base = record(&base_net, &images, &labels)?;

    let mask_map: Vec<f64> = (0..px)
        .map(|p| {
            if MASK_COLS.contains(&(p % IMAGE_SIZE)) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let region_mask = Tensor::new(vec![n, IMAGE_SIZE, IMAGE_SIZE], mask_map.repeat(n))?;

    Ok(FixtureSet {
        config,
        images,
        labels,
        student_net,
        base_net,
        student,
        base,
        table,
        region_mask,
    })
}

/// Intensity-only network: conv1 passes the image through (channel 0) and
/// box-smooths it (channels 1..4); conv2's first seven kernels box-smooth the
/// smoothed channels again. A zero-mean ridge nearly cancels under these
/// filters, so only the blob drives the base model.
fn base_network(rng: &mut SplitMix) -> ToyNet {
    let mut conv1_w = vec![0.0; CONV1_CHANNELS * 9];
    conv1_w[4] = 1.0;
    for c in 1..CONV1_CHANNELS {
        let gain = rng.range(0.5, 1.5);
        conv1_w[c * 9..(c + 1) * 9].iter_mut().for_each(|v| *v = gain / 9.0);
    }
    let mut conv2_w = vec![0.0; CONV2_CHANNELS * CONV1_CHANNELS * 9];
    let mut conv2_b = vec![0.0; CONV2_CHANNELS];
    for (k, bias) in conv2_b.iter_mut().enumerate().take(EDGE_CHANNEL) {
        for c in 1..CONV1_CHANNELS {
            let gain = rng.range(0.1, 0.5);
            let start = (k * CONV1_CHANNELS + c) * 9;
            conv2_w[start..start + 9].iter_mut().for_each(|v| *v = gain / 9.0);
        }
        *bias = rng.range(-0.05, 0.0);
    }
    let mut head_w = vec![0.0; CLASSES * CONV2_CHANNELS];
    for c in 0..CLASSES {
        for k in 0..CONV2_CHANNELS {
            head_w[c * CONV2_CHANNELS + k] = if k == EDGE_CHANNEL { 0.8 } else { rng.range(0.2, 1.0) };
        }
    }
    ToyNet {
        in_channels: 1,
        classes: CLASSES,
        conv1_w,
        conv1_b: vec![0.0; CONV1_CHANNELS],
        conv2_w,
        conv2_b,
        head_w,
        head_b: vec![0.0; CLASSES],
    }
}

/// Base network plus a `[-1, 2, -1]` column profile on conv1's pass-through
/// channel, written into the otherwise unused last conv2 kernel.
fn with_line_detector(base: &ToyNet, gain: f64) -> ToyNet {
    let mut net = base.clone();
    let start = EDGE_CHANNEL * CONV1_CHANNELS * 9;
    for ky in 0..3 {
        for (kx, v) in [-1.0, 2.0, -1.0].iter().enumerate() {
            net.conv2_w[start + ky * 3 + kx] = gain * 0.5 * v;
        }
    }
    net
}

fn draw_image(rng: &mut SplitMix, label: usize) -> Vec<f64> {
    let amp = rng.range(0.78, 0.82);
    let radius = rng.range(3.7, 3.8);
    let cy = 7.5 + rng.range(-0.1, 0.1);
    let cx = 6.0 + rng.range(-0.1, 0.1);
    let line = if label == 1 {
        rng.range(0.8, 1.2)
    } else {
        rng.range(0.2, 0.5)
    };
    let mut img = vec![0.0; IMAGE_SIZE * IMAGE_SIZE];
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let dy = y as f64 - cy;
            let dx = x as f64 - cx;
            let t = 1.0 - (dy * dy + dx * dx) / (radius * radius);
            let blob = if t > 0.0 { amp * t * t } else { 0.0 };
            let ridge = if (2..IMAGE_SIZE - 2).contains(&y) {
                match x {
                    EDGE_COL => line,
                    c if c + 1 == EDGE_COL || c == EDGE_COL + 1 => -0.5 * line,
                    _ => 0.0,
                }
            } else {
                0.0
            };
            img[y * IMAGE_SIZE + x] = blob + ridge + rng.range(-0.005, 0.005);
        }
    }
    img
}

fn record(net: &ToyNet, images: &Tensor, labels: &Tensor) -> Result<ActivationBundle> {
    let n = images.batch();
    let per_image = images.shape()[1..].to_vec();
    let mut acts = Vec::new();
    let mut grads = Vec::new();
    for i in 0..n {
        let img = Tensor::new(per_image.clone(), images.sample(i).to_vec())?;
        let (a, g) = net.layer_and_class_grad(&img, labels.data()[i] as usize)?;
        acts.extend(a);
        grads.extend(g);
    }
    let shape = vec![n, CONV2_CHANNELS, IMAGE_SIZE, IMAGE_SIZE];
    ActivationBundle::new(
        FIXTURE_LAYER,
        Tensor::new(shape.clone(), acts)?,
        Some(Tensor::new(shape, grads)?),
        Some(labels.clone()),
    )
}

/// Mean over samples of the share of squared map mass inside the mask.
/// Samples whose map is identically zero are skipped; the result is 0 when
/// every map is zero.
pub fn in_mask_fraction(h: &Heatmap, mask: &Tensor) -> Result<f64> {
    if mask.shape() != h.maps().shape() {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} vs maps {:?}",
            mask.shape(),
            h.maps().shape()
        )));
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for i in 0..h.len() {
        let total: f64 = h.map(i).iter().map(|v| v * v).sum();
        if total == 0.0 {
            continue;
        }
        let inside: f64 = h.map(i).iter().zip(mask.sample(i)).map(|(v, m)| m * v * v).sum();
        sum += inside / total;
        counted += 1;
    }
    Ok(if counted == 0 { 0.0 } else { sum / counted as f64 })
}

/// In-mask energy fractions of the student's Grad-CAM map and of the
/// distilled and residual UniCAM maps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioMargins {
    pub gradcam_fraction: f64,
    pub distilled_fraction: f64,
    pub residual_fraction: f64,
    /// `distilled_fraction - gradcam_fraction`.
    pub distilled_over_gradcam: f64,
    /// `distilled_fraction - residual_fraction`.
    pub distilled_over_residual: f64,
}

pub fn measure_scenario(fx: &FixtureSet, eps: f64) -> Result<ScenarioMargins> {
    let student_grads = fx.student.grads().ok_or(Error::MissingGrads("student"))?;
    let gradcam = grad_cam(fx.student.acts(), student_grads)?;
    let distilled = unicam(&fx.student, &fx.base, Mode::Distilled, eps)?.heatmap;
    let residual = unicam(&fx.student, &fx.base, Mode::Residual, eps)?.heatmap;
    let gradcam_fraction = in_mask_fraction(&gradcam, &fx.region_mask)?;
    let distilled_fraction = in_mask_fraction(&distilled, &fx.region_mask)?;
    let residual_fraction = in_mask_fraction(&residual, &fx.region_mask)?;
    Ok(ScenarioMargins {
        gradcam_fraction,
        distilled_fraction,
        residual_fraction,
        distilled_over_gradcam: distilled_fraction - gradcam_fraction,
        distilled_over_residual: distilled_fraction - residual_fraction,
    })
}

#[derive(Serialize)]
struct ScenarioFile {
    seed: u64,
    n: usize,
    eps: f64,
    layer: &'static str,
    margins: Vec<ScenarioMargins>,
}

/// Writes fixture batches as NPY tensors plus `student.json`, `base.json`
/// and `scenario.json` into `dir`.
///
/// Batch `b` uses files prefixed `b{b}_`. Images, masks and the shared
/// embedding table (`table.npy`, from the first batch) sit alongside.
pub fn write_fixture_files(sets: &[FixtureSet], eps: f64, dir: &Path) -> Result<()> {
    let first = sets
        .first()
        .ok_or_else(|| Error::InvalidArgument("no fixture batches to write".into()))?;
    std::fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
    let mut student_entries = Vec::new();
    let mut base_entries = Vec::new();
    let mut margins = Vec::new();
    for (b, fx) in sets.iter().enumerate() {
        let p = |name: &str| format!("b{b}_{name}.npy");
        write_tensor(&fx.images, dir.join(p("images")))?;
        write_tensor(&fx.region_mask, dir.join(p("region_mask")))?;
        write_tensor(&fx.labels, dir.join(p("labels")))?;
        for (side, bundle, entries) in [
            ("student", &fx.student, &mut student_entries),
            ("base", &fx.base, &mut base_entries),
        ] {
            write_tensor(bundle.acts(), dir.join(p(&format!("{side}_acts"))))?;
            let grads =
                bundle
                    .grads()
                    .ok_or(Error::MissingGrads(if side == "student" { "student" } else { "base" }))?;
            write_tensor(grads, dir.join(p(&format!("{side}_grads"))))?;
            entries.push(EntryFile {
                acts: p(&format!("{side}_acts")),
                grads: Some(p(&format!("{side}_grads"))),
                labels: Some(p("labels")),
            });
        }
        margins.push(measure_scenario(fx, eps)?);
    }
    write_tensor(first.table.rows(), dir.join("table.npy"))?;
    for (name, entries) in [("student.json", student_entries), ("base.json", base_entries)] {
        ManifestFile {
            layer: FIXTURE_LAYER.into(),
            entries,
        }
        .save(dir.join(name))?;
    }
    let scenario = ScenarioFile {
        seed: first.config.seed,
        n: first.config.n,
        eps,
        layer: FIXTURE_LAYER,
        margins,
    };
    let path = dir.join("scenario.json");
    std::fs::write(&path, json::to_canonical_string(&scenario)?).map_err(|e| Error::from(e).in_file(&path))
}
