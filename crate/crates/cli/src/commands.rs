use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use unicam_core::cam::{self, grad_cam, postprocess, Heatmap, Mode};
use unicam_core::distcorr::{dcor_stats, pdcor2};
use unicam_core::manifest::{load_manifest, BatchManifest};
use unicam_core::metrics::{self, EmbeddingTable, MetricReport};
use unicam_core::npy::{load_tensor, write_tensor};
use unicam_core::testkit::{gen_fixtures, write_fixture_files};
use unicam_core::Tensor;

use crate::error::CliError;
use crate::render;
use crate::report::{check_output, digests, emit, sha256_file};

pub struct Context {
    pub timestamp: bool,
}

pub struct MapOptions {
    pub out: PathBuf,
    pub render: Option<PathBuf>,
    pub resize: Option<(usize, usize)>,
    pub report: Option<PathBuf>,
}

/// Attributes a per-entry failure to the manifest it came from, unless the
/// error already names a file.
fn at_entry(e: unicam_core::Error, manifest: &Path, i: usize) -> CliError {
    match e {
        unicam_core::Error::File { .. } => CliError::Core(e),
        e if e.is_internal() => CliError::Core(e),
        e => CliError::input(manifest, format!("entry {i}: {e}")),
    }
}

fn load(path: &Path) -> Result<BatchManifest, CliError> {
    let m = load_manifest(path)?;
    for w in &m.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(m)
}

fn check_eps(eps: f64) -> Result<(), CliError> {
    if eps >= 0.0 && eps.is_finite() {
        Ok(())
    } else {
        Err(unicam_core::Error::InvalidArgument(format!("--eps must be finite and >= 0, got {eps}")).into())
    }
}

fn paired(a: &BatchManifest, b: &BatchManifest) -> Result<(), CliError> {
    if a.len() != b.len() {
        return Err(CliError::input(
            &b.path,
            format!("has {} entries but {} has {}", b.len(), a.path.display(), a.len()),
        ));
    }
    Ok(())
}

/// Manifest files named relative to the manifest's directory, so reports do
/// not depend on where the data lives.
fn manifest_inputs(m: &BatchManifest) -> Result<Value, CliError> {
    let dir = m.path.parent().unwrap_or(Path::new(""));
    let mut out = Vec::new();
    for f in m.files() {
        let name = f.strip_prefix(dir).unwrap_or(f);
        out.push(json!({ "file": name.display().to_string(), "sha256": sha256_file(f)? }));
    }
    Ok(Value::Array(out))
}

fn write_npy(t: &Tensor, path: &Path) -> Result<(), CliError> {
    write_tensor(t, path).map_err(CliError::from)
}

pub fn dcor(ctx: &Context, x: &Path, y: &Path, sqrt: bool, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(o) = out {
        check_output(o)?;
    }
    let tx = load_tensor(x)?;
    let ty = load_tensor(y)?;
    let stats = dcor_stats(&tx, &ty).map_err(|e| CliError::input(y, format!("against {}: {e}", x.display())))?;
    let mut report = json!({
        "dcor2": stats.dcor2,
        "dcov2": stats.dcov2,
        "dvar2_x": stats.dvar2_x,
        "dvar2_y": stats.dvar2_y,
        "degenerate": stats.degenerate,
        "input_digests": digests([x, y])?,
    });
    if sqrt {
        report["dcor"] = json!(stats.dcor2.sqrt());
    }
    emit(report, ctx.timestamp, out)
}

pub fn pdcor(ctx: &Context, x: &Path, y: &Path, z: &Path, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(o) = out {
        check_output(o)?;
    }
    let (tx, ty, tz) = (load_tensor(x)?, load_tensor(y)?, load_tensor(z)?);
    let v = pdcor2(&tx, &ty, &tz).map_err(|e| CliError::input(x, e.to_string()))?;
    let report = json!({ "pdcor2": v, "input_digests": digests([x, y, z])? });
    emit(report, ctx.timestamp, out)
}

/// Writes maps (optionally resized and normalized), renders and returns the
/// report fragment describing them.
fn write_maps(heatmaps: Vec<Heatmap>, opts: &MapOptions) -> Result<Value, CliError> {
    let shaped: Vec<Heatmap> = match opts.resize {
        Some((h, w)) => heatmaps
            .par_iter()
            .map(|m| postprocess(m, h, w))
            .collect::<Result<_, _>>()?,
        None => heatmaps,
    };
    let parts: Vec<Tensor> = shaped.iter().map(|h| h.maps().clone()).collect();
    let all = Tensor::concat(&parts)?;
    write_npy(&all, &opts.out)?;
    if let Some(dir) = &opts.render {
        let normalized: Vec<Heatmap> = shaped
            .par_iter()
            .map(|m| {
                if m.is_normalized() {
                    Ok(m.clone())
                } else {
                    postprocess(m, m.height(), m.width())
                }
            })
            .collect::<Result<_, _>>()?;
        let parts: Vec<Tensor> = normalized.into_iter().map(Heatmap::into_tensor).collect();
        let flat = Tensor::concat(&parts)?;
        let s = flat.shape();
        render::write_all(dir, flat.data(), s[0], s[1], s[2])?;
    }
    Ok(json!({
        "shape": all.shape(),
        "normalized": opts.resize.is_some(),
        "sha256": sha256_file(&opts.out)?,
    }))
}

fn check_map_outputs(opts: &MapOptions) -> Result<(), CliError> {
    check_output(&opts.out)?;
    if let Some(r) = &opts.report {
        check_output(r)?;
    }
    if let Some((h, w)) = opts.resize {
        if h == 0 || w == 0 {
            return Err(unicam_core::Error::InvalidArgument(format!("--resize {h} {w}: sizes must be >= 1")).into());
        }
    }
    Ok(())
}

pub fn unicam(
    ctx: &Context,
    student: &Path,
    base: &Path,
    mode: Mode,
    eps: f64,
    opts: &MapOptions,
) -> Result<(), CliError> {
    check_map_outputs(opts)?;
    check_eps(eps)?;
    let sm = load(student)?;
    let bm = load(base)?;
    paired(&sm, &bm)?;
    let mapped_manifest = match mode {
        Mode::Distilled => &sm.path,
        Mode::Residual => &bm.path,
    };
    let outputs: Vec<cam::UnicamOutput> = (0..sm.len())
        .into_par_iter()
        .map(|i| {
            let s = sm.load_bundle(i)?;
            let b = bm.load_bundle(i)?;
            cam::unicam(&s, &b, mode, eps).map_err(|e| at_entry(e, mapped_manifest, i))
        })
        .collect::<Result<_, CliError>>()?;
    let batches: Vec<Value> = outputs
        .iter()
        .map(|o| {
            json!({
                "coef": o.decomposition.coef,
                "total_energy": o.decomposition.total_energy,
                "sample_energy": o.decomposition.sample_energy,
            })
        })
        .collect();
    let maps = write_maps(outputs.into_iter().map(|o| o.heatmap).collect(), opts)?;
    let report = json!({
        "command": "unicam",
        "mode": match mode { Mode::Distilled => "distilled", Mode::Residual => "residual" },
        "eps": eps,
        "layer": sm.layer,
        "batches": batches,
        "maps": maps,
        "manifest_digests": [sha256_file(&sm.path)?, sha256_file(&bm.path)?],
        "input_digests": { "student": manifest_inputs(&sm)?, "base": manifest_inputs(&bm)? },
    });
    emit(report, ctx.timestamp, opts.report.as_deref())
}

pub fn gradcam(ctx: &Context, manifest: &Path, opts: &MapOptions) -> Result<(), CliError> {
    check_map_outputs(opts)?;
    let m = load(manifest)?;
    let maps: Vec<Heatmap> = (0..m.len())
        .into_par_iter()
        .map(|i| {
            let b = m.load_bundle(i)?;
            let grads = b
                .grads()
                .ok_or_else(|| CliError::input(&m.path, format!("entry {i} has no grads")))?;
            grad_cam(b.acts(), grads).map_err(|e| at_entry(e, &m.path, i))
        })
        .collect::<Result<_, CliError>>()?;
    let maps = write_maps(maps, opts)?;
    let report = json!({
        "command": "gradcam",
        "layer": m.layer,
        "maps": maps,
        "manifest_digests": [sha256_file(&m.path)?],
        "input_digests": manifest_inputs(&m)?,
    });
    emit(report, ctx.timestamp, opts.report.as_deref())
}

/// Merges single-batch reports computed independently, in batch order.
fn merge(parts: Vec<MetricReport>, layer: &str) -> Result<MetricReport, CliError> {
    let metric = parts[0].metric;
    let mut per_batch = Vec::with_capacity(parts.len());
    let mut degenerate = Vec::new();
    for (j, p) in parts.into_iter().enumerate() {
        if !p.degenerate_batches.is_empty() {
            degenerate.push(j);
        }
        per_batch.extend(p.per_batch);
    }
    Ok(MetricReport::from_batches(metric, layer, per_batch, degenerate)?)
}

fn metric_json(report: MetricReport, feature_source: &str, inputs: Value) -> Result<Value, CliError> {
    let mut v = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    v["feature_source"] = json!(feature_source);
    v["input_digests"] = inputs;
    Ok(v)
}

fn features(m: &BatchManifest, i: usize) -> Result<Tensor, CliError> {
    let t = m.load_acts(i)?;
    let flat = if t.rank() == 1 {
        t.reshape(vec![m.entries[i].batch, 1])
    } else {
        t.flatten_batch()
    };
    flat.map_err(|e| at_entry(e, &m.path, i))
}

pub fn fss(ctx: &Context, student: &Path, base: &Path, source: &str, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(o) = out {
        check_output(o)?;
    }
    let sm = load(student)?;
    let bm = load(base)?;
    paired(&sm, &bm)?;
    let parts: Vec<MetricReport> = (0..sm.len())
        .into_par_iter()
        .map(|i| {
            let s = features(&sm, i)?;
            let b = features(&bm, i)?;
            metrics::fss(&[s], &[b]).map_err(|e| at_entry(e, &bm.path, i))
        })
        .collect::<Result<_, CliError>>()?;
    let mut report = merge(parts, &sm.layer)?;
    report.manifest_digests = vec![sha256_file(&sm.path)?, sha256_file(&bm.path)?];
    let inputs = json!({ "student": manifest_inputs(&sm)?, "base": manifest_inputs(&bm)? });
    emit(metric_json(report, source, inputs)?, ctx.timestamp, out)
}

pub fn rs(ctx: &Context, feats: &Path, table: &Path, source: &str, out: Option<&Path>) -> Result<(), CliError> {
    if let Some(o) = out {
        check_output(o)?;
    }
    let m = load(feats)?;
    let table_t = EmbeddingTable::new(load_tensor(table)?).map_err(|e| CliError::input(table, e.to_string()))?;
    for (a, b) in &table_t.duplicate_rows {
        eprintln!("warning: {}: classes {a} and {b} share an embedding", table.display());
    }
    let parts: Vec<MetricReport> = (0..m.len())
        .into_par_iter()
        .map(|i| {
            let f = features(&m, i)?;
            let labels = m
                .load_labels(i)?
                .ok_or_else(|| CliError::input(&m.path, format!("entry {i} has no labels")))?;
            metrics::rs(&[f], &[labels], &table_t).map_err(|e| at_entry(e, &m.path, i))
        })
        .collect::<Result<_, CliError>>()?;
    let mut report = merge(parts, &m.layer)?;
    report.manifest_digests = vec![sha256_file(&m.path)?];
    let inputs = json!({ "features": manifest_inputs(&m)?, "table": digests([table])? });
    emit(metric_json(report, source, inputs)?, ctx.timestamp, out)
}

pub fn perturb(images: &Path, heatmaps: &Path, out: &Path) -> Result<(), CliError> {
    check_output(out)?;
    let imgs = load_tensor(images)?;
    if imgs.rank() != 4 {
        return Err(CliError::input(
            images,
            format!("images must be [n, c, h, w], got {:?}", imgs.shape()),
        ));
    }
    let heats = Heatmap::detect(load_tensor(heatmaps)?).map_err(|e| CliError::input(heatmaps, e.to_string()))?;
    if !heats.is_normalized() {
        return Err(CliError::input(
            heatmaps,
            "heatmaps must be min-max normalized (values in [0, 1], each map's maximum 0 or 1)",
        ));
    }
    if heats.len() != imgs.batch() {
        return Err(CliError::input(
            heatmaps,
            format!(
                "{} maps for {} images in {}",
                heats.len(),
                imgs.batch(),
                images.display()
            ),
        ));
    }
    let per_image = imgs.shape()[1..].to_vec();
    let parts: Vec<Tensor> = (0..imgs.batch())
        .into_par_iter()
        .map(|i| {
            let img = Tensor::new(per_image.clone(), imgs.sample(i).to_vec())?;
            let masked = metrics::perturb(&img, &heats, i).map_err(|e| CliError::input(heatmaps, e.to_string()))?;
            let mut shape = vec![1];
            shape.extend_from_slice(masked.shape());
            Ok(masked.reshape(shape)?)
        })
        .collect::<Result<_, CliError>>()?;
    write_npy(&Tensor::concat(&parts)?, out)
}

pub fn fixtures(seed: u64, n: usize, batches: usize, eps: f64, out: &Path) -> Result<(), CliError> {
    check_eps(eps)?;
    let sets = (0..batches as u64)
        .into_par_iter()
        .map(|b| gen_fixtures(seed.wrapping_add(b), n))
        .collect::<Result<Vec<_>, _>>()?;
    write_fixture_files(&sets, eps, out)?;
    Ok(())
}

pub fn render(maps: &Path, out: &Path, normalize: bool) -> Result<(), CliError> {
    let t = load_tensor(maps)?;
    let h = Heatmap::detect(t).map_err(|e| CliError::input(maps, e.to_string()))?;
    let h = if normalize {
        postprocess(&h, h.height(), h.width())?
    } else if h.is_normalized() {
        h
    } else {
        return Err(CliError::input(
            maps,
            "maps are not normalized to [0, 1] with per-map maximum 0 or 1; pass --normalize",
        ));
    };
    render::write_all(out, h.maps().data(), h.len(), h.height(), h.width())
}
