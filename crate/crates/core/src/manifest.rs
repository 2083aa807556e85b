//! Batch manifests: a JSON list of per-batch tensor files for one layer.
//!
//! ```json
//! {"layer": "L4", "entries": [{"acts": "b0_acts.npy", "grads": "b0_grads.npy", "labels": null}]}
//! ```
//!
//! Paths are resolved relative to the directory holding the manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cam::ActivationBundle;
use crate::error::{Error, Result};
use crate::json;
use crate::npy::{self, read_header};
use crate::tensor::Tensor;

/// On-disk form of a manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFile {
    pub layer: String,
    pub entries: Vec<EntryFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryFile {
    pub acts: String,
    #[serde(default)]
    pub grads: Option<String>,
    #[serde(default)]
    pub labels: Option<String>,
}

impl ManifestFile {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, json::to_canonical_string(self)?).map_err(|e| Error::from(e).in_file(path))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub acts: PathBuf,
    pub grads: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Leading-axis length of the activations.
    pub batch: usize,
}

/// A validated manifest whose referenced files all exist and agree in shape.
#[derive(Debug, Clone)]
pub struct BatchManifest {
    pub path: PathBuf,
    pub layer: String,
    pub entries: Vec<ManifestEntry>,
    /// Per-sample activation shape shared by all entries.
    pub sample_shape: Vec<usize>,
    /// Non-fatal findings, e.g. batches too small for U-centering.
    pub warnings: Vec<String>,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<BatchManifest> {
    let path = path.as_ref();
    load_inner(path).map_err(|e| e.in_file(path))
}

fn load_inner(path: &Path) -> Result<BatchManifest> {
    let text = std::fs::read_to_string(path)?;
    let raw: ManifestFile =
        serde_json::from_str(&text).map_err(|e| Error::Manifest(format!("schema violation: {e}")))?;
    if raw.entries.is_empty() {
        return Err(Error::Manifest("manifest lists no entries".into()));
    }
    let dir = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &str| dir.join(p);

    let mut entries = Vec::with_capacity(raw.entries.len());
    let mut sample_shape: Option<Vec<usize>> = None;
    let mut warnings = Vec::new();
    for (idx, e) in raw.entries.iter().enumerate() {
        let acts = resolve(&e.acts);
        let h = read_header(&acts)?;
        let batch = h.shape[0];
        let per_sample = h.shape[1..].to_vec();
        match &sample_shape {
            None => sample_shape = Some(per_sample.clone()),
            Some(s) if *s != per_sample => {
                return Err(Error::Manifest(format!(
                    "entry {idx}: per-sample shape {per_sample:?} differs from {s:?} of entry 0"
                )))
            }
            _ => {}
        }
        let grads = e.grads.as_deref().map(resolve);
        if let Some(g) = &grads {
            let gh = read_header(g)?;
            if gh.shape != h.shape {
                return Err(Error::Manifest(format!(
                    "entry {idx}: grads shape {:?} differs from acts shape {:?}",
                    gh.shape, h.shape
                )));
            }
        }
        let labels = e.labels.as_deref().map(resolve);
        if let Some(l) = &labels {
            let lh = read_header(l)?;
            if lh.shape != [batch] {
                return Err(Error::Manifest(format!(
                    "entry {idx}: labels shape {:?}, expected [{batch}]",
                    lh.shape
                )));
            }
        }
        if batch < 4 {
            warnings.push(format!(
                "entry {idx}: batch size {batch} is below 4; U-centered operations will reject it"
            ));
        }
        entries.push(ManifestEntry {
            acts,
            grads,
            labels,
            batch,
        });
    }

    Ok(BatchManifest {
        path: path.to_path_buf(),
        layer: raw.layer,
        entries,
        sample_shape: sample_shape.unwrap_or_default(),
        warnings,
    })
}

impl BatchManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_acts(&self, i: usize) -> Result<Tensor> {
        npy::load_tensor(&self.entries[i].acts)
    }

    pub fn load_labels(&self, i: usize) -> Result<Option<Tensor>> {
        self.entries[i].labels.as_ref().map(npy::load_tensor).transpose()
    }

    pub fn load_bundle(&self, i: usize) -> Result<ActivationBundle> {
        let e = &self.entries[i];
        let acts = npy::load_tensor(&e.acts)?;
        let grads = e.grads.as_ref().map(npy::load_tensor).transpose()?;
        let labels = self.load_labels(i)?;
        ActivationBundle::new(self.layer.clone(), acts, grads, labels)
    }

    /// Every file the manifest references, in entry order.
    pub fn files(&self) -> Vec<&Path> {
        self.entries
            .iter()
            .flat_map(|e| {
                std::iter::once(e.acts.as_path())
                    .chain(e.grads.as_deref())
                    .chain(e.labels.as_deref())
            })
            .collect()
    }
}
