use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed NPY file: {0}")]
    Npy(String),
    #[error("unsupported layout: Fortran-order arrays are not accepted")]
    FortranOrder,
    #[error("unsupported dtype {0:?}: expected '<f8' or '<f4'")]
    Dtype(String),
    #[error("non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("invalid shape: {0}")]
    Shape(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("batch size mismatch: {left} vs {right}")]
    BatchMismatch { left: usize, right: usize },
    #[error("{op} requires n >= {min}, got n = {got}")]
    TooFewSamples { op: &'static str, min: usize, got: usize },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("heatmap must be min-max normalized to [0, 1] before use: {0}")]
    Unnormalized(String),
    #[error("label {label} out of range for an embedding table with {classes} classes")]
    LabelOutOfRange { label: f64, classes: usize },
    #[error("{0} bundle carries no gradients")]
    MissingGrads(&'static str),
    #[error("no feature source: {0}")]
    NoFeatureSource(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite intermediate value in {0}")]
    Numerical(&'static str),
}

impl Error {
    /// Attach the offending file to an error.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Error {
        let path = path.into();
        match self {
            Error::File { path: p, source } if p == path => Error::File { path: p, source },
            e => Error::File {
                path,
                source: Box::new(e),
            },
        }
    }

    /// True for failures that are not caused by the caller's inputs.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::File { source, .. } => source.is_internal(),
            Error::Numerical(_) => true,
            _ => false,
        }
    }
}
