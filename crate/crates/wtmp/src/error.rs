use thiserror::Error;

#[derive(Debug, Error)]
pub enum WtmpError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("{routine} did not converge after {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error("pencil size {q} outside admissible range ({lo}, {hi}) for {n_s} samples")]
    PencilBounds {
        q: usize,
        lo: usize,
        hi: usize,
        n_s: usize,
    },

    #[error("pencil matrix has numerical rank 0")]
    RankCollapse,

    #[error("transform diagonal entry {index} is zero and cannot be phase-normalized")]
    ZeroTransformEntry { index: usize },

    #[error("first entry of u1 is zero; transform row is undefined")]
    DegenerateU1,

    #[error("dictionary needs {atoms} atoms x {rows} rows, above the cap of {cap} entries")]
    DictionaryTooLarge { atoms: usize, rows: usize, cap: usize },

    #[error("dictionary is empty")]
    EmptyDictionary,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),
}

impl WtmpError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        WtmpError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Coarse class used by the CLI for exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            WtmpError::InvalidConfig(_) | WtmpError::PencilBounds { .. } => ErrorKind::Config,
            WtmpError::DictionaryTooLarge { .. } | WtmpError::EmptyDictionary => ErrorKind::Config,
            WtmpError::Io { .. } | WtmpError::Format(_) => ErrorKind::Io,
            _ => ErrorKind::Numerical,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Numerical,
    Io,
}

pub type Result<T> = std::result::Result<T, WtmpError>;
