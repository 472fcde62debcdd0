use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("score list is empty")]
    EmptyScores,
    #[error("non-finite value in {field} at row {row}")]
    NonFinite { field: &'static str, row: usize },
    #[error("{field} must be non-negative, got {value}")]
    NegativeValue { field: &'static str, value: f64 },
    #[error("row {row}: duplicate (probe_id, gallery_subject_id, algorithm) = ({probe_id}, {gallery_subject_id}, {algorithm})")]
    DuplicateTriple {
        row: usize,
        probe_id: String,
        gallery_subject_id: String,
        algorithm: String,
    },
    #[error("row {row}: genuine label disagrees with probe and gallery subject ids")]
    LabelMismatch { row: usize },
    #[error(
        "row {row}: metadata for probe {probe_id} differs from an earlier row of the same probe"
    )]
    InconsistentProbe { row: usize, probe_id: String },

    #[error("target FAR {target_far} is outside (0, 1)")]
    InvalidFar { target_far: f64 },
    #[error("insufficient impostor support: target FAR {target_far} needs at least {needed} impostor scores, have {available}")]
    InsufficientImpostorSupport {
        target_far: f64,
        needed: u64,
        available: usize,
    },
    #[error("FAR grid must be ascending")]
    UnsortedGrid,

    #[error("anchor scores have zero variance; cannot fit a tail line")]
    DegenerateFit,
    #[error("fitted slope {slope} is not negative; higher scores must mean stronger matches")]
    Orientation { slope: f64 },
    #[error("only {resolvable} resolvable anchors, at least {required} required")]
    TooFewAnchors { resolvable: usize, required: usize },
    #[error("algorithm {algorithm}: {source}")]
    Algorithm {
        algorithm: String,
        #[source]
        source: Box<Error>,
    },
    #[error("no normalization map for algorithm {0}")]
    MissingMap(String),

    #[error("{covariate}: value {value} falls outside every bin")]
    OutOfRange { covariate: String, value: f64 },
    #[error("{0} is missing")]
    MissingValue(&'static str),
    #[error("group key component is empty")]
    EmptyGroupComponent,
    #[error("unknown covariate {0:?}")]
    UnknownCovariate(String),
    #[error("covariate {covariate:?} has no level {level:?}")]
    UnknownLevel { covariate: String, level: String },
    #[error("probe {probe_id}: {reason}")]
    Unbinnable {
        probe_id: String,
        reason: Box<Error>,
    },
    #[error("invalid covariate spec: {0}")]
    InvalidSpec(String),

    #[error("design is rank deficient; dependent columns: {}", columns.join(", "))]
    RankDeficient { columns: Vec<String> },
    #[error("need at least 2 groups, found {0}")]
    TooFewGroups(usize),
    #[error("{n} observations cannot support {p} fixed-effect columns")]
    TooFewObservations { n: usize, p: usize },
    #[error("restricted log-likelihood is not finite at theta = {theta}")]
    NonFiniteLikelihood { theta: f64 },
    #[error("theta must be finite and non-negative, got {0}")]
    InvalidTheta(f64),
    #[error("model did not converge")]
    NotConverged,
    #[error("coefficient {0} has zero standard error")]
    ZeroStandardError(String),
    #[error("confidence level {0} is outside (0, 1)")]
    InvalidConfidence(f64),

    #[error("coefficient list has no intercept")]
    MissingIntercept,

    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
}

impl Error {
    /// Numerical failures (as opposed to invalid input).
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::DegenerateFit
            | Error::Orientation { .. }
            | Error::RankDeficient { .. }
            | Error::NonFiniteLikelihood { .. }
            | Error::NotConverged
            | Error::ZeroStandardError(_) => true,
            Error::Algorithm { source, .. } | Error::Unbinnable { reason: source, .. } => {
                source.is_numerical()
            }
            _ => false,
        }
    }

    pub(crate) fn for_algorithm(self, algorithm: &str) -> Error {
        Error::Algorithm {
            algorithm: algorithm.into(),
            source: Box::new(self),
        }
    }
}
