use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a metric space needs at least one point")]
    EmptySpace,
    #[error("distance ({i}, {j}) = {value} is not a finite nonnegative number")]
    InvalidDistance { i: usize, j: usize, value: f64 },
    #[error("expected {expected} table entries, found {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("diagonal entry {index} is {value}, expected 0")]
    NonzeroDiagonal { index: usize, value: f64 },
    #[error("asymmetric entries: d({i},{j}) = {forward} but d({j},{i}) = {backward}")]
    Asymmetric {
        i: usize,
        j: usize,
        forward: f64,
        backward: f64,
    },
    #[error("{found} labels given for {expected} points")]
    LabelCount { expected: usize, found: usize },
    #[error("subset is empty")]
    EmptySubset,
    #[error("point index {index} out of range for {len} points")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("product would have {size} points, above the cap of {cap}")]
    ProductTooLarge { size: usize, cap: usize },
    #[error("net spacing must be positive, got {0}")]
    NonPositiveSpacing(f64),
    #[error("exact packing is limited to {cap} points (got {n}); use greedy mode")]
    ExactTooLarge { n: usize, cap: usize },
    #[error("degenerate scale grid: lo={lo}, hi={hi}, count={count}")]
    DegenerateGrid { lo: f64, hi: f64, count: usize },
    #[error("scale grid must be sorted ascending")]
    UnsortedGrid,
    #[error("link radius must be positive, got {0}")]
    NonPositiveLinkRadius(f64),
    #[error("{what} map has {found} entries, expected {expected}")]
    MapLength {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("no ({k},δ)-strainer at point {point}: best margin {best_margin:.3e} ({binding})")]
    StrainerNotFound {
        point: usize,
        k: usize,
        best_margin: f64,
        binding: String,
    },
    #[error("no sample on the way from {base} to {target} at distance {distance} (net point {net_index})")]
    AnchorPlacementFailed {
        net_index: usize,
        base: usize,
        target: usize,
        distance: f64,
    },
    #[error("chart inversion residual {residual:.3e} above {threshold:.3e} at point {point} (stage {stage})")]
    InversionResidualExceeded {
        point: usize,
        stage: usize,
        residual: f64,
        threshold: f64,
    },
    #[error("fewer than two eligible points for the pair scan")]
    TooFewPoints,
    #[error("empty fiber over {base}; nearest image at distance {nearest}")]
    EmptyFiber { base: usize, nearest: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("byte offset {offset}: {message}")]
    Binary { offset: usize, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
