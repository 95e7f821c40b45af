use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("geolocation ({x:.2}, {y:.2}) lies outside the scenario area")]
    OutOfArea { x: f64, y: f64 },
    #[error("unknown base station id {0}")]
    UnknownBs(usize),
    #[error("invalid codebook configuration: {0}")]
    InvalidCodebook(String),
    #[error("{what} index {index} out of range (limit {limit})")]
    OutOfRange {
        what: &'static str,
        index: usize,
        limit: usize,
    },
    #[error("effective channel is rank deficient")]
    SingularChannel,
    #[error("no precoder hypothesis yields a full-rank effective channel")]
    NoValidPrecoder,
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("infeasible allocation: {rbs} BS-RBs cannot give {ues} UEs {quota} RBs each")]
    Infeasible { rbs: usize, ues: usize, quota: usize },
    #[error("problem too large for exhaustive search ({0} assignments)")]
    TooLarge(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed data: {0}")]
    Data(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
