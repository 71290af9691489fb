use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("coordinate out of range: lat={lat}, lon={lon}")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("bike id must not be empty")]
    EmptyBikeId,
    #[error("need at least {required} stations, got {found}")]
    TooFewStations { required: usize, found: usize },
    #[error("cannot form {k} clusters from {points} points")]
    TooManyClusters { k: usize, points: usize },
    #[error("{0} must not be empty")]
    Empty(&'static str),
    #[error("trip {index} has no station annotation")]
    MissingStation { index: usize },
    #[error("station id {id} out of range for {count} stations")]
    StationOutOfRange { id: usize, count: usize },
    #[error("station count mismatch: expected {expected}, found {found}")]
    StationCountMismatch { expected: usize, found: usize },
    #[error("fleet factor {0} outside (0, 1]")]
    InvalidFleetFactor(f64),
    #[error("only one pickup and one drop-off station per vehicle is supported (got N_p={pickups}, N_d={dropoffs})")]
    UnsupportedVisitLimit { pickups: usize, dropoffs: usize },
    #[error("exhaustive search space {space} exceeds the guard of {limit}")]
    SearchSpaceTooLarge { space: u128, limit: u128 },
    #[error("invalid cost weights: {0}")]
    InvalidWeights(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("probability row for {what} sums to {sum}")]
    InvalidDistribution { what: &'static str, sum: f64 },
}
