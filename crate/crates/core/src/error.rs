use core::fmt;

/// Errors produced by the simulation core.
#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    /// A point coincides with the center of an arc lane, so it has no
    /// unique foot point.
    DegenerateProjection,
    /// A longitudinal coordinate lies outside `[0, length]` of its lane.
    OutOfRange { s: f64, length: f64 },
    /// A block cannot be docked because its entry lane count differs from
    /// the anchor socket.
    LaneCountMismatch { anchor: u8, entry: u8 },
    /// Parameters handed to an operation violate its preconditions.
    InvalidParameter(&'static str),
    /// Map generation failed for every seed in the allowed window.
    GenerationExhausted { attempts: u64 },
    /// The map for a seed could not be generated.
    MapGenerationFailed { seed: u64 },
    /// More traffic vehicles were requested than spawn points exist.
    InsufficientSpawnPoints { requested: usize, available: usize },
    /// No route exists between two nodes.
    Unreachable { from: u32, to: u32 },
    /// A node id does not exist in the road network.
    UnknownNode(u32),
    /// `step` was called on an environment whose episode has ended.
    StepAfterDone,
    /// `step` was called before `reset`.
    NotReset,
    /// Metrics were requested for an empty record list.
    EmptyInput,
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegenerateProjection => write!(f, "point lies on the arc center"),
            Error::OutOfRange { s, length } => {
                write!(
                    f,
                    "longitudinal coordinate {s} outside lane of length {length}"
                )
            }
            Error::LaneCountMismatch { anchor, entry } => write!(
                f,
                "anchor socket has {anchor} lanes but block entry has {entry}"
            ),
            Error::InvalidParameter(what) => write!(f, "invalid parameter: {what}"),
            Error::GenerationExhausted { attempts } => {
                write!(f, "map generation failed for {attempts} consecutive seeds")
            }
            Error::MapGenerationFailed { seed } => {
                write!(f, "map generation failed for seed {seed}")
            }
            Error::InsufficientSpawnPoints {
                requested,
                available,
            } => write!(
                f,
                "{requested} traffic vehicles requested but only {available} spawn points"
            ),
            Error::Unreachable { from, to } => write!(f, "node {to} unreachable from {from}"),
            Error::UnknownNode(n) => write!(f, "unknown node {n}"),
            Error::StepAfterDone => write!(f, "step called after the episode ended"),
            Error::NotReset => write!(f, "step called before reset"),
            Error::EmptyInput => write!(f, "empty input"),
        }
    }
}

impl core::error::Error for Error {}
