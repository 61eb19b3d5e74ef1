//! Time-tagged detection: detector wiring, delay decode, loss budget and the
//! Monte-Carlo stream generator.

mod delays;
mod io;
mod losses;
mod simulate;
pub(crate) use simulate::basis_prob;
mod types;

pub use delays::{DelayMap, Decoder};
pub use io::{read_binary, read_csv, read_stream_file, write_binary, write_csv, StreamFormat};
pub use losses::{path_transmission, survival_probability, PathLossTable};
pub use simulate::{
    joint_outcome_table, simulate_streams, PhaseSetting, SegmentStreams, Simulator, StreamMerger,
    SurvivalTable,
};
pub use types::{DetectorConfig, DetectorId, Party, Projector, ProjectorOutcome, TimestampRecord};
