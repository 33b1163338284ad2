//! The round-based federation: distribution of the item model, local
//! optimisation on each selected client, masked transmission of item
//! updates, and aggregation on the server.

mod round;
mod sampling;
mod telemetry;
mod train;

pub use round::{
    aggregate, client_round, client_round_with_triples, ClientRoundOutput, LocalStep, MaskPolicy, PositiveMask,
    RoundMask, ServerUpdate, StickyMask, UpdateRow,
};
pub use sampling::{sample_local_triples, select_clients};
pub(crate) use sampling::ClientSampler;
pub use telemetry::{
    CsvSink, EpochRecord, MemorySink, NullSink, RoundRecord, RoundRow, Tee, TelemetryLog, TelemetrySink,
    ROUND_CSV_HEADER,
};
pub use train::{train, ClientSelection, Federation, RoundPlan, TrainOutput, TrainingSchedule, TripleCount};
pub(crate) use train::{selection_rng, triple_rng, validation_score, BestSnapshot};
