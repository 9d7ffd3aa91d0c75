use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown event id {0}")]
    UnknownEvent(usize),

    #[error("unknown task id {0}")]
    UnknownTask(usize),

    #[error("unknown state {0} for this table")]
    UnknownState(usize),

    #[error("speaker and listener parts overlap on {0} belief(s)")]
    OverlappingParts(u32),

    #[error("completed description violates the belief hierarchy")]
    InvalidStructure,

    #[error("episode already terminated")]
    EpisodeTerminated,

    #[error("step {step} requires a non-empty hierarchy output from step {prior}", prior = step - 1)]
    EmptyPriorHierarchy { step: usize },

    #[error("curriculum step 1 extracted no descriptors: scenario is unsolvable under this budget")]
    Unsolvable,

    #[error("flat Q-table needs about {required} bytes, above the configured bound of {bound} bytes")]
    MemoryBound { required: u128, bound: u128 },

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("unsupported scenario file version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("empty episode log")]
    EmptyLog,

    #[error("missing series: {0}")]
    MissingSeries(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
