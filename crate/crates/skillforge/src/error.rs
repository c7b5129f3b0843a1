use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("contact {index}: normal has length {norm}, expected 1")]
    NonUnitNormal { index: usize, norm: f64 },
    #[error("rotation classification needs a rotation center")]
    MissingCenter,
    #[error("parse error: {0}")]
    Parse(String),
}

impl GeometryError {
    pub(crate) fn at_index(self, index: usize) -> Self {
        match self {
            GeometryError::NonUnitNormal { norm, .. } => GeometryError::NonUnitNormal { index, norm },
            other => other,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("override both adds and removes `{0}`")]
    ConflictingOverride(String),
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("observation lacks a feature value for axis {0}")]
    MissingFeature(char),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("commanded step of {length} m exceeds the limit of {limit} m")]
    StepTooLarge { length: f64, limit: f64 },
    #[error("penetration of {depth} m exceeds the cap of {cap} m")]
    Blowup { depth: f64, cap: f64 },
    #[error("unknown scene preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("direction update produced a zero vector")]
    DegenerateDirection,
    #[error("skill `{skill}` cannot start from {actual}, it expects {expected}")]
    StateMismatch {
        skill: String,
        expected: String,
        actual: String,
    },
    #[error("skill `{0}` has no executable controller")]
    Unsupported(String),
    #[error("policy does not fit skill: {0}")]
    PolicyMismatch(String),
    #[error("invalid learner configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid task sequence: {0}")]
    Sequence(String),
    #[error("task {index} (`{task}`): {source}")]
    Task {
        index: usize,
        task: String,
        #[source]
        source: Box<AgentError>,
    },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
