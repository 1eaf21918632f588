use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("episode already finished after {slots} slots")]
    EpisodeFinished { slots: usize },

    #[error("agent index {index} out of range for {agents} agents")]
    AgentIndex { index: usize, agents: usize },

    #[error("action out of range: {0}")]
    Action(String),

    #[error("activation {0} is not positively homogeneous; rescaling is undefined")]
    UnsupportedActivation(String),

    #[error("non-finite parameter in {method} model of agent {agent} at episode {episode}")]
    NonFinite {
        method: String,
        agent: usize,
        episode: usize,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}
