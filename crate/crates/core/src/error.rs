use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("pool size k = {0} must be odd and at least 3")]
    PoolSize(usize),
    #[error("n_workers = {n} is smaller than the pool size k = {k}")]
    TooFewWorkers { n: usize, k: usize },
    #[error("class fractions are invalid: colluding = {colluding}, naive = {naive}")]
    Fractions { colluding: f64, naive: f64 },
    #[error("scenario leaves {0} honest workers; at least 2 are required")]
    TooFewHonest(usize),
    #[error("{name} = {value} is not a probability")]
    Probability { name: &'static str, value: f64 },
    #[error("rtt_min = {min} ms exceeds rtt_max = {max} ms")]
    Rtt { min: f64, max: f64 },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("collusion start window ({0}, {1}) is not ordered")]
    Window(f64, f64),
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PoolError {
    #[error("cannot draw a pool of {needed} from {available} candidates")]
    InsufficientWorkers { needed: usize, available: usize },
}
