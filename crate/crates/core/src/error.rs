use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid peakon state: {0}")]
    InvalidState(String),

    #[error("time {t} outside the closed-form domain [0, {t_break})")]
    Domain { t: f64, t_break: f64 },

    #[error("peakons {i} and {j} collide (gap {gap:e} below {eps:e})")]
    Collision { i: usize, j: usize, gap: f64, eps: f64 },

    #[error("no breaking detected before t = {horizon}")]
    NoBreaking { horizon: f64 },

    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("ODE driver exceeded {max_steps} steps at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("path truncated at t = {t_stop}: solution breaks at t = {t_break}")]
    Truncated { t_stop: f64, t_break: f64 },

    #[error("characteristic family is not monotone in the offset at t = {t} (violation {violation:e})")]
    NonMonotone { t: f64, violation: f64 },

    #[error("policy `{policy}` is not supported here: {reason}")]
    UnsupportedPolicy { policy: String, reason: String },

    #[error("scenario field `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("cannot parse set `{0}`")]
    SetSpec(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
