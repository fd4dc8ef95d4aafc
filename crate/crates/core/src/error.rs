use thiserror::Error;

use crate::plant::Trajectory;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} = {value} is outside the valid interval [{min}, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },

    #[error("invalid BH dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error(
        "recoil line does not intersect major branch (B_r' = {b_r_prime} T, mu_rec = {mu_rec})"
    )]
    NoCorner { b_r_prime: f64, mu_rec: f64 },

    #[error(
        "load line does not intersect the magnet characteristic: \
         characteristic spans B in [{char_min}, {char_max}] T, \
         load line spans B in [{load_min}, {load_max}] T over H in [{h_min}, {h_max}] A/m"
    )]
    NoIntersection {
        h_min: f64,
        h_max: f64,
        char_min: f64,
        char_max: f64,
        load_min: f64,
        load_max: f64,
    },

    #[error("singular configuration: {0}")]
    Singular(String),

    #[error("set-point unreachable for this magnet/geometry: B_g_set = {b_set} T ({reason})")]
    Unreachable { b_set: f64, reason: String },

    #[error("root finder and closed form disagree: {numeric} vs {closed_form}")]
    CrossCheck { numeric: f64, closed_form: f64 },

    #[error("plant step left the sampled BH range at t = {t} s (I_c = {i_c} A, H_m = {h_m} A/m, U_c = {u_c} V)")]
    StepOutOfRange {
        t: f64,
        i_c: f64,
        h_m: f64,
        u_c: f64,
    },

    #[error(
        "insufficient pulse voltage: {voltage} V did not saturate the magnet within {timeout} s"
    )]
    InsufficientPulse { voltage: f64, timeout: f64 },

    #[error("controller did not settle within {timeout} s (last error {last_error} T)")]
    ControllerTimeout {
        timeout: f64,
        last_error: f64,
        trajectory: Box<Trajectory>,
    },

    #[error("coil current did not decay below {threshold} A within {timeout} s")]
    CoastTimeout { threshold: f64, timeout: f64 },

    #[error(
        "sweep did not reach saturation: B_m spanned [{b_min}, {b_max}] T, needs +/-{needed} T"
    )]
    SweepUnsaturated { b_min: f64, b_max: f64, needed: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid measurement log: {0}")]
    InvalidLog(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfRange { .. } => "out_of_range",
            Error::InvalidDataset(_) => "invalid_dataset",
            Error::InvalidParams(_) => "invalid_params",
            Error::NoCorner { .. } => "no_corner",
            Error::NoIntersection { .. } => "no_intersection",
            Error::Singular(_) => "singular",
            Error::Unreachable { .. } => "unreachable",
            Error::CrossCheck { .. } => "cross_check",
            Error::StepOutOfRange { .. } => "step_out_of_range",
            Error::InsufficientPulse { .. } => "insufficient_pulse",
            Error::ControllerTimeout { .. } => "controller_timeout",
            Error::CoastTimeout { .. } => "coast_timeout",
            Error::SweepUnsaturated { .. } => "sweep_unsaturated",
            Error::InsufficientData(_) => "insufficient_data",
            Error::InvalidLog(_) => "invalid_log",
            Error::Config(_) => "config",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
