use alloc::string::String;

/// Errors raised by the core models and optimizers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid scenario value for `{key}`: {reason}")]
    InvalidScenario { key: &'static str, reason: String },

    #[error("degenerate geometry: {what} distance {distance:.3e} m is below the 0.5 m guard")]
    DegenerateGeometry { what: &'static str, distance: f64 },

    #[error("effective channel of UE {ue} in slot {slot} is zero")]
    ZeroChannel { ue: usize, slot: usize },

    #[error("compression ratio {0} leaves no compression cost (denominator vanishes)")]
    SingularCompression(f64),

    #[error("non-positive expansion point x={x:.3e}, y={y:.3e}")]
    ExpansionPoint { x: f64, y: f64 },

    #[error("infeasible scenario: {0}")]
    InfeasibleScenario(String),

    #[error("power must be positive, got {0}")]
    NonPositivePower(f64),

    #[error("no sign change in bracket [{lo:.3e}, {hi:.3e}]")]
    Bracket { lo: f64, hi: f64 },

    #[error(transparent)]
    Convex(#[from] crate::convex::ConvexError),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
