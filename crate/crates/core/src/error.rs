use crate::lattice::Region;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("state has {got} amplitudes but the lattice has {expected} sites")]
    LengthMismatch { expected: usize, got: usize },

    #[error("mode index {k} out of range for a ring of {m} sites")]
    ModeIndex { k: usize, m: usize },

    #[error("chemical potential {mu} is not below the mode energy {energy}; occupation diverges")]
    DivergentOccupation { mu: f64, energy: f64 },

    #[error("mean energy {target} is outside the attainable interval ({lo}, {hi})")]
    EnergyOutOfRange { target: f64, lo: f64, hi: f64 },

    #[error("root search did not converge: {0}")]
    NoConvergence(String),

    #[error("region {0:?} has no sites in this lattice")]
    EmptyRegion(Region),

    #[error("region {0:?} is not a ring")]
    NotARing(Region),

    #[error("no bond between sites {0} and {1}")]
    UnknownBond(usize, usize),

    #[error("density difference changes sign inside the fit window (t = {0}); shrink the window")]
    SignChange(f64),

    #[error("current ratio kappa = {kappa} exceeds J/2 = {limit}; no real relaxation rate")]
    KappaOutOfRange { kappa: f64, limit: f64 },

    #[error("quasimomentum {kappa} is not a multiple of 2π/{m}")]
    IncommensurateMomentum { kappa: f64, m: usize },

    #[error("analytic current requires equal boundary rates (got {0} and {1})")]
    UnequalRates(f64, f64),

    #[error("linear system is singular")]
    Singular,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
