//! Pseudoclassical simulation of the Bose-Hubbard model.
//!
//! Thermal (Bose-Einstein) states of an `M`-site ring are represented by an
//! ensemble of classical fields with deterministic Bloch-mode moduli and
//! random phases. Each field is evolved under the discrete nonlinear
//! Schrödinger equation and single-particle observables are estimated as
//! ensemble averages.
//!
//! Module map:
//!
//! * [`lattice`]: site graphs (ring, two rings joined at a point or by a
//!   chain) and the classical Hamiltonian.
//! * [`thermal`]: Bose-Einstein moments, `(β, μ)` solvers and ensemble
//!   sampling.
//! * [`dynamics`]: Strang-split propagation of single fields and ensembles.
//! * [`observables`]: single-particle density matrices, populations,
//!   currents, transport fits and histograms.
//! * [`lyapunov`]: tangent-space propagation and maximal Lyapunov exponents.
//! * [`lindblad`]: steady state of the boundary-driven non-interacting chain.
//!
//! Trajectory-parallel work is spread over a rayon pool when the `parallel`
//! feature is enabled; results are bit-identical with or without it.

pub mod dynamics;
pub mod error;
pub mod exec;
pub mod lattice;
pub mod lindblad;
pub mod lyapunov;
pub mod observables;
pub mod rng;
pub mod stats;
pub mod thermal;

mod fourier;
mod trig;

pub use error::{Error, Result};
pub use num_complex::Complex64;

pub use dynamics::{evolve_ensemble, Propagator, Snapshots};
pub use exec::Execution;
pub use lattice::{Bond, Couplings, FieldState, Layout, Region, SiteGraph};
pub use thermal::{Ensemble, ThermalPoint};
