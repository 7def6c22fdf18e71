//! Spectral simulator and verification harness for a passive magnetic field on a
//! thin three-dimensional torus `T^2 x R/(2*pi*eps*Z)` driven by white-in-time,
//! structured transport-stretching noise.
//!
//! The library is organised bottom-up:
//!
//! * [`lattice`] — the thin-layer wavenumber lattice, its sign partition, the
//!   orthonormal frames attached to each mode, and the annulus/continuum zeta sums.
//! * [`field`] + [`fft`] — truncated Fourier representations of scalar and vector
//!   fields on the thin torus and on the flat 2-torus, with the usual spectral
//!   calculus (Leray projection, Biot–Savart, curl, Sobolev norms, mean/fluctuation
//!   splitting, dealiased products, Lie derivatives).
//! * [`noise`] — the noise coefficients, correlated complex Brownian increments,
//!   covariance pieces and their derivatives, eddy-diffusivity summaries, the
//!   alpha-matrix and the mean helicity.
//! * [`corrector`] — the Itô–Stratonovich corrector operators and brute-force
//!   verification of the corrector identity and its vanishing remainders.
//! * [`solver`] — exponential Euler–Maruyama time integration of the Itô system.
//! * [`limit`] — exact mode-wise solvers for the limit/intermediate 2D systems and
//!   the mild-form reconstruction used as a scheme cross-check.
//! * [`experiment`] — Monte-Carlo convergence experiments, rate fitting, reports.
//! * [`config`] — TOML configuration shared by the CLI and the experiment harness.

// Component loops deliberately index several fixed-length arrays at once
// (stencils stay visually aligned with the formulas), and tolerance guards are
// written as negated comparisons so that NaN fails them.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod corrector;
mod error;
pub mod experiment;
pub mod fft;
pub mod field;
pub mod lattice;
pub mod limit;
pub mod noise;
pub mod solver;

pub use error::{Error, Result};

pub use config::FileConfig;
pub use corrector::CorrectorOperators;
pub use experiment::{ConvergenceReport, ExperimentConfig};
pub use field::{Domain, SpectralField};
pub use lattice::{Frame, WaveVector, ZetaTable};
pub use limit::{LimitParams, MildCheck};
pub use noise::{EtaCoefficients, NoiseSpec, NoiseTables, PathIncrements};
pub use solver::{Diagnostics, InitialCondition, SimConfig, SimOptions, SimRun, SimState, Stepper};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex<f64>;
