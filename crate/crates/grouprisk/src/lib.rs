//! Minority-group risk of overparameterized regression and classification in
//! a two-group model.
//!
//! The library has two halves that check each other:
//!
//! * closed-form high-dimensional asymptotics: [`theory_rf`] for ridgeless
//!   random-feature regression (with a ridge-level fixed-point cross-check)
//!   and [`theory_linear`] for ridgeless/OLS linear regression, built on the
//!   activation moments from [`moments`];
//! * finite-sample simulators: [`sim`] for data generation, min-norm and
//!   reweighted-ridge fits, majority subsampling and Monte Carlo risk
//!   estimation, and [`svm`] for the hard-margin random-feature classifier.

pub mod moments;
pub mod sim;
pub mod svm;
pub mod theory_linear;
pub mod theory_rf;

pub use moments::{activation_moments, Activation, ActivationMoments};
pub use theory_rf::{RfRegime, RiskBreakdown, SignalSpec};
