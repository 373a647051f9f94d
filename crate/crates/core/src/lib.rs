//! Identification of discrete-time dynamical systems with finite symmetry
//! groups by equivariant autoregressive reservoir computers.
//!
//! A model predicts the next delay window of a series as `Ŵ · φ(x)`, where
//! `φ` collects the distinct monomials of the window up to a chosen order
//! and `Ŵ` is constrained to intertwine the group action on windows with
//! its lift to monomials. The constraint space is computed as an SVD null
//! space and the coupling is fit in it by least squares.

pub mod embedding;
pub mod cli;
pub mod error;
pub mod groups;
pub mod model;
pub mod solver;
pub mod systems;
pub mod tensorops;

pub use embedding::{CompressionPlan, DelayWindow, SeriesSample};
pub use error::{EarcError, Result};
pub use groups::GroupRep;
pub use model::{EarcModel, Forecast, RolloutMode, TrainOptions};
pub use solver::{EquivariantBasis, FitReport};
pub use tensorops::DenseMatrix;
