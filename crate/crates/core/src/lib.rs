pub mod analysis;
pub mod design;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod matkit;
pub mod model;
pub mod spectra;
pub mod targets;

pub use error::{Error, Result};
pub use matkit::{AntiSymMatrix, Matrix, SymMatrix, Vector};
pub use model::{NuRule, PerturbationConfig, QuadraticObservable};
pub use targets::{BridgeTarget, DoubleWell, GaussianTarget, PotentialTarget, Well};
