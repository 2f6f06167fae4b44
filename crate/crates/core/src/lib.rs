//! Hitting-time statistics for random subshifts of finite type.

pub mod diagnostics;
pub mod environment;
pub mod error;
pub mod hts;
pub mod measures;
pub mod model;
pub mod transfer;
pub mod rng;
pub mod word;

pub use environment::{BaseSystem, EnvironmentPath, RandomMatrixFamily};
pub use error::{Error, Result};
pub use measures::{FibreMeasure, MarginalEstimate, MarginalMode, RandomProductMeasure, SampleMeasureModel};
pub use word::{HitOutcome, Symbol, TargetPoint, TransitionMatrix, Word};
pub use model::{AnyFibre, MeasureModel};
pub use transfer::{GibbsModel, PotentialModel};
pub use hts::{DichotomyReport, SurvivalCurve, ThetaEstimate};
pub use diagnostics::{BoundFit, ProofTermRecord};
