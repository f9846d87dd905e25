//! One-shot channel-width architecture search.
//!
//! The crate covers the whole pipeline at desk scale: a per-layer width
//! search space ([`archspace`]), analytic resource costs ([`costmodel`]), a
//! weight-sharing slimmable supernet trained with the sandwich rule
//! ([`supernet`]), synthetic training data ([`datasets`]), fitness
//! evaluators ([`evaluator`]) and the constrained evolutionary search
//! ([`evolution`]) with its line-delimited run log ([`runlog`]).

pub mod archspace;
pub mod container;
pub mod costmodel;
pub mod datasets;
pub mod error;
pub mod evaluator;
pub mod evolution;
pub mod presets;
pub mod runlog;
pub mod supernet;

pub use archspace::{ArchConfig, BackboneSkeleton, LayerDescriptor, LayerKind, ScaleFactor};
pub use costmodel::{evaluate_cost, satisfies, HardwareConstraints, ResourceCost};
pub use error::{Error, Result};
pub use evaluator::{Cached, Evaluator, Fitness, SupernetEvaluator, SurrogateEvaluator};
pub use evolution::{run_search, Candidate, EvolutionParams, SearchOptions};
