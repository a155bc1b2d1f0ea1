//! Mutation analysis for product lines specified as a feature model, a
//! 150% state machine and a feature mapping.

pub mod bundle;
pub mod diag;
pub mod expr;
pub mod feature_model;
pub mod fixtures;
pub mod interp;
pub mod mapping;
pub mod mutation_ops;
pub mod pipeline;
pub mod report;
pub mod statechart;
pub mod testing;

pub use diag::{DiagKind, Diagnostic};
pub use feature_model::{Configuration, FeatureModel};
pub use interp::{Emission, Interpreter, RuntimeFault, Stimulus};
pub use mapping::{materialize, Mapping, ProductSpecification, SplSpecification};
pub use mutation_ops::{Layer, Operator, SplMutant};
pub use pipeline::{FixtureReport, InvalidPolicy, RunConfig, ScoreReport};
pub use statechart::StateMachine;
pub use testing::{TestCase, TestStep, Verdict};
