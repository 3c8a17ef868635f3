//! Strength of nonlocality proofs measured as the statistical evidence they
//! yield against local realism.

pub mod divergence;
pub mod error;
pub mod games;
pub mod inequality;
pub mod json;
pub mod model;
pub mod polytope;
pub mod projection;
pub mod quantum;
pub mod sim;

pub use divergence::{kl, objective, Bits};
pub use error::{Error, Result};
pub use games::{
    equalizer_check, minimax_value, saddle_check, strength, strength_correlated,
    strength_uncorrelated, strength_uniform, GameOptions, Mode, StrengthResult,
};
pub use model::{
    ConditionalTable, DeterministicTheory, LocalTheory, NonlocalityProof, OutcomeMap, Scenario,
    SettingDistribution, SettingForm,
};
pub use polytope::{decompose_gamma, is_proper, perfect_lr_for_three_settings, GammaTable};
pub use projection::{kkt_check, project, ProjectionResult};
pub use sim::{evidence, simulate, simulate_evidence, EvidenceTrace, TrialRecord};
