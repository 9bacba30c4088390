//! N-way K-shot episodes, prototype construction and fusion, query
//! classification, and accuracy reporting.

mod classify;
mod episode;
mod evaluate;
mod prototypes;
mod stats;

pub use classify::{classify, ClassifierKind, EpisodeClassifier, LogisticConfig, Prediction};
pub use episode::{Episode, EpisodeSampler, EpisodeSpec, PeripheryPools, SupportPolicy};
pub use evaluate::{evaluate, sweep_k, EvalReport, EvalSetup, EvalSnapshot, SweepCurve, SweepPoint};
pub use prototypes::{fuse, reconstruct, support_mean, PrototypeSet};
pub use stats::{ci95, mean, population_std};
