//! Few-shot classification with prototypes rebuilt from class semantics.
//!
//! Pipeline: an embedding cache ([`feature_store`]) supplies per-class center
//! targets; class descriptions ([`semantic_evolution`]) are embedded offline;
//! a small network ([`alignment_net`]) maps (visual, semantic) pairs onto the
//! centers; at test time its output is blended with the support mean and
//! scored on sampled episodes ([`episodic`]). [`experiment`] wires the stages
//! together and drives the ablations.
//!
//! Numerics are generic over [`Real`]; the aliases below fix the two scalar
//! widths used in practice.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment_net;
pub mod episodic;
mod error;
pub mod experiment;
pub mod feature_store;
mod scalar;
pub mod semantic_evolution;

pub use error::{Error, Result};
pub use scalar::{widen, Real};

pub type Network32 = alignment_net::AlignmentNetwork<f32>;
pub type Network64 = alignment_net::AlignmentNetwork<f64>;
pub type Centers32 = feature_store::ClassCenterSet<f32>;
pub type Centers64 = feature_store::ClassCenterSet<f64>;
pub type Prototypes32 = episodic::PrototypeSet<f32>;
pub type Prototypes64 = episodic::PrototypeSet<f64>;
