//! Knowledge-graph link prediction toolkit.
//!
//! The pipeline has four stages:
//!
//! 1. [`akglg`] trains attentioned Lie-group embeddings (the DistMult /
//!    ComplEx / TransE family expressed as attention vectors plus points on a
//!    product group).
//! 2. [`ree`] mines candidate first-order path rules by cycle enumeration and
//!    scores them directly from the embeddings, with no grounding counting.
//! 3. [`pbf`] builds per-relation softmax-regression models over
//!    path-multiplicity features and mixes their scores with embedding scores.
//! 4. [`eval`] runs the filtered link-prediction protocol (MRR, HITS@n) over
//!    any of the three scorers and drives hyperparameter selection.
//!
//! [`kg`] holds the interned triple store and the undirected simple graph the
//! miner works on; [`grounding`] counts injective path groundings and turns
//! ranked rules into entity rankings.

pub mod akglg;
pub mod eval;
pub mod grounding;
pub mod kg;
pub mod pbf;
pub mod ree;

pub use kg::{EntityId, KnowledgeGraph, RelationId, SimpleGraph, Triple};
