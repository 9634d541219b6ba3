//! Local differential privacy frequency estimation: one-shot oracles,
//! memoization-based longitudinal protocols, multidimensional collection
//! strategies, continuous-noise mechanisms and server-side aggregation.
//!
//! Every randomized operation takes an explicit `rand::Rng`; seeding that
//! stream makes the whole pipeline bit-for-bit reproducible.

pub mod aggregator;
pub mod channel;
pub mod error;
pub mod longitudinal;
pub mod multidim;
pub mod noise;
pub mod oracle;
pub mod report;

pub use error::{LdpError, Result};
pub use oracle::{AttributeDomain, FrequencyEstimate, OneRoundParams, OracleKind, UnaryVector};
pub use report::{Report, SampledReport, TupleReport};
