//! Latent-rationale question answering: document-set and sentence-subset
//! selection trained only from answers, by maximizing a top-k approximation
//! of the marginal likelihood.

pub mod answer;
pub mod data;
pub mod error;
pub mod eval;
pub mod external;
pub mod model;
pub mod params;
pub mod scorer;
pub mod setspace;
pub mod trainer;

pub use error::{Error, Result};
