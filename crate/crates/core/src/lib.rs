pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod recourse;

pub use error::{Error, Result};
pub use model::{FeatureVector, ItemCatalog, ItemId, RatingStore, UserId, UserProfile};
pub use recourse::{compute_recourse, RecourseConfig, RecourseRequest, RecourseResult};
