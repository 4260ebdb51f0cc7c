//! Simulation of federated matrix factorization with a consensus
//! regularizer.
//!
//! Each client `i` holds a user vector `u_i` and a private copy `V_(i)` of
//! the item matrix. Training minimizes
//!
//! ```text
//! F(x) = Σ_i f_i(x_i) + λ ψ(x)
//! f_i  = Σ_{j observed} (r_ij − u_iᵀv_j)² + λ_u ‖u_i‖²
//! ψ    = ½ Σ_i ‖V_(i) − V̄‖²_F
//! ```
//!
//! where `V̄` is the server-side average of the client item matrices.

pub mod comm;
pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod fcf;
pub mod matrix;
pub mod model;
pub mod privacy;
pub mod rng;
pub mod synthetic;
pub mod theory;
pub mod trainer;
pub mod verify;

pub use comm::{CommEvent, CommLog, Direction, TrainerKind};
pub use config::TrainConfig;
pub use data::{evaluate, load_tabular, split, FormatSpec, Metrics, RatingsDataset, SplitSpec};
pub use error::{Error, ModelError, Result};
pub use matrix::ItemMatrix;
pub use model::{GlobalState, LocalModel, RatingRow};
pub use privacy::PrivacyConfig;
pub use trainer::{run, RunResult, StepOutcome, TrainerState};
