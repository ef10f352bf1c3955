//! Layer-level federated GBDT: the host trains the top layers of each tree
//! on its own features and labels, guests extend the bottom layers on
//! their features over encrypted gradients, and secure aggregation hides
//! individual contributions. Includes collaborative inference, baselines
//! and byte-level communication accounting.

pub mod baselines;
pub mod error;
pub mod guest;
pub mod host;
pub mod ledger;
pub mod model;
pub mod msg;
pub mod predict;
pub mod protocol;
pub mod transport;

pub use error::{FedError, Result};
pub use host::{assign_responsible_guest, SetupSummary, TrainOutcome};
pub use ledger::{CommLedger, Direction, Stage};
pub use model::{CipherChoice, DistributedModel, FedParams, GuestSplitMode};
pub use msg::{PartyId, PartyMessage, Role};
pub use predict::{hybridtree_predict, PredictOutcome};
pub use protocol::hybridtree_train;
