//! Auction-based relay power allocation for amplify-and-forward cooperative
//! wireless networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`channel`]: link gains, SNRs and rate increases.
//! - [`scenario`]: the network description and its JSON format.
//! - [`auction`]: share-auction rules, critical prices and best responses.
//! - [`dynamics`]: best-response iteration, equilibria and price search.
//! - [`oracles`]: centralized efficient, fair and VCG benchmarks.
//! - [`experiments`]: the two-user and multi-user studies and their reports.

pub mod auction;
pub mod channel;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod numeric;
pub mod oracles;
pub mod scenario;

pub use auction::{AuctionKind, AuctionParams, Allocation, BestResponse, BidProfile, CriticalPrices};
pub use channel::{LinkModel, Position, SystemParams, UserLink};
pub use error::{Error, Result};
pub use scenario::NetworkScenario;
