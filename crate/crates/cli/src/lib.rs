//! Scenario runner and plotting for the `bhsim` binary.

pub mod error;
pub mod plot;
pub mod run;
pub mod scenario;
