//! Mutation analysis for hierarchical access-control policies.
//!
//! Policies are sets of `permission`/`prohibition(role, action, context)`
//! rules over role and action hierarchies. The crate decides requests,
//! generates mutants, builds and scores test suites, and probes simulated
//! systems for access control hidden outside the policy.

pub mod analysis;
pub mod error;
pub mod exec;
pub mod fixtures;
pub mod io;
pub mod mutation;
pub mod pdp;
pub mod policy;
pub mod report;
pub mod sim;
pub mod testgen;

pub use error::{Error, Result};
pub use exec::Execution;
pub use policy::{EntityKind, Modality, Policy, Request, Rule, RuleTuple};
