//! Static detection of sleepminting defects in ERC-721 contracts.
//!
//! The pipeline loads compiler artifacts ([`ingestion`]), prunes the contract
//! down to functions that (transitively) emit `Transfer` ([`ast`]), recovers
//! instructions and the control-flow graph ([`disasm`]), symbolically executes
//! each target function ([`symexec`]) while collecting path constraints
//! ([`constraints`]), and finally applies the four defect rules
//! ([`detectors`]). [`report`] ties the stages together for the CLI and the
//! corpus evaluation harness.

pub mod ast;
pub mod constraints;
pub mod detectors;
pub mod disasm;
pub mod hash;
pub mod ingestion;
pub mod report;
pub mod symexec;

pub use ruint::aliases::U256;
