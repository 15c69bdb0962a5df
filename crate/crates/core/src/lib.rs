//! Proportional fair division of indivisible items with sequentially arriving
//! agents: Round-Robin and its modified form, the dynamic rebundling
//! allocators, the structured-valuation allocators, master-list guarantees and
//! the Hadamard lower-bound family.

pub mod error;
pub mod model;
pub mod arrival;
pub mod roundrobin;
pub mod dynamic;
pub mod structured;
pub mod masterlist;
pub mod lowerbound;
pub mod gen;

pub use error::{Error, Result};
