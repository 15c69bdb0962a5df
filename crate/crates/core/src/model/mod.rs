//! Instances, partitions, exact arithmetic and the closed-form bounds.

pub mod bounds;
pub mod codec;
mod instance;
mod partition;
pub mod rational;

pub use bounds::{theorem_bound, Bound, TheoremBoundSpec, THEOREM_IDS};
pub use codec::{codec_roundtrip, instance_from_json, instance_from_str, instance_to_json, instance_to_string};
pub use instance::{check_permutation, rescale_to_unit, Instance, Row};
pub use partition::{check_partition, Partition, PartitionReport};
pub use rational::{ceil_log2, format_rational, frac, int, parse_rational, Rational};
