//! Deterministic discrete-event simulation of an HPC multicore island
//! supervised by a safety island.
//!
//! A run is fully determined by its [`scenario::ScenarioConfig`] and seed:
//! [`soc::run`] produces a [`report::RunReport`] whose canonical JSON form
//! ([`report::emit_report`]) is byte-identical across runs.

pub mod exec;
pub mod fault;
pub mod hpc;
pub mod injector;
pub mod interference;
pub mod kernel;
pub mod observability;
pub mod redundancy;
pub mod report;
pub mod safety;
pub mod scenario;
pub mod soc;
pub mod watchdog;

pub use exec::Execution;
pub use report::{emit_report, RunReport};
pub use scenario::{parse, ScenarioConfig};
pub use soc::{run, simulate};

/// Independent stream seed for `(domain, index)` under a run seed (splitmix64).
pub fn derive_seed(seed: u64, domain: u64, index: u64) -> u64 {
    let mut z = seed
        ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
