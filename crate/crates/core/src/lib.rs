//! Guarded atomic actions on active objects.

pub mod bench;
pub mod engine;
pub mod explorer;
pub mod frontend;
pub mod model;
pub mod rng;
pub mod sched;
