//! Simulator of a stored-program computer whose register/memory pins perform
//! binary state reduction.
//!
//! Each pin is a tubule whose binary potential drives a charged condensate
//! pointer; reading a bit out of the registers decoheres the pin's meter
//! variable, couples it to the pointer and selects one eigenstate. The
//! register file runs either a fine-grained model (one pure microstate, zero
//! information gained) or a coarse-grained one (a weighted mixture of
//! microstates, positive information gained at every non-trivial read-out).
//!
//! Modules:
//! - [`physics`]: pointer dynamics, terminal velocity and readout latency.
//! - [`quantum`]: density matrices, purification, pointer coupling and event
//!   readings.
//! - [`machine`]: ISA, register models, pins and the fetch/decode/execute loop.
//! - [`assembler`]: text assembly, encoding and disassembly.
//! - [`ensemble`]: many seeded copies of a machine and their statistics.
//! - [`config`]: the flat JSON run configuration.

pub mod assembler;
pub mod cli;
pub mod config;
pub mod ensemble;
pub mod machine;
pub mod physics;
pub mod quantum;
