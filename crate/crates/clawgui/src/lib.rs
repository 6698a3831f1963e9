//! Standard-library side of the toolkit: environment pool, trainer,
//! evaluation pipeline, wire protocol and the `clawctl` command line.

pub mod cli;
pub mod config;
pub mod envpool;
pub mod evalpipe;
pub mod http;
pub mod remote;
pub mod suite;
pub mod trainer;
pub mod wire;
