//! Command-line driver, instance generators, and benchmark harness for
//! `lever-sketch-core`.

pub mod bench;
pub mod commands;
pub mod exit;
pub mod generators;
