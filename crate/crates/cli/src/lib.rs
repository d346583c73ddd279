//! Support code for the `mmrm` binary.

pub mod svg;
