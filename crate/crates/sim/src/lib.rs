//! File formats, sweeps and reporting for the mesh-PON simulator.

pub mod charts;
pub mod config;
pub mod report;
pub mod sweep;
