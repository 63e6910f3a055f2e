//! Evaluation harness: datasets on disk, model gateways, the interaction
//! protocols and the reports built from their records.

pub mod batch;
pub mod dataset;
pub mod gateway;
pub mod modulo;
pub mod report;
