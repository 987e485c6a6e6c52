//! Dynamic free-end cable manipulation in simulation: trajectory synthesis,
//! a tunable cable engine, simulator tuning, learned forward models and the
//! analyses built on them.

pub mod cablesim;
pub mod geometry;
pub mod trajgen;
pub mod stats;
pub mod tuner;
pub mod datasets;
pub mod provenance;
pub mod models;
pub mod policy;
pub mod analysis;
