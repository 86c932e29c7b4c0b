pub mod data;
pub mod imaging;
pub mod augment;
pub mod rng;
pub mod models;
pub mod metrics;
pub mod training;
pub mod classify;
pub mod experiment;
