pub mod audio;
pub mod config;
pub mod model;
pub mod tensor;
pub mod gating;
pub mod wire;
pub mod netsim;
pub mod service;
pub mod pipeline;
pub mod fixtures;
pub mod costmodel;
pub mod fleet;
pub mod report;
pub mod settings;
