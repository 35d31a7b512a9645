pub mod agent;
pub mod compute;
pub mod config;
pub mod interconnect;
pub mod mapping;
pub mod memory;
pub mod report;
pub mod sim;
