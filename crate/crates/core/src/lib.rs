pub mod driver;
pub mod firmware;
pub mod geometry;
pub mod link;
pub mod pneumatics;
pub mod protocol;
pub mod data;
pub mod sim;
pub mod harness;
pub mod teleop;
pub mod config;
pub mod cli;
