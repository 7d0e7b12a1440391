//! Edge AI service provisioning over a simulated O-RAN deployment.

pub mod scenario;
pub mod sim;
pub mod pcf;
pub mod edge;
pub mod registry;
pub mod ric;
pub mod monitor;
pub mod events;
pub mod world;
pub mod agent;
pub mod runner;
