//! Planning and control for contact-rich planar manipulation.
pub mod contact_strategy;
pub mod control_loop;
pub mod cost;
pub mod harness;
pub mod memory;
pub mod mppi;
pub mod sim;
pub mod strategist;
pub mod tasks;
pub mod world_model;
