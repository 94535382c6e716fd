pub mod archive;
pub mod bench;
pub mod checkpoint;
pub mod coevo;
pub mod config;
pub mod deploy;
pub mod env;
pub mod par;
pub mod pipeline;
pub mod policy;
pub mod report;
pub mod rl;
