//! Command line and local HTTP job service for the S-EXIT workbench.
//!
//! [`jobs`] defines the job parameters and turns them into artifacts,
//! [`workspace`] persists profiles, job records and artifacts,
//! [`service`] exposes both over HTTP and [`commands`] is the `sexit` CLI.

pub mod commands;
pub mod jobs;
pub mod service;
pub mod workspace;

pub use commands::{run, Cli};
pub use jobs::{execute, Artifacts, JobKind, JobParams, ProfileSource};
pub use workspace::{JobRecord, JobStatus, Workspace};
