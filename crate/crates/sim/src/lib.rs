//! File formats, reports, threading and the command-line front end for
//! [`aeqsim_core`].

pub mod cli;
pub mod images;
pub mod model_io;
pub mod random;
pub mod report;
pub mod sweep;
pub mod threaded;
pub mod trace;
pub mod verify;

pub use aeqsim_core as core;
