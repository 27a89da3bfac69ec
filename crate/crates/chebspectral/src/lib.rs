//! File formats, in-process rank transports and the `chebspectral` command
//! line on top of `chebspectral-core`.

pub mod bench;
pub mod cli;
pub mod io;
pub mod run;
pub mod transport;
pub mod verify;
