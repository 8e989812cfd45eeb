//! Process boundary of the simulator: the `palpsim` command line and the
//! live WebSocket session service.

pub mod cli;
pub mod live;
pub mod protocol;
pub mod server;
