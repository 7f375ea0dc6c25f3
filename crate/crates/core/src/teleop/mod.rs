//! Teleoperation service: live sessions that let an operator jog both
//! effectors, toggle suction like a footswitch and record episodes.

mod server;
mod session;

use thiserror::Error;

pub use server::{router, serve, ClientMessage, ServeOptions, ServerMessage, DEFAULT_SNAPSHOT_HZ};
pub use session::{
    Ack, Progress, RecordControl, Session, SessionConfig, SessionSnapshot, StopMode, TeleopInput, ToggleRecord,
    DEFAULT_MAX_EPISODE_S, MAX_INPUT_RATE_HZ, TARGET_TRAJECTORIES,
};

use crate::data::DataError;
use crate::driver::DriverError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum TeleopError {
    #[error("session is closed")]
    SessionClosed,
    #[error("episode buffer full at {0} steps")]
    BufferOverflow(usize),
    #[error("a recording is already active")]
    AlreadyRecording,
    #[error("no recording is active")]
    NotRecording,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("another client is driving this session")]
    NotDriver,
    #[error(transparent)]
    Driver(#[from] DriverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("writing episode: {0}")]
    Io(#[from] std::io::Error),
}
