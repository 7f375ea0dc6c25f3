//! Host-side end-effector client.
//!
//! One [`SuctionDriver`] per arm channel sends turn-on/turn-off/query frames
//! and blocks until the device confirms with a status frame. Gripper widths
//! do not travel over this link; [`HybridEffector`] keeps them as
//! pass-through targets for whatever moves the jaws.

use std::io;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::firmware::DeviceState;
use crate::protocol::{
    encode_command, Channel, CommandFrame, CommandKind, DecodeError, Fault, FrameDecoder,
    StatusFrame,
};
use crate::link::Link;

pub const DEFAULT_CONFIRM_TIMEOUT: Duration = Duration::from_millis(200);
/// Status older than this many query periods is treated as lost sync.
pub const STALENESS_PERIODS: u64 = 3;

#[derive(Debug, Error)]
pub enum DriverError {
    #[error("no status from {channel} device within {timeout:?}")]
    Timeout { channel: Channel, timeout: Duration },
    #[error("corrupt status frame: {0}")]
    ChecksumMismatch(DecodeError),
    #[error("undecodable status frame: {0}")]
    Decode(DecodeError),
    #[error("{channel} device out of sync: {reason}")]
    Desync { channel: Channel, reason: String },
    #[error("gripper width {width} m outside [0, {max_stroke}] m")]
    WidthOutOfRange { width: f64, max_stroke: f64 },
    #[error("link I/O: {0}")]
    Io(#[from] io::Error),
}

/// What the host last heard from one device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectorStatus {
    pub channel: Channel,
    pub confirmed: DeviceState,
    pub pressure_kpa: f64,
    pub fault: Fault,
    /// Driver ticks since this status arrived.
    pub staleness: u64,
}

pub struct SuctionDriver<L> {
    channel: Channel,
    link: L,
    decoder: FrameDecoder,
    timeout: Duration,
    query_period_ticks: u64,
    last: Option<EffectorStatus>,
    commanded: Option<bool>,
}

impl<L: Link> SuctionDriver<L> {
    pub fn new(channel: Channel, link: L) -> Self {
        Self {
            channel,
            link,
            decoder: FrameDecoder::new(),
            timeout: DEFAULT_CONFIRM_TIMEOUT,
            query_period_ticks: 1,
            last: None,
            commanded: None,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    /// How often (in [`tick`](Self::tick)s) the owner promises to poll.
    pub fn with_query_period(mut self, ticks: u64) -> Self {
        self.query_period_ticks = ticks.max(1);
        self
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn link(&self) -> &L {
        &self.link
    }

    pub fn link_mut(&mut self) -> &mut L {
        &mut self.link
    }

    pub fn into_link(self) -> L {
        self.link
    }

    /// Last confirmed status, without talking to the device.
    pub fn last_status(&self) -> Option<&EffectorStatus> {
        self.last.as_ref()
    }

    pub fn commanded(&self) -> Option<bool> {
        self.commanded
    }

    pub fn tick(&mut self) {
        if let Some(st) = &mut self.last {
            st.staleness += 1;
        }
    }

    /// Last status, failing with `Desync` once it has gone stale.
    pub fn status(&self) -> Result<EffectorStatus, DriverError> {
        let st = self.last.ok_or_else(|| DriverError::Desync {
            channel: self.channel,
            reason: "no status received yet".into(),
        })?;
        let limit = self.query_period_ticks * STALENESS_PERIODS;
        if st.staleness > limit {
            return Err(DriverError::Desync {
                channel: self.channel,
                reason: format!("status is {} ticks old (limit {limit})", st.staleness),
            });
        }
        Ok(st)
    }

    pub fn set_suction(&mut self, on: bool) -> Result<EffectorStatus, DriverError> {
        let kind = if on { CommandKind::TurnOn } else { CommandKind::TurnOff };
        self.commanded = Some(on);
        let st = self.transact(kind)?;
        self.check_agreement(&st)?;
        Ok(st)
    }

    pub fn poll_status(&mut self) -> Result<EffectorStatus, DriverError> {
        let st = self.transact(CommandKind::Query)?;
        self.check_agreement(&st)?;
        Ok(st)
    }

    fn check_agreement(&self, st: &EffectorStatus) -> Result<(), DriverError> {
        match self.commanded {
            Some(want) if want != st.confirmed.is_suction_active() => Err(DriverError::Desync {
                channel: self.channel,
                reason: format!(
                    "commanded suction {} but device reports {} (fault {:?})",
                    if want { "on" } else { "off" },
                    if st.confirmed.is_suction_active() { "on" } else { "off" },
                    st.fault
                ),
            }),
            _ => Ok(()),
        }
    }

    fn transact(&mut self, kind: CommandKind) -> Result<EffectorStatus, DriverError> {
        let frame = CommandFrame::new(kind, self.channel);
        self.link.send(&encode_command(frame))?;
        let frame = self.await_status()?;
        let confirmed = match (frame.pump_on, frame.valve_closed) {
            (true, true) => DeviceState::suction_active(self.channel),
            (false, false) => DeviceState::idle(self.channel),
            (pump, valve) => {
                return Err(DriverError::Desync {
                    channel: self.channel,
                    reason: format!("device reports mixed state pump_on={pump} valve_closed={valve}"),
                })
            }
        };
        let st = EffectorStatus {
            channel: self.channel,
            confirmed,
            pressure_kpa: frame.pressure_kpa(),
            fault: frame.fault,
            staleness: 0,
        };
        self.last = Some(st);
        Ok(st)
    }

    fn await_status(&mut self) -> Result<StatusFrame, DriverError> {
        let deadline = Instant::now() + self.timeout;
        loop {
            while let Some(next) = self.decoder.next_message::<StatusFrame>() {
                match next {
                    Ok(st) if st.channel == self.channel => return Ok(st),
                    Ok(_) => continue,
                    Err(e @ DecodeError::ChecksumMismatch { .. }) => {
                        return Err(DriverError::ChecksumMismatch(e))
                    }
                    Err(e) => return Err(DriverError::Decode(e)),
                }
            }
            let remaining = deadline.saturating_duration_since(Instant::now());
            let timeout = DriverError::Timeout {
                channel: self.channel,
                timeout: self.timeout,
            };
            if remaining.is_zero() {
                return Err(timeout);
            }
            match self.link.recv(remaining) {
                Ok(bytes) if bytes.is_empty() => return Err(timeout),
                Ok(bytes) => self.decoder.push(&bytes),
                // A severed stream looks the same as a silent device.
                Err(_) => return Err(timeout),
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectorCommand {
    pub gripper_width: [f64; 2],
    pub suction: [bool; 2],
}

/// Both arms' suction drivers plus pass-through gripper targets.
pub struct HybridEffector<L> {
    drivers: [SuctionDriver<L>; 2],
    gripper_width: [f64; 2],
    max_stroke: f64,
}

impl<L: Link> HybridEffector<L> {
    pub fn new(left: SuctionDriver<L>, right: SuctionDriver<L>, max_stroke: f64) -> Self {
        assert_eq!(left.channel(), Channel::Left);
        assert_eq!(right.channel(), Channel::Right);
        Self {
            drivers: [left, right],
            gripper_width: [max_stroke; 2],
            max_stroke,
        }
    }

    pub fn driver(&mut self, channel: Channel) -> &mut SuctionDriver<L> {
        &mut self.drivers[channel.index()]
    }

    pub fn gripper_width(&self) -> [f64; 2] {
        self.gripper_width
    }

    /// Validates widths, then switches suction on any arm whose confirmed
    /// state differs from the request.
    pub fn apply(&mut self, cmd: &EffectorCommand) -> Result<[Option<EffectorStatus>; 2], DriverError> {
        for &w in &cmd.gripper_width {
            if !(w.is_finite() && (0.0..=self.max_stroke).contains(&w)) {
                return Err(DriverError::WidthOutOfRange {
                    width: w,
                    max_stroke: self.max_stroke,
                });
            }
        }
        self.gripper_width = cmd.gripper_width;
        let mut out = [None, None];
        for ch in Channel::ALL {
            let want = cmd.suction[ch.index()];
            let driver = &mut self.drivers[ch.index()];
            let current = driver.last_status().map(|s| s.confirmed.is_suction_active());
            if current != Some(want) {
                out[ch.index()] = Some(driver.set_suction(want)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::firmware::{Ambient, DeviceEmulator};
    use crate::link::LoopbackLink;

    fn loopback(channel: Channel) -> SuctionDriver<LoopbackLink<Ambient>> {
        SuctionDriver::new(channel, LoopbackLink::new(DeviceEmulator::single(channel, Ambient)))
    }

    #[test]
    fn turn_on_confirms() {
        let mut d = loopback(Channel::Left);
        let st = d.set_suction(true).unwrap();
        assert!(st.confirmed.pump_on() && st.confirmed.valve_closed());
        let again = d.set_suction(true).unwrap();
        assert_eq!(st, again);
    }

    #[test]
    fn severed_link_times_out() {
        let mut d = loopback(Channel::Left);
        d.link_mut().sever();
        assert!(matches!(d.set_suction(true), Err(DriverError::Timeout { .. })));
    }

    #[test]
    fn stall_reported_as_desync() {
        let mut d = loopback(Channel::Right);
        let dev = d.link_mut().emulator_mut().device_mut(Channel::Right).unwrap();
        *dev = dev.with_injected_stall(true);
        match d.set_suction(true) {
            Err(DriverError::Desync { reason, .. }) => assert!(reason.contains("PumpStall")),
            other => panic!("expected desync, got {other:?}"),
        }
    }

    #[test]
    fn stale_status_is_desync() {
        let mut d = loopback(Channel::Left).with_query_period(2);
        d.poll_status().unwrap();
        for _ in 0..6 {
            d.tick();
        }
        assert!(d.status().is_ok());
        d.tick();
        assert!(matches!(d.status(), Err(DriverError::Desync { .. })));
        d.poll_status().unwrap();
        assert_eq!(d.status().unwrap().staleness, 0);
    }

    #[test]
    fn hybrid_rejects_wide_jaws_and_switches_changed_arms() {
        let mut fx = HybridEffector::new(loopback(Channel::Left), loopback(Channel::Right), 0.07);
        let bad = EffectorCommand {
            gripper_width: [0.08, 0.0],
            suction: [false, false],
        };
        assert!(matches!(fx.apply(&bad), Err(DriverError::WidthOutOfRange { .. })));
        let cmd = EffectorCommand {
            gripper_width: [0.07, 0.02],
            suction: [false, true],
        };
        let out = fx.apply(&cmd).unwrap();
        assert!(out[1].unwrap().confirmed.is_suction_active());
        assert_eq!(fx.gripper_width(), [0.07, 0.02]);
        let out = fx.apply(&cmd).unwrap();
        assert!(out.iter().all(Option::is_none));
    }
}
