//! MCU emulation: relay, L298N-driven solenoid valve and vacuum pump,
//! modelled as a deterministic state machine over wire-protocol frames.
//!
//! The pump and valve always switch together. A turn-on closes the valve
//! and starts the pump; a turn-off opens the valve to atmosphere and stops
//! the pump. There is no API that moves only one of them, so the two mixed
//! states are unreachable.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{debug, warn};
use thiserror::Error;

use crate::pneumatics::{self, CupSeal, LineState, PneumaticParams};
use crate::protocol::{
    kpa_to_centi, Channel, CommandFrame, CommandKind, Fault, FrameDecoder, StatusFrame,
    WireMessage,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FirmwareError {
    #[error("command for {command} channel sent to {device} device")]
    ChannelMismatch { device: Channel, command: Channel },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DeviceState {
    channel: Channel,
    pump_on: bool,
    valve_closed: bool,
    uptime_ticks: u64,
    stall_injected: bool,
}

impl DeviceState {
    /// Vented idle: valve open to atmosphere, pump off.
    pub fn idle(channel: Channel) -> Self {
        Self {
            channel,
            pump_on: false,
            valve_closed: false,
            uptime_ticks: 0,
            stall_injected: false,
        }
    }

    /// Suction active: valve closed, pump running.
    pub fn suction_active(channel: Channel) -> Self {
        Self {
            pump_on: true,
            valve_closed: true,
            ..Self::idle(channel)
        }
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn pump_on(&self) -> bool {
        self.pump_on
    }

    pub fn valve_closed(&self) -> bool {
        self.valve_closed
    }

    pub fn is_suction_active(&self) -> bool {
        self.pump_on && self.valve_closed
    }

    pub fn uptime_ticks(&self) -> u64 {
        self.uptime_ticks
    }

    pub fn tick(&mut self) {
        self.uptime_ticks += 1;
    }

    /// Test hook: while set, turn-on requests are refused and reported as
    /// [`Fault::PumpStall`]. The device stays vented.
    pub fn with_injected_stall(mut self, stalled: bool) -> Self {
        self.stall_injected = stalled;
        self
    }

    pub fn stall_injected(&self) -> bool {
        self.stall_injected
    }

    fn set_suction(&mut self, on: bool) {
        self.pump_on = on;
        self.valve_closed = on;
    }

    pub fn status(&self, pressure_kpa: f64, fault: Fault) -> StatusFrame {
        StatusFrame {
            channel: self.channel,
            pump_on: self.pump_on,
            valve_closed: self.valve_closed,
            pressure_centi_kpa: kpa_to_centi(pressure_kpa),
            fault,
        }
    }
}

/// Applies one command. The returned status reflects the state *after*
/// actuation together with `pressure_kpa`, the current line reading.
pub fn handle_command(
    state: &DeviceState,
    cmd: CommandFrame,
    pressure_kpa: f64,
) -> Result<(DeviceState, StatusFrame), FirmwareError> {
    if cmd.channel != state.channel {
        return Err(FirmwareError::ChannelMismatch {
            device: state.channel,
            command: cmd.channel,
        });
    }
    let mut next = *state;
    let mut fault = Fault::None;
    match cmd.kind {
        CommandKind::TurnOn if state.stall_injected => {
            next.set_suction(false);
            fault = Fault::PumpStall;
        }
        CommandKind::TurnOn => next.set_suction(true),
        CommandKind::TurnOff => next.set_suction(false),
        CommandKind::Query => {}
    }
    let status = next.status(pressure_kpa, fault);
    Ok((next, status))
}

/// Where the emulated controller gets its line pressure reading.
///
/// `read` is called just before a command is applied, with the device
/// state that has been in effect since the previous call.
pub trait PressureSource {
    fn read(&mut self, device: &DeviceState) -> f64;
}

/// No sensor: always reports ambient, as a hardware port without a
/// transducer would.
#[derive(Debug, Clone, Copy, Default)]
pub struct Ambient;

impl PressureSource for Ambient {
    fn read(&mut self, _device: &DeviceState) -> f64 {
        0.0
    }
}

/// Gauge values published by a simulation loop that owns the pneumatics.
#[derive(Debug, Clone, Default)]
pub struct SharedGauge(pub Arc<Mutex<[f64; 2]>>);

impl SharedGauge {
    pub fn publish(&self, channel: Channel, kpa: f64) {
        self.0.lock().expect("gauge lock poisoned")[channel.index()] = kpa;
    }
}

impl PressureSource for SharedGauge {
    fn read(&mut self, device: &DeviceState) -> f64 {
        self.0.lock().expect("gauge lock poisoned")[device.channel().index()]
    }
}

/// Seconds since some fixed origin.
pub trait Clock {
    fn now_s(&self) -> f64;
}

#[derive(Debug, Clone)]
pub struct WallClock(Instant);

impl Default for WallClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for WallClock {
    fn now_s(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Manually advanced clock, shareable between a test and a device thread.
#[derive(Debug, Clone, Default)]
pub struct ManualClock(Arc<AtomicU64>);

impl ManualClock {
    pub fn set(&self, seconds: f64) {
        self.0.store(seconds.to_bits(), Ordering::SeqCst);
    }

    pub fn advance(&self, seconds: f64) {
        self.set(self.now_s() + seconds);
    }
}

impl Clock for ManualClock {
    fn now_s(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::SeqCst))
    }
}

/// Integrates a pneumatic line per channel against a clock, with fixed cup
/// contacts. Stands in for a physical pressure transducer.
#[derive(Debug, Clone)]
pub struct SimulatedLine<C: Clock> {
    clock: C,
    params: PneumaticParams,
    lines: [LineState; 2],
    last: [f64; 2],
}

impl<C: Clock> SimulatedLine<C> {
    pub fn new(clock: C, params: PneumaticParams, cups: [CupSeal; 2]) -> Self {
        let now = clock.now_s();
        let line = LineState::ambient().with_cups(cups);
        Self {
            clock,
            params,
            lines: [line.clone(), line],
            last: [now; 2],
        }
    }

    pub fn line(&self, channel: Channel) -> &LineState {
        &self.lines[channel.index()]
    }
}

impl<C: Clock> PressureSource for SimulatedLine<C> {
    fn read(&mut self, device: &DeviceState) -> f64 {
        let i = device.channel().index();
        let now = self.clock.now_s();
        let elapsed = (now - self.last[i]).max(0.0);
        self.last[i] = now;
        pneumatics::advance_line(&mut self.lines[i], device, &self.params, elapsed);
        self.lines[i].gauge_kpa()
    }
}

/// One or two device channels behind a single byte stream.
pub struct DeviceEmulator<S> {
    devices: Vec<DeviceState>,
    decoder: FrameDecoder,
    source: S,
    rejected: u64,
}

impl<S: PressureSource> DeviceEmulator<S> {
    pub fn single(channel: Channel, source: S) -> Self {
        Self::with_devices(vec![DeviceState::idle(channel)], source)
    }

    pub fn dual(source: S) -> Self {
        Self::with_devices(
            vec![DeviceState::idle(Channel::Left), DeviceState::idle(Channel::Right)],
            source,
        )
    }

    pub fn with_devices(devices: Vec<DeviceState>, source: S) -> Self {
        Self {
            devices,
            decoder: FrameDecoder::new(),
            source,
            rejected: 0,
        }
    }

    pub fn device(&self, channel: Channel) -> Option<&DeviceState> {
        self.devices.iter().find(|d| d.channel() == channel)
    }

    pub fn device_mut(&mut self, channel: Channel) -> Option<&mut DeviceState> {
        self.devices.iter_mut().find(|d| d.channel() == channel)
    }

    pub fn source_mut(&mut self) -> &mut S {
        &mut self.source
    }

    /// Frames dropped for bad checksum, unknown codes or unhosted channels.
    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    /// Feeds raw input bytes; returns the encoded status frames produced,
    /// one per valid command, in order.
    pub fn feed(&mut self, bytes: &[u8]) -> Vec<u8> {
        self.decoder.push(bytes);
        let mut out = Vec::new();
        while let Some(next) = self.decoder.next_message::<CommandFrame>() {
            match next {
                Ok(cmd) => match self.apply(cmd) {
                    Some(status) => out.extend(
                        status
                            .encode()
                            .expect("status pressure is clamped at construction"),
                    ),
                    None => self.rejected += 1,
                },
                Err(err) => {
                    debug!("dropping malformed frame: {err}");
                    self.rejected += 1;
                }
            }
        }
        out
    }

    fn apply(&mut self, cmd: CommandFrame) -> Option<StatusFrame> {
        let Some(idx) = self.devices.iter().position(|d| d.channel() == cmd.channel) else {
            warn!("command for unhosted {} channel ignored", cmd.channel);
            return None;
        };
        let reading = self.source.read(&self.devices[idx]);
        let (next, status) = handle_command(&self.devices[idx], cmd, reading).ok()?;
        self.devices[idx] = next;
        Some(status)
    }
}

/// Service loop: decodes commands from `input`, writes one status frame per
/// valid command to `output`. Returns the final device states when the
/// input stream closes. Bytes of an unfinished frame at close are dropped.
pub fn run_device_loop<R, W, S>(
    mut input: R,
    mut output: W,
    mut emulator: DeviceEmulator<S>,
) -> io::Result<DeviceEmulator<S>>
where
    R: Read,
    W: Write,
    S: PressureSource,
{
    let mut buf = [0u8; 256];
    loop {
        let n = match input.read(&mut buf) {
            Ok(0) => return Ok(emulator),
            Ok(n) => n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e)
                if matches!(
                    e.kind(),
                    io::ErrorKind::ConnectionReset | io::ErrorKind::BrokenPipe
                ) =>
            {
                return Ok(emulator)
            }
            Err(e) => return Err(e),
        };
        for device in &mut emulator.devices {
            device.tick();
        }
        let out = emulator.feed(&buf[..n]);
        if !out.is_empty() {
            output.write_all(&out)?;
            output.flush()?;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{decode_status, encode_command};

    fn cmd(kind: CommandKind) -> CommandFrame {
        CommandFrame::new(kind, Channel::Left)
    }

    #[test]
    fn turn_on_closes_valve_and_starts_pump() {
        let idle = DeviceState::idle(Channel::Left);
        let (next, status) = handle_command(&idle, cmd(CommandKind::TurnOn), 0.0).unwrap();
        assert!(next.pump_on() && next.valve_closed());
        assert!(status.pump_on && status.valve_closed);
        assert_eq!(status.fault, Fault::None);
    }

    #[test]
    fn turn_off_vents() {
        let active = DeviceState::suction_active(Channel::Left);
        let (next, status) = handle_command(&active, cmd(CommandKind::TurnOff), -42.0).unwrap();
        assert_eq!(next, DeviceState::idle(Channel::Left));
        assert!(!status.pump_on && !status.valve_closed);
        assert_eq!(status.pressure_centi_kpa, -4200);
    }

    #[test]
    fn repeated_turn_on_is_idempotent() {
        let idle = DeviceState::idle(Channel::Left);
        let (once, s1) = handle_command(&idle, cmd(CommandKind::TurnOn), 0.0).unwrap();
        let (twice, s2) = handle_command(&once, cmd(CommandKind::TurnOn), 0.0).unwrap();
        assert_eq!(once, twice);
        assert_eq!(s1, s2);
    }

    #[test]
    fn query_leaves_state_alone() {
        for start in [DeviceState::idle(Channel::Left), DeviceState::suction_active(Channel::Left)] {
            let (next, status) = handle_command(&start, cmd(CommandKind::Query), -1.0).unwrap();
            assert_eq!(next, start);
            assert_eq!(status.pump_on, start.pump_on());
        }
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let idle = DeviceState::idle(Channel::Right);
        assert_eq!(
            handle_command(&idle, cmd(CommandKind::TurnOn), 0.0),
            Err(FirmwareError::ChannelMismatch {
                device: Channel::Right,
                command: Channel::Left
            })
        );
    }

    #[test]
    fn injected_stall_refuses_turn_on_without_mixed_state() {
        let idle = DeviceState::idle(Channel::Left).with_injected_stall(true);
        let (next, status) = handle_command(&idle, cmd(CommandKind::TurnOn), 0.0).unwrap();
        assert!(!next.pump_on() && !next.valve_closed());
        assert_eq!(status.fault, Fault::PumpStall);
    }

    #[test]
    fn device_loop_answers_turn_on() {
        let input = encode_command(cmd(CommandKind::TurnOn));
        let mut out = Vec::new();
        let emu = run_device_loop(&input[..], &mut out, DeviceEmulator::single(Channel::Left, Ambient))
            .unwrap();
        let (status, used) = decode_status(&out).unwrap();
        assert_eq!(used, out.len());
        assert!(status.pump_on);
        assert!(emu.device(Channel::Left).unwrap().is_suction_active());
    }

    #[test]
    fn device_loop_drops_partial_frame_at_close() {
        let input = &encode_command(cmd(CommandKind::TurnOn))[..4];
        let mut out = Vec::new();
        let emu = run_device_loop(input, &mut out, DeviceEmulator::single(Channel::Left, Ambient))
            .unwrap();
        assert!(out.is_empty());
        assert!(!emu.device(Channel::Left).unwrap().is_suction_active());
    }

    #[test]
    fn unhosted_channel_gets_no_reply() {
        let mut emu = DeviceEmulator::single(Channel::Left, Ambient);
        let out = emu.feed(&encode_command(CommandFrame::new(CommandKind::TurnOn, Channel::Right)));
        assert!(out.is_empty());
        assert_eq!(emu.rejected(), 1);
    }

    #[test]
    fn simulated_line_tracks_manual_clock() {
        let clock = ManualClock::default();
        let params = PneumaticParams::default();
        let glass = pneumatics::MaterialTable::default().get("glass").unwrap().clone();
        let cups = [CupSeal::sealed(glass.clone()), CupSeal::sealed(glass)];
        let mut src = SimulatedLine::new(clock.clone(), params, cups);
        let on = DeviceState::suction_active(Channel::Left);
        assert_eq!(src.read(&on), 0.0);
        clock.advance(2.0);
        let p = src.read(&on);
        assert!((p + 60.0).abs() < 0.01, "p = {p}");
    }
}
