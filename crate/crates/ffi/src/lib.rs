//! C ABI over the vacgrip frame codec, the emulated suction controller and
//! the pneumatic line model.
//!
//! Every fallible function returns a [`VgError`] code; `VG_ERROR_OK` is zero.
//! Details of the last failure on the calling thread are available from
//! [`vg_last_error_message`]. Handles are opaque and must be released with
//! their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vacgrip::firmware::{DeviceEmulator, DeviceState, ManualClock, SimulatedLine};
use vacgrip::pneumatics::{
    advance_line, required_hold_force, steady_state_kpa, suction_force, CupSeal, LineState, MaterialTable,
    PneumaticParams,
};
use vacgrip::protocol::{
    self, Channel, CommandFrame, CommandKind, DecodeError, Fault, StatusFrame, MAX_FRAME,
};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgError {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    /// More bytes are needed to complete a frame.
    Truncated = 4,
    Checksum = 5,
    /// A complete frame with bad contents; drop `consumed` bytes and retry.
    Malformed = 6,
    UnknownMaterial = 7,
    Panic = 99,
}

/// Command opcodes as sent on the wire.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgCommandKind {
    TurnOff = 0,
    TurnOn = 1,
    Query = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VgChannel {
    Left = 0,
    Right = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VgCommand {
    pub kind: VgCommandKind,
    pub channel: VgChannel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VgStatus {
    pub channel: VgChannel,
    pub pump_on: bool,
    pub valve_closed: bool,
    /// Gauge pressure, hundredths of a kPa, in [-6000, 0].
    pub pressure_centi_kpa: i16,
    /// 0 none, 1 pump stall, 2 desync.
    pub fault: u8,
}

/// Emulated controller for one or both channels, with a simulated line
/// whose clock only moves through [`vg_device_advance`].
pub struct VgDevice {
    emulator: DeviceEmulator<SimulatedLine<ManualClock>>,
    clock: ManualClock,
}

/// One pneumatic line with two cups.
pub struct VgLine {
    line: LineState,
    params: PneumaticParams,
}

/// Longest encoded frame, bytes.
pub const VG_MAX_FRAME: usize = 19;
const _: () = assert!(VG_MAX_FRAME == MAX_FRAME);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(code: VgError, msg: impl Into<String>) -> VgError {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
    code
}

fn guard(f: impl FnOnce() -> VgError) -> VgError {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(VgError::Panic, "panic inside vacgrip"))
}

fn channel_in(c: VgChannel) -> Channel {
    match c {
        VgChannel::Left => Channel::Left,
        VgChannel::Right => Channel::Right,
    }
}

fn channel_out(c: Channel) -> VgChannel {
    match c {
        Channel::Left => VgChannel::Left,
        Channel::Right => VgChannel::Right,
    }
}

fn kind_in(k: VgCommandKind) -> CommandKind {
    match k {
        VgCommandKind::TurnOff => CommandKind::TurnOff,
        VgCommandKind::TurnOn => CommandKind::TurnOn,
        VgCommandKind::Query => CommandKind::Query,
    }
}

fn kind_out(k: CommandKind) -> VgCommandKind {
    match k {
        CommandKind::TurnOff => VgCommandKind::TurnOff,
        CommandKind::TurnOn => VgCommandKind::TurnOn,
        CommandKind::Query => VgCommandKind::Query,
    }
}

fn status_out(s: &StatusFrame) -> VgStatus {
    VgStatus {
        channel: channel_out(s.channel),
        pump_on: s.pump_on,
        valve_closed: s.valve_closed,
        pressure_centi_kpa: s.pressure_centi_kpa,
        fault: s.fault as u8,
    }
}

fn decode_error(e: &DecodeError) -> VgError {
    let code = match e {
        DecodeError::Truncated => VgError::Truncated,
        DecodeError::ChecksumMismatch { .. } => VgError::Checksum,
        _ => VgError::Malformed,
    };
    fail(code, e.to_string())
}

unsafe fn write_bytes(bytes: &[u8], out: *mut u8, cap: usize, written: *mut usize) -> VgError {
    if out.is_null() || written.is_null() {
        return fail(VgError::NullPointer, "null output pointer");
    }
    *written = bytes.len();
    if bytes.len() > cap {
        return fail(VgError::BufferTooSmall, format!("need {} bytes, have {cap}", bytes.len()));
    }
    std::ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
    VgError::Ok
}

unsafe fn input<'a>(bytes: *const u8, len: usize) -> Option<&'a [u8]> {
    if len == 0 {
        return Some(&[]);
    }
    (!bytes.is_null()).then(|| std::slice::from_raw_parts(bytes, len))
}

unsafe fn cup_seal(name: *const c_char) -> Result<CupSeal, VgError> {
    if name.is_null() {
        return Ok(CupSeal::Open);
    }
    let name = CStr::from_ptr(name)
        .to_str()
        .map_err(|_| fail(VgError::InvalidArgument, "material name is not UTF-8"))?;
    MaterialTable::default()
        .get(name)
        .map(|m| CupSeal::sealed(m.clone()))
        .ok_or_else(|| fail(VgError::UnknownMaterial, format!("unknown material {name:?}")))
}

/// Copies the last error message on this thread into `buf` as a
/// NUL-terminated string, truncating to fit. Returns the full message
/// length excluding the terminator.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn vg_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// XOR checksum over the length byte and payload.
///
/// # Safety
/// `payload` must point to `len` readable bytes (or be null when `len` is 0).
#[no_mangle]
pub unsafe extern "C" fn vg_checksum(payload: *const u8, len: u8) -> u8 {
    input(payload, len as usize).map_or(0, |p| protocol::checksum(len, p))
}

/// Encodes a command frame into `out`; `written` receives the frame length
/// (also on `VG_ERROR_BUFFER_TOO_SMALL`).
///
/// # Safety
/// `out` must point to `cap` writable bytes and `written` to a `size_t`.
#[no_mangle]
pub unsafe extern "C" fn vg_encode_command(cmd: VgCommand, out: *mut u8, cap: usize, written: *mut usize) -> VgError {
    guard(|| {
        let bytes = protocol::encode_command(CommandFrame::new(kind_in(cmd.kind), channel_in(cmd.channel)));
        write_bytes(&bytes, out, cap, written)
    })
}

/// Decodes one command frame from the start of `bytes`. `consumed` receives
/// how many bytes to drop before the next call (0 when truncated).
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out` and `consumed` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vg_decode_command(
    bytes: *const u8,
    len: usize,
    out: *mut VgCommand,
    consumed: *mut usize,
) -> VgError {
    guard(|| {
        let (Some(buf), false, false) = (input(bytes, len), out.is_null(), consumed.is_null()) else {
            return fail(VgError::NullPointer, "null pointer argument");
        };
        match protocol::decode_command(buf) {
            Ok((cmd, n)) => {
                *out = VgCommand {
                    kind: kind_out(cmd.kind),
                    channel: channel_out(cmd.channel),
                };
                *consumed = n;
                VgError::Ok
            }
            Err(e) => {
                *consumed = e.consumed();
                decode_error(&e)
            }
        }
    })
}

/// Encodes a status frame.
///
/// # Safety
/// `status` must be readable; `out` must point to `cap` writable bytes and
/// `written` to a `size_t`.
#[no_mangle]
pub unsafe extern "C" fn vg_encode_status(
    status: *const VgStatus,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> VgError {
    guard(|| {
        if status.is_null() {
            return fail(VgError::NullPointer, "null status");
        }
        let s = *status;
        let Some(fault) = Fault::from_code(s.fault) else {
            return fail(VgError::InvalidArgument, format!("unknown fault code {}", s.fault));
        };
        let frame = StatusFrame {
            channel: channel_in(s.channel),
            pump_on: s.pump_on,
            valve_closed: s.valve_closed,
            pressure_centi_kpa: s.pressure_centi_kpa,
            fault,
        };
        match protocol::encode_status(&frame) {
            Ok(bytes) => write_bytes(&bytes, out, cap, written),
            Err(e) => fail(VgError::InvalidArgument, e.to_string()),
        }
    })
}

/// Decodes one status frame from the start of `bytes`.
///
/// # Safety
/// As for [`vg_decode_command`].
#[no_mangle]
pub unsafe extern "C" fn vg_decode_status(
    bytes: *const u8,
    len: usize,
    out: *mut VgStatus,
    consumed: *mut usize,
) -> VgError {
    guard(|| {
        let (Some(buf), false, false) = (input(bytes, len), out.is_null(), consumed.is_null()) else {
            return fail(VgError::NullPointer, "null pointer argument");
        };
        match protocol::decode_status(buf) {
            Ok((st, n)) => {
                *out = status_out(&st);
                *consumed = n;
                VgError::Ok
            }
            Err(e) => {
                *consumed = e.consumed();
                decode_error(&e)
            }
        }
    })
}

/// Creates an emulated controller. `channels` is a bit mask (1 left,
/// 2 right, 3 both). `material` names what the cups are sealed against, or
/// null for open cups. Returns null on failure.
///
/// # Safety
/// `material` must be null or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vg_device_new(channels: u8, material: *const c_char) -> *mut VgDevice {
    let mut dev = None;
    guard(|| {
        let seal = match cup_seal(material) {
            Ok(s) => s,
            Err(e) => return e,
        };
        let clock = ManualClock::default();
        let source = SimulatedLine::new(clock.clone(), PneumaticParams::default(), [seal.clone(), seal]);
        let emulator = match channels {
            1 => DeviceEmulator::single(Channel::Left, source),
            2 => DeviceEmulator::single(Channel::Right, source),
            3 => DeviceEmulator::dual(source),
            m => return fail(VgError::InvalidArgument, format!("channel mask {m} is not 1, 2 or 3")),
        };
        dev = Some(Box::new(VgDevice { emulator, clock }));
        VgError::Ok
    });
    dev.map_or(std::ptr::null_mut(), Box::into_raw)
}

/// Releases a device. Null is ignored.
///
/// # Safety
/// `dev` must come from [`vg_device_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vg_device_free(dev: *mut VgDevice) {
    if !dev.is_null() {
        drop(Box::from_raw(dev));
    }
}

/// Moves the device clock forward; the line pressure integrates over the
/// interval at the next command.
///
/// # Safety
/// `dev` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vg_device_advance(dev: *mut VgDevice, seconds: f64) -> VgError {
    guard(|| {
        let Some(dev) = dev.as_mut() else {
            return fail(VgError::NullPointer, "null device");
        };
        if !(seconds.is_finite() && seconds >= 0.0) {
            return fail(VgError::InvalidArgument, "seconds must be finite and >= 0");
        }
        dev.clock.advance(seconds);
        VgError::Ok
    })
}

/// Feeds host bytes to the device and writes its replies (one status frame
/// per valid command) to `out`. Bad input is skipped, never fatal.
///
/// # Safety
/// `bytes` must point to `len` readable bytes, `out` to `cap` writable
/// bytes, `written` to a `size_t`.
#[no_mangle]
pub unsafe extern "C" fn vg_device_feed(
    dev: *mut VgDevice,
    bytes: *const u8,
    len: usize,
    out: *mut u8,
    cap: usize,
    written: *mut usize,
) -> VgError {
    guard(|| {
        let (Some(dev), Some(buf)) = (dev.as_mut(), input(bytes, len)) else {
            return fail(VgError::NullPointer, "null pointer argument");
        };
        let reply = dev.emulator.feed(buf);
        write_bytes(&reply, out, cap, written)
    })
}

/// Current pump and valve state of one channel.
///
/// # Safety
/// `dev` must be a live handle; `pump_on` and `valve_closed` writable.
#[no_mangle]
pub unsafe extern "C" fn vg_device_state(
    dev: *const VgDevice,
    channel: VgChannel,
    pump_on: *mut bool,
    valve_closed: *mut bool,
) -> VgError {
    guard(|| {
        let (Some(dev), false, false) = (dev.as_ref(), pump_on.is_null(), valve_closed.is_null()) else {
            return fail(VgError::NullPointer, "null pointer argument");
        };
        match dev.emulator.device(channel_in(channel)) {
            Some(d) => {
                *pump_on = d.pump_on();
                *valve_closed = d.valve_closed();
                VgError::Ok
            }
            None => fail(VgError::InvalidArgument, "device does not serve that channel"),
        }
    })
}

/// Creates a line at ambient with `sealed_cups` (0..=2) sealed against
/// `material`; the rest are open. Returns null on failure.
///
/// # Safety
/// `material` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vg_line_new(material: *const c_char, sealed_cups: u8) -> *mut VgLine {
    let mut line = None;
    guard(|| {
        if material.is_null() {
            return fail(VgError::NullPointer, "null material");
        }
        if sealed_cups > 2 {
            return fail(VgError::InvalidArgument, "a line has two cups");
        }
        let seal = match cup_seal(material) {
            Ok(s) => s,
            Err(e) => return e,
        };
        let cups = [0, 1].map(|i| if i < sealed_cups { seal.clone() } else { CupSeal::Open });
        line = Some(Box::new(VgLine {
            line: LineState::ambient().with_cups(cups),
            params: PneumaticParams::default(),
        }));
        VgError::Ok
    });
    line.map_or(std::ptr::null_mut(), Box::into_raw)
}

/// Releases a line. Null is ignored.
///
/// # Safety
/// `line` must come from [`vg_line_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vg_line_free(line: *mut VgLine) {
    if !line.is_null() {
        drop(Box::from_raw(line));
    }
}

/// Integrates the line for `seconds` with suction on (pump running, valve
/// closed) or off (vented).
///
/// # Safety
/// `line` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vg_line_advance(line: *mut VgLine, suction_on: bool, seconds: f64) -> VgError {
    guard(|| {
        let Some(l) = line.as_mut() else {
            return fail(VgError::NullPointer, "null line");
        };
        if !(seconds.is_finite() && seconds >= 0.0) {
            return fail(VgError::InvalidArgument, "seconds must be finite and >= 0");
        }
        let device = if suction_on {
            DeviceState::suction_active(Channel::Left)
        } else {
            DeviceState::idle(Channel::Left)
        };
        advance_line(&mut l.line, &device, &l.params, seconds);
        VgError::Ok
    })
}

/// Gauge pressure (kPa), plateau pressure with suction on (kPa), and the
/// current holding force (N).
///
/// # Safety
/// `line` must be a live handle; outputs may be null to skip them.
#[no_mangle]
pub unsafe extern "C" fn vg_line_read(
    line: *const VgLine,
    gauge_kpa: *mut f64,
    steady_kpa: *mut f64,
    force_n: *mut f64,
) -> VgError {
    guard(|| {
        let Some(l) = line.as_ref() else {
            return fail(VgError::NullPointer, "null line");
        };
        if let Some(p) = gauge_kpa.as_mut() {
            *p = l.line.gauge_kpa();
        }
        if let Some(p) = steady_kpa.as_mut() {
            *p = steady_state_kpa(&l.line, &l.params);
        }
        if let Some(p) = force_n.as_mut() {
            *p = suction_force(&l.line, &l.params);
        }
        VgError::Ok
    })
}

/// Force needed to hold `mass_kg` with the given safety factor, N.
#[no_mangle]
pub extern "C" fn vg_required_force(mass_kg: f64, safety_factor: f64) -> f64 {
    required_hold_force(mass_kg, safety_factor)
}
