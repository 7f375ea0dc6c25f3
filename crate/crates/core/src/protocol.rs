//! Framed byte protocol between the host and the end-effector controller.
//!
//! Every frame on the wire is
//!
//! ```text
//! +------+--------+-----------------+----------+
//! | 0xAA | length | payload[length] | checksum |
//! +------+--------+-----------------+----------+
//! ```
//!
//! where `checksum` is the XOR of `length` and every payload byte and
//! `length` is in `1..=16`. Command payloads are `[opcode, channel]`;
//! status payloads are `[0x10, channel, flags, pressure_lo, pressure_hi, fault]`
//! with the pressure a little-endian `i16` in hundredths of a kPa.
//!
//! Decoding scans for the start-of-frame byte, so a decoder can be pointed at
//! any offset of a stream and will lock onto the next frame.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SOF: u8 = 0xAA;
pub const MAX_PAYLOAD: usize = 16;
/// SOF + length + checksum.
pub const FRAME_OVERHEAD: usize = 3;
pub const MAX_FRAME: usize = MAX_PAYLOAD + FRAME_OVERHEAD;

const STATUS_TAG: u8 = 0x10;
const STATUS_LEN: usize = 6;
const COMMAND_LEN: usize = 2;

const FLAG_PUMP_ON: u8 = 0b01;
const FLAG_VALVE_CLOSED: u8 = 0b10;

/// Full vacuum rating of the pump, in hundredths of a kPa.
pub const PRESSURE_MIN_CENTI_KPA: i16 = -6000;
pub const PRESSURE_MAX_CENTI_KPA: i16 = 0;

/// Arm channel addressed by a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Left = 0,
    Right = 1,
}

impl Channel {
    pub const ALL: [Channel; 2] = [Channel::Left, Channel::Right];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Channel::Left),
            1 => Some(Channel::Right),
            _ => None,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Channel::Left => Channel::Right,
            Channel::Right => Channel::Left,
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Channel::Left => f.write_str("left"),
            Channel::Right => f.write_str("right"),
        }
    }
}

impl std::str::FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "left" | "l" => Ok(Channel::Left),
            "right" | "r" => Ok(Channel::Right),
            other => Err(format!("unknown channel `{other}` (expected left or right)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandKind {
    /// Open the valve to atmosphere and stop the pump.
    TurnOff = 0x00,
    /// Close the valve and start the pump.
    TurnOn = 0x01,
    /// Read back status without actuating.
    Query = 0x02,
}

impl CommandKind {
    pub const ALL: [CommandKind; 3] = [CommandKind::TurnOff, CommandKind::TurnOn, CommandKind::Query];

    pub fn from_opcode(op: u8) -> Option<Self> {
        match op {
            0x00 => Some(CommandKind::TurnOff),
            0x01 => Some(CommandKind::TurnOn),
            0x02 => Some(CommandKind::Query),
            _ => None,
        }
    }

    pub fn opcode(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CommandFrame {
    pub kind: CommandKind,
    pub channel: Channel,
}

impl CommandFrame {
    pub fn new(kind: CommandKind, channel: Channel) -> Self {
        Self { kind, channel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum Fault {
    #[default]
    None = 0,
    PumpStall = 1,
    Desync = 2,
}

impl Fault {
    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Fault::None),
            1 => Some(Fault::PumpStall),
            2 => Some(Fault::Desync),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StatusFrame {
    pub channel: Channel,
    pub pump_on: bool,
    pub valve_closed: bool,
    /// Gauge pressure in hundredths of a kPa; 0 is ambient, -6000 is -60 kPa.
    pub pressure_centi_kpa: i16,
    pub fault: Fault,
}

impl StatusFrame {
    pub fn idle(channel: Channel) -> Self {
        Self {
            channel,
            pump_on: false,
            valve_closed: false,
            pressure_centi_kpa: 0,
            fault: Fault::None,
        }
    }

    pub fn pressure_kpa(&self) -> f64 {
        f64::from(self.pressure_centi_kpa) / 100.0
    }
}

/// Converts a gauge pressure in kPa to the wire representation, rounding to
/// the nearest hundredth and saturating at the representable range.
pub fn kpa_to_centi(kpa: f64) -> i16 {
    let centi = (kpa * 100.0).round();
    if centi.is_nan() {
        return 0;
    }
    centi.clamp(
        f64::from(PRESSURE_MIN_CENTI_KPA),
        f64::from(PRESSURE_MAX_CENTI_KPA),
    ) as i16
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodeError {
    #[error("pressure {0} centi-kPa outside [-6000, 0]")]
    PressureOutOfRange(i16),
    #[error("payload of {0} bytes exceeds the 16-byte frame limit")]
    PayloadTooLong(usize),
    #[error("empty payload")]
    EmptyPayload,
}

/// Decoder failures. Every variant except [`DecodeError::Truncated`] carries
/// the number of input bytes the caller must drop before decoding again.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("incomplete frame, need more bytes")]
    Truncated,
    #[error("checksum mismatch (expected {expected:#04x}, found {found:#04x})")]
    ChecksumMismatch {
        expected: u8,
        found: u8,
        consumed: usize,
    },
    #[error("unknown opcode {opcode:#04x}")]
    UnknownOpcode { opcode: u8, consumed: usize },
    #[error("unknown channel code {code:#04x}")]
    UnknownChannel { code: u8, consumed: usize },
    #[error("malformed payload: {reason}")]
    MalformedPayload {
        reason: &'static str,
        consumed: usize,
    },
    #[error("pressure {value} centi-kPa outside [-6000, 0]")]
    PressureOutOfRange { value: i16, consumed: usize },
}

impl DecodeError {
    pub fn consumed(&self) -> usize {
        match self {
            DecodeError::Truncated => 0,
            DecodeError::ChecksumMismatch { consumed, .. }
            | DecodeError::UnknownOpcode { consumed, .. }
            | DecodeError::UnknownChannel { consumed, .. }
            | DecodeError::MalformedPayload { consumed, .. }
            | DecodeError::PressureOutOfRange { consumed, .. } => *consumed,
        }
    }
}

/// Payload-level failure, before the frame offset is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PayloadError {
    UnknownOpcode(u8),
    UnknownChannel(u8),
    Malformed(&'static str),
    PressureOutOfRange(i16),
}

impl PayloadError {
    fn at(self, consumed: usize) -> DecodeError {
        match self {
            PayloadError::UnknownOpcode(opcode) => DecodeError::UnknownOpcode { opcode, consumed },
            PayloadError::UnknownChannel(code) => DecodeError::UnknownChannel { code, consumed },
            PayloadError::Malformed(reason) => DecodeError::MalformedPayload { reason, consumed },
            PayloadError::PressureOutOfRange(value) => {
                DecodeError::PressureOutOfRange { value, consumed }
            }
        }
    }
}

pub fn checksum(length: u8, payload: &[u8]) -> u8 {
    payload.iter().fold(length, |acc, b| acc ^ b)
}

/// A checked frame: SOF, length, payload and XOR checksum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawFrame {
    payload: Vec<u8>,
}

impl RawFrame {
    pub fn new(payload: &[u8]) -> Result<Self, EncodeError> {
        if payload.is_empty() {
            return Err(EncodeError::EmptyPayload);
        }
        if payload.len() > MAX_PAYLOAD {
            return Err(EncodeError::PayloadTooLong(payload.len()));
        }
        Ok(Self {
            payload: payload.to_vec(),
        })
    }

    pub fn payload(&self) -> &[u8] {
        &self.payload
    }

    pub fn checksum(&self) -> u8 {
        checksum(self.payload.len() as u8, &self.payload)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.payload.len() + FRAME_OVERHEAD);
        self.write_to(&mut out);
        out
    }

    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.push(SOF);
        out.push(self.payload.len() as u8);
        out.extend_from_slice(&self.payload);
        out.push(self.checksum());
    }

    /// Locates and checks the first frame in `bytes`.
    ///
    /// Bytes before the first SOF are skipped. An SOF followed by an
    /// impossible length byte is not a frame start and is skipped too.
    /// On success returns the frame and the number of bytes consumed,
    /// including any skipped prefix.
    pub fn parse(bytes: &[u8]) -> Result<(RawFrame, usize), DecodeError> {
        let mut cursor = 0;
        loop {
            let start = match bytes[cursor..].iter().position(|&b| b == SOF) {
                Some(off) => cursor + off,
                None => return Err(DecodeError::Truncated),
            };
            let Some(&len_byte) = bytes.get(start + 1) else {
                return Err(DecodeError::Truncated);
            };
            let len = len_byte as usize;
            if len == 0 || len > MAX_PAYLOAD {
                cursor = start + 1;
                continue;
            }
            let end = start + 2 + len;
            let Some(&found) = bytes.get(end) else {
                return Err(DecodeError::Truncated);
            };
            let payload = &bytes[start + 2..end];
            let expected = checksum(len_byte, payload);
            if expected != found {
                return Err(DecodeError::ChecksumMismatch {
                    expected,
                    found,
                    consumed: start + 1,
                });
            }
            return Ok((
                RawFrame {
                    payload: payload.to_vec(),
                },
                end + 1,
            ));
        }
    }
}

/// Number of leading bytes that can never be part of a frame.
///
/// Used by streaming decoders to bound their buffer while waiting for the
/// rest of a frame; it never discards a byte that might start a valid frame.
pub fn garbage_prefix_len(bytes: &[u8]) -> usize {
    bytes.iter().position(|&b| b == SOF).unwrap_or(bytes.len())
}

/// A message type carried in a [`RawFrame`] payload.
pub trait WireMessage: Sized {
    fn to_payload(&self) -> Result<Vec<u8>, EncodeError>;
    fn from_payload(payload: &[u8]) -> Result<Self, PayloadError>;

    fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        Ok(RawFrame::new(&self.to_payload()?)?.to_bytes())
    }

    /// Decodes the first frame in `bytes`, returning the message and the
    /// number of bytes consumed.
    fn decode(bytes: &[u8]) -> Result<(Self, usize), DecodeError> {
        let (raw, consumed) = RawFrame::parse(bytes)?;
        let msg = Self::from_payload(raw.payload()).map_err(|e| e.at(consumed))?;
        Ok((msg, consumed))
    }
}

impl WireMessage for CommandFrame {
    fn to_payload(&self) -> Result<Vec<u8>, EncodeError> {
        Ok(vec![self.kind.opcode(), self.channel as u8])
    }

    fn from_payload(payload: &[u8]) -> Result<Self, PayloadError> {
        let opcode = payload[0];
        let kind = CommandKind::from_opcode(opcode).ok_or(PayloadError::UnknownOpcode(opcode))?;
        if payload.len() != COMMAND_LEN {
            return Err(PayloadError::Malformed("command payload must be 2 bytes"));
        }
        let channel =
            Channel::from_code(payload[1]).ok_or(PayloadError::UnknownChannel(payload[1]))?;
        Ok(CommandFrame { kind, channel })
    }
}

impl WireMessage for StatusFrame {
    fn to_payload(&self) -> Result<Vec<u8>, EncodeError> {
        if !(PRESSURE_MIN_CENTI_KPA..=PRESSURE_MAX_CENTI_KPA).contains(&self.pressure_centi_kpa) {
            return Err(EncodeError::PressureOutOfRange(self.pressure_centi_kpa));
        }
        let mut flags = 0;
        if self.pump_on {
            flags |= FLAG_PUMP_ON;
        }
        if self.valve_closed {
            flags |= FLAG_VALVE_CLOSED;
        }
        let [lo, hi] = self.pressure_centi_kpa.to_le_bytes();
        Ok(vec![
            STATUS_TAG,
            self.channel as u8,
            flags,
            lo,
            hi,
            self.fault as u8,
        ])
    }

    fn from_payload(payload: &[u8]) -> Result<Self, PayloadError> {
        if payload[0] != STATUS_TAG {
            return Err(PayloadError::UnknownOpcode(payload[0]));
        }
        if payload.len() != STATUS_LEN {
            return Err(PayloadError::Malformed("status payload must be 6 bytes"));
        }
        let channel =
            Channel::from_code(payload[1]).ok_or(PayloadError::UnknownChannel(payload[1]))?;
        let flags = payload[2];
        if flags & !(FLAG_PUMP_ON | FLAG_VALVE_CLOSED) != 0 {
            return Err(PayloadError::Malformed("reserved status flag bits set"));
        }
        let pressure = i16::from_le_bytes([payload[3], payload[4]]);
        if !(PRESSURE_MIN_CENTI_KPA..=PRESSURE_MAX_CENTI_KPA).contains(&pressure) {
            return Err(PayloadError::PressureOutOfRange(pressure));
        }
        let fault = Fault::from_code(payload[5]).ok_or(PayloadError::Malformed("unknown fault code"))?;
        Ok(StatusFrame {
            channel,
            pump_on: flags & FLAG_PUMP_ON != 0,
            valve_closed: flags & FLAG_VALVE_CLOSED != 0,
            pressure_centi_kpa: pressure,
            fault,
        })
    }
}

pub fn encode_command(cmd: CommandFrame) -> Vec<u8> {
    // Command payloads are always two bytes, so encoding cannot fail.
    RawFrame {
        payload: vec![cmd.kind.opcode(), cmd.channel as u8],
    }
    .to_bytes()
}

pub fn decode_command(bytes: &[u8]) -> Result<(CommandFrame, usize), DecodeError> {
    CommandFrame::decode(bytes)
}

pub fn encode_status(st: &StatusFrame) -> Result<Vec<u8>, EncodeError> {
    st.encode()
}

pub fn decode_status(bytes: &[u8]) -> Result<(StatusFrame, usize), DecodeError> {
    StatusFrame::decode(bytes)
}

/// Incremental decoder over an ordered byte stream.
///
/// Owned by a single reader; bytes are pushed as they arrive and complete
/// messages are pulled out one at a time.
#[derive(Debug, Clone, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
        let junk = garbage_prefix_len(&self.buf);
        self.buf.drain(..junk);
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }

    /// Returns `None` when the buffer holds no complete frame. Errors are
    /// returned once each, with the offending bytes already dropped.
    pub fn next_message<M: WireMessage>(&mut self) -> Option<Result<M, DecodeError>> {
        match M::decode(&self.buf) {
            Ok((msg, consumed)) => {
                self.buf.drain(..consumed);
                Some(Ok(msg))
            }
            Err(DecodeError::Truncated) => {
                // An SOF with an impossible length byte can be dropped now.
                self.trim_dead_starts();
                None
            }
            Err(err) => {
                self.buf.drain(..err.consumed());
                let junk = garbage_prefix_len(&self.buf);
                self.buf.drain(..junk);
                Some(Err(err))
            }
        }
    }

    fn trim_dead_starts(&mut self) {
        loop {
            let junk = garbage_prefix_len(&self.buf);
            self.buf.drain(..junk);
            match self.buf.get(1) {
                Some(&len) if len == 0 || len as usize > MAX_PAYLOAD => {
                    self.buf.drain(..1);
                }
                _ => break,
            }
        }
    }

    /// Drains every complete frame currently buffered.
    pub fn drain_messages<M: WireMessage>(&mut self) -> Vec<Result<M, DecodeError>> {
        std::iter::from_fn(|| self.next_message()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_encodings_are_fixed() {
        let on_left = CommandFrame::new(CommandKind::TurnOn, Channel::Left);
        assert_eq!(encode_command(on_left), [0xAA, 0x02, 0x01, 0x00, 0x03]);
        let off_right = CommandFrame::new(CommandKind::TurnOff, Channel::Right);
        assert_eq!(encode_command(off_right), [0xAA, 0x02, 0x00, 0x01, 0x03]);
        let query_left = CommandFrame::new(CommandKind::Query, Channel::Left);
        assert_eq!(encode_command(query_left), [0xAA, 0x02, 0x02, 0x00, 0x00]);
    }

    #[test]
    fn decode_known_command() {
        let (cmd, used) = decode_command(&[0xAA, 0x02, 0x01, 0x00, 0x03]).unwrap();
        assert_eq!(cmd, CommandFrame::new(CommandKind::TurnOn, Channel::Left));
        assert_eq!(used, 5);
    }

    #[test]
    fn corrupted_checksum_is_rejected() {
        let err = decode_command(&[0xAA, 0x02, 0x01, 0x00, 0xFF]).unwrap_err();
        assert!(matches!(err, DecodeError::ChecksumMismatch { consumed: 1, .. }));
    }

    #[test]
    fn leading_garbage_is_skipped() {
        let (cmd, used) = decode_command(&[0x00, 0xAA, 0x02, 0x02, 0x00, 0x00]).unwrap();
        assert_eq!(cmd, CommandFrame::new(CommandKind::Query, Channel::Left));
        assert_eq!(used, 6);
    }

    #[test]
    fn truncated_prefix_consumes_nothing() {
        for cut in 0..5 {
            let bytes = &[0xAA, 0x02, 0x01, 0x00, 0x03][..cut];
            assert_eq!(decode_command(bytes), Err(DecodeError::Truncated));
        }
    }

    #[test]
    fn unknown_opcode_consumes_whole_frame() {
        let frame = RawFrame::new(&[0x07, 0x00]).unwrap().to_bytes();
        let err = decode_command(&frame).unwrap_err();
        assert_eq!(
            err,
            DecodeError::UnknownOpcode {
                opcode: 0x07,
                consumed: 5
            }
        );
    }

    #[test]
    fn bad_channel_code() {
        let frame = RawFrame::new(&[0x01, 0x05]).unwrap().to_bytes();
        assert!(matches!(
            decode_command(&frame),
            Err(DecodeError::UnknownChannel { code: 5, .. })
        ));
    }

    #[test]
    fn impossible_length_is_resynced_past() {
        let mut bytes = vec![0xAA, 0x40];
        bytes.extend(encode_command(CommandFrame::new(CommandKind::TurnOff, Channel::Left)));
        let (cmd, used) = decode_command(&bytes).unwrap();
        assert_eq!(cmd.kind, CommandKind::TurnOff);
        assert_eq!(used, bytes.len());
    }

    #[test]
    fn status_round_trip_full_vacuum() {
        let st = StatusFrame {
            channel: Channel::Left,
            pump_on: true,
            valve_closed: true,
            pressure_centi_kpa: -6000,
            fault: Fault::None,
        };
        let bytes = encode_status(&st).unwrap();
        assert_eq!(bytes.len(), 9);
        // little-endian -6000 = 0xE890
        assert_eq!(&bytes[5..7], &[0x90, 0xE8]);
        assert_eq!(decode_status(&bytes).unwrap(), (st, 9));
    }

    #[test]
    fn status_pressure_bound_enforced() {
        let mut st = StatusFrame::idle(Channel::Right);
        st.pressure_centi_kpa = -6001;
        assert_eq!(encode_status(&st), Err(EncodeError::PressureOutOfRange(-6001)));
        st.pressure_centi_kpa = 1;
        assert!(encode_status(&st).is_err());
    }

    #[test]
    fn all_zero_status_round_trip() {
        let st = StatusFrame::idle(Channel::Left);
        let bytes = encode_status(&st).unwrap();
        assert_eq!(decode_status(&bytes).unwrap().0, st);
    }

    #[test]
    fn status_is_not_a_command() {
        let bytes = encode_status(&StatusFrame::idle(Channel::Left)).unwrap();
        assert!(matches!(
            decode_command(&bytes),
            Err(DecodeError::UnknownOpcode { opcode: 0x10, .. })
        ));
    }

    #[test]
    fn streaming_decoder_handles_split_frames() {
        let mut dec = FrameDecoder::new();
        let a = encode_command(CommandFrame::new(CommandKind::TurnOn, Channel::Right));
        let b = encode_command(CommandFrame::new(CommandKind::Query, Channel::Left));
        dec.push(&[0x13, 0x37]);
        dec.push(&a[..3]);
        assert!(dec.next_message::<CommandFrame>().is_none());
        dec.push(&a[3..]);
        dec.push(&b);
        let got: Vec<_> = dec.drain_messages::<CommandFrame>();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].as_ref().unwrap().channel, Channel::Right);
        assert_eq!(got[1].as_ref().unwrap().kind, CommandKind::Query);
        assert_eq!(dec.buffered(), 0);
    }

    #[test]
    fn kpa_conversion_saturates() {
        assert_eq!(kpa_to_centi(-60.0), -6000);
        assert_eq!(kpa_to_centi(-75.0), -6000);
        assert_eq!(kpa_to_centi(0.2), 0);
        assert_eq!(kpa_to_centi(-12.345), -1235);
    }
}
