use std::ffi::CString;

use vacgrip_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { vg_last_error_message(buf.as_mut_ptr(), buf.len()) };
    let s = unsafe { std::ffi::CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap().to_owned();
    assert_eq!(s.len(), n.min(255));
    s
}

#[test]
fn command_round_trip_and_resync_codes() {
    let mut buf = [0u8; VG_MAX_FRAME];
    let mut n = 0;
    let cmd = VgCommand {
        kind: VgCommandKind::TurnOn,
        channel: VgChannel::Right,
    };
    assert_eq!(unsafe { vg_encode_command(cmd, buf.as_mut_ptr(), buf.len(), &mut n) }, VgError::Ok);
    assert_eq!(buf[0], 0xAA);
    assert_eq!(buf[n - 1], unsafe { vg_checksum(buf.as_ptr().add(2), buf[1]) });

    let mut out = VgCommand {
        kind: VgCommandKind::Query,
        channel: VgChannel::Left,
    };
    let mut used = 0;
    assert_eq!(unsafe { vg_decode_command(buf.as_ptr(), n, &mut out, &mut used) }, VgError::Ok);
    assert_eq!((out, used), (cmd, n));

    assert_eq!(unsafe { vg_decode_command(buf.as_ptr(), n - 1, &mut out, &mut used) }, VgError::Truncated);
    assert_eq!(used, 0);
    buf[n - 1] ^= 0xFF;
    assert_eq!(unsafe { vg_decode_command(buf.as_ptr(), n, &mut out, &mut used) }, VgError::Checksum);
    assert!(used > 0);
    assert!(last_error().contains("checksum"));

    let mut tiny = [0u8; 2];
    assert_eq!(unsafe { vg_encode_command(cmd, tiny.as_mut_ptr(), 2, &mut n) }, VgError::BufferTooSmall);
    assert!(n > 2);
    assert_eq!(
        unsafe { vg_decode_command(std::ptr::null(), 4, &mut out, &mut used) },
        VgError::NullPointer
    );
}

#[test]
fn status_round_trip_rejects_out_of_range_pressure() {
    let st = VgStatus {
        channel: VgChannel::Left,
        pump_on: true,
        valve_closed: true,
        pressure_centi_kpa: -5987,
        fault: 0,
    };
    let mut buf = [0u8; VG_MAX_FRAME];
    let mut n = 0;
    assert_eq!(unsafe { vg_encode_status(&st, buf.as_mut_ptr(), buf.len(), &mut n) }, VgError::Ok);
    let mut back = VgStatus { fault: 9, ..st };
    let mut used = 0;
    assert_eq!(unsafe { vg_decode_status(buf.as_ptr(), n, &mut back, &mut used) }, VgError::Ok);
    assert_eq!(back, st);
    let bad = VgStatus {
        pressure_centi_kpa: 10,
        ..st
    };
    assert_eq!(unsafe { vg_encode_status(&bad, buf.as_mut_ptr(), buf.len(), &mut n) }, VgError::InvalidArgument);
}

#[test]
fn device_handle_pumps_down_a_sealed_line() {
    let glass = CString::new("glass").unwrap();
    let dev = unsafe { vg_device_new(3, glass.as_ptr()) };
    assert!(!dev.is_null());
    let feed = |kind| {
        let mut cmd = [0u8; VG_MAX_FRAME];
        let mut n = 0;
        let c = VgCommand {
            kind,
            channel: VgChannel::Left,
        };
        unsafe { vg_encode_command(c, cmd.as_mut_ptr(), cmd.len(), &mut n) };
        let mut reply = [0u8; 64];
        let mut m = 0;
        assert_eq!(unsafe { vg_device_feed(dev, cmd.as_ptr(), n, reply.as_mut_ptr(), reply.len(), &mut m) }, VgError::Ok);
        let mut st = VgStatus {
            channel: VgChannel::Right,
            pump_on: false,
            valve_closed: false,
            pressure_centi_kpa: 0,
            fault: 0,
        };
        let mut used = 0;
        assert_eq!(unsafe { vg_decode_status(reply.as_ptr(), m, &mut st, &mut used) }, VgError::Ok);
        st
    };
    let st = feed(VgCommandKind::TurnOn);
    assert!(st.pump_on && st.valve_closed);
    assert_eq!(unsafe { vg_device_advance(dev, 1.0) }, VgError::Ok);
    let st = feed(VgCommandKind::Query);
    assert!(st.pressure_centi_kpa <= -5880, "{}", st.pressure_centi_kpa);
    let (mut pump, mut valve) = (false, false);
    assert_eq!(unsafe { vg_device_state(dev, VgChannel::Left, &mut pump, &mut valve) }, VgError::Ok);
    assert!(pump && valve);
    unsafe { vg_device_free(dev) };

    let rock = CString::new("basalt").unwrap();
    assert!(unsafe { vg_device_new(1, rock.as_ptr()) }.is_null());
    assert!(last_error().contains("basalt"));
    assert!(unsafe { vg_device_new(4, std::ptr::null()) }.is_null());
}

#[test]
fn line_handle_reports_payload_forces() {
    let glass = CString::new("glass").unwrap();
    let two = unsafe { vg_line_new(glass.as_ptr(), 2) };
    assert_eq!(unsafe { vg_line_advance(two, true, 2.0) }, VgError::Ok);
    let (mut gauge, mut steady, mut force) = (0.0, 0.0, 0.0);
    assert_eq!(unsafe { vg_line_read(two, &mut gauge, &mut steady, &mut force) }, VgError::Ok);
    assert!((gauge - steady).abs() < 0.01);
    assert!((force - 21.2057).abs() < 1e-3, "{force}");
    assert!((vg_required_force(0.537, 1.5) - 7.9019).abs() < 1e-3);
    unsafe { vg_line_free(two) };
    assert!(unsafe { vg_line_new(glass.as_ptr(), 3) }.is_null());
}
