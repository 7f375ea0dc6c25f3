use std::net::TcpListener;
use std::time::Duration;

use vacgrip::driver::{DriverError, EffectorCommand, HybridEffector, SuctionDriver};
use vacgrip::firmware::{run_device_loop, Ambient, DeviceEmulator, ManualClock, SimulatedLine};
use vacgrip::link::{spawn_device, TcpLink};
use vacgrip::pneumatics::{CupSeal, MaterialTable, PneumaticParams};
use vacgrip::protocol::Channel;

#[test]
fn driver_over_pipe_tracks_a_sealed_line() {
    let clock = ManualClock::default();
    let glass = MaterialTable::default().get("glass").unwrap().clone();
    let source = SimulatedLine::new(clock.clone(), PneumaticParams::default(), [CupSeal::sealed(glass.clone()), CupSeal::sealed(glass)]);
    let (link, device) = spawn_device(DeviceEmulator::single(Channel::Left, source));
    let mut driver = SuctionDriver::new(Channel::Left, link).with_timeout(Duration::from_secs(2));
    let st = driver.set_suction(true).unwrap();
    assert!(st.confirmed.pump_on());
    clock.advance(1.0);
    let st = driver.poll_status().unwrap();
    assert!((st.pressure_kpa + 60.0).abs() < 1.2, "{}", st.pressure_kpa);
    driver.set_suction(false).unwrap();
    clock.advance(0.5);
    assert!(driver.poll_status().unwrap().pressure_kpa > -1.0);
    let mut link = driver.into_link();
    link.close();
    device.join().unwrap().unwrap();
}

#[test]
fn hybrid_effector_over_tcp() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let server = std::thread::spawn(move || {
        Channel::ALL.map(|ch| {
            let (stream, _) = listener.accept().unwrap();
            let reader = stream.try_clone().unwrap();
            std::thread::spawn(move || run_device_loop(reader, stream, DeviceEmulator::single(ch, Ambient)).unwrap())
        })
    });
    let driver = |ch| SuctionDriver::new(ch, TcpLink::connect(&addr).unwrap()).with_timeout(Duration::from_secs(2));
    let left = driver(Channel::Left);
    let right = driver(Channel::Right);
    let mut hybrid = HybridEffector::new(left, right, 0.07);
    let cmd = EffectorCommand {
        gripper_width: [0.03, 0.0],
        suction: [false, true],
    };
    let statuses = hybrid.apply(&cmd).unwrap();
    assert!(statuses[1].unwrap().confirmed.pump_on());
    assert_eq!(hybrid.gripper_width(), [0.03, 0.0]);
    let too_wide = EffectorCommand {
        gripper_width: [0.09, 0.0],
        suction: [false, false],
    };
    assert!(matches!(hybrid.apply(&too_wide), Err(DriverError::WidthOutOfRange { .. })));
    drop(hybrid);
    let [left, right] = server.join().unwrap().map(|h| h.join().unwrap());
    assert!(!left.device(Channel::Left).unwrap().is_suction_active());
    assert!(right.device(Channel::Right).unwrap().is_suction_active());
}
