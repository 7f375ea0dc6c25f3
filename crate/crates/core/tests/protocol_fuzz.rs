use proptest::prelude::*;
use vacgrip::protocol::*;

fn channel() -> impl Strategy<Value = Channel> {
    prop_oneof![Just(Channel::Left), Just(Channel::Right)]
}

fn command() -> impl Strategy<Value = CommandFrame> {
    (prop::sample::select(CommandKind::ALL.to_vec()), channel()).prop_map(|(k, c)| CommandFrame::new(k, c))
}

fn status() -> impl Strategy<Value = StatusFrame> {
    (
        channel(),
        any::<bool>(),
        any::<bool>(),
        PRESSURE_MIN_CENTI_KPA..=PRESSURE_MAX_CENTI_KPA,
        prop_oneof![Just(Fault::None), Just(Fault::PumpStall), Just(Fault::Desync)],
    )
        .prop_map(|(channel, pump_on, valve_closed, pressure_centi_kpa, fault)| StatusFrame {
            channel,
            pump_on,
            valve_closed,
            pressure_centi_kpa,
            fault,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn command_frames_round_trip(cmd in command()) {
        let bytes = encode_command(cmd);
        prop_assert_eq!(decode_command(&bytes).unwrap(), (cmd, bytes.len()));
    }

    #[test]
    fn status_frames_round_trip(st in status()) {
        let bytes = encode_status(&st).unwrap();
        prop_assert_eq!(decode_status(&bytes).unwrap(), (st, bytes.len()));
    }

    #[test]
    fn decoder_resyncs_after_garbage(junk in prop::collection::vec(any::<u8>(), 0..64), cmds in prop::collection::vec(command(), 1..4)) {
        let mut dec = FrameDecoder::new();
        dec.push(&junk);
        let _ = dec.drain_messages::<CommandFrame>();
        // filler covers whatever a dangling header in the junk swallows
        for _ in 0..4 {
            dec.push(&encode_command(CommandFrame::new(CommandKind::Query, Channel::Left)));
        }
        for c in &cmds {
            dec.push(&encode_command(*c));
        }
        let got: Vec<CommandFrame> = dec.drain_messages::<CommandFrame>().into_iter().filter_map(Result::ok).collect();
        prop_assert!(got.ends_with(&cmds), "{:?} vs {:?}", got, cmds);
    }

    #[test]
    fn split_points_do_not_matter(cmds in prop::collection::vec(command(), 1..6), split in 0usize..64) {
        let stream: Vec<u8> = cmds.iter().flat_map(|c| encode_command(*c)).collect();
        let at = split.min(stream.len());
        let mut dec = FrameDecoder::new();
        dec.push(&stream[..at]);
        let mut got = dec.drain_messages::<CommandFrame>();
        dec.push(&stream[at..]);
        got.extend(dec.drain_messages::<CommandFrame>());
        let got: Vec<CommandFrame> = got.into_iter().map(Result::unwrap).collect();
        prop_assert_eq!(got, cmds);
    }

    #[test]
    fn single_bit_flips_are_never_silently_accepted_as_a_different_frame(cmd in command(), bit in 0usize..40) {
        let mut bytes = encode_command(cmd);
        let i = (bit / 8) % bytes.len();
        bytes[i] ^= 1 << (bit % 8);
        if let Ok((other, _)) = decode_command(&bytes) {
            prop_assert_eq!(other, cmd);
        }
    }
}
