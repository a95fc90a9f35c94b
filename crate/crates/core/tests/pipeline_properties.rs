mod common;

use std::io::Cursor;

use common::{crc16_bitwise, lab_params};
use proptest::prelude::*;
use stem_twin::electromech::{simulate, DriveSignal, Mode, SimTrace, ThermalParams};
use stem_twin::pipeline_io::*;

fn thermal() -> ThermalParams {
    ThermalParams {
        r_th: 31.0,
        c_th: 40.0 / 31.0,
        t_amb: 25.0,
    }
}

fn frame_strategy() -> impl Strategy<Value = DeviceFrame> {
    (
        any::<u8>(),
        prop::collection::vec(-MAX_SAMPLE_MV..=MAX_SAMPLE_MV, 1..=MAX_RECORDS),
    )
        .prop_map(|(seq, samples)| DeviceFrame { seq, samples })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn crc_matches_bitwise_reference(data in prop::collection::vec(any::<u8>(), 0..300)) {
        prop_assert_eq!(crc16(&data), crc16_bitwise(&data));
    }

    #[test]
    fn every_single_bit_flip_changes_crc(data in prop::collection::vec(any::<u8>(), 64)) {
        let base = crc16(&data);
        let mut buf = data.clone();
        for bit in 0..64 * 8 {
            buf[bit / 8] ^= 1 << (bit % 8);
            prop_assert_ne!(crc16(&buf), base);
            buf[bit / 8] ^= 1 << (bit % 8);
        }
    }

    #[test]
    fn drive_frames_round_trip(f in frame_strategy()) {
        let bytes = encode_frame(&f).unwrap();
        prop_assert_eq!(bytes.len(), 5 + 2 * f.samples.len());
        let (back, used) = decode_frame::<DeviceFrame>(&bytes).unwrap();
        prop_assert_eq!(used, bytes.len());
        prop_assert_eq!(back, f);
    }

    #[test]
    fn telemetry_frames_round_trip(
        seq in any::<u8>(),
        recs in prop::collection::vec((any::<u32>(), any::<i16>(), any::<i16>()), 1..=MAX_RECORDS),
    ) {
        let f = TelemetryFrame {
            seq,
            records: recs
                .into_iter()
                .map(|(t_ms, force_mn, temp_centi_c)| TelemetryRecord { t_ms, force_mn, temp_centi_c })
                .collect(),
        };
        let bytes = encode_frame(&f).unwrap();
        prop_assert_eq!(decode_frame::<TelemetryFrame>(&bytes).unwrap().0, f);
    }

    #[test]
    fn one_corrupted_byte_costs_at_most_two_frames(
        frames in prop::collection::vec(frame_strategy(), 3..12),
        pick in any::<prop::sample::Index>(),
        at in any::<prop::sample::Index>(),
        mask in 1u8..=255,
    ) {
        let j = pick.index(frames.len());
        let mut stream = Vec::new();
        let mut hit = 0;
        for (k, f) in frames.iter().enumerate() {
            let mut b = encode_frame(f).unwrap();
            if k == j {
                hit = at.index(b.len());
                b[hit] ^= mask;
            }
            stream.extend(b);
        }
        let decoded: Vec<DeviceFrame> = decode_stream::<DeviceFrame>(&stream)
            .into_iter()
            .filter_map(Result::ok)
            .collect();
        // a damaged sync byte also withholds confirmation from the frame before
        let expected: Vec<DeviceFrame> = frames
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != j && !(hit == 0 && k + 1 == j))
            .map(|(_, f)| f.clone())
            .collect();
        prop_assert_eq!(decoded, expected);
    }

    #[test]
    fn decoder_output_always_verifies(noise in prop::collection::vec(any::<u8>(), 0..2000)) {
        for f in decode_stream::<DeviceFrame>(&noise).into_iter().flatten() {
            let b = encode_frame(&f).unwrap();
            let n = b.len();
            prop_assert_eq!(crc16(&b[..n - 2]), u16::from_be_bytes([b[n - 2], b[n - 1]]));
        }
    }
}

#[test]
fn streamed_input_matches_one_shot() {
    let frames: Vec<DeviceFrame> = (0..20u8)
        .map(|s| DeviceFrame {
            seq: s,
            samples: vec![i16::from(s) * 100 - 900; 1 + usize::from(s) % 7],
        })
        .collect();
    let bytes: Vec<u8> = frames.iter().flat_map(|f| encode_frame(f).unwrap()).collect();
    let mut dec = StreamDecoder::<DeviceFrame>::new();
    let mut got = Vec::new();
    for chunk in bytes.chunks(3) {
        dec.push(chunk);
        got.extend(dec.by_ref().filter_map(Result::ok));
    }
    // the last frame waits for either more input or the end of the stream
    assert_eq!(got.len(), frames.len() - 1);
    dec.finish();
    got.extend(dec.by_ref().filter_map(Result::ok));
    assert_eq!(got, frames);
}

#[test]
fn truncated_and_bad_count() {
    let bytes = encode_frame(&DeviceFrame {
        seq: 1,
        samples: vec![10, 20, 30],
    })
    .unwrap();
    for cut in 1..bytes.len() {
        assert!(matches!(
            decode_frame::<DeviceFrame>(&bytes[..cut]),
            Err(FrameError::Truncated { .. })
        ));
    }
    let mut zero = bytes.clone();
    zero[2] = 0;
    assert!(matches!(decode_frame::<DeviceFrame>(&zero), Err(FrameError::BadCount(_))));
}

fn device_run(volts: &[f64]) -> (Vec<u8>, Vec<TelemetryFrame>) {
    let drive: Vec<u8> = frames_from_volts(volts)
        .unwrap()
        .iter()
        .flat_map(|f| encode_frame(f).unwrap())
        .collect();
    let telemetry = simulated_device(&drive, &lab_params(), &thermal(), DeviceConfig::default()).unwrap();
    let frames = decode_stream::<TelemetryFrame>(&telemetry)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .unwrap();
    (telemetry, frames)
}

#[test]
fn zero_drive_reports_zero_force() {
    let (_, frames) = device_run(&vec![0.0; 500]);
    assert_eq!(frames.len(), 50);
    for f in frames {
        for r in f.records {
            assert_eq!(r.force_mn, 0);
            assert_eq!(r.temp_centi_c, 2500);
        }
    }
}

#[test]
fn device_is_deterministic() {
    let volts: Vec<f64> = (0..700).map(|i| 3.0 * (i as f64 * 0.05).sin()).collect();
    assert_eq!(device_run(&volts).0, device_run(&volts).0);
}

#[test]
fn incremental_device_tracks_batch_run() {
    let p = lab_params();
    let cfg = DeviceConfig::default();
    let mut dev = SimulatedDevice::new(&p, &thermal(), cfg).unwrap();
    let ticks = 400;
    let mut samples = Vec::new();
    for _ in 0..ticks {
        if let Some(s) = dev.tick(7.0).unwrap() {
            samples.push(s);
        }
    }
    let dt = dev.dt();
    let sig = DriveSignal::step(7.0, cfg.tick_rate, ticks as f64 / cfg.tick_rate).unwrap();
    let batch = simulate(&p, &sig, Mode::Blocked, dt).unwrap();
    let peak = batch.force.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    for s in &samples {
        let n = (s.t / dt).round() as usize;
        assert!((s.force - batch.force[n]).abs() <= 0.01 * peak);
    }
    let last = samples.last().unwrap().force;
    let steady = *batch.force.last().unwrap();
    assert!((last - steady).abs() <= 0.01 * steady.abs());
}

#[test]
fn trace_round_trip() {
    let p = lab_params();
    let dt = p.auto_dt(Mode::Free);
    let sig = DriveSignal::sine(2.0, 150.0, 1.0 / (10.0 * dt), 0.01).unwrap();
    let tr = simulate(&p, &sig, Mode::Free, dt).unwrap();
    let mut buf = Vec::new();
    write_trace(&tr, &mut buf).unwrap();
    let back = read_trace(Cursor::new(buf), Mode::Free).unwrap();
    assert_eq!(back.len(), tr.len());
    let cols = |t: &SimTrace| [t.time.clone(), t.x.clone(), t.v.clone(), t.current.clone(), t.accel.clone()];
    for (a, b) in cols(&back).iter().zip(cols(&tr).iter()) {
        for (x, y) in a.iter().zip(b) {
            // nine significant digits
            assert!((x - y).abs() <= 5e-9 * y.abs());
        }
    }
    assert!(read_trace(Cursor::new("t,x\n"), Mode::Free).is_err());
}

#[test]
fn million_row_trace_keeps_order() {
    let n = 1_000_000;
    let mut tr = SimTrace::with_capacity(Mode::Blocked, n);
    tr.time = (0..n).map(|i| i as f64 * 1e-5).collect();
    tr.x = (0..n).map(|i| i as f64).collect();
    tr.v = vec![0.0; n];
    tr.current = vec![0.0; n];
    tr.force = vec![0.0; n];
    tr.accel = vec![0.0; n];
    let mut buf = Vec::new();
    write_trace(&tr, &mut buf).unwrap();
    let back = read_trace(Cursor::new(buf), Mode::Blocked).unwrap();
    assert_eq!(back.len(), n);
    // position-weighted checksum catches any permutation of rows
    let sum = |xs: &[f64]| xs.iter().enumerate().map(|(i, x)| i as f64 * x).sum::<f64>();
    assert_eq!(sum(&back.x), sum(&tr.x));
}

#[test]
fn pose_errors_name_the_line() {
    let ok = parse_pose_line(" 0 , index , 0.10, 0.00 ,0.05 ", 1).unwrap().unwrap();
    assert_eq!(ok.position, [0.10, 0.0, 0.05]);
    assert!(parse_pose_line("# comment", 1).unwrap().is_none());
    let err = parse_pose_line("0,index,0.1,0.0", 7).unwrap_err();
    assert_eq!(err.line, 7);

    let text = "0,index,0,0,0\n10,thumb,0,0,0\n20,index,0,0,0\n15,index,0,0,0\n";
    let err = parse_pose_stream(Cursor::new(text)).unwrap_err();
    assert_eq!(err.line, 4);
    // another finger may go back in time
    let text = "0,index,0,0,0\n30,thumb,0,0,0\n20,index,0,0,0\n";
    assert_eq!(parse_pose_stream(Cursor::new(text)).unwrap().len(), 3);
}
