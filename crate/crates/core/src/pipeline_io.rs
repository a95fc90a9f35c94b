//! Wire framing, pose-log ingestion, the simulated device endpoint and trace
//! persistence.
//!
//! Frame layout (big-endian):
//!
//! ```text
//! sync(1) seq(1) count(1) records(count * record_len) crc16(2)
//! ```
//!
//! Drive frames (`0xAA`) carry `i16` millivolt samples. Telemetry frames
//! (`0xAB`) carry `(t_ms: u32, force_mN: i16, temp_centi_C: i16)` records.
//! The CRC is CRC-16/CCITT-FALSE over every byte before it.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::{self, BufRead, Write};

use crc::{Crc, CRC_16_IBM_3740};
use thiserror::Error;

use crate::electromech::{
    thermal_step, Integrator, LumpedParams, Mode, SimError, SimTrace, State, ThermalParams,
};

const CCITT_FALSE: Crc<u16> = Crc::<u16>::new(&CRC_16_IBM_3740);

pub const DRIVE_SYNC: u8 = 0xAA;
pub const TELEMETRY_SYNC: u8 = 0xAB;
pub const MAX_RECORDS: usize = 32;
pub const MAX_SAMPLE_MV: i16 = 10_000;
const HEADER_LEN: usize = 3;
const CRC_LEN: usize = 2;

/// CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, unreflected, no xor-out).
pub fn crc16(bytes: &[u8]) -> u16 {
    CCITT_FALSE.checksum(bytes)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FrameError {
    #[error("crc mismatch: frame says {stated:#06x}, computed {computed:#06x}")]
    CrcMismatch { stated: u16, computed: u16 },
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad record count {0} (expected 1..=32)")]
    BadCount(usize),
    #[error("expected sync byte {expected:#04x}, found {found:#04x}")]
    BadSync { expected: u8, found: u8 },
    #[error("sample {0} mV exceeds ±10000 mV")]
    SampleOutOfRange(i16),
    #[error("crc-valid candidate not followed by a frame boundary")]
    Unconfirmed,
}

/// A record-carrying frame type sharing the common envelope.
pub trait WireFrame: Sized {
    const SYNC: u8;
    const RECORD_LEN: usize;
    fn seq(&self) -> u8;
    fn count(&self) -> usize;
    fn validate(&self) -> Result<(), FrameError>;
    fn write_records(&self, out: &mut Vec<u8>);
    fn read_records(seq: u8, count: usize, payload: &[u8]) -> Result<Self, FrameError>;

    fn frame_len(count: usize) -> usize {
        HEADER_LEN + Self::RECORD_LEN * count + CRC_LEN
    }
}

fn check_count(count: usize) -> Result<(), FrameError> {
    if (1..=MAX_RECORDS).contains(&count) {
        Ok(())
    } else {
        Err(FrameError::BadCount(count))
    }
}

/// Drive samples for the actuator, in millivolts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceFrame {
    pub seq: u8,
    pub samples: Vec<i16>,
}

impl DeviceFrame {
    /// Round volts to millivolts; rejects anything beyond ±10 V.
    pub fn from_volts(seq: u8, volts: &[f64]) -> Result<Self, FrameError> {
        let samples = volts
            .iter()
            .map(|v| {
                let mv = (v * 1000.0).round();
                if mv.abs() > f64::from(MAX_SAMPLE_MV) {
                    Err(FrameError::SampleOutOfRange(
                        mv.clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16,
                    ))
                } else {
                    Ok(mv as i16)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        let f = Self { seq, samples };
        f.validate()?;
        Ok(f)
    }

    pub fn volts(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|&s| f64::from(s) / 1000.0)
    }
}

impl WireFrame for DeviceFrame {
    const SYNC: u8 = DRIVE_SYNC;
    const RECORD_LEN: usize = 2;

    fn seq(&self) -> u8 {
        self.seq
    }
    fn count(&self) -> usize {
        self.samples.len()
    }
    fn validate(&self) -> Result<(), FrameError> {
        check_count(self.samples.len())?;
        match self.samples.iter().find(|s| s.unsigned_abs() > MAX_SAMPLE_MV as u16) {
            Some(&s) => Err(FrameError::SampleOutOfRange(s)),
            None => Ok(()),
        }
    }
    fn write_records(&self, out: &mut Vec<u8>) {
        for s in &self.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    fn read_records(seq: u8, _count: usize, payload: &[u8]) -> Result<Self, FrameError> {
        let samples = payload
            .chunks_exact(2)
            .map(|c| i16::from_be_bytes([c[0], c[1]]))
            .collect();
        let f = Self { seq, samples };
        f.validate()?;
        Ok(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TelemetryRecord {
    pub t_ms: u32,
    pub force_mn: i16,
    pub temp_centi_c: i16,
}

impl TelemetryRecord {
    pub fn force(&self) -> f64 {
        f64::from(self.force_mn) / 1000.0
    }
    pub fn temperature(&self) -> f64 {
        f64::from(self.temp_centi_c) / 100.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TelemetryFrame {
    pub seq: u8,
    pub records: Vec<TelemetryRecord>,
}

impl WireFrame for TelemetryFrame {
    const SYNC: u8 = TELEMETRY_SYNC;
    const RECORD_LEN: usize = 8;

    fn seq(&self) -> u8 {
        self.seq
    }
    fn count(&self) -> usize {
        self.records.len()
    }
    fn validate(&self) -> Result<(), FrameError> {
        check_count(self.records.len())
    }
    fn write_records(&self, out: &mut Vec<u8>) {
        for r in &self.records {
            out.extend_from_slice(&r.t_ms.to_be_bytes());
            out.extend_from_slice(&r.force_mn.to_be_bytes());
            out.extend_from_slice(&r.temp_centi_c.to_be_bytes());
        }
    }
    fn read_records(seq: u8, _count: usize, payload: &[u8]) -> Result<Self, FrameError> {
        let records = payload
            .chunks_exact(8)
            .map(|c| TelemetryRecord {
                t_ms: u32::from_be_bytes([c[0], c[1], c[2], c[3]]),
                force_mn: i16::from_be_bytes([c[4], c[5]]),
                temp_centi_c: i16::from_be_bytes([c[6], c[7]]),
            })
            .collect();
        Ok(Self { seq, records })
    }
}

pub fn encode_frame<F: WireFrame>(frame: &F) -> Result<Vec<u8>, FrameError> {
    frame.validate()?;
    let mut out = Vec::with_capacity(F::frame_len(frame.count()));
    out.push(F::SYNC);
    out.push(frame.seq());
    out.push(frame.count() as u8);
    frame.write_records(&mut out);
    let crc = crc16(&out);
    out.extend_from_slice(&crc.to_be_bytes());
    Ok(out)
}

/// Decode one frame at the start of `bytes`; returns it and the bytes used.
pub fn decode_frame<F: WireFrame>(bytes: &[u8]) -> Result<(F, usize), FrameError> {
    if bytes.len() < HEADER_LEN {
        return Err(FrameError::Truncated {
            needed: HEADER_LEN,
            available: bytes.len(),
        });
    }
    if bytes[0] != F::SYNC {
        return Err(FrameError::BadSync {
            expected: F::SYNC,
            found: bytes[0],
        });
    }
    let count = bytes[2] as usize;
    check_count(count)?;
    let len = F::frame_len(count);
    if bytes.len() < len {
        return Err(FrameError::Truncated {
            needed: len,
            available: bytes.len(),
        });
    }
    let body = len - CRC_LEN;
    let stated = u16::from_be_bytes([bytes[body], bytes[body + 1]]);
    let computed = crc16(&bytes[..body]);
    if stated != computed {
        return Err(FrameError::CrcMismatch { stated, computed });
    }
    let frame = F::read_records(bytes[1], count, &bytes[HEADER_LEN..body])?;
    Ok((frame, len))
}

/// Incremental decoder over a byte stream. After a bad count or CRC it skips
/// one byte and hunts for the next sync byte.
///
/// A CRC-valid frame is only emitted once the byte after it is seen to be a
/// sync byte (or the input has ended). A 16-bit CRC alone would pass about
/// one false candidate in 65536 while hunting through noise; the boundary
/// check cuts that by another factor of 256. The price is that a good frame
/// directly followed by a damaged sync byte is dropped.
#[derive(Debug)]
pub struct StreamDecoder<F> {
    buf: VecDeque<u8>,
    finished: bool,
    skipped: usize,
    _kind: std::marker::PhantomData<F>,
}

impl<F: WireFrame> Default for StreamDecoder<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: WireFrame> StreamDecoder<F> {
    pub fn new() -> Self {
        Self {
            buf: VecDeque::new(),
            finished: false,
            skipped: 0,
            _kind: std::marker::PhantomData,
        }
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend(bytes);
    }

    /// Mark end of input: a trailing partial frame is then reported as
    /// truncated instead of awaited.
    pub fn finish(&mut self) {
        self.finished = true;
    }

    /// Bytes discarded while hunting for sync.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Next decoded frame or error; `None` when more input is needed.
    pub fn next_frame(&mut self) -> Option<Result<F, FrameError>> {
        let start = self.buf.iter().position(|&b| b == F::SYNC);
        let drop = start.unwrap_or(self.buf.len());
        self.skipped += drop;
        self.buf.drain(..drop);
        if self.buf.is_empty() {
            return None;
        }
        let bytes = self.buf.make_contiguous();
        let claimed = bytes.get(2).map(|&c| F::frame_len(c as usize));
        match decode_frame::<F>(bytes) {
            Ok((frame, used)) => {
                let confirmed = match self.buf.get(used) {
                    Some(&b) => b == F::SYNC,
                    None if self.finished => true,
                    None => return None,
                };
                if confirmed {
                    self.buf.drain(..used);
                    Some(Ok(frame))
                } else {
                    self.buf.pop_front();
                    self.skipped += 1;
                    Some(Err(FrameError::Unconfirmed))
                }
            }
            Err(FrameError::Truncated { .. }) if !self.finished => None,
            Err(e @ FrameError::SampleOutOfRange(_)) => {
                // framing was intact; consume the whole frame
                self.buf.drain(..claimed.unwrap_or(1));
                Some(Err(e))
            }
            Err(e) => {
                self.buf.pop_front();
                self.skipped += 1;
                Some(Err(e))
            }
        }
    }
}

impl<F: WireFrame> Iterator for StreamDecoder<F> {
    type Item = Result<F, FrameError>;
    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame()
    }
}

/// Decode an entire byte slice, collecting frames and errors in order.
pub fn decode_stream<F: WireFrame>(bytes: &[u8]) -> Vec<Result<F, FrameError>> {
    let mut dec = StreamDecoder::<F>::new();
    dec.push(bytes);
    dec.finish();
    dec.collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseRecord {
    pub t_ms: u64,
    pub finger: String,
    pub position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for PoseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "malformed pose line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for PoseError {}

/// Parse `t_ms,finger,x,y,z`. Blank and `#` lines yield `Ok(None)`.
pub fn parse_pose_line(text: &str, line: usize) -> Result<Option<PoseRecord>, PoseError> {
    let t = text.trim();
    if t.is_empty() || t.starts_with('#') {
        return Ok(None);
    }
    let err = |message: String| PoseError { line, message };
    let fields: Vec<&str> = t.split(',').map(str::trim).collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, got {}", fields.len())));
    }
    let t_ms = fields[0]
        .parse::<u64>()
        .map_err(|_| err(format!("bad t_ms `{}`", fields[0])))?;
    if fields[1].is_empty() {
        return Err(err("empty finger id".into()));
    }
    let mut position = [0.0; 3];
    for (slot, s) in position.iter_mut().zip(&fields[2..]) {
        *slot = s
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| err(format!("bad coordinate `{s}`")))?;
    }
    Ok(Some(PoseRecord {
        t_ms,
        finger: fields[1].to_string(),
        position,
    }))
}

/// Parse a whole pose log, enforcing non-decreasing `t_ms` per finger.
pub fn parse_pose_stream<R: BufRead>(input: R) -> Result<Vec<PoseRecord>, PoseError> {
    let mut out = Vec::new();
    let mut last: HashMap<String, u64> = HashMap::new();
    for (idx, line) in input.lines().enumerate() {
        let n = idx + 1;
        let line = line.map_err(|e| PoseError {
            line: n,
            message: e.to_string(),
        })?;
        if let Some(rec) = parse_pose_line(&line, n)? {
            if let Some(&prev) = last.get(&rec.finger) {
                if rec.t_ms < prev {
                    return Err(PoseError {
                        line: n,
                        message: format!(
                            "t_ms {} goes backwards for finger `{}` (previous {prev})",
                            rec.t_ms, rec.finger
                        ),
                    });
                }
            }
            last.insert(rec.finger.clone(), rec.t_ms);
            out.push(rec);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceConfig {
    pub tick_rate: f64,
    /// Lower bound on integrator substeps per tick; raised automatically
    /// when the mechanics need a finer step.
    pub min_substeps: usize,
    pub telemetry_every: u64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            tick_rate: 1000.0,
            min_substeps: 100,
            telemetry_every: 10,
        }
    }
}

impl DeviceConfig {
    pub fn substeps(&self, p: &LumpedParams) -> usize {
        let tick = 1.0 / self.tick_rate;
        let needed = (tick / p.max_dt(Mode::Blocked)).ceil() as usize;
        needed.max(self.min_substeps).max(1)
    }

    pub fn dt(&self, p: &LumpedParams) -> f64 {
        1.0 / (self.tick_rate * self.substeps(p) as f64)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Full-precision reading taken at a telemetry instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeviceSample {
    pub t: f64,
    pub state: State,
    pub force: f64,
    pub temperature: f64,
}

impl DeviceSample {
    pub fn to_record(&self) -> TelemetryRecord {
        let sat = |v: f64| v.round().clamp(f64::from(i16::MIN), f64::from(i16::MAX)) as i16;
        TelemetryRecord {
            t_ms: (self.t * 1000.0).round() as u32,
            force_mn: sat(self.force * 1000.0),
            temp_centi_c: sat(self.temperature * 100.0),
        }
    }
}

/// Blocked-mode actuator stand-in driven one voltage sample per tick.
#[derive(Debug, Clone)]
pub struct SimulatedDevice {
    integ: Integrator,
    thermal: ThermalParams,
    r_ohm: f64,
    temperature: f64,
    substeps: usize,
    tick: u64,
    config: DeviceConfig,
    telemetry_seq: u8,
}

impl SimulatedDevice {
    pub fn new(
        params: &LumpedParams,
        thermal: &ThermalParams,
        config: DeviceConfig,
    ) -> Result<Self, DeviceError> {
        let dt = config.dt(params);
        Ok(Self {
            integ: Integrator::new(params, Mode::Blocked, dt, State::default())?,
            thermal: *thermal,
            r_ohm: params.r_ohm,
            temperature: thermal.t_amb,
            substeps: config.substeps(params),
            tick: 0,
            config,
            telemetry_seq: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.integ.dt()
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn sample(&self) -> DeviceSample {
        let s = self.integ.state();
        DeviceSample {
            t: self.integ.time(),
            state: s,
            force: self.integ.contact_force(&s),
            temperature: self.temperature,
        }
    }

    /// Hold `volts` for one tick. Returns a sample on telemetry ticks.
    pub fn tick(&mut self, volts: f64) -> Result<Option<DeviceSample>, DeviceError> {
        let dt = self.integ.dt();
        for _ in 0..self.substeps {
            let i = self.integ.state().i;
            self.temperature = thermal_step(&self.thermal, self.temperature, i * i * self.r_ohm, dt);
            self.integ.step(volts)?;
        }
        self.tick += 1;
        if self.tick % self.config.telemetry_every == 0 {
            Ok(Some(self.sample()))
        } else {
            Ok(None)
        }
    }

    /// Wrap a reading in the next telemetry frame.
    pub fn telemetry_frame(&mut self, s: &DeviceSample) -> TelemetryFrame {
        let frame = TelemetryFrame {
            seq: self.telemetry_seq,
            records: vec![s.to_record()],
        };
        self.telemetry_seq = self.telemetry_seq.wrapping_add(1);
        frame
    }

    /// Consume a drive frame; returns telemetry frames produced meanwhile.
    pub fn feed(&mut self, frame: &DeviceFrame) -> Result<Vec<TelemetryFrame>, DeviceError> {
        let mut out = Vec::new();
        for v in frame.volts() {
            if let Some(s) = self.tick(v)? {
                out.push(self.telemetry_frame(&s));
            }
        }
        Ok(out)
    }
}

/// Run an encoded drive stream through a fresh device and return the encoded
/// telemetry stream. Frames that fail to decode are skipped.
pub fn simulated_device(
    drive: &[u8],
    params: &LumpedParams,
    thermal: &ThermalParams,
    config: DeviceConfig,
) -> Result<Vec<u8>, DeviceError> {
    let mut dev = SimulatedDevice::new(params, thermal, config)?;
    let mut out = Vec::new();
    for frame in decode_stream::<DeviceFrame>(drive).into_iter().flatten() {
        for t in dev.feed(&frame)? {
            out.extend(encode_frame(&t)?);
        }
    }
    Ok(out)
}

/// Split volts into ≤32-sample drive frames with wrapping sequence numbers.
pub fn frames_from_volts(volts: &[f64]) -> Result<Vec<DeviceFrame>, FrameError> {
    volts
        .chunks(MAX_RECORDS)
        .enumerate()
        .map(|(i, c)| DeviceFrame::from_volts(i as u8, c))
        .collect()
}

pub const TRACE_CSV_HEADER: &str = "t_s,x_m,v_mps,I_A,F_N,accel_G";

/// CSV with 9 significant digits per value.
pub fn write_trace<W: Write>(trace: &SimTrace, out: W) -> io::Result<()> {
    let mut out = io::BufWriter::new(out);
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for i in 0..trace.len() {
        writeln!(
            out,
            "{:.8e},{:.8e},{:.8e},{:.8e},{:.8e},{:.8e}",
            trace.time[i], trace.x[i], trace.v[i], trace.current[i], trace.force[i], trace.accel[i]
        )?;
    }
    out.flush()
}

pub fn write_trace_file(trace: &SimTrace, path: &std::path::Path) -> io::Result<()> {
    write_trace(trace, std::fs::File::create(path)?)
}

pub fn read_trace<R: BufRead>(input: R, mode: Mode) -> io::Result<SimTrace> {
    let bad = |line: usize, msg: &str| {
        io::Error::new(io::ErrorKind::InvalidData, format!("trace line {line}: {msg}"))
    };
    let mut lines = input.lines();
    let header = lines.next().transpose()?;
    if header.as_deref().map(str::trim) != Some(TRACE_CSV_HEADER) {
        return Err(bad(1, "missing trace header"));
    }
    let mut tr = SimTrace::with_capacity(mode, 0);
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad(idx + 2, "unparseable number"))?;
        if vals.len() != 6 {
            return Err(bad(idx + 2, "expected 6 columns"));
        }
        tr.time.push(vals[0]);
        tr.x.push(vals[1]);
        tr.v.push(vals[2]);
        tr.current.push(vals[3]);
        tr.force.push(vals[4]);
        tr.accel.push(vals[5]);
    }
    Ok(tr)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crc_check_values() {
        assert_eq!(crc16(b"123456789"), 0x29B1);
        assert_eq!(crc16(&[]), 0xFFFF);
    }

    #[test]
    fn frame_round_trip_and_length() {
        let f = DeviceFrame {
            seq: 7,
            samples: vec![3000, -3000],
        };
        let bytes = encode_frame(&f).unwrap();
        assert_eq!(bytes.len(), 3 + 2 * 2 + 2);
        assert_eq!(&bytes[..7], &[0xAA, 7, 2, 0x0B, 0xB8, 0xF4, 0x48]);
        let (g, used) = decode_frame::<DeviceFrame>(&bytes).unwrap();
        assert_eq!((g, used), (f, bytes.len()));
    }

    #[test]
    fn count_rules() {
        let empty = DeviceFrame {
            seq: 0,
            samples: vec![],
        };
        assert_eq!(encode_frame(&empty), Err(FrameError::BadCount(0)));
        let raw = [0xAA, 0, 0, 0xFF, 0xFF];
        assert_eq!(
            decode_frame::<DeviceFrame>(&raw).unwrap_err(),
            FrameError::BadCount(0)
        );
        let big = DeviceFrame {
            seq: 0,
            samples: vec![0; 33],
        };
        assert_eq!(encode_frame(&big), Err(FrameError::BadCount(33)));
    }

    #[test]
    fn out_of_range_sample() {
        assert!(DeviceFrame::from_volts(0, &[10.0, -10.0]).is_ok());
        assert!(matches!(
            DeviceFrame::from_volts(0, &[10.001]),
            Err(FrameError::SampleOutOfRange(_))
        ));
    }

    #[test]
    fn truncated() {
        let bytes = encode_frame(&DeviceFrame {
            seq: 1,
            samples: vec![1, 2, 3],
        })
        .unwrap();
        assert!(matches!(
            decode_frame::<DeviceFrame>(&bytes[..bytes.len() - 1]),
            Err(FrameError::Truncated { .. })
        ));
    }

    #[test]
    fn corrupted_frame_is_skipped() {
        let a = encode_frame(&DeviceFrame { seq: 1, samples: vec![100; 4] }).unwrap();
        let b = encode_frame(&DeviceFrame { seq: 2, samples: vec![-5; 3] }).unwrap();
        let mut stream = a.clone();
        stream[5] ^= 0x10;
        stream.extend(&b);
        let out = decode_stream::<DeviceFrame>(&stream);
        assert!(matches!(out[0], Err(FrameError::CrcMismatch { .. })));
        let good: Vec<_> = out.into_iter().flatten().collect();
        assert_eq!(good, vec![DeviceFrame { seq: 2, samples: vec![-5; 3] }]);
    }

    #[test]
    fn telemetry_round_trip() {
        let t = TelemetryFrame {
            seq: 255,
            records: vec![TelemetryRecord {
                t_ms: 123_456,
                force_mn: -17,
                temp_centi_c: 3999,
            }],
        };
        let bytes = encode_frame(&t).unwrap();
        assert_eq!(bytes[0], 0xAB);
        assert_eq!(decode_frame::<TelemetryFrame>(&bytes).unwrap().0, t);
        assert!(matches!(
            decode_frame::<DeviceFrame>(&bytes),
            Err(FrameError::BadSync { .. })
        ));
    }

    #[test]
    fn pose_lines() {
        let r = parse_pose_line("0,index,0.10,0.00,0.05", 1).unwrap().unwrap();
        assert_eq!(r.t_ms, 0);
        assert_eq!(r.finger, "index");
        assert_eq!(r.position, [0.10, 0.0, 0.05]);
        assert_eq!(parse_pose_line("# comment", 2).unwrap(), None);
        assert_eq!(
            parse_pose_line(" 5 , thumb , 1 , 2 , 3 ", 3).unwrap().unwrap().position,
            [1.0, 2.0, 3.0]
        );
        let e = parse_pose_line("0,index,0.1,0.0", 4).unwrap_err();
        assert_eq!(e.line, 4);
    }

    #[test]
    fn pose_stream_monotone_per_finger() {
        let ok = "0,index,0,0,0\n0,thumb,0,0,0\n5,index,0,0,0\n3,thumb,0,0,0\n";
        assert_eq!(parse_pose_stream(ok.as_bytes()).unwrap().len(), 4);
        let bad = "# log\n0,index,0,0,0\n5,index,0,0,0\n4,index,0,0,0\n";
        let e = parse_pose_stream(bad.as_bytes()).unwrap_err();
        assert_eq!(e.line, 4);
        assert!(e.message.contains("index"));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let tr = SimTrace::with_capacity(Mode::Blocked, 0);
        let mut buf = Vec::new();
        write_trace(&tr, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{TRACE_CSV_HEADER}\n"));
    }
}
