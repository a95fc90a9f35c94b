//! Closed loop: pose log -> renderer -> drive frames -> simulated device.

use crate::electromech::{LumpedParams, ThermalParams};
use crate::pipeline_io::{
    encode_frame, frames_from_volts, DeviceConfig, DeviceError, DeviceSample, PoseRecord,
    SimulatedDevice,
};
use crate::renderer::{RenderCommand, Renderer, RendererConfig, Scene, Vec3};

/// Fingertip position at every tick, linearly interpolated between the
/// records of `finger`. Empty when the finger never appears.
pub fn pose_ticks(poses: &[PoseRecord], finger: &str, tick_rate: f64) -> Vec<Vec3> {
    let track: Vec<&PoseRecord> = poses.iter().filter(|p| p.finger == finger).collect();
    let (Some(first), Some(last)) = (track.first(), track.last()) else {
        return Vec::new();
    };
    let t0 = first.t_ms as f64 / 1000.0;
    let t1 = last.t_ms as f64 / 1000.0;
    let n = ((t1 - t0) * tick_rate).round() as usize + 1;
    let mut j = 0;
    (0..n)
        .map(|k| {
            let t = t0 + k as f64 / tick_rate;
            while j + 1 < track.len() && (track[j + 1].t_ms as f64 / 1000.0) <= t {
                j += 1;
            }
            let a = track[j];
            match track.get(j + 1) {
                Some(b) if b.t_ms > a.t_ms => {
                    let ta = a.t_ms as f64 / 1000.0;
                    let s = ((t - ta) / (b.t_ms as f64 / 1000.0 - ta)).clamp(0.0, 1.0);
                    std::array::from_fn(|i| a.position[i] + s * (b.position[i] - a.position[i]))
                }
                _ => a.position,
            }
        })
        .collect()
}

/// Everything produced by one replay.
#[derive(Debug, Clone)]
pub struct Replay {
    pub commands: Vec<RenderCommand>,
    /// Device readings at telemetry instants.
    pub samples: Vec<DeviceSample>,
    /// The same readings as an encoded telemetry byte stream.
    pub telemetry: Vec<u8>,
    /// The encoded drive stream sent to the device.
    pub drive: Vec<u8>,
}

pub fn replay(
    ticks: &[Vec3],
    scene: &Scene,
    params: &LumpedParams,
    thermal: &ThermalParams,
    render_cfg: RendererConfig,
    device_cfg: DeviceConfig,
) -> Result<Replay, DeviceError> {
    let mut renderer = Renderer::new(scene.clone(), params, render_cfg);
    let commands: Vec<RenderCommand> = ticks.iter().map(|&p| renderer.tick(p)).collect();
    let volts: Vec<f64> = commands.iter().map(|c| c.voltage).collect();

    let mut device = SimulatedDevice::new(params, thermal, device_cfg)?;
    let mut drive = Vec::new();
    let mut telemetry = Vec::new();
    let mut samples = Vec::new();
    for frame in frames_from_volts(&volts)? {
        drive.extend(encode_frame(&frame)?);
        for v in frame.volts() {
            if let Some(s) = device.tick(v)? {
                telemetry.extend(encode_frame(&device.telemetry_frame(&s))?);
                samples.push(s);
            }
        }
    }
    Ok(Replay {
        commands,
        samples,
        telemetry,
        drive,
    })
}
