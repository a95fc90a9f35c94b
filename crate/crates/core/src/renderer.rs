//! Haptic rendering: fingertip pose + virtual scene -> per-tick drive voltage.
//!
//! Each tick the deepest contact is rendered as a virtual wall, inverted to a
//! voltage through the blocked force constant, and mixed with an optional
//! texture vibration and button click transient. The sum is clamped to the
//! actuator limit and scaled by a duty governor that watches the windowed
//! i²t of what was actually emitted.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::fmt;

use crate::electromech::LumpedParams;

pub type Vec3 = [f64; 3];

pub const DEFAULT_TICK_RATE: f64 = 1000.0;
/// Penetration at which texture reaches full amplitude (m).
pub const TEXTURE_FULL_DEPTH: f64 = 0.5e-3;
/// Sliding window of the i²t governor (s).
pub const GOVERNOR_WINDOW: f64 = 10.0;
/// Duration of full-scale drive the governor allows per window (s).
pub const GOVERNOR_FULL_SCALE_TIME: f64 = 5.0;
pub const GOVERNOR_REDUCED_GAIN: f64 = 0.5;

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Texture {
    pub spatial_period: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// Half-space behind `point` opposite to the outward unit `normal`.
    Plane { point: Vec3, normal: Vec3 },
    Sphere { center: Vec3, radius: f64 },
    /// Disc-shaped key: a plane patch of `radius` around `point` that
    /// clicks after `travel` of penetration.
    Button {
        point: Vec3,
        normal: Vec3,
        radius: f64,
        travel: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub shape: Shape,
    pub stiffness: f64,
    pub damping: f64,
    pub texture: Option<Texture>,
}

impl SceneObject {
    /// Inward penetration depth (0 outside) and the outward surface normal.
    pub fn penetration(&self, p: Vec3) -> (f64, Vec3) {
        match self.shape {
            Shape::Plane { point, normal } => ((-dot(sub(p, point), normal)).max(0.0), normal),
            Shape::Sphere { center, radius } => {
                let d = sub(p, center);
                let dist = norm(d);
                let n = if dist > 0.0 {
                    [d[0] / dist, d[1] / dist, d[2] / dist]
                } else {
                    [0.0, 0.0, 1.0]
                };
                ((radius - dist).max(0.0), n)
            }
            Shape::Button {
                point,
                normal,
                radius,
                ..
            } => {
                let d = sub(p, point);
                let depth = -dot(d, normal);
                let lateral = (dot(d, d) - depth * depth).max(0.0).sqrt();
                if lateral <= radius {
                    (depth.max(0.0), normal)
                } else {
                    (0.0, normal)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for SceneError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "scene line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for SceneError {}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn new(objects: Vec<SceneObject>) -> Self {
        Self { objects }
    }

    /// Parse the line-oriented scene format:
    ///
    /// ```text
    /// # kind   id   geometry...                     k      d     [period amp]
    /// plane    wall 0 0 0   0 0 1                   300    0.5
    /// sphere   ball 0 0 0.1 0.02                    900    0.2   0.001 1.5
    /// button   key  0 0.05 0 0 0 1  0.01 0.002      200    0.1
    /// ```
    ///
    /// All values SI. Plane and button normals are normalised on load.
    pub fn parse(text: &str) -> Result<Self, SceneError> {
        let mut objects: Vec<SceneObject> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| SceneError { line, message };
            let fields: Vec<&str> = body.split_whitespace().collect();
            let kind = fields[0];
            let id = fields
                .get(1)
                .ok_or_else(|| err("missing object id".into()))?
                .to_string();
            if objects.iter().any(|o| o.id == id) {
                return Err(err(format!("duplicate object id `{id}`")));
            }
            let nums = fields[2..]
                .iter()
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| err(format!("bad number `{s}`")))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let geometry = match kind {
                "plane" => 6,
                "sphere" => 4,
                "button" => 8,
                other => return Err(err(format!("unknown object kind `{other}`"))),
            };
            if nums.len() != geometry + 2 && nums.len() != geometry + 4 {
                return Err(err(format!(
                    "{kind} takes {} or {} numbers, got {}",
                    geometry + 2,
                    geometry + 4,
                    nums.len()
                )));
            }
            let unit = |v: &[f64]| -> Result<Vec3, SceneError> {
                let n = norm([v[0], v[1], v[2]]);
                if n == 0.0 {
                    return Err(err("zero-length normal".into()));
                }
                Ok([v[0] / n, v[1] / n, v[2] / n])
            };
            let shape = match kind {
                "plane" => Shape::Plane {
                    point: [nums[0], nums[1], nums[2]],
                    normal: unit(&nums[3..6])?,
                },
                "sphere" => {
                    if !(nums[3] > 0.0) {
                        return Err(err("sphere radius must be positive".into()));
                    }
                    Shape::Sphere {
                        center: [nums[0], nums[1], nums[2]],
                        radius: nums[3],
                    }
                }
                _ => {
                    if !(nums[6] > 0.0 && nums[7] > 0.0) {
                        return Err(err("button radius and travel must be positive".into()));
                    }
                    Shape::Button {
                        point: [nums[0], nums[1], nums[2]],
                        normal: unit(&nums[3..6])?,
                        radius: nums[6],
                        travel: nums[7],
                    }
                }
            };
            let (stiffness, damping) = (nums[geometry], nums[geometry + 1]);
            if stiffness < 0.0 || damping < 0.0 {
                return Err(err("stiffness and damping must be non-negative".into()));
            }
            let texture = if nums.len() == geometry + 4 {
                let (spatial_period, amplitude) = (nums[geometry + 2], nums[geometry + 3]);
                if !(spatial_period > 0.0) {
                    return Err(err("texture period must be positive".into()));
                }
                Some(Texture {
                    spatial_period,
                    amplitude,
                })
            } else {
                None
            };
            objects.push(SceneObject {
                id,
                shape,
                stiffness,
                damping,
                texture,
            });
        }
        Ok(Self { objects })
    }

    /// The same scene with every stiffness replaced.
    pub fn with_stiffness(&self, k: f64) -> Self {
        Self {
            objects: self
                .objects
                .iter()
                .map(|o| SceneObject {
                    stiffness: k,
                    ..o.clone()
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ContactState {
    /// Index into the scene of the rendered object, if any.
    pub object: Option<usize>,
    pub penetration: f64,
    pub penetration_rate: f64,
    pub tangential_speed: f64,
    /// Fingertip position this state was solved at.
    pub position: Vec3,
}

/// Deepest-penetration contact at `fingertip`. Rates are backward differences
/// against `prev`; a newly entered object is treated as entered from zero.
pub fn contact_solve(scene: &Scene, fingertip: Vec3, prev: Option<&ContactState>, dt: f64) -> ContactState {
    assert!(dt > 0.0, "contact_solve needs dt > 0");
    let mut best: Option<(usize, f64, Vec3)> = None;
    for (i, obj) in scene.objects.iter().enumerate() {
        let (pen, n) = obj.penetration(fingertip);
        if pen > 0.0 && best.map_or(true, |b| pen > b.1) {
            best = Some((i, pen, n));
        }
    }
    let Some((idx, pen, normal)) = best else {
        return ContactState {
            position: fingertip,
            ..ContactState::default()
        };
    };
    let (rate, tangential) = match prev {
        Some(p) => {
            let prev_pen = if p.object == Some(idx) { p.penetration } else { 0.0 };
            let vel = sub(fingertip, p.position).map(|d| d / dt);
            let vn = dot(vel, normal);
            let vt = (dot(vel, vel) - vn * vn).max(0.0).sqrt();
            ((pen - prev_pen) / dt, vt)
        }
        None => (0.0, 0.0),
    };
    ContactState {
        object: Some(idx),
        penetration: pen,
        penetration_rate: rate,
        tangential_speed: tangential,
        position: fingertip,
    }
}

/// Virtual-wall force, never pulling.
pub fn target_force(cs: &ContactState, obj: &SceneObject) -> f64 {
    (obj.stiffness * cs.penetration + obj.damping * cs.penetration_rate).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    pub voltage: f64,
    /// Before clamping to `±V_max`.
    pub unclamped: f64,
    pub saturated: bool,
}

/// Quasi-static force-to-voltage inversion through the blocked force
/// constant, clamped to the actuator limit.
pub fn inverse_drive(force: f64, p: &LumpedParams) -> Drive {
    let unclamped = force * p.r_ohm / p.blocked_force_constant();
    let voltage = unclamped.clamp(-p.v_max, p.v_max);
    Drive {
        voltage,
        unclamped,
        saturated: voltage != unclamped,
    }
}

/// Spatial-grating vibration. Advances `phase` by one tick and returns the
/// voltage for that tick; silent when the finger is not sliding.
pub fn texture_wave(cs: &ContactState, texture: &Texture, dt: f64, phase: &mut f64) -> f64 {
    let f = cs.tangential_speed / texture.spatial_period;
    if f == 0.0 {
        return 0.0;
    }
    *phase = (*phase + 2.0 * PI * f * dt) % (2.0 * PI);
    let depth_scale = (cs.penetration / TEXTURE_FULL_DEPTH).min(1.0);
    texture.amplitude * depth_scale * phase.sin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickParams {
    pub amplitude: f64,
    pub freq: f64,
    pub tau: f64,
    pub cutoff: f64,
}

impl Default for ClickParams {
    fn default() -> Self {
        Self {
            amplitude: 5.0,
            freq: 150.0,
            tau: 10e-3,
            cutoff: 30e-3,
        }
    }
}

/// Decaying-sine click, a function of time since the event only.
pub fn click_wave(t: f64, cp: &ClickParams) -> f64 {
    if !(0.0..cp.cutoff).contains(&t) {
        return 0.0;
    }
    cp.amplitude * (-t / cp.tau).exp() * (2.0 * PI * cp.freq * t).sin()
}

/// Sliding-window i²t duty governor.
#[derive(Debug, Clone)]
pub struct GovernorState {
    pub window: f64,
    pub budget: f64,
    pub i2t: f64,
    pub gain: f64,
    history: VecDeque<f64>,
    capacity: usize,
    dt: f64,
}

impl GovernorState {
    /// Budget is `(V_max / R)^2 * 5 s` over a 10 s window.
    pub fn new(p: &LumpedParams, dt: f64) -> Self {
        let budget = (p.v_max / p.r_ohm).powi(2) * GOVERNOR_FULL_SCALE_TIME;
        Self::with_budget(budget, GOVERNOR_WINDOW, dt)
    }

    pub fn with_budget(budget: f64, window: f64, dt: f64) -> Self {
        let capacity = (window / dt).round().max(1.0) as usize;
        Self {
            window,
            budget,
            i2t: 0.0,
            gain: 1.0,
            history: VecDeque::with_capacity(capacity),
            capacity,
            dt,
        }
    }

    /// Account for one emitted tick of `current` amps; updates the gain for
    /// the next tick.
    pub fn record(&mut self, current: f64) {
        let e = current * current * self.dt;
        self.history.push_back(e);
        self.i2t += e;
        if self.history.len() > self.capacity {
            self.i2t -= self.history.pop_front().unwrap_or(0.0);
        }
        self.i2t = self.i2t.max(0.0);
        self.gain = if self.i2t > self.budget {
            GOVERNOR_REDUCED_GAIN
        } else {
            1.0
        };
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderCommand {
    pub tick: u64,
    pub voltage: f64,
    pub saturated: bool,
    pub governor_gain: f64,
    /// Spring/damper component before any clamping.
    pub spring_voltage: f64,
    /// Composed spring + texture + click before clamp and governor.
    pub pre_clamp: f64,
    pub contact: ContactState,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RendererConfig {
    pub tick_rate: f64,
    pub click: ClickParams,
}

impl Default for RendererConfig {
    fn default() -> Self {
        Self {
            tick_rate: DEFAULT_TICK_RATE,
            click: ClickParams::default(),
        }
    }
}

/// Per-actuator render loop state.
#[derive(Debug, Clone)]
pub struct Renderer {
    scene: Scene,
    params: LumpedParams,
    config: RendererConfig,
    tick: u64,
    prev: Option<ContactState>,
    texture_phase: f64,
    pressed: Vec<bool>,
    last_click: Option<u64>,
    clicks: u64,
    governor: GovernorState,
}

impl Renderer {
    pub fn new(scene: Scene, params: &LumpedParams, config: RendererConfig) -> Self {
        let dt = 1.0 / config.tick_rate;
        Self {
            pressed: vec![false; scene.objects.len()],
            scene,
            params: params.clone(),
            config,
            tick: 0,
            prev: None,
            texture_phase: 0.0,
            last_click: None,
            clicks: 0,
            governor: GovernorState::new(params, dt),
        }
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.config.tick_rate
    }

    pub fn governor(&self) -> &GovernorState {
        &self.governor
    }

    /// Number of click events fired so far.
    pub fn clicks(&self) -> u64 {
        self.clicks
    }

    pub fn texture_phase(&self) -> f64 {
        self.texture_phase
    }

    fn update_buttons(&mut self, fingertip: Vec3) {
        for (i, obj) in self.scene.objects.iter().enumerate() {
            if let Shape::Button { travel, .. } = obj.shape {
                let (pen, _) = obj.penetration(fingertip);
                if !self.pressed[i] && pen >= travel {
                    self.pressed[i] = true;
                    self.last_click = Some(self.tick);
                    self.clicks += 1;
                } else if self.pressed[i] && pen < 0.5 * travel {
                    self.pressed[i] = false;
                }
            }
        }
    }

    pub fn tick(&mut self, fingertip: Vec3) -> RenderCommand {
        let dt = self.dt();
        let cs = contact_solve(&self.scene, fingertip, self.prev.as_ref(), dt);
        self.update_buttons(fingertip);

        let (drive, texture) = match cs.object {
            Some(i) => {
                let obj = &self.scene.objects[i];
                let drive = inverse_drive(target_force(&cs, obj), &self.params);
                let tex = obj
                    .texture
                    .map_or(0.0, |t| texture_wave(&cs, &t, dt, &mut self.texture_phase));
                (drive, tex)
            }
            None => (inverse_drive(0.0, &self.params), 0.0),
        };
        let click = self.last_click.map_or(0.0, |t0| {
            click_wave((self.tick - t0) as f64 * dt, &self.config.click)
        });

        let pre_clamp = drive.voltage + texture + click;
        let v_max = self.params.v_max;
        let clamped = pre_clamp.clamp(-v_max, v_max);
        let gain = self.governor.gain;
        let voltage = clamped * gain;
        self.governor.record(voltage / self.params.r_ohm);

        let cmd = RenderCommand {
            tick: self.tick,
            voltage,
            saturated: drive.saturated || clamped != pre_clamp,
            governor_gain: gain,
            spring_voltage: drive.unclamped,
            pre_clamp,
            contact: cs,
        };
        self.prev = Some(cs);
        self.tick += 1;
        cmd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electromech::DEFAULT_PRELOAD;

    fn params(km: f64) -> LumpedParams {
        LumpedParams {
            r_ohm: 8.57,
            l_h: 0.15,
            km,
            m_mov: 0.45e-3,
            k: 783.0,
            c: 0.06,
            preload: DEFAULT_PRELOAD,
            // rigid load cell: blocked constant equals km
            k_contact: 1e12,
            v_max: 7.0,
            km_table: None,
        }
    }

    fn ball(k: f64) -> SceneObject {
        SceneObject {
            id: "ball".into(),
            shape: Shape::Sphere {
                center: [0.0; 3],
                radius: 20e-3,
            },
            stiffness: k,
            damping: 0.0,
            texture: None,
        }
    }

    #[test]
    fn sphere_penetration() {
        let scene = Scene::new(vec![ball(300.0)]);
        let cs = contact_solve(&scene, [0.0, 18e-3, 0.0], None, 1e-3);
        assert!((cs.penetration - 2e-3).abs() < 1e-15);
        let out = contact_solve(&scene, [0.0, 25e-3, 0.0], None, 1e-3);
        assert_eq!(out.object, None);
        assert_eq!(out.penetration, 0.0);
    }

    #[test]
    fn deepest_object_wins() {
        let other = SceneObject {
            id: "other".into(),
            shape: Shape::Sphere {
                center: [0.03, 0.0, 0.0],
                radius: 15e-3,
            },
            ..ball(100.0)
        };
        let scene = Scene::new(vec![ball(300.0), other]);
        // 3 mm into the ball vs 2 mm into the other
        let cs = contact_solve(&scene, [0.017, 0.0, 0.0], None, 1e-3);
        assert_eq!(cs.object, Some(0));
        let cs = contact_solve(&scene, [0.019, 0.0, 0.0], None, 1e-3);
        assert_eq!(cs.object, Some(1));
        assert!((cs.penetration - 4e-3).abs() < 1e-12);
    }

    #[test]
    fn wall_force() {
        let obj = SceneObject {
            damping: 2.0,
            ..ball(200.0)
        };
        let cs = ContactState {
            object: Some(0),
            penetration: 1e-3,
            ..Default::default()
        };
        assert!((target_force(&cs, &obj) - 0.2).abs() < 1e-15);
        let pulling = ContactState {
            penetration_rate: -1.0,
            ..cs
        };
        assert_eq!(target_force(&pulling, &obj), 0.0);
    }

    #[test]
    fn inverse_drive_values() {
        let p = params(0.53);
        let d = inverse_drive(0.2, &p);
        assert!((d.voltage - 0.2 * 8.57 / 0.53).abs() < 1e-6);
        assert!((d.voltage - 3.23).abs() < 0.005 && !d.saturated);
        assert_eq!(inverse_drive(0.0, &p).voltage, 0.0);
        let sat = inverse_drive(1.0, &p);
        assert_eq!(sat.voltage, 7.0);
        assert!(sat.saturated);
    }

    #[test]
    fn texture_frequency_and_silence() {
        let tex = Texture {
            spatial_period: 1e-3,
            amplitude: 2.0,
        };
        let mut phase = 0.0;
        let still = ContactState {
            object: Some(0),
            penetration: 1e-3,
            ..Default::default()
        };
        assert_eq!(texture_wave(&still, &tex, 1e-3, &mut phase), 0.0);
        let sliding = ContactState {
            tangential_speed: 0.05,
            ..still
        };
        // 50 Hz at 1 kHz ticks: 20 ticks per cycle
        for _ in 0..20 {
            texture_wave(&sliding, &tex, 1e-3, &mut phase);
        }
        assert!(phase.min(2.0 * PI - phase) < 1e-9, "{phase}");
    }

    #[test]
    fn click_shape() {
        let cp = ClickParams::default();
        assert_eq!(click_wave(50e-3, &cp), 0.0);
        assert_eq!(click_wave(0.0, &cp), 0.0);
        let dt = 1e-6;
        let argmax = (0..30_000)
            .max_by(|&a, &b| {
                click_wave(a as f64 * dt, &cp)
                    .abs()
                    .total_cmp(&click_wave(b as f64 * dt, &cp).abs())
            })
            .unwrap();
        assert!((argmax as f64 * dt) < 0.25 / cp.freq);
    }

    #[test]
    fn clamp_and_saturation() {
        let mut p = params(0.53);
        p.v_max = 7.0;
        // 8.1 V composed: spring gives 8.1 V before clamp
        let k = 8.1 * 0.53 / 8.57 / 1e-3;
        let scene = Scene::new(vec![ball(k)]);
        let mut r = Renderer::new(scene, &p, RendererConfig::default());
        let cmd = r.tick([0.0, 19e-3, 0.0]);
        assert!((cmd.spring_voltage - 8.1).abs() < 1e-6);
        assert_eq!(cmd.voltage, 7.0);
        assert!(cmd.saturated);
    }

    #[test]
    fn button_clicks_once_with_hysteresis() {
        let key = SceneObject {
            id: "key".into(),
            shape: Shape::Button {
                point: [0.0; 3],
                normal: [0.0, 0.0, 1.0],
                radius: 5e-3,
                travel: 2e-3,
            },
            stiffness: 100.0,
            damping: 0.0,
            texture: None,
        };
        let mut r = Renderer::new(Scene::new(vec![key]), &params(0.5), RendererConfig::default());
        // press past travel, wobble above half travel, release, press again
        for z in [0.0, -1e-3, -2.1e-3, -1.5e-3, -2.5e-3, -1.1e-3, -0.9e-3, -2.2e-3] {
            r.tick([0.0, 0.0, z]);
        }
        assert_eq!(r.clicks(), 2);
    }

    #[test]
    fn idle_is_silent() {
        let mut r = Renderer::new(Scene::new(vec![ball(300.0)]), &params(0.5), RendererConfig::default());
        for i in 0..100 {
            let cmd = r.tick([0.1, 0.0, i as f64 * 1e-4]);
            assert_eq!(cmd.voltage, 0.0);
        }
    }

    #[test]
    fn governor_engages_past_budget() {
        let p = params(0.5);
        let budget = (p.v_max / p.r_ohm).powi(2) * 5.0;
        let mut g = GovernorState::new(&p, 1e-3);
        let i = p.v_max / p.r_ohm;
        let mut n = 0u64;
        while g.gain == 1.0 {
            g.record(i * g.gain);
            n += 1;
        }
        // first tick with i2t > budget
        let expected = (budget / (i * i * 1e-3)).floor() as u64 + 1;
        assert!(n.abs_diff(expected) <= 1, "{n} vs {expected}");
    }

    #[test]
    fn scene_file_parses_and_rejects() {
        let text = "# demo\nplane wall 0 0 0 0 0 2 300 0.5\nsphere ball 0 0 0.1 0.02 900 0.2 0.001 1.5\n\
                    button key 0 0.05 0 0 0 1 0.01 0.002 200 0.1\n";
        let s = Scene::parse(text).unwrap();
        assert_eq!(s.objects.len(), 3);
        assert_eq!(
            s.objects[0].shape,
            Shape::Plane {
                point: [0.0; 3],
                normal: [0.0, 0.0, 1.0]
            }
        );
        assert_eq!(s.objects[1].texture.unwrap().spatial_period, 0.001);
        let bad = Scene::parse("plane a 0 0 0 0 0 1 300\n").unwrap_err();
        assert_eq!(bad.line, 1);
        let neg = Scene::parse("\nsphere b 0 0 0 1 -5 0\n").unwrap_err();
        assert_eq!(neg.line, 2);
        assert!(Scene::parse("cube c 1 2 3").is_err());
        assert!(Scene::parse("sphere a 0 0 0 1 1 0 0 1").is_err());
    }
}
