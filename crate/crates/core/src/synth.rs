//! Procedural paired clear/rainy driving sequences.
//!
//! Scenes are low-frequency in time: the road geometry follows a
//! piecewise-constant curvature profile, roadside posts scroll forward one
//! pixel per frame and the skyline drifts laterally with accumulated
//! curvature. Rain streaks are resampled independently every frame.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{write_steering_csv, LoadedMap, Split, SteeringRecord};
use crate::error::{Error, IoContext, Result};
use crate::frame::Frame;

/// Wheelbase of the bicycle model mapping curvature to drive-wheel angle.
pub const WHEELBASE_M: f64 = 2.5;
/// Skyline drift in pixels per frame for a curvature of 0.01 / m.
pub const DRIFT_PX_PER_CENTI_CURVATURE: f64 = 2.0;
/// Forward scroll of ground texture and roadside posts, pixels per frame.
pub const SCROLL_PX_PER_FRAME: f64 = 1.0;

const HORIZON: f64 = 0.4;
/// Lateral road-centre offset at the horizon per unit curvature (image widths).
const BEND_GAIN: f64 = 12.5;
const DEPTH_OFFSET: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Palette {
    Urban,
    Rural,
    Highway,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSegment {
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    /// Road curvature in 1/m; positive bends right.
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub map_name: String,
    pub n_frames: usize,
    pub seed: u64,
    pub resolution: usize,
    pub curvature_profile: Vec<CurvatureSegment>,
    pub palette: Palette,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 || self.resolution == 0 {
            return Err(Error::Config(format!(
                "scene {}: n_frames and resolution must be positive",
                self.map_name
            )));
        }
        let mut segs = self.curvature_profile.clone();
        segs.sort_by_key(|s| s.start_frame);
        for s in &segs {
            if s.start_frame >= s.end_frame || s.end_frame > self.n_frames || !s.curvature.is_finite() {
                return Err(Error::Config(format!(
                    "scene {}: invalid curvature segment {s:?}",
                    self.map_name
                )));
            }
        }
        for w in segs.windows(2) {
            if w[1].start_frame < w[0].end_frame {
                return Err(Error::Config(format!(
                    "scene {}: overlapping curvature segments {:?} and {:?}",
                    self.map_name, w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    pub fn curvature_at(&self, t: usize) -> f64 {
        self.curvature_profile
            .iter()
            .find(|s| (s.start_frame..s.end_frame).contains(&t))
            .map_or(0.0, |s| s.curvature)
    }

    /// Lateral skyline drift accumulated over frames `0..t`, in pixels.
    pub fn lateral_drift(&self, t: usize) -> f64 {
        (0..t)
            .map(|f| DRIFT_PX_PER_CENTI_CURVATURE * self.curvature_at(f) / 0.01)
            .sum()
    }
}

/// Curvature profile of alternating straights and bends drawn from `seed`.
pub fn random_curvature_profile(n_frames: usize, seed: u64, max_curvature: f64) -> Vec<CurvatureSegment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c0de);
    let mut segs = Vec::new();
    let mut t = 0;
    while t < n_frames {
        let len = rng.random_range(15..=45).min(n_frames - t);
        if rng.random_bool(0.7) {
            let magnitude = rng.random_range(0.2..=1.0) * max_curvature;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            segs.push(CurvatureSegment {
                start_frame: t,
                end_frame: t + len,
                curvature: sign * magnitude,
            });
        }
        t += len;
    }
    segs
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RainSpec {
    pub streaks_per_frame: usize,
    pub length_px: (f64, f64),
    pub thickness_px: (f64, f64),
    /// (mean, jitter) in degrees from vertical.
    pub angle_deg: (f64, f64),
    /// Additive brightness range.
    pub intensity: (f64, f64),
    pub global_desaturation: f64,
    pub global_darkening: f64,
    pub seed: u64,
}

impl RainSpec {
    /// Dense, bright streaks with strong weather styling.
    pub fn heavy(resolution: usize, seed: u64) -> Self {
        let s = resolution as f64 / 64.0;
        let w = (s / 2.0).max(1.0);
        Self {
            streaks_per_frame: (16.0 * s * s).round() as usize,
            length_px: (6.0 * s, 14.0 * s),
            thickness_px: (0.8 * w, 1.6 * w),
            angle_deg: (8.0, 6.0),
            intensity: (0.3, 0.6),
            global_desaturation: 0.35,
            global_darkening: 0.25,
            seed,
        }
    }

    pub fn light(resolution: usize, seed: u64) -> Self {
        let s = resolution as f64 / 64.0;
        let w = (s / 2.0).max(1.0);
        Self {
            streaks_per_frame: (10.0 * s * s).round() as usize,
            length_px: (5.0 * s, 10.0 * s),
            thickness_px: (0.7 * w, 1.2 * w),
            angle_deg: (5.0, 4.0),
            intensity: (0.15, 0.35),
            global_desaturation: 0.15,
            global_darkening: 0.1,
            seed,
        }
    }

    /// No streaks and no styling: overlay is the identity.
    pub fn none(seed: u64) -> Self {
        Self {
            streaks_per_frame: 0,
            length_px: (0.0, 0.0),
            thickness_px: (0.0, 0.0),
            angle_deg: (0.0, 0.0),
            intensity: (0.0, 0.0),
            global_desaturation: 0.0,
            global_darkening: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("length_px", self.length_px),
            ("thickness_px", self.thickness_px),
            ("intensity", self.intensity),
        ];
        for (name, (lo, hi)) in pairs {
            if !(lo <= hi) || lo < 0.0 {
                return Err(Error::Config(format!("rain {name}: need 0 <= min <= max, got ({lo}, {hi})")));
            }
        }
        if self.intensity.1 > 1.0 {
            return Err(Error::Config("rain intensity must lie within [0, 1]".into()));
        }
        if self.angle_deg.1 < 0.0 || !self.angle_deg.0.is_finite() {
            return Err(Error::Config("rain angle jitter must be non-negative".into()));
        }
        for (name, v) in [
            ("global_desaturation", self.global_desaturation),
            ("global_darkening", self.global_darkening),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("rain {name} must lie within [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

struct PaletteColors {
    sky_top: [f64; 3],
    sky_horizon: [f64; 3],
    skyline: [f64; 3],
    ground: [f64; 3],
    road: [f64; 3],
    lane: [f64; 3],
    post: [f64; 3],
    skyline_height: f64,
    blocky: bool,
    post_width: f64,
}

fn palette_colors(p: Palette) -> PaletteColors {
    match p {
        Palette::Urban => PaletteColors {
            sky_top: [0.35, 0.55, 0.85],
            sky_horizon: [0.75, 0.82, 0.92],
            skyline: [0.45, 0.42, 0.48],
            ground: [0.55, 0.53, 0.5],
            road: [0.3, 0.3, 0.32],
            lane: [0.95, 0.95, 0.92],
            post: [0.2, 0.2, 0.22],
            skyline_height: 0.3,
            blocky: true,
            post_width: 0.006,
        },
        Palette::Rural => PaletteColors {
            sky_top: [0.3, 0.5, 0.9],
            sky_horizon: [0.7, 0.8, 0.95],
            skyline: [0.25, 0.45, 0.25],
            ground: [0.35, 0.6, 0.25],
            road: [0.42, 0.38, 0.33],
            lane: [0.92, 0.9, 0.75],
            post: [0.3, 0.22, 0.12],
            skyline_height: 0.15,
            blocky: false,
            post_width: 0.012,
        },
        Palette::Highway => PaletteColors {
            sky_top: [0.25, 0.45, 0.8],
            sky_horizon: [0.8, 0.8, 0.85],
            skyline: [0.5, 0.42, 0.35],
            ground: [0.6, 0.55, 0.4],
            road: [0.22, 0.22, 0.24],
            lane: [0.95, 0.85, 0.3],
            post: [0.75, 0.75, 0.78],
            skyline_height: 0.22,
            blocky: false,
            post_width: 0.005,
        },
    }
}

fn hash64(mut x: u64) -> u64 {
    x ^= x >> 33;
    x = x.wrapping_mul(0xff51_afd7_ed55_8ccd);
    x ^= x >> 33;
    x = x.wrapping_mul(0xc4ce_b9fe_1a85_ec53);
    x ^ (x >> 33)
}

fn unit_hash(seed: u64, k: i64) -> f64 {
    (hash64(seed ^ hash64(k as u64)) >> 11) as f64 / (1u64 << 53) as f64
}

fn lerp(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn scale(c: [f64; 3], s: f64) -> [f64; 3] {
    [c[0] * s, c[1] * s, c[2] * s]
}

/// Road geometry of one frame, in normalized image coordinates.
struct RoadGeometry {
    curvature: f64,
    depth_scale: f64,
    scroll: f64,
}

impl RoadGeometry {
    fn new(spec: &SceneSpec, t: usize) -> Self {
        let n = spec.resolution as f64;
        Self {
            curvature: spec.curvature_at(t),
            // one depth unit per image row at the bottom edge
            depth_scale: (1.0 + DEPTH_OFFSET).powi(2) * (1.0 - HORIZON) * n,
            scroll: SCROLL_PX_PER_FRAME * t as f64,
        }
    }

    fn center(&self, depth_t: f64) -> f64 {
        0.5 + BEND_GAIN * self.curvature * (1.0 - depth_t).powi(2)
    }

    fn half_width(depth_t: f64) -> f64 {
        0.03 + 0.42 * depth_t
    }

    fn line_half_width(depth_t: f64) -> f64 {
        0.004 + 0.012 * depth_t
    }

    fn world_depth(&self, depth_t: f64) -> f64 {
        self.depth_scale / (depth_t + DEPTH_OFFSET)
    }

    /// Whether normalized pixel centre `(u, depth_t)` lies on a lane marking.
    fn is_lane(&self, u: f64, depth_t: f64) -> bool {
        let du = u - self.center(depth_t);
        let hw = Self::half_width(depth_t);
        let lw = Self::line_half_width(depth_t);
        if (du.abs() - 0.9 * hw).abs() < lw {
            return true;
        }
        let phase = (self.world_depth(depth_t) + self.scroll).rem_euclid(12.0);
        du.abs() < 0.8 * lw && phase < 6.0
    }
}

fn depth_of_row(v: f64) -> Option<f64> {
    (v >= HORIZON).then(|| (v - HORIZON) / (1.0 - HORIZON))
}

/// Pixel mask of lane markings for frame `t` (row-major, `resolution^2`).
pub fn lane_mask(spec: &SceneSpec, t: usize) -> Result<Vec<bool>> {
    check_frame(spec, t)?;
    let n = spec.resolution;
    let road = RoadGeometry::new(spec, t);
    let mut mask = vec![false; n * n];
    for y in 0..n {
        let v = (y as f64 + 0.5) / n as f64;
        let Some(dt) = depth_of_row(v) else { continue };
        for x in 0..n {
            let u = (x as f64 + 0.5) / n as f64;
            mask[y * n + x] = road.is_lane(u, dt);
        }
    }
    Ok(mask)
}

fn check_frame(spec: &SceneSpec, t: usize) -> Result<()> {
    if t >= spec.n_frames {
        return Err(Error::Index {
            index: t,
            len: spec.n_frames,
        });
    }
    Ok(())
}

struct Post {
    u: f64,
    v_base: f64,
    half_width: f64,
    height: f64,
}

fn roadside_posts(road: &RoadGeometry, palette: &PaletteColors) -> Vec<Post> {
    let spacing = 24.0;
    let near = road.world_depth(1.0);
    let far = road.world_depth(0.02);
    let first = ((near + road.scroll) / spacing).floor() as i64;
    let last = ((far + road.scroll) / spacing).ceil() as i64;
    let mut posts = Vec::new();
    for k in first..=last {
        let w = k as f64 * spacing - road.scroll;
        if w < near || w > far {
            continue;
        }
        let dt = road.depth_scale / w - DEPTH_OFFSET;
        let c = road.center(dt);
        let off = RoadGeometry::half_width(dt) + 0.03 + 0.05 * dt;
        let half_width = palette.post_width * (0.3 + dt);
        let height = 0.04 + 0.3 * dt;
        let v_base = HORIZON + dt * (1.0 - HORIZON);
        for u in [c - off, c + off] {
            posts.push(Post {
                u,
                v_base,
                half_width,
                height,
            });
        }
    }
    posts
}

/// Render the clear frame `t` of a scene.
pub fn render_clear_frame(spec: &SceneSpec, t: usize) -> Result<Frame> {
    check_frame(spec, t)?;
    let n = spec.resolution;
    let nf = n as f64;
    let pal = palette_colors(spec.palette);
    let road = RoadGeometry::new(spec, t);
    let drift = spec.lateral_drift(t);
    let posts = roadside_posts(&road, &pal);
    let mut frame = Frame::new(n, n);

    for y in 0..n {
        let v = (y as f64 + 0.5) / nf;
        for x in 0..n {
            let u = (x as f64 + 0.5) / nf;
            let mut c = match depth_of_row(v) {
                None => {
                    let sky = lerp(pal.sky_top, pal.sky_horizon, v / HORIZON);
                    // skyline anchored in world x, drifting with heading
                    let wx = (x as f64 + drift) / nf;
                    let (h, shade) = if pal.blocky {
                        let b = (wx * 8.0).floor() as i64;
                        (0.3 + 0.7 * unit_hash(spec.seed, b), 0.85 + 0.3 * unit_hash(spec.seed ^ 7, b))
                    } else {
                        let p1 = unit_hash(spec.seed, 1) * std::f64::consts::TAU;
                        let p2 = unit_hash(spec.seed, 2) * std::f64::consts::TAU;
                        let h = 0.55
                            + 0.3 * (std::f64::consts::TAU * wx * 1.5 + p1).sin()
                            + 0.15 * (std::f64::consts::TAU * wx * 4.0 + p2).sin();
                        (h, 1.0)
                    };
                    if HORIZON - v < pal.skyline_height * HORIZON * h {
                        scale(pal.skyline, shade)
                    } else {
                        sky
                    }
                }
                Some(dt) => {
                    let du = u - road.center(dt);
                    if road.is_lane(u, dt) {
                        pal.lane
                    } else if du.abs() < RoadGeometry::half_width(dt) {
                        scale(pal.road, 0.9 + 0.2 * dt)
                    } else {
                        let stripe = (std::f64::consts::TAU * (road.world_depth(dt) + road.scroll) / 16.0).sin();
                        scale(pal.ground, 0.9 + 0.1 * dt + 0.04 * stripe)
                    }
                }
            };
            for p in &posts {
                if (u - p.u).abs() < p.half_width && v <= p.v_base && v >= p.v_base - p.height {
                    c = pal.post;
                }
            }
            frame.set(
                y,
                x,
                [
                    c[0].clamp(0.0, 1.0) as f32,
                    c[1].clamp(0.0, 1.0) as f32,
                    c[2].clamp(0.0, 1.0) as f32,
                ],
            );
        }
    }
    Ok(frame)
}

fn frame_rng(seed: u64, t: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(hash64(seed) ^ hash64(0x9e37_79b9_7f4a_7c15 ^ t as u64))
}

/// Additive rain brightness per pixel (row-major) for frame `t`.
pub fn rain_layer(spec: &RainSpec, t: usize, height: usize, width: usize) -> Vec<f32> {
    let mut layer = vec![0.0f32; height * width];
    let mut rng = frame_rng(spec.seed, t);
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| {
        if hi > lo {
            rng.random_range(lo..hi)
        } else {
            lo
        }
    };
    for _ in 0..spec.streaks_per_frame {
        let cx = rng.random_range(-0.1..1.1) * width as f64;
        let cy = rng.random_range(-0.1..1.1) * height as f64;
        let len = uniform(&mut rng, spec.length_px);
        let thick = uniform(&mut rng, spec.thickness_px);
        let angle = (spec.angle_deg.0 + spec.angle_deg.1 * rng.random_range(-1.0..=1.0)).to_radians();
        let intensity = uniform(&mut rng, spec.intensity);
        let (dx, dy) = (angle.sin(), angle.cos());
        let reach = len / 2.0 + thick + 1.0;
        let x0 = (cx - reach).floor().max(0.0) as usize;
        let x1 = ((cx + reach).ceil().max(0.0) as usize).min(width);
        let y0 = (cy - reach).floor().max(0.0) as usize;
        let y1 = ((cy + reach).ceil().max(0.0) as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                let px = x as f64 + 0.5 - cx;
                let py = y as f64 + 0.5 - cy;
                let along = (px * dx + py * dy).clamp(-len / 2.0, len / 2.0);
                let dist = ((px - along * dx).powi(2) + (py - along * dy).powi(2)).sqrt();
                let coverage = (thick / 2.0 + 0.5 - dist).clamp(0.0, 1.0);
                let value = (coverage * intensity) as f32;
                let cell = &mut layer[y * width + x];
                if value > *cell {
                    *cell = value;
                }
            }
        }
    }
    layer
}

fn luminance(c: [f32; 3]) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Weather styling applied before streaks: desaturate, then darken.
pub fn weather_style(clear: &Frame, spec: &RainSpec) -> Frame {
    let d = spec.global_desaturation as f32;
    let k = spec.global_darkening as f32;
    let mut out = clear.clone();
    for y in 0..clear.height() {
        for x in 0..clear.width() {
            let c = clear.get(y, x);
            let g = luminance(c);
            out.set(y, x, c.map(|v| ((1.0 - d) * v + d * g) * (1.0 - k)));
        }
    }
    out
}

/// Inverse of [`weather_style`] for `darkening < 1` and `desaturation < 1`.
pub fn invert_weather_style(styled: [f32; 3], spec: &RainSpec) -> [f32; 3] {
    let d = spec.global_desaturation as f32;
    let k = spec.global_darkening as f32;
    let c = styled.map(|v| v / (1.0 - k));
    let g = luminance(c);
    c.map(|v| (v - d * g) / (1.0 - d))
}

/// Style `clear` and add the streaks of frame `t`, clipped to `[0, 1]`.
pub fn overlay_rain(clear: &Frame, spec: &RainSpec, t: usize) -> Frame {
    let mut out = weather_style(clear, spec);
    let (h, w) = (clear.height(), clear.width());
    let layer = rain_layer(spec, t, h, w);
    let plane = h * w;
    let data = out.planar_mut();
    for c in 0..3 {
        for (v, &r) in data[c * plane..(c + 1) * plane].iter_mut().zip(&layer) {
            *v = (*v + r).clamp(0.0, 1.0);
        }
    }
    out
}

/// Drive-wheel angle in degrees for a road curvature in 1/m.
pub fn drive_angle_deg(curvature: f64) -> f64 {
    (WHEELBASE_M * curvature).atan().to_degrees()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub index: usize,
    pub clear: Frame,
    pub rainy: Frame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMap {
    pub scene_spec: SceneSpec,
    pub rain_spec: RainSpec,
    pub frames: Vec<SyntheticFrame>,
    pub steering: Vec<SteeringRecord>,
}

pub fn synthesize_map(scene_spec: &SceneSpec, rain_spec: &RainSpec) -> Result<SyntheticMap> {
    scene_spec.validate()?;
    rain_spec.validate()?;
    let mut frames = Vec::with_capacity(scene_spec.n_frames);
    let mut steering = Vec::with_capacity(scene_spec.n_frames);
    for t in 0..scene_spec.n_frames {
        let clear = render_clear_frame(scene_spec, t)?;
        let rainy = overlay_rain(&clear, rain_spec, t);
        frames.push(SyntheticFrame {
            index: t,
            clear,
            rainy,
        });
        steering.push(SteeringRecord {
            frame_index: t,
            drive_wheel_angle: drive_angle_deg(scene_spec.curvature_at(t)),
        });
    }
    Ok(SyntheticMap {
        scene_spec: scene_spec.clone(),
        rain_spec: *rain_spec,
        frames,
        steering,
    })
}

#[derive(Serialize)]
struct Provenance<'a> {
    scene: &'a SceneSpec,
    rain: &'a RainSpec,
}

impl SyntheticMap {
    /// In-memory equivalent of writing the map and loading it back at its
    /// native resolution (pixels quantized to 8 bits).
    pub fn to_loaded(&self) -> LoadedMap {
        LoadedMap {
            map_name: self.scene_spec.map_name.clone(),
            frame_indices: self.frames.iter().map(|f| f.index).collect(),
            clear: self.frames.iter().map(|f| f.clear.quantized()).collect(),
            rainy: self.frames.iter().map(|f| f.rainy.quantized()).collect(),
            steering: self.steering.clone(),
        }
    }

    /// Write the dataset layout under `root/<map_name>/` plus `synth.json`.
    pub fn write(&self, root: &Path) -> Result<()> {
        let dir = root.join(&self.scene_spec.map_name);
        std::fs::create_dir_all(dir.join("clear")).at(&dir)?;
        std::fs::create_dir_all(dir.join("rainy")).at(&dir)?;
        for f in &self.frames {
            let name = crate::dataset::frame_file_name(f.index);
            f.clear.save_png(&dir.join("clear").join(&name))?;
            f.rainy.save_png(&dir.join("rainy").join(&name))?;
        }
        write_steering_csv(&dir.join("steering.csv"), &self.steering)?;
        let prov = serde_json::to_string_pretty(&Provenance {
            scene: &self.scene_spec,
            rain: &self.rain_spec,
        })?;
        let path = dir.join("synth.json");
        std::fs::write(&path, prov + "\n").at(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RainLevel {
    Heavy,
    Light,
}

/// One map of a [`SynthConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapConfig {
    pub name: String,
    /// `None` for auxiliary maps that belong to no split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
    pub palette: Palette,
    pub scene_seed: u64,
    pub rain_seed: u64,
    pub rain: RainLevel,
    /// Name of the map whose scene this one re-renders under other weather.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant_of: Option<String>,
}

/// A whole synthetic dataset: shared frame settings plus the map list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_frames: usize,
    pub resolution: usize,
    pub max_curvature: f64,
    pub maps: Vec<MapConfig>,
}

impl Default for SynthConfig {
    /// Five training towns, one validation town, one test town and a
    /// light-rain rendering of the test town.
    fn default() -> Self {
        let palettes = [Palette::Urban, Palette::Rural, Palette::Highway];
        let towns = [
            ("town01", Split::Train),
            ("town03", Split::Train),
            ("town04", Split::Train),
            ("town07", Split::Train),
            ("town10", Split::Train),
            ("town02", Split::Validation),
            ("town05", Split::Test),
        ];
        let mut maps: Vec<MapConfig> = towns
            .iter()
            .enumerate()
            .map(|(i, &(name, split))| MapConfig {
                name: name.into(),
                split: Some(split),
                palette: palettes[i % 3],
                scene_seed: 1000 + i as u64,
                rain_seed: 2000 + i as u64,
                rain: RainLevel::Heavy,
                variant_of: None,
            })
            .collect();
        let test = maps.last().expect("non-empty").clone();
        maps.push(MapConfig {
            name: "town05_light".into(),
            split: None,
            rain_seed: 3000,
            rain: RainLevel::Light,
            variant_of: Some(test.name.clone()),
            ..test
        });
        Self {
            n_frames: 200,
            resolution: 64,
            max_curvature: 0.02,
            maps,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_frames == 0 || self.resolution == 0 {
            return Err(Error::Config("n_frames and resolution must be positive".into()));
        }
        if !(self.max_curvature >= 0.0) || !self.max_curvature.is_finite() {
            return Err(Error::Config(format!("invalid max_curvature {}", self.max_curvature)));
        }
        let mut names = std::collections::BTreeSet::new();
        let mut rain_seeds = std::collections::BTreeSet::new();
        let mut scene_seeds = std::collections::BTreeMap::new();
        for m in &self.maps {
            if m.name.is_empty() || m.name.contains(['/', '\\']) || m.name.starts_with('.') {
                return Err(Error::Config(format!("invalid map name {:?}", m.name)));
            }
            if !names.insert(m.name.as_str()) {
                return Err(Error::Config(format!("duplicate map name {}", m.name)));
            }
            if !rain_seeds.insert(m.rain_seed) {
                return Err(Error::Config(format!("{}: rain seed {} reused", m.name, m.rain_seed)));
            }
            if m.variant_of.is_none() {
                if let Some(other) = scene_seeds.insert(m.scene_seed, m.name.as_str()) {
                    return Err(Error::Config(format!(
                        "{} and {other} share scene seed {}",
                        m.name, m.scene_seed
                    )));
                }
            }
        }
        for m in &self.maps {
            if let Some(base) = &m.variant_of {
                let b = self
                    .map(base)
                    .ok_or_else(|| Error::Config(format!("{}: unknown base map {base}", m.name)))?;
                if (b.scene_seed, b.palette) != (m.scene_seed, m.palette) {
                    return Err(Error::Config(format!("{}: scene differs from its base map {base}", m.name)));
                }
            }
        }
        Ok(())
    }

    pub fn map(&self, name: &str) -> Option<&MapConfig> {
        self.maps.iter().find(|m| m.name == name)
    }

    pub fn maps_in(&self, split: Split) -> Vec<&MapConfig> {
        self.maps.iter().filter(|m| m.split == Some(split)).collect()
    }

    /// Auxiliary maps re-rendering `base` under other weather.
    pub fn variants_of(&self, base: &str) -> Vec<&MapConfig> {
        self.maps
            .iter()
            .filter(|m| m.variant_of.as_deref() == Some(base))
            .collect()
    }

    pub fn scene_spec(&self, m: &MapConfig) -> SceneSpec {
        SceneSpec {
            map_name: m.name.clone(),
            n_frames: self.n_frames,
            seed: m.scene_seed,
            resolution: self.resolution,
            curvature_profile: random_curvature_profile(self.n_frames, m.scene_seed, self.max_curvature),
            palette: m.palette,
        }
    }

    pub fn rain_spec(&self, m: &MapConfig) -> RainSpec {
        match m.rain {
            RainLevel::Heavy => RainSpec::heavy(self.resolution, m.rain_seed),
            RainLevel::Light => RainSpec::light(self.resolution, m.rain_seed),
        }
    }

    pub fn synthesize(&self, m: &MapConfig) -> Result<SyntheticMap> {
        synthesize_map(&self.scene_spec(m), &self.rain_spec(m))
    }
}
