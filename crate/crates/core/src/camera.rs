//! Pan-tilt pinhole camera: projection, visibility predicates and the
//! synthetic grayscale frame renderer.
//!
//! The camera sits `mount_height` above the robot base, `forward_offset`
//! ahead of it. Pan rotates the optical axis about the vertical axis
//! (positive pan looks left, same sense as the robot heading), then tilt
//! pitches it down (positive tilt looks at the ground). Projection uses the
//! usual computer-vision image frame: x right, y down, z along the optical
//! axis, square pixels, and a vertical field of view derived from the
//! aspect ratio.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use nalgebra::Point2;
use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{FieldModel, Landmark, LandmarkType};
use crate::geometry::Pose2d;

/// Head configuration `(pan, tilt)` in radians.
///
/// The head joints cover pan in `(-pi/2, pi/2)` and tilt in
/// `(pi/36, 13*pi/36)`; see [`JointLimits`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPosition {
    pub pan: f64,
    pub tilt: f64,
}

impl CameraPosition {
    pub fn new(pan: f64, tilt: f64) -> Self {
        Self { pan, tilt }
    }
}

/// Mechanical range of the head joints (open intervals).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub pan_min: f64,
    pub pan_max: f64,
    pub tilt_min: f64,
    pub tilt_max: f64,
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            pan_min: -FRAC_PI_2,
            pan_max: FRAC_PI_2,
            tilt_min: PI / 36.0,
            tilt_max: 13.0 * PI / 36.0,
        }
    }
}

impl JointLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.pan_min < self.pan_max) {
            return Err(Error::Config(format!(
                "joint pan range is empty: ({}, {})",
                self.pan_min, self.pan_max
            )));
        }
        if !(self.tilt_min < self.tilt_max) {
            return Err(Error::Config(format!(
                "joint tilt range is empty: ({}, {})",
                self.tilt_min, self.tilt_max
            )));
        }
        Ok(())
    }

    pub fn clamp(&self, cam: CameraPosition) -> CameraPosition {
        CameraPosition {
            pan: cam.pan.clamp(self.pan_min, self.pan_max),
            tilt: cam.tilt.clamp(self.tilt_min, self.tilt_max),
        }
    }

    pub fn contains(&self, cam: &CameraPosition) -> bool {
        cam.pan >= self.pan_min
            && cam.pan <= self.pan_max
            && cam.tilt >= self.tilt_min
            && cam.tilt <= self.tilt_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub image_width: u32,
    pub image_height: u32,
    /// Horizontal field of view, radians.
    pub horizontal_fov: f64,
    /// Camera height above the ground, meters.
    pub mount_height: f64,
    /// Camera offset ahead of the robot base, meters.
    pub mount_forward_offset: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            image_width: 160,
            image_height: 120,
            horizontal_fov: PI / 3.0,
            mount_height: 0.55,
            mount_forward_offset: 0.05,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if self.image_width == 0 || self.image_height == 0 {
            return Err(Error::Config(format!(
                "camera image size must be positive, got {}x{}",
                self.image_width, self.image_height
            )));
        }
        if !(self.horizontal_fov > 0.0 && self.horizontal_fov < PI) {
            return Err(Error::Config(format!(
                "camera.horizontal_fov must be in (0, pi), got {}",
                self.horizontal_fov
            )));
        }
        if !(self.mount_height > 0.0) {
            return Err(Error::Config(format!(
                "camera.mount_height must be positive, got {}",
                self.mount_height
            )));
        }
        Ok(())
    }

    /// Focal length in pixels (square pixels, shared by both axes).
    pub fn focal_px(&self) -> f64 {
        (self.image_width as f64 / 2.0) / (self.horizontal_fov / 2.0).tan()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.image_width as f64 - 1.0) / 2.0,
            (self.image_height as f64 - 1.0) / 2.0,
        )
    }
}

/// Continuous pixel coordinates; pixel centers sit on integer coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImagePoint {
    pub x: f64,
    pub y: f64,
}

/// Maximum observation distance per landmark type, meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisibilityThresholds {
    pub l_corner: f64,
    pub t_junction: f64,
    pub line_point: f64,
    pub boundary_point: f64,
}

impl Default for VisibilityThresholds {
    fn default() -> Self {
        Self {
            l_corner: 4.0,
            t_junction: 4.0,
            line_point: 3.0,
            boundary_point: 5.0,
        }
    }
}

impl VisibilityThresholds {
    pub fn get(&self, kind: LandmarkType) -> f64 {
        match kind {
            LandmarkType::LCorner => self.l_corner,
            LandmarkType::TJunction => self.t_junction,
            LandmarkType::LinePoint => self.line_point,
            LandmarkType::BoundaryPoint => self.boundary_point,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("vis.l_corner", self.l_corner),
            ("vis.t_junction", self.t_junction),
            ("vis.line_point", self.line_point),
            ("vis.boundary_point", self.boundary_point),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Camera-frame coordinates of a world point: (right, down, depth).
fn camera_coords(
    pose: &Pose2d,
    cam: &CameraPosition,
    intr: &CameraIntrinsics,
    world: (f64, f64, f64),
) -> (f64, f64, f64) {
    // World -> robot frame (x forward, y left, z up).
    let (st, ct) = pose.theta.sin_cos();
    let dx = world.0 - pose.x;
    let dy = world.1 - pose.y;
    let rx = ct * dx + st * dy;
    let ry = -st * dx + ct * dy;
    let rz = world.2;
    // Robot frame -> camera pivot.
    let px = rx - intr.mount_forward_offset;
    let py = ry;
    let pz = rz - intr.mount_height;
    // Undo pan (rotation about the vertical axis).
    let (sp, cp) = cam.pan.sin_cos();
    let qx = cp * px + sp * py;
    let qy = -sp * px + cp * py;
    let qz = pz;
    // Tilt pitches the optical axis down by `tilt`.
    let (stl, ctl) = cam.tilt.sin_cos();
    let u = -qy; // image right
    let v = -stl * qx - ctl * qz; // image down
    let w = ctl * qx - stl * qz; // depth along the optical axis
    (u, v, w)
}

/// Projects a ground-plane field point into the image.
///
/// Returns pixel coordinates when the point lies in front of the camera and
/// inside the image rectangle, `None` otherwise.
pub fn project(
    pose: &Pose2d,
    cam: &CameraPosition,
    intr: &CameraIntrinsics,
    point: &Point2<f64>,
) -> Option<ImagePoint> {
    project_inset(pose, cam, intr, point, 0.0)
}

/// `project` with the image rectangle shrunk by `margin_px` on every side.
pub fn project_inset(
    pose: &Pose2d,
    cam: &CameraPosition,
    intr: &CameraIntrinsics,
    point: &Point2<f64>,
    margin_px: f64,
) -> Option<ImagePoint> {
    let (u, v, w) = camera_coords(pose, cam, intr, (point.x, point.y, 0.0));
    if w <= 1e-9 {
        return None;
    }
    let f = intr.focal_px();
    let (cx, cy) = intr.center();
    let img = ImagePoint {
        x: cx + f * u / w,
        y: cy + f * v / w,
    };
    let wf = intr.image_width as f64;
    let hf = intr.image_height as f64;
    let inside = img.x >= -0.5 + margin_px
        && img.x <= wf - 0.5 - margin_px
        && img.y >= -0.5 + margin_px
        && img.y <= hf - 0.5 - margin_px;
    inside.then_some(img)
}

/// Landmarks that project into the image and lie within the per-type
/// distance threshold, in landmark-id order.
pub fn visible_landmarks<'a>(
    pose: &Pose2d,
    cam: &CameraPosition,
    field: &'a FieldModel,
    thr: &VisibilityThresholds,
    intr: &CameraIntrinsics,
) -> Vec<&'a Landmark> {
    field
        .landmarks
        .iter()
        .filter(|lm| {
            pose.distance_to(&lm.position) <= thr.get(lm.kind)
                && project(pose, cam, intr, &lm.position).is_some()
        })
        .collect()
}

/// Whether the ball center projects inside the image rectangle shrunk by
/// `margin_px`.
pub fn ball_visible(
    pose: &Pose2d,
    cam: &CameraPosition,
    intr: &CameraIntrinsics,
    ball: &Point2<f64>,
    margin_px: f64,
) -> bool {
    project_inset(pose, cam, intr, ball, margin_px).is_some()
}

/// Grayscale frame; `pixels` is row-major, one byte per pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            pixels: vec![value; (width * height) as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.pixels[(y * self.width + x) as usize]
    }

    #[inline]
    fn put(&mut self, x: i64, y: i64, value: u8) {
        if x >= 0 && y >= 0 && x < self.width as i64 && y < self.height as i64 {
            self.pixels[(y as u32 * self.width + x as u32) as usize] = value;
        }
    }

    fn fill_disc(&mut self, cx: f64, cy: f64, radius: f64, value: u8) {
        let r = radius.max(0.0);
        let x0 = (cx - r).floor() as i64;
        let x1 = (cx + r).ceil() as i64;
        let y0 = (cy - r).floor() as i64;
        let y1 = (cy + r).ceil() as i64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 - cx;
                let dy = y as f64 - cy;
                if dx * dx + dy * dy <= r * r {
                    self.put(x, y, value);
                }
            }
        }
    }

    /// Binary portable graymap (magic "P5", maxval 255), bit-exact.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.pixels.len() + 32);
        out.extend_from_slice(format!("P5\n{} {}\n255\n", self.width, self.height).as_bytes());
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(&self.to_pgm())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderParams {
    /// Arc-length step when sampling painted lines, meters.
    pub line_step: f64,
    /// Painted line width, meters.
    pub line_width: f64,
    pub background: u8,
    pub line_intensity: u8,
    pub ball_intensity: u8,
    /// Std-dev of per-pixel Gaussian noise in [0,1] intensity units.
    pub noise_sigma: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            line_step: 0.025,
            line_width: 0.05,
            background: 30,
            line_intensity: 200,
            ball_intensity: 255,
            noise_sigma: 0.0,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.line_step > 0.0) {
            return Err(Error::Config(format!(
                "render.line_step must be positive, got {}",
                self.line_step
            )));
        }
        if !(self.line_width > 0.0) {
            return Err(Error::Config(format!(
                "render.line_width must be positive, got {}",
                self.line_width
            )));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!(
                "render.noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Deterministic rasterization of the field lines and the ball.
///
/// Flat-shaded ground-plane projection: everything that is not a painted
/// line or the ball renders as the background intensity. Line samples are
/// painted as discs whose radius scales with inverse depth; the ball is a
/// filled disc with its projected radius drawn on top. `noise_seed` only
/// matters when `params.noise_sigma > 0`.
pub fn render(
    pose: &Pose2d,
    cam: &CameraPosition,
    intr: &CameraIntrinsics,
    field: &FieldModel,
    ball: &Point2<f64>,
    params: &RenderParams,
    noise_seed: u64,
) -> GrayImage {
    let mut img = GrayImage::filled(intr.image_width, intr.image_height, params.background);
    let f = intr.focal_px();
    let (cx, cy) = intr.center();
    let half_diag = (intr.image_width as f64).hypot(intr.image_height as f64) / 2.0;

    let paint_ground_disc = |img: &mut GrayImage, p: Point2<f64>, radius_m: f64, value: u8| {
        let (u, v, w) = camera_coords(pose, cam, intr, (p.x, p.y, 0.0));
        if w <= 1e-9 {
            return;
        }
        let px = cx + f * u / w;
        let py = cy + f * v / w;
        let r_px = (f * radius_m / w).max(1.0).min(2.0 * half_diag);
        // Cheap cull: skip samples whose disc cannot reach the image.
        if px < -r_px - 1.0
            || px > intr.image_width as f64 + r_px
            || py < -r_px - 1.0
            || py > intr.image_height as f64 + r_px
        {
            return;
        }
        img.fill_disc(px, py, r_px, value);
    };

    let half_line = params.line_width / 2.0;
    for seg in &field.segments {
        let len = seg.length();
        let n = (len / params.line_step).ceil().max(1.0) as usize;
        for k in 0..=n {
            let p = seg.point_at(k as f64 / n as f64);
            paint_ground_disc(&mut img, p, half_line, params.line_intensity);
        }
    }
    let r = field.circle_radius;
    let n = (2.0 * PI * r / params.line_step).ceil().max(4.0) as usize;
    for j in 0..n {
        let a = 2.0 * PI * j as f64 / n as f64;
        let p = Point2::new(r * a.cos(), r * a.sin());
        paint_ground_disc(&mut img, p, half_line, params.line_intensity);
    }

    paint_ground_disc(&mut img, *ball, field.ball_radius, params.ball_intensity);

    if params.noise_sigma > 0.0 {
        let mut rng = ChaCha12Rng::seed_from_u64(noise_seed);
        for px in img.pixels.iter_mut() {
            // Box-Muller from two uniform draws keeps the byte stream layout
            // independent of the rand version's gaussian internals.
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen::<f64>();
            let z = (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos();
            let v = *px as f64 / 255.0 + params.noise_sigma * z;
            *px = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }

    img
}
