//! Best-viewpoint search over the discretized pan-tilt grid.
//!
//! Every candidate viewpoint is scored by the differential entropy of the
//! belief after folding in the observations expected from it; the winner is
//! the lowest-entropy candidate that keeps the ball in view. Ties break
//! toward the earlier candidate so results are reproducible.

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::belief::{
    entropy, expected_observations, ukf_update, GaussianBelief, MeasurementNoise, UkfParams,
};
use crate::camera::{
    ball_visible, CameraIntrinsics, CameraPosition, JointLimits, VisibilityThresholds,
};
use crate::error::{Error, Result};
use crate::field::FieldModel;

/// Discretization of the head configuration space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewpointGrid {
    pub pan_points: usize,
    pub tilt_points: usize,
    pub limits: JointLimits,
}

impl Default for ViewpointGrid {
    fn default() -> Self {
        Self {
            pan_points: 10,
            tilt_points: 4,
            limits: JointLimits::default(),
        }
    }
}

impl ViewpointGrid {
    pub fn validate(&self) -> Result<()> {
        if self.pan_points == 0 || self.tilt_points == 0 {
            return Err(Error::Config(format!(
                "viewpoint grid must have at least one point per axis, got {}x{}",
                self.pan_points, self.tilt_points
            )));
        }
        self.limits.validate()
    }

    pub fn len(&self) -> usize {
        self.pan_points * self.tilt_points
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Grid candidates at the cell centers of a uniform partition of each open
/// joint interval, row-major with tilt as the outer axis.
pub fn enumerate_viewpoints(grid: &ViewpointGrid) -> Vec<CameraPosition> {
    let pan_span = grid.limits.pan_max - grid.limits.pan_min;
    let tilt_span = grid.limits.tilt_max - grid.limits.tilt_min;
    let mut out = Vec::with_capacity(grid.len());
    for ti in 0..grid.tilt_points {
        let tilt = grid.limits.tilt_min + (ti as f64 + 0.5) * tilt_span / grid.tilt_points as f64;
        for pi in 0..grid.pan_points {
            let pan = grid.limits.pan_min + (pi as f64 + 0.5) * pan_span / grid.pan_points as f64;
            out.push(CameraPosition::new(pan, tilt));
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateEval {
    pub cam: CameraPosition,
    /// Belief entropy after folding this candidate's expected observations.
    pub entropy: f64,
    pub ball_visible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub best_index: usize,
    pub best: CameraPosition,
    pub best_entropy: f64,
    /// Set when no candidate saw the ball and the ball-pointing fallback was
    /// used instead of the entropy argmin.
    pub fallback: bool,
    pub per_candidate: Vec<CandidateEval>,
}

/// Everything the planner needs besides the belief and the ball.
#[derive(Clone, Copy, Debug)]
pub struct PlannerContext<'a> {
    pub field: &'a FieldModel,
    pub grid: &'a ViewpointGrid,
    pub thresholds: &'a VisibilityThresholds,
    pub intrinsics: &'a CameraIntrinsics,
    pub ukf: &'a UkfParams,
    pub noise: &'a MeasurementNoise,
    pub ball_margin_px: f64,
}

/// Evaluates the full candidate grid and returns the minimum-entropy
/// viewpoint that keeps the ball visible from the belief-mean pose.
pub fn best_viewpoint(
    belief: &GaussianBelief,
    ball: &Point2<f64>,
    ctx: &PlannerContext,
) -> Result<PlanResult> {
    let candidates = enumerate_viewpoints(ctx.grid);
    let mean_pose = belief.mean_pose();
    let mut per_candidate = Vec::with_capacity(candidates.len());

    for cam in &candidates {
        let sees_ball = ball_visible(&mean_pose, cam, ctx.intrinsics, ball, ctx.ball_margin_px);
        let observations =
            expected_observations(belief, cam, ctx.field, ctx.thresholds, ctx.intrinsics, ctx.noise);
        let mut updated = *belief;
        for z in &observations {
            let landmark = &ctx.field.landmarks[z.landmark_id as usize];
            updated = ukf_update(&updated, z, landmark, ctx.ukf)?;
        }
        per_candidate.push(CandidateEval {
            cam: *cam,
            entropy: entropy(&updated)?,
            ball_visible: sees_ball,
        });
    }

    let best_qualifying = per_candidate
        .iter()
        .enumerate()
        .filter(|(_, c)| c.ball_visible)
        .min_by(|(ia, a), (ib, b)| a.entropy.total_cmp(&b.entropy).then(ia.cmp(ib)))
        .map(|(i, _)| i);

    let (best_index, fallback) = match best_qualifying {
        Some(i) => (i, false),
        None => (fallback_index(&mean_pose, ball, ctx.intrinsics, &candidates), true),
    };

    Ok(PlanResult {
        best_index,
        best: per_candidate[best_index].cam,
        best_entropy: per_candidate[best_index].entropy,
        fallback,
        per_candidate,
    })
}

/// Fallback goal when no candidate sees the ball: the candidate whose
/// optical axis is angularly closest to the ball direction.
fn fallback_index(
    pose: &crate::geometry::Pose2d,
    ball: &Point2<f64>,
    intr: &CameraIntrinsics,
    candidates: &[CameraPosition],
) -> usize {
    // Ball direction from the camera pivot, in the robot frame.
    let (st, ct) = pose.theta.sin_cos();
    let dx = ball.x - pose.x;
    let dy = ball.y - pose.y;
    let bx = ct * dx + st * dy - intr.mount_forward_offset;
    let by = -st * dx + ct * dy;
    let bz = -intr.mount_height;
    let norm = (bx * bx + by * by + bz * bz).sqrt().max(1e-12);

    let mut best = 0usize;
    let mut best_angle = f64::INFINITY;
    for (i, cam) in candidates.iter().enumerate() {
        let (sp, cp) = cam.pan.sin_cos();
        let (stl, ctl) = cam.tilt.sin_cos();
        // Optical axis in the robot frame.
        let ax = ctl * cp;
        let ay = ctl * sp;
        let az = -stl;
        let cosine = ((ax * bx + ay * by + az * bz) / norm).clamp(-1.0, 1.0);
        let angle = cosine.acos();
        if angle < best_angle {
            best_angle = angle;
            best = i;
        }
    }
    best
}

/// CSV rendering of a plan: `pan,tilt,entropy,ball_visible,is_best`.
pub fn plan_to_csv(plan: &PlanResult) -> String {
    let mut out = String::from("pan,tilt,entropy,ball_visible,is_best\n");
    for (i, c) in plan.per_candidate.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.cam.pan,
            c.cam.tilt,
            c.entropy,
            c.ball_visible as u8,
            (i == plan.best_index) as u8
        ));
    }
    out
}
