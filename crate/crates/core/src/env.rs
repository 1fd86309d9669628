//! Episodic head-control environment.
//!
//! An episode starts from a uniformly sampled robot pose, ball position and
//! camera configuration (re-sampled until the ball is visible and the
//! planner finds a proper goal). The goal viewpoint is fixed for the whole
//! episode; discrete actions nudge the head by a fixed step. The episode
//! ends on reaching the goal within tolerance, on losing the ball from the
//! image, or after `max_steps` ticks. The robot base never moves during an
//! episode; only the head does.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Point2, Vector3};
use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::belief::{GaussianBelief, MeasurementNoise, UkfParams};
use crate::camera::{
    ball_visible, render, visible_landmarks, CameraIntrinsics, CameraPosition, GrayImage,
    RenderParams, VisibilityThresholds,
};
use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::geometry::Pose2d;
use crate::planner::{best_viewpoint, PlanResult, PlannerContext, ViewpointGrid};
use crate::seed::stream_indexed;

/// Stacked observation bytes (`stack * height * width`, oldest frame
/// first); shared so the replay buffer can alias consecutive states.
pub type Obs = Arc<Vec<u8>>;

/// The four canonical head moves. With `diagonal_actions` the action space
/// doubles to include the combined moves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    PanPlus,
    PanMinus,
    TiltPlus,
    TiltMinus,
}

/// Discrete action table: per-action (pan, tilt) multipliers of the step
/// size.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionSet {
    deltas: Vec<(f64, f64)>,
    names: Vec<&'static str>,
}

impl ActionSet {
    pub fn new(count: usize) -> Result<Self> {
        match count {
            4 => Ok(Self {
                deltas: vec![(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)],
                names: vec!["pan+", "pan-", "tilt+", "tilt-"],
            }),
            8 => Ok(Self {
                deltas: vec![
                    (1.0, 0.0),
                    (-1.0, 0.0),
                    (0.0, 1.0),
                    (0.0, -1.0),
                    (1.0, 1.0),
                    (1.0, -1.0),
                    (-1.0, 1.0),
                    (-1.0, -1.0),
                ],
                names: vec![
                    "pan+", "pan-", "tilt+", "tilt-", "pan+tilt+", "pan+tilt-", "pan-tilt+",
                    "pan-tilt-",
                ],
            }),
            other => Err(Error::Config(format!(
                "env.actions must be 4 or 8, got {other}"
            ))),
        }
    }

    pub fn len(&self) -> usize {
        self.deltas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deltas.is_empty()
    }

    pub fn delta(&self, action: usize) -> (f64, f64) {
        self.deltas[action]
    }

    pub fn name(&self, action: usize) -> &'static str {
        self.names[action]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    Running,
    Success,
    BallLost,
    Timeout,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Running => "running",
            Outcome::Success => "success",
            Outcome::BallLost => "ball_lost",
            Outcome::Timeout => "timeout",
        };
        f.write_str(s)
    }
}

/// Euclidean distance in (pan, tilt) space.
pub fn goal_distance(cam: &CameraPosition, goal: &CameraPosition) -> f64 {
    (cam.pan - goal.pan).hypot(cam.tilt - goal.tilt)
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub observation: Obs,
    pub reward: f32,
    pub done: bool,
    pub outcome: Outcome,
    /// Head-to-goal distance before the move.
    pub goal_dist_before: f64,
    /// Head-to-goal distance after the move.
    pub goal_dist_after: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub intrinsics: CameraIntrinsics,
    pub thresholds: VisibilityThresholds,
    pub grid: ViewpointGrid,
    pub ukf: UkfParams,
    pub noise: MeasurementNoise,
    pub render: RenderParams,
    /// Head rotation per action, radians (both axes).
    pub step_size: f64,
    /// Per-axis success tolerance against the goal viewpoint, radians.
    pub tolerance: f64,
    pub max_steps: u32,
    pub frame_stack: usize,
    pub action_count: usize,
    pub ball_margin_px: f64,
    pub max_reset_attempts: u32,
    /// Diagonal of the tight belief used for goal planning at reset
    /// (variances: x, y, heading).
    pub initial_belief_var: Vector3<f64>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::default(),
            thresholds: VisibilityThresholds::default(),
            grid: ViewpointGrid::default(),
            ukf: UkfParams::default(),
            noise: MeasurementNoise::default(),
            render: RenderParams::default(),
            step_size: std::f64::consts::PI / 60.0,
            tolerance: std::f64::consts::PI / 60.0,
            max_steps: 20,
            frame_stack: 1,
            action_count: 4,
            ball_margin_px: 2.0,
            max_reset_attempts: 1000,
            initial_belief_var: Vector3::new(0.0025, 0.0025, 0.0012),
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        self.thresholds.validate()?;
        self.grid.validate()?;
        self.ukf.validate()?;
        self.noise.validate()?;
        self.render.validate()?;
        if !(self.step_size > 0.0) {
            return Err(Error::Config(format!(
                "env.step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config(format!(
                "env.tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("env.max_steps must be positive".into()));
        }
        if self.frame_stack == 0 {
            return Err(Error::Config("env.frame_stack must be positive".into()));
        }
        ActionSet::new(self.action_count).map(|_| ())?;
        if self.max_reset_attempts == 0 {
            return Err(Error::Config("env.max_reset_attempts must be positive".into()));
        }
        for v in self.initial_belief_var.iter() {
            if !(*v > 0.0) {
                return Err(Error::Config(format!(
                    "belief.initial variances must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Episode {
    robot: Pose2d,
    ball: Point2<f64>,
    cam: CameraPosition,
    goal: CameraPosition,
    plan: PlanResult,
    t: u32,
    outcome: Outcome,
    total_reward: f64,
    frames: Vec<Arc<GrayImage>>,
    seed: u64,
    /// Union of landmark ids seen from any head position this episode.
    observed_union: BTreeSet<u32>,
}

#[derive(Clone, Debug)]
pub struct HeadEnv {
    field: Arc<FieldModel>,
    cfg: EnvConfig,
    actions: ActionSet,
    episode: Option<Episode>,
}

impl HeadEnv {
    pub fn new(field: Arc<FieldModel>, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let actions = ActionSet::new(cfg.action_count)?;
        Ok(Self {
            field,
            cfg,
            actions,
            episode: None,
        })
    }

    pub fn action_count(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn field(&self) -> &FieldModel {
        &self.field
    }

    pub fn observation_len(&self) -> usize {
        self.cfg.frame_stack
            * self.cfg.intrinsics.image_width as usize
            * self.cfg.intrinsics.image_height as usize
    }

    fn planner_ctx(&self) -> PlannerContext<'_> {
        PlannerContext {
            field: &self.field,
            grid: &self.cfg.grid,
            thresholds: &self.cfg.thresholds,
            intrinsics: &self.cfg.intrinsics,
            ukf: &self.cfg.ukf,
            noise: &self.cfg.noise,
            ball_margin_px: self.cfg.ball_margin_px,
        }
    }

    /// Starts a new episode. Samples (robot, ball, camera) uniformly,
    /// rejecting configurations whose ball is not visible or whose plan
    /// falls back, and returns the initial stacked observation.
    pub fn reset(&mut self, seed: u64) -> Result<Obs> {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let dims = self.field.dims;
        let lim = self.cfg.grid.limits;
        for _attempt in 0..self.cfg.max_reset_attempts {
            let robot = Pose2d::new(
                rng.gen_range(-dims.half_length()..dims.half_length()),
                rng.gen_range(-dims.half_width()..dims.half_width()),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            );
            let ball = Point2::new(
                rng.gen_range(-dims.half_length()..dims.half_length()),
                rng.gen_range(-dims.half_width()..dims.half_width()),
            );
            let cam = CameraPosition::new(
                rng.gen_range(lim.pan_min..lim.pan_max),
                rng.gen_range(lim.tilt_min..lim.tilt_max),
            );
            if !ball_visible(
                &robot,
                &cam,
                &self.cfg.intrinsics,
                &ball,
                self.cfg.ball_margin_px,
            ) {
                continue;
            }
            let belief = GaussianBelief::new(
                robot,
                nalgebra::Matrix3::from_diagonal(&self.cfg.initial_belief_var),
            );
            let plan = best_viewpoint(&belief, &ball, &self.planner_ctx())?;
            if plan.fallback {
                continue;
            }
            let goal = plan.best;
            let first = Arc::new(self.render_frame(&robot, &cam, &ball, seed, 0));
            let frames = vec![first; self.cfg.frame_stack];
            let mut observed_union = BTreeSet::new();
            for lm in visible_landmarks(
                &robot,
                &cam,
                &self.field,
                &self.cfg.thresholds,
                &self.cfg.intrinsics,
            ) {
                observed_union.insert(lm.id);
            }
            self.episode = Some(Episode {
                robot,
                ball,
                cam,
                goal,
                plan,
                t: 0,
                outcome: Outcome::Running,
                total_reward: 0.0,
                frames,
                seed,
                observed_union,
            });
            return Ok(self.stacked_observation());
        }
        Err(Error::Reset(format!(
            "no valid start found in {} attempts (seed {seed}); visibility or planner \
             configuration is too restrictive",
            self.cfg.max_reset_attempts
        )))
    }

    fn render_frame(
        &self,
        robot: &Pose2d,
        cam: &CameraPosition,
        ball: &Point2<f64>,
        episode_seed: u64,
        t: u32,
    ) -> GrayImage {
        render(
            robot,
            cam,
            &self.cfg.intrinsics,
            &self.field,
            ball,
            &self.cfg.render,
            stream_indexed(episode_seed, "frame-noise", t as u64),
        )
    }

    fn stacked_observation(&self) -> Obs {
        let ep = self.episode.as_ref().expect("no active episode");
        let frame_len =
            (self.cfg.intrinsics.image_width * self.cfg.intrinsics.image_height) as usize;
        let mut buf = Vec::with_capacity(self.cfg.frame_stack * frame_len);
        for frame in &ep.frames {
            buf.extend_from_slice(&frame.pixels);
        }
        Arc::new(buf)
    }

    /// Applies one head action. Errors if the episode is already done.
    pub fn step(&mut self, action: usize) -> Result<StepResult> {
        if action >= self.actions.len() {
            return Err(Error::Usage(format!(
                "action index {action} out of range (have {})",
                self.actions.len()
            )));
        }
        let lim = self.cfg.grid.limits;
        let (max_steps, tolerance, step_size, ball_margin, stack) = (
            self.cfg.max_steps,
            self.cfg.tolerance,
            self.cfg.step_size,
            self.cfg.ball_margin_px,
            self.cfg.frame_stack,
        );
        let ep = self
            .episode
            .as_mut()
            .ok_or_else(|| Error::Usage("step called before reset".into()))?;
        if ep.outcome != Outcome::Running {
            return Err(Error::Usage(format!(
                "step called on a finished episode (outcome {})",
                ep.outcome
            )));
        }

        let d_before = goal_distance(&ep.cam, &ep.goal);
        let (dp, dt) = self.actions.delta(action);
        ep.cam = lim.clamp(CameraPosition::new(
            ep.cam.pan + dp * step_size,
            ep.cam.tilt + dt * step_size,
        ));
        let d_after = goal_distance(&ep.cam, &ep.goal);
        ep.t += 1;

        let ball_in_view = ball_visible(
            &ep.robot,
            &ep.cam,
            &self.cfg.intrinsics,
            &ep.ball,
            ball_margin,
        );
        // Positive when the head moved toward the goal, zero when the
        // distance is unchanged (e.g. a clamped move).
        let diff = d_before - d_after;
        let reward: f32 = if !ball_in_view {
            -2.0
        } else if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };

        let within_tolerance = (ep.cam.pan - ep.goal.pan).abs() <= tolerance
            && (ep.cam.tilt - ep.goal.tilt).abs() <= tolerance;
        ep.outcome = if !ball_in_view {
            Outcome::BallLost
        } else if within_tolerance {
            Outcome::Success
        } else if ep.t >= max_steps {
            Outcome::Timeout
        } else {
            Outcome::Running
        };
        ep.total_reward += reward as f64;

        let (robot, cam, ball, seed, t) = (ep.robot, ep.cam, ep.ball, ep.seed, ep.t);
        let frame = Arc::new(self.render_frame(&robot, &cam, &ball, seed, t));
        let ep = self.episode.as_mut().unwrap();
        ep.frames.rotate_left(1);
        let last = stack - 1;
        ep.frames[last] = frame;
        for lm in visible_landmarks(
            &ep.robot,
            &ep.cam,
            &self.field,
            &self.cfg.thresholds,
            &self.cfg.intrinsics,
        ) {
            ep.observed_union.insert(lm.id);
        }

        let outcome = ep.outcome;
        Ok(StepResult {
            observation: self.stacked_observation(),
            reward,
            done: outcome != Outcome::Running,
            outcome,
            goal_dist_before: d_before,
            goal_dist_after: d_after,
        })
    }

    /// Installs a fully specified episode state (testing and harness use).
    pub fn restore(
        &mut self,
        robot: Pose2d,
        ball: Point2<f64>,
        cam: CameraPosition,
        goal: CameraPosition,
        seed: u64,
    ) -> Result<Obs> {
        let belief = GaussianBelief::new(
            robot,
            nalgebra::Matrix3::from_diagonal(&self.cfg.initial_belief_var),
        );
        let plan = best_viewpoint(&belief, &ball, &self.planner_ctx())?;
        let first = Arc::new(self.render_frame(&robot, &cam, &ball, seed, 0));
        let mut observed_union = BTreeSet::new();
        for lm in visible_landmarks(
            &robot,
            &cam,
            &self.field,
            &self.cfg.thresholds,
            &self.cfg.intrinsics,
        ) {
            observed_union.insert(lm.id);
        }
        self.episode = Some(Episode {
            robot,
            ball,
            cam,
            goal,
            plan,
            t: 0,
            outcome: Outcome::Running,
            total_reward: 0.0,
            frames: vec![first; self.cfg.frame_stack],
            seed,
            observed_union,
        });
        Ok(self.stacked_observation())
    }

    pub fn is_done(&self) -> bool {
        self.episode
            .as_ref()
            .map(|e| e.outcome != Outcome::Running)
            .unwrap_or(true)
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.episode.as_ref().map(|e| e.outcome)
    }

    pub fn steps_taken(&self) -> u32 {
        self.episode.as_ref().map(|e| e.t).unwrap_or(0)
    }

    pub fn total_reward(&self) -> f64 {
        self.episode.as_ref().map(|e| e.total_reward).unwrap_or(0.0)
    }

    pub fn robot(&self) -> Option<Pose2d> {
        self.episode.as_ref().map(|e| e.robot)
    }

    pub fn ball(&self) -> Option<Point2<f64>> {
        self.episode.as_ref().map(|e| e.ball)
    }

    pub fn camera(&self) -> Option<CameraPosition> {
        self.episode.as_ref().map(|e| e.cam)
    }

    pub fn goal(&self) -> Option<CameraPosition> {
        self.episode.as_ref().map(|e| e.goal)
    }

    pub fn plan(&self) -> Option<&PlanResult> {
        self.episode.as_ref().map(|e| &e.plan)
    }

    pub fn observed_union(&self) -> Option<&BTreeSet<u32>> {
        self.episode.as_ref().map(|e| &e.observed_union)
    }

    /// Landmark ids visible from the current head position at the true pose.
    pub fn currently_observed(&self) -> BTreeSet<u32> {
        let Some(ep) = self.episode.as_ref() else {
            return BTreeSet::new();
        };
        visible_landmarks(
            &ep.robot,
            &ep.cam,
            &self.field,
            &self.cfg.thresholds,
            &self.cfg.intrinsics,
        )
        .into_iter()
        .map(|l| l.id)
        .collect()
    }

    /// Landmark ids visible from the goal viewpoint at the true pose (the
    /// episode's desired set).
    pub fn desired_landmarks(&self) -> BTreeSet<u32> {
        let Some(ep) = self.episode.as_ref() else {
            return BTreeSet::new();
        };
        visible_landmarks(
            &ep.robot,
            &ep.goal,
            &self.field,
            &self.cfg.thresholds,
            &self.cfg.intrinsics,
        )
        .into_iter()
        .map(|l| l.id)
        .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{build_field, FieldDimensions};
    use approx::assert_abs_diff_eq;

    fn small_env() -> HeadEnv {
        let field = Arc::new(build_field(FieldDimensions::default(), 0.065).unwrap());
        let cfg = EnvConfig {
            intrinsics: CameraIntrinsics {
                image_width: 40,
                image_height: 30,
                ..CameraIntrinsics::default()
            },
            ..EnvConfig::default()
        };
        HeadEnv::new(field, cfg).unwrap()
    }

    #[test]
    fn goal_distance_fixtures() {
        let step = std::f64::consts::PI / 60.0;
        let a = CameraPosition::new(0.2, 0.5);
        assert_eq!(goal_distance(&a, &a), 0.0);
        let b = CameraPosition::new(0.2 + step, 0.5);
        assert_abs_diff_eq!(goal_distance(&a, &b), step, epsilon = 1e-15);
        // 3-4-5 triangle: 3 degrees pan, 4 degrees tilt -> 5 degrees.
        let c = CameraPosition::new(
            0.2 + 3.0_f64.to_radians(),
            0.5 + 4.0_f64.to_radians(),
        );
        assert_abs_diff_eq!(
            goal_distance(&a, &c),
            5.0_f64.to_radians(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(goal_distance(&a, &c), 0.08727, epsilon = 1e-5);
    }

    #[test]
    fn reset_is_deterministic_and_leaves_ball_visible() {
        let mut env1 = small_env();
        let mut env2 = small_env();
        let a = env1.reset(77).unwrap();
        let b = env2.reset(77).unwrap();
        assert_eq!(a, b);
        assert_eq!(env1.robot(), env2.robot());
        assert_eq!(env1.goal(), env2.goal());
        assert!(ball_visible(
            &env1.robot().unwrap(),
            &env1.camera().unwrap(),
            &env1.config().intrinsics,
            &env1.ball().unwrap(),
            env1.config().ball_margin_px,
        ));
        let c = env1.reset(78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn reset_goal_equals_a_direct_planner_call() {
        let mut env = small_env();
        env.reset(5).unwrap();
        let belief = GaussianBelief::new(
            env.robot().unwrap(),
            nalgebra::Matrix3::from_diagonal(&env.config().initial_belief_var),
        );
        let plan = best_viewpoint(&belief, &env.ball().unwrap(), &env.planner_ctx()).unwrap();
        assert_eq!(env.goal().unwrap(), plan.best);
        assert!(!plan.fallback);
    }

    #[test]
    fn trajectory_is_a_function_of_seed_and_actions() {
        let mut env1 = small_env();
        let mut env2 = small_env();
        env1.reset(3).unwrap();
        env2.reset(3).unwrap();
        let actions = [0usize, 2, 1, 3, 0, 0, 2, 2, 1, 0];
        for &a in &actions {
            if env1.is_done() {
                break;
            }
            let r1 = env1.step(a).unwrap();
            let r2 = env2.step(a).unwrap();
            assert_eq!(r1.observation, r2.observation);
            assert_eq!(r1.reward, r2.reward);
            assert_eq!(r1.outcome, r2.outcome);
        }
    }

    #[test]
    fn reward_alphabet_and_episode_bound_hold_under_random_play() {
        let mut env = small_env();
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for episode in 0..30u64 {
            env.reset(1000 + episode).unwrap();
            let mut steps = 0;
            while !env.is_done() {
                let r = env.step(rng.gen_range(0..env.action_count())).unwrap();
                steps += 1;
                assert!(
                    [-2.0f32, -1.0, 0.0, 1.0].contains(&r.reward),
                    "reward {} outside alphabet",
                    r.reward
                );
                let cam = env.camera().unwrap();
                let lim = env.config().grid.limits;
                assert!(lim.contains(&cam), "camera left joint limits: {cam:?}");
                assert!(steps <= 20);
                assert_eq!(r.done, r.outcome != Outcome::Running);
            }
            assert!(env.steps_taken() <= 20);
            if env.outcome() == Some(Outcome::Success) {
                let d = goal_distance(&env.camera().unwrap(), &env.goal().unwrap());
                assert!(d <= env.config().tolerance * 2f64.sqrt() + 1e-12);
            }
        }
    }

    #[test]
    fn step_after_done_is_a_usage_error() {
        let mut env = small_env();
        env.reset(10).unwrap();
        let mut guard = 0;
        while !env.is_done() {
            env.step(0).unwrap();
            guard += 1;
            assert!(guard <= 20);
        }
        assert!(matches!(env.step(0), Err(Error::Usage(_))));
    }

    #[test]
    fn moving_toward_the_goal_earns_positive_reward() {
        let mut env = small_env();
        // A synthetic state: goal is one pan-step to the right of the
        // camera, ball straight ahead and comfortably visible.
        let robot = Pose2d::new(0.0, 0.0, 0.0);
        let ball = Point2::new(2.0, 0.0);
        let tilt = (env.config().intrinsics.mount_height / 2.0).atan();
        let cam = CameraPosition::new(0.0, tilt);
        let goal = CameraPosition::new(env.config().step_size, tilt);
        env.restore(robot, ball, cam, goal, 0).unwrap();
        let r = env.step(0).unwrap(); // pan+
        assert_eq!(r.reward, 1.0);
        assert_eq!(r.outcome, Outcome::Success);
        assert!(r.goal_dist_after < r.goal_dist_before);
    }

    #[test]
    fn clamped_move_with_unchanged_distance_earns_zero() {
        let mut env = small_env();
        let lim = env.config().grid.limits;
        let robot = Pose2d::new(0.0, 0.0, 0.0);
        // Ball placed so it stays visible at the pan limit.
        let tilt = (env.config().intrinsics.mount_height / 2.0).atan();
        let heading_to_ball = lim.pan_max;
        let ball = Point2::new(2.0 * heading_to_ball.cos(), 2.0 * heading_to_ball.sin());
        let cam = CameraPosition::new(lim.pan_max, tilt);
        let goal = CameraPosition::new(lim.pan_max - 10.0 * env.config().step_size, tilt);
        env.restore(robot, ball, cam, goal, 0).unwrap();
        let r = env.step(0).unwrap(); // pan+ clamps at the limit
        assert_eq!(r.goal_dist_before, r.goal_dist_after);
        assert_eq!(r.reward, 0.0);
    }

    #[test]
    fn losing_the_ball_ends_the_episode_with_minus_two() {
        let mut env = small_env();
        let robot = Pose2d::new(0.0, 0.0, 0.0);
        let tilt = (env.config().intrinsics.mount_height / 2.0).atan();
        let ball = Point2::new(2.0, 0.0);
        // Find a pan where the ball is just inside the frame, then pan away.
        let mut pan = 0.0;
        while ball_visible(
            &robot,
            &CameraPosition::new(pan + env.config().step_size, tilt),
            &env.config().intrinsics,
            &ball,
            env.config().ball_margin_px,
        ) {
            pan += env.config().step_size;
        }
        let cam = CameraPosition::new(pan, tilt);
        let goal = CameraPosition::new(0.0, tilt);
        env.restore(robot, ball, cam, goal, 0).unwrap();
        let r = env.step(0).unwrap(); // pan+ pushes the ball out
        assert_eq!(r.reward, -2.0);
        assert_eq!(r.outcome, Outcome::BallLost);
        assert!(r.done);
    }

    #[test]
    fn action_count_matches_configuration() {
        let env = small_env();
        assert_eq!(env.action_count(), 4);
        let field = Arc::new(build_field(FieldDimensions::default(), 0.065).unwrap());
        let cfg = EnvConfig {
            action_count: 8,
            ..EnvConfig::default()
        };
        let env8 = HeadEnv::new(field, cfg).unwrap();
        assert_eq!(env8.action_count(), 8);
        assert!(matches!(
            ActionSet::new(5),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn frame_stack_concatenates_history() {
        let field = Arc::new(build_field(FieldDimensions::default(), 0.065).unwrap());
        let cfg = EnvConfig {
            intrinsics: CameraIntrinsics {
                image_width: 40,
                image_height: 30,
                ..CameraIntrinsics::default()
            },
            frame_stack: 3,
            ..EnvConfig::default()
        };
        let mut env = HeadEnv::new(field, cfg).unwrap();
        let obs = env.reset(4).unwrap();
        assert_eq!(obs.len(), 3 * 40 * 30);
        let frame = 40 * 30;
        assert_eq!(obs[0..frame], obs[frame..2 * frame]);
        let r = env.step(0).unwrap();
        // Oldest two frames are now the reset frame; the newest differs.
        assert_eq!(r.observation[0..frame], obs[0..frame]);
    }
}
