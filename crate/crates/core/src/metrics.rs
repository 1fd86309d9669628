//! Evaluation machinery: per-episode records, the success-rate measure,
//! fixed-window epoch aggregation, and the localization-error robustness
//! experiment comparing the greedy entropy planner against the learned
//! image policy.

use std::collections::BTreeSet;

use nalgebra::{Matrix3, Vector3};
use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

use crate::belief::GaussianBelief;
use crate::camera::CameraPosition;
use crate::env::{goal_distance, HeadEnv, Outcome};
use crate::error::{Error, Result};
use crate::geometry::Pose2d;
use crate::nn::{argmax, QNetwork, Workspace};
use crate::planner::{best_viewpoint, PlannerContext};
use crate::seed::stream_indexed;

/// Fraction of the goal viewpoint's landmarks actually observed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuccessRate {
    pub value: f64,
    /// Set when the desired set was empty and the value defaulted to 1.
    pub degenerate: bool,
}

pub fn success_rate(observed: &BTreeSet<u32>, desired: &BTreeSet<u32>) -> SuccessRate {
    if desired.is_empty() {
        return SuccessRate {
            value: 1.0,
            degenerate: true,
        };
    }
    let hit = observed.intersection(desired).count();
    SuccessRate {
        value: hit as f64 / desired.len() as f64,
        degenerate: false,
    }
}

/// Summary of one finished episode. Durations are in steps and clamp at
/// the episode bound; an event that never happened reads as the bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeRecord {
    /// Global environment step at which the episode terminated.
    pub end_step: u64,
    pub episode: u32,
    pub outcome: Outcome,
    pub steps_taken: u32,
    /// Final-viewpoint success rate.
    pub success_rate: f64,
    pub success_rate_degenerate: bool,
    /// Success rate against the union of everything seen in the episode.
    pub success_rate_cumulative: f64,
    pub success_duration: u32,
    pub ball_loss_duration: u32,
    pub total_reward: f64,
    pub robot: Pose2d,
    pub ball_x: f64,
    pub ball_y: f64,
    pub goal: CameraPosition,
    pub final_cam: CameraPosition,
}

/// Builds the record for the environment's current (finished) episode.
pub fn episode_record(env: &HeadEnv, end_step: u64, episode: u32) -> EpisodeRecord {
    let outcome = env.outcome().expect("episode must exist");
    let steps = env.steps_taken();
    let bound = env.config().max_steps;
    let desired = env.desired_landmarks();
    let observed = env.currently_observed();
    let final_rate = success_rate(&observed, &desired);
    let cumulative = env
        .observed_union()
        .map(|u| success_rate(u, &desired).value)
        .unwrap_or(0.0);
    let ball = env.ball().expect("episode must exist");
    EpisodeRecord {
        end_step,
        episode,
        outcome,
        steps_taken: steps,
        success_rate: final_rate.value,
        success_rate_degenerate: final_rate.degenerate,
        success_rate_cumulative: cumulative,
        success_duration: if outcome == Outcome::Success { steps.max(1) } else { bound },
        ball_loss_duration: if outcome == Outcome::BallLost { steps.max(1) } else { bound },
        total_reward: env.total_reward(),
        robot: env.robot().expect("episode must exist"),
        ball_x: ball.x,
        ball_y: ball.y,
        goal: env.goal().expect("episode must exist"),
        final_cam: env.camera().expect("episode must exist"),
    }
}

pub fn episode_records_csv_header() -> &'static str {
    "episode,end_step,outcome,steps,success_rate,success_rate_cumulative,success_duration,\
     ball_loss_duration,total_reward,robot_x,robot_y,robot_theta,ball_x,ball_y,goal_pan,\
     goal_tilt,final_pan,final_tilt"
}

pub fn episode_record_csv_row(r: &EpisodeRecord) -> String {
    format!(
        "{},{},{},{},{:.6},{:.6},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.episode,
        r.end_step,
        r.outcome,
        r.steps_taken,
        r.success_rate,
        r.success_rate_cumulative,
        r.success_duration,
        r.ball_loss_duration,
        r.total_reward,
        r.robot.x,
        r.robot.y,
        r.robot.theta,
        r.ball_x,
        r.ball_y,
        r.goal.pan,
        r.goal.tilt,
        r.final_cam.pan,
        r.final_cam.tilt
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub episodes: usize,
    pub mean_success_rate: f64,
    pub mean_success_duration: f64,
    pub mean_ball_loss_duration: f64,
}

/// Partitions episode records into fixed windows of `epoch_size` global
/// steps (an episode belongs to the window of its terminal step) and emits
/// per-window means. Empty windows are skipped, which shows up as gaps in
/// the epoch indices.
pub fn epoch_aggregate(records: &[EpisodeRecord], epoch_size: u64) -> Vec<EpochStats> {
    assert!(epoch_size > 0, "epoch size must be positive");
    let mut out: Vec<EpochStats> = Vec::new();
    let mut current: Option<(u64, Vec<&EpisodeRecord>)> = None;
    for r in records {
        let epoch = r.end_step / epoch_size;
        match &mut current {
            Some((e, bucket)) if *e == epoch => bucket.push(r),
            _ => {
                if let Some((e, bucket)) = current.take() {
                    out.push(bucket_stats(e, &bucket));
                }
                current = Some((epoch, vec![r]));
            }
        }
    }
    if let Some((e, bucket)) = current.take() {
        out.push(bucket_stats(e, &bucket));
    }
    out
}

fn bucket_stats(epoch: u64, bucket: &[&EpisodeRecord]) -> EpochStats {
    let n = bucket.len() as f64;
    EpochStats {
        epoch,
        episodes: bucket.len(),
        mean_success_rate: bucket.iter().map(|r| r.success_rate).sum::<f64>() / n,
        mean_success_duration: bucket.iter().map(|r| r.success_duration as f64).sum::<f64>() / n,
        mean_ball_loss_duration: bucket
            .iter()
            .map(|r| r.ball_loss_duration as f64)
            .sum::<f64>()
            / n,
    }
}

/// Policy used by the evaluation loops.
pub enum EvalPolicy<'a> {
    /// Greedy on the learned Q-network (no exploration).
    Greedy(&'a QNetwork),
    /// Uniform random actions.
    Random,
}

/// Runs `episodes` seeded evaluation episodes. Episode starts depend only
/// on (`seed`, episode index), so different policies can be compared on
/// identical starts.
pub fn run_eval_episodes(
    env: &mut HeadEnv,
    policy: &EvalPolicy,
    episodes: u32,
    seed: u64,
) -> Result<Vec<EpisodeRecord>> {
    let mut ws = match policy {
        EvalPolicy::Greedy(net) => Some(Workspace::new(&net.shapes)),
        EvalPolicy::Random => None,
    };
    let mut records = Vec::with_capacity(episodes as usize);
    let mut global_step = 0u64;
    for ep in 0..episodes {
        let mut obs = env.reset(stream_indexed(seed, "eval-episode", ep as u64))?;
        let mut policy_rng =
            ChaCha12Rng::seed_from_u64(stream_indexed(seed, "eval-policy", ep as u64));
        while !env.is_done() {
            let action = match policy {
                EvalPolicy::Greedy(net) => {
                    let q = net.forward(ws.as_mut().unwrap(), &obs)?;
                    argmax(q)
                }
                EvalPolicy::Random => policy_rng.gen_range(0..env.action_count()),
            };
            let sr = env.step(action)?;
            obs = sr.observation;
            global_step += 1;
        }
        records.push(episode_record(env, global_step, ep));
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Method {
    EntropyPlanner,
    LearnedPolicy,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::EntropyPlanner => "entropy_planner",
            Method::LearnedPolicy => "learned_policy",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RobustnessEntry {
    pub sigma: f64,
    pub method: Method,
    pub mean_success_rate: f64,
    pub episodes: u32,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessCurve {
    pub sigmas: Vec<f64>,
    pub entries: Vec<RobustnessEntry>,
}

impl RobustnessCurve {
    pub fn entry(&self, sigma: f64, method: Method) -> Option<&RobustnessEntry> {
        self.entries
            .iter()
            .find(|e| e.sigma == sigma && e.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,method,mean_success_rate,n,stderr\n");
        for e in &self.entries {
            out.push_str(&format!(
                "{},{},{:.6},{},{:.6}\n",
                e.sigma, e.method, e.mean_success_rate, e.episodes, e.stderr
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serializes")
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RobustnessConfig {
    pub episodes_per_level: u32,
    /// Replan from the corrupted belief every step (strongest baseline);
    /// otherwise plan once per episode.
    pub replan_every_step: bool,
    /// Tight covariance handed to the corrupted-belief planner.
    pub planner_belief_var: Vector3<f64>,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self {
            episodes_per_level: 100,
            replan_every_step: true,
            planner_belief_var: Vector3::new(0.0025, 0.0025, 0.0012),
        }
    }
}

/// Runs the robustness-to-localization-error comparison.
///
/// Both arms replay the same seeded episode starts at every noise level.
/// The entropy arm steers greedily toward the viewpoint planned from a
/// belief whose mean is the true pose plus `sigma`-scaled Gaussian noise
/// (position and heading jointly); the learned arm feeds the true rendered
/// frames to the network and never reads the belief, so its curve cannot
/// depend on `sigma`.
pub fn run_robustness(
    env: &mut HeadEnv,
    net: &QNetwork,
    sigmas: &[f64],
    cfg: &RobustnessConfig,
    seed: u64,
) -> Result<RobustnessCurve> {
    if sigmas.is_empty() {
        return Err(Error::Usage("robustness needs at least one sigma level".into()));
    }
    let mut entries = Vec::new();
    for &sigma in sigmas {
        for method in [Method::EntropyPlanner, Method::LearnedPolicy] {
            let mut rates = Vec::with_capacity(cfg.episodes_per_level as usize);
            for ep in 0..cfg.episodes_per_level {
                let record = match method {
                    Method::LearnedPolicy => {
                        run_learned_episode(env, net, seed, ep)?
                    }
                    Method::EntropyPlanner => {
                        run_entropy_episode(env, sigma, cfg, seed, ep)?
                    }
                };
                rates.push(record.success_rate);
            }
            let n = rates.len() as f64;
            let mean = rates.iter().sum::<f64>() / n;
            let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n.max(1.0);
            entries.push(RobustnessEntry {
                sigma,
                method,
                mean_success_rate: mean,
                episodes: cfg.episodes_per_level,
                stderr: (var / n).sqrt(),
            });
        }
    }
    Ok(RobustnessCurve {
        sigmas: sigmas.to_vec(),
        entries,
    })
}

fn run_learned_episode(
    env: &mut HeadEnv,
    net: &QNetwork,
    seed: u64,
    ep: u32,
) -> Result<EpisodeRecord> {
    let mut ws = Workspace::new(&net.shapes);
    let mut obs = env.reset(stream_indexed(seed, "robust-episode", ep as u64))?;
    while !env.is_done() {
        let action = argmax(net.forward(&mut ws, &obs)?);
        obs = env.step(action)?.observation;
    }
    Ok(episode_record(env, 0, ep))
}

fn run_entropy_episode(
    env: &mut HeadEnv,
    sigma: f64,
    cfg: &RobustnessConfig,
    seed: u64,
    ep: u32,
) -> Result<EpisodeRecord> {
    env.reset(stream_indexed(seed, "robust-episode", ep as u64))?;
    // The noise stream is per-episode and independent of sigma, so noise
    // draws scale continuously with the level.
    let mut noise_rng =
        ChaCha12Rng::seed_from_u64(stream_indexed(seed, "robust-noise", ep as u64));
    let mut planned_goal: Option<CameraPosition> = None;
    while !env.is_done() {
        if planned_goal.is_none() || cfg.replan_every_step {
            planned_goal = Some(plan_from_corrupted_belief(env, sigma, cfg, &mut noise_rng)?);
        }
        let goal = planned_goal.unwrap();
        let action = greedy_action_toward(env, &goal);
        env.step(action)?;
    }
    Ok(episode_record(env, 0, ep))
}

fn plan_from_corrupted_belief(
    env: &HeadEnv,
    sigma: f64,
    cfg: &RobustnessConfig,
    rng: &mut ChaCha12Rng,
) -> Result<CameraPosition> {
    let truth = env.robot().expect("episode active");
    let ball = env.ball().expect("episode active");
    let noise: Vec<f64> = (0..3).map(|_| standard_normal(rng)).collect();
    let corrupted = Pose2d::new(
        truth.x + sigma * noise[0],
        truth.y + sigma * noise[1],
        truth.theta + sigma * noise[2],
    );
    let belief = GaussianBelief::new(
        corrupted,
        Matrix3::from_diagonal(&cfg.planner_belief_var),
    );
    let env_cfg = env.config();
    let ctx = PlannerContext {
        field: env.field(),
        grid: &env_cfg.grid,
        thresholds: &env_cfg.thresholds,
        intrinsics: &env_cfg.intrinsics,
        ukf: &env_cfg.ukf,
        noise: &env_cfg.noise,
        ball_margin_px: env_cfg.ball_margin_px,
    };
    Ok(best_viewpoint(&belief, &ball, &ctx)?.best)
}

/// The action that most reduces the head's distance to `goal` (ties to the
/// lowest action index).
fn greedy_action_toward(env: &HeadEnv, goal: &CameraPosition) -> usize {
    let cam = env.camera().expect("episode active");
    let cfg = env.config();
    let lim = cfg.grid.limits;
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for a in 0..env.action_count() {
        let (dp, dt) = env.actions().delta(a);
        let candidate = lim.clamp(CameraPosition::new(
            cam.pan + dp * cfg.step_size,
            cam.tilt + dt * cfg.step_size,
        ));
        let d = goal_distance(&candidate, goal);
        if d < best_d {
            best_d = d;
            best = a;
        }
    }
    best
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
