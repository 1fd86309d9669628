//! Double-DQN training loop with prioritized replay.
//!
//! One gradient step per environment step once the warm-up buffer is
//! filled; the bootstrap action comes from the online network and its value
//! from the periodically synchronized target network. The loss is the
//! importance-weighted mean Huber loss; sampled priorities are written back
//! as |TD error|.
//!
//! Batch work runs over a fixed number of batch chunks whose partial
//! results are combined in chunk order, so training is bit-reproducible
//! for a given (seed, config) regardless of how many worker threads rayon
//! actually uses.

use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::env::{HeadEnv, Obs, Outcome};
use crate::error::{Error, Result};
use crate::metrics::{episode_record, EpisodeRecord};
use crate::nn::{argmax, huber, huber_grad, Adam, NetConfig, QNetwork, Workspace};
use crate::replay::{Experience, PrioritizedBuffer};
use crate::seed::{stream, stream_indexed};

/// Fixed batch split for gradient accumulation; partial sums are combined
/// in chunk order so the result does not depend on the thread count.
const GRAD_CHUNKS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainerConfig {
    pub total_steps: u32,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub gamma: f64,
    pub target_sync: u32,
    pub buffer_capacity: usize,
    pub per_alpha: f64,
    pub per_beta_start: f64,
    pub per_beta_end: f64,
    pub per_priority_floor: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of the run over which epsilon decays linearly.
    pub eps_decay_fraction: f64,
    /// Pure-exploration transitions collected before learning starts.
    pub warmup: u32,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            total_steps: 30_000,
            batch_size: 32,
            learning_rate: 5e-4,
            gamma: 0.99,
            target_sync: 10_000,
            buffer_capacity: 1_000_000,
            per_alpha: 0.6,
            per_beta_start: 0.4,
            per_beta_end: 1.0,
            per_priority_floor: 1e-6,
            eps_start: 1.0,
            eps_end: 0.02,
            eps_decay_fraction: 0.5,
            warmup: 1000,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(Error::Config("trainer.total_steps must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("trainer.batch_size must be positive".into()));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "trainer.learning_rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!(
                "trainer.gamma must be in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.target_sync == 0 {
            return Err(Error::Config("trainer.target_sync must be positive".into()));
        }
        if self.buffer_capacity == 0 {
            return Err(Error::Config("trainer.buffer_capacity must be positive".into()));
        }
        if !(self.per_alpha >= 0.0) {
            return Err(Error::Config(format!(
                "trainer.per_alpha must be non-negative, got {}",
                self.per_alpha
            )));
        }
        for (name, v) in [
            ("trainer.per_beta_start", self.per_beta_start),
            ("trainer.per_beta_end", self.per_beta_end),
        ] {
            if !(v >= 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.per_priority_floor > 0.0) {
            return Err(Error::Config(format!(
                "trainer.per_priority_floor must be positive, got {}",
                self.per_priority_floor
            )));
        }
        for (name, v) in [
            ("trainer.eps_start", self.eps_start),
            ("trainer.eps_end", self.eps_end),
        ] {
            if !(v >= 0.0 && v <= 1.0) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        if !(self.eps_decay_fraction > 0.0 && self.eps_decay_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "trainer.eps_decay_fraction must be in (0, 1], got {}",
                self.eps_decay_fraction
            )));
        }
        Ok(())
    }

    /// Exploration rate before environment step `step` (0-based), linear
    /// from `eps_start` to `eps_end` over the first `eps_decay_fraction` of
    /// the run, then constant.
    pub fn epsilon_at(&self, step: u32) -> f64 {
        let decay = (self.total_steps as f64 * self.eps_decay_fraction).max(1.0);
        let frac = (step as f64 / decay).min(1.0);
        self.eps_start + (self.eps_end - self.eps_start) * frac
    }

    /// Importance-sampling exponent at step `step` (0-based), linear from
    /// `per_beta_start` to `per_beta_end` over the whole run.
    pub fn beta_at(&self, step: u32) -> f64 {
        let frac = (step as f64 / self.total_steps.max(1) as f64).min(1.0);
        self.per_beta_start + (self.per_beta_end - self.per_beta_start) * frac
    }
}

/// Double-DQN regression targets: `r` when terminal, otherwise
/// `r + gamma * Q_target(s', argmax_a Q_online(s', a))`.
pub fn ddqn_targets(
    rewards: &[f32],
    dones: &[bool],
    q_next_online: &[Vec<f32>],
    q_next_target: &[Vec<f32>],
    gamma: f64,
) -> Vec<f32> {
    rewards
        .iter()
        .zip(dones)
        .zip(q_next_online.iter().zip(q_next_target))
        .map(|((&r, &done), (qo, qt))| {
            if done {
                r
            } else {
                let a_star = argmax(qo);
                r + (gamma as f32) * qt[a_star]
            }
        })
        .collect()
}

/// Epsilon-greedy action selection; ties in the greedy branch break toward
/// the lowest action index.
pub fn act_epsilon_greedy(
    net: &QNetwork,
    ws: &mut Workspace,
    obs: &[u8],
    epsilon: f64,
    rng: &mut ChaCha12Rng,
) -> Result<usize> {
    let u: f64 = rng.gen();
    if u < epsilon {
        Ok(rng.gen_range(0..net.cfg.actions))
    } else {
        let q = net.forward(ws, obs)?;
        Ok(argmax(q))
    }
}

/// Per-episode notification from the training loop.
pub trait TrainObserver {
    fn on_step(
        &mut self,
        _episode: u32,
        _t: u32,
        _action: usize,
        _reward: f32,
        _env: &HeadEnv,
        _outcome: Outcome,
    ) {
    }
    fn on_episode(&mut self, _record: &EpisodeRecord, _mean_loss: Option<f64>, _epsilon: f64) {}
}

pub struct NoopObserver;
impl TrainObserver for NoopObserver {}

pub struct TrainReport {
    pub records: Vec<EpisodeRecord>,
    pub steps: u32,
    pub episodes: u32,
    pub last_loss: Option<f64>,
}

pub struct Trainer {
    pub cfg: TrainerConfig,
    env: HeadEnv,
    online: QNetwork,
    target: QNetwork,
    adam: Adam,
    buffer: PrioritizedBuffer,
    explore_rng: ChaCha12Rng,
    act_ws: Workspace,
    master_seed: u64,
}

impl Trainer {
    pub fn new(env: HeadEnv, cfg: TrainerConfig, master_seed: u64) -> Result<Self> {
        cfg.validate()?;
        let net_cfg = NetConfig {
            input_width: env.config().intrinsics.image_width as usize,
            input_height: env.config().intrinsics.image_height as usize,
            stack: env.config().frame_stack,
            actions: env.action_count(),
        };
        let online = QNetwork::seeded(net_cfg, stream(master_seed, "weights"))?;
        let target = online.clone();
        let adam = Adam::new(cfg.learning_rate as f32, online.params.len());
        let buffer = PrioritizedBuffer::new(
            cfg.buffer_capacity,
            cfg.per_alpha,
            cfg.per_priority_floor,
            stream(master_seed, "buffer"),
        )?;
        let act_ws = Workspace::new(&online.shapes);
        Ok(Self {
            cfg,
            env,
            online,
            target,
            adam,
            buffer,
            explore_rng: ChaCha12Rng::seed_from_u64(stream(master_seed, "explore")),
            act_ws,
            master_seed,
        })
    }

    pub fn network(&self) -> &QNetwork {
        &self.online
    }

    pub fn into_network(self) -> QNetwork {
        self.online
    }

    pub fn env(&self) -> &HeadEnv {
        &self.env
    }

    pub fn env_mut(&mut self) -> &mut HeadEnv {
        &mut self.env
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Direct buffer insertion, for harnesses that drive the environment
    /// themselves.
    pub fn push_experience(&mut self, exp: Experience) {
        self.buffer.push(exp);
    }

    /// Q-vector of the online network for one observation.
    pub fn q_values(&mut self, obs: &[u8]) -> Result<Vec<f32>> {
        Ok(self.online.forward(&mut self.act_ws, obs)?.to_vec())
    }

    /// Runs the configured number of environment steps, learning after the
    /// warm-up, and reports one record per completed episode.
    pub fn run(&mut self, observer: &mut dyn TrainObserver) -> Result<TrainReport> {
        let mut records = Vec::new();
        let mut episode: u32 = 0;
        let mut episode_losses: Vec<f64> = Vec::new();
        let mut last_loss = None;
        let mut obs = self
            .env
            .reset(stream_indexed(self.master_seed, "episode", episode as u64))?;

        for step in 1..=self.cfg.total_steps {
            let epsilon = if step <= self.cfg.warmup {
                1.0
            } else {
                self.cfg.epsilon_at(step - 1)
            };
            let action =
                act_epsilon_greedy(&self.online, &mut self.act_ws, &obs, epsilon, &mut self.explore_rng)?;
            let sr = self.env.step(action)?;
            observer.on_step(episode, self.env.steps_taken(), action, sr.reward, &self.env, sr.outcome);
            self.buffer.push(Experience {
                state: obs,
                action: action as u8,
                reward: sr.reward,
                next_state: sr.observation.clone(),
                done: sr.done,
            });
            obs = sr.observation;

            if self.buffer.len() >= self.cfg.warmup.max(self.cfg.batch_size as u32) as usize {
                let beta = self.cfg.beta_at(step - 1);
                let loss = self.train_step(beta)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "non-finite loss {loss} at step {step} (episode {episode}, \
                         buffer {} transitions)",
                        self.buffer.len()
                    )));
                }
                episode_losses.push(loss as f64);
                last_loss = Some(loss as f64);
            }
            if step % self.cfg.target_sync == 0 {
                self.target.params.copy_from_slice(&self.online.params);
            }

            if sr.done {
                let record = episode_record(&self.env, step as u64, episode);
                let mean_loss = if episode_losses.is_empty() {
                    None
                } else {
                    Some(episode_losses.iter().sum::<f64>() / episode_losses.len() as f64)
                };
                observer.on_episode(&record, mean_loss, epsilon);
                records.push(record);
                episode_losses.clear();
                episode += 1;
                if step < self.cfg.total_steps {
                    obs = self
                        .env
                        .reset(stream_indexed(self.master_seed, "episode", episode as u64))?;
                }
            }
        }

        Ok(TrainReport {
            steps: self.cfg.total_steps,
            episodes: episode,
            records,
            last_loss,
        })
    }

    /// One prioritized gradient step; returns the batch loss.
    pub fn train_step(&mut self, beta: f64) -> Result<f32> {
        let batch = self.buffer.sample(self.cfg.batch_size, beta)?;
        let n = batch.refs.len();

        let mut states: Vec<Obs> = Vec::with_capacity(n);
        let mut next_states: Vec<Obs> = Vec::with_capacity(n);
        let mut actions: Vec<usize> = Vec::with_capacity(n);
        let mut rewards: Vec<f32> = Vec::with_capacity(n);
        let mut dones: Vec<bool> = Vec::with_capacity(n);
        for r in &batch.refs {
            let e = self.buffer.get(r.slot);
            states.push(e.state.clone());
            next_states.push(e.next_state.clone());
            actions.push(e.action as usize);
            rewards.push(e.reward);
            dones.push(e.done);
        }

        // Bootstrap values: online picks, target evaluates.
        let bootstrap = batch_bootstrap(&self.online, &self.target, &next_states);
        let targets: Vec<f32> = rewards
            .iter()
            .zip(dones.iter())
            .zip(bootstrap.iter())
            .map(|((&r, &done), &q)| if done { r } else { r + self.cfg.gamma as f32 * q })
            .collect();

        let out = learn_batch(&self.online, &states, &actions, &targets, &batch.weights);
        self.adam.step(&mut self.online.params, &out.grad);
        self.buffer.update_priorities(&batch.refs, &out.tds);
        Ok(out.loss)
    }
}

/// `Q_target(s', argmax_a Q_online(s', a))` for a batch, chunk-parallel.
fn batch_bootstrap(online: &QNetwork, target: &QNetwork, next_states: &[Obs]) -> Vec<f32> {
    let chunk = next_states.len().div_ceil(GRAD_CHUNKS).max(1);
    next_states
        .par_chunks(chunk)
        .map(|chunk_states| {
            let mut ws = Workspace::new(&online.shapes);
            let mut out = Vec::with_capacity(chunk_states.len());
            for s in chunk_states {
                let a_star = argmax(online.forward(&mut ws, s).expect("shape checked"));
                let qt = target.forward(&mut ws, s).expect("shape checked");
                out.push(qt[a_star]);
            }
            out
        })
        .collect::<Vec<_>>()
        .concat()
}

struct LearnOutput {
    grad: Vec<f32>,
    tds: Vec<f32>,
    loss: f32,
}

/// Forward/backward over the batch; gradients of the importance-weighted
/// mean Huber loss, TD errors for priority write-back, and the loss value.
fn learn_batch(
    net: &QNetwork,
    states: &[Obs],
    actions: &[usize],
    targets: &[f32],
    weights: &[f32],
) -> LearnOutput {
    let n = states.len();
    let chunk = n.div_ceil(GRAD_CHUNKS).max(1);
    let parts: Vec<(Vec<f32>, Vec<f32>, f32)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|idxs| {
            let mut ws = Workspace::new(&net.shapes);
            let mut grad = vec![0.0f32; net.params.len()];
            let mut tds = Vec::with_capacity(idxs.len());
            let mut loss = 0.0f32;
            let mut dq = vec![0.0f32; net.cfg.actions];
            for &i in idxs {
                let q = net.forward(&mut ws, &states[i]).expect("shape checked");
                let td = q[actions[i]] - targets[i];
                loss += weights[i] * huber(td);
                dq.fill(0.0);
                dq[actions[i]] = weights[i] * huber_grad(td) / n as f32;
                net.backward(&mut ws, &dq, &mut grad);
                tds.push(td);
            }
            (grad, tds, loss)
        })
        .collect();

    let mut grad = vec![0.0f32; net.params.len()];
    let mut tds = Vec::with_capacity(n);
    let mut loss = 0.0f32;
    for (g, t, l) in parts {
        for (acc, v) in grad.iter_mut().zip(g.iter()) {
            *acc += v;
        }
        tds.extend(t);
        loss += l;
    }
    LearnOutput {
        grad,
        tds,
        loss: loss / n as f32,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::CameraIntrinsics;
    use crate::env::EnvConfig;
    use crate::field::{build_field, FieldDimensions};
    use std::sync::Arc;

    fn tiny_env(width: u32, height: u32) -> HeadEnv {
        let field = Arc::new(build_field(FieldDimensions::default(), 0.065).unwrap());
        let cfg = EnvConfig {
            intrinsics: CameraIntrinsics {
                image_width: width,
                image_height: height,
                ..CameraIntrinsics::default()
            },
            ..EnvConfig::default()
        };
        HeadEnv::new(field, cfg).unwrap()
    }

    #[test]
    fn ddqn_target_fixtures() {
        // Terminal transition: the bootstrap is cut.
        let y = ddqn_targets(
            &[-2.0],
            &[true],
            &[vec![5.0, 9.0]],
            &[vec![7.0, 7.0]],
            0.99,
        );
        assert_eq!(y, vec![-2.0]);
        // Online argmax picks action 2; target evaluates it: 1 + 0.99*0.5.
        let y = ddqn_targets(
            &[1.0],
            &[false],
            &[vec![0.1, 0.2, 0.9, 0.0]],
            &[vec![9.0, 9.0, 0.5, 9.0]],
            0.99,
        );
        assert!((y[0] - 1.495).abs() < 1e-7);
        // With identical networks the estimate coincides with vanilla DQN.
        let q = vec![vec![0.3, 0.8, -0.1]];
        let y = ddqn_targets(&[0.0], &[false], &q, &q, 0.5);
        assert!((y[0] - 0.4).abs() < 1e-7);
    }

    #[test]
    fn epsilon_schedule_endpoints_and_warmup() {
        let cfg = TrainerConfig {
            total_steps: 1000,
            ..TrainerConfig::default()
        };
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(250) - 0.51).abs() < 1e-9);
        assert!((cfg.epsilon_at(500) - 0.02).abs() < 1e-12);
        assert!((cfg.epsilon_at(999) - 0.02).abs() < 1e-12);
        assert!((cfg.beta_at(0) - 0.4).abs() < 1e-12);
        assert!((cfg.beta_at(1000) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn epsilon_one_acts_uniformly_and_zero_is_greedy() {
        let net = QNetwork::seeded(
            NetConfig {
                input_width: 16,
                input_height: 12,
                stack: 1,
                actions: 4,
            },
            3,
        )
        .unwrap();
        let mut ws = Workspace::new(&net.shapes);
        let obs = vec![128u8; net.input_len()];
        let mut rng = ChaCha12Rng::seed_from_u64(50);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[act_epsilon_greedy(&net, &mut ws, &obs, 1.0, &mut rng).unwrap()] += 1;
        }
        for c in counts {
            let f = c as f64 / 100_000.0;
            assert!((f - 0.25).abs() / 0.25 < 0.02, "frequency {f}");
        }
        // Greedy is deterministic.
        let a0 = act_epsilon_greedy(&net, &mut ws, &obs, 0.0, &mut rng).unwrap();
        for _ in 0..10 {
            assert_eq!(a0, act_epsilon_greedy(&net, &mut ws, &obs, 0.0, &mut rng).unwrap());
        }
    }

    #[test]
    fn epsilon_half_mixes_greedy_and_uniform() {
        let net = QNetwork::seeded(
            NetConfig {
                input_width: 16,
                input_height: 12,
                stack: 1,
                actions: 4,
            },
            3,
        )
        .unwrap();
        let mut ws = Workspace::new(&net.shapes);
        let obs = vec![128u8; net.input_len()];
        let mut rng = ChaCha12Rng::seed_from_u64(51);
        let greedy = act_epsilon_greedy(&net, &mut ws, &obs, 0.0, &mut rng).unwrap();
        let mut greedy_count = 0usize;
        let draws = 100_000;
        for _ in 0..draws {
            if act_epsilon_greedy(&net, &mut ws, &obs, 0.5, &mut rng).unwrap() == greedy {
                greedy_count += 1;
            }
        }
        let f = greedy_count as f64 / draws as f64;
        let expected = 0.5 + 0.5 / 4.0;
        assert!((f - expected).abs() / expected < 0.02, "frequency {f} vs {expected}");
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let env = tiny_env(32, 24);
        let cfg = TrainerConfig {
            total_steps: 60,
            warmup: 8,
            batch_size: 8,
            learning_rate: 0.0,
            buffer_capacity: 1024,
            ..TrainerConfig::default()
        };
        let mut trainer = Trainer::new(env, cfg, 5).unwrap();
        let before = trainer.online.params.clone();
        let report = trainer.run(&mut NoopObserver).unwrap();
        assert!(report.last_loss.unwrap().is_finite());
        assert_eq!(trainer.online.params, before);
    }

    #[test]
    fn single_transition_regression_converges_to_the_target() {
        let env = tiny_env(32, 24);
        let cfg = TrainerConfig {
            batch_size: 1,
            warmup: 1,
            buffer_capacity: 4,
            learning_rate: 2e-3,
            ..TrainerConfig::default()
        };
        let mut trainer = Trainer::new(env, cfg, 9).unwrap();
        let obs = trainer.env.reset(1).unwrap();
        let sr = trainer.env.step(0).unwrap();
        trainer.buffer.push(Experience {
            state: obs.clone(),
            action: 0,
            reward: 1.0,
            next_state: sr.observation,
            done: true,
        });
        for _ in 0..2000 {
            trainer.train_step(1.0).unwrap();
        }
        let q = trainer.online.forward(&mut trainer.act_ws, &obs).unwrap();
        assert!(
            (q[0] - 1.0).abs() < 1e-3,
            "Q(s, a) should converge to the terminal target, got {}",
            q[0]
        );
    }

    #[test]
    fn training_is_bit_reproducible() {
        let run = || {
            let env = tiny_env(32, 24);
            let cfg = TrainerConfig {
                total_steps: 120,
                warmup: 16,
                batch_size: 8,
                buffer_capacity: 1024,
                target_sync: 50,
                ..TrainerConfig::default()
            };
            let mut trainer = Trainer::new(env, cfg, 21).unwrap();
            let report = trainer.run(&mut NoopObserver).unwrap();
            (trainer.online.params.clone(), report.last_loss)
        };
        let (p1, l1) = run();
        let (p2, l2) = run();
        assert_eq!(p1, p2);
        assert_eq!(l1, l2);
    }

    #[test]
    fn network_width_matches_action_count() {
        let env = tiny_env(32, 24);
        let trainer = Trainer::new(env, TrainerConfig::default(), 1).unwrap();
        assert_eq!(trainer.network().cfg.actions, trainer.env().action_count());
    }
}
