//! Single-binary runner: planning, training, evaluation, the robustness
//! experiment, frame dumps and the oracle self-test, all driven by one flat
//! config file and a master seed.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use nalgebra::{Matrix3, Point2};

use activevision::belief::GaussianBelief;
use activevision::camera::{render, CameraPosition};
use activevision::config::RunConfig;
use activevision::dqn::{TrainObserver, Trainer};
use activevision::env::{HeadEnv, Outcome};
use activevision::error::Error;
use activevision::geometry::Pose2d;
use activevision::metrics::{
    epoch_aggregate, episode_record_csv_row, episode_records_csv_header, run_eval_episodes,
    run_robustness, EpisodeRecord, EvalPolicy,
};
use activevision::nn::{NetConfig, QNetwork};
use activevision::planner::{best_viewpoint, plan_to_csv, PlannerContext};
use activevision::seed::stream;
use activevision::selftest;

#[derive(Parser)]
#[command(
    name = "activevision",
    about = "Active-vision workbench: entropy-based viewpoint planning and DQN head control",
    version,
    after_help = "CONFIG\n  A flat `key = value` file ('#' comments). Unknown keys are errors; \
                  missing keys take defaults. Angles are radians, distances meters. The resolved \
                  config is echoed to <out>/config_resolved.cfg by writing subcommands.\n\n\
                  FILES\n  train: metrics.csv (step,episode,ep_reward,loss,epsilon), \
                  episodes.csv (episode,t,action,reward,pan,tilt,goal_pan,goal_tilt,outcome),\n  \
                  train_records.csv, epochs.csv, checkpoint.ckpt\n  eval: eval_records.csv\n  \
                  robustness: robustness.csv (sigma,method,mean_success_rate,n,stderr), \
                  robustness.json\n  render: frame.pgm (binary P5, maxval 255)\n\n\
                  CHECKPOINT\n  magic 'AVQN', u32 format version, u64 architecture hash, \
                  u32 action count, u32 stack depth, then little-endian f32 parameters in \
                  declared layer order."
)]
struct Cli {
    /// Path to the run configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config's `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; writing subcommands create it and write only here.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan the best viewpoint for a given robot pose and ball position and
    /// print the candidate table as CSV.
    Plan(PlanArgs),
    /// Train the head-control policy; writes metrics, logs and a checkpoint.
    Train,
    /// Evaluate a checkpoint greedily over seeded episodes.
    Eval(EvalArgs),
    /// Compare the entropy planner against a learned policy as the
    /// localization error grows.
    Robustness(RobustnessArgs),
    /// Render one synthetic camera frame to a binary PGM.
    Render(RenderArgs),
    /// Run the oracle-equivalence self-test suite.
    Selftest,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long, default_value_t = 0.0)]
    y: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 1.5)]
    ball_x: f64,
    #[arg(long, default_value_t = 0.0)]
    ball_y: f64,
}

#[derive(Args)]
struct EvalArgs {
    /// Trained checkpoint to evaluate.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Episode count (defaults to eval.episodes from the config).
    #[arg(long)]
    episodes: Option<u32>,
    /// Use uniform random actions instead of the checkpoint policy.
    #[arg(long, default_value_t = false)]
    random_policy: bool,
}

#[derive(Args)]
struct RobustnessArgs {
    /// Trained checkpoint for the learned-policy arm.
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long, default_value_t = 0.0)]
    x: f64,
    #[arg(long, default_value_t = 0.0)]
    y: f64,
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, default_value_t = 0.0)]
    pan: f64,
    #[arg(long, default_value_t = 0.35)]
    tilt: f64,
    #[arg(long, default_value_t = 1.5)]
    ball_x: f64,
    #[arg(long, default_value_t = 0.0)]
    ball_y: f64,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "frame.pgm")]
    name: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version through the error path too
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) | Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_out(cli: &Cli, cfg: &RunConfig) -> Result<PathBuf, Error> {
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("config_resolved.cfg"), cfg.echo())?;
    Ok(cli.out.clone())
}

fn build_env(cfg: &RunConfig) -> Result<HeadEnv, Error> {
    let field = Arc::new(cfg.build_field()?);
    HeadEnv::new(field, cfg.env_config()?)
}

fn net_config(cfg: &RunConfig) -> NetConfig {
    NetConfig {
        input_width: cfg.camera_image_width as usize,
        input_height: cfg.camera_image_height as usize,
        stack: cfg.env_frame_stack,
        actions: cfg.env_actions,
    }
}

fn load_checkpoint(path: &Path, cfg: &RunConfig) -> Result<QNetwork, Error> {
    if !path.exists() {
        return Err(Error::Usage(format!(
            "checkpoint '{}' does not exist",
            path.display()
        )));
    }
    QNetwork::load(path, net_config(cfg))
}

fn run(cli: Cli) -> Result<(), Error> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Plan(args) => cmd_plan(&cfg, args),
        Command::Train => cmd_train(&cli, &cfg),
        Command::Eval(args) => cmd_eval(&cli, &cfg, args),
        Command::Robustness(args) => cmd_robustness(&cli, &cfg, args),
        Command::Render(args) => cmd_render(&cli, &cfg, args),
        Command::Selftest => cmd_selftest(),
    }
}

fn cmd_plan(cfg: &RunConfig, args: &PlanArgs) -> Result<(), Error> {
    let field = cfg.build_field()?;
    let pose = Pose2d::new(args.x, args.y, args.theta);
    let ball = Point2::new(args.ball_x, args.ball_y);
    let belief = GaussianBelief::new(pose, Matrix3::from_diagonal(&cfg.initial_belief_var()));
    let grid = cfg.grid();
    let thresholds = cfg.thresholds();
    let intrinsics = cfg.intrinsics();
    let ukf = cfg.ukf_params();
    let noise = cfg.measurement_noise();
    let ctx = PlannerContext {
        field: &field,
        grid: &grid,
        thresholds: &thresholds,
        intrinsics: &intrinsics,
        ukf: &ukf,
        noise: &noise,
        ball_margin_px: cfg.camera_ball_margin_px,
    };
    let plan = best_viewpoint(&belief, &ball, &ctx)?;
    print!("{}", plan_to_csv(&plan));
    if plan.fallback {
        eprintln!("note: no candidate sees the ball; returned the closest-pointing viewpoint");
    }
    Ok(())
}

/// Writes the training CSVs: per-episode metrics and the per-step episode
/// log.
struct CsvObserver {
    metrics: fs::File,
    steps: fs::File,
    records: fs::File,
}

impl CsvObserver {
    fn new(out: &Path) -> Result<Self, Error> {
        let mut metrics = fs::File::create(out.join("metrics.csv"))?;
        writeln!(metrics, "step,episode,ep_reward,loss,epsilon")?;
        let mut steps = fs::File::create(out.join("episodes.csv"))?;
        writeln!(
            steps,
            "episode,t,action,reward,pan,tilt,goal_pan,goal_tilt,outcome"
        )?;
        let mut records = fs::File::create(out.join("train_records.csv"))?;
        writeln!(records, "{}", episode_records_csv_header())?;
        Ok(Self {
            metrics,
            steps,
            records,
        })
    }
}

impl TrainObserver for CsvObserver {
    fn on_step(
        &mut self,
        episode: u32,
        t: u32,
        action: usize,
        reward: f32,
        env: &HeadEnv,
        outcome: Outcome,
    ) {
        let cam = env.camera().expect("episode active");
        let goal = env.goal().expect("episode active");
        let _ = writeln!(
            self.steps,
            "{episode},{t},{action},{reward},{},{},{},{},{outcome}",
            cam.pan, cam.tilt, goal.pan, goal.tilt
        );
    }

    fn on_episode(&mut self, record: &EpisodeRecord, mean_loss: Option<f64>, epsilon: f64) {
        let loss = mean_loss.map(|l| format!("{l:.6}")).unwrap_or_default();
        let _ = writeln!(
            self.metrics,
            "{},{},{:.6},{loss},{epsilon:.6}",
            record.end_step, record.episode, record.total_reward
        );
        let _ = writeln!(self.records, "{}", episode_record_csv_row(record));
    }
}

fn cmd_train(cli: &Cli, cfg: &RunConfig) -> Result<(), Error> {
    let out = prepare_out(cli, cfg)?;
    let env = build_env(cfg)?;
    let mut trainer = Trainer::new(env, cfg.trainer_config(), cfg.seed)?;
    let mut observer = CsvObserver::new(&out)?;
    let report = trainer.run(&mut observer)?;

    let mut epochs = fs::File::create(out.join("epochs.csv"))?;
    writeln!(
        epochs,
        "epoch,episodes,mean_success_rate,mean_success_duration,mean_ball_loss_duration"
    )?;
    for e in epoch_aggregate(&report.records, 300) {
        writeln!(
            epochs,
            "{},{},{:.6},{:.6},{:.6}",
            e.epoch,
            e.episodes,
            e.mean_success_rate,
            e.mean_success_duration,
            e.mean_ball_loss_duration
        )?;
    }

    let ckpt = out.join("checkpoint.ckpt");
    trainer.network().save(&ckpt)?;
    println!(
        "trained {} steps / {} episodes; checkpoint at {}",
        report.steps,
        report.episodes,
        ckpt.display()
    );
    if let Some(loss) = report.last_loss {
        println!("final loss {loss:.6}");
    }
    let mean_sr: f64 = report
        .records
        .iter()
        .rev()
        .take(100)
        .map(|r| r.success_rate)
        .sum::<f64>()
        / report.records.len().min(100).max(1) as f64;
    println!("mean success rate over the last 100 episodes: {mean_sr:.3}");
    Ok(())
}

fn summarize(records: &[EpisodeRecord]) -> String {
    let n = records.len().max(1) as f64;
    let mean_sr = records.iter().map(|r| r.success_rate).sum::<f64>() / n;
    let mean_sd = records.iter().map(|r| r.success_duration as f64).sum::<f64>() / n;
    let mean_bld = records.iter().map(|r| r.ball_loss_duration as f64).sum::<f64>() / n;
    let mut by_outcome = [0usize; 3];
    for r in records {
        match r.outcome {
            Outcome::Success => by_outcome[0] += 1,
            Outcome::BallLost => by_outcome[1] += 1,
            Outcome::Timeout => by_outcome[2] += 1,
            Outcome::Running => {}
        }
    }
    format!(
        "episodes: {}\nmean success rate: {mean_sr:.4}\nmean success duration: {mean_sd:.2}\n\
         mean ball-loss duration: {mean_bld:.2}\noutcomes: {} success / {} ball_lost / {} timeout",
        records.len(),
        by_outcome[0],
        by_outcome[1],
        by_outcome[2]
    )
}

fn cmd_eval(cli: &Cli, cfg: &RunConfig, args: &EvalArgs) -> Result<(), Error> {
    let out = prepare_out(cli, cfg)?;
    let mut env = build_env(cfg)?;
    let episodes = args.episodes.unwrap_or(cfg.eval_episodes);
    let eval_seed = stream(cfg.seed, "eval");
    let records = if args.random_policy {
        run_eval_episodes(&mut env, &EvalPolicy::Random, episodes, eval_seed)?
    } else {
        let net = load_checkpoint(&args.checkpoint, cfg)?;
        run_eval_episodes(&mut env, &EvalPolicy::Greedy(&net), episodes, eval_seed)?
    };
    let mut f = fs::File::create(out.join("eval_records.csv"))?;
    writeln!(f, "{}", episode_records_csv_header())?;
    for r in &records {
        writeln!(f, "{}", episode_record_csv_row(r))?;
    }
    println!("{}", summarize(&records));
    Ok(())
}

fn cmd_robustness(cli: &Cli, cfg: &RunConfig, args: &RobustnessArgs) -> Result<(), Error> {
    let out = prepare_out(cli, cfg)?;
    let net = load_checkpoint(&args.checkpoint, cfg)?;
    let mut env = build_env(cfg)?;
    let curve = run_robustness(
        &mut env,
        &net,
        &cfg.robust_sigmas,
        &cfg.robustness_config(),
        stream(cfg.seed, "robustness"),
    )?;
    fs::write(out.join("robustness.csv"), curve.to_csv())?;
    fs::write(out.join("robustness.json"), curve.to_json())?;
    print!("{}", curve.to_csv());
    Ok(())
}

fn cmd_render(cli: &Cli, cfg: &RunConfig, args: &RenderArgs) -> Result<(), Error> {
    let out = prepare_out(cli, cfg)?;
    let field = cfg.build_field()?;
    let img = render(
        &Pose2d::new(args.x, args.y, args.theta),
        &CameraPosition::new(args.pan, args.tilt),
        &cfg.intrinsics(),
        &field,
        &Point2::new(args.ball_x, args.ball_y),
        &cfg.render_params(),
        stream(cfg.seed, "render"),
    );
    let path = out.join(&args.name);
    fs::write(&path, img.to_pgm())?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_selftest() -> Result<(), Error> {
    let checks = selftest::run_all()?;
    let mut failed = 0usize;
    for c in &checks {
        println!(
            "{} {} ({})",
            if c.passed { "pass" } else { "FAIL" },
            c.name,
            c.detail
        );
        if !c.passed {
            failed += 1;
        }
    }
    println!("{} checks, {} failed", checks.len(), failed);
    if failed > 0 {
        return Err(Error::Numerical(format!(
            "{failed} self-test checks disagree with their oracles"
        )));
    }
    Ok(())
}
