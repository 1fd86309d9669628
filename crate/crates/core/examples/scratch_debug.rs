// Temporary investigation harness; removed before release.
use std::sync::Arc;
use std::time::Instant;

use activevision::camera::CameraIntrinsics;
use activevision::dqn::{NoopObserver, Trainer, TrainerConfig};
use activevision::env::{EnvConfig, HeadEnv};
use activevision::field::{build_field, FieldDimensions};
use activevision::metrics::epoch_aggregate;

fn main() {
    let field = Arc::new(build_field(FieldDimensions::default(), 0.065).unwrap());
    let cfg = EnvConfig {
        intrinsics: CameraIntrinsics {
            image_width: 80,
            image_height: 60,
            ..CameraIntrinsics::default()
        },
        ..EnvConfig::default()
    };
    let env = HeadEnv::new(field, cfg).unwrap();
    let tcfg = TrainerConfig {
        total_steps: 3000,
        ..TrainerConfig::default()
    };
    let mut trainer = Trainer::new(env, tcfg, 7).unwrap();
    let t0 = Instant::now();
    let report = trainer.run(&mut NoopObserver).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!(
        "3000 steps in {:.1}s -> {:.1} steps/s; projected 30k: {:.1} min",
        dt,
        3000.0 / dt,
        dt * 10.0 / 60.0
    );
    println!(
        "episodes {} last_loss {:?}",
        report.episodes, report.last_loss
    );
    let epochs = epoch_aggregate(&report.records, 300);
    for e in epochs.iter().take(10) {
        println!(
            "epoch {} n={} sr={:.3} sd={:.1} bld={:.1}",
            e.epoch, e.episodes, e.mean_success_rate, e.mean_success_duration, e.mean_ball_loss_duration
        );
    }
}
