//! Run configuration: one flat, human-readable `key = value` file that
//! houses every tunable in the workbench. Angles are radians, distances
//! meters. Unknown keys are errors; missing keys take the documented
//! defaults; the fully resolved configuration can be echoed back out and
//! re-parsed to the identical value.

use std::path::Path;

use nalgebra::Vector3;

use crate::belief::{MeasurementNoise, UkfParams};
use crate::camera::{CameraIntrinsics, JointLimits, RenderParams, VisibilityThresholds};
use crate::dqn::TrainerConfig;
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::field::{build_field, FieldDimensions, FieldModel};
use crate::metrics::RobustnessConfig;
use crate::planner::ViewpointGrid;

trait ConfigValue: Sized {
    fn parse_value(key: &str, raw: &str) -> Result<Self>;
    fn render_value(&self) -> String;
}

macro_rules! impl_config_value {
    ($($ty:ty),+) => {$(
        impl ConfigValue for $ty {
            fn parse_value(key: &str, raw: &str) -> Result<Self> {
                raw.parse::<$ty>().map_err(|_| {
                    Error::Config(format!(
                        "key '{key}': cannot parse '{raw}' as {}",
                        stringify!($ty)
                    ))
                })
            }
            fn render_value(&self) -> String {
                format!("{self}")
            }
        }
    )+};
}

impl_config_value!(f64, u8, u32, u64, usize, bool);

impl ConfigValue for Vec<f64> {
    fn parse_value(key: &str, raw: &str) -> Result<Self> {
        raw.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse::<f64>().map_err(|_| {
                    Error::Config(format!("key '{key}': cannot parse '{s}' as f64"))
                })
            })
            .collect()
    }
    fn render_value(&self) -> String {
        self.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

macro_rules! run_config {
    ($(($key:literal, $field:ident, $ty:ty, $default:expr)),+ $(,)?) => {
        /// Every tunable of the workbench, one field per config key.
        #[derive(Clone, Debug, PartialEq)]
        pub struct RunConfig {
            $(pub $field: $ty),+
        }

        impl Default for RunConfig {
            fn default() -> Self {
                Self { $($field: $default),+ }
            }
        }

        impl RunConfig {
            /// Declared key order; echo output follows it.
            pub const KEYS: &'static [&'static str] = &[$($key),+];

            pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
                match key {
                    $($key => {
                        self.$field = <$ty as ConfigValue>::parse_value(key, raw)?;
                        Ok(())
                    })+
                    _ => Err(Error::Config(format!("unknown config key '{key}'"))),
                }
            }

            pub fn get(&self, key: &str) -> Option<String> {
                match key {
                    $($key => Some(self.$field.render_value()),)+
                    _ => None,
                }
            }
        }
    };
}

run_config![
    ("seed", seed, u64, 0),
    ("field.length", field_length, f64, 9.0),
    ("field.width", field_width, f64, 6.0),
    ("field.goal_area_length", field_goal_area_length, f64, 1.0),
    ("field.goal_area_width", field_goal_area_width, f64, 5.0),
    ("field.center_circle_radius", field_center_circle_radius, f64, 0.75),
    ("field.line_spacing", field_line_spacing, f64, 0.5),
    ("field.ball_radius", field_ball_radius, f64, 0.065),
    ("camera.image_width", camera_image_width, u32, 160),
    ("camera.image_height", camera_image_height, u32, 120),
    ("camera.horizontal_fov", camera_horizontal_fov, f64, std::f64::consts::PI / 3.0),
    ("camera.mount_height", camera_mount_height, f64, 0.55),
    ("camera.forward_offset", camera_forward_offset, f64, 0.05),
    ("camera.ball_margin_px", camera_ball_margin_px, f64, 2.0),
    ("render.line_step", render_line_step, f64, 0.025),
    ("render.line_width", render_line_width, f64, 0.05),
    ("render.background", render_background, u8, 30),
    ("render.line_intensity", render_line_intensity, u8, 200),
    ("render.ball_intensity", render_ball_intensity, u8, 255),
    ("render.noise_sigma", render_noise_sigma, f64, 0.0),
    ("vis.l_corner", vis_l_corner, f64, 4.0),
    ("vis.t_junction", vis_t_junction, f64, 4.0),
    ("vis.line_point", vis_line_point, f64, 3.0),
    ("vis.boundary_point", vis_boundary_point, f64, 5.0),
    ("ukf.alpha", ukf_alpha, f64, 0.1),
    ("ukf.beta", ukf_beta, f64, 2.0),
    ("ukf.kappa", ukf_kappa, f64, 0.0),
    ("noise.range_fraction", noise_range_fraction, f64, 0.1),
    ("noise.bearing_std", noise_bearing_std, f64, 0.03490658503988659),
    ("belief.initial_pos_var", belief_initial_pos_var, f64, 0.0025),
    ("belief.initial_heading_var", belief_initial_heading_var, f64, 0.0012),
    ("belief.inflation_pos", belief_inflation_pos, f64, 0.01),
    ("belief.inflation_heading", belief_inflation_heading, f64, 0.005),
    ("grid.pan_points", grid_pan_points, usize, 10),
    ("grid.tilt_points", grid_tilt_points, usize, 4),
    ("grid.pan_min", grid_pan_min, f64, -std::f64::consts::FRAC_PI_2),
    ("grid.pan_max", grid_pan_max, f64, std::f64::consts::FRAC_PI_2),
    ("grid.tilt_min", grid_tilt_min, f64, std::f64::consts::PI / 36.0),
    ("grid.tilt_max", grid_tilt_max, f64, 13.0 * std::f64::consts::PI / 36.0),
    ("env.step_size", env_step_size, f64, std::f64::consts::PI / 60.0),
    ("env.tolerance", env_tolerance, f64, std::f64::consts::PI / 60.0),
    ("env.max_steps", env_max_steps, u32, 20),
    ("env.frame_stack", env_frame_stack, usize, 1),
    ("env.actions", env_actions, usize, 4),
    ("env.max_reset_attempts", env_max_reset_attempts, u32, 1000),
    ("trainer.total_steps", trainer_total_steps, u32, 30_000),
    ("trainer.batch_size", trainer_batch_size, usize, 32),
    ("trainer.learning_rate", trainer_learning_rate, f64, 5e-4),
    ("trainer.gamma", trainer_gamma, f64, 0.99),
    ("trainer.target_sync", trainer_target_sync, u32, 10_000),
    ("trainer.buffer_capacity", trainer_buffer_capacity, usize, 1_000_000),
    ("trainer.per_alpha", trainer_per_alpha, f64, 0.6),
    ("trainer.per_beta_start", trainer_per_beta_start, f64, 0.4),
    ("trainer.per_beta_end", trainer_per_beta_end, f64, 1.0),
    ("trainer.per_priority_floor", trainer_per_priority_floor, f64, 1e-6),
    ("trainer.eps_start", trainer_eps_start, f64, 1.0),
    ("trainer.eps_end", trainer_eps_end, f64, 0.02),
    ("trainer.eps_decay_fraction", trainer_eps_decay_fraction, f64, 0.5),
    ("trainer.warmup", trainer_warmup, u32, 1000),
    ("trainer.checkpoint_every", trainer_checkpoint_every, u32, 0),
    ("eval.episodes", eval_episodes, u32, 100),
    ("robust.sigmas", robust_sigmas, Vec<f64>, vec![0.0, 0.1, 0.25, 0.5, 0.75, 1.0]),
    ("robust.episodes", robust_episodes, u32, 100),
    ("robust.replan_every_step", robust_replan_every_step, bool, true),
];

impl RunConfig {
    /// Parses the flat key-value text (comments start with '#').
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "line {}: expected 'key = value', got '{line}'",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config '{}': {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Fully resolved configuration in declared key order; parsing the echo
    /// reproduces the value exactly.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            out.push_str(key);
            out.push_str(" = ");
            out.push_str(&self.get(key).expect("declared key"));
            out.push('\n');
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.field_dimensions().validate()?;
        if !(self.field_ball_radius > 0.0) {
            return Err(Error::Config(format!(
                "field.ball_radius must be positive, got {}",
                self.field_ball_radius
            )));
        }
        self.env_config()?.validate()?;
        self.trainer_config().validate()?;
        if self.eval_episodes == 0 {
            return Err(Error::Config("eval.episodes must be positive".into()));
        }
        if self.robust_sigmas.is_empty() {
            return Err(Error::Config("robust.sigmas must not be empty".into()));
        }
        for s in &self.robust_sigmas {
            if !(*s >= 0.0) {
                return Err(Error::Config(format!(
                    "robust.sigmas entries must be non-negative, got {s}"
                )));
            }
        }
        if self.robust_episodes == 0 {
            return Err(Error::Config("robust.episodes must be positive".into()));
        }
        for (key, v) in [
            ("belief.initial_pos_var", self.belief_initial_pos_var),
            ("belief.initial_heading_var", self.belief_initial_heading_var),
        ] {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{key} must be positive, got {v}")));
            }
        }
        for (key, v) in [
            ("belief.inflation_pos", self.belief_inflation_pos),
            ("belief.inflation_heading", self.belief_inflation_heading),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!(
                    "{key} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn field_dimensions(&self) -> FieldDimensions {
        FieldDimensions {
            length: self.field_length,
            width: self.field_width,
            goal_area_length: self.field_goal_area_length,
            goal_area_width: self.field_goal_area_width,
            center_circle_radius: self.field_center_circle_radius,
            line_sample_spacing: self.field_line_spacing,
        }
    }

    pub fn build_field(&self) -> Result<FieldModel> {
        build_field(self.field_dimensions(), self.field_ball_radius)
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics {
            image_width: self.camera_image_width,
            image_height: self.camera_image_height,
            horizontal_fov: self.camera_horizontal_fov,
            mount_height: self.camera_mount_height,
            mount_forward_offset: self.camera_forward_offset,
        }
    }

    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            line_step: self.render_line_step,
            line_width: self.render_line_width,
            background: self.render_background,
            line_intensity: self.render_line_intensity,
            ball_intensity: self.render_ball_intensity,
            noise_sigma: self.render_noise_sigma,
        }
    }

    pub fn thresholds(&self) -> VisibilityThresholds {
        VisibilityThresholds {
            l_corner: self.vis_l_corner,
            t_junction: self.vis_t_junction,
            line_point: self.vis_line_point,
            boundary_point: self.vis_boundary_point,
        }
    }

    pub fn ukf_params(&self) -> UkfParams {
        UkfParams {
            alpha: self.ukf_alpha,
            beta: self.ukf_beta,
            kappa: self.ukf_kappa,
        }
    }

    pub fn measurement_noise(&self) -> MeasurementNoise {
        MeasurementNoise {
            range_fraction: self.noise_range_fraction,
            bearing_std: self.noise_bearing_std,
        }
    }

    pub fn grid(&self) -> ViewpointGrid {
        ViewpointGrid {
            pan_points: self.grid_pan_points,
            tilt_points: self.grid_tilt_points,
            limits: JointLimits {
                pan_min: self.grid_pan_min,
                pan_max: self.grid_pan_max,
                tilt_min: self.grid_tilt_min,
                tilt_max: self.grid_tilt_max,
            },
        }
    }

    pub fn initial_belief_var(&self) -> Vector3<f64> {
        Vector3::new(
            self.belief_initial_pos_var,
            self.belief_initial_pos_var,
            self.belief_initial_heading_var,
        )
    }

    pub fn inflation(&self) -> Vector3<f64> {
        Vector3::new(
            self.belief_inflation_pos,
            self.belief_inflation_pos,
            self.belief_inflation_heading,
        )
    }

    pub fn env_config(&self) -> Result<EnvConfig> {
        Ok(EnvConfig {
            intrinsics: self.intrinsics(),
            thresholds: self.thresholds(),
            grid: self.grid(),
            ukf: self.ukf_params(),
            noise: self.measurement_noise(),
            render: self.render_params(),
            step_size: self.env_step_size,
            tolerance: self.env_tolerance,
            max_steps: self.env_max_steps,
            frame_stack: self.env_frame_stack,
            action_count: self.env_actions,
            ball_margin_px: self.camera_ball_margin_px,
            max_reset_attempts: self.env_max_reset_attempts,
            initial_belief_var: self.initial_belief_var(),
        })
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        TrainerConfig {
            total_steps: self.trainer_total_steps,
            batch_size: self.trainer_batch_size,
            learning_rate: self.trainer_learning_rate,
            gamma: self.trainer_gamma,
            target_sync: self.trainer_target_sync,
            buffer_capacity: self.trainer_buffer_capacity,
            per_alpha: self.trainer_per_alpha,
            per_beta_start: self.trainer_per_beta_start,
            per_beta_end: self.trainer_per_beta_end,
            per_priority_floor: self.trainer_per_priority_floor,
            eps_start: self.trainer_eps_start,
            eps_end: self.trainer_eps_end,
            eps_decay_fraction: self.trainer_eps_decay_fraction,
            warmup: self.trainer_warmup,
        }
    }

    pub fn robustness_config(&self) -> RobustnessConfig {
        RobustnessConfig {
            episodes_per_level: self.robust_episodes,
            replan_every_step: self.robust_replan_every_step,
            planner_belief_var: self.initial_belief_var(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_input_yields_all_defaults() {
        let cfg = RunConfig::parse("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.trainer_total_steps, 30_000);
        assert_eq!(cfg.trainer_batch_size, 32);
        assert_eq!(cfg.trainer_learning_rate, 5e-4);
        assert_eq!(cfg.trainer_gamma, 0.99);
        assert_eq!(cfg.trainer_target_sync, 10_000);
        assert_eq!(cfg.trainer_buffer_capacity, 1_000_000);
        assert_eq!(cfg.trainer_per_alpha, 0.6);
        assert_eq!(cfg.trainer_per_beta_start, 0.4);
        assert_eq!(cfg.trainer_eps_start, 1.0);
        assert_eq!(cfg.trainer_eps_end, 0.02);
        assert_eq!(cfg.grid_pan_points, 10);
        assert_eq!(cfg.grid_tilt_points, 4);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_errors() {
        assert!(matches!(
            RunConfig::parse("no_such_key = 3"),
            Err(Error::Config(m)) if m.contains("no_such_key")
        ));
        assert!(matches!(
            RunConfig::parse("trainer.gamma = squirrel"),
            Err(Error::Config(m)) if m.contains("trainer.gamma")
        ));
        assert!(matches!(
            RunConfig::parse("trainer.gamma = 1.5"),
            Err(Error::Config(m)) if m.contains("gamma")
        ));
        assert!(matches!(
            RunConfig::parse("field.length = 0"),
            Err(Error::Config(m)) if m.contains("field.length")
        ));
    }

    #[test]
    fn comments_and_overrides_apply() {
        let text = "# comment\n\nenv.actions = 8\ntrainer.batch_size = 16\n";
        let cfg = RunConfig::parse(text).unwrap();
        assert_eq!(cfg.env_actions, 8);
        assert_eq!(cfg.trainer_batch_size, 16);
    }

    #[test]
    fn echo_round_trips_exactly() {
        let mut cfg = RunConfig::default();
        cfg.seed = 123456789;
        cfg.camera_horizontal_fov = 1.2345678901234567;
        cfg.robust_sigmas = vec![0.0, 0.125, 1.75];
        cfg.robust_replan_every_step = false;
        let echoed = cfg.echo();
        let reparsed = RunConfig::parse(&echoed).unwrap();
        assert_eq!(cfg, reparsed);
        // every declared key appears in the echo
        for key in RunConfig::KEYS {
            assert!(echoed.contains(&format!("{key} = ")), "missing {key}");
        }
    }
}
