//! Independent re-implementations used to cross-check the production code.
//!
//! Everything in this module deliberately avoids the code paths it
//! validates: projection goes through explicit homogeneous matrices, the
//! landmark census is closed-form counting, the planner check is a plain
//! re-derivation of the search loop, the network check is a direct f64
//! convolution, and so on. The CLI `selftest` command and the acceptance
//! suite both run these against the real implementations.

use nalgebra::{Matrix2, Matrix3, Matrix4, Point2, Vector2, Vector3, Vector4};
use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::belief::{entropy, measurement, ukf_update, GaussianBelief, LandmarkObservation};
use crate::camera::{ball_visible, project, CameraIntrinsics, CameraPosition};
use crate::error::Result;
use crate::field::FieldDimensions;
use crate::geometry::{wrap_angle, Pose2d};
use crate::nn::{huber_grad, NetConfig, QNetwork, Shapes, Workspace};
use crate::planner::{CandidateEval, PlanResult, PlannerContext, ViewpointGrid};

// ---------------------------------------------------------------------------
// Field

/// Closed-form landmark census `[l_corner, t_junction, line_point,
/// boundary_point]` for the rectangular layout.
pub fn landmark_census(dims: &FieldDimensions) -> [usize; 4] {
    let s = dims.line_sample_spacing;
    let hl = dims.half_length();
    let hw = dims.half_width();
    let gal = dims.goal_area_length;
    let gaw = dims.goal_area_width;
    let r = dims.center_circle_radius;

    // Interior sample count of a segment of length `len`: k >= 1 with
    // k*s < len - 1e-9.
    let interior = |len: f64| -> usize { ((len - 1e-9) / s).floor().max(0.0) as usize };
    // Whether an interior sample lands on a blocked point at arc distance
    // `d` from the segment start.
    let on_grid = |d: f64, len: f64| -> usize {
        let k = (d / s).round();
        (k >= 1.0 && k * s < len - 1e-9 && (d - k * s).abs() < 1e-6) as usize
    };

    let l_corners = 4 + 4 + 2;
    let t_junctions = 2 + 4;

    // Halfway line runs from -hw to hw; circle crossings sit at arc
    // distances hw - r and hw + r from the start.
    let halfway = interior(2.0 * hw) - on_grid(hw - r, 2.0 * hw) - on_grid(hw + r, 2.0 * hw);
    let goal_area = interior(gaw) + 2 * interior(gal);
    let n_circle = ((2.0 * std::f64::consts::PI * r / (4.0 * s)).round() * 4.0).max(4.0) as usize;
    // The circle count is a multiple of four, so two samples always land on
    // the halfway-line crossings and are filed as corners instead.
    let circle = n_circle - 2;
    let line_points = halfway + 2 * goal_area + circle;

    // Touch lines run from -hl to hl and meet the halfway line at arc
    // distance hl; goal lines run from -hw to hw and meet the goal-area
    // lines at hw -/+ gaw/2.
    let touch = interior(2.0 * hl) - on_grid(hl, 2.0 * hl);
    let goal_line =
        interior(2.0 * hw) - on_grid(hw - gaw / 2.0, 2.0 * hw) - on_grid(hw + gaw / 2.0, 2.0 * hw);
    let boundary_points = 2 * touch + 2 * goal_line;

    [l_corners, t_junctions, line_points, boundary_points]
}

// ---------------------------------------------------------------------------
// Camera

/// Pinhole projection through an explicit homogeneous matrix chain.
pub fn project_homogeneous(
    pose: &Pose2d,
    cam: &CameraPosition,
    intr: &CameraIntrinsics,
    point: &Point2<f64>,
) -> Option<(f64, f64)> {
    let rot_z = |a: f64| -> Matrix4<f64> {
        let (s, c) = a.sin_cos();
        Matrix4::new(
            c, -s, 0.0, 0.0, //
            s, c, 0.0, 0.0, //
            0.0, 0.0, 1.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        )
    };
    let translate = |x: f64, y: f64, z: f64| -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m[(0, 3)] = x;
        m[(1, 3)] = y;
        m[(2, 3)] = z;
        m
    };
    // Camera basis (rows): x_cam right, y_cam down, z_cam forward, for a
    // camera pitched down by `tilt` in a frame with x forward / z up.
    let (st, ct) = cam.tilt.sin_cos();
    let basis = Matrix4::new(
        0.0, -1.0, 0.0, 0.0, //
        -st, 0.0, -ct, 0.0, //
        ct, 0.0, -st, 0.0, //
        0.0, 0.0, 0.0, 1.0,
    );
    let world_to_cam = basis
        * rot_z(-cam.pan)
        * translate(-intr.mount_forward_offset, 0.0, -intr.mount_height)
        * rot_z(-pose.theta)
        * translate(-pose.x, -pose.y, 0.0);
    let p = world_to_cam * Vector4::new(point.x, point.y, 0.0, 1.0);
    let (u, v, w) = (p.x, p.y, p.z);
    if w <= 1e-9 {
        return None;
    }
    let f = intr.focal_px();
    let (cx, cy) = intr.center();
    let px = cx + f * u / w;
    let py = cy + f * v / w;
    let wf = intr.image_width as f64;
    let hf = intr.image_height as f64;
    if px >= -0.5 && px <= wf - 0.5 && py >= -0.5 && py <= hf - 0.5 {
        Some((px, py))
    } else {
        None
    }
}

/// Analytic pan interval over which the ball center stays inside the image
/// rectangle (shrunk by `margin_px`), for a fixed tilt. Returns `None` when
/// the geometry gives no closed-form crossing or the vertical bound breaks
/// inside the interval.
pub fn pan_visibility_interval(
    pose: &Pose2d,
    ball: &Point2<f64>,
    tilt: f64,
    intr: &CameraIntrinsics,
    margin_px: f64,
) -> Option<(f64, f64)> {
    let (st, ct) = pose.theta.sin_cos();
    let dx = ball.x - pose.x;
    let dy = ball.y - pose.y;
    let bx = ct * dx + st * dy - intr.mount_forward_offset;
    let by = -st * dx + ct * dy;
    let rho = bx.hypot(by);
    if rho < 1e-9 {
        return None;
    }
    let phi = by.atan2(bx);
    let h = intr.mount_height;
    let f = intr.focal_px();
    let (stl, ctl) = tilt.sin_cos();
    let x_half = intr.image_width as f64 / 2.0 - margin_px;
    let y_half = intr.image_height as f64 / 2.0 - margin_px;

    // Solve rho*sin(d) = q*(ctl*rho*cos(d) + stl*h) with q = x_half/f.
    let q = x_half / f;
    let a = rho;
    let b = -q * ctl * rho;
    let c = q * stl * h;
    let r = a.hypot(b);
    let s = c / r;
    if s.abs() > 1.0 {
        return None;
    }
    let psi = b.atan2(a);
    let candidates = [s.asin() - psi, std::f64::consts::PI - s.asin() - psi];
    let mut delta = f64::INFINITY;
    for d in candidates {
        let w = ctl * rho * d.cos() + stl * h;
        if d > 1e-12 && d < std::f64::consts::PI && w > 0.0 && d < delta {
            delta = d;
        }
    }
    if !delta.is_finite() {
        return None;
    }
    // Verify the vertical bound holds across the interval endpoints and
    // center; the callers pick fixtures where the horizontal bound binds.
    for d in [0.0, delta * 0.5, delta] {
        let w = ctl * rho * d.cos() + stl * h;
        let v = -stl * rho * d.cos() + ctl * h;
        if w <= 0.0 || (f * v / w).abs() > y_half {
            return None;
        }
    }
    Some((phi - delta, phi + delta))
}

// ---------------------------------------------------------------------------
// Belief

/// Differential entropy via the explicit 3x3 cofactor determinant.
pub fn entropy_direct(cov: &Matrix3<f64>) -> f64 {
    let det = cov[(0, 0)] * (cov[(1, 1)] * cov[(2, 2)] - cov[(1, 2)] * cov[(2, 1)])
        - cov[(0, 1)] * (cov[(1, 0)] * cov[(2, 2)] - cov[(1, 2)] * cov[(2, 0)])
        + cov[(0, 2)] * (cov[(1, 0)] * cov[(2, 1)] - cov[(1, 1)] * cov[(2, 0)]);
    let two_pi_e = 2.0 * std::f64::consts::PI * std::f64::consts::E;
    0.5 * (two_pi_e.powi(3) * det).ln()
}

/// Exact Kalman update for the linear measurement h(pose) = (x, y).
pub fn kalman_update_xy(
    mean: &Vector3<f64>,
    cov: &Matrix3<f64>,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
) -> (Vector3<f64>, Matrix3<f64>) {
    let h = nalgebra::Matrix2x3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let s = h * cov * h.transpose() + r;
    let k = cov * h.transpose() * s.try_inverse().expect("oracle S invertible");
    let mean_post = mean + k * (z - h * mean);
    let cov_post = (Matrix3::identity() - k * h) * cov;
    (mean_post, cov_post)
}

pub struct McPosterior {
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
    /// Standard error of each posterior-mean component.
    pub se: Vector3<f64>,
    pub effective_samples: f64,
}

fn standard_normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Importance-weighted Monte-Carlo posterior for one range-bearing update:
/// samples the prior, weights by the measurement likelihood.
pub fn mc_range_bearing_posterior(
    prior: &GaussianBelief,
    landmark: &crate::field::Landmark,
    z: &Vector2<f64>,
    r: &Matrix2<f64>,
    samples: usize,
    seed: u64,
) -> McPosterior {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let l = prior.cov.cholesky().expect("prior covariance PD").l();
    let inv_rr = 1.0 / r[(0, 0)];
    let inv_rb = 1.0 / r[(1, 1)];

    let mut xs: Vec<Vector3<f64>> = Vec::with_capacity(samples);
    let mut logw: Vec<f64> = Vec::with_capacity(samples);
    let mut max_logw = f64::NEG_INFINITY;
    for _ in 0..samples {
        let n = Vector3::new(
            standard_normal(&mut rng),
            standard_normal(&mut rng),
            standard_normal(&mut rng),
        );
        let x = prior.mean + l * n;
        let pose = Pose2d::from_vector(&x);
        let (d, b) = measurement(&pose, landmark);
        let dr = z.x - d;
        let db = wrap_angle(z.y - b);
        let lw = -0.5 * (dr * dr * inv_rr + db * db * inv_rb);
        max_logw = max_logw.max(lw);
        xs.push(x);
        logw.push(lw);
    }

    let mut w_sum = 0.0;
    let mut w2_sum = 0.0;
    let mut mean = Vector3::zeros();
    for (x, lw) in xs.iter().zip(logw.iter()) {
        let w = (lw - max_logw).exp();
        w_sum += w;
        w2_sum += w * w;
        mean += x * w;
    }
    mean /= w_sum;

    let mut cov = Matrix3::zeros();
    let mut se2: Vector3<f64> = Vector3::zeros();
    for (x, lw) in xs.iter().zip(logw.iter()) {
        let w = (lw - max_logw).exp();
        let d = x - mean;
        cov += d * d.transpose() * w;
        for i in 0..3 {
            se2[i] += w * w * d[i] * d[i];
        }
    }
    cov /= w_sum;
    let se = Vector3::new(
        se2[0].sqrt() / w_sum,
        se2[1].sqrt() / w_sum,
        se2[2].sqrt() / w_sum,
    );
    McPosterior {
        mean,
        cov,
        se,
        effective_samples: w_sum * w_sum / w2_sum,
    }
}

// ---------------------------------------------------------------------------
// Planner

/// Grid cell centers computed with an independent association order.
pub fn grid_cell_centers(grid: &ViewpointGrid) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(grid.len());
    let lim = grid.limits;
    for ti in 0..grid.tilt_points {
        let tilt = (lim.tilt_min * (2.0 * (grid.tilt_points - ti) as f64 - 1.0)
            + lim.tilt_max * (2.0 * ti as f64 + 1.0))
            / (2.0 * grid.tilt_points as f64);
        for pi in 0..grid.pan_points {
            let pan = (lim.pan_min * (2.0 * (grid.pan_points - pi) as f64 - 1.0)
                + lim.pan_max * (2.0 * pi as f64 + 1.0))
                / (2.0 * grid.pan_points as f64);
            out.push((pan, tilt));
        }
    }
    out
}

/// Straightforward re-derivation of the viewpoint search: enumerate the
/// grid, recompute observations landmark by landmark, fold the unscented
/// updates, score, and scan for the constrained argmin.
pub fn plan_brute_force(
    belief: &GaussianBelief,
    ball: &Point2<f64>,
    ctx: &PlannerContext,
) -> Result<PlanResult> {
    let mean_pose = belief.mean_pose();
    let lim = ctx.grid.limits;
    let pan_span = lim.pan_max - lim.pan_min;
    let tilt_span = lim.tilt_max - lim.tilt_min;

    let mut per_candidate = Vec::with_capacity(ctx.grid.len());
    for ti in 0..ctx.grid.tilt_points {
        for pi in 0..ctx.grid.pan_points {
            let cam = CameraPosition::new(
                lim.pan_min + (pi as f64 + 0.5) * pan_span / ctx.grid.pan_points as f64,
                lim.tilt_min + (ti as f64 + 0.5) * tilt_span / ctx.grid.tilt_points as f64,
            );
            let sees_ball =
                ball_visible(&mean_pose, &cam, ctx.intrinsics, ball, ctx.ball_margin_px);
            let mut updated = *belief;
            for lm in &ctx.field.landmarks {
                if mean_pose.distance_to(&lm.position) > ctx.thresholds.get(lm.kind) {
                    continue;
                }
                if project(&mean_pose, &cam, ctx.intrinsics, &lm.position).is_none() {
                    continue;
                }
                let (d, b) = measurement(&mean_pose, lm);
                let z = LandmarkObservation {
                    landmark_id: lm.id,
                    distance: d,
                    bearing: b,
                    noise: ctx.noise.covariance_for(d),
                };
                updated = ukf_update(&updated, &z, lm, ctx.ukf)?;
            }
            per_candidate.push(CandidateEval {
                cam,
                entropy: entropy(&updated)?,
                ball_visible: sees_ball,
            });
        }
    }

    let mut best_index = None;
    for (i, c) in per_candidate.iter().enumerate() {
        if !c.ball_visible {
            continue;
        }
        match best_index {
            None => best_index = Some(i),
            Some(j) => {
                if c.entropy < per_candidate[j].entropy {
                    best_index = Some(i);
                }
            }
        }
    }
    let (best_index, fallback) = match best_index {
        Some(i) => (i, false),
        None => {
            // Maximize the cosine between the optical axis and the ball
            // direction (equivalent to minimizing the angle).
            let (st, ct) = mean_pose.theta.sin_cos();
            let dx = ball.x - mean_pose.x;
            let dy = ball.y - mean_pose.y;
            let bx = ct * dx + st * dy - ctx.intrinsics.mount_forward_offset;
            let by = -st * dx + ct * dy;
            let bz = -ctx.intrinsics.mount_height;
            let norm = (bx * bx + by * by + bz * bz).sqrt().max(1e-12);
            let mut best = 0usize;
            let mut best_cos = f64::NEG_INFINITY;
            for (i, c) in per_candidate.iter().enumerate() {
                let (sp, cp) = c.cam.pan.sin_cos();
                let (stl, ctl) = c.cam.tilt.sin_cos();
                // axis = (ctl*cp, ctl*sp, -stl), ball direction = (bx,by,bz)/norm
                let cosine = (ctl * cp * bx + ctl * sp * by - stl * bz) / norm;
                if cosine > best_cos {
                    best_cos = cosine;
                    best = i;
                }
            }
            (best, true)
        }
    };

    Ok(PlanResult {
        best_index,
        best: per_candidate[best_index].cam,
        best_entropy: per_candidate[best_index].entropy,
        fallback,
        per_candidate,
    })
}

// ---------------------------------------------------------------------------
// Network

/// Output extent of a ceil-mode strided window, by scanning start indices.
pub fn same_conv_extent(input: usize, stride: usize) -> usize {
    let mut count = 0usize;
    let mut start = 0usize;
    while start < input {
        count += 1;
        start += stride;
    }
    count
}

fn f64_params(net: &QNetwork) -> Vec<f64> {
    net.params.iter().map(|&p| p as f64).collect()
}

/// Direct (no im2col) f64 forward pass over the same architecture.
pub fn naive_forward_params(
    params: &[f64],
    shapes: &Shapes,
    cfg: &NetConfig,
    obs: &[u8],
) -> Vec<f64> {
    assert_eq!(obs.len(), cfg.input_width * cfg.input_height * cfg.stack);
    let x0: Vec<f64> = obs.iter().map(|&b| b as f64 / 255.0).collect();

    let conv = |input: &[f64], sh: &crate::nn::ConvShape, w_off: usize, b_off: usize| -> Vec<f64> {
        let mut out = vec![0.0f64; sh.out_len()];
        for oc in 0..sh.out_c {
            for oy in 0..sh.out_h {
                for ox in 0..sh.out_w {
                    let mut acc = params[b_off + oc];
                    for ic in 0..sh.in_c {
                        for ky in 0..sh.k {
                            let iy = (oy * sh.stride + ky) as isize - sh.pad_y as isize;
                            if iy < 0 || iy >= sh.in_h as isize {
                                continue;
                            }
                            for kx in 0..sh.k {
                                let ix = (ox * sh.stride + kx) as isize - sh.pad_x as isize;
                                if ix < 0 || ix >= sh.in_w as isize {
                                    continue;
                                }
                                let wi = w_off
                                    + ((oc * sh.in_c + ic) * sh.k + ky) * sh.k
                                    + kx;
                                let xi = (ic * sh.in_h + iy as usize) * sh.in_w + ix as usize;
                                acc += params[wi] * input[xi];
                            }
                        }
                    }
                    out[(oc * sh.out_h + oy) * sh.out_w + ox] = acc.max(0.0);
                }
            }
        }
        out
    };

    let s = &shapes.slices;
    let a1 = conv(&x0, &shapes.conv1, s[0].weights.0, s[0].bias.0);
    // max pool 2x2 stride 2, ceil mode
    let ps = &shapes.pool;
    let mut a2 = vec![0.0f64; ps.out_len()];
    for c in 0..ps.c {
        for oy in 0..ps.out_h {
            for ox in 0..ps.out_w {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2usize {
                    for dx in 0..2usize {
                        let iy = oy * 2 + dy;
                        let ix = ox * 2 + dx;
                        if iy < ps.in_h && ix < ps.in_w {
                            best = best.max(a1[(c * ps.in_h + iy) * ps.in_w + ix]);
                        }
                    }
                }
                a2[(c * ps.out_h + oy) * ps.out_w + ox] = best;
            }
        }
    }
    let a3 = conv(&a2, &shapes.conv2, s[1].weights.0, s[1].bias.0);
    let a4 = conv(&a3, &shapes.conv3, s[2].weights.0, s[2].bias.0);

    let mut a5 = vec![0.0f64; shapes.fc1];
    for (m, out) in a5.iter_mut().enumerate() {
        let mut acc = params[s[3].bias.0 + m];
        for (k, &x) in a4.iter().enumerate() {
            acc += params[s[3].weights.0 + m * shapes.flat + k] * x;
        }
        *out = acc.max(0.0);
    }
    let mut q = vec![0.0f64; shapes.actions];
    for (m, out) in q.iter_mut().enumerate() {
        let mut acc = params[s[4].bias.0 + m];
        for (k, &x) in a5.iter().enumerate() {
            acc += params[s[4].weights.0 + m * shapes.fc1 + k] * x;
        }
        *out = acc;
    }
    q
}

pub fn naive_q_forward(net: &QNetwork, obs: &[u8]) -> Vec<f64> {
    naive_forward_params(&f64_params(net), &net.shapes, &net.cfg, obs)
}

/// Importance-weighted mean Huber loss of a batch, on the f64 naive path.
pub fn naive_batch_loss(
    params: &[f64],
    shapes: &Shapes,
    cfg: &NetConfig,
    batch: &[(Vec<u8>, usize, f64)],
    weights: &[f64],
) -> f64 {
    let huber_f64 = |td: f64| -> f64 {
        let a = td.abs();
        if a <= 1.0 {
            0.5 * td * td
        } else {
            a - 0.5
        }
    };
    let mut loss = 0.0;
    for ((obs, action, target), w) in batch.iter().zip(weights.iter()) {
        let q = naive_forward_params(params, shapes, cfg, obs);
        let td = q[*action] - target;
        loss += w * huber_f64(td);
    }
    loss / batch.len() as f64
}

pub struct GradCheckEntry {
    pub layer: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

/// Central-finite-difference check of the batch-loss gradient, sampling
/// weights and biases from every layer. FD runs on the independent f64
/// forward; the analytic gradient is the production f32 backward pass.
pub fn gradient_check(
    net: &QNetwork,
    batch: &[(Vec<u8>, usize, f64)],
    weights: &[f64],
    samples_per_layer: usize,
    h: f64,
) -> Vec<GradCheckEntry> {
    // Analytic gradient of the importance-weighted mean Huber loss.
    let mut ws = Workspace::new(&net.shapes);
    let mut grad = vec![0.0f32; net.params.len()];
    for ((obs, action, target), w) in batch.iter().zip(weights.iter()) {
        let q = net.forward(&mut ws, obs).unwrap().to_vec();
        let td = q[*action] - *target as f32;
        let mut dq = vec![0.0f32; net.shapes.actions];
        dq[*action] = (*w as f32) * huber_grad(td) / batch.len() as f32;
        net.backward(&mut ws, &dq, &mut grad);
    }

    let params = f64_params(net);
    let mut report = Vec::new();
    for (layer, slice) in net.shapes.slices.iter().enumerate() {
        for range in [slice.weights, slice.bias] {
            let len = range.1 - range.0;
            // Probe a deterministic spread of candidate positions and keep
            // the largest-gradient ones so dead ReLU paths don't produce
            // meaningless 0-vs-0 comparisons.
            let candidates: Vec<usize> = (0..(4 * samples_per_layer).min(len))
                .map(|j| range.0 + j * len / (4 * samples_per_layer).min(len))
                .collect();
            let mut picked: Vec<usize> = candidates.clone();
            picked.sort_by(|&a, &b| {
                grad[b]
                    .abs()
                    .partial_cmp(&grad[a].abs())
                    .unwrap()
                    .then(a.cmp(&b))
            });
            picked.truncate(samples_per_layer.min(picked.len()));
            for index in picked {
                let mut plus = params.clone();
                let mut minus = params.clone();
                plus[index] += h;
                minus[index] -= h;
                let lp = naive_batch_loss(&plus, &net.shapes, &net.cfg, batch, weights);
                let lm = naive_batch_loss(&minus, &net.shapes, &net.cfg, batch, weights);
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = grad[index] as f64;
                let rel_error =
                    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                report.push(GradCheckEntry {
                    layer,
                    index,
                    analytic,
                    numeric,
                    rel_error,
                });
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Replay

/// Direct normalization of the prioritization law p_i = prio_i^alpha / sum.
pub fn per_probabilities(raw_priorities: &[f64], alpha: f64) -> Vec<f64> {
    let powered: Vec<f64> = raw_priorities.iter().map(|p| p.powf(alpha)).collect();
    let total: f64 = powered.iter().sum();
    powered.into_iter().map(|p| p / total).collect()
}
