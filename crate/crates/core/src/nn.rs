//! Q-network: a small convolutional net over stacked grayscale frames.
//!
//! Architecture (ceil-mode "same" padding, TensorFlow-style asymmetric
//! splits, ReLU after every trainable layer except the linear output):
//!
//! ```text
//! input  k x H x W           (pixels scaled to [0,1])
//! conv1  32 @ 5x5, stride 2
//! pool   max 2x2, stride 2
//! conv2  64 @ 3x3, stride 2
//! conv3  64 @ 3x3, stride 2
//! fc1    512
//! out    one linear unit per action
//! ```
//!
//! All parameters live in one flat `Vec<f32>` (layer order above, weights
//! then bias per layer), which keeps the optimizer, checkpointing and
//! finite-difference checks trivial. Convolutions run as im2col + matmul.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AVQN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NetConfig {
    pub input_width: usize,
    pub input_height: usize,
    /// Frame-stack depth (input channels).
    pub stack: usize,
    pub actions: usize,
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.input_height == 0 || self.stack == 0 || self.actions == 0
        {
            return Err(Error::Config(format!(
                "network config must be positive in every dimension: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Output extent of a ceil-mode strided window.
fn ceil_div(n: usize, d: usize) -> usize {
    n.div_ceil(d)
}

/// Leading padding of a "same" convolution (remainder goes to the end).
fn pad_begin(input: usize, out: usize, k: usize, stride: usize) -> usize {
    let total = ((out - 1) * stride + k).saturating_sub(input);
    total / 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvShape {
    pub in_w: usize,
    pub in_h: usize,
    pub in_c: usize,
    pub out_w: usize,
    pub out_h: usize,
    pub out_c: usize,
    pub k: usize,
    pub stride: usize,
    pub pad_x: usize,
    pub pad_y: usize,
}

impl ConvShape {
    fn new(in_w: usize, in_h: usize, in_c: usize, out_c: usize, k: usize, stride: usize) -> Self {
        let out_w = ceil_div(in_w, stride);
        let out_h = ceil_div(in_h, stride);
        Self {
            in_w,
            in_h,
            in_c,
            out_w,
            out_h,
            out_c,
            k,
            stride,
            pad_x: pad_begin(in_w, out_w, k, stride),
            pad_y: pad_begin(in_h, out_h, k, stride),
        }
    }

    pub fn weight_len(&self) -> usize {
        self.out_c * self.in_c * self.k * self.k
    }

    pub fn out_len(&self) -> usize {
        self.out_c * self.out_h * self.out_w
    }

    pub fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolShape {
    pub in_w: usize,
    pub in_h: usize,
    pub c: usize,
    pub out_w: usize,
    pub out_h: usize,
}

impl PoolShape {
    fn new(in_w: usize, in_h: usize, c: usize) -> Self {
        Self {
            in_w,
            in_h,
            c,
            out_w: ceil_div(in_w, 2),
            out_h: ceil_div(in_h, 2),
        }
    }

    pub fn out_len(&self) -> usize {
        self.c * self.out_h * self.out_w
    }
}

/// Slice of the flat parameter vector belonging to one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamSlice {
    pub weights: (usize, usize),
    pub bias: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Shapes {
    pub conv1: ConvShape,
    pub pool: PoolShape,
    pub conv2: ConvShape,
    pub conv3: ConvShape,
    pub flat: usize,
    pub fc1: usize,
    pub actions: usize,
    pub slices: [ParamSlice; 5],
    pub param_len: usize,
}

pub const FC1_UNITS: usize = 512;

impl Shapes {
    pub fn new(cfg: &NetConfig) -> Self {
        let conv1 = ConvShape::new(cfg.input_width, cfg.input_height, cfg.stack, 32, 5, 2);
        let pool = PoolShape::new(conv1.out_w, conv1.out_h, conv1.out_c);
        let conv2 = ConvShape::new(pool.out_w, pool.out_h, pool.c, 64, 3, 2);
        let conv3 = ConvShape::new(conv2.out_w, conv2.out_h, conv2.out_c, 64, 3, 2);
        let flat = conv3.out_len();
        let mut offset = 0usize;
        let mut slices = [ParamSlice {
            weights: (0, 0),
            bias: (0, 0),
        }; 5];
        let sizes = [
            (conv1.weight_len(), conv1.out_c),
            (conv2.weight_len(), conv2.out_c),
            (conv3.weight_len(), conv3.out_c),
            (FC1_UNITS * flat, FC1_UNITS),
            (cfg.actions * FC1_UNITS, cfg.actions),
        ];
        for (i, (w, b)) in sizes.into_iter().enumerate() {
            slices[i] = ParamSlice {
                weights: (offset, offset + w),
                bias: (offset + w, offset + w + b),
            };
            offset += w + b;
        }
        Self {
            conv1,
            pool,
            conv2,
            conv3,
            flat,
            fc1: FC1_UNITS,
            actions: cfg.actions,
            slices,
            param_len: offset,
        }
    }

    pub fn describe(&self, cfg: &NetConfig) -> String {
        format!(
            "in={}x{}x{};conv1=32x5x5s2same;pool=max2x2s2;conv2=64x3x3s2same;conv3=64x3x3s2same;flat={};fc1={};out={}",
            cfg.input_width, cfg.input_height, cfg.stack, self.flat, self.fc1, self.actions
        )
    }

    pub fn arch_hash(&self, cfg: &NetConfig) -> u64 {
        fnv1a(self.describe(cfg).as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Scratch buffers for one forward/backward pass; reusable across calls.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub x0: Vec<f32>,
    cols1: Vec<f32>,
    pub a1: Vec<f32>,
    pub a2: Vec<f32>,
    pool_idx: Vec<u32>,
    cols2: Vec<f32>,
    pub a3: Vec<f32>,
    cols3: Vec<f32>,
    pub a4: Vec<f32>,
    pub a5: Vec<f32>,
    pub q: Vec<f32>,
    d_hi: Vec<f32>,
    d_lo: Vec<f32>,
    d_cols: Vec<f32>,
}

impl Workspace {
    pub fn new(shapes: &Shapes) -> Self {
        let max_act = shapes
            .conv1
            .out_len()
            .max(shapes.pool.out_len())
            .max(shapes.conv2.out_len())
            .max(shapes.conv3.out_len())
            .max(shapes.fc1);
        let max_cols = (shapes.conv1.patch_len() * shapes.conv1.out_w * shapes.conv1.out_h)
            .max(shapes.conv2.patch_len() * shapes.conv2.out_w * shapes.conv2.out_h)
            .max(shapes.conv3.patch_len() * shapes.conv3.out_w * shapes.conv3.out_h);
        Self {
            x0: vec![0.0; shapes.conv1.in_len()],
            cols1: vec![0.0; shapes.conv1.patch_len() * shapes.conv1.out_w * shapes.conv1.out_h],
            a1: vec![0.0; shapes.conv1.out_len()],
            a2: vec![0.0; shapes.pool.out_len()],
            pool_idx: vec![0; shapes.pool.out_len()],
            cols2: vec![0.0; shapes.conv2.patch_len() * shapes.conv2.out_w * shapes.conv2.out_h],
            a3: vec![0.0; shapes.conv2.out_len()],
            cols3: vec![0.0; shapes.conv3.patch_len() * shapes.conv3.out_w * shapes.conv3.out_h],
            a4: vec![0.0; shapes.conv3.out_len()],
            a5: vec![0.0; shapes.fc1],
            q: vec![0.0; shapes.actions],
            d_hi: vec![0.0; max_act],
            d_lo: vec![0.0; max_act],
            d_cols: vec![0.0; max_cols],
        }
    }
}

#[derive(Clone, Debug)]
pub struct QNetwork {
    pub cfg: NetConfig,
    pub shapes: Shapes,
    pub params: Vec<f32>,
}

impl QNetwork {
    /// Fan-in-scaled uniform initialization, fully seeded.
    pub fn seeded(cfg: NetConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let shapes = Shapes::new(&cfg);
        let mut params = vec![0.0f32; shapes.param_len];
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let fan_ins = [
            shapes.conv1.patch_len(),
            shapes.conv2.patch_len(),
            shapes.conv3.patch_len(),
            shapes.flat,
            shapes.fc1,
        ];
        for (slice, fan_in) in shapes.slices.iter().zip(fan_ins) {
            let bound = 1.0 / (fan_in as f64).sqrt();
            for p in params[slice.weights.0..slice.bias.1].iter_mut() {
                *p = rng.gen_range(-bound..bound) as f32;
            }
        }
        Ok(Self { cfg, shapes, params })
    }

    pub fn zeroed(cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        let shapes = Shapes::new(&cfg);
        let params = vec![0.0f32; shapes.param_len];
        Ok(Self { cfg, shapes, params })
    }

    pub fn arch_hash(&self) -> u64 {
        self.shapes.arch_hash(&self.cfg)
    }

    pub fn input_len(&self) -> usize {
        self.cfg.input_width * self.cfg.input_height * self.cfg.stack
    }

    fn layer(&self, i: usize) -> (&[f32], &[f32]) {
        let s = &self.shapes.slices[i];
        (
            &self.params[s.weights.0..s.weights.1],
            &self.params[s.bias.0..s.bias.1],
        )
    }

    /// Forward pass on raw stacked frames. Returns the Q-vector slice held
    /// in the workspace.
    pub fn forward<'w>(&self, ws: &'w mut Workspace, obs: &[u8]) -> Result<&'w [f32]> {
        if obs.len() != self.input_len() {
            return Err(Error::Config(format!(
                "observation length {} does not match network input {} ({}x{}x{})",
                obs.len(),
                self.input_len(),
                self.cfg.input_width,
                self.cfg.input_height,
                self.cfg.stack
            )));
        }
        for (dst, &src) in ws.x0.iter_mut().zip(obs.iter()) {
            *dst = src as f32 / 255.0;
        }
        self.forward_prepared(ws);
        Ok(&ws.q)
    }

    /// Forward pass assuming `ws.x0` already holds the scaled input.
    pub fn forward_prepared(&self, ws: &mut Workspace) {
        let sh = &self.shapes;
        let (w1, b1) = self.layer(0);
        im2col(&ws.x0, &sh.conv1, &mut ws.cols1);
        conv_matmul(w1, b1, &ws.cols1, &sh.conv1, &mut ws.a1);
        relu(&mut ws.a1);
        maxpool(&ws.a1, &sh.pool, &mut ws.a2, &mut ws.pool_idx);
        let (w2, b2) = self.layer(1);
        im2col(&ws.a2, &sh.conv2, &mut ws.cols2);
        conv_matmul(w2, b2, &ws.cols2, &sh.conv2, &mut ws.a3);
        relu(&mut ws.a3);
        let (w3, b3) = self.layer(2);
        im2col(&ws.a3, &sh.conv3, &mut ws.cols3);
        conv_matmul(w3, b3, &ws.cols3, &sh.conv3, &mut ws.a4);
        relu(&mut ws.a4);
        let (w4, b4) = self.layer(3);
        fc_forward(w4, b4, &ws.a4, &mut ws.a5);
        relu(&mut ws.a5);
        let (w5, b5) = self.layer(4);
        fc_forward(w5, b5, &ws.a5, &mut ws.q);
    }

    /// Backward pass for one sample. `dq` is dLoss/dQ; gradients are
    /// accumulated into `grad` (same layout as `params`). The workspace must
    /// hold the activations of the matching forward pass.
    pub fn backward(&self, ws: &mut Workspace, dq: &[f32], grad: &mut [f32]) {
        debug_assert_eq!(dq.len(), self.shapes.actions);
        debug_assert_eq!(grad.len(), self.params.len());
        let sh = self.shapes.clone();

        // Output layer.
        let s5 = &sh.slices[4];
        let (w5, _) = self.layer(4);
        for (a, &d) in dq.iter().enumerate() {
            let row = &mut grad[s5.weights.0 + a * sh.fc1..s5.weights.0 + (a + 1) * sh.fc1];
            for (g, &x) in row.iter_mut().zip(ws.a5.iter()) {
                *g += d * x;
            }
            grad[s5.bias.0 + a] += d;
        }
        let d5 = &mut ws.d_hi[..sh.fc1];
        d5.fill(0.0);
        for (a, &d) in dq.iter().enumerate() {
            let row = &w5[a * sh.fc1..(a + 1) * sh.fc1];
            for (acc, &w) in d5.iter_mut().zip(row.iter()) {
                *acc += d * w;
            }
        }
        relu_backward_inplace(d5, &ws.a5);

        // fc1.
        let s4 = &sh.slices[3];
        let (w4, _) = self.layer(3);
        for (j, &d) in d5.iter().enumerate() {
            if d != 0.0 {
                let row = &mut grad[s4.weights.0 + j * sh.flat..s4.weights.0 + (j + 1) * sh.flat];
                for (g, &x) in row.iter_mut().zip(ws.a4.iter()) {
                    *g += d * x;
                }
            }
            grad[s4.bias.0 + j] += d;
        }
        let d4 = &mut ws.d_lo[..sh.flat];
        d4.fill(0.0);
        for (j, &d) in d5.iter().enumerate() {
            if d != 0.0 {
                let row = &w4[j * sh.flat..(j + 1) * sh.flat];
                for (acc, &w) in d4.iter_mut().zip(row.iter()) {
                    *acc += d * w;
                }
            }
        }
        relu_backward_inplace(d4, &ws.a4);

        // conv3.
        let s3 = &sh.slices[2];
        let (w3, _) = self.layer(2);
        {
            let d_out = &ws.d_lo[..sh.conv3.out_len()];
            conv_backward_weights(d_out, &ws.cols3, &sh.conv3, grad, s3);
            conv_backward_cols(d_out, w3, &sh.conv3, &mut ws.d_cols);
            let d_in = &mut ws.d_hi[..sh.conv3.in_len()];
            col2im(&ws.d_cols, &sh.conv3, d_in);
            relu_backward_inplace(d_in, &ws.a3);
        }

        // conv2.
        let s2 = &sh.slices[1];
        let (w2, _) = self.layer(1);
        {
            let d_out = &ws.d_hi[..sh.conv2.out_len()];
            conv_backward_weights(d_out, &ws.cols2, &sh.conv2, grad, s2);
            conv_backward_cols(d_out, w2, &sh.conv2, &mut ws.d_cols);
            let d_in = &mut ws.d_lo[..sh.conv2.in_len()];
            col2im(&ws.d_cols, &sh.conv2, d_in);
            // pool backward routes into the conv1 activation gradient
            let d_pool_in = &mut ws.d_hi[..sh.conv1.out_len()];
            d_pool_in.fill(0.0);
            for (o, &idx) in ws.pool_idx.iter().enumerate() {
                d_pool_in[idx as usize] += d_in[o];
            }
            relu_backward_inplace(d_pool_in, &ws.a1);
        }

        // conv1 (no input gradient needed).
        let s1 = &sh.slices[0];
        let d_out = &ws.d_hi[..sh.conv1.out_len()];
        conv_backward_weights(d_out, &ws.cols1, &sh.conv1, grad, s1);
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&CHECKPOINT_MAGIC)?;
        f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        f.write_all(&self.arch_hash().to_le_bytes())?;
        f.write_all(&(self.cfg.actions as u32).to_le_bytes())?;
        f.write_all(&(self.cfg.stack as u32).to_le_bytes())?;
        let mut blob = Vec::with_capacity(self.params.len() * 4);
        for p in &self.params {
            blob.extend_from_slice(&p.to_le_bytes());
        }
        f.write_all(&blob)?;
        Ok(())
    }

    /// Loads a checkpoint for the architecture implied by `cfg`, verifying
    /// the stored architecture hash.
    pub fn load(path: &Path, cfg: NetConfig) -> Result<Self> {
        let mut f = std::fs::File::open(path)?;
        let mut header = [0u8; 24];
        f.read_exact(&mut header).map_err(|e| {
            Error::Checkpoint(format!("{}: header too short: {e}", path.display()))
        })?;
        if header[0..4] != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!(
                "{}: bad magic {:?}",
                path.display(),
                &header[0..4]
            )));
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: unsupported format version {version}",
                path.display()
            )));
        }
        let hash = u64::from_le_bytes(header[8..16].try_into().unwrap());
        let actions = u32::from_le_bytes(header[16..20].try_into().unwrap()) as usize;
        let stack = u32::from_le_bytes(header[20..24].try_into().unwrap()) as usize;
        if actions != cfg.actions || stack != cfg.stack {
            return Err(Error::Config(format!(
                "{}: checkpoint is for actions={actions}, stack={stack}, configured {}x{}",
                path.display(),
                cfg.actions,
                cfg.stack
            )));
        }
        let mut net = Self::zeroed(cfg)?;
        if hash != net.arch_hash() {
            return Err(Error::Config(format!(
                "{}: architecture hash mismatch (checkpoint {hash:#018x}, config {:#018x})",
                path.display(),
                net.arch_hash()
            )));
        }
        let mut blob = Vec::new();
        f.read_to_end(&mut blob)?;
        if blob.len() != net.params.len() * 4 {
            return Err(Error::Checkpoint(format!(
                "{}: parameter blob is {} bytes, expected {}",
                path.display(),
                blob.len(),
                net.params.len() * 4
            )));
        }
        for (p, chunk) in net.params.iter_mut().zip(blob.chunks_exact(4)) {
            *p = f32::from_le_bytes(chunk.try_into().unwrap());
        }
        Ok(net)
    }
}

/// Greedy action: argmax of the Q-vector, ties to the lowest index.
pub fn argmax(q: &[f32]) -> usize {
    let mut best = 0usize;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if v > q[best] {
            best = i;
        }
    }
    best
}

fn relu(xs: &mut [f32]) {
    for x in xs.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Masks `d` by the ReLU activation pattern of `activated` (the layer's
/// post-ReLU output).
fn relu_backward_inplace(d: &mut [f32], activated: &[f32]) {
    for (g, &a) in d.iter_mut().zip(activated.iter()) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Gathers padded input patches: `cols[p * n + o]` is patch element `p` of
/// output position `o` (row-major over out_h x out_w).
fn im2col(input: &[f32], sh: &ConvShape, cols: &mut [f32]) {
    let n = sh.out_w * sh.out_h;
    cols.fill(0.0);
    for c in 0..sh.in_c {
        let plane = &input[c * sh.in_h * sh.in_w..(c + 1) * sh.in_h * sh.in_w];
        for ky in 0..sh.k {
            for kx in 0..sh.k {
                let p = (c * sh.k + ky) * sh.k + kx;
                let row = &mut cols[p * n..(p + 1) * n];
                for oy in 0..sh.out_h {
                    let iy = (oy * sh.stride + ky) as isize - sh.pad_y as isize;
                    if iy < 0 || iy >= sh.in_h as isize {
                        continue;
                    }
                    let in_row = &plane[iy as usize * sh.in_w..(iy as usize + 1) * sh.in_w];
                    let out_row = &mut row[oy * sh.out_w..(oy + 1) * sh.out_w];
                    for (ox, slot) in out_row.iter_mut().enumerate() {
                        let ix = (ox * sh.stride + kx) as isize - sh.pad_x as isize;
                        if ix >= 0 && ix < sh.in_w as isize {
                            *slot = in_row[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add of column gradients back into the input layout.
fn col2im(cols: &[f32], sh: &ConvShape, d_input: &mut [f32]) {
    let n = sh.out_w * sh.out_h;
    d_input.fill(0.0);
    for c in 0..sh.in_c {
        let plane = &mut d_input[c * sh.in_h * sh.in_w..(c + 1) * sh.in_h * sh.in_w];
        for ky in 0..sh.k {
            for kx in 0..sh.k {
                let p = (c * sh.k + ky) * sh.k + kx;
                let row = &cols[p * n..(p + 1) * n];
                for oy in 0..sh.out_h {
                    let iy = (oy * sh.stride + ky) as isize - sh.pad_y as isize;
                    if iy < 0 || iy >= sh.in_h as isize {
                        continue;
                    }
                    let in_row =
                        &mut plane[iy as usize * sh.in_w..(iy as usize + 1) * sh.in_w];
                    let out_row = &row[oy * sh.out_w..(oy + 1) * sh.out_w];
                    for (ox, &g) in out_row.iter().enumerate() {
                        let ix = (ox * sh.stride + kx) as isize - sh.pad_x as isize;
                        if ix >= 0 && ix < sh.in_w as isize {
                            in_row[ix as usize] += g;
                        }
                    }
                }
            }
        }
    }
}

/// out[m, :] = bias[m] + weights[m, :] @ cols
fn conv_matmul(weights: &[f32], bias: &[f32], cols: &[f32], sh: &ConvShape, out: &mut [f32]) {
    let n = sh.out_w * sh.out_h;
    let kk = sh.patch_len();
    for m in 0..sh.out_c {
        let row = &mut out[m * n..(m + 1) * n];
        row.fill(bias[m]);
        let wrow = &weights[m * kk..(m + 1) * kk];
        for (p, &w) in wrow.iter().enumerate() {
            if w != 0.0 {
                let crow = &cols[p * n..(p + 1) * n];
                for (o, &c) in row.iter_mut().zip(crow.iter()) {
                    *o += w * c;
                }
            }
        }
    }
}

/// grad_w[m, p] += d_out[m, :] . cols[p, :]
fn conv_backward_weights(
    d_out: &[f32],
    cols: &[f32],
    sh: &ConvShape,
    grad: &mut [f32],
    slice: &ParamSlice,
) {
    let n = sh.out_w * sh.out_h;
    let kk = sh.patch_len();
    for m in 0..sh.out_c {
        let drow = &d_out[m * n..(m + 1) * n];
        let gw = &mut grad[slice.weights.0 + m * kk..slice.weights.0 + (m + 1) * kk];
        for (p, g) in gw.iter_mut().enumerate() {
            let crow = &cols[p * n..(p + 1) * n];
            let mut acc = 0.0f32;
            for (&d, &c) in drow.iter().zip(crow.iter()) {
                acc += d * c;
            }
            *g += acc;
        }
        let mut acc = 0.0f32;
        for &d in drow {
            acc += d;
        }
        grad[slice.bias.0 + m] += acc;
    }
}

/// d_cols[p, :] = sum_m weights[m, p] * d_out[m, :]
fn conv_backward_cols(d_out: &[f32], weights: &[f32], sh: &ConvShape, d_cols: &mut [f32]) {
    let n = sh.out_w * sh.out_h;
    let kk = sh.patch_len();
    d_cols[..kk * n].fill(0.0);
    for m in 0..sh.out_c {
        let drow = &d_out[m * n..(m + 1) * n];
        let wrow = &weights[m * kk..(m + 1) * kk];
        for (p, &w) in wrow.iter().enumerate() {
            if w != 0.0 {
                let crow = &mut d_cols[p * n..(p + 1) * n];
                for (c, &d) in crow.iter_mut().zip(drow.iter()) {
                    *c += w * d;
                }
            }
        }
    }
}

/// Ceil-mode 2x2 stride-2 max pooling; `idx` records the winning input
/// offset per output cell (first maximum wins, deterministically).
fn maxpool(input: &[f32], sh: &PoolShape, out: &mut [f32], idx: &mut [u32]) {
    for c in 0..sh.c {
        let plane = &input[c * sh.in_h * sh.in_w..(c + 1) * sh.in_h * sh.in_w];
        let base = c * sh.in_h * sh.in_w;
        for oy in 0..sh.out_h {
            for ox in 0..sh.out_w {
                let mut best = f32::NEG_INFINITY;
                let mut best_i = 0usize;
                for dy in 0..2usize {
                    let iy = oy * 2 + dy;
                    if iy >= sh.in_h {
                        continue;
                    }
                    for dx in 0..2usize {
                        let ix = ox * 2 + dx;
                        if ix >= sh.in_w {
                            continue;
                        }
                        let i = iy * sh.in_w + ix;
                        if plane[i] > best {
                            best = plane[i];
                            best_i = i;
                        }
                    }
                }
                let o = (c * sh.out_h + oy) * sh.out_w + ox;
                out[o] = best;
                idx[o] = (base + best_i) as u32;
            }
        }
    }
}

fn fc_forward(weights: &[f32], bias: &[f32], input: &[f32], out: &mut [f32]) {
    let k = input.len();
    for (m, o) in out.iter_mut().enumerate() {
        let row = &weights[m * k..(m + 1) * k];
        let mut acc = bias[m];
        for (&w, &x) in row.iter().zip(input.iter()) {
            acc += w * x;
        }
        *o = acc;
    }
}

/// Adam with bias correction over the flat parameter vector.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f32, param_len: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_len],
            v: vec![0.0; param_len],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grad: &[f32]) {
        self.t += 1;
        let t = self.t as f64;
        let bc1 = (1.0 - (self.beta1 as f64).powf(t)) as f32;
        let bc2 = (1.0 - (self.beta2 as f64).powf(t)) as f32;
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Huber loss with unit threshold.
pub fn huber(td: f32) -> f32 {
    let a = td.abs();
    if a <= 1.0 {
        0.5 * td * td
    } else {
        a - 0.5
    }
}

pub fn huber_grad(td: f32) -> f32 {
    td.clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn cfg(w: usize, h: usize, stack: usize, actions: usize) -> NetConfig {
        NetConfig {
            input_width: w,
            input_height: h,
            stack,
            actions,
        }
    }

    #[test]
    fn shape_chain_for_full_resolution_input() {
        let sh = Shapes::new(&cfg(160, 120, 1, 4));
        assert_eq!((sh.conv1.out_w, sh.conv1.out_h, sh.conv1.out_c), (80, 60, 32));
        assert_eq!((sh.pool.out_w, sh.pool.out_h), (40, 30));
        assert_eq!((sh.conv2.out_w, sh.conv2.out_h, sh.conv2.out_c), (20, 15, 64));
        assert_eq!((sh.conv3.out_w, sh.conv3.out_h, sh.conv3.out_c), (10, 8, 64));
        assert_eq!(sh.flat, 5120);
        assert_eq!(sh.fc1, 512);
    }

    #[test]
    fn shape_chain_matches_index_scan_oracle() {
        for (w, h) in [(160, 120), (80, 60), (33, 17), (7, 5)] {
            let sh = Shapes::new(&cfg(w, h, 2, 4));
            for conv in [&sh.conv1, &sh.conv2, &sh.conv3] {
                assert_eq!(conv.out_w, oracle::same_conv_extent(conv.in_w, conv.stride));
                assert_eq!(conv.out_h, oracle::same_conv_extent(conv.in_h, conv.stride));
            }
            assert_eq!(sh.pool.out_w, oracle::same_conv_extent(sh.pool.in_w, 2));
            assert_eq!(sh.pool.out_h, oracle::same_conv_extent(sh.pool.in_h, 2));
        }
    }

    #[test]
    fn param_count_is_a_function_of_input_and_actions() {
        let sh = Shapes::new(&cfg(160, 120, 1, 4));
        let conv1 = 32 * 1 * 5 * 5 + 32;
        let conv2 = 64 * 32 * 3 * 3 + 64;
        let conv3 = 64 * 64 * 3 * 3 + 64;
        let fc1 = 512 * 5120 + 512;
        let out = 4 * 512 + 4;
        assert_eq!(sh.param_len, conv1 + conv2 + conv3 + fc1 + out);
    }

    #[test]
    fn zero_network_outputs_zero_q_values() {
        let net = QNetwork::zeroed(cfg(32, 24, 1, 4)).unwrap();
        let mut ws = Workspace::new(&net.shapes);
        let obs = vec![137u8; net.input_len()];
        let q = net.forward(&mut ws, &obs).unwrap();
        assert!(q.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_naive_f64_convolution_oracle() {
        let net = QNetwork::seeded(cfg(20, 14, 2, 4), 99).unwrap();
        let mut ws = Workspace::new(&net.shapes);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let obs: Vec<u8> = (0..net.input_len()).map(|_| rng.gen()).collect();
        let q = net.forward(&mut ws, &obs).unwrap().to_vec();
        let naive = oracle::naive_q_forward(&net, &obs);
        for (a, b) in q.iter().zip(naive.iter()) {
            assert!(
                ((*a as f64) - b).abs() < 1e-4,
                "forward mismatch: {a} vs {b}"
            );
        }
    }

    #[test]
    fn golden_forward_vector() {
        // Frozen from `oracle::naive_q_forward` (f64 direct convolution) for
        // this seeded network and input; the fast path must agree.
        let net = QNetwork::seeded(cfg(16, 12, 1, 4), 4242).unwrap();
        let mut ws = Workspace::new(&net.shapes);
        let obs: Vec<u8> = (0..net.input_len())
            .map(|i| ((i * 37 + 11) % 256) as u8)
            .collect();
        let q = net.forward(&mut ws, &obs).unwrap();
        let golden = [
            0.023001603283972057,
            -0.02821431392759579,
            -0.01631244315859734,
            0.0012466107131239754,
        ];
        for (a, b) in q.iter().zip(golden.iter()) {
            assert!(((*a as f64) - b).abs() < 1e-5, "golden mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn argmax_breaks_ties_toward_the_lowest_index() {
        assert_eq!(argmax(&[1.0, 1.0, 0.5]), 0);
        assert_eq!(argmax(&[0.1, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[-1.0, -0.5, -0.2]), 2);
    }

    #[test]
    fn checkpoint_round_trip_and_hash_guard() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = QNetwork::seeded(cfg(16, 12, 1, 4), 7).unwrap();
        net.save(&path).unwrap();
        let loaded = QNetwork::load(&path, net.cfg).unwrap();
        assert_eq!(net.params, loaded.params);
        // A different input geometry has a different architecture hash.
        let err = QNetwork::load(&path, cfg(20, 12, 1, 4)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = QNetwork::load(&path, cfg(16, 12, 2, 4)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn gradients_match_finite_differences_on_every_layer() {
        let net = QNetwork::seeded(cfg(16, 12, 1, 3), 31).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let batch: Vec<(Vec<u8>, usize, f64)> = (0..3)
            .map(|_| {
                let obs: Vec<u8> = (0..net.input_len()).map(|_| rng.gen()).collect();
                let action = rng.gen_range(0..3);
                let target = rng.gen_range(-2.0..2.0);
                (obs, action, target)
            })
            .collect();
        let weights = vec![1.0f64, 0.7, 1.3];
        let report = oracle::gradient_check(&net, &batch, &weights, 6, 1e-5);
        for entry in &report {
            assert!(
                entry.rel_error < 1e-4,
                "layer {} index {}: analytic {} vs fd {} (rel {})",
                entry.layer,
                entry.index,
                entry.analytic,
                entry.numeric,
                entry.rel_error
            );
        }
        assert!(report.len() >= 10, "expected samples from every layer");
    }
}
