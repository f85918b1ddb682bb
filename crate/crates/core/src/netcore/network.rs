//! Small encoder/decoder convolutional network with up to four heads.
//!
//! The encoder is a stack of stride-2 3x3 convolution stages. The landmark
//! head runs a nearest-neighbour upsampling decoder with skip connections
//! back to the first stage's resolution, then a 1x1 convolution to ten
//! heatmap channels. The scalar heads (radius, uncertainty, direct gaze)
//! read a pooled summary of the deepest stage. Each input image is
//! standardized to zero mean and unit variance before the first layer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{Param, ParamSet};
use super::tape::{Tape, Tensor, Var};
use crate::error::{HgnError, Result};
use crate::geometry::{GazeAngles, NUM_LANDMARKS};
use crate::heatmap::HeatmapStack;
use crate::scalar::Real;

/// Lower bound added after the softplus on the radius head, in pixels.
pub const RADIUS_FLOOR: f64 = 1.0;

/// Initial bias of every ReLU-activated convolution.
pub const HIDDEN_BIAS_INIT: f64 = 0.1;

/// Which output heads a network carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Heads {
    pub landmarks: bool,
    pub radius: bool,
    pub uncertainty: bool,
    pub direct_gaze: bool,
}

impl Heads {
    pub fn all() -> Self {
        Self { landmarks: true, radius: true, uncertainty: true, direct_gaze: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub input_height: usize,
    pub input_width: usize,
    /// Channel width of each stride-2 encoder stage.
    pub widths: Vec<usize>,
    /// 3x3 convolutions per stage; the first one carries the stride.
    pub stage_depth: usize,
    /// Width of the hidden layer shared by the radius and α heads (0 = none).
    pub head_hidden: usize,
    /// Global-average-pool the deepest stage before the radius and α heads;
    /// otherwise the flattened feature map is used.
    pub pool_heads: bool,
    /// Same choice for the direct gaze head. Pooling discards where the iris
    /// sits, so the default reads the flattened map.
    pub pool_gaze_head: bool,
    /// Initial value of the radius head's output, in pixels.
    pub radius_init: f64,
    /// Histogram-equalize input images before they enter the network.
    pub hist_eq: bool,
    pub heads: Heads,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            input_height: 64,
            input_width: 96,
            widths: vec![16, 32, 64, 64],
            stage_depth: 1,
            head_hidden: 0,
            pool_heads: true,
            pool_gaze_head: false,
            radius_init: 20.0,
            hist_eq: false,
            heads: Heads::all(),
        }
    }
}

fn halve(n: usize) -> usize {
    n.div_ceil(2)
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_height == 0 || self.input_width == 0 {
            return Err(HgnError::Config("input size must be positive".into()));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(HgnError::Config(format!("invalid stage widths {:?}", self.widths)));
        }
        if self.stage_depth == 0 {
            return Err(HgnError::Config("stage_depth must be >= 1".into()));
        }
        if !(self.radius_init > RADIUS_FLOOR) {
            return Err(HgnError::Config(format!("radius_init must exceed {RADIUS_FLOOR}")));
        }
        let h = self.heads;
        if !(h.landmarks || h.direct_gaze) {
            return Err(HgnError::Config("network needs a landmark or direct gaze head".into()));
        }
        let (fh, fw) = self.stage_resolution(self.widths.len() - 1);
        if fh == 0 || fw == 0 {
            return Err(HgnError::Config("input too small for the number of stages".into()));
        }
        Ok(())
    }

    /// Spatial size after encoder stage `i` (0-based).
    pub fn stage_resolution(&self, i: usize) -> (usize, usize) {
        let (mut h, mut w) = (self.input_height, self.input_width);
        for _ in 0..=i {
            h = halve(h);
            w = halve(w);
        }
        (h, w)
    }

    /// Heatmap grid `(H_hm, W_hm)`; the first stage's resolution.
    pub fn heatmap_resolution(&self) -> (usize, usize) {
        self.stage_resolution(0)
    }

    /// Input pixels per heatmap cell.
    pub fn heatmap_scale(&self) -> f64 {
        2.0
    }

    /// Converts an 8-bit image to network input in `[0, 1]`, applying the
    /// optional histogram equalization.
    pub fn prepare_input<T: Real>(&self, image: &[u8]) -> Vec<T> {
        let scale = T::lit(1.0 / 255.0);
        if self.hist_eq {
            crate::synthgen::histogram_equalize(image).iter().map(|&v| T::lit(v as f64) * scale).collect()
        } else {
            image.iter().map(|&v| T::lit(v as f64) * scale).collect()
        }
    }

    /// Same as [`prepare_input`](Self::prepare_input) for an image already in `[0, 1]`.
    pub fn prepare_unit_input<T: Real>(&self, image: &[f64]) -> Vec<T> {
        if self.hist_eq {
            self.prepare_input(&crate::synthgen::quantize(image))
        } else {
            image.iter().map(|&v| T::lit(v)).collect()
        }
    }

    fn head_features(&self, pooled: bool) -> usize {
        let last = self.widths.len() - 1;
        if pooled {
            self.widths[last]
        } else {
            let (h, w) = self.stage_resolution(last);
            self.widths[last] * h * w
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvSlot {
    w: usize,
    b: usize,
    stride: usize,
    pad: usize,
}

#[derive(Debug, Clone, Copy)]
struct LinearSlot {
    w: usize,
    b: usize,
}

#[derive(Debug, Clone)]
struct Layout {
    encoder: Vec<Vec<ConvSlot>>,
    /// decoder[i] fuses into stage i (for i < stages - 1)
    decoder: Vec<ConvSlot>,
    heatmap: Option<ConvSlot>,
    hidden: Option<LinearSlot>,
    radius: Option<LinearSlot>,
    alpha: Option<LinearSlot>,
    gaze: Option<LinearSlot>,
}

/// Parameter-free description of the network; parameters live in a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Network<T> {
    config: NetworkConfig,
    layout: Layout,
    template: ParamSet<T>,
}

/// Tape handles of the network outputs.
#[derive(Debug, Clone, Copy)]
pub struct OutputVars {
    pub heatmap_logits: Option<Var>,
    pub radius: Option<Var>,
    pub alpha: Option<Var>,
    pub gaze: Option<Var>,
}

/// Plain values of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkOutput<T> {
    pub heatmap_logits: Option<HeatmapStack<T>>,
    pub radius: Option<T>,
    pub alpha: Option<[T; 2]>,
    pub gaze: Option<GazeAngles<T>>,
}

/// Zero-mean, unit-variance copy of an image (flat images map to zeros).
fn standardize<T: Real>(image: &[T]) -> Vec<T> {
    let n = T::lit(image.len() as f64);
    let mean = image.iter().copied().sum::<T>() / n;
    let var = image.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv = T::one() / var.sqrt().max(T::lit(1e-3));
    image.iter().map(|&v| (v - mean) * inv).collect()
}

/// Inverse of softplus for positive `y`.
fn inv_softplus(y: f64) -> f64 {
    y + (-(-y).exp_m1()).ln()
}

impl<T: Real> Network<T> {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        config.validate()?;
        let mut params: Vec<Param<T>> = Vec::new();
        let conv = |params: &mut Vec<Param<T>>, name: String, cin: usize, cout: usize, k: usize, stride: usize| {
            let w = params.len();
            params.push(Param::zeros(format!("{name}.weight"), vec![cout, cin, k, k]));
            params.push(Param::zeros(format!("{name}.bias"), vec![cout]));
            ConvSlot { w, b: w + 1, stride, pad: k / 2 }
        };
        let linear = |params: &mut Vec<Param<T>>, name: &str, nin: usize, nout: usize| {
            let w = params.len();
            params.push(Param::zeros(format!("{name}.weight"), vec![nout, nin]));
            params.push(Param::zeros(format!("{name}.bias"), vec![nout]));
            LinearSlot { w, b: w + 1 }
        };

        let mut encoder = Vec::new();
        let mut cin = 1;
        for (i, &width) in config.widths.iter().enumerate() {
            let mut stage = Vec::new();
            for d in 0..config.stage_depth {
                let stride = if d == 0 { 2 } else { 1 };
                stage.push(conv(&mut params, format!("enc{i}.conv{d}"), cin, width, 3, stride));
                cin = width;
            }
            encoder.push(stage);
        }

        let stages = config.widths.len();
        let mut decoder = Vec::new();
        let mut heatmap = None;
        if config.heads.landmarks {
            let mut slots = vec![None; stages.saturating_sub(1)];
            let mut below = config.widths[stages - 1];
            for i in (0..stages.saturating_sub(1)).rev() {
                let width = config.widths[i];
                slots[i] = Some(conv(&mut params, format!("dec{i}"), below + width, width, 3, 1));
                below = width;
            }
            decoder = slots.into_iter().map(|s| s.expect("filled")).collect();
            heatmap = Some(conv(&mut params, "heatmap".into(), config.widths[0], NUM_LANDMARKS, 1, 1));
        }

        let mut hidden = None;
        let (mut radius, mut alpha, mut gaze) = (None, None, None);
        if config.heads.radius || config.heads.uncertainty {
            let mut features = config.head_features(config.pool_heads);
            if config.head_hidden > 0 {
                hidden = Some(linear(&mut params, "head.hidden", features, config.head_hidden));
                features = config.head_hidden;
            }
            if config.heads.radius {
                radius = Some(linear(&mut params, "radius", features, 1));
            }
            if config.heads.uncertainty {
                alpha = Some(linear(&mut params, "alpha", features, 2));
            }
        }
        if config.heads.direct_gaze {
            gaze = Some(linear(&mut params, "gaze", config.head_features(config.pool_gaze_head), 2));
        }

        Ok(Self {
            config,
            layout: Layout { encoder, decoder, heatmap, hidden, radius, alpha, gaze },
            template: ParamSet { params },
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Zero-valued parameter set with this network's layout.
    pub fn zero_params(&self) -> ParamSet<T> {
        self.template.clone()
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases. Hidden
    /// convolution filters are then shifted to zero mean and given a bias of
    /// [`HIDDEN_BIAS_INIT`]. Output layers of the scalar heads are scaled
    /// down by 10 so the initial predictions start near their biases; the
    /// radius bias starts at `radius_init`.
    pub fn init_params(&self, seed: u64) -> ParamSet<T> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = self.template.clone();
        let output_layers: Vec<usize> =
            [self.layout.radius, self.layout.alpha, self.layout.gaze].iter().flatten().map(|s| s.w).collect();
        for (i, p) in params.params.iter_mut().enumerate() {
            if p.shape.len() < 2 {
                continue;
            }
            let mut std = (2.0 / p.fan_in() as f64).sqrt();
            if output_layers.contains(&i) {
                std *= 0.1;
            }
            let normal = Normal::new(0.0, std).expect("finite std");
            for v in p.data.iter_mut() {
                *v = T::lit(normal.sample(&mut rng));
            }
        }
        // ReLU-activated convolutions get zero-mean filters and a small
        // positive bias: on flat image regions every unit then sits just
        // above zero instead of a random share of channels being dead everywhere.
        let hidden: Vec<ConvSlot> = self.layout.encoder.iter().flatten().chain(&self.layout.decoder).copied().collect();
        for s in hidden {
            let w = &mut params.params[s.w];
            let fan_in = w.fan_in();
            for filter in w.data.chunks_exact_mut(fan_in) {
                let mean = filter.iter().copied().sum::<T>() / T::lit(fan_in as f64);
                filter.iter_mut().for_each(|v| *v -= mean);
            }
            params.params[s.b].data.iter_mut().for_each(|v| *v = T::lit(HIDDEN_BIAS_INIT));
        }
        if let Some(r) = self.layout.radius {
            params.params[r.b].data[0] = T::lit(inv_softplus(self.config.radius_init - RADIUS_FLOOR));
        }
        params
    }

    pub fn check_params(&self, params: &ParamSet<T>) -> Result<()> {
        if !params.same_layout(&self.template) {
            return Err(HgnError::Contract("parameter set does not match network layout".into()));
        }
        Ok(())
    }

    /// Records the forward pass of one `H x W` grayscale image on `tape`.
    pub fn forward(&self, params: &ParamSet<T>, tape: &mut Tape<T>, image: &[T]) -> Result<OutputVars> {
        self.check_params(params)?;
        let (h, w) = (self.config.input_height, self.config.input_width);
        if image.len() != h * w {
            return Err(HgnError::Contract(format!(
                "image has {} pixels, network expects {h}x{w}",
                image.len()
            )));
        }
        let mut pv = Vec::with_capacity(params.len());
        for (i, p) in params.params.iter().enumerate() {
            pv.push(tape.param(i, Tensor { shape: p.shape.clone(), data: p.data.clone() })?);
        }
        let conv = |tape: &mut Tape<T>, x: Var, s: &ConvSlot| -> Result<Var> {
            let y = tape.conv2d(x, pv[s.w], pv[s.b], s.stride, s.pad)?;
            tape.relu(y)
        };

        let mut x = tape.constant(Tensor { shape: vec![1, h, w], data: standardize(image) })?;
        let mut features = Vec::with_capacity(self.layout.encoder.len());
        for stage in &self.layout.encoder {
            for s in stage {
                x = conv(tape, x, s)?;
            }
            features.push(x);
        }
        let deepest = x;

        let mut heatmap_logits = None;
        if let Some(hm) = &self.layout.heatmap {
            let mut y = deepest;
            for i in (0..self.layout.decoder.len()).rev() {
                let (sh, sw) = self.config.stage_resolution(i);
                let up = tape.upsample2(y, sh, sw)?;
                let cat = tape.concat(up, features[i])?;
                y = conv(tape, cat, &self.layout.decoder[i])?;
            }
            heatmap_logits = Some(tape.conv2d(y, pv[hm.w], pv[hm.b], hm.stride, hm.pad)?);
        }

        let (mut radius, mut alpha, mut gaze) = (None, None, None);
        let pooled = if self.config.pool_heads || self.config.pool_gaze_head {
            Some(tape.global_avg_pool(deepest)?)
        } else {
            None
        };
        let head_input = |pool: bool| if pool { pooled.expect("pooled when requested") } else { deepest };
        if self.layout.radius.is_some() || self.layout.alpha.is_some() {
            let mut f = head_input(self.config.pool_heads);
            if let Some(hd) = &self.layout.hidden {
                let z = tape.linear(f, pv[hd.w], pv[hd.b])?;
                f = tape.relu(z)?;
            }
            if let Some(r) = &self.layout.radius {
                let z = tape.linear(f, pv[r.w], pv[r.b])?;
                let sp = tape.softplus(z)?;
                radius = Some(tape.add_scalar(sp, T::lit(RADIUS_FLOOR))?);
            }
            if let Some(a) = &self.layout.alpha {
                alpha = Some(tape.linear(f, pv[a.w], pv[a.b])?);
            }
        }
        if let Some(g) = &self.layout.gaze {
            gaze = Some(tape.linear(head_input(self.config.pool_gaze_head), pv[g.w], pv[g.b])?);
        }
        Ok(OutputVars { heatmap_logits, radius, alpha, gaze })
    }

    /// Reads plain output values off the tape.
    pub fn outputs(&self, tape: &Tape<T>, vars: &OutputVars) -> Result<NetworkOutput<T>> {
        let (hh, hw) = self.config.heatmap_resolution();
        let heatmap_logits = match vars.heatmap_logits {
            Some(v) => Some(HeatmapStack::new(hh, hw, T::lit(self.config.heatmap_scale()), tape.value(v)?.data.clone())?),
            None => None,
        };
        let radius = vars.radius.map(|v| tape.scalar(v)).transpose()?;
        let pair = |v: Var| -> Result<[T; 2]> {
            let d = &tape.value(v)?.data;
            Ok([d[0], d[1]])
        };
        let alpha = vars.alpha.map(pair).transpose()?;
        let gaze = vars
            .gaze
            .map(pair)
            .transpose()?
            .map(|g| GazeAngles { theta: g[0], phi: g[1] });
        Ok(NetworkOutput { heatmap_logits, radius, alpha, gaze })
    }

    /// Forward pass without keeping the tape.
    pub fn predict(&self, params: &ParamSet<T>, image: &[T]) -> Result<NetworkOutput<T>> {
        let mut tape = Tape::new();
        let vars = self.forward(params, &mut tape, image)?;
        self.outputs(&tape, &vars)
    }

    /// Sums parameter-leaf gradients of a reverse pass into `out`.
    pub fn accumulate_grads(
        &self,
        tape: &Tape<T>,
        grads: &super::tape::Gradients<T>,
        out: &mut ParamSet<T>,
    ) -> Result<()> {
        self.check_params(out)?;
        for (slot, g) in grads.param_grads(tape) {
            for (o, &v) in out.params[slot].data.iter_mut().zip(g) {
                *o += v;
            }
        }
        Ok(())
    }
}
