//! U-shaped 1D convolutional feature extractor over the ordered samples of a ray.
//!
//! Layout of one forward pass, for `U` up/down layers and `P` point layers:
//! `P` kernel-1 layers, then `U/2` stride-2 convolutions that halve the sample axis
//! (each input is kept as a skip), then `U/2` steps of ×2 linear upsampling,
//! concatenation with the matching skip and a kernel-1 layer back to `W` channels.
//! Every layer is followed by a rectifier.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CerfError, Result};
use crate::linalg::{Mat, Real};
use crate::nn::{
    concat_cols, relu_backward_inplace, relu_inplace, split_cols, upsample_linear, upsample_linear_backward,
    ConvDown, Linear, ParamAlloc,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub width: usize,
    pub point_layers: usize,
    /// Down plus up layers; always even.
    pub updown_layers: usize,
    pub kernel: usize,
    pub depth_total: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            width: 256,
            point_layers: 4,
            updown_layers: 4,
            kernel: 3,
            depth_total: 8,
        }
    }
}

impl fmt::Display for EncoderConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "W{}U{}K{}D{}",
            self.width, self.updown_layers, self.kernel, self.depth_total
        )
    }
}

impl EncoderConfig {
    /// Parses `W{width}U{updown}K{kernel}D{depth}`; the point layers make up the rest of
    /// the depth.
    pub fn parse(grammar: &str) -> Result<EncoderConfig> {
        let bad = |msg: String| CerfError::config("encoder", msg);
        let mut fields = [0usize; 4];
        let mut rest = grammar.trim();
        for (slot, tag) in fields.iter_mut().zip(['W', 'U', 'K', 'D']) {
            rest = rest
                .strip_prefix(tag)
                .ok_or_else(|| bad(format!("`{grammar}`: expected `{tag}` (format W<w>U<u>K<k>D<d>)")))?;
            let digits = rest.chars().take_while(|c| c.is_ascii_digit()).count();
            if digits == 0 {
                return Err(bad(format!("`{grammar}`: `{tag}` needs a number")));
            }
            *slot = rest[..digits]
                .parse()
                .map_err(|_| bad(format!("`{grammar}`: number after `{tag}` out of range")))?;
            rest = &rest[digits..];
        }
        if !rest.is_empty() {
            return Err(bad(format!("`{grammar}`: trailing `{rest}`")));
        }
        let [width, updown, kernel, depth] = fields;
        let cfg = EncoderConfig {
            width,
            point_layers: depth.saturating_sub(updown),
            updown_layers: updown,
            kernel,
            depth_total: depth,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(CerfError::config("encoder", format!("{self}: {msg}")));
        if self.width == 0 {
            return bad("width must be positive");
        }
        if self.updown_layers % 2 != 0 {
            return bad("U must be even (equal numbers of down and up layers)");
        }
        if self.kernel % 2 == 0 {
            return bad("K must be odd");
        }
        if self.point_layers == 0 {
            return bad("need at least one kernel-1 layer (D must exceed U)");
        }
        if self.point_layers + self.updown_layers > self.depth_total {
            return bad("point layers plus U exceed D");
        }
        Ok(())
    }

    pub fn down_layers(&self) -> usize {
        self.updown_layers / 2
    }

    /// Samples per ray must be a multiple of this.
    pub fn length_divisor(&self) -> usize {
        1 << self.down_layers()
    }

    /// Same point layers with the down/up path removed.
    pub fn without_updown(&self) -> EncoderConfig {
        EncoderConfig {
            updown_layers: 0,
            ..*self
        }
    }
}

/// Receptive field, in samples, of one bottleneck feature.
pub fn receptive_field(config: &EncoderConfig) -> usize {
    let mut field = 1;
    let mut jump = 1;
    for _ in 0..config.down_layers() {
        field += (config.kernel - 1) * jump;
        jump *= 2;
    }
    field
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub input_dim: usize,
    pub point: Vec<Linear>,
    pub down: Vec<ConvDown>,
    pub up: Vec<Linear>,
}

/// Activations of one forward pass, kept for the backward pass.
#[derive(Debug)]
pub struct EncoderTrace<T> {
    pub batch: usize,
    pub len: usize,
    pub input: Mat<T>,
    pub point_out: Vec<Mat<T>>,
    pub down_cols: Vec<Mat<T>>,
    pub down_out: Vec<Mat<T>>,
    pub up_cat: Vec<Mat<T>>,
    pub up_out: Vec<Mat<T>>,
}

impl<T: Real> EncoderTrace<T> {
    /// Activation at resolution level `i` (0 = full length).
    fn level(&self, i: usize) -> &Mat<T> {
        if i == 0 {
            self.point_out.last().expect("at least one point layer")
        } else {
            &self.down_out[i - 1]
        }
    }

    /// Ray features `V_r`, one row per sample.
    pub fn features(&self) -> &Mat<T> {
        self.up_out.last().unwrap_or_else(|| self.level(0))
    }

    pub fn bottleneck(&self) -> &Mat<T> {
        self.level(self.down_out.len())
    }
}

impl Encoder {
    pub fn new(config: EncoderConfig, input_dim: usize, alloc: &mut ParamAlloc) -> Result<Encoder> {
        config.validate()?;
        let w = config.width;
        let point = (0..config.point_layers)
            .map(|i| Linear::new(alloc, if i == 0 { input_dim } else { w }, w))
            .collect();
        let down = (0..config.down_layers())
            .map(|_| ConvDown::new(alloc, w, w, config.kernel))
            .collect();
        let up = (0..config.down_layers()).map(|_| Linear::new(alloc, 2 * w, w)).collect();
        Ok(Encoder {
            config,
            input_dim,
            point,
            down,
            up,
        })
    }

    pub fn init<T: Real, R: rand::Rng>(&self, params: &mut [T], rng: &mut R) {
        for l in &self.point {
            l.init(params, rng);
        }
        for c in &self.down {
            c.init(params, rng);
        }
        for l in &self.up {
            l.init(params, rng);
        }
    }

    pub fn check_len(&self, len: usize) -> Result<()> {
        let div = self.config.length_divisor();
        if len == 0 || len % div != 0 {
            return Err(CerfError::Shape(format!(
                "encoder {} needs the sample count to be a positive multiple of {div}, got {len}",
                self.config
            )));
        }
        Ok(())
    }

    /// `x` holds `batch·len` rows (ray-major) of `input_dim` embeddings.
    pub fn forward<T: Real>(&self, params: &[T], x: Mat<T>, batch: usize, len: usize) -> Result<EncoderTrace<T>> {
        self.check_len(len)?;
        if x.cols != self.input_dim || x.rows != batch * len {
            return Err(CerfError::Shape(format!(
                "encoder input is {}x{}, expected {}x{}",
                x.rows,
                x.cols,
                batch * len,
                self.input_dim
            )));
        }
        let mut trace = EncoderTrace {
            batch,
            len,
            input: x,
            point_out: Vec::with_capacity(self.point.len()),
            down_cols: Vec::new(),
            down_out: Vec::new(),
            up_cat: Vec::new(),
            up_out: Vec::new(),
        };
        for (i, layer) in self.point.iter().enumerate() {
            let src = if i == 0 { &trace.input } else { &trace.point_out[i - 1] };
            let mut y = layer.forward(params, src.view());
            relu_inplace(&mut y);
            trace.point_out.push(y);
        }
        let mut cur_len = len;
        for (i, conv) in self.down.iter().enumerate() {
            let (cols, mut y) = conv.forward(params, trace.level(i), batch, cur_len);
            relu_inplace(&mut y);
            trace.down_cols.push(cols);
            trace.down_out.push(y);
            cur_len = conv.out_len(cur_len);
        }
        let levels = self.down.len();
        for (i, layer) in self.up.iter().enumerate() {
            let src = if i == 0 { trace.level(levels) } else { &trace.up_out[i - 1] };
            let up = upsample_linear(src, batch, cur_len);
            cur_len *= 2;
            let cat = concat_cols(&up, trace.level(levels - 1 - i));
            let mut y = layer.forward(params, cat.view());
            relu_inplace(&mut y);
            trace.up_cat.push(cat);
            trace.up_out.push(y);
        }
        Ok(trace)
    }

    /// Accumulates parameter gradients given `dL/dV_r`.
    pub fn backward<T: Real>(&self, params: &[T], trace: &EncoderTrace<T>, dv: Mat<T>, grads: &mut [T]) {
        let levels = self.down.len();
        let w = self.config.width;
        let batch = trace.batch;
        let mut level_grads: Vec<Option<Mat<T>>> = (0..=levels).map(|_| None).collect();
        let add = |slot: &mut Option<Mat<T>>, g: Mat<T>| match slot {
            Some(acc) => {
                for (a, v) in acc.data.iter_mut().zip(&g.data) {
                    *a += *v;
                }
            }
            None => *slot = Some(g),
        };

        let mut dh = dv;
        if levels == 0 {
            level_grads[0] = Some(dh);
        } else {
            for i in (0..self.up.len()).rev() {
                relu_backward_inplace(&trace.up_out[i], &mut dh);
                let dcat = self.up[i]
                    .backward(params, trace.up_cat[i].view(), &dh, grads, true)
                    .expect("dx requested");
                let (du, dskip) = split_cols(&dcat, w);
                add(&mut level_grads[levels - 1 - i], dskip);
                let in_len = trace.len >> (levels - i);
                dh = upsample_linear_backward(&du, batch, in_len);
            }
            add(&mut level_grads[levels], dh);
            for i in (0..levels).rev() {
                let mut g = level_grads[i + 1].take().expect("gradient reaches every level");
                relu_backward_inplace(&trace.down_out[i], &mut g);
                let in_len = trace.len >> i;
                let dx = self.down[i].backward(params, &trace.down_cols[i], &g, batch, in_len, grads);
                add(&mut level_grads[i], dx);
            }
        }

        let mut g = level_grads[0].take().expect("gradient at full resolution");
        for i in (0..self.point.len()).rev() {
            relu_backward_inplace(&trace.point_out[i], &mut g);
            let src = if i == 0 { &trace.input } else { &trace.point_out[i - 1] };
            match self.point[i].backward(params, src.view(), &g, grads, i > 0) {
                Some(dx) => g = dx,
                None => break,
            }
        }
    }
}

/// Builds an encoder with its own parameter buffer, checking the sample count up front.
pub fn init_encoder<T: Real>(
    config: EncoderConfig,
    input_dim: usize,
    samples: usize,
    seed: u64,
) -> Result<(Encoder, Vec<T>)> {
    config.validate()?;
    let div = config.length_divisor();
    if samples == 0 || samples % div != 0 {
        return Err(CerfError::config(
            "encoder",
            format!("{config}: sample count {samples} is not divisible by 2^(U/2) = {div}"),
        ));
    }
    let mut alloc = ParamAlloc::new();
    let enc = Encoder::new(config, input_dim, &mut alloc)?;
    let mut params = vec![T::zero(); alloc.len()];
    enc.init(&mut params, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok((enc, params))
}

/// Ray features of one ray: `embeddings` has one row per sample, in order.
pub fn extract_ray_features<T: Real>(encoder: &Encoder, params: &[T], embeddings: &Mat<T>) -> Result<Mat<T>> {
    let len = embeddings.rows;
    let trace = encoder.forward(params, embeddings.clone(), 1, len)?;
    Ok(trace.features().clone())
}
