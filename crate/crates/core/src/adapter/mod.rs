//! Bottleneck adapters: the temporal-only TIA baseline and the decoupled
//! spatio-temporal adapter (DSTA) together with its ablation ladder.
//!
//! DSTA computes, at every (t, h, w) position,
//!
//! ```text
//! x̄  = gelu(W_downᵀ x)
//! x̂  = W_midᵀ DST(x̄) + x̄
//! x' = β · W_upᵀ x̂ + x
//! ```
//!
//! where `DST(x̄) = [Σ_axis conv_axis(x̄₁); x̄₂] + dwconv_t(x̄)` and `x̄₁` is the
//! first `round(α·N)` bottleneck channels. TIA drops `W_mid` and the branches:
//! `x' = β · W_upᵀ dwconv_t(gelu(W_downᵀ x)) + x`.

mod checkpoint;
mod count;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use count::{count_flops, count_params, fc_flops, FlopCount, ParamCount};

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradcheck::Parameterized;
use crate::tensor::ops;
use crate::tensor::{Axis, ParamTensor, Tensor4};

/// Which adapter design is instantiated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Temporal-informative adapter: down, temporal dwconv, up.
    #[serde(rename = "tia")]
    Tia,
    /// DST with the temporal branch only.
    #[serde(rename = "t")]
    ConvT,
    /// DST with temporal and height branches.
    #[serde(rename = "th")]
    ConvTH,
    /// Full DSTA: temporal, height and width branches.
    #[serde(rename = "thw")]
    ConvTHW,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Tia, Variant::ConvT, Variant::ConvTH, Variant::ConvTHW];

    pub fn branches(self) -> &'static [Axis] {
        match self {
            Variant::Tia => &[],
            Variant::ConvT => &[Axis::Time],
            Variant::ConvTH => &[Axis::Time, Axis::Height],
            Variant::ConvTHW => &[Axis::Time, Axis::Height, Axis::Width],
        }
    }

    pub fn has_dst(self) -> bool {
        self != Variant::Tia
    }

    pub fn short_name(self) -> &'static str {
        match self {
            Variant::Tia => "tia",
            Variant::ConvT => "t",
            Variant::ConvTH => "th",
            Variant::ConvTHW => "thw",
        }
    }

    /// Row label as used in ablation tables.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Tia => "Baseline(TIA)",
            Variant::ConvT => "+Conv T",
            Variant::ConvTH => "+Conv TH",
            Variant::ConvTHW => "+Conv THW(DSTA)",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tia" => Ok(Variant::Tia),
            "t" | "convt" | "conv_t" => Ok(Variant::ConvT),
            "th" | "convth" | "conv_th" => Ok(Variant::ConvTH),
            "thw" | "convthw" | "conv_thw" | "dsta" => Ok(Variant::ConvTHW),
            other => Err(Error::Config(format!(
                "unknown adapter variant {other:?} (expected tia, t, th or thw)"
            ))),
        }
    }
}

fn axis_tag(axis: Axis) -> &'static str {
    match axis {
        Axis::Time => "t",
        Axis::Height => "h",
        Axis::Width => "w",
    }
}

/// Hyperparameters of one adapter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    /// External channel width C.
    pub channels: usize,
    /// Bottleneck width N, `0 < N < C`.
    pub bottleneck: usize,
    /// Fraction of bottleneck channels routed through the directional branches.
    pub alpha: f64,
    /// Temporal dwconv kernel length (odd).
    pub kernel: usize,
    /// Temporal dwconv group count; must divide N.
    pub groups: usize,
    pub beta_init: f64,
    pub variant: Variant,
}

impl AdapterConfig {
    /// Defaults: `k = 3`, `m = N`, `α = 0.5`, `β = 0`.
    pub fn new(channels: usize, bottleneck: usize, variant: Variant) -> Self {
        Self {
            channels,
            bottleneck,
            alpha: 0.5,
            kernel: 3,
            groups: bottleneck,
            beta_init: 0.0,
            variant,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta_init = beta;
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.bottleneck && self.bottleneck < self.channels) {
            return Err(Error::Config(format!(
                "bottleneck width {} must satisfy 0 < N < C = {}",
                self.bottleneck, self.channels
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "split ratio {} is outside [0, 1]",
                self.alpha
            )));
        }
        if !self.beta_init.is_finite() {
            return Err(Error::Config("initial scale must be finite".into()));
        }
        ops::dwconv_kernel_shape(self.bottleneck, self.kernel, self.groups)?;
        Ok(())
    }

    /// Channels routed to the directional branches, `round(α·N)`.
    pub fn routed(&self) -> usize {
        ops::routed_channels(self.alpha, self.bottleneck).unwrap_or(0)
    }

    pub fn dw_kernel_shape(&self) -> [usize; 3] {
        [self.bottleneck, self.bottleneck / self.groups.max(1), self.kernel]
    }
}

/// A depthwise width-3 convolution along one axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub axis: Axis,
    pub kernel: ParamTensor,
    pub bias: ParamTensor,
}

/// All learnable tensors of one adapter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterParams {
    pub down_w: ParamTensor,
    pub down_b: ParamTensor,
    /// Absent for TIA.
    pub mid: Option<(ParamTensor, ParamTensor)>,
    pub dw_kernel: ParamTensor,
    pub dw_bias: ParamTensor,
    /// One entry per active axis, in time, height, width order.
    pub branches: Vec<Branch>,
    pub up_w: ParamTensor,
    pub up_b: ParamTensor,
    pub beta: ParamTensor,
}

impl AdapterParams {
    /// All weights and biases zero, `β = beta_init`.
    pub fn zeros(cfg: &AdapterConfig) -> Result<Self> {
        cfg.validate()?;
        let (c, n, r) = (cfg.channels, cfg.bottleneck, cfg.routed());
        Ok(Self {
            down_w: ParamTensor::zeros(&[c, n]),
            down_b: ParamTensor::zeros(&[n]),
            mid: cfg
                .variant
                .has_dst()
                .then(|| (ParamTensor::zeros(&[n, n]), ParamTensor::zeros(&[n]))),
            dw_kernel: ParamTensor::zeros(&cfg.dw_kernel_shape()),
            dw_bias: ParamTensor::zeros(&[n]),
            branches: cfg
                .variant
                .branches()
                .iter()
                .map(|&axis| Branch {
                    axis,
                    kernel: ParamTensor::zeros(&[r, 3]),
                    bias: ParamTensor::zeros(&[r]),
                })
                .collect(),
            up_w: ParamTensor::zeros(&[n, c]),
            up_b: ParamTensor::zeros(&[c]),
            beta: ParamTensor::scalar(cfg.beta_init),
        })
    }

    /// Fan-in scaled Gaussian weights, zero biases, `β = beta_init`.
    pub fn init<R: Rng + ?Sized>(cfg: &AdapterConfig, rng: &mut R) -> Result<Self> {
        let mut p = Self::zeros(cfg)?;
        let (c, n) = (cfg.channels as f64, cfg.bottleneck as f64);
        p.down_w = ParamTensor::random_normal(p.down_w.shape(), c.powf(-0.5), rng);
        if let Some((w, _)) = &mut p.mid {
            *w = ParamTensor::random_normal(w.shape(), n.powf(-0.5), rng);
        }
        let fan = (cfg.kernel * cfg.dw_kernel_shape()[1]) as f64;
        p.dw_kernel = ParamTensor::random_normal(p.dw_kernel.shape(), fan.powf(-0.5), rng);
        for b in &mut p.branches {
            b.kernel = ParamTensor::random_normal(b.kernel.shape(), 3f64.powf(-0.5), rng);
        }
        p.up_w = ParamTensor::random_normal(p.up_w.shape(), n.powf(-0.5), rng);
        Ok(p)
    }

    /// Checks every tensor against the shapes `cfg` implies.
    pub fn check(&self, cfg: &AdapterConfig) -> Result<()> {
        let reference = Self::zeros(cfg)?;
        let mut expected = Vec::new();
        reference.for_each_param(&mut |name, p| expected.push((name.to_owned(), p.shape().to_vec())));
        let mut actual = Vec::new();
        self.for_each_param(&mut |name, p| actual.push((name.to_owned(), p.shape().to_vec())));
        if expected != actual {
            return Err(Error::shape(
                "AdapterParams",
                format!("{actual:?}"),
                format!("{expected:?} for variant {}", cfg.variant),
            ));
        }
        Ok(())
    }

    /// Sum of element counts over every instantiated tensor.
    pub fn element_count(&self) -> usize {
        self.num_scalars()
    }
}

impl Parameterized for AdapterParams {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &ParamTensor)) {
        f("down.weight", &self.down_w);
        f("down.bias", &self.down_b);
        if let Some((w, b)) = &self.mid {
            f("mid.weight", w);
            f("mid.bias", b);
        }
        f("dwconv.weight", &self.dw_kernel);
        f("dwconv.bias", &self.dw_bias);
        for br in &self.branches {
            let tag = axis_tag(br.axis);
            f(&format!("branch_{tag}.weight"), &br.kernel);
            f(&format!("branch_{tag}.bias"), &br.bias);
        }
        f("up.weight", &self.up_w);
        f("up.bias", &self.up_b);
        f("beta", &self.beta);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut ParamTensor)) {
        f("down.weight", &mut self.down_w);
        f("down.bias", &mut self.down_b);
        if let Some((w, b)) = &mut self.mid {
            f("mid.weight", w);
            f("mid.bias", b);
        }
        f("dwconv.weight", &mut self.dw_kernel);
        f("dwconv.bias", &mut self.dw_bias);
        for br in &mut self.branches {
            let tag = axis_tag(br.axis);
            f(&format!("branch_{tag}.weight"), &mut br.kernel);
            f(&format!("branch_{tag}.bias"), &mut br.bias);
        }
        f("up.weight", &mut self.up_w);
        f("up.bias", &mut self.up_b);
        f("beta", &mut self.beta);
    }
}

/// Intermediates kept by a recording forward pass.
#[derive(Debug, Clone)]
struct Cache {
    x_dims: crate::tensor::Dims4,
    /// Adapter input.
    input: Tensor4,
    /// Pre-activation down projection.
    pre_act: Tensor4,
    /// x̄.
    act: Tensor4,
    /// x̄₁, present when the DST stream exists.
    routed: Option<Tensor4>,
    /// DST output, input to W_mid.
    dst_out: Option<Tensor4>,
    /// Input to W_up (x̂ for DSTA, dwconv output for TIA).
    up_in: Tensor4,
    /// W_upᵀ x̂ before scaling.
    up_out: Tensor4,
}

/// DST block on bottleneck features `x̄` of N channels.
pub fn dst_forward(act: &Tensor4, params: &AdapterParams, cfg: &AdapterConfig) -> Result<Tensor4> {
    dst_forward_inner(act, params, cfg).map(|(out, _)| out)
}

fn dst_forward_inner(
    act: &Tensor4,
    params: &AdapterParams,
    cfg: &AdapterConfig,
) -> Result<(Tensor4, Tensor4)> {
    if !cfg.variant.has_dst() {
        return Err(Error::Config("the TIA variant has no DST stream".into()));
    }
    if act.channels() != cfg.bottleneck {
        return Err(Error::shape(
            "dst_forward",
            format!("input {}", act.dims()),
            format!("bottleneck width {}", cfg.bottleneck),
        ));
    }
    let (routed, kept) = ops::split_at(act, cfg.routed());
    let mut fused = Tensor4::zeros(routed.dims());
    for br in &params.branches {
        let y = ops::conv_axis_depthwise(&routed, br.axis, &br.kernel, &br.bias)?;
        fused.add_assign(&y)?;
    }
    let mut out = ops::concat_channels(&fused, &kept)?;
    let temporal = ops::dwconv_temporal(act, &params.dw_kernel, &params.dw_bias, cfg.kernel, cfg.groups)?;
    out.add_assign(&temporal)?;
    Ok((out, routed))
}

fn forward_impl(
    x: &Tensor4,
    params: &AdapterParams,
    cfg: &AdapterConfig,
    record: bool,
) -> Result<(Tensor4, Option<Cache>)> {
    if x.channels() != cfg.channels {
        return Err(Error::shape(
            "adapter forward",
            format!("input {}", x.dims()),
            format!("adapter width {}", cfg.channels),
        ));
    }
    let pre_act = ops::fc_channel(x, &params.down_w, &params.down_b)?;
    let act = ops::activation(&pre_act);
    let (up_in, routed, dst_out) = if cfg.variant.has_dst() {
        let (dst, routed) = dst_forward_inner(&act, params, cfg)?;
        let (mid_w, mid_b) = params
            .mid
            .as_ref()
            .ok_or_else(|| Error::Config("DST variant without W_mid".into()))?;
        let mut hat = ops::fc_channel(&dst, mid_w, mid_b)?;
        hat.add_assign(&act)?;
        (hat, Some(routed), Some(dst))
    } else {
        let y = ops::dwconv_temporal(&act, &params.dw_kernel, &params.dw_bias, cfg.kernel, cfg.groups)?;
        (y, None, None)
    };
    let up_out = ops::fc_channel(&up_in, &params.up_w, &params.up_b)?;
    let mut out = ops::scale(&up_out, &params.beta)?;
    out.add_assign(x)?;
    let cache = record.then(|| Cache {
        x_dims: x.dims(),
        input: x.clone(),
        pre_act,
        act,
        routed,
        dst_out,
        up_in,
        up_out,
    });
    Ok((out, cache))
}

/// Full DSTA (or any DST ablation variant) forward pass.
pub fn dsta_forward(x: &Tensor4, params: &AdapterParams, cfg: &AdapterConfig) -> Result<Tensor4> {
    if !cfg.variant.has_dst() {
        return Err(Error::Config(
            "dsta_forward needs a DST variant; use tia_forward for TIA".into(),
        ));
    }
    forward_impl(x, params, cfg, false).map(|(y, _)| y)
}

/// TIA baseline forward pass.
pub fn tia_forward(x: &Tensor4, params: &AdapterParams, cfg: &AdapterConfig) -> Result<Tensor4> {
    if cfg.variant != Variant::Tia {
        return Err(Error::Config(format!(
            "tia_forward called with variant {}",
            cfg.variant
        )));
    }
    forward_impl(x, params, cfg, false).map(|(y, _)| y)
}

/// An adapter instance: configuration, parameters and the record of the last
/// training forward pass.
#[derive(Debug, Clone)]
pub struct Adapter {
    config: AdapterConfig,
    pub params: AdapterParams,
    cache: Option<Cache>,
}

impl Adapter {
    pub fn new(config: AdapterConfig, params: AdapterParams) -> Result<Self> {
        config.validate()?;
        params.check(&config)?;
        Ok(Self {
            config,
            params,
            cache: None,
        })
    }

    pub fn init<R: Rng + ?Sized>(config: AdapterConfig, rng: &mut R) -> Result<Self> {
        let params = AdapterParams::init(&config, rng)?;
        Self::new(config, params)
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    /// Inference forward pass; records nothing.
    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        forward_impl(x, &self.params, &self.config, false).map(|(y, _)| y)
    }

    /// Forward pass that records what [`Adapter::backward`] needs.
    pub fn forward_train(&mut self, x: &Tensor4) -> Result<Tensor4> {
        let (y, cache) = forward_impl(x, &self.params, &self.config, true)?;
        self.cache = cache;
        Ok(y)
    }

    /// Accumulates parameter gradients for the recorded forward pass and returns
    /// the input gradient. Consumes the record.
    pub fn backward(&mut self, grad_out: &Tensor4) -> Result<Tensor4> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called before forward_train".into()))?;
        if grad_out.dims() != cache.x_dims {
            return Err(Error::shape("adapter backward", grad_out.dims(), cache.x_dims));
        }
        let cfg = self.config;
        let p = &mut self.params;

        // x' = β·u + x
        let mut grad_x = grad_out.clone();
        let grad_up_out = ops::scale_backward(&cache.up_out, &mut p.beta, grad_out)?;
        let grad_up_in = ops::fc_channel_backward(&cache.up_in, &mut p.up_w, &mut p.up_b, &grad_up_out)?;

        let grad_act = if cfg.variant.has_dst() {
            let dst_out = cache.dst_out.as_ref().expect("DST cache");
            let routed = cache.routed.as_ref().expect("DST cache");
            let (mid_w, mid_b) = p.mid.as_mut().expect("checked at construction");
            // x̂ = W_midᵀ d + x̄
            let grad_dst = ops::fc_channel_backward(dst_out, mid_w, mid_b, &grad_up_in)?;
            let mut grad_act = grad_up_in;
            // d = [Σ branches(x̄₁); x̄₂] + dwconv(x̄)
            let g_dw = ops::dwconv_temporal_backward(
                &cache.act,
                &mut p.dw_kernel,
                &mut p.dw_bias,
                cfg.kernel,
                cfg.groups,
                &grad_dst,
            )?;
            grad_act.add_assign(&g_dw)?;
            let (grad_fused, grad_kept) = ops::split_at(&grad_dst, routed.channels());
            let mut grad_routed = Tensor4::zeros(routed.dims());
            for br in &mut p.branches {
                let g = ops::conv_axis_depthwise_backward(
                    routed,
                    br.axis,
                    &mut br.kernel,
                    &mut br.bias,
                    &grad_fused,
                )?;
                grad_routed.add_assign(&g)?;
            }
            grad_act.add_assign(&ops::concat_channels(&grad_routed, &grad_kept)?)?;
            grad_act
        } else {
            ops::dwconv_temporal_backward(
                &cache.act,
                &mut p.dw_kernel,
                &mut p.dw_bias,
                cfg.kernel,
                cfg.groups,
                &grad_up_in,
            )?
        };
        let grad_pre = ops::activation_backward(&cache.pre_act, &grad_act)?;
        let g = ops::fc_channel_backward(&cache.input, &mut p.down_w, &mut p.down_b, &grad_pre)?;
        grad_x.add_assign(&g)?;
        Ok(grad_x)
    }

    pub fn param_count(&self) -> usize {
        self.params.element_count()
    }
}

impl Parameterized for Adapter {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &ParamTensor)) {
        self.params.for_each_param(f)
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut ParamTensor)) {
        self.params.for_each_param_mut(f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims4;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("THW".parse::<Variant>().unwrap(), Variant::ConvTHW);
        assert_eq!("tia".parse::<Variant>().unwrap(), Variant::Tia);
        assert!("xyz".parse::<Variant>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(AdapterConfig::new(4, 4, Variant::ConvT).validate().is_err());
        assert!(AdapterConfig::new(4, 0, Variant::ConvT).validate().is_err());
        assert!(AdapterConfig::new(4, 2, Variant::ConvT).with_alpha(1.2).validate().is_err());
        let mut c = AdapterConfig::new(6, 4, Variant::ConvT);
        c.groups = 3;
        assert!(c.validate().is_err());
        c.groups = 2;
        c.kernel = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn tia_rejects_dst_entry_points() {
        let cfg = AdapterConfig::new(4, 2, Variant::Tia);
        let p = AdapterParams::zeros(&cfg).unwrap();
        let x = Tensor4::zeros(Dims4::new(4, 2, 1, 1));
        assert!(dsta_forward(&x, &p, &cfg).is_err());
        assert!(dst_forward(&Tensor4::zeros(Dims4::new(2, 2, 1, 1)), &p, &cfg).is_err());
        let cfg_t = cfg.with_variant(Variant::ConvT);
        let p_t = AdapterParams::zeros(&cfg_t).unwrap();
        assert!(matches!(tia_forward(&x, &p_t, &cfg_t), Err(Error::Config(_))));
    }

    #[test]
    fn zero_dst_keeps_identity_channels() {
        let cfg = AdapterConfig::new(8, 4, Variant::ConvTHW);
        let p = AdapterParams::zeros(&cfg).unwrap();
        let act = Tensor4::random_normal(Dims4::new(4, 3, 2, 2), 1.0, &mut rng());
        let y = dst_forward(&act, &p, &cfg).unwrap();
        for c in 0..4 {
            if c < 2 {
                assert!(y.channel(c).iter().all(|&v| v == 0.0));
            } else {
                assert_eq!(y.channel(c), act.channel(c));
            }
        }
    }

    #[test]
    fn dst_alpha_zero_is_input_plus_dwconv() {
        let cfg = AdapterConfig::new(8, 4, Variant::ConvTHW).with_alpha(0.0);
        let p = AdapterParams::init(&cfg, &mut rng()).unwrap();
        let act = Tensor4::random_normal(Dims4::new(4, 5, 2, 3), 1.0, &mut rng());
        let y = dst_forward(&act, &p, &cfg).unwrap();
        let dw = ops::dwconv_temporal(&act, &p.dw_kernel, &p.dw_bias, 3, 4).unwrap();
        assert_eq!(y, ops::add(&act, &dw).unwrap());
    }

    #[test]
    fn dst_hand_example() {
        let cfg = AdapterConfig {
            channels: 2,
            bottleneck: 1,
            alpha: 1.0,
            kernel: 3,
            groups: 1,
            beta_init: 1.0,
            variant: Variant::ConvTHW,
        };
        let mut p = AdapterParams::zeros(&cfg).unwrap();
        p.branches[0].kernel.fill(1.0);
        let act = Tensor4::from_vec(Dims4::new(1, 3, 1, 1), vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(dst_forward(&act, &p, &cfg).unwrap().data(), &[3.0, 6.0, 5.0]);
    }

    #[test]
    fn shape_contract() {
        let cfg = AdapterConfig::new(8, 4, Variant::ConvTHW).with_beta(1.0);
        let a = Adapter::init(cfg, &mut rng()).unwrap();
        let x = Tensor4::random_normal(Dims4::new(8, 16, 4, 4), 1.0, &mut rng());
        assert_eq!(a.forward(&x).unwrap().dims(), x.dims());
        assert!(a.forward(&Tensor4::zeros(Dims4::new(6, 2, 2, 2))).is_err());
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let mut a = Adapter::init(AdapterConfig::new(4, 2, Variant::ConvT), &mut rng()).unwrap();
        let g = Tensor4::zeros(Dims4::new(4, 2, 2, 2));
        assert!(matches!(a.backward(&g), Err(Error::State(_))));
        a.forward_train(&g).unwrap();
        a.backward(&g).unwrap();
        assert!(matches!(a.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn params_present_per_variant() {
        for v in Variant::ALL {
            let p = AdapterParams::zeros(&AdapterConfig::new(4, 2, v)).unwrap();
            assert_eq!(p.mid.is_some(), v.has_dst());
            assert_eq!(p.branches.len(), v.branches().len());
        }
    }
}
