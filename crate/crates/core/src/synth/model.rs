use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapter::{Adapter, AdapterConfig, Variant};
use crate::error::{Error, Result};
use crate::gradcheck::Parameterized;
use crate::tensor::{ops, Dims4, ParamTensor, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    /// Stem width at the adapter insertion point.
    pub channels: usize,
    pub bottleneck: usize,
    /// Stem output width fed to the head.
    pub features: usize,
    pub classes: usize,
    /// Side of the square average pool in the first stem layer.
    pub pool: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: 1,
            channels: 12,
            bottleneck: 8,
            features: 16,
            classes: 4,
            pool: 4,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.in_channels, self.channels, self.bottleneck, self.features, self.classes, self.pool]
            .contains(&0)
        {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn adapter(&self, variant: Variant, alpha: f64) -> AdapterConfig {
        AdapterConfig::new(self.channels, self.bottleneck, variant).with_alpha(alpha)
    }
}

/// Two frozen random layers: pool + pointwise fc + activation, then pointwise
/// fc + activation. The adapter sits between them.
///
/// Spatially pooled outputs are standardized per feature with a fixed shift
/// and scale, set once by [`FrozenStem::calibrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenStem {
    pub pool: usize,
    pub w1: ParamTensor,
    pub b1: ParamTensor,
    pub w2: ParamTensor,
    pub b2: ParamTensor,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl FrozenStem {
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            pool: cfg.pool,
            w1: ParamTensor::random_normal(
                &[cfg.in_channels, cfg.channels],
                1.0 / (cfg.in_channels as f64).sqrt(),
                rng,
            ),
            b1: ParamTensor::random_normal(&[cfg.channels], 0.1, rng),
            w2: ParamTensor::random_normal(
                &[cfg.channels, cfg.features],
                1.0 / (cfg.channels as f64).sqrt(),
                rng,
            ),
            b2: ParamTensor::random_normal(&[cfg.features], 0.1, rng),
            shift: vec![0.0; cfg.features],
            scale: vec![1.0; cfg.features],
        })
    }

    /// Sets the pooled-feature standardization from stage-1 features of a
    /// dataset, as seen without an adapter.
    pub fn calibrate(&mut self, features: &[Tensor4]) -> Result<()> {
        let f = self.w2.shape()[1];
        let (mut sum, mut sq, mut n) = (vec![0.0; f], vec![0.0; f], 0usize);
        for x in features {
            let pooled = spatial_mean(&self.stage2(x)?.1);
            for (k, (s, q)) in sum.iter_mut().zip(&mut sq).enumerate() {
                for &v in pooled.channel(k) {
                    *s += v;
                    *q += v * v;
                }
            }
            n += pooled.dims().t;
        }
        if n == 0 {
            return Err(Error::Config("cannot calibrate on an empty feature set".into()));
        }
        for k in 0..f {
            let mean = sum[k] / n as f64;
            let var = (sq[k] / n as f64 - mean * mean).max(0.0);
            self.shift[k] = mean;
            self.scale[k] = if var > 1e-12 { 1.0 / var.sqrt() } else { 1.0 };
        }
        Ok(())
    }

    fn standardize(&self, pooled: &mut Tensor4) {
        for k in 0..pooled.channels() {
            let (m, s) = (self.shift[k], self.scale[k]);
            for v in pooled.channel_mut(k) {
                *v = (*v - m) * s;
            }
        }
    }

    pub fn stage1(&self, clip: &Tensor4) -> Result<Tensor4> {
        let pooled = avg_pool(clip, self.pool)?;
        Ok(ops::activation(&ops::fc_channel(&pooled, &self.w1, &self.b1)?))
    }

    /// Returns the activation input and output of the second layer.
    fn stage2(&self, x: &Tensor4) -> Result<(Tensor4, Tensor4)> {
        let pre = ops::fc_channel(x, &self.w2, &self.b2)?;
        let out = ops::activation(&pre);
        Ok((pre, out))
    }

    /// Order-sensitive checksum of all weights, used to prove they stay frozen.
    pub fn checksum(&self) -> u64 {
        let (w1, b1, w2, b2) = (&self.w1.value, &self.b1.value, &self.w2.value, &self.b2.value);
        super::fnv64([w1, b1, w2, b2, &self.shift, &self.scale].into_iter().flatten().copied())
    }
}

fn avg_pool(x: &Tensor4, p: usize) -> Result<Tensor4> {
    let d = x.dims();
    if d.h % p != 0 || d.w % p != 0 {
        return Err(Error::shape("avg_pool", d, format!("spatial size divisible by {p}")));
    }
    let inv = 1.0 / (p * p) as f64;
    Ok(Tensor4::from_fn(Dims4::new(d.c, d.t, d.h / p, d.w / p), |c, t, h, w| {
        let mut s = 0.0;
        for i in 0..p {
            for j in 0..p {
                s += x.get(c, t, h * p + i, w * p + j);
            }
        }
        s * inv
    }))
}

fn spatial_mean(x: &Tensor4) -> Tensor4 {
    let d = x.dims();
    let plane = d.h * d.w;
    let inv = 1.0 / plane as f64;
    let mut out = Tensor4::zeros(Dims4::new(d.c, d.t, 1, 1));
    for c in 0..d.c {
        let src = x.channel(c);
        for (t, o) in out.channel_mut(c).iter_mut().enumerate() {
            *o = src[t * plane..(t + 1) * plane].iter().sum::<f64>() * inv;
        }
    }
    out
}

fn spatial_mean_backward(grad: &Tensor4, like: Dims4) -> Tensor4 {
    let plane = like.h * like.w;
    let inv = 1.0 / plane as f64;
    let mut out = Tensor4::zeros(like);
    for c in 0..like.c {
        let g = grad.channel(c);
        for (i, o) in out.channel_mut(c).iter_mut().enumerate() {
            *o = g[i / plane] * inv;
        }
    }
    out
}

/// Per-frame linear classifier over pooled stem features.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub w: ParamTensor,
    pub b: ParamTensor,
}

impl Head {
    /// Small random weights; biases start at a 0.1 prior probability.
    pub fn init<R: Rng + ?Sized>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut b = ParamTensor::zeros(&[cfg.classes]);
        b.fill(-(9.0f64).ln());
        Self {
            w: ParamTensor::random_normal(&[cfg.features, cfg.classes], 0.01, rng),
            b,
        }
    }
}

#[derive(Debug, Clone)]
struct Cache {
    adapted_dims: Dims4,
    pre2: Tensor4,
    pooled: Tensor4,
}

/// Frozen stem, optional adapter and trainable head.
///
/// [`Model::forward`] takes stem stage-1 features, which are fixed for a given
/// stem and can be computed once per clip with [`FrozenStem::stage1`].
#[derive(Debug, Clone)]
pub struct Model {
    pub stem: FrozenStem,
    pub adapter: Option<Adapter>,
    pub head: Head,
    cache: Option<Cache>,
}

impl Model {
    pub fn new(stem: FrozenStem, adapter: Option<Adapter>, head: Head) -> Result<Self> {
        if let Some(a) = &adapter {
            if a.config().channels != stem.w1.shape()[1] {
                return Err(Error::shape(
                    "model",
                    format!("adapter channels {}", a.config().channels),
                    format!("stem channels {}", stem.w1.shape()[1]),
                ));
            }
        }
        if head.w.shape()[0] != stem.w2.shape()[1] {
            return Err(Error::shape(
                "model",
                format!("head input {}", head.w.shape()[0]),
                format!("stem features {}", stem.w2.shape()[1]),
            ));
        }
        Ok(Self {
            stem,
            adapter,
            head,
            cache: None,
        })
    }

    pub fn classes(&self) -> usize {
        self.head.b.len()
    }

    /// Logits shaped `[classes, T, 1, 1]`.
    pub fn forward(&self, features: &Tensor4) -> Result<Tensor4> {
        let adapted = match &self.adapter {
            Some(a) => a.forward(features)?,
            None => features.clone(),
        };
        let (_, out) = self.stem.stage2(&adapted)?;
        let mut pooled = spatial_mean(&out);
        self.stem.standardize(&mut pooled);
        ops::fc_channel(&pooled, &self.head.w, &self.head.b)
    }

    pub fn forward_clip(&self, clip: &Tensor4) -> Result<Tensor4> {
        self.forward(&self.stem.stage1(clip)?)
    }

    pub fn forward_train(&mut self, features: &Tensor4) -> Result<Tensor4> {
        let adapted = match &mut self.adapter {
            Some(a) => a.forward_train(features)?,
            None => features.clone(),
        };
        let (pre2, out) = self.stem.stage2(&adapted)?;
        let mut pooled = spatial_mean(&out);
        self.stem.standardize(&mut pooled);
        let logits = ops::fc_channel(&pooled, &self.head.w, &self.head.b)?;
        self.cache = Some(Cache {
            adapted_dims: adapted.dims(),
            pre2,
            pooled,
        });
        Ok(logits)
    }

    /// Accumulates head and adapter gradients. Stem weights receive none.
    pub fn backward(&mut self, grad_logits: &Tensor4) -> Result<()> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::State("backward called before forward_train".into()))?;
        let mut g_pooled =
            ops::fc_channel_backward(&cache.pooled, &mut self.head.w, &mut self.head.b, grad_logits)?;
        for k in 0..g_pooled.channels() {
            let s = self.stem.scale[k];
            for g in g_pooled.channel_mut(k) {
                *g *= s;
            }
        }
        let g_out = spatial_mean_backward(&g_pooled, cache.pre2.dims());
        let g_pre2 = ops::activation_backward(&cache.pre2, &g_out)?;
        if let Some(a) = &mut self.adapter {
            let g_adapted = ops::fc_channel_input_grad(&self.stem.w2, &g_pre2)?;
            debug_assert_eq!(g_adapted.dims(), cache.adapted_dims);
            a.backward(&g_adapted)?;
        }
        Ok(())
    }
}

impl Parameterized for Model {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &ParamTensor)) {
        if let Some(a) = &self.adapter {
            a.for_each_param(f);
        }
        f("head.weight", &self.head.w);
        f("head.bias", &self.head.b);
    }

    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut ParamTensor)) {
        if let Some(a) = &mut self.adapter {
            a.for_each_param_mut(f);
        }
        f("head.weight", &mut self.head.w);
        f("head.bias", &mut self.head.b);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::gradcheck;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn build(variant: Option<Variant>, stem_seed: u64) -> Model {
        let cfg = ModelConfig::default();
        let stem = FrozenStem::init(&cfg, &mut ChaCha8Rng::seed_from_u64(stem_seed)).unwrap();
        let head = Head::init(&cfg, &mut ChaCha8Rng::seed_from_u64(7));
        let adapter = variant.map(|v| {
            Adapter::init(cfg.adapter(v, 0.5), &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
        });
        Model::new(stem, adapter, head).unwrap()
    }

    fn clip() -> Tensor4 {
        Tensor4::random_normal(Dims4::new(1, 6, 8, 8), 1.0, &mut ChaCha8Rng::seed_from_u64(3))
    }

    #[test]
    fn logits_shape() {
        let m = build(Some(Variant::ConvTHW), 0);
        let y = m.forward_clip(&clip()).unwrap();
        assert_eq!(y.dims(), Dims4::new(4, 6, 1, 1));
    }

    #[test]
    fn zero_beta_matches_plain_model() {
        let x = clip();
        let plain = build(None, 0).forward_clip(&x).unwrap();
        for v in Variant::ALL {
            assert_eq!(build(Some(v), 0).forward_clip(&x).unwrap(), plain);
        }
    }

    #[test]
    fn stem_seed_changes_logits() {
        let x = clip();
        assert_ne!(
            build(None, 0).forward_clip(&x).unwrap(),
            build(None, 1).forward_clip(&x).unwrap()
        );
    }

    #[test]
    fn pool_rejects_odd_sizes() {
        let m = build(None, 0);
        let x = Tensor4::zeros(Dims4::new(1, 2, 5, 8));
        assert!(matches!(m.forward_clip(&x), Err(Error::Shape { .. })));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut m = build(Some(Variant::ConvTHW), 0);
        m.adapter.as_mut().unwrap().params.beta.fill(0.7);
        let feats = m.stem.stage1(&clip()).unwrap();
        let weights = Tensor4::random_normal(Dims4::new(4, 6, 1, 1), 1.0, &mut ChaCha8Rng::seed_from_u64(5));
        let r = gradcheck(
            &mut m,
            1e-5,
            |m| Ok(m.forward(&feats)?.dot(&weights)),
            |m| {
                let y = m.forward_train(&feats)?;
                m.backward(&weights)?;
                Ok(y.dot(&weights))
            },
        )
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
