use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::IntervalAnnotation;
use crate::tensor::{Dims4, Tensor4};

/// Frames kept free between consecutive actions.
const MIN_GAP: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SynthClass {
    /// A horizontal bar sweeping down the frame.
    VerticalMotion,
    /// A vertical bar sweeping across the frame, left to right.
    HorizontalMotion,
    /// A stationary blob whose brightness alternates frame to frame.
    TemporalFlicker,
    /// A stationary random texture patch.
    StaticTexture,
}

impl SynthClass {
    pub const ALL: [SynthClass; 4] = [
        SynthClass::VerticalMotion,
        SynthClass::HorizontalMotion,
        SynthClass::TemporalFlicker,
        SynthClass::StaticTexture,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            SynthClass::VerticalMotion => "vertical-motion",
            SynthClass::HorizontalMotion => "horizontal-motion",
            SynthClass::TemporalFlicker => "temporal-flicker",
            SynthClass::StaticTexture => "static-texture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub clips: usize,
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub min_action_len: usize,
    pub max_action_len: usize,
    pub max_actions: usize,
    /// Standard deviation of the per-pixel Gaussian background noise.
    pub noise: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            clips: 64,
            frames: 64,
            height: 16,
            width: 16,
            channels: 1,
            min_action_len: 8,
            max_action_len: 16,
            max_actions: 3,
            noise: 0.1,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clips == 0 || self.frames == 0 || self.height == 0 || self.width == 0 || self.channels == 0 {
            return Err(Error::Config("synthetic dataset dimensions must be positive".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config(format!(
                "spatial size {}x{} is too small to render moving bars (need at least 8x8)",
                self.height, self.width
            )));
        }
        if self.min_action_len < 4
            || self.min_action_len > self.max_action_len
            || 2 * self.max_action_len > self.frames
        {
            return Err(Error::Config(format!(
                "action length range [{}, {}] must lie within [4, T/2 = {}]",
                self.min_action_len,
                self.max_action_len,
                self.frames / 2
            )));
        }
        if self.max_actions == 0 {
            return Err(Error::Config("max_actions must be at least 1".into()));
        }
        let worst = self.max_actions * self.max_action_len + (self.max_actions + 1) * MIN_GAP;
        if worst > self.frames {
            return Err(Error::Config(format!(
                "cannot pack {} actions of up to {} frames into {} frames",
                self.max_actions, self.max_action_len, self.frames
            )));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise amplitude {} must be non-negative", self.noise)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub clips: Vec<Tensor4>,
    /// Ground truth; `video_id` is the clip name from [`SyntheticDataset::clip_id`].
    pub annotations: Vec<IntervalAnnotation>,
}

impl SyntheticDataset {
    pub fn clip_id(index: usize) -> String {
        format!("clip{index:04}")
    }

    pub fn annotations_for(&self, index: usize) -> Vec<&IntervalAnnotation> {
        let id = Self::clip_id(index);
        self.annotations.iter().filter(|a| a.video_id == id).collect()
    }
}

/// Binary per-frame targets, one row of `frames` values per class.
pub fn frame_targets(annotations: &[&IntervalAnnotation], frames: usize) -> Vec<f64> {
    let k = SynthClass::ALL.len();
    let mut out = vec![0.0; k * frames];
    for a in annotations {
        let Some(class) = SynthClass::ALL.iter().position(|c| c.name() == a.label) else {
            continue;
        };
        for t in a.start as usize..=(a.end as usize).min(frames - 1) {
            out[class * frames + t] = 1.0;
        }
    }
    out
}

fn gaussian(d: f64, sigma: f64) -> f64 {
    (-0.5 * d * d / (sigma * sigma)).exp()
}

struct Placed {
    class: SynthClass,
    start: usize,
    len: usize,
}

fn place_actions(cfg: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<Placed> {
    let n = rng.random_range(1..=cfg.max_actions);
    let lens: Vec<usize> = (0..n)
        .map(|_| rng.random_range(cfg.min_action_len..=cfg.max_action_len))
        .collect();
    let used: usize = lens.iter().sum::<usize>() + (n - 1) * MIN_GAP;
    let free = cfg.frames - used;
    let mut cuts: Vec<usize> = (0..n).map(|_| rng.random_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut offset = 0;
    let mut out = Vec::with_capacity(n);
    for (i, len) in lens.into_iter().enumerate() {
        let class = *SynthClass::ALL.choose(rng).expect("non-empty");
        out.push(Placed {
            class,
            start: cuts[i] + offset,
            len,
        });
        offset += len + MIN_GAP;
    }
    out
}

fn render(clip: &mut Tensor4, a: &Placed, rng: &mut ChaCha8Rng) {
    let d = clip.dims();
    let (hh, ww) = (d.h as f64, d.w as f64);
    let along = |tau: usize, extent: f64| {
        let (from, to) = (2.0, extent - 3.0);
        from + (to - from) * tau as f64 / (a.len - 1).max(1) as f64
    };
    match a.class {
        SynthClass::VerticalMotion | SynthClass::HorizontalMotion => {
            let vertical = a.class == SynthClass::VerticalMotion;
            // Cross-axis position of the bar, fixed for the whole action.
            let cross_extent = if vertical { ww } else { hh };
            let cross = rng.random_range(3.0..cross_extent - 3.0);
            for tau in 0..a.len {
                let pos = along(tau, if vertical { hh } else { ww });
                for c in 0..d.c {
                    for h in 0..d.h {
                        for w in 0..d.w {
                            let (dm, dc) = if vertical {
                                (h as f64 - pos, w as f64 - cross)
                            } else {
                                (w as f64 - pos, h as f64 - cross)
                            };
                            let v = gaussian(dm, 1.0) * gaussian(dc, 4.0);
                            let i = clip.index(c, a.start + tau, h, w);
                            clip.data_mut()[i] += v;
                        }
                    }
                }
            }
        }
        SynthClass::TemporalFlicker => {
            let ch = rng.random_range(3.0..hh - 3.0);
            let cw = rng.random_range(3.0..ww - 3.0);
            for tau in 0..a.len {
                let amp = if tau % 2 == 0 { 1.0 } else { 0.25 };
                for c in 0..d.c {
                    for h in 0..d.h {
                        for w in 0..d.w {
                            let v = amp * gaussian(h as f64 - ch, 1.5) * gaussian(w as f64 - cw, 1.5);
                            let i = clip.index(c, a.start + tau, h, w);
                            clip.data_mut()[i] += v;
                        }
                    }
                }
            }
        }
        SynthClass::StaticTexture => {
            const PATCH: usize = 5;
            let h0 = rng.random_range(0..=d.h - PATCH);
            let w0 = rng.random_range(0..=d.w - PATCH);
            let texture: Vec<f64> = (0..PATCH * PATCH).map(|_| rng.random_range(0.3..1.0)).collect();
            for tau in 0..a.len {
                for c in 0..d.c {
                    for (k, &v) in texture.iter().enumerate() {
                        let i = clip.index(c, a.start + tau, h0 + k / PATCH, w0 + k % PATCH);
                        clip.data_mut()[i] += v;
                    }
                }
            }
        }
    }
}

/// Deterministic under `cfg.seed`.
pub fn generate_dataset(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dims = Dims4::new(cfg.channels, cfg.frames, cfg.height, cfg.width);
    let noise = Normal::new(0.0, cfg.noise.max(f64::MIN_POSITIVE)).expect("valid normal");
    let mut clips = Vec::with_capacity(cfg.clips);
    let mut annotations = Vec::new();
    for i in 0..cfg.clips {
        let mut clip = Tensor4::zeros(dims);
        if cfg.noise > 0.0 {
            for v in clip.data_mut() {
                *v = noise.sample(&mut rng);
            }
        }
        for a in place_actions(cfg, &mut rng) {
            render(&mut clip, &a, &mut rng);
            annotations.push(IntervalAnnotation::new(
                SyntheticDataset::clip_id(i),
                a.start as u64,
                (a.start + a.len - 1) as u64,
                a.class.name(),
            ));
        }
        clips.push(clip);
    }
    Ok(SyntheticDataset { clips, annotations })
}
