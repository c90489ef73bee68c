use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{frame_targets, SynthClass, SyntheticDataset};
use super::decode::decode_intervals;
use super::loss::{focal_loss, sigmoid};
use super::model::{FrozenStem, Model};
use super::optim::Adam;
use crate::error::{Error, Result};
use crate::eval::Proposal;
use crate::gradcheck::Parameterized;
use crate::tensor::Tensor4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub gamma: f64,
    /// Focal weight on positives; negatives get `1 - focal_weight`.
    pub focal_weight: f64,
    pub threshold: f64,
    pub merge_gap: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 30,
            batch_size: 4,
            gamma: 2.0,
            focal_weight: 0.25,
            threshold: 0.3,
            merge_gap: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// `lr = 0` is accepted so a run can be checked for inertness.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be non-negative", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return Err(Error::Config("Adam betas must lie in [0, 1) and eps be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("focal gamma {} must be non-negative", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.focal_weight) {
            return Err(Error::Config(format!("focal weight {} must lie in [0, 1]", self.focal_weight)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

/// Stage-1 stem features and frame targets for every clip of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    pub ids: Vec<String>,
    pub features: Vec<Tensor4>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainSet {
    pub fn new(stem: &FrozenStem, data: &SyntheticDataset) -> Result<Self> {
        let mut set = TrainSet {
            ids: Vec::with_capacity(data.clips.len()),
            features: Vec::with_capacity(data.clips.len()),
            targets: Vec::with_capacity(data.clips.len()),
        };
        for (i, clip) in data.clips.iter().enumerate() {
            set.ids.push(SyntheticDataset::clip_id(i));
            set.features.push(stem.stage1(clip)?);
            set.targets.push(frame_targets(&data.annotations_for(i), clip.dims().t));
        }
        Ok(set)
    }

    /// Checksum of every feature value and target, in clip order.
    pub fn checksum(&self) -> u64 {
        let feats = self.features.iter().flat_map(|f| f.data().iter().copied());
        super::fnv64(feats.chain(self.targets.iter().flatten().copied()))
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean loss over the set before the first update.
    pub initial_loss: f64,
    /// Mean training loss of each epoch.
    pub epoch_losses: Vec<f64>,
}

fn clip_loss(model: &Model, set: &TrainSet, i: usize, cfg: &TrainConfig) -> Result<f64> {
    let logits = model.forward(&set.features[i])?;
    Ok(focal_loss(logits.data(), &set.targets[i], cfg.gamma, cfg.focal_weight).loss)
}

/// Trains the adapter and head of `model` in place. Deterministic under
/// `cfg.seed`; stem weights are never written.
pub fn train(model: &mut Model, set: &TrainSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut initial = 0.0;
    for i in 0..set.len() {
        initial += clip_loss(model, set, i, cfg)?;
    }
    let initial_loss = initial / set.len() as f64;
    if !initial_loss.is_finite() {
        return Err(Error::NonFinite {
            context: "initial loss".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Adam::new(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut order: Vec<usize> = (0..set.len()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            model.zero_grad();
            let inv = 1.0 / batch.len() as f64;
            let mut batch_loss = 0.0;
            for &i in batch {
                let logits = model.forward_train(&set.features[i])?;
                let fl = focal_loss(logits.data(), &set.targets[i], cfg.gamma, cfg.focal_weight);
                batch_loss += fl.loss;
                let grad = Tensor4::from_vec(logits.dims(), fl.grad.iter().map(|g| g * inv).collect())?;
                model.backward(&grad)?;
            }
            if !batch_loss.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("training loss at epoch {epoch}, batch {b}"),
                });
            }
            total += batch_loss;
            opt.step(model);
        }
        let mean = total / set.len() as f64;
        log::debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(TrainOutcome {
        initial_loss,
        epoch_losses,
    })
}

/// Per-class frame probabilities of one clip.
pub fn frame_probabilities(model: &Model, features: &Tensor4) -> Result<Vec<Vec<f64>>> {
    let logits = model.forward(features)?;
    let t = logits.dims().t;
    Ok((0..model.classes())
        .map(|k| logits.channel(k)[..t].iter().map(|&z| sigmoid(z)).collect())
        .collect())
}

/// Decoded proposals for every clip of `set`.
pub fn predict_proposals(model: &Model, set: &TrainSet, threshold: f64, merge_gap: usize) -> Result<Vec<Proposal>> {
    let labels: Vec<&str> = SynthClass::ALL.iter().map(|c| c.name()).collect();
    let mut out = Vec::new();
    for (id, f) in set.ids.iter().zip(&set.features) {
        let probs = frame_probabilities(model, f)?;
        out.extend(decode_intervals(&probs, id, &labels[..probs.len()], threshold, merge_gap));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{Adapter, Variant};
    use crate::synth::data::{generate_dataset, SyntheticConfig};
    use crate::synth::model::{Head, ModelConfig};

    fn setup(clips: usize) -> (Model, TrainSet) {
        let mcfg = ModelConfig::default();
        let stem = FrozenStem::init(&mcfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let data = generate_dataset(&SyntheticConfig {
            clips,
            ..Default::default()
        })
        .unwrap();
        let set = TrainSet::new(&stem, &data).unwrap();
        let adapter = Adapter::init(mcfg.adapter(Variant::ConvTHW, 0.5), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let head = Head::init(&mcfg, &mut ChaCha8Rng::seed_from_u64(3));
        (Model::new(stem, Some(adapter), head).unwrap(), set)
    }

    fn snapshot(m: &Model) -> Vec<f64> {
        let mut v = Vec::new();
        m.for_each_param(&mut |_, p| v.extend_from_slice(&p.value));
        v
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let (mut m, set) = setup(4);
        let before = snapshot(&m);
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 2,
            ..Default::default()
        };
        train(&mut m, &set, &cfg).unwrap();
        assert_eq!(snapshot(&m), before);
    }

    #[test]
    fn loss_decreases_and_stem_is_frozen() {
        let (mut m, set) = setup(32);
        let checksum = m.stem.checksum();
        let cfg = TrainConfig {
            epochs: 5,
            ..Default::default()
        };
        let out = train(&mut m, &set, &cfg).unwrap();
        assert!(out.epoch_losses.last().unwrap() < &out.initial_loss, "{out:?}");
        assert_eq!(m.stem.checksum(), checksum);
    }

    #[test]
    fn deterministic() {
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        let (mut a, set) = setup(6);
        let (mut b, _) = setup(6);
        assert_eq!(train(&mut a, &set, &cfg).unwrap(), train(&mut b, &set, &cfg).unwrap());
        assert_eq!(snapshot(&a), snapshot(&b));
    }

    #[test]
    fn non_finite_loss_reports_position() {
        let (mut m, set) = setup(4);
        m.head.w.fill(f64::NAN);
        let err = train(&mut m, &set, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
        let (mut m, set) = setup(4);
        let cfg = TrainConfig {
            lr: 1e300,
            epochs: 3,
            ..Default::default()
        };
        let err = train(&mut m, &set, &cfg).unwrap_err().to_string();
        assert!(err.contains("epoch"), "{err}");
    }

    #[test]
    fn bad_config_rejected() {
        let (mut m, set) = setup(2);
        for cfg in [
            TrainConfig { lr: -1.0, ..Default::default() },
            TrainConfig { threshold: 1.0, ..Default::default() },
            TrainConfig { gamma: -0.5, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
        ] {
            assert!(matches!(train(&mut m, &set, &cfg), Err(Error::Config(_))));
        }
    }
}
