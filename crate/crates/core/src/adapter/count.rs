//! Closed-form parameter and FLOP accounting.
//!
//! FLOP convention: every multiply-accumulate counts 2, every bias add 1, and
//! activations, residual adds and the β scale count 1 per element. Branch
//! outputs accumulate into one shared buffer, so fusing the directional
//! branches costs nothing beyond their own MACs and bias adds.

use serde::{Deserialize, Serialize};

use super::AdapterConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ParamCount {
    pub down: u64,
    pub mid: u64,
    pub up: u64,
    pub dwconv: u64,
    pub branches: u64,
    pub scale: u64,
    pub total: u64,
}

impl ParamCount {
    pub fn components_sum(&self) -> u64 {
        self.down + self.mid + self.up + self.dwconv + self.branches + self.scale
    }
}

pub fn count_params(cfg: &AdapterConfig) -> Result<ParamCount> {
    cfg.validate()?;
    let (c, n, k, m) = (
        cfg.channels as u64,
        cfg.bottleneck as u64,
        cfg.kernel as u64,
        cfg.groups as u64,
    );
    let r = cfg.routed() as u64;
    let mut pc = ParamCount {
        down: c * n + n,
        mid: if cfg.variant.has_dst() { n * n + n } else { 0 },
        up: n * c + c,
        dwconv: k * n * (n / m) + n,
        branches: cfg.variant.branches().len() as u64 * (3 * r + r),
        scale: 1,
        total: 0,
    };
    pc.total = pc.components_sum();
    Ok(pc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FlopCount {
    pub frames: u64,
    pub height: u64,
    pub width: u64,
    pub down: u64,
    pub activation: u64,
    pub dwconv: u64,
    pub branches: u64,
    pub mid: u64,
    pub up: u64,
    pub scale: u64,
    pub residual: u64,
    pub total: u64,
}

impl FlopCount {
    pub fn components(&self) -> [(&'static str, u64); 8] {
        [
            ("down", self.down),
            ("activation", self.activation),
            ("dwconv", self.dwconv),
            ("branches", self.branches),
            ("mid", self.mid),
            ("up", self.up),
            ("scale", self.scale),
            ("residual", self.residual),
        ]
    }

    pub fn components_sum(&self) -> u64 {
        self.components().iter().map(|(_, v)| v).sum()
    }
}

/// FLOPs of a channel-wise FC over `positions` positions, bias included.
pub fn fc_flops(c_in: u64, c_out: u64, positions: u64) -> u64 {
    2 * c_in * c_out * positions + c_out * positions
}

pub fn count_flops(cfg: &AdapterConfig, frames: usize, height: usize, width: usize) -> Result<FlopCount> {
    cfg.validate()?;
    if frames == 0 || height == 0 || width == 0 {
        return Err(Error::Config(format!(
            "FLOP shape ({frames}, {height}, {width}) must be positive"
        )));
    }
    let p = (frames * height * width) as u64;
    let (c, n, k, m) = (
        cfg.channels as u64,
        cfg.bottleneck as u64,
        cfg.kernel as u64,
        cfg.groups as u64,
    );
    let r = cfg.routed() as u64;
    let dst = cfg.variant.has_dst();
    let mut fc = FlopCount {
        frames: frames as u64,
        height: height as u64,
        width: width as u64,
        down: fc_flops(c, n, p),
        activation: n * p,
        dwconv: 2 * k * n * (n / m) * p + n * p,
        branches: cfg.variant.branches().len() as u64 * (2 * 3 * r * p + r * p),
        mid: if dst { fc_flops(n, n, p) } else { 0 },
        up: fc_flops(n, c, p),
        scale: c * p,
        // output residual; DST adds the stream fusion and the W_mid residual
        residual: c * p + if dst { 2 * n * p } else { 0 },
        total: 0,
    };
    fc.total = fc.components_sum();
    Ok(fc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{AdapterParams, Variant};

    #[test]
    fn worked_param_examples() {
        let cfg = AdapterConfig::new(4, 2, Variant::ConvTHW);
        let pc = count_params(&cfg).unwrap();
        assert_eq!((pc.down, pc.mid, pc.up, pc.dwconv, pc.branches, pc.scale), (10, 6, 12, 8, 12, 1));
        assert_eq!(pc.total, 49);
        assert_eq!(count_params(&cfg.with_variant(Variant::Tia)).unwrap().total, 31);
        let th = count_params(&cfg.with_variant(Variant::ConvTH)).unwrap().total;
        let t = count_params(&cfg.with_variant(Variant::ConvT)).unwrap().total;
        assert_eq!(th - t, 4 * cfg.routed() as u64);
    }

    #[test]
    fn matches_enumeration() {
        let cfg = AdapterConfig::new(6, 4, Variant::ConvTH).with_alpha(0.3);
        let params = AdapterParams::zeros(&cfg).unwrap();
        assert_eq!(count_params(&cfg).unwrap().total, params.element_count() as u64);
    }

    #[test]
    fn fc_convention() {
        assert_eq!(fc_flops(4, 2, 1), 18);
    }

    #[test]
    fn flops_double_with_time() {
        let cfg = AdapterConfig::new(8, 4, Variant::ConvTHW);
        let a = count_flops(&cfg, 6, 3, 5).unwrap();
        let b = count_flops(&cfg, 12, 3, 5).unwrap();
        for ((_, x), (_, y)) in a.components().iter().zip(b.components().iter()) {
            assert_eq!(2 * x, *y);
        }
        assert_eq!(2 * a.total, b.total);
    }

    #[test]
    fn rejects_empty_shape() {
        assert!(count_flops(&AdapterConfig::new(4, 2, Variant::Tia), 0, 1, 1).is_err());
    }
}
