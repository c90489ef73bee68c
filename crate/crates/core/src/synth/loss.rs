const LOG_FLOOR: f64 = 1e-12;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FocalLoss {
    pub loss: f64,
    /// Gradient of `loss` with respect to each logit.
    pub grad: Vec<f64>,
}

/// Sigmoid focal loss averaged over all entries.
///
/// Positives contribute `-w (1-p)^γ ln p`, negatives `-(1-w) p^γ ln(1-p)`.
pub fn focal_loss(logits: &[f64], targets: &[f64], gamma: f64, weight: f64) -> FocalLoss {
    assert_eq!(logits.len(), targets.len(), "logits and targets differ in length");
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (&z, &t) in logits.iter().zip(targets) {
        let p = sigmoid(z);
        let q = 1.0 - p;
        let (l, g) = if t >= 0.5 {
            let lnp = p.max(LOG_FLOOR).ln();
            let m = q.powf(gamma);
            (-weight * m * lnp, weight * m * (gamma * p * lnp - q))
        } else {
            let lnq = q.max(LOG_FLOOR).ln();
            let m = p.powf(gamma);
            (-(1.0 - weight) * m * lnq, -(1.0 - weight) * m * (gamma * q * lnq - p))
        };
        loss += l;
        grad.push(g / n);
    }
    FocalLoss { loss: loss / n, grad }
}
