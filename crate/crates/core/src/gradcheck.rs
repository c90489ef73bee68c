//! Central finite-difference gradient checking.

use crate::error::{Error, Result};
use crate::tensor::{ParamTensor, Tensor4};

/// Anything that owns a fixed, ordered list of named parameters.
pub trait Parameterized {
    fn for_each_param(&self, f: &mut dyn FnMut(&str, &ParamTensor));
    fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut ParamTensor));

    fn zero_grad(&mut self) {
        self.for_each_param_mut(&mut |_, p| p.zero_grad());
    }

    fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.for_each_param(&mut |_, p| n += p.len());
        n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and element index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// The relative error measure used throughout: `|a - n| / max(1e-8, |a| + |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

fn nudge<M: Parameterized + ?Sized>(model: &mut M, target: usize, elem: usize, value: f64) {
    let mut idx = 0;
    model.for_each_param_mut(&mut |_, p| {
        if idx == target {
            p.value[elem] = value;
        }
        idx += 1;
    });
}

/// Compares analytic parameter gradients against `(f(θ+h) - f(θ-h)) / 2h`
/// for every scalar parameter.
///
/// `loss` evaluates the scalar loss only. `loss_and_grad` evaluates it and
/// accumulates parameter gradients; it is called once after `zero_grad`.
pub fn gradcheck<M: Parameterized>(
    model: &mut M,
    h: f64,
    mut loss: impl FnMut(&mut M) -> Result<f64>,
    mut loss_and_grad: impl FnMut(&mut M) -> Result<f64>,
) -> Result<GradCheckReport> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Config(format!("finite-difference step {h} must be positive")));
    }
    model.zero_grad();
    let base = loss_and_grad(model)?;
    if !base.is_finite() {
        return Err(Error::NonFinite {
            context: "gradcheck base loss".into(),
        });
    }
    let mut analytic: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    model.for_each_param(&mut |name, p| {
        analytic.push((name.to_owned(), p.value.clone(), p.grad.clone()))
    });

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (pi, (name, values, grads)) in analytic.iter().enumerate() {
        for (e, (&orig, &g)) in values.iter().zip(grads).enumerate() {
            nudge(model, pi, e, orig + h);
            let plus = loss(model);
            nudge(model, pi, e, orig - h);
            let minus = loss(model);
            nudge(model, pi, e, orig);
            let (plus, minus) = (plus?, minus?);
            let numeric = (plus - minus) / (2.0 * h);
            if !numeric.is_finite() || !g.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("gradient of {name}[{e}]"),
                });
            }
            let err = relative_error(g, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), e));
            }
        }
    }
    Ok(report)
}

/// Checks an analytic input gradient against central differences of `loss`.
pub fn gradcheck_input(
    x: &Tensor4,
    analytic: &Tensor4,
    h: f64,
    mut loss: impl FnMut(&Tensor4) -> Result<f64>,
) -> Result<f64> {
    if x.dims() != analytic.dims() {
        return Err(Error::shape("gradcheck_input", x.dims(), analytic.dims()));
    }
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.data().len() {
        let orig = x.data()[i];
        probe.data_mut()[i] = orig + h;
        let plus = loss(&probe)?;
        probe.data_mut()[i] = orig - h;
        let minus = loss(&probe)?;
        probe.data_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        if !numeric.is_finite() {
            return Err(Error::NonFinite {
                context: format!("input gradient at flat index {i}"),
            });
        }
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ops, Dims4};

    struct Affine {
        w: ParamTensor,
        b: ParamTensor,
    }

    impl Parameterized for Affine {
        fn for_each_param(&self, f: &mut dyn FnMut(&str, &ParamTensor)) {
            f("w", &self.w);
            f("b", &self.b);
        }
        fn for_each_param_mut(&mut self, f: &mut dyn FnMut(&str, &mut ParamTensor)) {
            f("w", &mut self.w);
            f("b", &mut self.b);
        }
    }

    fn input() -> Tensor4 {
        Tensor4::from_fn(Dims4::new(3, 2, 2, 1), |c, t, h, _| (c as f64 - 1.0) * 0.7 + (t * h) as f64)
    }

    #[test]
    fn linear_map_is_exact() {
        let mut m = Affine {
            w: ParamTensor::from_values(&[3, 2], vec![0.2, -0.1, 0.5, 1.0, -0.3, 0.8]).unwrap(),
            b: ParamTensor::from_values(&[2], vec![0.1, -0.2]).unwrap(),
        };
        let x = input();
        let r = gradcheck(
            &mut m,
            1e-5,
            |m| Ok(ops::fc_channel(&x, &m.w, &m.b)?.sum()),
            |m| {
                let y = ops::fc_channel(&x, &m.w, &m.b)?;
                let g = Tensor4::filled(y.dims(), 1.0);
                ops::fc_channel_backward(&x, &mut m.w, &mut m.b, &g)?;
                Ok(y.sum())
            },
        )
        .unwrap();
        assert_eq!(r.checked, 8);
        assert!(r.max_rel_error <= 1e-9, "{r:?}");
    }

    #[test]
    fn constant_map_has_zero_error() {
        let mut m = Affine {
            w: ParamTensor::zeros(&[1, 1]),
            b: ParamTensor::zeros(&[1]),
        };
        let r = gradcheck(&mut m, 1e-5, |_| Ok(3.0), |_| Ok(3.0)).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn reports_non_finite_parameter() {
        let mut m = Affine {
            w: ParamTensor::zeros(&[1, 1]),
            b: ParamTensor::zeros(&[1]),
        };
        let err = gradcheck(
            &mut m,
            1e-5,
            |m| Ok(if m.b.value[0] > 0.0 { f64::INFINITY } else { 0.0 }),
            |_| Ok(0.0),
        )
        .unwrap_err();
        assert!(err.to_string().contains("b[0]"), "{err}");
    }

    #[test]
    fn rejects_non_positive_step() {
        let mut m = Affine {
            w: ParamTensor::zeros(&[1, 1]),
            b: ParamTensor::zeros(&[1]),
        };
        assert!(gradcheck(&mut m, 0.0, |_| Ok(0.0), |_| Ok(0.0)).is_err());
    }

    #[test]
    fn activation_input_gradient() {
        let x = input();
        let w = Tensor4::from_fn(x.dims(), |c, t, h, _| 1.0 + (c + t + h) as f64 * 0.3);
        let gy = w.clone();
        let gx = ops::activation_backward(&x, &gy).unwrap();
        let err = gradcheck_input(&x, &gx, 1e-5, |p| Ok(ops::activation(p).dot(&w))).unwrap();
        assert!(err < 1e-8, "{err}");
    }
}
