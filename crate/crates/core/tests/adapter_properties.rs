use dsta_core::adapter::{count_flops, count_params, fc_flops, AdapterParams};
use dsta_core::gradcheck::{gradcheck, Parameterized};
use dsta_core::tensor::ops;
use dsta_core::{Adapter, AdapterConfig, Dims4, ParamTensor, Tensor4, Variant};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn variant() -> impl Strategy<Value = Variant> {
    prop::sample::select(Variant::ALL.to_vec())
}

prop_compose! {
    fn adapter_config()(c in 2usize..10, variant in variant(), alpha in 0.0f64..=1.0, kernel in prop::sample::select(vec![1usize, 3, 5]))
        (n in 1..c, c in Just(c), variant in Just(variant), alpha in Just(alpha), kernel in Just(kernel), pick in 0usize..16)
        -> AdapterConfig
    {
        let divisors: Vec<usize> = (1..=n).filter(|d| n % d == 0).collect();
        let mut cfg = AdapterConfig::new(c, n, variant).with_alpha(alpha);
        cfg.kernel = kernel;
        cfg.groups = divisors[pick % divisors.len()];
        cfg
    }
}

fn scalar_count(cfg: &AdapterConfig) -> u64 {
    let adapter = Adapter::new(*cfg, AdapterParams::zeros(cfg).unwrap()).unwrap();
    let mut n = 0u64;
    adapter.for_each_param(&mut |_, p| n += p.value.len() as u64);
    n
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn param_count_matches_enumeration(cfg in adapter_config()) {
        prop_assert_eq!(count_params(&cfg).unwrap().total, scalar_count(&cfg));
    }

    #[test]
    fn zero_scale_is_bit_exact_identity(cfg in adapter_config(), t in 1usize..5, h in 1usize..4, w in 1usize..4, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adapter = Adapter::init(cfg, &mut rng).unwrap();
        let x = Tensor4::random_normal(Dims4::new(cfg.channels, t, h, w), 3.0, &mut rng);
        prop_assert_eq!(adapter.forward(&x).unwrap(), x);
    }

    #[test]
    fn zero_weights_are_identity_for_any_scale(cfg in adapter_config(), beta in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = AdapterParams::zeros(&cfg).unwrap();
        params.beta.fill(beta);
        let adapter = Adapter::new(cfg, params).unwrap();
        let x = Tensor4::random_normal(Dims4::new(cfg.channels, 3, 2, 2), 1.0, &mut rng);
        prop_assert_eq!(adapter.forward(&x).unwrap(), x);
    }

    #[test]
    fn fc_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Dims4::new(3, 2, 2, 3);
        let w = ParamTensor::random_normal(&[3, 4], 1.0, &mut rng);
        let zero = ParamTensor::zeros(&[4]);
        let x = Tensor4::random_normal(d, 1.0, &mut rng);
        let y = Tensor4::random_normal(d, 1.0, &mut rng);
        let combo = ops::add(&x.map(|v| a * v), &y.map(|v| b * v)).unwrap();
        let lhs = ops::fc_channel(&combo, &w, &zero).unwrap();
        let rhs = ops::add(
            &ops::fc_channel(&x, &w, &zero).unwrap().map(|v| a * v),
            &ops::fc_channel(&y, &w, &zero).unwrap().map(|v| b * v),
        ).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    #[test]
    fn split_then_concat_round_trips(c in 1usize..9, alpha in 0.0f64..=1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor4::random_normal(Dims4::new(c, 3, 2, 2), 1.0, &mut rng);
        let (a, b) = ops::split_channels(&x, alpha).unwrap();
        prop_assert_eq!(ops::concat_channels(&a, &b).unwrap(), x);
    }

    #[test]
    fn flops_are_linear_in_time(cfg in adapter_config(), t in 1usize..50, h in 1usize..8, w in 1usize..8) {
        let a = count_flops(&cfg, t, h, w).unwrap();
        let b = count_flops(&cfg, 2 * t, h, w).unwrap();
        prop_assert_eq!(2 * a.total, b.total);
    }
}

#[test]
fn variant_ordering_when_branches_are_populated() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    use rand::Rng;
    for _ in 0..200 {
        let c = rng.random_range(2..64);
        let n = rng.random_range(1..c);
        let cfg = AdapterConfig::new(c, n, Variant::Tia).with_alpha(rng.random_range(0.0..=1.0));
        let totals: Vec<u64> = Variant::ALL
            .iter()
            .map(|&v| count_params(&cfg.with_variant(v)).unwrap().total)
            .collect();
        if cfg.routed() >= 1 {
            assert!(totals.windows(2).all(|w| w[0] < w[1]), "{cfg:?}: {totals:?}");
        } else {
            assert!(totals[0] < totals[1] && totals[1] == totals[2] && totals[2] == totals[3]);
        }
    }
}

#[test]
fn flop_deltas_are_branch_costs() {
    for (c, n, alpha, (t, h, w)) in [(8, 4, 0.5, (16, 7, 7)), (768, 64, 0.3, (768, 14, 14)), (5, 3, 1.0, (3, 1, 2))] {
        let cfg = AdapterConfig::new(c, n, Variant::Tia).with_alpha(alpha);
        let p = (t * h * w) as u64;
        let r = cfg.routed() as u64;
        let f = |v| count_flops(&cfg.with_variant(v), t, h, w).unwrap().total;
        let branch = 2 * 3 * r * p + r * p;
        assert_eq!(f(Variant::ConvTHW) - f(Variant::ConvTH), branch);
        assert_eq!(f(Variant::ConvTH) - f(Variant::ConvT), branch);
        let n = n as u64;
        assert_eq!(f(Variant::ConvT) - f(Variant::Tia), branch + fc_flops(n, n, p) + 2 * n * p);
    }
}

#[test]
fn gradients_on_random_configs() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for i in 0..40 {
        let variant = Variant::ALL[i % 4];
        let c = rng.random_range(2..6);
        let n = rng.random_range(1..c);
        let mut cfg = AdapterConfig::new(c, n, variant).with_alpha(rng.random_range(0.0..=1.0));
        cfg.kernel = [1, 3, 5][rng.random_range(0..3)];
        let mut adapter = Adapter::init(cfg, &mut rng).unwrap();
        adapter.params.beta.fill(rng.random_range(0.5..1.5));
        let dims = Dims4::new(c, rng.random_range(1..5), rng.random_range(1..4), rng.random_range(1..4));
        let x = Tensor4::random_normal(dims, 1.0, &mut rng);
        let wts = Tensor4::random_normal(dims, 1.0, &mut rng);
        let report = gradcheck(
            &mut adapter,
            1e-5,
            |m| Ok(m.forward(&x)?.dot(&wts)),
            |m| {
                let y = m.forward_train(&x)?;
                m.backward(&wts)?;
                Ok(y.dot(&wts))
            },
        )
        .unwrap();
        assert!(report.max_rel_error < 1e-4, "{cfg:?} {dims}: {report:?}");
    }
}

#[test]
fn identity_kernels_reproduce_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = Tensor4::random_normal(Dims4::new(3, 5, 4, 6), 1.0, &mut rng);
    let mut k = ParamTensor::zeros(&[3, 3]);
    for c in 0..3 {
        k.value[c * 3 + 1] = 1.0;
    }
    let zero = ParamTensor::zeros(&[3]);
    for axis in dsta_core::Axis::ALL {
        assert_eq!(ops::conv_axis_depthwise(&x, axis, &k, &zero).unwrap(), x);
    }
    let mut dk = ParamTensor::zeros(&[3, 1, 3]);
    for c in 0..3 {
        dk.value[c * 3 + 1] = 1.0;
    }
    assert_eq!(ops::dwconv_temporal(&x, &dk, &zero, 3, 3).unwrap(), x);
}

#[test]
fn silent_spatial_branches_reduce_to_temporal_only_on_unit_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        use rand::Rng;
        let c = rng.random_range(2..8);
        let n = rng.random_range(1..c);
        let cfg = AdapterConfig::new(c, n, Variant::ConvTHW).with_alpha(rng.random_range(0.0..=1.0)).with_beta(1.0);
        let mut full = AdapterParams::init(&cfg, &mut rng).unwrap();
        for b in &mut full.branches[1..] {
            let r = b.bias.len();
            for ch in 0..r {
                b.kernel.value[ch * 3 + 1] = 0.0;
            }
            b.bias.fill(0.0);
        }
        let mut temporal = full.clone();
        temporal.branches.truncate(1);
        let t_cfg = cfg.with_variant(Variant::ConvT);
        let x = Tensor4::random_normal(Dims4::new(c, 5, 1, 1), 1.0, &mut rng);
        let y_full = Adapter::new(cfg, full).unwrap().forward(&x).unwrap();
        let y_t = Adapter::new(t_cfg, temporal).unwrap().forward(&x).unwrap();
        assert_eq!(y_full, y_t, "{cfg:?}");
    }
}
