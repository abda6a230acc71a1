use proptest::prelude::*;
use qaa_lns::dataset::{self, DataSource};
use qaa_lns::delta::DeltaTable;
use qaa_lns::gradcheck::{check_layer, standard_cases};
use qaa_lns::nn::{
    batch_plan, epoch_order, train, Arith, Layer, LayerSpec, LnsArith, Network, NetworkSpec,
    SgdConfig, Tensor, TrainConfig,
};
use qaa_lns::reference::{float_mirror_train, F64Arith};
use qaa_lns::LnsFormat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn f(t: u32, fr: u32) -> LnsFormat {
    LnsFormat::new(t, fr).unwrap()
}

#[test]
fn backward_passes_match_finite_differences() {
    let fmt = f(20, 12);
    for (name, spec, shape) in standard_cases() {
        for seed in 0..10 {
            let r = check_layer(&spec, &shape, &fmt, seed).unwrap();
            assert!(r.worst() < 0.05, "{name} seed {seed}: {r:?}");
        }
    }
}

#[test]
fn batch_norm_of_a_constant_batch_is_its_shift() {
    let fmt = f(16, 8);
    let a = LnsArith::exact(&fmt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let spec = LayerSpec::BatchNorm {
        features: 2,
        epsilon: None,
    };
    let mut bn = Layer::build(&spec, &a, &mut rng).unwrap();
    let x = Tensor::new(
        vec![4, 2],
        [1.5, -2.0]
            .repeat(4)
            .iter()
            .map(|&v| a.from_f64(v).unwrap())
            .collect(),
    )
    .unwrap();
    let y = bn.forward(&a, x, true).unwrap();
    // unit scale and zero shift at init: a constant column normalizes to 0
    for &v in y.data() {
        assert_eq!(a.to_f64(v), 0.0);
    }
}

#[test]
fn relu_and_pool_move_values_exactly() {
    let fmt = f(12, 6);
    let a = LnsArith::with_table(&fmt, DeltaTable::uniform(&fmt, 16).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let vals: Vec<f64> = (0..16).map(|i| (i as f64 - 7.5) * 0.37).collect();
    let x = Tensor::new(
        vec![1, 1, 4, 4],
        vals.iter().map(|&v| a.from_f64(v).unwrap()).collect(),
    )
    .unwrap();

    let mut relu = Layer::build(&LayerSpec::Relu, &a, &mut rng).unwrap();
    let y = relu.forward(&a, x.clone(), true).unwrap();
    for (&xi, &yi) in x.data().iter().zip(y.data()) {
        let want = if a.is_positive(xi) { xi } else { a.zero() };
        assert_eq!(yi, want);
    }

    let mut pool = Layer::build(
        &LayerSpec::MaxPool {
            kernel: 2,
            stride: 2,
        },
        &a,
        &mut rng,
    )
    .unwrap();
    let y = pool.forward(&a, x.clone(), true).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data()[3], x.data()[15]);
    let g = Tensor::filled(vec![1, 1, 2, 2], a.one());
    let dx = pool.backward(&a, g).unwrap();
    let ones = dx.data().iter().filter(|&&v| v == a.one()).count();
    assert_eq!(ones, 4);
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        network: NetworkSpec::mlp(2, &[16], 2, true, 5),
        format: f(12, 6),
        data: DataSource::TwoMoons {
            n: 300,
            noise: 0.1,
            seed: 1,
        },
        test_fraction: 0.2,
        split_seed: 2,
        epochs,
        batch_size: 32,
        shuffle_seed: 3,
        optimizer: SgdConfig::new(0.1),
        table: None,
    }
}

#[test]
fn lns_training_is_deterministic() {
    let cfg = small_config(3);
    let (tr, te) = cfg.datasets(None).unwrap();
    let run = || {
        let a = LnsArith::with_table(&cfg.format, DeltaTable::uniform(&cfg.format, 16).unwrap())
            .unwrap();
        let mut net = Network::new(cfg.network.clone(), a).unwrap();
        let m = train(&mut net, &tr, &te, &cfg, |_| {}).unwrap();
        (m, net.export_f64())
    };
    let (m1, w1) = run();
    let (m2, w2) = run();
    assert_eq!(m1, m2);
    assert_eq!(w1, w2);
    assert_ne!(m1[0].index_trace, m1[1].index_trace);
}

#[test]
fn lns_tracks_the_float_mirror_early_on() {
    let cfg = small_config(5);
    let (tr, te) = cfg.datasets(None).unwrap();
    let a = LnsArith::exact(&cfg.format).unwrap();
    let mut net = Network::new(cfg.network.clone(), a).unwrap();
    let lns = train(&mut net, &tr, &te, &cfg, |_| {}).unwrap();
    let (_, flt) = float_mirror_train(&cfg, None, |_| {}).unwrap();
    for (l, m) in lns.iter().zip(&flt) {
        assert_eq!(l.index_trace, m.index_trace);
    }
    let (l, m) = (lns.last().unwrap(), flt.last().unwrap());
    assert!(
        (l.test_accuracy - m.test_accuracy).abs() <= 0.1,
        "{l:?} {m:?}"
    );
}

#[test]
fn separable_blobs_are_learned() {
    let cfg = TrainConfig {
        data: DataSource::Blobs {
            n: 256,
            centers: 3,
            noise: 0.0,
            seed: 4,
        },
        network: NetworkSpec::mlp(2, &[16], 3, false, 1),
        epochs: 10,
        ..small_config(10)
    };
    let (_, m) = float_mirror_train(&cfg, None, |_| {}).unwrap();
    assert_eq!(m.last().unwrap().test_accuracy, 1.0);
    let (tr, te) = cfg.datasets(None).unwrap();
    let a =
        LnsArith::with_table(&cfg.format, DeltaTable::uniform(&cfg.format, 16).unwrap()).unwrap();
    let mut net = Network::new(cfg.network.clone(), a).unwrap();
    let lns = train(&mut net, &tr, &te, &cfg, |_| {}).unwrap();
    assert!(lns.last().unwrap().test_accuracy >= 0.95);
}

#[test]
fn datasets_are_reproducible() {
    let a = dataset::two_moons(200, 0.2, 9).unwrap();
    let b = dataset::two_moons(200, 0.2, 9).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let (tr, te) = a.split(0.25, 1).unwrap();
    assert_eq!(tr.len() + te.len(), 200);
    assert_eq!(te.len(), 50);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn batches_are_powers_of_two_and_cover_the_epoch(n in 1usize..700, log_b in 0u32..8, seed in any::<u64>()) {
        let order = epoch_order(n, seed, 0);
        let plan = batch_plan(&order, 1 << log_b);
        let mut seen: Vec<usize> = plan.iter().flat_map(|b| b.iter().copied()).collect();
        prop_assert!(plan.iter().all(|b| b.len().is_power_of_two() && b.len() <= 1 << log_b));
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn dense_output_shape_and_mirror_agreement(batch in 1usize..6, inputs in 1usize..6, outputs in 1usize..6, seed in any::<u64>()) {
        let fmt = f(20, 12);
        let lns = LnsArith::exact(&fmt).unwrap();
        let flt = F64Arith::mirroring(&fmt);
        let spec = LayerSpec::Dense { inputs, outputs, bias: true };
        let mut l = Layer::build(&spec, &lns, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut m = Layer::build(&spec, &flt, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let xs: Vec<f64> = (0..batch * inputs).map(|_| rand::Rng::random_range(&mut rng, -1.0..1.0)).collect();
        let xl = Tensor::new(vec![batch, inputs], xs.iter().map(|&v| lns.from_f64(v).unwrap()).collect()).unwrap();
        let xm = Tensor::new(vec![batch, inputs], xl.data().iter().map(|&v| lns.to_f64(v)).collect()).unwrap();
        let yl = l.forward(&lns, xl, false).unwrap();
        let ym = m.forward(&flt, xm, false).unwrap();
        prop_assert_eq!(yl.shape(), &[batch, outputs]);
        for (&p, &q) in yl.data().iter().zip(ym.data()) {
            prop_assert!((lns.to_f64(p) - q).abs() <= 1e-2 * (1.0 + q.abs()), "{} vs {}", lns.to_f64(p), q);
        }
    }
}
