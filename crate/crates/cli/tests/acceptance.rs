//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured values (run with `--nocapture` to see them).
//!
//! Criteria 1-6 are deterministic and fast. Criteria 7-10 train desk-scale
//! models on MNIST (minutes); they expect the IDX files under
//! `$POLYREUSE_DATA_ROOT/mnist` or `<workspace>/data/mnist` and share their
//! training runs through `OnceLock`s. Criterion 11 (CIFAR-10) is hours-long
//! and ignored by default.

use std::path::PathBuf;
use std::sync::OnceLock;

use polyreuse_core::datasets::{load_cifar10, load_mnist, LabeledImages};
use polyreuse_core::hwcost::{
    conv_cost_proposed, conv_cost_rs, fc_cost_naive, fc_cost_proposed, memory_report, CostParams,
};
use polyreuse_core::infer::{conv_factored, fc_factored, forward_factored, schedule_trace};
use polyreuse_core::net::{backward, forward, loss_value, one_hot, LossKind, Weights};
use polyreuse_core::polyproj::{
    count_params, fit_poly_group, project_layer, reconstruct_layer, CoeffStore, Degree,
    DesignCache, GroupAxis, GroupScheme, GroupSpec,
};
use polyreuse_core::presets;
use polyreuse_core::tensor::{conv2d_valid, Tensor};
use polyreuse_core::train::{evaluate, post_hoc_project, train, ModelParams, TrainConfig, TrainOutcome};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Desk-scale substitutes for the published 200-epoch runs.
const FC_EPOCHS: u32 = 20;
const FC_LR: f64 = 0.1;
const CNN_EPOCHS: u32 = 10;

fn data_root() -> PathBuf {
    std::env::var_os("POLYREUSE_DATA_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn mnist() -> &'static (LabeledImages<f64>, LabeledImages<f64>) {
    static DATA: OnceLock<(LabeledImages<f64>, LabeledImages<f64>)> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = data_root().join("mnist");
        let load = |img: &str, lbl: &str| {
            load_mnist::<f64>(&dir.join(img), &dir.join(lbl)).unwrap_or_else(|e| {
                panic!(
                    "criteria 7-10 need MNIST under {} (scripts/fetch_data.sh): {e}",
                    dir.display()
                )
            })
        };
        let train_full = load("train-images-idx3-ubyte", "train-labels-idx1-ubyte");
        let test = load("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte");
        assert_eq!(train_full.len(), 60_000);
        assert_eq!(test.len(), 10_000);
        let (train_50k, _) = train_full.split_at(50_000);
        (train_50k, test)
    })
}

fn fc_cfg() -> TrainConfig {
    TrainConfig {
        learning_rate: FC_LR,
        epochs: FC_EPOCHS,
        batch_size: 32,
        rng_seed: 42,
        loss: LossKind::CrossEntropy,
    }
}

fn train_preset(name: &str, cfg: &TrainConfig) -> TrainOutcome<f64> {
    let preset = presets::find(name).unwrap();
    let net = preset.network();
    let scheme = preset.scheme(&net).unwrap();
    let (train_set, test_set) = mnist();
    train(&net, &scheme, train_set, test_set, cfg).unwrap()
}

fn fc_plain() -> &'static TrainOutcome<f64> {
    static RUN: OnceLock<TrainOutcome<f64>> = OnceLock::new();
    RUN.get_or_init(|| train_preset("mnist_fc_case0", &fc_cfg()))
}

fn fc_projected() -> &'static TrainOutcome<f64> {
    static RUN: OnceLock<TrainOutcome<f64>> = OnceLock::new();
    RUN.get_or_init(|| train_preset("mnist_fc_case1", &fc_cfg()))
}

fn cnn_cfg() -> TrainConfig {
    let mut cfg = presets::find("mnist_cnn_case1").unwrap().train;
    cfg.epochs = CNN_EPOCHS;
    cfg
}

fn cnn_projected() -> &'static TrainOutcome<f64> {
    static RUN: OnceLock<TrainOutcome<f64>> = OnceLock::new();
    RUN.get_or_init(|| train_preset("mnist_cnn_case1", &cnn_cfg()))
}

fn cnn_plain() -> &'static TrainOutcome<f64> {
    static RUN: OnceLock<TrainOutcome<f64>> = OnceLock::new();
    RUN.get_or_init(|| train_preset("mnist_cnn_case0", &cnn_cfg()))
}

#[test]
fn acceptance_01_conv_cost_golden_numbers() {
    let p = CostParams::default();
    let cases = [
        (10usize, 3usize, 102u64, 120u64),
        (28, 5, 584, 1080),
    ];
    for (h, k, proposed, rs) in cases {
        assert_eq!(conv_cost_proposed(h, h, k, k, Degree::Linear, &p).unwrap(), proposed);
        assert_eq!(conv_cost_rs(h, h, k, k).unwrap(), rs);
    }
    println!("PASS criterion 1: conv 10x10/3x3 -> 102 vs 120; 28x28/5x5 -> 584 vs 1080 (exact)");
}

#[test]
fn acceptance_02_fc_cost_golden_numbers() {
    let p = CostParams::default();
    let lenet = fc_cost_naive(784, 300) + fc_cost_naive(300, 100) + fc_cost_naive(100, 10);
    let fc6432 = fc_cost_naive(784, 64) + fc_cost_naive(64, 32) + fc_cost_naive(32, 10);
    let case3 = fc_cost_proposed(784, 64, 24, Degree::Linear, &p).unwrap()
        + fc_cost_proposed(64, 32, 4, Degree::Linear, &p).unwrap()
        + fc_cost_naive(32, 10);
    let case4 = fc_cost_proposed(784, 64, 28, Degree::Linear, &p).unwrap()
        + fc_cost_proposed(64, 32, 4, Degree::Linear, &p).unwrap()
        + fc_cost_naive(32, 10);
    assert_eq!(lenet, 531_990);
    assert_eq!(fc6432, 104_982);
    assert_eq!(case3, 13_156);
    assert_eq!(case4, 11_902);
    let r3 = lenet as f64 / case3 as f64;
    let r4 = lenet as f64 / case4 as f64;
    assert!((r3 - 40.4).abs() <= 0.1, "case 3 reduction {r3}");
    assert!((r4 - 44.7).abs() <= 0.1, "case 4 reduction {r4}");
    println!("PASS criterion 2: FC costs 531990 / 104982 / 13156 / 11902 (exact); reductions {r3:.1}x / {r4:.1}x");
}

/// Published-table comparison: 1% of the printed figure plus half its last
/// printed digit, since the tables round aggressively (e.g. 13136 published
/// as "13k").
fn close_to_table(ours: f64, published: f64, granularity: f64) -> bool {
    (ours - published).abs() <= 0.01 * published + 0.5 * granularity
}

/// Published reduction ratios divide two rounded figures; propagate the
/// rounding of both (reference memory printed to 10 KB) on top of 1%.
fn close_to_ratio(ours: f64, published: f64, denom: f64, denom_gran: f64) -> bool {
    let tol = published * (0.01 + 0.5 * 10.0 / 1070.0 + 0.5 * denom_gran / denom);
    (ours - published).abs() <= tol
}

#[test]
fn acceptance_03_parameter_and_memory_tables() {
    let params = CostParams::default();
    // (preset, published total KB, KB granularity, published reduction).
    let fc_cases = [
        ("mnist_fc_case0", 52.5, 0.1, 20.4),
        ("mnist_fc_case1", 13.0, 1.0, 82.3),
        ("mnist_fc_case2", 7.0, 1.0, 152.9),
        ("mnist_fc_case3", 5.5, 0.1, 194.5),
        ("mnist_fc_case4", 4.9, 0.1, 218.4),
        ("mnist_fc_case5", 6.5, 0.1, 164.6),
        ("mnist_fc_case6", 6.1, 0.1, 175.4),
        ("mnist_fc_case7", 5.5, 0.1, 194.5),
    ];
    let cnn_cases = [
        ("mnist_cnn_case0", 3.87, 0.01, 444.4),
        ("mnist_cnn_case1", 1.42, 0.01, 1211.3),
        ("mnist_cnn_case2", 0.9, 0.1, 1911.1),
        ("mnist_cnn_case3", 0.84, 0.01, 2047.6),
        ("mnist_cnn_case4", 0.82, 0.01, 2097.6),
        ("mnist_cnn_case5", 1.2, 0.1, 1433.3),
        ("mnist_cnn_case6", 0.294, 0.001, 5850.3),
    ];
    // The first approximated CIFAR column is published as 158.6k, but its own
    // per-layer rows print 102.8k + 65.8k = 168.6k; we pin the row sum and
    // report the discrepancy instead of matching the typo.
    let cifar_cases = [
        ("cifar_nw8", 168.6, 0.1, 2080.8 / 168.6),
        ("cifar_nw16", 135.7, 0.1, 15.3),
        ("cifar_nw32", 119.2, 0.1, 17.4),
    ];

    // The published CIFAR baseline column stores the unapproximated model at
    // 32 bits: 520.2k parameters as 2080 KB, reduction 1x by definition.
    {
        let preset = presets::find("cifar_case0").unwrap();
        let net = preset.network();
        let scheme = preset.scheme(&net).unwrap();
        let counts = count_params(&scheme, &net).unwrap();
        let report = memory_report(&counts, preset.baseline_label, preset.baseline_params, &params);
        assert_eq!(counts.raw_total, 520_224);
        assert!(
            close_to_table(report.baseline_memory_kb, 2080.0, 10.0),
            "cifar baseline {:.1} KB vs published 2080",
            report.baseline_memory_kb
        );
        println!(
            "  cifar_case0: 520224 params, {:.1} KB at 32-bit (published 2080)",
            report.baseline_memory_kb
        );
    }

    for (name, kb, gran, reduction) in fc_cases.iter().chain(&cnn_cases).chain(&cifar_cases) {
        let preset = presets::find(name).unwrap();
        let net = preset.network();
        let scheme = preset.scheme(&net).unwrap();
        let counts = count_params(&scheme, &net).unwrap();
        let report = memory_report(&counts, preset.baseline_label, preset.baseline_params, &params);
        assert!(
            close_to_table(report.total_memory_kb, *kb, *gran),
            "{name}: {:.3} KB vs published {kb}",
            report.total_memory_kb
        );
        assert!(
            close_to_ratio(report.memory_reduction, *reduction, *kb, *gran),
            "{name}: {:.1}x vs published {reduction}x",
            report.memory_reduction
        );
        println!(
            "  {name}: {:.3} KB (published {kb}), reduction {:.1}x (published {reduction:.1}x)",
            report.total_memory_kb, report.memory_reduction
        );
    }
    println!(
        "PASS criterion 3: parameter/memory tables within 1% + printed-digit rounding; \
         note: the first approximated CIFAR column is checked against its row sum 168.6k \
         (printed total 158.6k is inconsistent with the printed rows)"
    );
}

#[test]
fn acceptance_04_factored_equivalence() {
    let cache = DesignCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-7);

    for trial in 0..500usize {
        let kh = 1 + trial % 5;
        let kw = 2 + trial % 6;
        let c = 1 + trial % 3;
        let k = 1 + trial % 4;
        let degree = if kw >= 3 && trial % 2 == 0 { Degree::Quadratic } else { Degree::Linear };
        let weights = Tensor::from_fn(vec![kh, kw, c, k], |_| rng.random::<f64>() * 2.0 - 1.0);
        let spec = GroupSpec { degree, group_size: kw, axis: GroupAxis::FilterRow };
        let (coeffs, _) = project_layer(&weights, spec, &cache).unwrap();
        let ifmap = Tensor::from_fn(vec![kh + trial % 7, kw + trial % 5, c], |_| rng.random::<f64>() * 2.0 - 1.0);
        let want = conv2d_valid(&ifmap, &reconstruct_layer(&coeffs).unwrap()).unwrap();
        let got = conv_factored(&ifmap, &coeffs, None).unwrap();
        for (a, b) in got.data().iter().zip(want.data()) {
            assert!(rel(*a, *b) < 1e-9, "conv trial {trial}");
        }
    }
    for trial in 0..500usize {
        let n = 4 + trial % 60;
        let m = 1 + trial % 8;
        let degree = if trial % 2 == 0 { Degree::Quadratic } else { Degree::Linear };
        let nw = (degree.coeff_count() + trial % 9).min(n);
        let weights = Tensor::from_fn(vec![m, n], |_| rng.random::<f64>() * 2.0 - 1.0);
        let spec = GroupSpec { degree, group_size: nw, axis: GroupAxis::ContiguousFlat };
        let (coeffs, _) = project_layer(&weights, spec, &cache).unwrap();
        let x = Tensor::from_fn(vec![n], |_| rng.random::<f64>() * 2.0 - 1.0);
        let rebuilt = reconstruct_layer(&coeffs).unwrap();
        let got = fc_factored(&x, &coeffs, None).unwrap();
        for o in 0..m {
            let want: f64 = (0..n).map(|i| rebuilt.data()[o * n + i] * x.data()[i]).sum();
            assert!(rel(got.data()[o], want) < 1e-9, "dense trial {trial}");
        }
    }

    // End-to-end: full networks through the coefficient domain.
    for name in ["mnist_fc_case3", "mnist_cnn_case1"] {
        let preset = presets::find(name).unwrap();
        let net = preset.network();
        let scheme = preset.scheme(&net).unwrap();
        let weights = Weights::<f64>::init(&net, &mut rng);
        let store = CoeffStore::project_network(&net, &weights, &scheme, &cache).unwrap();
        let reconstructed = store.to_weights(&net).unwrap();
        for _ in 0..5 {
            let x = Tensor::from_fn(net.input_shape().to_vec(), |_| rng.random::<f64>());
            let (want, _) = forward(&net, &reconstructed, &x).unwrap();
            let got = forward_factored(&net, &store, &x).unwrap();
            for (a, b) in got.data().iter().zip(want.data()) {
                assert!(rel(*a, *b) < 1e-7, "{name} end-to-end");
            }
        }
    }
    println!("PASS criterion 4: factored conv/FC match reconstruction on 500 instances each (<1e-9); end-to-end <1e-7");
}

#[test]
fn acceptance_05_projection_properties() {
    let cache = DesignCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    // Idempotence and exact interpolation.
    for trial in 0..50 {
        let degree = if trial % 2 == 0 { Degree::Linear } else { Degree::Quadratic };
        let nw = degree.coeff_count() + trial % 20;
        let w = Tensor::from_fn(vec![4, nw * 3 + trial % nw.max(2)], |_| rng.random::<f64>() * 2.0 - 1.0);
        let spec = GroupSpec { degree, group_size: nw, axis: GroupAxis::ContiguousFlat };
        let (_, once) = project_layer(&w, spec, &cache).unwrap();
        let (_, twice) = project_layer(&once, spec, &cache).unwrap();
        for (a, b) in twice.data().iter().zip(once.data()) {
            assert!((a - b).abs() < 1e-12, "idempotence trial {trial}");
        }
        let nw_min = degree.coeff_count();
        let w = Tensor::from_fn(vec![4, nw_min * 5], |_| rng.random::<f64>() * 2.0 - 1.0);
        let spec = GroupSpec { degree, group_size: nw_min, axis: GroupAxis::ContiguousFlat };
        let (_, approx) = project_layer(&w, spec, &cache).unwrap();
        for (a, b) in approx.data().iter().zip(w.data()) {
            assert!((a - b).abs() < 1e-10, "interpolation trial {trial}");
        }
    }

    // Least-squares optimality against perturbed coefficients.
    for trial in 0..100 {
        let degree = if trial % 2 == 0 { Degree::Linear } else { Degree::Quadratic };
        let ys: Vec<f64> = (0..6 + trial % 10).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let fitted = fit_poly_group(&ys, degree).unwrap();
        let residual = |c: &[f64]| -> f64 {
            ys.iter()
                .enumerate()
                .map(|(x, &y)| {
                    let p: f64 = c.iter().enumerate().map(|(a, &ci)| ci * (x as f64).powi(a as i32)).sum();
                    (p - y) * (p - y)
                })
                .sum()
        };
        let base = residual(&fitted);
        for _ in 0..10 {
            let perturbed: Vec<f64> = fitted.iter().map(|c| c + rng.random::<f64>() * 0.02 - 0.01).collect();
            assert!(residual(&perturbed) + 1e-15 >= base, "optimality trial {trial}");
        }
    }

    // Finite-difference gradient check on a sub-500-parameter conv net.
    use polyreuse_core::net::{Activation, Layer, NetworkSpec, Padding};
    let net = NetworkSpec::new(
        vec![6, 6, 1],
        vec![
            Layer::Conv2D { kernels: 2, kh: 3, kw: 3, padding: Padding::Valid },
            Layer::Activation(Activation::Sigmoid),
            Layer::AvgPool2,
            Layer::Flatten,
            Layer::Dense { n_in: 8, n_out: 5 },
            Layer::Activation(Activation::Sigmoid),
            Layer::Dense { n_in: 5, n_out: 4 },
            Layer::Softmax,
        ],
    )
    .unwrap();
    let weights = Weights::<f64>::init(&net, &mut rng);
    assert!(weights.param_count() <= 500);
    let x = Tensor::from_fn(vec![6, 6, 1], |_| rng.random::<f64>());
    let t = one_hot::<f64>(rng.random_range(0..4), 4);
    let (_, fwd) = forward(&net, &weights, &x).unwrap();
    let grads = backward(&net, &weights, &fwd, &t, LossKind::CrossEntropy).unwrap();

    let flat = |w: &Weights<f64>| -> Vec<f64> {
        w.layers
            .iter()
            .flatten()
            .flat_map(|lw| lw.w.data().iter().chain(lw.b.iter()).copied().collect::<Vec<_>>())
            .collect()
    };
    let set_flat = |w: &mut Weights<f64>, vals: &[f64]| {
        let mut it = vals.iter();
        for lw in w.layers.iter_mut().flatten() {
            for v in lw.w.data_mut() {
                *v = *it.next().unwrap();
            }
            for v in &mut lw.b {
                *v = *it.next().unwrap();
            }
        }
    };
    let base = flat(&weights);
    let gflat = flat(&grads);
    let h = 1e-6;
    let mut probe = weights.clone();
    for (idx, g) in gflat.iter().enumerate() {
        let mut plus = base.clone();
        plus[idx] += h;
        set_flat(&mut probe, &plus);
        let lp = loss_value(LossKind::CrossEntropy, &forward(&net, &probe, &x).unwrap().0, &t).unwrap();
        let mut minus = base.clone();
        minus[idx] -= h;
        set_flat(&mut probe, &minus);
        let lm = loss_value(LossKind::CrossEntropy, &forward(&net, &probe, &x).unwrap().0, &t).unwrap();
        let fd = (lp - lm) / (2.0 * h);
        let denom = g.abs().max(fd.abs()).max(1e-6);
        assert!((g - fd).abs() / denom < 1e-5, "gradient entry {idx}: {g} vs {fd}");
    }
    println!("PASS criterion 5: idempotence, interpolation identity, LS optimality, finite-difference gradients (<1e-5)");
}

#[test]
fn acceptance_06_trace_equals_cost_model() {
    let params = CostParams::default();
    let cache = DesignCache::new();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut checked = 0;
    for &width in params.moment_adders.keys() {
        // Conv configurations with this kernel width.
        for kh in [2usize, 3, 5] {
            for h in [width.max(kh), width + 4, 28] {
                if kh > h {
                    continue;
                }
                for degree in [Degree::Linear, Degree::Quadratic] {
                    let w = Tensor::from_fn(vec![kh, width, 1, 1], |_| rng.random::<f64>() - 0.5);
                    let spec = GroupSpec { degree, group_size: width, axis: GroupAxis::FilterRow };
                    let (coeffs, _) = project_layer(&w, spec, &cache).unwrap();
                    let ifmap = Tensor::from_fn(vec![h, h.max(width)], |_| rng.random::<f64>() - 0.5);
                    let (trace, _) = schedule_trace(&coeffs, &ifmap, None, &params).unwrap();
                    let model = conv_cost_proposed(h, h.max(width), kh, width, degree, &params).unwrap();
                    assert_eq!(trace.hw_total(), model, "conv {kh}x{width} on {h}");
                    checked += 1;
                }
            }
        }
        // Dense configurations, including the published 784/64-wide cases.
        for (n, m) in [(width * 4, 9), (784, 64), (64, 32)] {
            for degree in [Degree::Linear, Degree::Quadratic] {
                if n % width > 0 && n % width < degree.coeff_count() || width < degree.coeff_count() {
                    continue;
                }
                let w = Tensor::from_fn(vec![m, n], |_| rng.random::<f64>() - 0.5);
                let spec = GroupSpec { degree, group_size: width, axis: GroupAxis::ContiguousFlat };
                let (coeffs, _) = project_layer(&w, spec, &cache).unwrap();
                let x = Tensor::from_fn(vec![n], |_| rng.random::<f64>() - 0.5);
                let (trace, _) = schedule_trace(&coeffs, &x, None, &params).unwrap();
                let model = fc_cost_proposed(n, m, width, degree, &params).unwrap();
                assert_eq!(trace.hw_total(), model, "dense {n}x{m} nw {width}");
                checked += 1;
            }
        }
    }
    println!("PASS criterion 6: schedule trace equals the cost model on {checked} calibrated configurations (exact)");
}

#[test]
fn acceptance_07_mnist_fc_plain_reaches_94() {
    let run = fc_plain();
    let acc = run.metrics.final_accuracy().unwrap();
    assert!(acc >= 0.94, "plain FC accuracy {acc}");
    // Smoke property: accuracy climbs over the first epochs.
    assert!(run.metrics.epochs[4].test_accuracy > run.metrics.epochs[0].test_accuracy);
    println!("PASS criterion 7: MNIST FC without projection, {FC_EPOCHS} epochs -> {:.4} (>= 0.94)", acc);
}

#[test]
fn acceptance_08_projection_costs_under_one_point() {
    let plain = fc_plain().metrics.final_accuracy().unwrap();
    let projected = fc_projected().metrics.final_accuracy().unwrap();
    let gap = (plain - projected).abs();
    assert!(gap <= 0.010 + 1e-12, "gap {gap} between plain {plain} and projected {projected}");
    println!(
        "PASS criterion 8: linear Nw=8 training ({projected:.4}) within {:.2} points of plain ({plain:.4})",
        gap * 100.0
    );
}

#[test]
fn acceptance_09_mnist_cnn_projected_reaches_95() {
    let run = cnn_projected();
    let acc = run.metrics.final_accuracy().unwrap();
    assert!(acc >= 0.95, "projected CNN accuracy {acc}");
    println!("PASS criterion 9: MNIST CNN conv Nw=5 / fc Nw=6, {CNN_EPOCHS} epochs -> {acc:.4} (>= 0.95)");
}

#[test]
fn acceptance_10_posthoc_projection_collapses() {
    let (_, test_set) = mnist();

    // CNN: project the projection-free model with the case-1 scheme.
    let donor = cnn_plain();
    let preset = presets::find("mnist_cnn_case1").unwrap();
    let net = preset.network();
    let scheme = preset.scheme(&net).unwrap();
    let store = post_hoc_project(&net, &donor.weights, &scheme).unwrap();
    let cnn_before = evaluate(&net, ModelParams::Raw(&donor.weights), test_set).unwrap();
    let cnn_after = evaluate(&net, ModelParams::Coeffs(&store), test_set).unwrap();
    assert!(cnn_after <= 0.60, "CNN post-hoc accuracy {cnn_after}");

    // FC: Nw=3 linear everywhere on the plain FC model. Dividing the whole
    // weight matrix into flat uniform groups (the cross-neuron axis) is what
    // reproduces the published collapse; groups then mix weights of different
    // output neurons. The per-neuron axis the reuse schedule uses degrades
    // far less, so both numbers are reported.
    let donor = fc_plain();
    let net = presets::find("mnist_fc_case0").unwrap().network();
    let make_scheme = |axis: GroupAxis| {
        let mut scheme = GroupScheme::none(&net);
        for (index, _) in net.trainable_labels() {
            scheme.per_layer[index] = Some(GroupSpec {
                degree: Degree::Linear,
                group_size: 3,
                axis,
            });
        }
        scheme
    };
    let fc_before = evaluate(&net, ModelParams::Raw(&donor.weights), test_set).unwrap();
    let store = post_hoc_project(&net, &donor.weights, &make_scheme(GroupAxis::CrossNeuron)).unwrap();
    let fc_after = evaluate(&net, ModelParams::Coeffs(&store), test_set).unwrap();
    let per_neuron = post_hoc_project(&net, &donor.weights, &make_scheme(GroupAxis::ContiguousFlat)).unwrap();
    let fc_per_neuron = evaluate(&net, ModelParams::Coeffs(&per_neuron), test_set).unwrap();
    assert!(fc_after <= 0.45, "FC post-hoc accuracy {fc_after}");

    println!(
        "PASS criterion 10: post-hoc collapse CNN {cnn_before:.4} -> {cnn_after:.4} (<= 0.60), \
         FC {fc_before:.4} -> {fc_after:.4} (<= 0.45, flat whole-matrix groups; \
         per-neuron groups give {fc_per_neuron:.4})"
    );
}

/// Extended CIFAR-10 run (hours). Needs cifar-10-batches-bin under the data
/// root; run with `cargo test -p polyreuse-cli --test acceptance -- --ignored`.
#[test]
#[ignore = "multi-hour extended criterion"]
fn acceptance_11_cifar_extended() {
    let dir = data_root().join("cifar-10-batches-bin");
    let train_paths: Vec<PathBuf> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    let train_set = load_cifar10::<f64>(&train_paths)
        .unwrap_or_else(|e| panic!("criterion 11 needs CIFAR-10 under {}: {e}", dir.display()))
        .to_grayscale();
    let test_set = load_cifar10::<f64>(&[dir.join("test_batch.bin")]).unwrap().to_grayscale();

    let preset = presets::find("cifar_nw8").unwrap();
    let net = preset.network();
    let scheme = preset.scheme(&net).unwrap();
    let run = train(&net, &scheme, &train_set, &test_set, &preset.train).unwrap();
    let acc = run.metrics.final_accuracy().unwrap();
    assert!(acc >= 0.70, "CIFAR projected accuracy {acc}");

    let plain = train(&net, &GroupScheme::none(&net), &train_set, &test_set, &preset.train).unwrap();
    let store = post_hoc_project(&net, &plain.weights, &scheme).unwrap();
    let posthoc = evaluate(&net, ModelParams::Coeffs(&store), &test_set).unwrap();
    assert!(posthoc <= 0.25, "CIFAR post-hoc accuracy {posthoc}");
    println!("PASS criterion 11: CIFAR Nw=(5,8) -> {acc:.4} (>= 0.70); post-hoc {posthoc:.4} (<= 0.25)");
}
